use crate::numerics::Tensor;

/// Gradients with a global L1 norm below this are treated as zero.
pub const NORM_GUARD: f64 = 1e-12;

/// Mutable state of one perturbation being optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationState {
    pub delta: Tensor,
    /// Kept in `f64` so normalizing a tiny gradient never underflows.
    pub momentum: Tensor<f64>,
    pub iteration: usize,
    pub beta_logits: Vec<f64>,
}

impl PerturbationState {
    pub fn new(shape: &[usize], n_models: usize) -> Self {
        Self {
            delta: Tensor::zeros(shape),
            momentum: Tensor::zeros(shape),
            iteration: 0,
            beta_logits: vec![0.0; n_models],
        }
    }
}

/// `m ← μ·m + g/‖g‖₁`, with the normalized term zeroed when `‖g‖₁` is below
/// [`NORM_GUARD`].
pub fn momentum_update(state: &mut PerturbationState, gradient: &Tensor, mu: f64) {
    let norm = gradient.l1_norm();
    let inv = if norm < NORM_GUARD { 0.0 } else { 1.0 / norm };
    for (m, &g) in state.momentum.data_mut().iter_mut().zip(gradient.data()) {
        *m = mu * *m + g as f64 * inv;
    }
}

pub fn sign(v: f64) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `δ ← clamp(δ + α·sign(m), −ε, ε)`; advances the iteration counter.
pub fn perturbation_step(state: &mut PerturbationState, alpha: f64, epsilon: f64) {
    let (a, e) = (alpha as f32, epsilon as f32);
    for (d, &m) in state.delta.data_mut().iter_mut().zip(state.momentum.data()) {
        *d = (*d + a * sign(m)).clamp(-e, e);
    }
    state.iteration += 1;
}

/// `clip(x + δ, 0, 1)`, nudged by one ulp where rounding of the sum would
/// otherwise move a pixel by more than `ε`.
pub fn apply_perturbation(x: &Tensor, delta: &Tensor, epsilon: f64) -> Tensor {
    let e = epsilon as f32 as f64;
    x.zip_map(delta, |xv, dv| {
        let mut a = (xv + dv).clamp(0.0, 1.0);
        while a as f64 - xv as f64 > e {
            a = a.next_down();
        }
        while (xv as f64) - (a as f64) > e {
            a = a.next_up();
        }
        a
    })
    .expect("perturbation shape matches input")
}

/// `1 − cos` between the sign maps of two momentum tensors; `0` when both
/// are zero and `1` when only one is.
pub fn direction_change(prev: &Tensor<f64>, next: &Tensor<f64>) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&a, &b) in prev.data().iter().zip(next.data()) {
        let (sa, sb) = (sign(a) as f64, sign(b) as f64);
        dot += sa * sb;
        na += sa * sa;
        nb += sb * sb;
    }
    match (na > 0.0, nb > 0.0) {
        (false, false) => 0.0,
        (true, true) => 1.0 - dot / (na.sqrt() * nb.sqrt()),
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal() as f32).collect()).unwrap()
    }

    #[test]
    fn zero_mu_gives_normalized_gradient() {
        let mut rng = Rng::new(1);
        let mut s = PerturbationState::new(&[1, 2, 3, 3], 1);
        s.momentum = Tensor::full(&[1, 2, 3, 3], 5.0);
        let g = random(&[1, 2, 3, 3], &mut rng);
        momentum_update(&mut s, &g, 0.0);
        let n = g.l1_norm();
        for (m, gv) in s.momentum.data().iter().zip(g.data()) {
            assert!((m - *gv as f64 / n).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut s = PerturbationState::new(&[4], 1);
        s.momentum = Tensor::from_f64s(&[4], &[1.0, -2.0, 0.5, 0.0]).unwrap();
        momentum_update(&mut s, &Tensor::zeros(&[4]), 0.9);
        assert_eq!(s.momentum.data(), &[0.9, -1.8, 0.45, 0.0]);
    }

    #[test]
    fn two_step_recurrence_unrolled() {
        let mut rng = Rng::new(2);
        let g1 = random(&[1, 3, 4, 4], &mut rng);
        let g2 = random(&[1, 3, 4, 4], &mut rng);
        let mut s = PerturbationState::new(&[1, 3, 4, 4], 1);
        momentum_update(&mut s, &g1, 0.9);
        momentum_update(&mut s, &g2, 0.9);
        let (n1, n2) = (g1.l1_norm(), g2.l1_norm());
        for i in 0..g1.len() {
            let want = 0.9 * g1.data()[i] as f64 / n1 + g2.data()[i] as f64 / n2;
            assert!((s.momentum.data()[i] - want).abs() < 1e-7);
        }
    }

    #[test]
    fn saturated_elements_stay_at_budget() {
        let mut s = PerturbationState::new(&[3], 1);
        s.delta = Tensor::new(vec![3], vec![0.03, -0.03, 0.0]).unwrap();
        s.momentum = Tensor::from_f64s(&[3], &[1.0, 1.0, 0.0]).unwrap();
        perturbation_step(&mut s, 0.01, 0.03);
        assert_eq!(s.delta.data(), &[0.03, -0.02, 0.0]);
        assert_eq!(s.iteration, 1);
    }

    #[test]
    fn direction_change_extremes() {
        let a = Tensor::<f64>::from_f64s(&[3], &[1.0, -2.0, 3.0]).unwrap();
        let b = a.map(|v| -v);
        assert!(direction_change(&a, &a).abs() < 1e-15);
        assert!((direction_change(&a, &b) - 2.0).abs() < 1e-15);
        assert_eq!(direction_change(&Tensor::zeros(&[3]), &a), 1.0);
    }

    proptest! {
        #[test]
        fn step_moves_by_sign_times_alpha(seed in any::<u64>(), alpha in 1e-4f64..0.05, eps in 0.0f64..0.1) {
            let mut rng = Rng::new(seed);
            let mut s = PerturbationState::new(&[1, 1, 4, 4], 1);
            s.delta = random(&[1, 1, 4, 4], &mut rng).clamp_abs(eps as f32);
            let mut g = random(&[1, 1, 4, 4], &mut rng);
            g.data_mut()[3] = 0.0;
            momentum_update(&mut s, &g, 0.0);
            let before = s.delta.clone();
            let a = alpha as f32;
            perturbation_step(&mut s, alpha, eps);
            for i in 0..16 {
                let m = s.momentum.data()[i];
                let raw = before.data()[i] + a * sign(m);
                let step = raw - before.data()[i];
                // exact up to the rounding of the f32 sum
                prop_assert!((step - a * sign(m)).abs() <= f32::EPSILON * before.data()[i].abs().max(a));
                prop_assert_eq!(s.delta.data()[i], raw.clamp(-(eps as f32), eps as f32));
                prop_assert!(s.delta.data()[i].abs() <= eps as f32);
            }
            prop_assert_eq!(s.delta.data()[3], before.data()[3]);
        }

        #[test]
        fn applied_perturbation_respects_box_and_budget(seed in any::<u64>(), eps in 0.0f64..0.2) {
            let mut rng = Rng::new(seed);
            let x = Tensor::new(vec![64], (0..64).map(|_| rng.uniform() as f32).collect()).unwrap();
            let d = random(&[64], &mut rng).clamp_abs(eps as f32);
            let out = apply_perturbation(&x, &d, eps);
            for (o, xv) in out.data().iter().zip(x.data()) {
                prop_assert!((0.0..=1.0).contains(o));
                prop_assert!((*o as f64 - *xv as f64).abs() <= eps as f32 as f64);
            }
        }
    }
}
