//! Attack-engine properties that need a trained zoo or many seeded runs.

mod common;

use amga::engine::{
    baseline_attack, build_gaussian_kernel, compose_adversarial, meta_train, run_amga, smooth_perturbation, AlphaSchedule,
    AttackConfig, BaselineKind, SmoothingMode,
};
use amga::numerics::{Rng, Tensor};
use amga::quality::psnr;
use amga::zoo::{default_architectures, ModelRecord, Split};

fn random_tensor(shape: &[usize], rng: &mut Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(lo, hi) as f32).collect()).unwrap()
}

fn validation(n: usize) -> Split {
    common::default_zoo().0.validation_interleaved().head(n)
}

fn one(images: &Split, i: usize) -> (Tensor, Vec<usize>) {
    (images.images.slice_batch(i, i + 1).unwrap(), vec![images.labels[i]])
}

#[test]
fn single_step_amga_is_the_fgsm_baseline_bit_for_bit() {
    let mut rng = Rng::new(3);
    let repo: Vec<ModelRecord> = default_architectures(16, 5)
        .iter()
        .map(|a| ModelRecord::initialize(a, &mut rng).unwrap())
        .collect();
    let x = random_tensor(&[4, 3, 16, 16], &mut rng, 0.0, 1.0);
    let y = [4, 0, 2, 1];
    for seed in 0..5 {
        let cfg = AttackConfig {
            n: 1,
            iterations: 1,
            mu: 0.0,
            diversity_prob: 0.0,
            smoothing_mode: SmoothingMode::Disabled,
            meta_test: false,
            alpha: 8.0 / 255.0,
            alpha_schedule: AlphaSchedule::Constant,
            seed,
            ..AttackConfig::default()
        };
        let r = run_amga(&x, &y, &repo, &cfg).unwrap();
        let fgsm = baseline_attack(BaselineKind::Fgsm, &x, &y, &repo[r.split.train[0]], &cfg).unwrap();
        assert_eq!(r.adversarial_example, fgsm, "seed {seed}");
    }
}

#[test]
fn smoothing_reduces_high_frequency_energy() {
    let laplacian = |t: &Tensor| -> f64 {
        let s = t.shape();
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let d = t.data();
        let mut acc = 0.0;
        for p in 0..planes {
            let at = |y: usize, x: usize| d[p * h * w + y * w + x] as f64;
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    acc += (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x)).abs();
                }
            }
        }
        acc / (planes * (h - 2) * (w - 2)) as f64
    };
    let mut rng = Rng::new(17);
    for i in 0..100 {
        let sigma = [0.5, 1.0, 2.0][i % 3];
        let d = random_tensor(&[1, 3, 4 + rng.below(13), 4 + rng.below(13)], &mut rng, -0.03, 0.03);
        let s = smooth_perturbation(&d, &build_gaussian_kernel(sigma).unwrap()).unwrap();
        assert!(laplacian(&s) <= laplacian(&d), "case {i}, σ={sigma}");
    }
}

#[test]
fn wider_smoothing_gives_higher_psnr_on_the_same_perturbation() {
    let images = validation(10);
    let mut rng = Rng::new(5);
    let e = 8.0 / 255.0;
    // a sign pattern at full budget, as the sign steps produce
    let delta = Tensor::new(
        images.images.shape().to_vec(),
        (0..images.images.len()).map(|_| if rng.bernoulli(0.5) { e as f32 } else { -e as f32 }).collect(),
    )
    .unwrap();
    let at = |sigma: f64| {
        let cfg = AttackConfig {
            sigma,
            ..AttackConfig::default()
        };
        psnr(&images.images, &compose_adversarial(&images.images, &delta, &cfg).unwrap().adversarial_example).unwrap()
    };
    let (p05, p1) = (at(0.5), at(1.0));
    assert!(p1 > p05, "σ=1 {p1} dB vs σ=0.5 {p05} dB");
}

#[test]
fn ensemble_weights_stay_on_the_simplex() {
    let zoo = &common::default_zoo().1;
    let images = validation(5);
    let models: Vec<&ModelRecord> = zoo.iter().take(3).collect();
    for i in 0..images.len() {
        let (x, y) = one(&images, i);
        let cfg = AttackConfig {
            beta_rate: 5.0,
            ..AttackConfig::default()
        };
        let out = meta_train(&x, &y, &models, &cfg, &mut Rng::new(i as u64)).unwrap();
        assert_eq!(out.beta_trace.len(), cfg.iterations);
        for w in &out.beta_trace {
            assert!(w.iter().all(|&v| v > 0.0), "{w:?}");
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

/// Share of adjacent loss-trace pairs that do not decrease, over 20 seeded
/// single-image runs.
fn rising_share(base: &AttackConfig) -> (usize, usize) {
    let zoo = &common::default_zoo().1;
    let images = validation(20);
    let (mut rising, mut pairs) = (0, 0);
    for seed in 0..20u64 {
        let (x, y) = one(&images, seed as usize);
        let cfg = AttackConfig { seed, ..base.clone() };
        let r = run_amga(&x, &y, zoo, &cfg).unwrap();
        for p in r.loss_trace[..cfg.iterations].windows(2) {
            pairs += 1;
            rising += usize::from(p[1] >= p[0]);
        }
    }
    (rising, pairs)
}

#[test]
fn loss_mostly_rises_across_iterations() {
    let (rising, pairs) = rising_share(&AttackConfig::default());
    assert!(rising as f64 >= 0.8 * pairs as f64, "{rising}/{pairs} adjacent pairs non-decreasing");
}

#[test]
fn loss_rises_monotonically_without_input_diversity() {
    let cfg = AttackConfig {
        diversity_prob: 0.0,
        ..AttackConfig::default()
    };
    let (rising, pairs) = rising_share(&cfg);
    assert_eq!(rising, pairs);
}

#[test]
fn momentum_steadies_the_update_direction() {
    let zoo = &common::default_zoo().1;
    let images = validation(20);
    let mean_change = |mu: f64| -> f64 {
        let mut total = 0.0;
        for seed in 0..20u64 {
            let (x, y) = one(&images, seed as usize);
            let cfg = AttackConfig {
                mu,
                seed,
                ..AttackConfig::default()
            };
            let r = run_amga(&x, &y, zoo, &cfg).unwrap();
            total += r.direction_changes.iter().sum::<f64>() / r.direction_changes.len() as f64;
        }
        total / 20.0
    };
    let (with, without) = (mean_change(0.9), mean_change(0.0));
    assert!(with <= without, "μ=0.9 {with} vs μ=0 {without}");
}
