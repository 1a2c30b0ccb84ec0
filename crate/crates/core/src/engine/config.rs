use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    /// Smooth only the composed perturbation.
    FinalOnly,
    /// Also smooth after every meta-training step.
    EveryIteration,
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSchedule {
    /// Cosine decay from `alpha` to `alpha / 4` across the K iterations.
    Cosine,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Every image gets its own perturbation and ensemble weights.
    PerExample,
    /// One perturbation shared by the batch, loss averaged over it.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub alpha: f64,
    pub mu: f64,
    /// Gaussian standard deviation in pixels.
    pub sigma: f64,
    /// L∞ budget in unit pixel range.
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub iterations: usize,
    /// Meta-train ensemble size.
    pub n: usize,
    pub diversity_prob: f64,
    pub diversity_scale_min: f64,
    pub smoothing_mode: SmoothingMode,
    pub meta_test: bool,
    pub alpha_schedule: AlphaSchedule,
    pub beta_rate: f64,
    pub batch_mode: BatchMode,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            mu: 0.9,
            sigma: 1.0,
            epsilon: 8.0 / 255.0,
            iterations: 10,
            n: 3,
            diversity_prob: 0.5,
            diversity_scale_min: 0.875,
            smoothing_mode: SmoothingMode::FinalOnly,
            meta_test: true,
            alpha_schedule: AlphaSchedule::Cosine,
            beta_rate: 0.1,
            batch_mode: BatchMode::PerExample,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_owned()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.mu) {
            return fail("mu must lie in [0, 1)");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail("sigma must be positive");
        }
        // a zero budget is allowed: it must reproduce the clean input
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return fail("epsilon must be non-negative");
        }
        if self.iterations == 0 {
            return fail("K must be at least 1");
        }
        if self.n == 0 {
            return fail("n must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.diversity_prob) {
            return fail("diversity_prob must lie in [0, 1]");
        }
        if !(self.diversity_scale_min > 0.0 && self.diversity_scale_min <= 1.0) {
            return fail("diversity_scale_min must lie in (0, 1]");
        }
        if !(self.beta_rate >= 0.0 && self.beta_rate.is_finite()) {
            return fail("beta_rate must be non-negative");
        }
        Ok(())
    }

    /// Step size used at meta-training iteration `k` (0-based).
    pub fn alpha_at(&self, k: usize) -> f64 {
        match self.alpha_schedule {
            AlphaSchedule::Constant => self.alpha,
            AlphaSchedule::Cosine if self.iterations == 1 => self.alpha,
            AlphaSchedule::Cosine => {
                let t = k as f64 / (self.iterations - 1) as f64;
                let floor = self.alpha / 4.0;
                floor + (self.alpha - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AttackConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_fields_rejected() {
        let bad = [
            AttackConfig { alpha: 0.0, ..Default::default() },
            AttackConfig { mu: 1.0, ..Default::default() },
            AttackConfig { sigma: -1.0, ..Default::default() },
            AttackConfig { epsilon: -0.1, ..Default::default() },
            AttackConfig { iterations: 0, ..Default::default() },
            AttackConfig { diversity_prob: 1.5, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = AttackConfig::default();
        assert!((c.alpha_at(0) - 0.01).abs() < 1e-15);
        assert!((c.alpha_at(9) - 0.0025).abs() < 1e-15);
        assert!(c.alpha_at(4) < c.alpha_at(3));
        let one = AttackConfig { iterations: 1, ..Default::default() };
        assert_eq!(one.alpha_at(0), 0.01);
    }

    #[test]
    fn unknown_key_named_in_error() {
        let e = serde_json::from_str::<AttackConfig>(r#"{"alpah": 0.1}"#).unwrap_err();
        assert!(e.to_string().contains("alpah"));
    }

    #[test]
    fn json_uses_capital_k() {
        let s = serde_json::to_string(&AttackConfig::default()).unwrap();
        assert!(s.contains("\"K\":10"));
        assert!(s.contains("\"smoothing_mode\":\"final_only\""));
    }
}
