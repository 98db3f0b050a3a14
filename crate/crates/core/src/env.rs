//! Arm reward distributions and the gap structure derived from their means.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_distr::{Normal, Triangular};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sub-Gaussian proxy used for any distribution supported on `[0, 1]`
/// (Hoeffding's lemma).
pub const BOUNDED_PROXY: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("an environment needs at least one arm")]
    NoArms,
    #[error("arm {arm}: {reason}")]
    BadArm { arm: usize, reason: String },
    #[error("sigma override {given} is below the proxy {required} of arm {arm}")]
    SigmaTooSmall { given: f64, required: f64, arm: usize },
    #[error("sigma must be positive (all arms are deterministic; supply an override)")]
    ZeroSigma,
    #[error("arm index {arm} out of range for {k} arms")]
    InvalidArm { arm: usize, k: usize },
}

/// Reward distribution of a single arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArmSpec {
    Gaussian { mean: f64, variance: f64 },
    /// Triangular distribution on `[0, 1]` with the given mode.
    Triangular01 { mode: f64 },
    Bernoulli { p: f64 },
}

impl ArmSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            ArmSpec::Gaussian { mean, .. } => mean,
            ArmSpec::Triangular01 { mode } => (0.0 + 1.0 + mode) / 3.0,
            ArmSpec::Bernoulli { p } => p,
        }
    }

    /// Default sub-Gaussian variance proxy (as a standard deviation).
    pub fn default_proxy(&self) -> f64 {
        match *self {
            ArmSpec::Gaussian { variance, .. } => variance.sqrt(),
            ArmSpec::Triangular01 { .. } | ArmSpec::Bernoulli { .. } => BOUNDED_PROXY,
        }
    }

    pub fn is_bounded01(&self) -> bool {
        !matches!(self, ArmSpec::Gaussian { .. })
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            ArmSpec::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    return Err(format!("gaussian mean {mean} is not finite"));
                }
                if !(variance >= 0.0 && variance.is_finite()) {
                    return Err(format!("gaussian variance {variance} must be finite and >= 0"));
                }
            }
            ArmSpec::Triangular01 { mode } => {
                if !(0.0..=1.0).contains(&mode) {
                    return Err(format!("triangular mode {mode} outside [0, 1]"));
                }
            }
            ArmSpec::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("bernoulli p {p} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArmSpec::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    return mean;
                }
                Normal::new(mean, variance.sqrt())
                    .expect("validated gaussian")
                    .sample(rng)
            }
            ArmSpec::Triangular01 { mode } => Triangular::new(0.0, 1.0, mode)
                .expect("validated triangular")
                .sample(rng),
            ArmSpec::Bernoulli { p } => {
                let hit = Bernoulli::new(p).expect("validated bernoulli").sample(rng);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Gap structure of a set of arm means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    pub gaps: Vec<f64>,
    /// Smallest gap over suboptimal arms; `None` when every mean is equal.
    pub min_gap: Option<f64>,
    pub optimal_index: usize,
}

/// Computes gaps against the best mean. Ties for the optimum go to the
/// lowest index.
pub fn gap_profile_from_means(means: &[f64]) -> GapProfile {
    let optimal_index = crate::argmax_lowest(means.iter().copied());
    let best = means.get(optimal_index).copied().unwrap_or(0.0);
    let gaps: Vec<f64> = means.iter().map(|m| best - m).collect();
    let min_gap = gaps
        .iter()
        .copied()
        .filter(|&g| g > 0.0)
        .min_by(|a, b| a.total_cmp(b));
    GapProfile {
        gaps,
        min_gap,
        optimal_index,
    }
}

/// The K-armed stochastic environment shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditEnv {
    arms: Vec<ArmSpec>,
    sigma: f64,
    means: Vec<f64>,
    profile: GapProfile,
}

impl BanditEnv {
    /// Builds an environment. `sigma` defaults to the largest per-arm proxy.
    pub fn new(specs: &[ArmSpec], sigma_override: Option<f64>) -> Result<Self, EnvError> {
        if specs.is_empty() {
            return Err(EnvError::NoArms);
        }
        for (arm, spec) in specs.iter().enumerate() {
            spec.validate()
                .map_err(|reason| EnvError::BadArm { arm, reason })?;
        }
        let (proxy_arm, max_proxy) = specs
            .iter()
            .map(ArmSpec::default_proxy)
            .enumerate()
            .fold((0, 0.0_f64), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
        let sigma = match sigma_override {
            Some(given) if given < max_proxy || !given.is_finite() => {
                return Err(EnvError::SigmaTooSmall {
                    given,
                    required: max_proxy,
                    arm: proxy_arm,
                })
            }
            Some(given) => given,
            None => max_proxy,
        };
        if sigma <= 0.0 {
            return Err(EnvError::ZeroSigma);
        }
        let means: Vec<f64> = specs.iter().map(ArmSpec::mean).collect();
        let profile = gap_profile_from_means(&means);
        Ok(Self {
            arms: specs.to_vec(),
            sigma,
            means,
            profile,
        })
    }

    pub fn arms(&self) -> &[ArmSpec] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn gaps(&self) -> &[f64] {
        &self.profile.gaps
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.profile.min_gap
    }

    pub fn optimal_index(&self) -> usize {
        self.profile.optimal_index
    }

    pub fn gap_profile(&self) -> &GapProfile {
        &self.profile
    }

    pub fn max_gap(&self) -> f64 {
        self.profile.gaps.iter().copied().fold(0.0, f64::max)
    }

    /// Draws one reward from `arm`. Every call is an independent draw, so two
    /// agents pulling the same arm in the same step see independent rewards.
    pub fn sample_reward<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<f64, EnvError> {
        let spec = self.arms.get(arm).ok_or(EnvError::InvalidArm {
            arm,
            k: self.arms.len(),
        })?;
        Ok(spec.sample(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_gaussian() -> Vec<ArmSpec> {
        vec![
            ArmSpec::Gaussian { mean: 11.0, variance: 1.0 },
            ArmSpec::Gaussian { mean: 10.0, variance: 1.0 },
        ]
    }

    #[test]
    fn gaussian_pair() {
        let env = BanditEnv::new(&paper_gaussian(), None).unwrap();
        assert_eq!(env.means(), &[11.0, 10.0]);
        assert_eq!(env.gaps(), &[0.0, 1.0]);
        assert_eq!(env.min_gap(), Some(1.0));
        assert_eq!(env.sigma(), 1.0);
    }

    #[test]
    fn triangular_pair() {
        let specs = [ArmSpec::Triangular01 { mode: 1.0 }, ArmSpec::Triangular01 { mode: 0.0 }];
        let env = BanditEnv::new(&specs, None).unwrap();
        // (a + b + c) / 3 with a = 0, b = 1
        assert!((env.means()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((env.means()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((env.gaps()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(env.sigma(), 0.5);
    }

    #[test]
    fn single_arm_has_no_min_gap() {
        let env = BanditEnv::new(&[ArmSpec::Bernoulli { p: 0.5 }], None).unwrap();
        assert_eq!(env.gaps(), &[0.0]);
        assert_eq!(env.min_gap(), None);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(BanditEnv::new(&[], None), Err(EnvError::NoArms));
        assert!(matches!(
            BanditEnv::new(&[ArmSpec::Bernoulli { p: 1.5 }], None),
            Err(EnvError::BadArm { arm: 0, .. })
        ));
        assert!(matches!(
            BanditEnv::new(&[ArmSpec::Triangular01 { mode: -0.1 }], None),
            Err(EnvError::BadArm { .. })
        ));
        assert!(matches!(
            BanditEnv::new(&[ArmSpec::Gaussian { mean: 0.0, variance: -1.0 }], None),
            Err(EnvError::BadArm { .. })
        ));
        assert!(matches!(
            BanditEnv::new(&paper_gaussian(), Some(0.5)),
            Err(EnvError::SigmaTooSmall { .. })
        ));
        assert_eq!(
            BanditEnv::new(&[ArmSpec::Gaussian { mean: 1.0, variance: 0.0 }], None),
            Err(EnvError::ZeroSigma)
        );
        let env = BanditEnv::new(&paper_gaussian(), Some(2.0)).unwrap();
        assert_eq!(env.sigma(), 2.0);
    }

    #[test]
    fn gap_profiles() {
        let p = gap_profile_from_means(&[11.0, 10.0, 10.0]);
        assert_eq!(p.gaps, vec![0.0, 1.0, 1.0]);
        assert_eq!(p.min_gap, Some(1.0));
        assert_eq!(p.optimal_index, 0);

        let p = gap_profile_from_means(&[5.0, 5.0]);
        assert_eq!(p.gaps, vec![0.0, 0.0]);
        assert_eq!(p.min_gap, None);
        assert_eq!(p.optimal_index, 0);

        let p = gap_profile_from_means(&[1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(p.optimal_index, 1);
        assert!((p.gaps[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.gaps[1], 0.0);
    }

    #[test]
    fn degenerate_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = BanditEnv::new(
            &[ArmSpec::Bernoulli { p: 1.0 }, ArmSpec::Gaussian { mean: 11.0, variance: 0.0 }],
            None,
        )
        .unwrap();
        for _ in 0..1000 {
            assert_eq!(env.sample_reward(0, &mut rng).unwrap(), 1.0);
            assert_eq!(env.sample_reward(1, &mut rng).unwrap(), 11.0);
        }
        assert_eq!(
            env.sample_reward(2, &mut rng),
            Err(EnvError::InvalidArm { arm: 2, k: 2 })
        );
    }

    #[test]
    fn triangular_monte_carlo_mean() {
        let env = BanditEnv::new(&[ArmSpec::Triangular01 { mode: 1.0 }], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = env.sample_reward(0, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&x));
            sum += x;
        }
        assert!((sum / n as f64 - 2.0 / 3.0).abs() < 3e-3);
    }

    #[test]
    fn sample_means_concentrate() {
        let specs = [
            ArmSpec::Gaussian { mean: 11.0, variance: 1.0 },
            ArmSpec::Triangular01 { mode: 0.25 },
            ArmSpec::Bernoulli { p: 0.3 },
        ];
        let env = BanditEnv::new(&specs, Some(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 1_000_000;
        for arm in 0..specs.len() {
            let mut sum = 0.0;
            for _ in 0..n {
                let x = env.sample_reward(arm, &mut rng).unwrap();
                if specs[arm].is_bounded01() {
                    assert!((0.0..=1.0).contains(&x));
                }
                sum += x;
            }
            let tol = 5.0 * env.sigma() / (n as f64).sqrt();
            assert!((sum / n as f64 - env.means()[arm]).abs() <= tol, "arm {arm}");
        }
    }
}
