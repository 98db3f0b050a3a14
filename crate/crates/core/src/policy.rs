//! Per-agent sampling rules: cooperative UCB, the instantaneous-best test
//! behind the ComEx gate, and a Gaussian Thompson sampler.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::argmax_lowest;

/// Observation statistics of one arm as seen by one agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ArmStats {
    /// Own pulls plus incorporated foreign observations.
    pub obs_count: u64,
    /// Own pulls only.
    pub pull_count: u64,
    pub reward_sum: f64,
}

impl ArmStats {
    pub fn mean_hat(&self) -> f64 {
        if self.obs_count == 0 {
            0.0
        } else {
            self.reward_sum / self.obs_count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentEstimates {
    arms: Vec<ArmStats>,
}

impl AgentEstimates {
    pub fn new(num_arms: usize) -> Self {
        Self {
            arms: vec![ArmStats::default(); num_arms],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, k: usize) -> &ArmStats {
        &self.arms[k]
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn mean_hat(&self, k: usize) -> f64 {
        self.arms[k].mean_hat()
    }

    pub fn obs_count(&self, k: usize) -> u64 {
        self.arms[k].obs_count
    }

    pub fn pull_count(&self, k: usize) -> u64 {
        self.arms[k].pull_count
    }

    /// Incorporates one observation. Callers guarantee each foreign message
    /// is passed here at most once.
    pub fn update(&mut self, arm: usize, reward: f64, own_pull: bool) {
        let s = &mut self.arms[arm];
        s.obs_count += 1;
        s.reward_sum += reward;
        if own_pull {
            s.pull_count += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbParams {
    pub xi: f64,
    pub sigma: f64,
}

/// `sigma * sqrt(2 (xi + 1) ln t / count)`, or `+inf` for an unobserved arm.
pub fn confidence_width(count: f64, t: f64, p: &UcbParams) -> f64 {
    if count <= 0.0 {
        return f64::INFINITY;
    }
    p.sigma * (2.0 * (p.xi + 1.0) * t.ln() / count).sqrt()
}

/// Upper confidence bound of `arm` at time `t >= 1`.
pub fn ucb_index(est: &AgentEstimates, arm: usize, t: f64, p: &UcbParams) -> f64 {
    let s = est.arm(arm);
    if s.obs_count == 0 {
        return f64::INFINITY;
    }
    s.mean_hat() + confidence_width(s.obs_count as f64, t, p)
}

pub fn select_arm_ucb(est: &AgentEstimates, t: f64, p: &UcbParams) -> usize {
    argmax_lowest((0..est.num_arms()).map(|k| ucb_index(est, k, t, p)))
}

/// Argmax of the empirical means (unobserved arms count as 0).
pub fn instantaneously_best(est: &AgentEstimates) -> usize {
    argmax_lowest(est.arms.iter().map(ArmStats::mean_hat))
}

/// UCB index with the complete-graph uncertainty term
/// `sigma * sqrt(2 ln(t^(xi_bar + 1) N) / count)`.
pub fn modified_ucb_index_complete(
    est: &AgentEstimates,
    arm: usize,
    t: f64,
    xi_bar: f64,
    sigma: f64,
    n_agents: usize,
) -> f64 {
    let s = est.arm(arm);
    if s.obs_count == 0 {
        return f64::INFINITY;
    }
    let log_term = (xi_bar + 1.0) * t.ln() + (n_agents as f64).ln();
    s.mean_hat() + sigma * (2.0 * log_term / s.obs_count as f64).sqrt()
}

/// Like [`modified_ucb_index_complete`] but with a real-valued agent count,
/// which lets the `N = e` style identities be checked directly.
pub fn modified_width(count: f64, t: f64, xi_bar: f64, sigma: f64, n_agents: f64) -> f64 {
    if count <= 0.0 {
        return f64::INFINITY;
    }
    sigma * (2.0 * ((xi_bar + 1.0) * t.ln() + n_agents.ln()) / count).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThompsonPrior {
    pub mean: f64,
    pub variance: f64,
}

impl Default for ThompsonPrior {
    fn default() -> Self {
        Self {
            mean: 0.0,
            variance: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub variance: f64,
}

/// Per-arm conjugate Gaussian posteriors with known likelihood variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThompsonState {
    prior: ThompsonPrior,
    likelihood_variance: f64,
    posteriors: Vec<GaussianPosterior>,
}

impl ThompsonState {
    pub fn new(num_arms: usize, prior: ThompsonPrior, likelihood_variance: f64) -> Self {
        assert!(prior.variance > 0.0 && likelihood_variance > 0.0);
        Self {
            prior,
            likelihood_variance,
            posteriors: vec![
                GaussianPosterior {
                    mean: prior.mean,
                    variance: prior.variance,
                };
                num_arms
            ],
        }
    }

    pub fn from_posteriors(posteriors: Vec<GaussianPosterior>, likelihood_variance: f64) -> Self {
        Self {
            prior: ThompsonPrior::default(),
            likelihood_variance,
            posteriors,
        }
    }

    pub fn prior(&self) -> ThompsonPrior {
        self.prior
    }

    pub fn posterior(&self, k: usize) -> GaussianPosterior {
        self.posteriors[k]
    }

    /// Draws one sample per arm and returns the argmax.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        argmax_lowest(self.posteriors.iter().map(|p| {
            Normal::new(p.mean, p.variance.sqrt())
                .expect("positive posterior variance")
                .sample(rng)
        }))
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        let p = &mut self.posteriors[arm];
        let variance = 1.0 / (1.0 / p.variance + 1.0 / self.likelihood_variance);
        p.mean = variance * (p.mean / p.variance + reward / self.likelihood_variance);
        p.variance = variance;
    }
}
