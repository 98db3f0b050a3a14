//! Closed-form regret and communication-cost upper bounds.
//!
//! Clique-cover and domination numbers enter through the greedy surrogates
//! of [`crate::graph::GraphAnalysis`], which can only overestimate them, so
//! every value here stays a valid (possibly looser) upper bound.

use serde::Serialize;
use thiserror::Error;

use crate::env::BanditEnv;
use crate::graph::{analyze, GraphError, Topology};

pub const DEFAULT_ZETA: f64 = 1.3;
/// Smallest exploration parameter for which the bounds hold.
pub const MIN_XI: f64 = 1.1;

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("bounds require ξ ≥ 1.1, got {0}")]
    XiTooSmall(f64),
    #[error("zeta must exceed 1, got {0}")]
    ZetaTooSmall(f64),
    #[error("tail bound needs t ≥ 2, got {0}")]
    TimeTooSmall(f64),
    #[error("suboptimal arm {0} has zero gap")]
    ZeroGap(usize),
    #[error("minimum gap is undefined when all means are equal")]
    UndefinedMinGap,
    #[error("the {variant} bound needs gamma = 1, got {gamma}")]
    GammaNotOne { variant: &'static str, gamma: usize },
    #[error("degree sequence is not that of a complete graph")]
    NotComplete,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    UcbShare,
    MpUcb,
    LfUcb,
}

impl BoundVariant {
    pub fn name(&self) -> &'static str {
        match self {
            BoundVariant::UcbShare => "ucb_share",
            BoundVariant::MpUcb => "mp_ucb",
            BoundVariant::LfUcb => "lf_ucb",
        }
    }
}

/// Everything the bound formulas read about one problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Gap of every arm, the optimal one included.
    pub gaps: Vec<f64>,
    pub optimal_index: usize,
    pub min_gap: Option<f64>,
    pub sigma: f64,
    pub xi: f64,
    pub horizon: u64,
    pub zeta: f64,
    pub gamma: usize,
    /// `d^(i)` in G.
    pub degrees: Vec<usize>,
    /// `d_gamma^(i)`: agents within `gamma` hops.
    pub degrees_gamma: Vec<usize>,
    /// `d_{gamma-1}^(i)`: agents within `gamma - 1` hops (0 when gamma = 1).
    pub degrees_gamma_minus_one: Vec<usize>,
    pub chi_hat: usize,
    pub gammabar_hat: usize,
}

impl BoundInputs {
    pub fn from_instance(
        env: &BanditEnv,
        g: &Topology,
        gamma: usize,
        xi: f64,
        horizon: u64,
    ) -> Result<Self, BoundError> {
        let a = analyze(g, gamma)?;
        Ok(Self {
            gaps: env.gaps().to_vec(),
            optimal_index: env.optimal_index(),
            min_gap: env.min_gap(),
            sigma: env.sigma(),
            xi,
            horizon,
            zeta: DEFAULT_ZETA,
            gamma,
            degrees: g.degrees(),
            degrees_gamma: a.degrees_gamma.clone(),
            degrees_gamma_minus_one: a.degrees_within(gamma - 1),
            chi_hat: a.chi_hat(),
            gammabar_hat: a.gammabar_hat(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.degrees.len()
    }

    pub fn num_arms(&self) -> usize {
        self.gaps.len()
    }

    fn suboptimal_gaps(&self) -> Result<Vec<f64>, BoundError> {
        self.gaps
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != self.optimal_index)
            .map(|(k, &d)| if d > 0.0 { Ok(d) } else { Err(BoundError::ZeroGap(k)) })
            .collect()
    }

    fn check(&self) -> Result<Vec<f64>, BoundError> {
        if self.xi < MIN_XI {
            return Err(BoundError::XiTooSmall(self.xi));
        }
        if self.zeta <= 1.0 {
            return Err(BoundError::ZetaTooSmall(self.zeta));
        }
        self.suboptimal_gaps()
    }

    fn log_t(&self) -> f64 {
        (self.horizon as f64).ln()
    }

    /// `sum_i d_{gamma-1}^(i)+`.
    pub fn relay_multiplier(&self) -> f64 {
        self.degrees_gamma_minus_one.iter().map(|&d| (d + 1) as f64).sum()
    }

    /// Trivial cost ceiling: every agent relays every step.
    pub fn comm_cap(&self) -> f64 {
        self.horizon as f64 * self.relay_multiplier()
    }
}

/// `g(M, d) = M + sum_i (12 ln(3(d_i + 1)) + 3 ln(d_i + 1))`.
pub fn g_term(m: f64, degrees: &[usize]) -> f64 {
    m + degrees
        .iter()
        .map(|&d| {
            let d1 = (d + 1) as f64;
            12.0 * (3.0 * d1).ln() + 3.0 * d1.ln()
        })
        .sum::<f64>()
}

/// Probability bound that an estimate leaves its confidence interval at
/// time `t`, for an agent hearing from at most `degree` others. Not clamped.
pub fn tail_bound(t: f64, xi: f64, degree: usize, zeta: f64) -> Result<f64, BoundError> {
    if t < 2.0 {
        return Err(BoundError::TimeTooSmall(t));
    }
    if zeta <= 1.0 {
        return Err(BoundError::ZetaTooSmall(zeta));
    }
    if xi < MIN_XI {
        return Err(BoundError::XiTooSmall(xi));
    }
    Ok(tail_term(t, xi, degree, zeta))
}

fn tail_term(t: f64, xi: f64, degree: usize, zeta: f64) -> f64 {
    let exponent = (xi + 1.0) * (1.0 - (zeta - 1.0).powi(2) / 16.0);
    (((degree + 1) as f64) * t).ln() / (zeta.ln() * t.powf(exponent))
}

/// Closed-form ceiling on the sum of [`tail_bound`] over all t, valid for
/// `zeta = 1.3` and `xi >= 1.1`.
pub fn tail_sum_bound(degree: usize) -> f64 {
    let d1 = (degree + 1) as f64;
    12.0 * (3.0 * d1).ln() + 3.0 * (d1.ln() + 1.0)
}

/// Partial sum of the tail term for `t = 1..=upto` (the `t = 1` term is
/// finite and included).
pub fn tail_partial_sum(upto: u64, xi: f64, degree: usize, zeta: f64) -> f64 {
    (1..=upto).map(|t| tail_term(t as f64, xi, degree, zeta)).sum()
}

/// Expected cumulative group regret bound at the horizon.
pub fn regret_bound(variant: BoundVariant, b: &BoundInputs) -> Result<f64, BoundError> {
    let gaps = b.check()?;
    let n = b.n_agents() as f64;
    let gamma = b.gamma as f64;
    let lead = 8.0 * (b.xi + 1.0) * b.sigma * b.log_t();
    let inv_gap: f64 = gaps.iter().map(|d| 1.0 / d).sum();
    let gap_sum: f64 = gaps.iter().sum();
    Ok(match variant {
        BoundVariant::UcbShare => {
            if b.gamma != 1 {
                return Err(BoundError::GammaNotOne { variant: variant.name(), gamma: b.gamma });
            }
            lead * inv_gap * b.chi_hat as f64 + gap_sum * g_term(4.0 * n, &b.degrees)
        }
        BoundVariant::MpUcb => {
            let chi = b.chi_hat as f64;
            lead * inv_gap * chi
                + gap_sum * ((n - chi) * (gamma - 1.0) + g_term(4.0 * n, &b.degrees_gamma))
        }
        BoundVariant::LfUcb => {
            let dom = b.gammabar_hat as f64;
            lead * inv_gap * dom
                + gap_sum
                    * ((n - dom) * (3.0 * gamma - 1.0) + dom * g_term(4.0 * n, &b.degrees_gamma))
        }
    })
}

/// Expected group communication cost bound at the horizon, uncapped.
pub fn comm_bound(variant: BoundVariant, b: &BoundInputs) -> Result<f64, BoundError> {
    let gaps = b.check()?;
    let min_gap = b.min_gap.ok_or(BoundError::UndefinedMinGap)?;
    let n = b.n_agents() as f64;
    let k = b.num_arms() as f64;
    let gamma = b.gamma as f64;
    let inv_gap_sq: f64 = gaps.iter().map(|d| 1.0 / (d * d)).sum();
    let lead = |cover: f64| {
        8.0 * (b.xi + 1.0) * b.sigma * (n / (min_gap * min_gap) + cover * inv_gap_sq) * b.log_t()
    };
    let relay = b.relay_multiplier();
    Ok(match variant {
        BoundVariant::UcbShare => {
            if b.gamma != 1 {
                return Err(BoundError::GammaNotOne { variant: variant.name(), gamma: b.gamma });
            }
            lead(b.chi_hat as f64) + k * g_term(7.0 * n, &b.degrees)
        }
        BoundVariant::MpUcb => {
            let chi = b.chi_hat as f64;
            (lead(chi) + k * (n - chi) * (gamma - 1.0)) * relay
                + k * relay * g_term(7.0 * n, &b.degrees_gamma)
        }
        BoundVariant::LfUcb => {
            let dom = b.gammabar_hat as f64;
            let delay = (n - 3.0 * dom * (gamma - 1.0)).max(0.0);
            (lead(dom) + k * delay) * relay + k * relay * dom * g_term(7.0 * n, &b.degrees_gamma)
        }
    })
}

/// Regret bound for the complete-graph index with the `log(t^(xi+1) N)`
/// width; `b.xi` plays the role of the modified exploration parameter.
pub fn regret_bound_complete_modified(b: &BoundInputs) -> Result<f64, BoundError> {
    let gaps = b.check()?;
    let n = b.n_agents();
    if b.degrees.iter().any(|&d| d + 1 != n) {
        return Err(BoundError::NotComplete);
    }
    let nf = n as f64;
    let inv_gap: f64 = gaps.iter().map(|d| 1.0 / d).sum();
    let gap_sum: f64 = gaps.iter().sum();
    let per_agent = g_term(0.0, &b.degrees) / nf;
    Ok(8.0 * (b.xi + 1.0) * b.sigma * inv_gap * (b.horizon as f64 * nf).ln()
        + (nf + 3.0) * gap_sum
        + per_agent * gap_sum)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub variant: BoundVariant,
    pub gamma: usize,
    pub bound_regret: f64,
    pub bound_cost: f64,
    /// `min(bound_cost, T * sum_i d_{gamma-1}^(i)+)`.
    pub bound_cost_capped: f64,
    pub cost_cap: f64,
    /// The clique cover and dominating set sizes are greedy upper estimates.
    pub greedy_surrogates: bool,
    pub inputs: BoundInputs,
}

pub fn report(variant: BoundVariant, b: &BoundInputs) -> Result<BoundReport, BoundError> {
    let bound_regret = regret_bound(variant, b)?;
    let bound_cost = comm_bound(variant, b)?;
    let cost_cap = b.comm_cap();
    Ok(BoundReport {
        variant,
        gamma: b.gamma,
        bound_regret,
        bound_cost,
        bound_cost_capped: bound_cost.min(cost_cap),
        cost_cap,
        greedy_surrogates: true,
        inputs: b.clone(),
    })
}
