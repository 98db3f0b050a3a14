//! Cooperative multi-agent stochastic bandits with gated communication.
//!
//! Agents on a graph each play a K-armed bandit and exchange observations.
//! Under the ComEx gate an agent only shares a pull when it was not the arm
//! with the highest current empirical mean, which keeps communication
//! logarithmic in the horizon while preserving regret of the same order as
//! sharing every observation.
//!
//! The crate provides the environment ([`env`]), graph analysis ([`graph`]),
//! per-agent sampling rules ([`policy`]), message passing and consensus
//! ([`protocol`]), the simulation driver ([`engine`]), closed-form bound
//! calculators ([`bounds`]) and experiment configuration and output
//! ([`config`]).

pub mod bounds;
pub mod config;
pub mod engine;
pub mod env;
pub mod graph;
pub mod policy;
pub mod protocol;

/// Index of the largest value, ties resolved to the lowest index. Returns 0
/// for an empty input.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if i == 0 || v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}

#[cfg(test)]
mod tests {
    use super::argmax_lowest;

    #[test]
    fn argmax_ties_and_infinities() {
        assert_eq!(argmax_lowest([]), 0);
        assert_eq!(argmax_lowest([1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest([f64::INFINITY, f64::INFINITY]), 0);
        assert_eq!(argmax_lowest([f64::NEG_INFINITY, -1e300]), 1);
    }
}
