//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use comex::config::ExperimentConfig;
use comex::engine::{RunStreams, Variant};
use comex::env::{ArmSpec, BanditEnv};
use comex::graph::{GraphSpec, Topology};
use comex::policy::ThompsonPrior;
use comex::protocol::Gate;
use rand::Rng;

/// K = 10 Gaussian arms, means (11, 10, ..., 10), unit variance, on 100
/// agents of an Erdős–Rényi(0.7) graph for 500 steps.
pub fn benchmark_gaussian(name: &str, variant: Variant, gate: Gate, xi: f64) -> ExperimentConfig {
    let mut arms = vec![ArmSpec::Gaussian { mean: 11.0, variance: 1.0 }];
    arms.extend([ArmSpec::Gaussian { mean: 10.0, variance: 1.0 }; 9]);
    ExperimentConfig {
        name: name.to_string(),
        variants: vec![variant],
        gates: vec![gate],
        arms,
        sigma: None,
        graph: GraphSpec::ErdosRenyi { n: 100, p: 0.7 },
        horizon: 500,
        gamma: 1,
        clamp_gamma_to_diameter: true,
        xi,
        thompson_prior: ThompsonPrior::default(),
        runs: 100,
        seed: 2024,
        output_dir: "unused".into(),
        checkpoints: Vec::new(),
        bound_report: false,
    }
}

pub fn small_config(variant: Variant, gate: Gate, graph: GraphSpec, horizon: u64, gamma: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: "small".to_string(),
        variants: vec![variant],
        gates: vec![gate],
        arms: vec![
            ArmSpec::Gaussian { mean: 0.9, variance: 0.25 },
            ArmSpec::Bernoulli { p: 0.5 },
            ArmSpec::Triangular01 { mode: 0.2 },
        ],
        sigma: None,
        graph,
        horizon,
        gamma,
        clamp_gamma_to_diameter: true,
        xi: 1.1,
        thompson_prior: ThompsonPrior::default(),
        runs: 2,
        seed: 7,
        output_dir: "unused".into(),
        checkpoints: Vec::new(),
        bound_report: false,
    }
}

/// Hop distances by a plain queue-based search, `usize::MAX` when
/// unreachable.
pub fn bfs_oracle(adj: &[Vec<bool>], src: usize) -> Vec<usize> {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            if adj[u][v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

pub fn adjacency_matrix(g: &Topology) -> Vec<Vec<bool>> {
    let n = g.num_agents();
    (0..n)
        .map(|i| (0..n).map(|j| g.is_adjacent(i, j)).collect())
        .collect()
}

pub fn power_oracle(g: &Topology, gamma: usize) -> Vec<Vec<bool>> {
    let adj = adjacency_matrix(g);
    (0..adj.len())
        .map(|i| {
            let d = bfs_oracle(&adj, i);
            d.iter().map(|&x| x >= 1 && x <= gamma && x != usize::MAX).collect()
        })
        .collect()
}

fn masks(adj: &[Vec<bool>]) -> Vec<u32> {
    (0..adj.len())
        .map(|i| (0..adj.len()).filter(|&j| adj[i][j]).fold(0u32, |m, j| m | 1 << j))
        .collect()
}

/// Minimum number of cliques partitioning the vertices (exhaustive).
pub fn exact_clique_cover(adj: &[Vec<bool>]) -> usize {
    let n = adj.len();
    let nb = masks(adj);
    let full = (1u32 << n) - 1;
    let mut is_clique = vec![false; 1 << n];
    for s in 1..=full {
        let low = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        is_clique[s as usize] = rest == 0 || (is_clique[rest as usize] && rest & !nb[low] == 0);
    }
    let mut best = vec![usize::MAX; 1 << n];
    best[0] = 0;
    for m in 1..=full {
        let low = m & m.wrapping_neg();
        let rest = m ^ low;
        let mut sub = rest;
        loop {
            let s = sub | low;
            if is_clique[s as usize] {
                let cand = best[(m ^ s) as usize] + 1;
                if cand < best[m as usize] {
                    best[m as usize] = cand;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best[full as usize]
}

/// Minimum size of a dominating set (exhaustive).
pub fn exact_domination(adj: &[Vec<bool>]) -> usize {
    let n = adj.len();
    let closed: Vec<u32> = masks(adj).iter().enumerate().map(|(i, m)| m | 1 << i).collect();
    let full = (1u32 << n) - 1;
    (0..=full)
        .filter(|&s| {
            (0..n)
                .filter(|&i| s >> i & 1 == 1)
                .fold(0u32, |acc, i| acc | closed[i])
                == full
        })
        .map(|s| s.count_ones() as usize)
        .min()
        .unwrap()
}

/// Single-agent UCB written from scratch: a random first pull, then the
/// arm maximizing `mean + sigma sqrt(2 (xi + 1) ln(t - 1) / count)` with
/// unobserved arms first and ties to the lowest index.
pub fn reference_ucb_pulls(env: &BanditEnv, xi: f64, horizon: u64, seed: u64, run: u64) -> Vec<usize> {
    let k = env.num_arms();
    let mut streams = RunStreams::for_run(seed, run);
    let mut count = vec![0u64; k];
    let mut sum = vec![0.0f64; k];
    let mut pulls = Vec::new();
    for t in 1..=horizon {
        let arm = if t == 1 {
            streams.protocol.random_range(0..k)
        } else {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for a in 0..k {
                let v = if count[a] == 0 {
                    f64::INFINITY
                } else {
                    sum[a] / count[a] as f64
                        + env.sigma() * (2.0 * (xi + 1.0) * ((t - 1) as f64).ln() / count[a] as f64).sqrt()
                };
                if a == 0 || v > best_val {
                    best = a;
                    best_val = v;
                }
            }
            best
        };
        let r = env.sample_reward(arm, &mut streams.env).unwrap();
        count[arm] += 1;
        sum[arm] += r;
        pulls.push(arm);
    }
    pulls
}
