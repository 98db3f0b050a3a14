mod common;

use comex::bounds::{
    comm_bound, g_term, regret_bound, regret_bound_complete_modified, tail_bound, tail_partial_sum,
    tail_sum_bound, BoundError, BoundInputs, BoundVariant, DEFAULT_ZETA,
};
use comex::env::{ArmSpec, BanditEnv};
use comex::graph::{generate_topology, GraphSpec, Topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

const VARIANTS: [BoundVariant; 3] = [BoundVariant::UcbShare, BoundVariant::MpUcb, BoundVariant::LfUcb];

fn gaussian_env(means: &[f64], var: f64) -> BanditEnv {
    let arms: Vec<_> = means.iter().map(|&mean| ArmSpec::Gaussian { mean, variance: var }).collect();
    BanditEnv::new(&arms, None).unwrap()
}

fn inputs(variant: BoundVariant, means: &[f64], g: &Topology, gamma: usize, xi: f64, horizon: u64) -> BoundInputs {
    let gamma = if variant == BoundVariant::UcbShare { 1 } else { gamma };
    BoundInputs::from_instance(&gaussian_env(means, 1.0), g, gamma, xi, horizon).unwrap()
}

fn er(n: usize, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_topology(&GraphSpec::ErdosRenyi { n, p: 0.5 }, &mut rng, true).unwrap()
}

#[test]
fn tail_bound_matches_direct_evaluation() {
    for &xi in &[1.1f64, 1.5, 2.0, 4.0] {
        for &zeta in &[1.1f64, 1.3, 2.0] {
            for &d in &[0usize, 1, 10, 99] {
                for &t in &[2.0f64, 3.0, 10.0, 500.0, 1e4, 1e6] {
                    let power = (xi + 1.0) * (1.0 - (zeta - 1.0) * (zeta - 1.0) / 16.0);
                    let want = (t * (d as f64 + 1.0)).ln() / zeta.ln() / t.powf(power);
                    let got = tail_bound(t, xi, d, zeta).unwrap();
                    assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{xi} {zeta} {d} {t}");
                }
            }
        }
    }
}

#[test]
fn tail_bound_rejects_out_of_range_arguments() {
    assert!(matches!(tail_bound(1.0, 1.1, 0, 1.3), Err(BoundError::TimeTooSmall(_))));
    assert!(matches!(tail_bound(5.0, 1.0, 0, 1.3), Err(BoundError::XiTooSmall(_))));
    assert!(matches!(tail_bound(5.0, 1.1, 0, 1.0), Err(BoundError::ZetaTooSmall(_))));
}

#[test]
fn tail_sums_stay_below_closed_form() {
    for d in [0usize, 10, 99] {
        let partial = tail_partial_sum(1_000_000, 1.1, d, DEFAULT_ZETA);
        assert!(partial <= tail_sum_bound(d), "d = {d}: {partial} > {}", tail_sum_bound(d));
    }
}

#[test]
fn g_term_by_hand() {
    let want = 5.0 + 12.0 * 3f64.ln() + 12.0 * 9f64.ln() + 3.0 * 3f64.ln();
    assert!((g_term(5.0, &[0, 2]) - want).abs() < 1e-12);
}

#[test]
fn complete_graph_modified_bound_requires_complete_graph() {
    let env = gaussian_env(&[1.0, 0.5], 1.0);
    let k4 = BoundInputs::from_instance(&env, &Topology::complete(4), 1, 1.1, 100).unwrap();
    assert!(regret_bound_complete_modified(&k4).unwrap() > 0.0);
    let path = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let p3 = BoundInputs::from_instance(&env, &path, 1, 1.1, 100).unwrap();
    assert!(matches!(regret_bound_complete_modified(&p3), Err(BoundError::NotComplete)));
}

#[test]
fn sharing_bound_requires_one_hop() {
    let env = gaussian_env(&[1.0, 0.5], 1.0);
    let b = BoundInputs::from_instance(&env, &Topology::complete(4), 2, 1.1, 100).unwrap();
    assert!(regret_bound(BoundVariant::UcbShare, &b).is_err());
    assert!(comm_bound(BoundVariant::UcbShare, &b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_grow_with_horizon_and_noise(
        n in 2usize..10, seed: u64, gamma in 1usize..4, xi in 1.1f64..3.0,
        gap in 0.05f64..2.0, horizon in 10u64..100_000, sigma_scale in 1.0f64..4.0,
    ) {
        let g = er(n, seed);
        for v in VARIANTS {
            let mut b = inputs(v, &[1.0, 1.0 - gap, 1.0 - 2.0 * gap], &g, gamma, xi, horizon);
            let r = regret_bound(v, &b).unwrap();
            let c = comm_bound(v, &b).unwrap();
            b.horizon *= 2;
            prop_assert!(regret_bound(v, &b).unwrap() >= r);
            prop_assert!(comm_bound(v, &b).unwrap() >= c);
            b.horizon /= 2;
            b.sigma *= sigma_scale;
            prop_assert!(regret_bound(v, &b).unwrap() >= r);
            prop_assert!(comm_bound(v, &b).unwrap() >= c);
        }
    }

    #[test]
    fn cost_bounds_shrink_as_gaps_widen(
        n in 2usize..10, seed: u64, gamma in 1usize..4, gap in 0.05f64..1.0, widen in 1.0f64..5.0,
    ) {
        let g = er(n, seed);
        for v in VARIANTS {
            let narrow = inputs(v, &[1.0, 1.0 - gap, 1.0 - 1.5 * gap], &g, gamma, 1.1, 1000);
            let wide = inputs(v, &[1.0, 1.0 - gap * widen, 1.0 - 1.5 * gap * widen], &g, gamma, 1.1, 1000);
            prop_assert!(comm_bound(v, &wide).unwrap() <= comm_bound(v, &narrow).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exact_cover_sizes_tighten_the_bounds(n in 2usize..11, seed: u64, gamma in 1usize..4) {
        let g = er(n, seed);
        for v in VARIANTS {
            let greedy = inputs(v, &[1.0, 0.6, 0.3], &g, gamma, 1.1, 1000);
            let mut exact = greedy.clone();
            let power = power_oracle(&g, greedy.gamma);
            exact.chi_hat = exact_clique_cover(&power);
            exact.gammabar_hat = exact_domination(&power);
            prop_assert!(exact.chi_hat <= greedy.chi_hat);
            prop_assert!(exact.gammabar_hat <= greedy.gammabar_hat);
            prop_assert!(regret_bound(v, &exact).unwrap() <= regret_bound(v, &greedy).unwrap() * (1.0 + 1e-12));
            if v != BoundVariant::LfUcb {
                prop_assert!(comm_bound(v, &exact).unwrap() <= comm_bound(v, &greedy).unwrap() * (1.0 + 1e-12));
            }
        }
    }
}
