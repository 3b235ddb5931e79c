mod common;

use common::{binomial_direct, exhaustive_min};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satqr_core::chain::{snapshot, ChainConfig};
use satqr_core::quantum_model::HardwareParams;
use satqr_core::rate_model::{
    chain_distribution, end_to_end_distribution, find_min_modes_in, link_distribution, loss_thinning,
    min_distribution, pair_loss_probability, rate_from_snapshot, ModeSearch, PairDistribution, PassEvaluation,
};
use satqr_core::scenario::Scenario;

fn config(name: &str) -> ChainConfig {
    Scenario::bundled(name).unwrap().config
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn closed_form_matches_exhaustive_enumeration_on_grid() {
    let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let mut worst: f64 = 0.0;
    for n_mem in 1..=8 {
        for n_sat in 1..=4 {
            for &ps in &grid {
                for &pg in &grid {
                    let sat = link_distribution(n_mem, ps).unwrap();
                    let ground = link_distribution(n_mem, pg).unwrap();
                    let closed = end_to_end_distribution(&sat, &ground, n_sat).unwrap();
                    let mut ps_all = vec![pg];
                    ps_all.extend(std::iter::repeat_n(ps, n_sat - 1));
                    ps_all.push(pg);
                    worst = worst.max(max_abs_diff(closed.probabilities(), &exhaustive_min(n_mem, &ps_all)));
                }
            }
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn generic_small_case() {
    let (n_mem, ps, pg) = (5, 0.4, 0.7);
    let closed = end_to_end_distribution(
        &link_distribution(n_mem, ps).unwrap(),
        &link_distribution(n_mem, pg).unwrap(),
        3,
    )
    .unwrap();
    let brute = exhaustive_min(n_mem, &[pg, ps, ps, pg]);
    assert!(max_abs_diff(closed.probabilities(), &brute) < 1e-12);
}

#[test]
fn single_satellite_is_min_of_two_ground_links() {
    let n_mem = 8;
    let g = link_distribution(n_mem, 0.35).unwrap();
    let sat = PairDistribution::point_mass(n_mem, n_mem);
    let closed = end_to_end_distribution(&sat, &g, 1).unwrap();
    assert!(max_abs_diff(closed.probabilities(), &exhaustive_min(n_mem, &[0.35, 0.35])) < 1e-12);
}

#[test]
fn deterministic_links_give_point_mass() {
    let d = chain_distribution(&[1.0; 6], 7).unwrap();
    assert_eq!(d.probabilities(), PairDistribution::point_mass(7, 7).probabilities());
}

#[test]
fn heterogeneous_links_match_enumeration() {
    let ps = [0.3, 0.8, 0.55, 0.6];
    let d = chain_distribution(&ps, 6).unwrap();
    assert!(max_abs_diff(d.probabilities(), &exhaustive_min(6, &ps)) < 1e-12);
}

#[test]
fn binomial_matches_sampled_histogram() {
    let (n, p, trials) = (50, 0.3, 1_000_000u32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hist = vec![0u32; n + 1];
    for _ in 0..trials {
        let k = (0..n).filter(|_| rng.random::<f64>() < p).count();
        hist[k] += 1;
    }
    let pmf = link_distribution(n, p).unwrap();
    for (k, &h) in hist.iter().enumerate() {
        let q = pmf.get(k);
        let sd = (trials as f64 * q * (1.0 - q)).sqrt();
        assert!((h as f64 - trials as f64 * q).abs() <= 3.0 * sd.max(1.0), "bin {k}: {h} vs {}", trials as f64 * q);
        assert!((q - binomial_direct(n, k, p)).abs() < 1e-15);
    }
}

#[test]
fn thinning_limits_and_example() {
    let d = link_distribution(6, 0.4).unwrap();
    assert_eq!(loss_thinning(&d, 0.0).unwrap().probabilities(), d.probabilities());
    assert_eq!(
        loss_thinning(&d, 1.0).unwrap().probabilities(),
        PairDistribution::point_mass(6, 0).probabilities()
    );
    let t = loss_thinning(&PairDistribution::point_mass(3, 3), 0.1).unwrap();
    assert!(max_abs_diff(t.probabilities(), &[0.001, 0.027, 0.243, 0.729]) < 1e-15);
}

#[test]
fn pair_loss_limits() {
    let mut hw = HardwareParams::ideal();
    assert_eq!(pair_loss_probability(&[hw; 7], 0.1).unwrap(), 0.0);
    hw.p_loss_swap = 0.1;
    let p = pair_loss_probability(&[HardwareParams::ideal(), hw, HardwareParams::ideal()], 0.0).unwrap();
    assert!((p - 0.19).abs() < 1e-15);
}

#[test]
fn pair_loss_matches_step_by_step_survival() {
    let c = config("table1");
    let nodes = c.node_hardware();
    let t = 5e-3;
    let analytic = pair_loss_probability(&nodes, t).unwrap();
    let trials = 1_000_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut lost = 0u32;
    for _ in 0..trials {
        let mut alive = true;
        for (k, hw) in nodes.iter().enumerate() {
            let ground = k == 0 || k + 1 == nodes.len();
            let atoms = if ground { 1 } else { 2 };
            for _ in 0..atoms {
                // Exponential trap lifetime, then the swap kick on satellites.
                let lifetime = -hw.t_loss * (1.0 - rng.random::<f64>()).ln();
                if lifetime < t {
                    alive = false;
                }
                if !ground && rng.random::<f64>() < hw.p_loss_swap {
                    alive = false;
                }
            }
        }
        if !alive {
            lost += 1;
        }
    }
    let est = lost as f64 / trials as f64;
    let se = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    assert!((est - analytic).abs() < 3.0 * se, "{est} vs {analytic} +- {se}");
}

#[test]
fn single_mode_closed_form() {
    let mut c = config("table1");
    c.constellation.n_sat = 1;
    c.constellation.ground_distance = 500e3;
    c.satellite_hw = HardwareParams::ideal();
    c.ground_hw = HardwareParams::ideal();
    let snap = snapshot(&c, 0.5).unwrap();
    let r = rate_from_snapshot(&snap, 1).unwrap();
    let p = snap.p_links();
    for (pl, b) in p.iter().zip(&snap.budgets) {
        assert!((pl - 0.5 * b.p_t).abs() < 1e-15);
    }
    assert_eq!(snap.p_loss, 0.0);
    let expected = p[0] * p[1] / snap.geometry.t_com;
    assert!((r.rate_hz - expected).abs() < 1e-12 * expected);
    // Everything lossless: a quarter of the rounds deliver the pair.
    let d = chain_distribution(&[0.5, 0.5], 1).unwrap();
    assert!((d.get(1) - 0.25).abs() < 1e-15);
}

#[test]
fn rate_monotone_in_modes_and_exact_search() {
    let mut c = config("upgraded");
    c.pass_samples = 8;
    c.satellite_hw.t_loss = 0.1;
    let pass = PassEvaluation::new(&c).unwrap();
    let rates: Vec<f64> = [1, 2, 5, 10, 50, 100, 400].iter().map(|&n| pass.rate(n).unwrap().average.rate_hz).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");

    for target in [1.0, 10.0, 50.0, 100.0] {
        match find_min_modes_in(&pass, target, 0.9, 100_000).unwrap() {
            ModeSearch::Found { n_mem, rate_hz, .. } => {
                assert!(rate_hz >= target);
                assert_eq!(pass.rate(n_mem).unwrap().average.rate_hz, rate_hz);
                if n_mem > 1 {
                    assert!(pass.rate(n_mem - 1).unwrap().average.rate_hz < target, "{target}: {n_mem}");
                }
            }
            other => panic!("{target} Hz: {other:?}"),
        }
    }
    let one = pass.rate(1).unwrap().average.rate_hz;
    assert_eq!(find_min_modes_in(&pass, one * 0.5, 0.9, 10).unwrap().n_mem(), Some(1));
}

#[test]
fn fidelity_target_above_ceiling_is_infeasible() {
    let mut c = config("table1");
    c.pass_samples = 4;
    let pass = PassEvaluation::new(&c).unwrap();
    let ceiling = c.satellite_hw.p_swap.powi(5);
    let out = find_min_modes_in(&pass, 1e-6, ceiling + 1e-4, 100_000).unwrap();
    assert!(matches!(out, ModeSearch::Infeasible { .. }), "{out:?}");
}

#[test]
fn rate_limited_by_n_max_reports_infeasible() {
    let mut c = config("micius");
    c.pass_samples = 4;
    let pass = PassEvaluation::new(&c).unwrap();
    let out = find_min_modes_in(&pass, 1e6, 0.5, 64).unwrap();
    match out {
        ModeSearch::Infeasible { reason, .. } => assert!(reason.contains("n_max"), "{reason}"),
        other => panic!("{other:?}"),
    }
}

fn dist() -> impl Strategy<Value = PairDistribution> {
    prop::collection::vec(0.0f64..1.0, 1..40).prop_map(|w| {
        let s: f64 = w.iter().sum::<f64>() + 1e-12;
        let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
        let rest = 1.0 - p.iter().sum::<f64>();
        p[0] += rest;
        PairDistribution::new(p).unwrap()
    })
}

proptest! {
    #[test]
    fn thinning_composes_and_preserves_mass(d in dist(), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let twice = loss_thinning(&loss_thinning(&d, p).unwrap(), q).unwrap();
        let once = loss_thinning(&d, 1.0 - (1.0 - p) * (1.0 - q)).unwrap();
        prop_assert!(max_abs_diff(twice.probabilities(), once.probabilities()) < 1e-12);
        prop_assert!((once.total() - 1.0).abs() < 1e-12);
        prop_assert!((once.mean() - (1.0 - p) * (1.0 - q) * d.mean()).abs() < 1e-9 * d.mean().max(1.0));
    }

    #[test]
    fn direct_min_matches_enumeration(n_mem in 1usize..6, ps in prop::collection::vec(0.0f64..=1.0, 2..5)) {
        let links: Vec<_> = ps.iter().map(|&p| link_distribution(n_mem, p).unwrap()).collect();
        let d = min_distribution(&links).unwrap();
        prop_assert!(max_abs_diff(d.probabilities(), &exhaustive_min(n_mem, &ps)) < 1e-12);
    }

    #[test]
    fn mean_monotone_in_link_probability_and_loss(
        n_mem in 1usize..300,
        n_links in 2usize..8,
        p in 0.01f64..0.99,
        dp in 0.0f64..0.01,
        loss in 0.0f64..0.9,
        dl in 0.0f64..0.1,
    ) {
        let base = chain_distribution(&vec![p; n_links], n_mem).unwrap();
        let better = chain_distribution(&vec![p + dp; n_links], n_mem).unwrap();
        prop_assert!(better.mean() >= base.mean() - 1e-9);
        let a = loss_thinning(&base, loss).unwrap().mean();
        let b = loss_thinning(&base, loss + dl).unwrap().mean();
        prop_assert!(b <= a + 1e-9);
        let more = chain_distribution(&vec![p; n_links], n_mem + 1).unwrap();
        prop_assert!(more.mean() >= base.mean() - 1e-9);
    }
}
