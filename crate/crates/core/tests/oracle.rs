mod common;

use tlc_core::*;

fn compare(seed: u64, delta: f64) -> (GradientReport<f64>, FdGradient, GradientComparison) {
    let spec = common::moderate(SimMode::Fluid, seed);
    let p = Params::initial();
    let cfg = Config::default();
    let t = run_sample_path(&spec, &p, 1000.0, Policy::QuasiDynamic, &cfg).unwrap();
    let ipa = ipa_gradient(&t, &[1.0; 4], 60.0);
    let fd = finite_difference_gradient(&spec, &p, 1000.0, &cfg, &FdConfig { delta: [delta; NUM_PARAMS] }).unwrap();
    let c = compare_gradients(&ipa.grad, &fd.grad, &fd.stable);
    (ipa, fd, c)
}

#[test]
fn ipa_agrees_with_finite_differences_on_stable_coordinates() {
    for seed in 1..=3 {
        let (ipa, fd, c) = compare(seed, 1e-3);
        assert!((ipa.cost - fd.base_cost).abs() < 1e-12, "same sample path");
        assert!(c.relative_error.iter().flatten().count() >= 1, "seed {seed}: no informative coordinate");
        assert!(c.max_relative_error() <= 0.10, "seed {seed}: {:?}", c.relative_error);
        assert!(c.cosine >= 0.95, "seed {seed}: cosine {}", c.cosine);
        for i in 0..NUM_PARAMS {
            if fd.stable[i] {
                let tol = (0.1 * fd.grad[i].abs()).max(1e-3);
                assert!((ipa.grad[i] - fd.grad[i]).abs() <= tol, "seed {seed} coordinate {}", i + 1);
            }
        }
    }
}

#[test]
fn finite_differences_are_consistent_under_halving() {
    let (_, a, _) = compare(2, 1e-3);
    let (_, b, _) = compare(2, 5e-4);
    let mut checked = 0;
    for i in 0..NUM_PARAMS {
        if a.stable[i] && b.stable[i] && a.grad[i].abs() > 1e-3 {
            assert!((a.grad[i] - b.grad[i]).abs() <= 0.05 * a.grad[i].abs(), "coordinate {}", i + 1);
            checked += 1;
        }
    }
    assert!(checked >= 1);
}

#[test]
fn comparison_handles_degenerate_inputs() {
    let z = [0.0; NUM_PARAMS];
    let c = compare_gradients(&z, &z, &[true; NUM_PARAMS]);
    assert_eq!(c.cosine, 1.0);
    assert_eq!(c.max_relative_error(), 0.0);
    let mut g = z;
    g[4] = 0.5;
    let c = compare_gradients(&g, &z, &[true; NUM_PARAMS]);
    assert_eq!(c.cosine, 0.0);
    let c = compare_gradients(&g, &g.map(|v| -v), &[true; NUM_PARAMS]);
    assert_eq!(c.cosine, -1.0);
    assert_eq!(c.relative_error[4], Some(2.0));
    // unstable coordinates are ignored
    let c = compare_gradients(&g, &z, &[false; NUM_PARAMS]);
    assert_eq!(c.relative_error, [None; NUM_PARAMS]);
}

#[test]
fn batch_run_is_deterministic() {
    let spec = common::moderate(SimMode::Discrete, 9);
    let cfg = BatchConfig { iterations: 3, replications: 4, horizon: 400.0, ..Default::default() };
    let a = batch_optimize(&cfg, &spec, &Params::initial()).unwrap();
    let b = batch_optimize(&cfg, &spec, &Params::initial()).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
}
