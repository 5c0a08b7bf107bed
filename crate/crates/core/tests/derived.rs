mod common;

use common::{fluid_trace, record};
use tlc_core::ipa::{event_time_derivative, DerivativeState, RateEstimate};
use tlc_core::sim::{cost_of_trace, estimate_arrival_rate};
use tlc_core::*;

/// Time for a queue draining from `x0` at net rate `slope` to reach `level`.
fn hitting_time(x0: f64, slope: f64, level: f64) -> f64 {
    (level - x0) / slope
}

#[test]
fn down_threshold_time_derivative_matches_hitting_time_difference() {
    let (alpha, h, s1) = (0.2, 1.2, 8.0);
    let rec = record(3.0, 0, EventKind::QueueDownThreshold, 1, [s1, 0.0, 0.0, 0.0], true);
    let rates = RateEstimate { alpha_hat: [alpha; 4], h };
    let tau = event_time_derivative(&rec, &DerivativeState::default(), &rates, None, 1e-6);

    // two-segment path: x1 = 11 at t = 0, draining at α − H
    let d = 1e-4;
    let fd = (hitting_time(11.0, alpha - h, s1 + d) - hitting_time(11.0, alpha - h, s1 - d)) / (2.0 * d);
    assert!((fd + 1.0).abs() < 1e-9);
    assert!((tau.value[6] - fd).abs() < 1e-9, "{:?}", tau.value);
    for (i, v) in tau.value.iter().enumerate() {
        if i != 6 {
            assert_eq!(*v, 0.0);
        }
    }
    assert!(!tau.degenerate);
}

/// Road 1 hits its maximum green at t = 5 and turns red; its empty queue
/// starts filling because of the switch, and empties again at t = 15.
fn switch_induced_nep() -> Vec<Record> {
    let mut v = Vec::new();
    v.push(record(0.0, 0, EventKind::Start, 0, [0.0; 4], true));
    v.push(record(5.0, 0, EventKind::GreenMax, 1, [0.0; 4], true));
    let mut g2r = record(5.0, 1, EventKind::GreenToRed, 1, [0.0; 4], false);
    g2r.cause = Some(0);
    v.push(g2r);
    let mut s1 = record(5.0, 2, EventKind::QueueNonEmpty, 1, [0.0; 4], false);
    s1.cause = Some(1);
    v.push(s1);
    v.push(record(15.0, 0, EventKind::QueueEmptied, 1, [0.0; 4], true));
    v.push(record(1000.0, 0, EventKind::Horizon, 0, [0.0; 4], true));
    v
}

#[test]
fn switch_induced_nep_start_row() {
    let alpha = 0.2;
    let recs = switch_induced_nep();
    let mut est = IpaEstimator::new(SimMode::Fluid, [1.0; 4], IpaOptions::default());
    for r in &recs[..4] {
        est.observe(r);
    }
    let mut expected = [0.0; NUM_PARAMS];
    expected[1] = -alpha;
    let row = est.derivatives().x_prime[0];
    for i in 0..NUM_PARAMS {
        assert!((row[i] - expected[i]).abs() < 1e-15, "{row:?}");
    }
}

#[test]
fn single_segment_nep_contribution() {
    let (alpha, nep_len, horizon) = (0.2, 10.0, 1000.0);
    let oracle = -alpha * nep_len / horizon;
    let rep = ipa_gradient(&fluid_trace(switch_induced_nep(), horizon), &[1.0; 4], 60.0);
    assert!((rep.grad[1] - oracle).abs() < 1e-15, "{:?}", rep.grad);
    assert!((rep.grad[1] + 0.002).abs() < 1e-15);
    for (i, g) in rep.grad.iter().enumerate() {
        if i != 1 {
            assert_eq!(*g, 0.0);
        }
    }
}

#[test]
fn rectangle_cost() {
    let recs = vec![
        record(0.0, 0, EventKind::Start, 0, [0.0; 4], true),
        record(10.0, 0, EventKind::Arrival, 1, [2.0, 0.0, 0.0, 0.0], true),
        record(20.0, 0, EventKind::Departure, 1, [0.0; 4], true),
        record(100.0, 0, EventKind::Horizon, 0, [0.0; 4], true),
    ];
    let mut trace = fluid_trace(recs, 100.0);
    trace.mode = SimMode::Discrete;
    let area = 2.0 * (20.0 - 10.0);
    assert!((cost_of_trace(&trace, &[1.0; 4], 100.0) - area / 100.0).abs() < 1e-15);
    assert!((cost_of_trace(&trace, &[1.0; 4], 100.0) - 0.2).abs() < 1e-15);
    let doubled = cost_of_trace(&trace, &[2.0, 1.0, 1.0, 1.0], 100.0);
    assert!((doubled - 0.4).abs() < 1e-15);
}

#[test]
fn triangle_cost() {
    let recs = vec![
        record(0.0, 0, EventKind::Start, 0, [0.0; 4], false),
        record(5.0, 0, EventKind::RateChange, 0, [5.0, 0.0, 0.0, 0.0], true),
        record(10.0, 0, EventKind::QueueEmptied, 1, [0.0; 4], true),
        record(100.0, 0, EventKind::Horizon, 0, [0.0; 4], true),
    ];
    let trace = fluid_trace(recs, 100.0);
    let area = 0.5 * 10.0 * 5.0;
    assert!((cost_of_trace(&trace, &[1.0; 4], 100.0) - area / 100.0).abs() < 1e-15);
    assert!((cost_of_trace(&trace, &[1.0; 4], 100.0) - 0.25).abs() < 1e-15);
}

#[test]
fn arrival_rate_estimates() {
    let twelve: Vec<f64> = (0..12).map(|k| 45.0 + 5.0 * k as f64).collect();
    assert!((estimate_arrival_rate(&twelve, 105.0, 60.0) - 0.2).abs() < 1e-15);
    assert_eq!(estimate_arrival_rate::<f64>(&[], 105.0, 60.0), 0.0);
    let six: Vec<f64> = (0..6).map(|k| 2.0 + 5.0 * k as f64).collect();
    assert!((estimate_arrival_rate(&six, 30.0, 60.0) - 0.2).abs() < 1e-15);
    // the window is half open: an arrival at τ itself is not counted
    assert!((estimate_arrival_rate::<f64>(&[10.0, 30.0], 30.0, 60.0) - 1.0 / 30.0).abs() < 1e-15);
}

#[test]
fn projection_examples() {
    let v0 = *Params::initial().as_array();
    assert_eq!(project(&v0).as_array(), &v0);
    let mut raw = v0;
    raw[1] = raw[0] - 3.0;
    assert_eq!(project(&raw).theta_max(1), raw[0]);
    let mut raw = v0;
    raw[6] = -0.5;
    assert_eq!(project(&raw).threshold(1), 0.1);
    let mut raw = v0;
    raw[2] = -4.0;
    raw[3] = -5.0;
    let p = project(&raw);
    assert_eq!((p.theta_min(2), p.theta_max(2)), (0.0, 0.0));
}

#[test]
fn smoothing_examples() {
    let g = [1.0, -2.0, 0.5, 0.0, 3.0, 0.0, 0.0, 1.0, 0.0, 2.0];
    assert_eq!(smooth_gradient(&g, &g, [0.6, 0.4]).map(|v| (v * 1e12).round()), g.map(|v| (v * 1e12).round()));
    let mut a = [0.0; NUM_PARAMS];
    let mut b = [0.0; NUM_PARAMS];
    a[0] = 1.0;
    b[1] = 1.0;
    let s = smooth_gradient(&a, &b, [0.6, 0.4]);
    assert_eq!(&s[..3], &[0.6, 0.4, 0.0]);
    assert_eq!(smooth_gradient(&a, &b, [1.0, 0.0]), a);
    let m = smooth_gradient(&g, &a, [0.5, 0.5]);
    assert_eq!(m[0], 1.0);
    assert_eq!(m[1], -1.0);
}

#[test]
fn zero_traffic() {
    for mode in [SimMode::Fluid, SimMode::Discrete] {
        let spec = ArrivalProcessSpec::new(mode, [0.0; 4], 7);
        let t = run_sample_path(&spec, &Params::initial(), 1000.0, Policy::QuasiDynamic, &Config::default()).unwrap();
        assert_eq!(t.cost, 0.0);
        assert_eq!(t.diagnostics.switches, 0);
        let rep = ipa_gradient(&t, &[1.0; 4], 60.0);
        assert_eq!(rep.grad, [0.0; NUM_PARAMS]);
        let cfg = BatchConfig { iterations: 3, replications: 2, horizon: 200.0, ..Default::default() };
        let r = batch_optimize(&cfg, &spec, &Params::initial()).unwrap();
        for row in &r.trajectory {
            assert_eq!(&row.params, Params::initial().as_array());
        }
    }
    let spec = ArrivalProcessSpec::new(SimMode::Fluid, [0.0; 4], 7);
    let fd = finite_difference_gradient(&spec, &Params::initial(), 1000.0, &Config::default(), &FdConfig::default()).unwrap();
    assert_eq!(fd.grad, [0.0; NUM_PARAMS]);
    assert!(fd.stable.iter().all(|&s| s));
}

#[test]
fn gradient_is_linear_in_weights() {
    let spec = common::moderate(SimMode::Fluid, 3);
    let t = run_sample_path(&spec, &Params::initial(), 500.0, Policy::QuasiDynamic, &Config::default()).unwrap();
    let g1 = ipa_gradient(&t, &[1.0; 4], 60.0).grad;
    let g3 = ipa_gradient(&t, &[3.0; 4], 60.0).grad;
    for i in 0..NUM_PARAMS {
        assert!((g3[i] - 3.0 * g1[i]).abs() <= 1e-12 * (1.0 + g1[i].abs()));
    }
}

#[test]
fn trace_cost_matches_recomputation() {
    for mode in [SimMode::Fluid, SimMode::Discrete] {
        let spec = common::moderate(mode, 11);
        let t = run_sample_path(&spec, &Params::initial(), 800.0, Policy::QuasiDynamic, &Config::default()).unwrap();
        let again = cost_of_trace(&t, &[1.0; 4], 800.0);
        assert!((t.cost - again).abs() < 1e-9 * (1.0 + t.cost), "{mode:?} {} {}", t.cost, again);
        let est = ipa_gradient(&t, &[1.0; 4], 60.0).cost;
        assert!((t.cost - est).abs() < 1e-9 * (1.0 + t.cost));
    }
}

#[test]
fn neps_are_ordered_and_disjoint() {
    for mode in [SimMode::Fluid, SimMode::Discrete] {
        let t = run_sample_path(&common::moderate(mode, 5), &Params::initial(), 1000.0, Policy::QuasiDynamic, &Config::default())
            .unwrap();
        for neps in &t.neps {
            let mut last_end = 0.0;
            for nep in neps {
                assert!(nep.start >= last_end && nep.end >= nep.start && nep.end <= 1000.0, "{mode:?} {} {} {}", last_end, nep.start, nep.end);
                assert!(nep.event_times.iter().all(|&e| e > nep.start && e < nep.end));
                last_end = nep.end;
            }
        }
    }
}

#[test]
fn f32_path_tracks_f64() {
    let spec = common::moderate(SimMode::Discrete, 2);
    let t64 = run_sample_path(&spec, &Params::initial(), 300.0, Policy::QuasiDynamic, &Config::default()).unwrap();
    let p32 = Params::initial().map(|v| v as f32);
    let t32 = run_sample_path(&spec, &p32, 300.0f32, Policy::QuasiDynamic, &SimConfig::<f32>::default()).unwrap();
    assert!((t32.cost as f64 - t64.cost).abs() < 1e-3 * (1.0 + t64.cost));
}
