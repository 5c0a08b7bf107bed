mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlc_core::invariants::region_is_total;
use tlc_core::*;

fn params() -> impl Strategy<Value = Params> {
    (
        (0.0..40.0f64, 0.0..60.0f64, 0.0..40.0f64, 0.0..60.0f64),
        (0.5..60.0f64, 0.5..60.0f64),
        (0.5..15.0f64, 0.5..15.0f64, 0.5..10.0f64, 0.5..10.0f64),
    )
        .prop_map(|((m1, d1, m2, d2), (t3, t4), (s1, s2, s3, s4))| {
            Params::new([m1, m1 + d1, m2, m2 + d2, t3, t4, s1, s2, s3, s4]).unwrap()
        })
}

fn interarrival() -> impl Strategy<Value = [f64; 4]> {
    (3.0..15.0f64, 3.0..15.0f64, 5.0..40.0f64, 5.0..40.0f64).prop_map(|(a, b, c, d)| [a, b, c, d])
}

fn assert_clean(mode: SimMode, ia: [f64; 4], seed: u64, p: &Params) -> Result<(), TestCaseError> {
    let spec = ArrivalProcessSpec::from_interarrival(mode, ia, seed);
    let t = run_sample_path(&spec, p, 1000.0, Policy::QuasiDynamic, &Config::default())
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let v = check_trace(&t);
    prop_assert!(v.is_empty(), "{} violations, first {:?}", v.len(), v.first());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fluid_paths_respect_structure(seed in any::<u64>(), ia in interarrival(), p in params()) {
        assert_clean(SimMode::Fluid, ia, seed, &p)?;
    }

    #[test]
    fn discrete_paths_respect_structure(seed in any::<u64>(), ia in interarrival(), p in params()) {
        assert_clean(SimMode::Discrete, ia, seed, &p)?;
    }

    #[test]
    fn region_partition_is_total(x1 in 0.0..20.0f64, x2 in 0.0..20.0f64, s1 in 0.1..15.0f64, s2 in 0.1..15.0f64) {
        prop_assert!(region_is_total(x1, x2, s1, s2));
        prop_assert!(region_is_total(0.0, x2, s1, s2));
        prop_assert!(region_is_total(x1, 0.0, s1, s2));
        prop_assert!(region_is_total(s1, s2, s1, s2));
    }

    #[test]
    fn projection_is_feasible_and_idempotent(raw in prop::array::uniform10(-100.0..100.0f64)) {
        let p = project(&raw);
        prop_assert!(Params::new(*p.as_array()).is_ok());
        prop_assert_eq!(project(p.as_array()), p);
    }

    #[test]
    fn same_seed_same_trace(seed in any::<u64>(), discrete in any::<bool>()) {
        let mode = if discrete { SimMode::Discrete } else { SimMode::Fluid };
        let spec = common::moderate(mode, seed);
        let a = run_sample_path(&spec, &Params::initial(), 300.0, Policy::QuasiDynamic, &Config::default()).unwrap();
        let b = run_sample_path(&spec, &Params::initial(), 300.0, Policy::QuasiDynamic, &Config::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn region_partition_on_grid_and_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200_000 {
        let s1 = rng.random_range(0.1..15.0);
        let s2 = rng.random_range(0.1..15.0);
        // mix continuous points with points exactly on the boundaries
        let pick = |rng: &mut ChaCha8Rng, s: f64| match rng.random_range(0..4) {
            0 => 0.0,
            1 => s,
            _ => rng.random_range(0.0..2.0 * s),
        };
        let (x1, x2) = (pick(&mut rng, s1), pick(&mut rng, s2));
        assert!(region_is_total(x1, x2, s1, s2), "({x1}, {x2}) with s = ({s1}, {s2})");
    }
}

#[test]
fn baseline_conserves_entities() {
    let spec = ArrivalProcessSpec::new(SimMode::Discrete, [0.165, 0.1875, 0.015, 0.015], 4);
    let t = run_sample_path(&spec, &Params::initial(), 2000.0, Policy::Baseline, &Config::default()).unwrap();
    let mut x = [0i64; 4];
    for r in &t.records {
        match r.kind {
            EventKind::Arrival => x[r.flow as usize - 1] += 1,
            EventKind::Departure => x[r.flow as usize - 1] -= 1,
            _ => {}
        }
        for n in 0..4 {
            assert_eq!(r.state.x[n], x[n] as f64);
        }
    }
}
