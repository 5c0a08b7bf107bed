//! Quasi-dynamic light control law and the uncontrolled baseline.
//!
//! The law is expressed as the condition under which road 1 holds (or gets)
//! the green. Each condition names the clock of the road that is currently
//! green; a clock that was just reset reads zero and is treated as `0⁺`.

use serde::{Deserialize, Serialize};

use crate::model::{light_vector, ParameterVector, PedestrianIndicator, Region, NUM_FLOWS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub u1: bool,
    /// True iff `u1` differs from the phase the decision was taken in.
    pub switch_now: bool,
    /// `seq` of the record that made the decision flip, filled in by the engine.
    pub trigger: Option<u32>,
}

/// Light bit of road 1 after evaluating the case that owns `region`.
pub fn control_decision<T: Scalar>(
    region: Region,
    p: PedestrianIndicator,
    z: [T; 2],
    params: &ParameterVector<T>,
    current_u1: bool,
) -> ControlDecision {
    let u1 = road1_green(region, p, z, params, current_u1);
    ControlDecision {
        u1,
        switch_now: u1 != current_u1,
        trigger: None,
    }
}

fn road1_green<T: Scalar>(
    region: Region,
    p: PedestrianIndicator,
    z: [T; 2],
    params: &ParameterVector<T>,
    green1: bool,
) -> bool {
    let green2 = !green1;
    let [p1, p2] = p;
    let (z1, z2) = (z[0], z[1]);
    let (min1, max1) = (params.theta_min(1), params.theta_max(1));
    let (min2, max2) = (params.theta_min(2), params.theta_max(2));

    match region {
        Region::X0 => {
            (green1 && z1 < max1 && p1 && p2)
                || (green1 && !p1)
                || (green2 && z2 >= max2 && p1 && p2)
                || (green2 && !p1 && p2)
        }
        Region::X1 | Region::X1Prime => {
            (green1 && z1 < min1)
                || (green1 && z1 >= min1 && p1 <= p2)
                || (green2 && z2 < max2 && !p1)
                || (green2 && z2 >= max2)
        }
        Region::X2 | Region::X2Prime => (green1 && z1 < max1 && p2) || (green2 && z2 >= min2 && !p1 && p2),
        Region::X3 | Region::X6 => {
            (green1 && z1 < min1)
                || (green1 && z1 >= min1 && z1 < max1 && p1 <= p2)
                || (green2 && z2 >= min2 && z2 < max2 && !p1 && p2)
                || (green2 && z2 >= max2)
        }
        Region::X4 => (green1 && z1 < min1) || (green2 && z2 >= max2),
        Region::X5 => (green1 && z1 < max1) || (green2 && z2 >= min2),
    }
}

/// Full light vector from the road-1 bit.
pub fn expand_control(u1: bool) -> [bool; NUM_FLOWS] {
    light_vector(u1)
}

/// Inverse of [`expand_control`]; `None` for vectors outside the feasible set.
pub fn collapse_control(u: [bool; NUM_FLOWS]) -> Option<bool> {
    match u {
        [true, false, false, true] => Some(true),
        [false, true, true, false] => Some(false),
        _ => None,
    }
}

/// Movement permissions at the uncontrolled intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineDecision {
    /// Vehicle flows 1, 2 allowed to enter the junction.
    pub vehicles_moving: [bool; 2],
    /// Pedestrian flows 3, 4 currently crossing.
    pub pedestrians_crossing: [bool; 2],
}

/// Pedestrians always have right of way: a non-empty pedestrian queue
/// crosses and stops the vehicles of the road it crosses until it is empty.
/// Otherwise both roads discharge, sharing the junction first come first
/// served.
pub fn baseline_decision<T: Scalar>(x: [T; NUM_FLOWS]) -> BaselineDecision {
    let waiting = |n: usize| x[n - 1] > T::zero_tol();
    let pedestrians_crossing = [waiting(3), waiting(4)];
    let vehicles_moving = [
        waiting(1) && !pedestrians_crossing[0],
        waiting(2) && !pedestrians_crossing[1],
    ];
    BaselineDecision {
        vehicles_moving,
        pedestrians_crossing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v0() -> ParameterVector<f64> {
        ParameterVector::initial()
    }

    #[test]
    fn x4_min_green_reached_switches() {
        let d = control_decision(Region::X4, [false, true], [10.0, 0.0], &v0(), true);
        assert!(!d.u1);
        assert!(d.switch_now);
    }

    #[test]
    fn x2prime_without_pedestrians_for_road_two_switches() {
        let d = control_decision(Region::X2Prime, [false, false], [4.0, 0.0], &v0(), true);
        assert!(!d.u1);
        assert!(d.switch_now);
        let d = control_decision(Region::X2Prime, [true, false], [4.0, 0.0], &v0(), true);
        assert!(d.switch_now);
    }

    #[test]
    fn x0_holds_green_without_pedestrian_demand() {
        let d = control_decision(Region::X0, [false, false], [5.0, 0.0], &v0(), true);
        assert!(d.u1);
        assert!(!d.switch_now);
        // arbitrarily long green is kept while p1 = 0
        let d = control_decision(Region::X0, [false, true], [500.0, 0.0], &v0(), true);
        assert!(d.u1);
    }

    #[test]
    fn x0_literal_otherwise_branch() {
        // z1 > 0, p1 = 1, p2 = 0 matches no condition: road 1 loses the green
        let d = control_decision(Region::X0, [true, false], [3.0, 0.0], &v0(), true);
        assert!(!d.u1);
    }

    #[test]
    fn x36_min_and_max_green() {
        let p = v0();
        // inside min green: keep regardless of pedestrians
        assert!(control_decision(Region::X3, [true, false], [5.0, 0.0], &p, true).u1);
        // after min green, unbalanced pedestrian demand for road 1 switches
        assert!(!control_decision(Region::X6, [true, false], [12.0, 0.0], &p, true).u1);
        // max green reached switches
        assert!(!control_decision(Region::X3, [false, false], [20.0, 0.0], &p, true).u1);
        // road 2 at max green hands back to road 1
        assert!(control_decision(Region::X6, [true, true], [0.0, 50.0], &p, false).u1);
        // road 2 before its minimum keeps green
        assert!(!control_decision(Region::X3, [false, true], [0.0, 20.0], &p, false).u1);
        assert!(control_decision(Region::X3, [false, true], [0.0, 31.0], &p, false).u1);
    }

    #[test]
    fn x5_prioritises_road_one() {
        let p = v0();
        assert!(control_decision(Region::X5, [true, true], [19.0, 0.0], &p, true).u1);
        assert!(!control_decision(Region::X5, [true, true], [20.0, 0.0], &p, true).u1);
        assert!(control_decision(Region::X5, [false, false], [0.0, 30.0], &p, false).u1);
    }

    #[test]
    fn x1_cases() {
        let p = v0();
        assert!(control_decision(Region::X1, [true, false], [3.0, 0.0], &p, true).u1);
        assert!(!control_decision(Region::X1Prime, [true, false], [10.0, 0.0], &p, true).u1);
        assert!(control_decision(Region::X1, [false, false], [0.0, 1.0], &p, false).u1);
        assert!(!control_decision(Region::X1, [true, false], [0.0, 1.0], &p, false).u1);
        assert!(control_decision(Region::X1, [true, false], [0.0, 50.0], &p, false).u1);
    }

    #[test]
    fn just_switched_clock_reads_as_zero_plus() {
        let p = v0();
        // road 1 green since 0+, min green 10: keep
        assert!(control_decision(Region::X4, [false, false], [0.0, 0.0], &p, true).u1);
    }

    #[test]
    fn expand_round_trip() {
        assert_eq!(expand_control(true), [true, false, false, true]);
        assert_eq!(expand_control(false), [false, true, true, false]);
        for u1 in [true, false] {
            assert_eq!(collapse_control(expand_control(u1)), Some(u1));
        }
        assert_eq!(collapse_control([true, true, false, false]), None);
    }

    #[test]
    fn baseline_examples() {
        let d = baseline_decision([3.0, 2.0, 0.0, 0.0]);
        assert_eq!(d.vehicles_moving, [true, true]);
        let d = baseline_decision([3.0, 2.0, 1.0, 0.0]);
        assert_eq!(d.vehicles_moving, [false, true]);
        assert_eq!(d.pedestrians_crossing, [true, false]);
        let d = baseline_decision([0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.vehicles_moving, [false, false]);
        assert_eq!(d.pedestrians_crossing, [false, false]);
    }

    #[test]
    fn decision_is_deterministic() {
        let p = v0();
        for region in Region::ALL {
            for bits in 0..4u8 {
                let pi = [bits & 1 == 1, bits & 2 == 2];
                for z in [0.0, 5.0, 10.0, 25.0, 60.0] {
                    for u in [true, false] {
                        let zz = if u { [z, 0.0] } else { [0.0, z] };
                        let a = control_decision(region, pi, zz, &p, u);
                        let b = control_decision(region, pi, zz, &p, u);
                        assert_eq!(a, b);
                        assert_eq!(a.switch_now, a.u1 != u);
                    }
                }
            }
        }
    }
}
