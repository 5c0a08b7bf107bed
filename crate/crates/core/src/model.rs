//! Domain types of the signalized intersection: the controllable parameter
//! vector, the hybrid state, the vehicle-queue region partition, the
//! pedestrian enable indicator and the event taxonomy.
//!
//! Flows are numbered 1..=4 in the public surface (1, 2 are the vehicle
//! roads, 3 and 4 the pedestrians crossing road 1 and road 2). Arrays are
//! stored zero-based, so flow `n` lives at index `n - 1`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of controllable parameters.
pub const NUM_PARAMS: usize = 10;
/// Number of queues (two vehicle roads, two pedestrian crossings).
pub const NUM_FLOWS: usize = 4;

/// 1-based positions inside [`ParameterVector`].
pub mod index {
    pub const THETA1_MIN: usize = 1;
    pub const THETA1_MAX: usize = 2;
    pub const THETA2_MIN: usize = 3;
    pub const THETA2_MAX: usize = 4;
    pub const THETA3: usize = 5;
    pub const THETA4: usize = 6;
    pub const S1: usize = 7;
    pub const S2: usize = 8;
    pub const S3: usize = 9;
    pub const S4: usize = 10;

    pub const NAMES: [&str; super::NUM_PARAMS] = [
        "theta1_min",
        "theta1_max",
        "theta2_min",
        "theta2_max",
        "theta3",
        "theta4",
        "s1",
        "s2",
        "s3",
        "s4",
    ];
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {index} ({name}) = {value} violates {constraint}")]
    Constraint {
        /// 1-based position in the vector.
        index: usize,
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("expected {expected} parameters, got {got}")]
    Length { expected: usize, got: usize },
}

/// `[θ1min, θ1max, θ2min, θ2max, θ3, θ4, s1, s2, s3, s4]`.
///
/// Construction always goes through [`ParameterVector::new`], so a value of
/// this type is known to satisfy the feasibility constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParameterVector<T> {
    values: [T; NUM_PARAMS],
}

impl<T: Scalar> ParameterVector<T> {
    pub fn new(values: [T; NUM_PARAMS]) -> Result<Self, ParamError> {
        validate_parameters(&values)
    }

    pub fn from_slice(values: &[T]) -> Result<Self, ParamError> {
        let arr: [T; NUM_PARAMS] = values.try_into().map_err(|_| ParamError::Length {
            expected: NUM_PARAMS,
            got: values.len(),
        })?;
        Self::new(arr)
    }

    /// Initial vector used throughout the experiments.
    pub fn initial() -> Self {
        let v = [10.0, 20.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0].map(T::lit);
        Self { values: v }
    }

    pub fn as_array(&self) -> &[T; NUM_PARAMS] {
        &self.values
    }

    /// 1-based access, matching the parameter numbering used in derivatives.
    pub fn get(&self, i: usize) -> T {
        self.values[i - 1]
    }

    pub fn theta_min(&self, road: usize) -> T {
        self.values[2 * road - 2]
    }

    pub fn theta_max(&self, road: usize) -> T {
        self.values[2 * road - 1]
    }

    /// Pedestrian wait threshold for flow 3 or 4.
    pub fn theta_wait(&self, flow: usize) -> T {
        self.values[flow + 1]
    }

    /// Queue threshold s_n for flow 1..=4.
    pub fn threshold(&self, flow: usize) -> T {
        self.values[flow + 5]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> ParameterVector<U> {
        ParameterVector { values: self.values.map(f) }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for ParameterVector<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = <[T; NUM_PARAMS]>::deserialize(d)?;
        Self::new(values).map_err(serde::de::Error::custom)
    }
}

/// Checks the feasibility constraints and wraps the raw vector.
pub fn validate_parameters<T: Scalar>(raw: &[T; NUM_PARAMS]) -> Result<ParameterVector<T>, ParamError> {
    let fail = |i: usize, constraint: &'static str| ParamError::Constraint {
        index: i,
        name: index::NAMES[i - 1],
        value: raw[i - 1].to_f64_lossy(),
        constraint,
    };
    for (i, v) in raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(fail(i + 1, "finite value"));
        }
    }
    for road in 1..=2 {
        let (lo, hi) = (2 * road - 1, 2 * road);
        if raw[lo - 1] < T::zero() {
            return Err(fail(lo, "theta_min >= 0"));
        }
        if raw[hi - 1] < raw[lo - 1] {
            return Err(fail(hi, "theta_max >= theta_min"));
        }
    }
    for i in index::THETA3..=index::S4 {
        if raw[i - 1] <= T::zero() {
            let c = if i <= index::THETA4 { "theta > 0" } else { "s > 0" };
            return Err(fail(i, c));
        }
    }
    Ok(ParameterVector { values: *raw })
}

/// Vehicle-queue region of the `(x1, x2)` quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    X0,
    X1,
    X1Prime,
    X2,
    X2Prime,
    X3,
    X4,
    X5,
    X6,
}

impl Region {
    pub const ALL: [Region; 9] = [
        Region::X0,
        Region::X1,
        Region::X1Prime,
        Region::X2,
        Region::X2Prime,
        Region::X3,
        Region::X4,
        Region::X5,
        Region::X6,
    ];

    /// Builds the label from per-road (non-empty, at-or-above-threshold) flags.
    pub fn from_levels(road1: QueueLevel, road2: QueueLevel) -> Self {
        use QueueLevel::*;
        match (road1, road2) {
            (Empty, Empty) => Region::X0,
            (Low, Empty) => Region::X1,
            (High, Empty) => Region::X1Prime,
            (Empty, Low) => Region::X2,
            (Empty, High) => Region::X2Prime,
            (Low, Low) => Region::X3,
            (Low, High) => Region::X4,
            (High, Low) => Region::X5,
            (High, High) => Region::X6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Region::X0 => "X0",
            Region::X1 => "X1",
            Region::X1Prime => "X1'",
            Region::X2 => "X2",
            Region::X2Prime => "X2'",
            Region::X3 => "X3",
            Region::X4 => "X4",
            Region::X5 => "X5",
            Region::X6 => "X6",
        }
    }

    /// Membership tests straight from the partition's inequalities; used to
    /// check that the partition is total and disjoint.
    pub fn contains<T: Scalar>(self, x1: T, x2: T, s1: T, s2: T) -> bool {
        let z = T::zero();
        let empty = |x: T| x == z;
        let low = |x: T, s: T| x > z && x < s;
        let high = |x: T, s: T| x >= s && x > z;
        match self {
            Region::X0 => empty(x1) && empty(x2),
            Region::X1 => low(x1, s1) && empty(x2),
            Region::X1Prime => high(x1, s1) && empty(x2),
            Region::X2 => empty(x1) && low(x2, s2),
            Region::X2Prime => empty(x1) && high(x2, s2),
            Region::X3 => low(x1, s1) && low(x2, s2),
            Region::X4 => low(x1, s1) && high(x2, s2),
            Region::X5 => high(x1, s1) && low(x2, s2),
            Region::X6 => high(x1, s1) && high(x2, s2),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Coarse level of one vehicle queue relative to its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueLevel {
    Empty,
    Low,
    High,
}

impl QueueLevel {
    pub fn of<T: Scalar>(x: T, s: T, zero_tol: T) -> Self {
        if x <= zero_tol {
            QueueLevel::Empty
        } else if x >= s {
            QueueLevel::High
        } else {
            QueueLevel::Low
        }
    }
}

/// Region of `(x1, x2)` for thresholds `(s1, s2)`. A queue at exactly its
/// threshold belongs to the high side; a queue within the fluid zero
/// tolerance is empty.
pub fn classify_region<T: Scalar>(x1: T, x2: T, s1: T, s2: T) -> Region {
    Region::from_levels(
        QueueLevel::of(x1, s1, T::zero_tol()),
        QueueLevel::of(x2, s2, T::zero_tol()),
    )
}

/// Pedestrian enable bits `[p1, p2]`; `p1` derives from flow 3, `p2` from flow 4.
pub type PedestrianIndicator = [bool; 2];

/// Whether a pedestrian queue is long enough or has waited long enough.
pub fn pedestrian_indicator<T: Scalar>(x: T, w: T, s: T, theta: T) -> bool {
    x >= s || w >= theta
}

/// Departure rate β of a queue with content `x`, light bit `green`,
/// inflow `alpha` and saturation rate `h`.
pub fn departure_rate<T: Scalar>(x: T, green: bool, alpha: T, h: T) -> T {
    if !green {
        T::zero()
    } else if x > T::zero_tol() {
        h
    } else {
        alpha
    }
}

/// Net rate of change of a queue: `α − β`.
pub fn queue_slope<T: Scalar>(x: T, green: bool, alpha: T, h: T) -> T {
    alpha - departure_rate(x, green, alpha, h)
}

/// The two feasible light assignments, keyed by u1.
pub fn light_vector(u1: bool) -> [bool; NUM_FLOWS] {
    [u1, !u1, !u1, u1]
}

/// Continuous and discrete state of the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridState<T> {
    pub t: T,
    /// Queue contents of flows 1..=4.
    pub x: [T; NUM_FLOWS],
    /// Time since last red-to-green of roads 1, 2. Only the green road's
    /// clock runs; the red road's clock is held at zero.
    pub z: [T; 2],
    /// Time since the first pedestrian of the current red phase, flows 3, 4.
    pub w: [T; 2],
    /// Light bit of road 1; the other three lights follow from it.
    pub u1: bool,
}

impl<T: Scalar> HybridState<T> {
    /// Empty intersection with road 1 green since `t = 0`.
    pub fn initial() -> Self {
        Self {
            t: T::zero(),
            x: [T::zero(); NUM_FLOWS],
            z: [T::zero(); 2],
            w: [T::zero(); 2],
            u1: true,
        }
    }

    pub fn lights(&self) -> [bool; NUM_FLOWS] {
        light_vector(self.u1)
    }

    pub fn green(&self, flow: usize) -> bool {
        self.lights()[flow - 1]
    }

    /// Road whose green clock is running.
    pub fn green_road(&self) -> usize {
        if self.u1 {
            1
        } else {
            2
        }
    }

    pub fn region(&self, params: &ParameterVector<T>) -> Region {
        classify_region(self.x[0], self.x[1], params.threshold(1), params.threshold(2))
    }

    pub fn pedestrian(&self, params: &ParameterVector<T>) -> PedestrianIndicator {
        [3, 4].map(|n| {
            pedestrian_indicator(self.x[n - 1], self.w[n - 3], params.threshold(n), params.theta_wait(n))
        })
    }
}

/// Everything that can happen at an event instant.
///
/// Flow-indexed kinds carry the flow in [`EventRecord::flow`]. A light
/// switch is recorded once, as `GreenToRed` with the road (1 or 2) whose
/// vehicles lose the green; the coupled switches of the other three lights
/// are implied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// First record of every trace or window.
    Start,
    /// `x_n ↓ 0`.
    QueueEmptied,
    /// `x_n ↑ 0⁺`.
    QueueNonEmpty,
    /// `x_n ↑ s_n`.
    QueueUpThreshold,
    /// `x_n ↓ s_n`.
    QueueDownThreshold,
    /// `α_n ↓ 0`.
    RateZero,
    /// `α_n ↑ 0⁺`.
    RatePositive,
    /// Any other exogenous change of a fluid inflow rate.
    RateChange,
    /// A unit joined the queue (discrete mode).
    Arrival,
    /// A unit arrived at a free green approach and crossed without queueing.
    PassThrough,
    /// A unit left the queue (discrete mode).
    Departure,
    /// `z_n ↑ θ_n^min`.
    GreenMin,
    /// `z_n ↑ θ_n^max`.
    GreenMax,
    /// `w_n ↑ θ_n`.
    WaitThreshold,
    /// `p_n ↑ 1`.
    PedestrianEnabled,
    /// `p_n ↓ 0`.
    PedestrianCleared,
    /// `G2R` of the given road and the coupled switches.
    GreenToRed,
    /// Parameters replaced between online windows.
    ParameterUpdate,
    /// End of the horizon.
    Horizon,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::QueueEmptied => "x_down_0",
            EventKind::QueueNonEmpty => "x_up_0",
            EventKind::QueueUpThreshold => "x_up_s",
            EventKind::QueueDownThreshold => "x_down_s",
            EventKind::RateZero => "alpha_down_0",
            EventKind::RatePositive => "alpha_up_0",
            EventKind::RateChange => "alpha_change",
            EventKind::Arrival => "arrival",
            EventKind::PassThrough => "pass_through",
            EventKind::Departure => "departure",
            EventKind::GreenMin => "z_up_theta_min",
            EventKind::GreenMax => "z_up_theta_max",
            EventKind::WaitThreshold => "w_up_theta",
            EventKind::PedestrianEnabled => "p_up_1",
            EventKind::PedestrianCleared => "p_down_0",
            EventKind::GreenToRed => "g2r",
            EventKind::ParameterUpdate => "param_update",
            EventKind::Horizon => "horizon",
        }
    }

    /// Exogenous events have parameter-independent occurrence times.
    pub fn is_exogenous(self) -> bool {
        matches!(
            self,
            EventKind::Start
                | EventKind::RateZero
                | EventKind::RatePositive
                | EventKind::RateChange
                | EventKind::Arrival
                | EventKind::PassThrough
                | EventKind::Departure
                | EventKind::ParameterUpdate
                | EventKind::Horizon
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One occurrence in a trace.
///
/// Records at the same `time` form one instant; `seq` is the deterministic
/// sub-order inside it. `cause` points at the `seq` of the record whose
/// occurrence time this record inherits (compound pedestrian events and
/// light switches).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord<T> {
    pub time: T,
    pub seq: u32,
    pub kind: EventKind,
    /// Flow 1..=4 (road 1..=2 for clock events and switches), 0 when not applicable.
    pub flow: u8,
    pub cause: Option<u32>,
    /// Inflow rates at the event: exact in fluid mode, windowed estimates in
    /// discrete mode.
    pub alpha: [T; NUM_FLOWS],
    pub h: T,
    pub region_before: Region,
    pub region_after: Region,
    pub p_before: PedestrianIndicator,
    pub p_after: PedestrianIndicator,
    /// State right after this record was applied.
    pub state: HybridState<T>,
    /// Light switches only: how the trigger depends on the order of guard
    /// crossings that coincided at this instant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie: Option<Box<TieBreak>>,
}

/// Trigger of a switch for every processing order of the primitive events
/// of its instant. Used to take derivatives at exact ties, where the
/// perturbed path resolves the tie one way or the other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBreak {
    /// `seq` of the last record produced by each primitive, in processing order.
    pub candidates: Vec<u32>,
    /// `(order, trigger)`: applying the candidates in `order` (indices into
    /// `candidates`), the decision flips after `candidates[trigger]`.
    pub triggers: Vec<(Vec<u8>, u8)>,
}

impl TieBreak {
    pub fn trigger_for(&self, order: &[u8]) -> Option<usize> {
        self.triggers.iter().find(|(o, _)| o.as_slice() == order).map(|(_, t)| *t as usize)
    }
}

impl<T> EventRecord<T> {
    pub fn flow_index(&self) -> Option<usize> {
        (self.flow > 0).then(|| self.flow as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_vector_is_valid() {
        let raw = [10.0, 20.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0];
        let p = validate_parameters::<f64>(&raw).unwrap();
        assert_eq!(p, ParameterVector::initial());
        assert_eq!(p.theta_min(2), 30.0);
        assert_eq!(p.theta_max(2), 50.0);
        assert_eq!(p.theta_wait(3), 10.0);
        assert_eq!(p.threshold(1), 8.0);
        assert_eq!(p.threshold(4), 5.0);
        assert_eq!(p.get(index::S3), 5.0);
    }

    #[test]
    fn theta_max_below_min_names_index_two() {
        let raw = [10.0, 5.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0];
        match validate_parameters::<f64>(&raw) {
            Err(ParamError::Constraint { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_green_bounds_allowed() {
        let raw = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(validate_parameters::<f64>(&raw).is_ok());
    }

    #[test]
    fn nonpositive_thresholds_rejected() {
        let mut raw = [10.0, 20.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0];
        raw[9] = 0.0;
        let err = validate_parameters::<f64>(&raw).unwrap_err();
        assert!(matches!(err, ParamError::Constraint { index: 10, .. }));
        raw[9] = 5.0;
        raw[0] = -1.0;
        let err = validate_parameters::<f64>(&raw).unwrap_err();
        assert!(matches!(err, ParamError::Constraint { index: 1, .. }));
        assert!(ParameterVector::<f64>::from_slice(&[1.0; 3]).is_err());
    }

    #[test]
    fn deserialize_validates() {
        let ok: ParameterVector<f64> =
            serde_json::from_str("[10,20,30,50,10,10,8,8,5,5]").unwrap();
        assert_eq!(ok, ParameterVector::initial());
        assert!(serde_json::from_str::<ParameterVector<f64>>("[10,5,30,50,10,10,8,8,5,5]").is_err());
    }

    #[test]
    fn region_examples() {
        assert_eq!(classify_region(0.0, 0.0, 8.0, 8.0), Region::X0);
        assert_eq!(classify_region(9.0, 0.0, 8.0, 8.0), Region::X1Prime);
        assert_eq!(classify_region(3.0, 10.0, 8.0, 8.0), Region::X4);
        // threshold itself is on the high side
        assert_eq!(classify_region(8.0, 8.0, 8.0, 8.0), Region::X6);
        assert_eq!(classify_region(3.0, 3.0, 8.0, 8.0), Region::X3);
        assert_eq!(classify_region(8.5, 2.0, 8.0, 8.0), Region::X5);
        assert_eq!(classify_region(0.0, 2.0, 8.0, 8.0), Region::X2);
        assert_eq!(classify_region(0.0, 12.0, 8.0, 8.0), Region::X2Prime);
        assert_eq!(classify_region(1.0, 0.0, 8.0, 8.0), Region::X1);
    }

    #[test]
    fn pedestrian_indicator_examples() {
        assert!(pedestrian_indicator(5.0, 0.0, 5.0, 10.0));
        assert!(!pedestrian_indicator(0.0, 0.0, 5.0, 10.0));
        assert!(pedestrian_indicator(2.0, 10.0, 5.0, 10.0));
    }

    #[test]
    fn departure_rate_cases() {
        assert_eq!(departure_rate(4.0, true, 0.2, 1.2), 1.2);
        assert_eq!(departure_rate(0.0, true, 0.2, 1.2), 0.2);
        assert_eq!(departure_rate(4.0, false, 0.2, 1.2), 0.0);
        assert_eq!(departure_rate(0.0, false, 0.2, 1.2), 0.0);
    }

    #[test]
    fn light_vectors_are_feasible() {
        assert_eq!(light_vector(true), [true, false, false, true]);
        assert_eq!(light_vector(false), [false, true, true, false]);
    }

    #[test]
    fn f32_model_functions() {
        assert_eq!(classify_region(3.0f32, 10.0, 8.0, 8.0), Region::X4);
        assert_eq!(departure_rate(4.0f32, true, 0.2, 1.2), 1.2);
        let p = ParameterVector::<f32>::initial();
        assert_eq!(p.theta_max(1), 20.0);
    }
}
