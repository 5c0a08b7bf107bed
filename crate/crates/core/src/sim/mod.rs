//! Event-driven simulation of the intersection in fluid and discrete mode.
//!
//! Between two events every state variable moves linearly, so the engine
//! jumps from event to event with closed-form hitting times. The pure
//! single-step operations live here; [`Simulation`] strings them together
//! and emits [`EventRecord`]s.

mod engine;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EventKind, HybridState, ParameterVector, NUM_FLOWS};
use crate::scalar::Scalar;

pub use engine::{estimate_arrival_rate, run_sample_path, sample_cost, Simulation};
pub use trace::{cost_of_trace, write_trace_csv, EventTrace, Nep, SimDiagnostics, TRACE_CSV_HEADER};

pub use crate::arrivals::SimMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    QuasiDynamic,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event skipped inside ({t0}, {t1}): flow {flow} would reach {value}")]
    EventSkipped { t0: f64, t1: f64, flow: usize, value: f64 },
    #[error("more than {limit} events before horizon {horizon} (chattering guard), stopped at t = {t}")]
    NonConvergence { limit: usize, horizon: f64, t: f64 },
    #[error("invalid arrival process: {0}")]
    InvalidSpec(String),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("the uncontrolled baseline is only modelled in discrete mode")]
    BaselineNeedsDiscrete,
}

/// Engine settings that are not part of the arrival process or the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// Maximum departure rate `H`, shared by all flows.
    pub h: T,
    /// Cost weights ω.
    pub weights: [T; NUM_FLOWS],
    /// Window `t_w` of the discrete-mode arrival-rate estimate.
    pub rate_window: T,
    /// Baseline only: minimum spacing between two vehicles from crossing
    /// roads entering the unsignalised junction. The default puts the
    /// break-even with the unoptimised controller near 1.3 times the
    /// Veberöd rates.
    pub conflict_headway: T,
    /// Abort once this many records have been produced.
    pub max_events: usize,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            h: T::lit(1.2),
            weights: [T::one(); NUM_FLOWS],
            rate_window: T::lit(60.0),
            conflict_headway: T::lit(2.2),
            max_events: 10_000_000,
        }
    }
}

/// Inflow rates in force and the departure rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates<T> {
    pub alpha: [T; NUM_FLOWS],
    pub h: T,
}

/// Which side of each guard the state is on. The engine carries these
/// explicitly so that a queue sitting exactly on a threshold is classified
/// by the direction it crossed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ThresholdFlags {
    /// `x_n > 0`.
    pub occupied: [bool; NUM_FLOWS],
    /// `x_n ≥ s_n`.
    pub above: [bool; NUM_FLOWS],
    /// `w_n ≥ θ_n`, flows 3 and 4.
    pub wait_reached: [bool; 2],
}

impl ThresholdFlags {
    pub fn from_state<T: Scalar>(state: &HybridState<T>, params: &ParameterVector<T>) -> Self {
        let mut f = Self::default();
        for n in 1..=NUM_FLOWS {
            let x = state.x[n - 1];
            f.occupied[n - 1] = x > T::zero_tol();
            f.above[n - 1] = f.occupied[n - 1] && x >= params.threshold(n);
        }
        for n in 3..=4 {
            f.wait_reached[n - 3] = state.w[n - 3] >= params.theta_wait(n);
        }
        f
    }
}

/// Fluid slope of each queue given which queues are occupied.
pub fn flow_slopes<T: Scalar>(state: &HybridState<T>, rates: &Rates<T>, occupied: &[bool; NUM_FLOWS]) -> [T; NUM_FLOWS] {
    let lights = state.lights();
    std::array::from_fn(|i| {
        let a = rates.alpha[i];
        match (occupied[i], lights[i]) {
            (true, true) => a - rates.h,
            (_, false) => a,
            (false, true) => {
                if a > rates.h {
                    a - rates.h
                } else {
                    T::zero()
                }
            }
        }
    })
}

/// Moves the state forward by `dt` with no event inside the interval.
///
/// Fluid queues integrate their slope; discrete queues only change at
/// events. The green clock runs, and a pedestrian wait clock runs while its
/// flow faces red with someone waiting.
pub fn advance<T: Scalar>(
    state: &HybridState<T>,
    dt: T,
    rates: &Rates<T>,
    mode: SimMode,
) -> Result<HybridState<T>, SimError> {
    let occupied = state.x.map(|x| x > T::zero_tol());
    advance_with(state, dt, &flow_slopes(state, rates, &occupied), &occupied, mode)
}

pub(crate) fn advance_with<T: Scalar>(
    state: &HybridState<T>,
    dt: T,
    slopes: &[T; NUM_FLOWS],
    occupied: &[bool; NUM_FLOWS],
    mode: SimMode,
) -> Result<HybridState<T>, SimError> {
    let mut next = *state;
    next.t = state.t + dt;
    if mode == SimMode::Fluid {
        for i in 0..NUM_FLOWS {
            let x = state.x[i] + slopes[i] * dt;
            if x < -T::zero_tol() * T::lit(1e3) {
                return Err(SimError::EventSkipped {
                    t0: state.t.to_f64_lossy(),
                    t1: next.t.to_f64_lossy(),
                    flow: i + 1,
                    value: x.to_f64_lossy(),
                });
            }
            next.x[i] = x.max(T::zero());
        }
    }
    let road = state.green_road();
    next.z[road - 1] = state.z[road - 1] + dt;
    let lights = state.lights();
    for n in 3..=4 {
        if !lights[n - 1] && occupied[n - 1] {
            next.w[n - 3] = state.w[n - 3] + dt;
        }
    }
    Ok(next)
}

/// A guard crossing due at the returned time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PendingEvent {
    /// Sub-order class: 0 exogenous inputs, 1 queue crossings, 2 clocks.
    pub class: u8,
    /// Flow or road, 1-based.
    pub flow: u8,
    pub kind: PendingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PendingKind {
    RateChange,
    Arrival,
    Departure,
    QueueEmptied,
    QueueDownThreshold,
    QueueUpThreshold,
    GreenMin,
    GreenMax,
    WaitThreshold,
}

impl PendingKind {
    pub fn class(self) -> u8 {
        match self {
            PendingKind::RateChange | PendingKind::Arrival | PendingKind::Departure => 0,
            PendingKind::QueueEmptied | PendingKind::QueueDownThreshold | PendingKind::QueueUpThreshold => 1,
            PendingKind::GreenMin | PendingKind::GreenMax | PendingKind::WaitThreshold => 2,
        }
    }

    pub fn event_kind(self) -> EventKind {
        match self {
            PendingKind::RateChange => EventKind::RateChange,
            PendingKind::Arrival => EventKind::Arrival,
            PendingKind::Departure => EventKind::Departure,
            PendingKind::QueueEmptied => EventKind::QueueEmptied,
            PendingKind::QueueDownThreshold => EventKind::QueueDownThreshold,
            PendingKind::QueueUpThreshold => EventKind::QueueUpThreshold,
            PendingKind::GreenMin => EventKind::GreenMin,
            PendingKind::GreenMax => EventKind::GreenMax,
            PendingKind::WaitThreshold => EventKind::WaitThreshold,
        }
    }
}

impl PendingEvent {
    pub fn new(kind: PendingKind, flow: usize) -> Self {
        Self {
            class: kind.class(),
            flow: flow as u8,
            kind,
        }
    }
}

/// Earliest hitting time among the state guards: queue contents reaching
/// 0 or `s_n` (fluid mode only), the green clock reaching its bounds and
/// the wait clocks reaching their thresholds.
///
/// Returns `None` when no guard will ever be hit under the current rates.
/// All guards within [`Scalar::time_tol`] of the minimum are returned,
/// sorted in processing order.
pub fn next_event<T: Scalar>(
    state: &HybridState<T>,
    rates: &Rates<T>,
    params: &ParameterVector<T>,
    flags: &ThresholdFlags,
    mode: SimMode,
) -> Option<(T, Vec<PendingEvent>)> {
    let mut cands: Vec<(T, PendingEvent)> = Vec::with_capacity(8);
    let zero = T::zero();

    if mode == SimMode::Fluid {
        let slopes = flow_slopes(state, rates, &flags.occupied);
        for n in 1..=NUM_FLOWS {
            let (x, m, s) = (state.x[n - 1], slopes[n - 1], params.threshold(n));
            if !flags.occupied[n - 1] {
                continue;
            }
            if m < zero {
                cands.push(((x / -m).max(zero), PendingEvent::new(PendingKind::QueueEmptied, n)));
                if flags.above[n - 1] {
                    cands.push((((x - s) / -m).max(zero), PendingEvent::new(PendingKind::QueueDownThreshold, n)));
                }
            } else if m > zero && !flags.above[n - 1] {
                cands.push((((s - x) / m).max(zero), PendingEvent::new(PendingKind::QueueUpThreshold, n)));
            }
        }
    }

    let road = state.green_road();
    let z = state.z[road - 1];
    if z < params.theta_min(road) {
        cands.push((params.theta_min(road) - z, PendingEvent::new(PendingKind::GreenMin, road)));
    }
    if z < params.theta_max(road) {
        cands.push((params.theta_max(road) - z, PendingEvent::new(PendingKind::GreenMax, road)));
    }

    let lights = state.lights();
    for n in 3..=4 {
        let w = state.w[n - 3];
        if !lights[n - 1] && flags.occupied[n - 1] && !flags.wait_reached[n - 3] && w < params.theta_wait(n) {
            cands.push((params.theta_wait(n) - w, PendingEvent::new(PendingKind::WaitThreshold, n)));
        }
    }

    let dt = cands.iter().map(|c| c.0).fold(T::infinity(), T::min);
    if !dt.is_finite() {
        return None;
    }
    let mut due: Vec<PendingEvent> = cands
        .into_iter()
        .filter(|(t, _)| *t <= dt + T::time_tol())
        .map(|(_, e)| e)
        .collect();
    due.sort();
    Some((dt, due))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(alpha: [f64; 4]) -> Rates<f64> {
        Rates { alpha, h: 1.2 }
    }

    #[test]
    fn advance_linear_integration() {
        let mut s = HybridState::<f64>::initial();
        s.x[0] = 2.0;
        let next = advance(&s, 1.0, &rates([0.2, 0.0, 0.0, 0.0]), SimMode::Fluid).unwrap();
        assert!((next.x[0] - 1.0).abs() < 1e-12);
        assert_eq!(next.t, 1.0);
    }

    #[test]
    fn advance_wait_clock_needs_waiting_pedestrian() {
        // road 1 green, so flow 3 faces red
        let s = HybridState::<f64>::initial();
        let next = advance(&s, 5.0, &rates([0.0; 4]), SimMode::Fluid).unwrap();
        assert_eq!(next.w[0], 0.0);
        let mut s2 = s;
        s2.x[2] = 1.0;
        let next = advance(&s2, 5.0, &rates([0.0; 4]), SimMode::Fluid).unwrap();
        assert_eq!(next.w[0], 5.0);
    }

    #[test]
    fn advance_runs_only_green_clock() {
        let s = HybridState::<f64>::initial();
        let next = advance(&s, 3.0, &rates([0.0; 4]), SimMode::Fluid).unwrap();
        assert_eq!(next.z, [3.0, 0.0]);
        let mut red = s;
        red.u1 = false;
        let next = advance(&red, 3.0, &rates([0.0; 4]), SimMode::Fluid).unwrap();
        assert_eq!(next.z, [0.0, 3.0]);
    }

    #[test]
    fn advance_rejects_skipped_emptying() {
        let mut s = HybridState::<f64>::initial();
        s.x[0] = 1.0;
        let err = advance(&s, 5.0, &rates([0.2, 0.0, 0.0, 0.0]), SimMode::Fluid).unwrap_err();
        assert!(matches!(err, SimError::EventSkipped { flow: 1, .. }));
    }

    #[test]
    fn advance_discrete_keeps_counts() {
        let mut s = HybridState::<f64>::initial();
        s.x = [3.0, 2.0, 0.0, 1.0];
        let next = advance(&s, 2.5, &rates([0.2; 4]), SimMode::Discrete).unwrap();
        assert_eq!(next.x, s.x);
    }

    #[test]
    fn next_event_queue_empties() {
        let p = ParameterVector::<f64>::initial();
        let mut s = HybridState::<f64>::initial();
        s.x[0] = 5.0;
        s.z[0] = 1.0;
        let flags = ThresholdFlags::from_state(&s, &p);
        let (dt, due) = next_event(&s, &rates([0.2, 0.0, 0.0, 0.0]), &p, &flags, SimMode::Fluid).unwrap();
        assert!((dt - 5.0).abs() < 1e-12);
        assert_eq!(due, vec![PendingEvent::new(PendingKind::QueueEmptied, 1)]);
    }

    #[test]
    fn next_event_min_green() {
        let p = ParameterVector::<f64>::initial();
        let mut s = HybridState::<f64>::initial();
        s.z[0] = 9.0;
        let flags = ThresholdFlags::from_state(&s, &p);
        let (dt, due) = next_event(&s, &rates([0.0; 4]), &p, &flags, SimMode::Fluid).unwrap();
        assert!((dt - 1.0).abs() < 1e-12);
        assert_eq!(due, vec![PendingEvent::new(PendingKind::GreenMin, 1)]);
    }

    #[test]
    fn next_event_simultaneous_set() {
        // x1 drains from 2 at slope -1 and z1 reaches theta1_min = 10 at the same time
        let p = ParameterVector::<f64>::initial();
        let mut s = HybridState::<f64>::initial();
        s.x[0] = 2.0;
        s.z[0] = 8.0;
        let flags = ThresholdFlags::from_state(&s, &p);
        let (dt, due) = next_event(&s, &rates([0.2, 0.0, 0.0, 0.0]), &p, &flags, SimMode::Fluid).unwrap();
        assert!((dt - 2.0).abs() < 1e-12);
        assert_eq!(
            due,
            vec![
                PendingEvent::new(PendingKind::QueueEmptied, 1),
                PendingEvent::new(PendingKind::GreenMin, 1)
            ]
        );
    }

    #[test]
    fn next_event_up_threshold_during_red() {
        let p = ParameterVector::<f64>::initial();
        let mut s = HybridState::<f64>::initial();
        s.x[1] = 6.0; // road 2 red, s2 = 8, alpha 0.5 -> 4 s
        s.z[0] = 0.0;
        let flags = ThresholdFlags::from_state(&s, &p);
        let (dt, due) = next_event(&s, &rates([0.0, 0.5, 0.0, 0.0]), &p, &flags, SimMode::Fluid).unwrap();
        assert!((dt - 4.0).abs() < 1e-12);
        assert_eq!(due, vec![PendingEvent::new(PendingKind::QueueUpThreshold, 2)]);
    }

    #[test]
    fn next_event_none_when_idle_with_infinite_bounds() {
        let p = ParameterVector::<f64>::new([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let s = HybridState::<f64>::initial();
        let flags = ThresholdFlags::from_state(&s, &p);
        assert!(next_event(&s, &rates([0.0; 4]), &p, &flags, SimMode::Fluid).is_none());
    }
}
