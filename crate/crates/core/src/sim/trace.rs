use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{Policy, SimMode};
use crate::model::{EventKind, EventRecord, ParameterVector, NUM_FLOWS};
use crate::scalar::Scalar;

/// Counters collected while simulating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub events: usize,
    pub switches: usize,
    /// Instants that ended with the control law asking for the opposite
    /// light right after a switch; the reversal waits for the next event.
    pub pending_reversals: usize,
}

impl SimDiagnostics {
    pub fn switches_per_100s(&self, horizon: f64) -> f64 {
        if horizon > 0.0 {
            100.0 * self.switches as f64 / horizon
        } else {
            0.0
        }
    }
}

/// Non-empty period `[start, end)` of one queue with the times of the
/// queue-related events strictly inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nep<T> {
    pub start: T,
    pub end: T,
    pub event_times: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTrace<T> {
    pub mode: SimMode,
    pub policy: Policy,
    pub seed: u64,
    pub params: ParameterVector<T>,
    pub weights: [T; NUM_FLOWS],
    pub horizon: T,
    pub records: Vec<EventRecord<T>>,
    pub neps: [Vec<Nep<T>>; NUM_FLOWS],
    /// Realised weighted mean queue length `L`.
    pub cost: T,
    pub diagnostics: SimDiagnostics,
}

/// Builds the per-flow NEP list from a record sequence.
pub(crate) fn collect_neps<T: Scalar>(records: &[EventRecord<T>], horizon: T) -> [Vec<Nep<T>>; NUM_FLOWS] {
    let mut neps: [Vec<Nep<T>>; NUM_FLOWS] = Default::default();
    let mut open: [Option<Nep<T>>; NUM_FLOWS] = Default::default();
    for rec in records {
        if rec.kind == EventKind::Start {
            for n in 0..NUM_FLOWS {
                if rec.state.x[n] > T::zero_tol() {
                    open[n] = Some(Nep { start: rec.time, end: horizon, event_times: Vec::new() });
                }
            }
            continue;
        }
        let related = |n: usize| rec.flow as usize == n + 1 || rec.kind == EventKind::GreenToRed;
        for n in 0..NUM_FLOWS {
            match (rec.kind, rec.flow as usize == n + 1) {
                (EventKind::QueueNonEmpty, true) => {
                    if open[n].is_none() {
                        open[n] = Some(Nep { start: rec.time, end: horizon, event_times: Vec::new() });
                    }
                }
                (EventKind::QueueEmptied, true) => {
                    if let Some(mut nep) = open[n].take() {
                        nep.end = rec.time;
                        // events of the closing instant belong to the boundary
                        nep.event_times.retain(|&e| e < nep.end);
                        neps[n].push(nep);
                    }
                }
                _ => {
                    if let Some(nep) = open[n].as_mut() {
                        if related(n) && rec.time > nep.start && rec.time < horizon {
                            if nep.event_times.last() != Some(&rec.time) {
                                nep.event_times.push(rec.time);
                            }
                        }
                    }
                }
            }
        }
    }
    for n in 0..NUM_FLOWS {
        if let Some(mut nep) = open[n].take() {
            nep.end = horizon;
            neps[n].push(nep);
        }
    }
    neps
}

/// Weighted time-average queue content over `[0, horizon]`, integrated
/// exactly: queues are piecewise linear between records in fluid mode and
/// piecewise constant in discrete mode.
pub fn cost_of_trace<T: Scalar>(trace: &EventTrace<T>, weights: &[T; NUM_FLOWS], horizon: T) -> T {
    let mut area = [T::zero(); NUM_FLOWS];
    for pair in trace.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.time.min(horizon) - a.time;
        if dt <= T::zero() {
            continue;
        }
        for n in 0..NUM_FLOWS {
            area[n] = area[n]
                + match trace.mode {
                    SimMode::Fluid => (a.state.x[n] + b.state.x[n]) * T::lit(0.5) * dt,
                    SimMode::Discrete => a.state.x[n] * dt,
                };
        }
    }
    let total = (0..NUM_FLOWS).fold(T::zero(), |acc, n| acc + weights[n] * area[n]);
    total / horizon
}

pub const TRACE_CSV_HEADER: &str = "time,event_kind,flow,x1,x2,x3,x4,z1,z2,w3,w4,u1,region,p1,p2,alpha_est_1,alpha_est_2,alpha_est_3,alpha_est_4";

/// One row per record, times and reals in 9-decimal fixed point.
pub fn write_trace_csv<T: Scalar, W: Write>(trace: &EventTrace<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in &trace.records {
        let s = &r.state;
        let f = |v: T| format!("{:.9}", v.to_f64_lossy());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f(r.time),
            r.kind.name(),
            r.flow,
            f(s.x[0]),
            f(s.x[1]),
            f(s.x[2]),
            f(s.x[3]),
            f(s.z[0]),
            f(s.z[1]),
            f(s.w[0]),
            f(s.w[1]),
            u8::from(s.u1),
            r.region_after.label(),
            u8::from(r.p_after[0]),
            u8::from(r.p_after[1]),
            f(r.alpha[0]),
            f(r.alpha[1]),
            f(r.alpha[2]),
            f(r.alpha[3]),
        )?;
    }
    Ok(())
}
