//! Structural checks on a quasi-dynamic sample path.
//!
//! Each check walks the records of a trace and reports every violation it
//! finds; an empty list means the path is consistent with the hybrid
//! dynamics and the control law.

use serde::Serialize;

use crate::arrivals::SimMode;
use crate::controller::collapse_control;
use crate::model::{classify_region, EventKind, Region, NUM_FLOWS};
use crate::scalar::Scalar;
use crate::sim::EventTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    /// The light vector is one of the two feasible assignments.
    FeasibleLights,
    /// Only the green road's clock runs; the red road's clock is zero.
    ClockExclusivity,
    /// At most one pedestrian wait clock is non-zero.
    WaitExclusivity,
    /// Queue content changes by the integral of inflow minus outflow.
    Conservation,
    /// No switch away from a road in X3 or X6 before its minimum green.
    MinGreen,
    /// The region in force between two instants agrees with the queue contents.
    RegionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub time: f64,
    pub detail: String,
}

/// Zero tolerance of fluid queues. A queue within it of zero is snapped to
/// zero when it empties, so conservation holds to one snap plus roundoff.
pub const FLUID_TOL: f64 = 1e-9;

/// Runs every check on a quasi-dynamic trace.
pub fn check_trace<T: Scalar>(trace: &EventTrace<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let f = |v: T| v.to_f64_lossy();
    let params = trace.params.map(|v| v.to_f64_lossy());
    let h = |r: &crate::model::EventRecord<T>| f(r.h);
    let mut push = |invariant, time: f64, detail: String| out.push(Violation { invariant, time, detail });

    for r in &trace.records {
        let s = &r.state;
        let t = f(r.time);
        if collapse_control(s.lights()).is_none() {
            push(Invariant::FeasibleLights, t, format!("{:?}", s.lights()));
        }
        let red = if s.u1 { 1 } else { 0 };
        if f(s.z[red]) != 0.0 {
            push(Invariant::ClockExclusivity, t, format!("z{} = {}", red + 1, f(s.z[red])));
        }
        if f(s.w[0]) * f(s.w[1]) != 0.0 {
            push(Invariant::WaitExclusivity, t, format!("w = {:?}", [f(s.w[0]), f(s.w[1])]));
        }
    }

    for pair in trace.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ta, tb) = (f(a.time), f(b.time));
        let dt = tb - ta;
        let lights = a.state.lights();

        if dt > 0.0 {
            // regions are constant between instants, so the midpoint decides
            let mid = |n: usize| match trace.mode {
                SimMode::Fluid => (a.state.x[n] + b.state.x[n]) * T::lit(0.5),
                SimMode::Discrete => a.state.x[n],
            };
            let (s1, s2) = (trace.params.threshold(1), trace.params.threshold(2));
            let region = classify_region(mid(0), mid(1), s1, s2);
            // fluid queues within the zero tolerance of a boundary are ambiguous
            let near = |x: f64, s: f64| x.abs() <= 2.0 * FLUID_TOL || (x - s).abs() <= FLUID_TOL * (1.0 + s);
            let ambiguous = trace.mode == SimMode::Fluid
                && (near(f(mid(0)), f(s1)) || near(f(mid(1)), f(s2)));
            if region != a.region_after && !ambiguous {
                push(
                    Invariant::RegionLabel,
                    ta,
                    format!("recorded {} on ({ta}, {tb}), queues give {region}", a.region_after),
                );
            }
            let g = if a.state.u1 { 0 } else { 1 };
            let dz = f(b.state.z[g]) - f(a.state.z[g]);
            if b.state.u1 == a.state.u1 && (dz - dt).abs() > 1e-9 * (1.0 + tb) {
                push(Invariant::ClockExclusivity, tb, format!("green clock moved {dz} over {dt}"));
            }
        }

        for n in 0..NUM_FLOWS {
            let (xa, xb) = (f(a.state.x[n]), f(b.state.x[n]));
            let expected = match trace.mode {
                SimMode::Fluid => {
                    let alpha = f(a.alpha[n]);
                    let slope = match (xa > FLUID_TOL, lights[n]) {
                        (_, false) => alpha,
                        (true, true) => alpha - h(a),
                        (false, true) => (alpha - h(a)).max(0.0),
                    };
                    xa + slope * dt
                }
                SimMode::Discrete => {
                    let delta = match b.kind {
                        EventKind::Arrival if b.flow as usize == n + 1 => 1.0,
                        EventKind::Departure if b.flow as usize == n + 1 => -1.0,
                        _ => 0.0,
                    };
                    xa + delta
                }
            };
            let tol = match trace.mode {
                SimMode::Fluid => 2.0 * FLUID_TOL * (1.0 + xa.abs()),
                SimMode::Discrete => 0.0,
            };
            if (xb - expected).abs() > tol || xb < 0.0 {
                push(Invariant::Conservation, tb, format!("x{} = {xb}, expected {expected}", n + 1));
            }
        }

        if b.kind == EventKind::GreenToRed {
            let road = b.flow as usize;
            let region = b.region_before;
            if matches!(region, Region::X3 | Region::X6) && (1..=2).contains(&road) {
                let z = f(a.state.z[road - 1]);
                if z < params.theta_min(road) - 1e-9 {
                    push(
                        Invariant::MinGreen,
                        tb,
                        format!("road {road} left green in {region} after {z} s"),
                    );
                }
            }
        }
    }
    out
}

/// Region membership straight from the inequalities: exactly one region
/// contains the point and [`classify_region`] returns it.
pub fn region_is_total(x1: f64, x2: f64, s1: f64, s2: f64) -> bool {
    let hits: Vec<Region> = Region::ALL.into_iter().filter(|r| r.contains(x1, x2, s1, s2)).collect();
    hits.len() == 1 && hits[0] == classify_region(x1, x2, s1, s2)
}
