//! Infinitesimal perturbation analysis of the mean queue length.
//!
//! The estimator walks a trace once. At every record it computes the event
//! time derivative `τ'` with respect to the ten parameters, propagates the
//! state derivatives `x'`, `z'`, `w'` across the event and integrates `x'`
//! between events. Between events all derivatives are constant, so the
//! integral of `x'` over a non-empty period is a finite sum.

use serde::{Deserialize, Serialize};

use crate::model::{EventKind, EventRecord, TieBreak, NUM_FLOWS, NUM_PARAMS};
use crate::scalar::Scalar;
use crate::sim::{estimate_arrival_rate, EventTrace, SimMode};

pub type Grad<T> = [T; NUM_PARAMS];

fn zero_grad<T: Scalar>() -> Grad<T> {
    [T::zero(); NUM_PARAMS]
}

/// Unit vector at the 1-based parameter index `i`.
fn unit<T: Scalar>(i: usize) -> Grad<T> {
    let mut e = zero_grad();
    e[i - 1] = T::one();
    e
}

fn idx_theta_min(road: usize) -> usize {
    2 * road - 1
}

fn idx_theta_max(road: usize) -> usize {
    2 * road
}

fn idx_theta_wait(flow: usize) -> usize {
    flow + 2
}

fn idx_threshold(flow: usize) -> usize {
    flow + 6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpaOptions<T> {
    /// Window `t_w` of the arrival-rate estimate used in discrete mode.
    pub rate_window: T,
    /// Integrate inner NEP segments with the derivative value right after
    /// the segment's closing event instead of the value valid on the
    /// segment. Kept for comparison only; the default is exact.
    pub literal_segments: bool,
    /// Denominators smaller than this give `τ' = 0`.
    pub degenerate_tol: T,
}

impl<T: Scalar> Default for IpaOptions<T> {
    fn default() -> Self {
        Self {
            rate_window: T::lit(60.0),
            literal_segments: false,
            degenerate_tol: T::lit(1e-6),
        }
    }
}

/// Inflow rates and departure rate seen by the estimator at one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate<T> {
    pub alpha_hat: [T; NUM_FLOWS],
    pub h: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeState<T> {
    /// `∂x_n/∂υ_i`, row per flow.
    pub x_prime: [Grad<T>; NUM_FLOWS],
    /// `∂z_n/∂υ_i`, roads 1 and 2.
    pub z_prime: [Grad<T>; 2],
    /// `∂w_n/∂υ_i`, flows 3 and 4.
    pub w_prime: [Grad<T>; 2],
    /// `τ'` of the most recent light switch.
    pub last_switch_tau_prime: Grad<T>,
}

impl<T: Scalar> Default for DerivativeState<T> {
    fn default() -> Self {
        Self {
            x_prime: [zero_grad(); NUM_FLOWS],
            z_prime: [zero_grad(); 2],
            w_prime: [zero_grad(); 2],
            last_switch_tau_prime: zero_grad(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauPrime<T> {
    pub value: Grad<T>,
    /// The applicable denominator was below tolerance and `τ'` was zeroed.
    pub degenerate: bool,
}

/// Slope of `x_n` just before an endogenous queue event.
fn pre_event_slope<T: Scalar>(rec: &EventRecord<T>, n: usize, rates: &RateEstimate<T>) -> T {
    let a = rates.alpha_hat[n - 1];
    if rec.state.green(n) {
        a - rates.h
    } else {
        a
    }
}

/// `τ'` of one record.
///
/// `inherited` is the `τ'` of the record named in `rec.cause`; it is used by
/// light switches and by compound events, which occur at the time of the
/// event that triggered them.
pub fn event_time_derivative<T: Scalar>(
    rec: &EventRecord<T>,
    d: &DerivativeState<T>,
    rates: &RateEstimate<T>,
    inherited: Option<&Grad<T>>,
    tol: T,
) -> TauPrime<T> {
    let n = rec.flow as usize;
    let mut out = TauPrime { value: zero_grad(), degenerate: false };
    let mut guard = |num: Grad<T>, den: T| {
        if den.abs() < tol {
            out.degenerate = true;
        } else {
            out.value = num.map(|v| v / den);
        }
    };
    match rec.kind {
        EventKind::QueueNonEmpty
        | EventKind::PedestrianEnabled
        | EventKind::PedestrianCleared
        | EventKind::GreenToRed => {
            if let Some(t) = inherited {
                out.value = *t;
            }
        }
        EventKind::QueueEmptied => match inherited {
            Some(t) => out.value = *t,
            None => guard(d.x_prime[n - 1].map(|v| -v), pre_event_slope(rec, n, rates)),
        },
        EventKind::QueueDownThreshold | EventKind::QueueUpThreshold => {
            let e = unit::<T>(idx_threshold(n));
            let num = std::array::from_fn(|i| e[i] - d.x_prime[n - 1][i]);
            guard(num, pre_event_slope(rec, n, rates));
        }
        EventKind::GreenMin | EventKind::GreenMax => {
            let i0 = if rec.kind == EventKind::GreenMin {
                idx_theta_min(n)
            } else {
                idx_theta_max(n)
            };
            let e = unit::<T>(i0);
            out.value = std::array::from_fn(|i| e[i] - d.z_prime[n - 1][i]);
        }
        EventKind::WaitThreshold => {
            let e = unit::<T>(idx_theta_wait(n));
            out.value = std::array::from_fn(|i| e[i] - d.w_prime[n - 3][i]);
        }
        EventKind::Start
        | EventKind::RateZero
        | EventKind::RatePositive
        | EventKind::RateChange
        | EventKind::Arrival
        | EventKind::PassThrough
        | EventKind::Departure
        | EventKind::ParameterUpdate
        | EventKind::Horizon => {}
    }
    out
}

/// Gradient report of one estimator pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport<T> {
    pub grad: Grad<T>,
    #[serde(rename = "L")]
    pub cost: T,
    pub degenerate_count: usize,
    pub events_processed: usize,
}

/// Running integrals over the current window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostAccumulator<T> {
    pub window_start: T,
    pub last_time: T,
    /// Start of each open non-empty period.
    pub nep_start: [Option<T>; NUM_FLOWS],
    /// Time of the last event of each flow inside its open NEP.
    pub last_event: [T; NUM_FLOWS],
    /// `∫ x'_n dt` per flow.
    pub integral: [Grad<T>; NUM_FLOWS],
    /// Difference between the literal segment rule and the exact integral.
    pub literal_correction: [Grad<T>; NUM_FLOWS],
    /// `∫ x_n dt` per flow.
    pub area: [T; NUM_FLOWS],
}

impl<T: Scalar> CostAccumulator<T> {
    fn new(t: T) -> Self {
        Self {
            window_start: t,
            last_time: t,
            nep_start: [None; NUM_FLOWS],
            last_event: [t; NUM_FLOWS],
            integral: [zero_grad(); NUM_FLOWS],
            literal_correction: [zero_grad(); NUM_FLOWS],
            area: [T::zero(); NUM_FLOWS],
        }
    }
}

/// Streaming IPA estimator fed one record at a time.
#[derive(Debug, Clone)]
pub struct IpaEstimator<T: Scalar> {
    mode: SimMode,
    weights: [T; NUM_FLOWS],
    opts: IpaOptions<T>,
    d: DerivativeState<T>,
    acc: CostAccumulator<T>,
    /// Which queues the estimator treats as inside a non-empty period.
    open: [bool; NUM_FLOWS],
    arrivals: [Vec<T>; NUM_FLOWS],
    /// `τ'` of the records of the current instant, by `seq`.
    instant: Vec<(u32, Grad<T>)>,
    instant_time: T,
    last_x: [T; NUM_FLOWS],
    degenerate: usize,
    events: usize,
}

impl<T: Scalar> IpaEstimator<T> {
    pub fn new(mode: SimMode, weights: [T; NUM_FLOWS], opts: IpaOptions<T>) -> Self {
        Self {
            mode,
            weights,
            opts,
            d: DerivativeState::default(),
            acc: CostAccumulator::new(T::zero()),
            open: [false; NUM_FLOWS],
            arrivals: Default::default(),
            instant: Vec::new(),
            instant_time: T::neg_infinity(),
            last_x: [T::zero(); NUM_FLOWS],
            degenerate: 0,
            events: 0,
        }
    }

    pub fn derivatives(&self) -> &DerivativeState<T> {
        &self.d
    }

    pub fn accumulator(&self) -> &CostAccumulator<T> {
        &self.acc
    }

    fn rates(&self, rec: &EventRecord<T>) -> RateEstimate<T> {
        let alpha_hat = match self.mode {
            SimMode::Fluid => rec.alpha,
            SimMode::Discrete => std::array::from_fn(|n| {
                estimate_arrival_rate(&self.arrivals[n], rec.time, self.opts.rate_window)
            }),
        };
        RateEstimate { alpha_hat, h: rec.h }
    }

    fn integrate_to(&mut self, t: T) {
        let dt = t - self.acc.last_time;
        if dt > T::zero() {
            for n in 0..NUM_FLOWS {
                for i in 0..NUM_PARAMS {
                    self.acc.integral[n][i] = self.acc.integral[n][i] + self.d.x_prime[n][i] * dt;
                }
            }
            self.acc.last_time = t;
        }
    }

    fn integrate_area(&mut self, rec: &EventRecord<T>) {
        let dt = rec.time - self.acc.last_time;
        for n in 0..NUM_FLOWS {
            if dt > T::zero() {
                let a = match self.mode {
                    SimMode::Fluid => (self.last_x[n] + rec.state.x[n]) * T::lit(0.5) * dt,
                    SimMode::Discrete => self.last_x[n] * dt,
                };
                self.acc.area[n] = self.acc.area[n] + a;
            }
            self.last_x[n] = rec.state.x[n];
        }
    }

    fn open_nep(&mut self, n: usize, t: T) {
        self.open[n - 1] = true;
        self.acc.nep_start[n - 1] = Some(t);
        self.acc.last_event[n - 1] = t;
    }

    fn close_nep(&mut self, n: usize) {
        self.open[n - 1] = false;
        self.acc.nep_start[n - 1] = None;
        self.d.x_prime[n - 1] = zero_grad();
    }

    /// Feeds the next record of the trace.
    pub fn observe(&mut self, rec: &EventRecord<T>) {
        self.events += 1;
        if rec.kind == EventKind::Start {
            self.restart(rec);
            return;
        }
        self.integrate_area(rec);
        self.integrate_to(rec.time);
        if rec.time != self.instant_time {
            self.instant.clear();
            self.instant_time = rec.time;
        }

        let rates = self.rates(rec);
        let inherited = rec.cause.and_then(|c| self.lookup(c));
        let tau = match rec.tie.as_deref() {
            Some(tie) if rec.kind == EventKind::GreenToRed => TauPrime {
                value: self.tied_switch(tie).unwrap_or_else(|| inherited.unwrap_or_else(zero_grad)),
                degenerate: false,
            },
            _ => event_time_derivative(rec, &self.d, &rates, inherited.as_ref(), self.opts.degenerate_tol),
        };
        if tau.degenerate {
            self.degenerate += 1;
        }
        let before = self.d.x_prime;
        let was_open = self.open;
        self.update_state_derivatives(rec, &tau.value, &rates);
        if self.opts.literal_segments {
            self.literal_segments(rec, &before, &was_open);
        }
        self.instant.push((rec.seq, tau.value));

        if matches!(rec.kind, EventKind::Arrival | EventKind::PassThrough) {
            self.arrivals[rec.flow as usize - 1].push(rec.time);
        }
    }

    fn lookup(&self, seq: u32) -> Option<Grad<T>> {
        self.instant.iter().rev().find(|(s, _)| *s == seq).map(|(_, g)| *g)
    }

    /// `τ'` of a switch whose trigger depends on the order of coinciding
    /// events: per parameter, the mean of the two one-sided derivatives,
    /// each taking the trigger that the order of the perturbed times selects.
    fn tied_switch(&self, tie: &TieBreak) -> Option<Grad<T>> {
        let cands: Vec<Grad<T>> = tie.candidates.iter().map(|&c| self.lookup(c)).collect::<Option<_>>()?;
        let half = T::lit(0.5);
        let mut value = zero_grad();
        for i in 0..NUM_PARAMS {
            for sign in [T::one(), -T::one()] {
                let mut order: Vec<u8> = (0..cands.len() as u8).collect();
                order.sort_by(|&a, &b| {
                    (sign * cands[a as usize][i])
                        .partial_cmp(&(sign * cands[b as usize][i]))
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let t = tie.trigger_for(&order)?;
                value[i] = value[i] + half * cands[t][i];
            }
        }
        Some(value)
    }

    /// Propagates `x'`, `z'`, `w'` across `rec` given its `τ'`.
    fn update_state_derivatives(&mut self, rec: &EventRecord<T>, tau: &Grad<T>, rates: &RateEstimate<T>) {
        let n = rec.flow as usize;
        match rec.kind {
            EventKind::QueueEmptied => self.close_nep(n),
            EventKind::QueueNonEmpty => {
                if !self.open[n - 1] {
                    self.open_nep(n, rec.time);
                    // switch-induced starts inherit τ' of the switch, the
                    // queue picks up slope α at that instant
                    let a = rates.alpha_hat[n - 1];
                    self.d.x_prime[n - 1] = tau.map(|v| -a * v);
                }
            }
            EventKind::GreenToRed => self.apply_switch(rec, tau, rates),
            _ => {}
        }
    }

    fn apply_switch(&mut self, rec: &EventRecord<T>, tau: &Grad<T>, rates: &RateEstimate<T>) {
        let now = rec.state.lights();
        for n in 1..=NUM_FLOWS {
            let i = n - 1;
            let x = rec.state.x[i];
            let a = rates.alpha_hat[i];
            let h = rates.h;
            if now[i] {
                // red to green
                if self.open[i] {
                    if self.mode == SimMode::Discrete && x <= T::zero() {
                        self.close_nep(n);
                    } else {
                        self.d.x_prime[i] = std::array::from_fn(|k| self.d.x_prime[i][k] + h * tau[k]);
                    }
                }
            } else if self.open[i] {
                self.d.x_prime[i] = std::array::from_fn(|k| self.d.x_prime[i][k] - h * tau[k]);
            } else if self.mode == SimMode::Discrete && a > T::zero() {
                // in the fluid view an empty queue facing red starts filling at the switch
                self.open_nep(n, rec.time);
                self.d.x_prime[i] = tau.map(|v| -a * v);
            }
        }
        let green = rec.state.green_road();
        self.d.z_prime[green - 1] = tau.map(|v| -v);
        self.d.z_prime[2 - green] = zero_grad();
        for n in 3..=4 {
            let i = n - 1;
            self.d.w_prime[n - 3] = if now[i] {
                zero_grad()
            } else {
                let starts = rec.state.x[i] > T::zero()
                    || (self.mode == SimMode::Fluid && rates.alpha_hat[i] > T::zero());
                if starts {
                    tau.map(|v| -v)
                } else {
                    zero_grad()
                }
            };
        }
        self.d.last_switch_tau_prime = *tau;
    }

    fn literal_segments(&mut self, rec: &EventRecord<T>, before: &[Grad<T>; NUM_FLOWS], was_open: &[bool; NUM_FLOWS]) {
        let queue_kind = matches!(
            rec.kind,
            EventKind::QueueUpThreshold
                | EventKind::QueueDownThreshold
                | EventKind::RateZero
                | EventKind::RatePositive
                | EventKind::RateChange
                | EventKind::Arrival
                | EventKind::Departure
        );
        for n in 1..=NUM_FLOWS {
            let i = n - 1;
            let related = rec.kind == EventKind::GreenToRed || (queue_kind && rec.flow as usize == n);
            if !related || !was_open[i] || !self.open[i] {
                continue;
            }
            let seg = rec.time - self.acc.last_event[i];
            for k in 0..NUM_PARAMS {
                let delta = self.d.x_prime[i][k] - before[i][k];
                self.acc.literal_correction[i][k] = self.acc.literal_correction[i][k] + delta * seg;
            }
            self.acc.last_event[i] = rec.time;
        }
    }

    /// Starts a fresh window at the state carried by `rec`. Derivatives are
    /// zeroed: the window's initial state does not depend on the
    /// parameters in force during the window.
    fn restart(&mut self, rec: &EventRecord<T>) {
        self.d = DerivativeState::default();
        self.acc = CostAccumulator::new(rec.time);
        self.instant.clear();
        self.instant.push((rec.seq, zero_grad()));
        self.instant_time = rec.time;
        self.last_x = rec.state.x;
        for n in 1..=NUM_FLOWS {
            self.open[n - 1] = false;
            if rec.state.x[n - 1] > T::zero() {
                self.open_nep(n, rec.time);
            }
        }
    }

    /// Closes the current window at `rec` (typically a `Horizon` or the
    /// record preceding a parameter update) and starts a new one there.
    pub fn reset_window(&mut self, rec: &EventRecord<T>) {
        let mut start = rec.clone();
        start.kind = EventKind::Start;
        self.restart(&start);
    }

    /// Gradient and cost of the current window, closed at the time of the
    /// last observed record.
    pub fn report(&self) -> GradientReport<T> {
        let span = self.acc.last_time - self.acc.window_start;
        let mut grad = zero_grad();
        let mut cost = T::zero();
        if span > T::zero() {
            for n in 0..NUM_FLOWS {
                for k in 0..NUM_PARAMS {
                    let mut v = self.acc.integral[n][k];
                    if self.opts.literal_segments {
                        v = v + self.acc.literal_correction[n][k];
                    }
                    grad[k] = grad[k] + self.weights[n] * v;
                }
                cost = cost + self.weights[n] * self.acc.area[n];
            }
            grad = grad.map(|g| g / span);
            cost = cost / span;
        }
        GradientReport {
            grad,
            cost,
            degenerate_count: self.degenerate,
            events_processed: self.events,
        }
    }
}

/// IPA estimate of `dL/dυ` over a complete trace.
pub fn ipa_gradient<T: Scalar>(trace: &EventTrace<T>, weights: &[T; NUM_FLOWS], rate_window: T) -> GradientReport<T> {
    let opts = IpaOptions { rate_window, ..IpaOptions::default() };
    ipa_gradient_with(trace, weights, opts)
}

pub fn ipa_gradient_with<T: Scalar>(
    trace: &EventTrace<T>,
    weights: &[T; NUM_FLOWS],
    opts: IpaOptions<T>,
) -> GradientReport<T> {
    let mut est = IpaEstimator::new(trace.mode, *weights, opts);
    for rec in &trace.records {
        est.observe(rec);
    }
    est.report()
}
