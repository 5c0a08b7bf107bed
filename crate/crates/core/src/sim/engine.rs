use std::collections::VecDeque;

use super::trace::collect_neps;
use super::{
    advance_with, flow_slopes, next_event, EventTrace, PendingEvent, PendingKind, Policy, Rates, SimConfig,
    SimDiagnostics, SimError, SimMode, ThresholdFlags,
};
use crate::arrivals::{ArrivalProcessSpec, FluidRatePath, PoissonArrivals};
use crate::controller::control_decision;
use crate::model::{
    light_vector, EventKind, EventRecord, HybridState, ParameterVector, PedestrianIndicator, QueueLevel, Region,
    TieBreak, NUM_FLOWS,
};
use crate::scalar::Scalar;

/// Windowed arrival-rate estimate `N_a / min(t_w, τ)`, where `N_a` counts
/// the entries of the sorted `arrivals` lying in `[τ − t_w, τ)`.
pub fn estimate_arrival_rate<T: Scalar>(arrivals: &[T], tau: T, window: T) -> T {
    let span = window.min(tau);
    if span <= T::zero() {
        return T::zero();
    }
    let lo = arrivals.partition_point(|&a| a < tau - window);
    let hi = arrivals.partition_point(|&a| a < tau);
    T::from_usize(hi - lo).unwrap_or_else(T::zero) / span
}

/// Largest number of coinciding primitives for which all processing
/// orders are explored.
const MAX_TIE: usize = 4;

fn permutations(m: usize) -> Vec<Vec<u8>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(m - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, (m - 1) as u8);
            out.push(p);
        }
    }
    out
}

/// Unsignalised junction shared first come first served by both roads.
#[derive(Debug, Clone)]
struct Junction<T> {
    /// Road of each queued vehicle, in arrival order.
    order: VecDeque<usize>,
    last_time: T,
    /// Road of the last vehicle that entered, 0 before the first.
    last_road: usize,
    planned: Option<(usize, T)>,
}

/// A running sample path.
///
/// The simulation owns the exogenous random streams, so it can be advanced
/// window by window with parameter updates in between while the arrival
/// realisation stays fixed by the seed.
#[derive(Debug, Clone)]
pub struct Simulation<T: Scalar> {
    spec: ArrivalProcessSpec,
    cfg: SimConfig<T>,
    policy: Policy,
    params: ParameterVector<T>,
    state: HybridState<T>,
    flags: ThresholdFlags,
    alpha: [T; NUM_FLOWS],
    fluid: Vec<FluidRatePath>,
    next_rate_change: [T; NUM_FLOWS],
    poisson: Vec<PoissonArrivals>,
    next_departure: [Option<T>; NUM_FLOWS],
    last_departure: [T; NUM_FLOWS],
    arrivals: [Vec<T>; NUM_FLOWS],
    junction: Junction<T>,
    area: [T; NUM_FLOWS],
    diag: SimDiagnostics,
    seq: u32,
    instant: T,
    started: bool,
    tie: Option<Box<TieBreak>>,
}

impl<T: Scalar> Simulation<T> {
    pub fn new(
        spec: &ArrivalProcessSpec,
        params: ParameterVector<T>,
        cfg: SimConfig<T>,
        policy: Policy,
    ) -> Result<Self, SimError> {
        spec.validate().map_err(SimError::InvalidSpec)?;
        if policy == Policy::Baseline && spec.mode != SimMode::Discrete {
            return Err(SimError::BaselineNeedsDiscrete);
        }
        let (fluid, poisson) = match spec.mode {
            SimMode::Fluid => ((1..=NUM_FLOWS).map(|n| spec.fluid_path(n)).collect(), Vec::new()),
            SimMode::Discrete => (Vec::new(), (1..=NUM_FLOWS).map(|n| spec.poisson_stream(n)).collect()),
        };
        let mut sim = Self {
            spec: spec.clone(),
            cfg,
            policy,
            params,
            state: HybridState::initial(),
            flags: ThresholdFlags::default(),
            alpha: [T::zero(); NUM_FLOWS],
            fluid,
            next_rate_change: [T::infinity(); NUM_FLOWS],
            poisson,
            next_departure: [None; NUM_FLOWS],
            last_departure: [T::neg_infinity(); NUM_FLOWS],
            arrivals: Default::default(),
            junction: Junction {
                order: VecDeque::new(),
                last_time: T::neg_infinity(),
                last_road: 0,
                planned: None,
            },
            area: [T::zero(); NUM_FLOWS],
            diag: SimDiagnostics::default(),
            seq: 0,
            instant: T::neg_infinity(),
            started: false,
            tie: None,
        };
        if spec.mode == SimMode::Fluid {
            for n in 0..NUM_FLOWS {
                sim.alpha[n] = T::lit(sim.fluid[n].rate(0.0));
                sim.next_rate_change[n] = T::lit(sim.fluid[n].next_change(0.0));
            }
        }
        Ok(sim)
    }

    pub fn state(&self) -> &HybridState<T> {
        &self.state
    }

    pub fn params(&self) -> &ParameterVector<T> {
        &self.params
    }

    pub fn mode(&self) -> SimMode {
        self.spec.mode
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.cfg
    }

    pub fn diagnostics(&self) -> SimDiagnostics {
        self.diag
    }

    /// Unweighted `∫ x_n dt` per flow accumulated since the last call.
    pub fn take_area(&mut self) -> [T; NUM_FLOWS] {
        std::mem::replace(&mut self.area, [T::zero(); NUM_FLOWS])
    }

    pub fn region(&self) -> Region {
        let level = |n: usize| {
            if !self.flags.occupied[n - 1] {
                QueueLevel::Empty
            } else if self.flags.above[n - 1] {
                QueueLevel::High
            } else {
                QueueLevel::Low
            }
        };
        Region::from_levels(level(1), level(2))
    }

    pub fn pedestrian(&self) -> PedestrianIndicator {
        [
            self.flags.above[2] || self.flags.wait_reached[0],
            self.flags.above[3] || self.flags.wait_reached[1],
        ]
    }

    fn rates(&self) -> Rates<T> {
        Rates { alpha: self.alpha, h: self.cfg.h }
    }

    fn service_gap(&self) -> T {
        T::one() / self.cfg.h
    }

    fn recorded_alpha(&self) -> [T; NUM_FLOWS] {
        match self.spec.mode {
            SimMode::Fluid => self.alpha,
            SimMode::Discrete => std::array::from_fn(|n| {
                estimate_arrival_rate(&self.arrivals[n], self.state.t, self.cfg.rate_window)
            }),
        }
    }

    fn emit<F: FnMut(&EventRecord<T>)>(
        &mut self,
        kind: EventKind,
        flow: usize,
        cause: Option<u32>,
        before: (Region, PedestrianIndicator),
        sink: &mut F,
    ) -> u32 {
        if self.state.t != self.instant {
            self.instant = self.state.t;
            self.seq = 0;
        }
        let seq = self.seq;
        self.seq += 1;
        self.diag.events += 1;
        let rec = EventRecord {
            time: self.state.t,
            seq,
            kind,
            flow: flow as u8,
            cause,
            alpha: self.recorded_alpha(),
            h: self.cfg.h,
            region_before: before.0,
            region_after: self.region(),
            p_before: before.1,
            p_after: self.pedestrian(),
            state: self.state,
            tie: self.tie.take(),
        };
        sink(&rec);
        seq
    }

    fn labels(&self) -> (Region, PedestrianIndicator) {
        (self.region(), self.pedestrian())
    }

    fn wants_switch(&self) -> bool {
        self.policy == Policy::QuasiDynamic
            && control_decision(self.region(), self.pedestrian(), self.state.z, &self.params, self.state.u1).switch_now
    }

    /// Emits the `Start` record and takes the initial control decision.
    pub fn start<F: FnMut(&EventRecord<T>)>(&mut self, sink: &mut F) {
        if self.started {
            return;
        }
        self.started = true;
        let before = self.labels();
        let seq = self.emit(EventKind::Start, 0, None, before, sink);
        if self.spec.mode == SimMode::Fluid {
            self.fluid_occupancy(Some(seq), sink);
        }
        self.settle_control(Some(seq), sink);
    }

    /// Replaces the control parameters at the current instant and
    /// re-evaluates the control law.
    pub fn set_params<F: FnMut(&EventRecord<T>)>(&mut self, params: ParameterVector<T>, sink: &mut F) {
        self.params = params;
        let before = self.labels();
        let fresh = ThresholdFlags::from_state(&self.state, &self.params);
        self.flags.above = std::array::from_fn(|i| self.flags.occupied[i] && fresh.above[i]);
        self.flags.wait_reached = fresh.wait_reached;
        let seq = self.emit(EventKind::ParameterUpdate, 0, None, before, sink);
        self.settle_control(Some(seq), sink);
    }

    /// Switches the light if the control law asks for it at this instant.
    fn settle_control<F: FnMut(&EventRecord<T>)>(&mut self, cause: Option<u32>, sink: &mut F) {
        if self.wants_switch() {
            self.switch(cause, sink);
        }
    }

    /// Simulates up to `t_end` and closes with a `Horizon` record there.
    /// Events due exactly at `t_end` are left for the next call.
    pub fn run_until<F: FnMut(&EventRecord<T>)>(&mut self, t_end: T, sink: &mut F) -> Result<(), SimError> {
        self.start(sink);
        loop {
            if self.diag.events > self.cfg.max_events {
                return Err(SimError::NonConvergence {
                    limit: self.cfg.max_events,
                    horizon: t_end.to_f64_lossy(),
                    t: self.state.t.to_f64_lossy(),
                });
            }
            let cands = self.candidates();
            let t_next = cands.iter().map(|c| c.0).fold(T::infinity(), T::min);
            if t_next >= t_end {
                self.advance_to(t_end)?;
                let before = self.labels();
                self.emit(EventKind::Horizon, 0, None, before, sink);
                return Ok(());
            }
            self.advance_to(t_next)?;
            let mut due: Vec<PendingEvent> = cands
                .into_iter()
                .filter(|c| c.0 <= t_next + T::time_tol())
                .map(|c| c.1)
                .collect();
            due.sort();
            due.dedup();
            match self.policy {
                Policy::QuasiDynamic => self.controlled_instant(&due, sink),
                Policy::Baseline => self.baseline_instant(&due, sink),
            }
        }
    }

    fn candidates(&self) -> Vec<(T, PendingEvent)> {
        let t = self.state.t;
        let mut out = Vec::with_capacity(12);
        if self.policy == Policy::QuasiDynamic {
            if let Some((dt, due)) = next_event(&self.state, &self.rates(), &self.params, &self.flags, self.spec.mode) {
                out.extend(due.into_iter().map(|e| (t + dt, e)));
            }
        }
        for n in 1..=NUM_FLOWS {
            match self.spec.mode {
                SimMode::Fluid => {
                    out.push((self.next_rate_change[n - 1], PendingEvent::new(PendingKind::RateChange, n)));
                }
                SimMode::Discrete => {
                    out.push((T::lit(self.poisson[n - 1].peek()), PendingEvent::new(PendingKind::Arrival, n)));
                    if let Some(d) = self.next_departure[n - 1] {
                        out.push((d, PendingEvent::new(PendingKind::Departure, n)));
                    }
                }
            }
        }
        if let Some((road, at)) = self.junction.planned {
            out.push((at, PendingEvent::new(PendingKind::Departure, road)));
        }
        out
    }

    fn advance_to(&mut self, t: T) -> Result<(), SimError> {
        let dt = t - self.state.t;
        if dt <= T::zero() {
            return Ok(());
        }
        let slopes = match self.spec.mode {
            SimMode::Fluid => flow_slopes(&self.state, &self.rates(), &self.flags.occupied),
            SimMode::Discrete => [T::zero(); NUM_FLOWS],
        };
        let next = advance_with(&self.state, dt, &slopes, &self.flags.occupied, self.spec.mode)?;
        let half = T::lit(0.5);
        for n in 0..NUM_FLOWS {
            let a = match self.spec.mode {
                SimMode::Fluid => (self.state.x[n] + next.x[n]) * half * dt,
                SimMode::Discrete => self.state.x[n] * dt,
            };
            self.area[n] = self.area[n] + a;
        }
        self.state = next;
        self.state.t = t;
        Ok(())
    }

    fn controlled_instant<F: FnMut(&EventRecord<T>)>(&mut self, due: &[PendingEvent], sink: &mut F) {
        let snapshot = (due.len() >= 2).then(|| self.clone());
        let p_start = self.pedestrian();
        let mut p_cause: [Option<u32>; 2] = [None, None];
        let mut switching = self.wants_switch();
        let mut trigger: Option<u32> = None;
        let mut applied: Vec<(PendingEvent, u32)> = Vec::with_capacity(due.len());

        for ev in due {
            let p_before = self.pedestrian();
            let Some(last) = self.apply_primitive(*ev, sink) else {
                continue;
            };
            applied.push((*ev, last));
            let p_now = self.pedestrian();
            for k in 0..2 {
                if p_now[k] != p_before[k] {
                    p_cause[k] = Some(last);
                }
            }
            let now = self.wants_switch();
            if now && !switching {
                trigger = Some(last);
            }
            switching = now;
        }

        let p_end = self.pedestrian();
        for k in 0..2 {
            if p_end[k] != p_start[k] {
                let before = (self.region(), {
                    let mut p = p_end;
                    p[k] = p_start[k];
                    p
                });
                let kind = if p_end[k] {
                    EventKind::PedestrianEnabled
                } else {
                    EventKind::PedestrianCleared
                };
                self.emit(kind, k + 1, p_cause[k], before, sink);
            }
        }

        if switching {
            if let Some(snap) = snapshot.filter(|_| (2..=MAX_TIE).contains(&applied.len())) {
                let prims: Vec<PendingEvent> = applied.iter().map(|a| a.0).collect();
                self.tie = Some(Box::new(TieBreak {
                    candidates: applied.iter().map(|a| a.1).collect(),
                    triggers: snap.trigger_table(&prims),
                }));
            }
            self.switch(trigger.or(applied.first().map(|a| a.1)), sink);
        }
    }

    /// For every order of `prims`, the index of the primitive after which
    /// the control law starts asking for a switch.
    fn trigger_table(&self, prims: &[PendingEvent]) -> Vec<(Vec<u8>, u8)> {
        permutations(prims.len())
            .into_iter()
            .map(|order| {
                let mut sim = self.clone();
                let mut switching = sim.wants_switch();
                let mut trigger = order[0];
                for &k in &order {
                    sim.apply_primitive(prims[k as usize], &mut |_: &EventRecord<T>| {});
                    let now = sim.wants_switch();
                    if now && !switching {
                        trigger = k;
                    }
                    switching = now;
                }
                (order, trigger)
            })
            .collect()
    }

    /// Applies one guard crossing or exogenous input and returns the `seq`
    /// of the last record it produced.
    fn apply_primitive<F: FnMut(&EventRecord<T>)>(&mut self, ev: PendingEvent, sink: &mut F) -> Option<u32> {
        let n = ev.flow as usize;
        let i = n.saturating_sub(1);
        let before = self.labels();
        match ev.kind {
            PendingKind::RateChange => {
                let t = self.state.t.to_f64_lossy();
                let path = &mut self.fluid[i];
                path.advance_to(t);
                let new = T::lit(path.rate(t));
                self.next_rate_change[i] = T::lit(path.next_change(t));
                let old = self.alpha[i];
                self.alpha[i] = new;
                let kind = if old > T::zero() && new == T::zero() {
                    EventKind::RateZero
                } else if old == T::zero() && new > T::zero() {
                    EventKind::RatePositive
                } else {
                    EventKind::RateChange
                };
                let seq = self.emit(kind, n, None, before, sink);
                Some(self.fluid_occupancy(Some(seq), sink).unwrap_or(seq))
            }
            PendingKind::Arrival => Some(self.discrete_arrival(n, sink)),
            PendingKind::Departure => Some(self.discrete_departure(n, sink)),
            PendingKind::QueueEmptied => {
                if !self.flags.occupied[i] {
                    return None;
                }
                self.state.x[i] = T::zero();
                self.flags.occupied[i] = false;
                self.flags.above[i] = false;
                Some(self.emit(EventKind::QueueEmptied, n, None, before, sink))
            }
            PendingKind::QueueDownThreshold => {
                if !self.flags.above[i] {
                    return None;
                }
                self.state.x[i] = self.params.threshold(n);
                self.flags.above[i] = false;
                Some(self.emit(EventKind::QueueDownThreshold, n, None, before, sink))
            }
            PendingKind::QueueUpThreshold => {
                if self.flags.above[i] {
                    return None;
                }
                self.state.x[i] = self.params.threshold(n);
                self.flags.above[i] = true;
                Some(self.emit(EventKind::QueueUpThreshold, n, None, before, sink))
            }
            PendingKind::GreenMin => {
                self.state.z[i] = self.params.theta_min(n);
                Some(self.emit(EventKind::GreenMin, n, None, before, sink))
            }
            PendingKind::GreenMax => {
                self.state.z[i] = self.params.theta_max(n);
                Some(self.emit(EventKind::GreenMax, n, None, before, sink))
            }
            PendingKind::WaitThreshold => {
                self.state.w[n - 3] = self.params.theta_wait(n);
                self.flags.wait_reached[n - 3] = true;
                Some(self.emit(EventKind::WaitThreshold, n, None, before, sink))
            }
        }
    }

    /// Fluid queues that start or stop being occupied because their slope
    /// changed at this instant without a guard crossing.
    fn fluid_occupancy<F: FnMut(&EventRecord<T>)>(&mut self, cause: Option<u32>, sink: &mut F) -> Option<u32> {
        let mut last = None;
        let lights = self.state.lights();
        for n in 1..=NUM_FLOWS {
            let i = n - 1;
            let a = self.alpha[i];
            let before = self.labels();
            if !self.flags.occupied[i] {
                let grows = if lights[i] { a > self.cfg.h } else { a > T::zero() };
                if grows {
                    self.flags.occupied[i] = true;
                    self.flags.above[i] = self.state.x[i] >= self.params.threshold(n);
                    last = Some(self.emit(EventKind::QueueNonEmpty, n, cause, before, sink));
                }
            } else if lights[i] && self.state.x[i] <= T::zero_tol() && a <= self.cfg.h {
                self.state.x[i] = T::zero();
                self.flags.occupied[i] = false;
                self.flags.above[i] = false;
                last = Some(self.emit(EventKind::QueueEmptied, n, cause, before, sink));
            }
        }
        last
    }

    fn discrete_arrival<F: FnMut(&EventRecord<T>)>(&mut self, n: usize, sink: &mut F) -> u32 {
        let i = n - 1;
        let t = T::lit(self.poisson[i].pop());
        debug_assert!((t - self.state.t).abs() <= T::time_tol());
        let before = self.labels();
        let gap = self.service_gap();

        if self.policy == Policy::Baseline && n <= 2 {
            let halted = self.state.x[n + 1] > T::zero();
            let ahead = self.junction.order.iter().any(|&r| self.state.x[r + 1] <= T::zero());
            let ready = self.state.t >= self.junction.last_time + self.headway(self.junction.last_road, n) - T::time_tol();
            self.arrivals[i].push(self.state.t);
            if !halted && !ahead && ready {
                self.junction.last_time = self.state.t;
                self.junction.last_road = n;
                return self.emit(EventKind::PassThrough, n, None, before, sink);
            }
            self.junction.order.push_back(n);
            return self.join_queue(n, before, sink);
        }

        let green = match self.policy {
            Policy::QuasiDynamic => self.state.green(n),
            // pedestrians have right of way but still queue to cross
            Policy::Baseline => false,
        };
        if green && self.state.x[i] <= T::zero() && self.state.t >= self.last_departure[i] + gap - T::time_tol() {
            self.last_departure[i] = self.state.t;
            self.arrivals[i].push(self.state.t);
            return self.emit(EventKind::PassThrough, n, None, before, sink);
        }
        self.arrivals[i].push(self.state.t);
        let serving = green || self.policy == Policy::Baseline;
        if serving && self.next_departure[i].is_none() {
            let earliest = if self.policy == Policy::Baseline {
                self.state.t + gap
            } else {
                (self.last_departure[i] + gap).max(self.state.t)
            };
            self.next_departure[i] = Some(earliest);
        }
        self.join_queue(n, before, sink)
    }

    fn join_queue<F: FnMut(&EventRecord<T>)>(
        &mut self,
        n: usize,
        before: (Region, PedestrianIndicator),
        sink: &mut F,
    ) -> u32 {
        let i = n - 1;
        self.state.x[i] = self.state.x[i] + T::one();
        let mut seq = self.emit(EventKind::Arrival, n, None, before, sink);
        if !self.flags.occupied[i] {
            let before = self.labels();
            self.flags.occupied[i] = true;
            seq = self.emit(EventKind::QueueNonEmpty, n, None, before, sink);
        }
        if !self.flags.above[i] && self.state.x[i] >= self.params.threshold(n) {
            let before = self.labels();
            self.flags.above[i] = true;
            seq = self.emit(EventKind::QueueUpThreshold, n, None, before, sink);
        }
        seq
    }

    fn discrete_departure<F: FnMut(&EventRecord<T>)>(&mut self, n: usize, sink: &mut F) -> u32 {
        let i = n - 1;
        let before = self.labels();
        if self.policy == Policy::Baseline && n <= 2 {
            self.junction.planned = None;
            if let Some(pos) = self.junction.order.iter().position(|&r| r == n) {
                self.junction.order.remove(pos);
            }
            self.junction.last_time = self.state.t;
            self.junction.last_road = n;
        } else {
            self.last_departure[i] = self.state.t;
            self.next_departure[i] = None;
        }
        self.state.x[i] = (self.state.x[i] - T::one()).max(T::zero());
        let mut seq = self.emit(EventKind::Departure, n, None, before, sink);
        if self.flags.above[i] && self.state.x[i] < self.params.threshold(n) {
            let before = self.labels();
            self.flags.above[i] = false;
            seq = self.emit(EventKind::QueueDownThreshold, n, None, before, sink);
        }
        if self.state.x[i] <= T::zero() {
            let before = self.labels();
            self.flags.occupied[i] = false;
            self.flags.above[i] = false;
            seq = self.emit(EventKind::QueueEmptied, n, None, before, sink);
        } else if !(self.policy == Policy::Baseline && n <= 2) {
            self.next_departure[i] = Some(self.state.t + self.service_gap());
        }
        seq
    }

    /// Flips all four lights at the current instant.
    fn switch<F: FnMut(&EventRecord<T>)>(&mut self, cause: Option<u32>, sink: &mut F) {
        let before = self.labels();
        let p_before = before.1;
        let road = self.state.green_road();
        self.state.u1 = !self.state.u1;
        self.state.z = [T::zero(); 2];
        let lights = light_vector(self.state.u1);
        for n in 3..=4 {
            if lights[n - 1] {
                self.state.w[n - 3] = T::zero();
                self.flags.wait_reached[n - 3] = false;
            }
        }
        if self.spec.mode == SimMode::Discrete {
            for i in 0..NUM_FLOWS {
                self.next_departure[i] = if lights[i] && self.state.x[i] > T::zero() {
                    Some(self.state.t + self.service_gap())
                } else {
                    None
                };
            }
        }
        self.diag.switches += 1;
        let seq = self.emit(EventKind::GreenToRed, road, cause, before, sink);
        if self.spec.mode == SimMode::Fluid {
            self.fluid_occupancy(Some(seq), sink);
        }
        let p_after = self.pedestrian();
        for k in 0..2 {
            if p_after[k] != p_before[k] {
                let mut p = p_after;
                p[k] = p_before[k];
                let kind = if p_after[k] {
                    EventKind::PedestrianEnabled
                } else {
                    EventKind::PedestrianCleared
                };
                self.emit(kind, k + 1, Some(seq), (self.region(), p), sink);
            }
        }
        if self.wants_switch() {
            self.diag.pending_reversals += 1;
        }
    }

    fn headway(&self, last_road: usize, road: usize) -> T {
        if last_road == 0 {
            T::zero()
        } else if last_road == road {
            self.service_gap()
        } else {
            self.cfg.conflict_headway
        }
    }

    fn baseline_instant<F: FnMut(&EventRecord<T>)>(&mut self, due: &[PendingEvent], sink: &mut F) {
        for ev in due {
            match ev.kind {
                PendingKind::Arrival => {
                    self.discrete_arrival(ev.flow as usize, sink);
                }
                PendingKind::Departure => {
                    let n = ev.flow as usize;
                    let planned_here = n <= 2 && self.junction.planned.map(|p| p.0) == Some(n);
                    let ped_due = n >= 3 && self.next_departure[n - 1].is_some();
                    if planned_here || ped_due {
                        self.discrete_departure(n, sink);
                    }
                }
                _ => {}
            }
        }
        self.plan_junction();
    }

    /// Next vehicle to enter the junction: the earliest queued vehicle whose
    /// road is not held by crossing pedestrians.
    fn plan_junction(&mut self) {
        let halted = |r: usize| self.state.x[r + 1] > T::zero();
        self.junction.planned = self.junction.order.iter().copied().find(|&r| !halted(r)).map(|r| {
            let at = (self.junction.last_time + self.headway(self.junction.last_road, r)).max(self.state.t);
            (r, at)
        });
    }
}

/// Simulates `[0, horizon]` from the empty initial state and keeps every record.
pub fn run_sample_path<T: Scalar>(
    spec: &ArrivalProcessSpec,
    params: &ParameterVector<T>,
    horizon: T,
    policy: Policy,
    cfg: &SimConfig<T>,
) -> Result<EventTrace<T>, SimError> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(SimError::InvalidHorizon(horizon.to_f64_lossy()));
    }
    let mut sim = Simulation::new(spec, *params, *cfg, policy)?;
    let mut records = Vec::new();
    sim.run_until(horizon, &mut |r: &EventRecord<T>| records.push(r.clone()))?;
    let area = sim.take_area();
    let cost = (0..NUM_FLOWS).fold(T::zero(), |acc, n| acc + cfg.weights[n] * area[n]) / horizon;
    let neps = collect_neps(&records, horizon);
    Ok(EventTrace {
        mode: spec.mode,
        policy,
        seed: spec.seed,
        params: *params,
        weights: cfg.weights,
        horizon,
        records,
        neps,
        cost,
        diagnostics: sim.diagnostics(),
    })
}

/// Cost of a sample path without keeping the records or running the
/// estimator.
pub fn sample_cost<T: Scalar>(
    spec: &ArrivalProcessSpec,
    params: &ParameterVector<T>,
    horizon: T,
    policy: Policy,
    cfg: &SimConfig<T>,
) -> Result<T, SimError> {
    let mut sim = Simulation::new(spec, *params, *cfg, policy)?;
    sim.run_until(horizon, &mut |_: &EventRecord<T>| {})?;
    let area = sim.take_area();
    Ok((0..NUM_FLOWS).fold(T::zero(), |acc, n| acc + cfg.weights[n] * area[n]) / horizon)
}
