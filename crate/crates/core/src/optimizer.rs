//! Projected stochastic gradient descent on the ten control parameters.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalProcessSpec;
use crate::ipa::{ipa_gradient_with, Grad, IpaEstimator, IpaOptions};
use crate::model::{index, EventKind, EventRecord, ParameterVector, NUM_FLOWS, NUM_PARAMS};
use crate::sim::{run_sample_path, Policy, SimConfig, SimError, Simulation};

/// Lower bound applied to `θ3, θ4, s1..s4` by [`project`].
pub const POSITIVE_FLOOR: f64 = 0.1;

/// Maps any raw vector to the nearest feasible one in clamp order:
/// `θ_min ← max(θ_min, 0)`, `θ_max ← max(θ_max, θ_min)`, the rest `≥ 0.1`.
pub fn project(raw: &[f64; NUM_PARAMS]) -> ParameterVector<f64> {
    let mut v = raw.map(|x| if x.is_finite() { x } else { 0.0 });
    for road in 0..2 {
        v[2 * road] = v[2 * road].max(0.0);
        v[2 * road + 1] = v[2 * road + 1].max(v[2 * road]);
    }
    for x in &mut v[index::THETA3 - 1..] {
        *x = x.max(POSITIVE_FLOOR);
    }
    ParameterVector::new(v).expect("projection yields a feasible vector")
}

/// `weights[0]·current + weights[1]·previous`.
pub fn smooth_gradient(current: &Grad<f64>, previous: &Grad<f64>, weights: [f64; 2]) -> Grad<f64> {
    std::array::from_fn(|i| weights[0] * current[i] + weights[1] * previous[i])
}

fn inf_norm(g: &Grad<f64>) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub rho0: f64,
    /// Divide `rho0` by `⌈l/10⌉` at iteration `l` (1-based).
    pub decay: bool,
    /// The gradient is scaled by `1 / max(norm_floor, ‖g‖∞)`. With the
    /// default `0` every step moves the steepest coordinate by exactly `rho0`;
    /// `1` only normalises gradients larger than one.
    #[serde(default = "default_norm_floor")]
    pub norm_floor: f64,
}

fn default_norm_floor() -> f64 {
    0.0
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { rho0: 2.0, decay: false, norm_floor: default_norm_floor() }
    }
}

impl StepSchedule {
    /// Step size for the 1-based iteration `l` given its gradient: the
    /// largest coordinate move is at most `rho0`.
    pub fn rho(&self, l: usize, grad: &Grad<f64>) -> f64 {
        let base = if self.decay {
            self.rho0 / (l.max(1) as f64 / 10.0).ceil()
        } else {
            self.rho0
        };
        let norm = inf_norm(grad);
        if norm == 0.0 {
            return base;
        }
        base / norm.max(self.norm_floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub iterations: usize,
    pub replications: usize,
    pub horizon: f64,
    pub step: StepSchedule,
    pub master_seed: u64,
    pub ipa: IpaOptions<f64>,
    pub sim: SimConfig<f64>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            replications: 20,
            horizon: 1000.0,
            step: StepSchedule::default(),
            master_seed: 0,
            ipa: IpaOptions::default(),
            sim: SimConfig::default(),
        }
    }
}

/// One row of an optimization trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub params: [f64; NUM_PARAMS],
    /// Mean cost over the replications at `params`.
    pub j_hat: f64,
    /// Gradient used for the step taken from `params`.
    pub grad: Grad<f64>,
    pub rho: f64,
}

impl IterationRecord {
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Iterations `0..iterations`, then a final row evaluating the last
    /// parameters (no step taken, `rho = 0`).
    pub trajectory: Vec<IterationRecord>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub final_params: [f64; NUM_PARAMS],
    /// `1 − final/initial`.
    pub reduction: f64,
}

/// Mean cost and mean IPA gradient over one replication set.
pub fn evaluate(
    spec: &ArrivalProcessSpec,
    params: &ParameterVector<f64>,
    seeds: &[u64],
    horizon: f64,
    ipa: &IpaOptions<f64>,
    sim: &SimConfig<f64>,
) -> Result<(f64, Grad<f64>), SimError> {
    let runs: Vec<Result<(f64, Grad<f64>), SimError>> = seeds
        .par_iter()
        .map(|&seed| {
            let trace = run_sample_path(&spec.with_seed(seed), params, horizon, Policy::QuasiDynamic, sim)?;
            let rep = ipa_gradient_with(&trace, &sim.weights, *ipa);
            Ok((trace.cost, rep.grad))
        })
        .collect();
    // ordered reduction keeps the result independent of thread scheduling
    let n = seeds.len().max(1) as f64;
    let mut cost = 0.0;
    let mut grad = [0.0; NUM_PARAMS];
    for r in runs {
        let (c, g) = r?;
        cost += c;
        for i in 0..NUM_PARAMS {
            grad[i] += g[i];
        }
    }
    Ok((cost / n, grad.map(|g| g / n)))
}

fn draw_seeds(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.random()).collect()
}

/// Batch IPA descent: each iteration averages the gradient over fresh
/// replications and takes one projected step.
pub fn batch_optimize(
    cfg: &BatchConfig,
    spec: &ArrivalProcessSpec,
    initial: &ParameterVector<f64>,
) -> Result<BatchResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let mut params = *initial;
    let mut trajectory = Vec::with_capacity(cfg.iterations + 1);
    let first_seeds = draw_seeds(&mut rng, cfg.replications);
    let mut seeds = first_seeds.clone();
    for l in 0..cfg.iterations {
        if l > 0 {
            seeds = draw_seeds(&mut rng, cfg.replications);
        }
        let (j_hat, grad) = evaluate(spec, &params, &seeds, cfg.horizon, &cfg.ipa, &cfg.sim)?;
        let rho = cfg.step.rho(l + 1, &grad);
        trajectory.push(IterationRecord {
            iteration: l,
            params: *params.as_array(),
            j_hat,
            grad,
            rho,
        });
        let raw = std::array::from_fn(|i| params.as_array()[i] - rho * grad[i]);
        params = project(&raw);
    }
    // the last parameters are scored on the seeds of iteration 0
    let (final_cost, grad) = evaluate(spec, &params, &first_seeds, cfg.horizon, &cfg.ipa, &cfg.sim)?;
    let initial_cost = match trajectory.first() {
        Some(r) => r.j_hat,
        None => final_cost,
    };
    trajectory.push(IterationRecord {
        iteration: cfg.iterations,
        params: *params.as_array(),
        j_hat: final_cost,
        grad,
        rho: 0.0,
    });
    let reduction = if initial_cost > 0.0 { 1.0 - final_cost / initial_cost } else { 0.0 };
    Ok(BatchResult {
        trajectory,
        initial_cost,
        final_cost,
        final_params: *params.as_array(),
        reduction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub horizon: f64,
    pub window: f64,
    /// Weights of the current and previous window.
    pub smoothing: [f64; 2],
    /// Smooth the reported windowed costs instead of the gradients.
    pub smooth_costs: bool,
    pub step: StepSchedule,
    pub ipa: IpaOptions<f64>,
    pub sim: SimConfig<f64>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            horizon: 43_200.0,
            window: 1200.0,
            smoothing: [0.6, 0.4],
            smooth_costs: false,
            step: StepSchedule::default(),
            ipa: IpaOptions::default(),
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub start: f64,
    pub end: f64,
    /// Parameters in force during the window.
    pub params: [f64; NUM_PARAMS],
    /// Realised weighted mean queue length over the window.
    pub cost: f64,
    /// Cost as reported: equal to `cost` unless costs are smoothed.
    pub reported_cost: f64,
    /// IPA gradient of this window alone.
    pub grad: Grad<f64>,
    /// Gradient the step was taken with.
    pub grad_used: Grad<f64>,
    pub rho: f64,
    pub switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineResult {
    pub windows: Vec<WindowRecord>,
    pub final_params: [f64; NUM_PARAMS],
}

/// Online adaptation along one continuous sample path: parameters are
/// updated at every window boundary from the IPA estimate of the windows
/// seen so far.
pub fn online_optimize(
    cfg: &OnlineConfig,
    spec: &ArrivalProcessSpec,
    initial: &ParameterVector<f64>,
) -> Result<OnlineResult, SimError> {
    if !(cfg.window > 0.0) || !(cfg.horizon >= cfg.window) {
        return Err(SimError::InvalidHorizon(cfg.horizon));
    }
    let weights = if cfg.smooth_costs { [1.0, 0.0] } else { cfg.smoothing };
    let mut sim = Simulation::new(spec, *initial, cfg.sim, Policy::QuasiDynamic)?;
    let mut est = IpaEstimator::new(spec.mode, cfg.sim.weights, cfg.ipa);
    let mut last: Option<EventRecord<f64>> = None;
    sim.start(&mut |r: &EventRecord<f64>| sink_observe(&mut est, &mut last, r));

    let count = (cfg.horizon / cfg.window).round() as usize;
    let mut windows = Vec::with_capacity(count);
    let mut prev_grad = [0.0; NUM_PARAMS];
    let mut prev_cost: Option<f64> = None;
    let mut switches = sim.diagnostics().switches;
    for k in 0..count {
        let start = k as f64 * cfg.window;
        let end = ((k + 1) as f64 * cfg.window).min(cfg.horizon);
        let params = *sim.params();
        sim.run_until(end, &mut |r: &EventRecord<f64>| sink_observe(&mut est, &mut last, r))?;
        let rep = est.report();
        let area = sim.take_area();
        let cost = (0..NUM_FLOWS).map(|n| cfg.sim.weights[n] * area[n]).sum::<f64>() / (end - start);
        let grad_used = smooth_gradient(&rep.grad, &prev_grad, weights);
        let rho = cfg.step.rho(k + 1, &grad_used);
        let reported_cost = match (cfg.smooth_costs, prev_cost) {
            (true, Some(p)) => cfg.smoothing[0] * cost + cfg.smoothing[1] * p,
            _ => cost,
        };
        let now = sim.diagnostics().switches;
        windows.push(WindowRecord {
            window: k,
            start,
            end,
            params: *params.as_array(),
            cost,
            reported_cost,
            grad: rep.grad,
            grad_used,
            rho,
            switches: now - switches,
        });
        switches = now;
        prev_grad = rep.grad;
        prev_cost = Some(cost);

        if let Some(rec) = last.take() {
            est.reset_window(&rec);
        }
        let raw = std::array::from_fn(|i| params.as_array()[i] - rho * grad_used[i]);
        sim.set_params(project(&raw), &mut |r: &EventRecord<f64>| sink_observe(&mut est, &mut last, r));
    }
    Ok(OnlineResult {
        windows,
        final_params: *sim.params().as_array(),
    })
}

fn sink_observe(est: &mut IpaEstimator<f64>, last: &mut Option<EventRecord<f64>>, r: &EventRecord<f64>) {
    est.observe(r);
    if r.kind == EventKind::Horizon {
        *last = Some(r.clone());
    }
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "iteration,theta1_min,theta1_max,theta2_min,theta2_max,theta3,theta4,s1,s2,s3,s4,J_hat,grad_norm,rho";

pub fn write_trajectory_csv<W: Write>(rows: &[IterationRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in rows {
        write!(out, "{}", r.iteration)?;
        for p in r.params {
            write!(out, ",{p:.9}")?;
        }
        writeln!(out, ",{:.9},{:.9},{:.9}", r.j_hat, r.grad_norm(), r.rho)?;
    }
    Ok(())
}

pub const WINDOWS_CSV_HEADER: &str = "window,start,end,theta1_min,theta1_max,theta2_min,theta2_max,theta3,theta4,s1,s2,s3,s4,cost,reported_cost,grad_norm,rho,switches";

pub fn write_windows_csv<W: Write>(rows: &[WindowRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{WINDOWS_CSV_HEADER}")?;
    for r in rows {
        write!(out, "{},{:.9},{:.9}", r.window, r.start, r.end)?;
        for p in r.params {
            write!(out, ",{p:.9}")?;
        }
        let norm = r.grad_used.iter().map(|g| g * g).sum::<f64>().sqrt();
        writeln!(out, ",{:.9},{:.9},{:.9},{:.9},{}", r.cost, r.reported_cost, norm, r.rho, r.switches)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_examples() {
        let v0 = [10.0, 20.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0];
        assert_eq!(project(&v0).as_array(), &v0);
        let mut v = v0;
        v[1] = v[0] - 3.0;
        assert_eq!(project(&v).as_array()[1], 10.0);
        let mut v = v0;
        v[6] = -0.5;
        assert_eq!(project(&v).as_array()[6], 0.1);
        let mut v = v0;
        v[0] = -1.0;
        v[1] = -2.0;
        let p = project(&v);
        assert_eq!((p.get(1), p.get(2)), (0.0, 0.0));
    }

    #[test]
    fn smoothing_examples() {
        let mut a = [0.0; NUM_PARAMS];
        let mut b = [0.0; NUM_PARAMS];
        a[0] = 1.0;
        b[1] = 1.0;
        let s = smooth_gradient(&a, &b, [0.6, 0.4]);
        assert_eq!(&s[..3], &[0.6, 0.4, 0.0]);
        let g = [0.3; NUM_PARAMS];
        assert_eq!(smooth_gradient(&g, &g, [0.6, 0.4]).map(|v| (v * 1e12).round()), g.map(|v| (v * 1e12).round()));
        assert_eq!(smooth_gradient(&a, &b, [1.0, 0.0]), a);
        assert_eq!(smooth_gradient(&a, &b, [0.5, 0.5])[..2], [0.5, 0.5]);
    }

    #[test]
    fn step_is_normalised() {
        let s = StepSchedule::default();
        let mut g = [0.0; NUM_PARAMS];
        g[3] = 8.0;
        assert_eq!(s.rho(1, &g), 0.25);
        g[3] = 0.5;
        assert_eq!(s.rho(1, &g), 4.0);
        let capped = StepSchedule { norm_floor: 1.0, ..s };
        assert_eq!(capped.rho(1, &g), 2.0);
        assert_eq!(s.rho(1, &[0.0; NUM_PARAMS]), 2.0);
        let d = StepSchedule { decay: true, ..capped };
        assert_eq!(d.rho(10, &g), 2.0);
        assert_eq!(d.rho(11, &g), 1.0);
        assert_eq!(d.rho(25, &g), 2.0 / 3.0);
    }
}
