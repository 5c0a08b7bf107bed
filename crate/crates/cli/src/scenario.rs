//! Scenario runners and their artifacts.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;
use tlc_core::optimizer::{write_trajectory_csv, write_windows_csv};
use tlc_core::oracle::OracleError;
use tlc_core::sim::write_trace_csv;
use tlc_core::*;

use crate::config::{ExperimentConfig, Scenario};

/// Switches per 100 s above which a path is flagged as chattering.
pub const CHATTER_THRESHOLD: f64 = 50.0;

pub const SWEEP_CSV_HEADER: &str = "interarrival_1,interarrival_2,interarrival_3,interarrival_4,J_init,J_opt,theta1_min,theta1_max,theta2_min,theta2_max,theta3,theta4,s1,s2,s3,s4,reduction_percent";

pub const BASELINE_CSV_HEADER: &str =
    "scale,rate_1,rate_2,rate_3,rate_4,J_baseline,J_tlc_init,J_tlc_opt,opt_vs_baseline_percent";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("gradient oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// What a scenario wrote, for the caller to report.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Scenario summary, also written to `summary.json`.
    pub summary: serde_json::Value,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io { path: path.clone(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.files.push(path);
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), RunError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}

/// Runs the scenario of a resolved config and writes its artifacts to the
/// config's output directory. Every directory gets `config.toml` (the
/// resolved config, including the master seed) and `summary.json`.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let out_dir = cfg.out_dir();
    let mut art = Artifacts::new(&out_dir)?;
    art.write("config.toml", |w| w.write_all(cfg.to_toml().as_bytes()))?;
    let summary = match cfg.scenario() {
        Scenario::Simulate => simulate(cfg, &mut art)?,
        Scenario::Optimize => optimize(cfg, &mut art)?,
        Scenario::Online => online(cfg, &mut art)?,
        Scenario::ValidateGradient => validate_gradient(cfg, &mut art)?,
        Scenario::Sweep => sweep(cfg, &mut art)?,
        Scenario::CompareBaseline => compare_baseline(cfg, &mut art)?,
    };
    let summary = json!({
        "scenario": cfg.scenario().name(),
        "seed": cfg.seed,
        "result": summary,
    });
    art.json("summary.json", &summary)?;
    Ok(Outcome { out_dir, files: art.files, summary })
}

fn sim_config(cfg: &ExperimentConfig) -> Config {
    Config {
        h: cfg.h,
        weights: cfg.weights,
        rate_window: cfg.rate_window,
        conflict_headway: cfg.conflict_headway,
        ..Config::default()
    }
}

fn ipa_options(cfg: &ExperimentConfig) -> IpaOptions<f64> {
    IpaOptions { rate_window: cfg.rate_window, ..IpaOptions::default() }
}

fn step(cfg: &ExperimentConfig) -> StepSchedule {
    StepSchedule { rho0: cfg.optimizer.rho0, decay: cfg.optimizer.decay, norm_floor: cfg.optimizer.norm_floor }
}

pub fn batch_config(cfg: &ExperimentConfig) -> BatchConfig {
    BatchConfig {
        iterations: cfg.optimizer.iterations,
        replications: cfg.optimizer.replications,
        horizon: cfg.horizon(),
        step: step(cfg),
        master_seed: cfg.seed,
        ipa: ipa_options(cfg),
        sim: sim_config(cfg),
    }
}

pub fn online_config(cfg: &ExperimentConfig) -> OnlineConfig {
    OnlineConfig {
        horizon: cfg.horizon(),
        window: cfg.online.window,
        smoothing: cfg.online.smoothing,
        smooth_costs: cfg.online.smooth_costs,
        step: step(cfg),
        ipa: ipa_options(cfg),
        sim: sim_config(cfg),
    }
}

fn switching(switches: usize, horizon: f64) -> serde_json::Value {
    let per_100s = if horizon > 0.0 { switches as f64 * 100.0 / horizon } else { 0.0 };
    json!({
        "switches": switches,
        "switches_per_100s": per_100s,
        "chattering": per_100s > CHATTER_THRESHOLD,
    })
}

fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, RunError> {
    let trace = run_sample_path(&cfg.spec(), &cfg.initial_params(), cfg.horizon(), cfg.policy, &sim_config(cfg))?;
    art.write("trace.csv", |w| write_trace_csv(&trace, w))?;
    let mut summary = json!({
        "policy": cfg.policy,
        "mode": cfg.mode(),
        "L": trace.cost,
        "events": trace.diagnostics.events,
        "pending_reversals": trace.diagnostics.pending_reversals,
        "switching": switching(trace.diagnostics.switches, cfg.horizon()),
    });
    if cfg.policy == Policy::QuasiDynamic {
        let report = ipa_gradient_with(&trace, &cfg.weights, ipa_options(cfg));
        let violations = check_trace(&trace);
        art.json("gradient.json", &report)?;
        summary["invariant_violations"] = json!(violations.len());
    }
    Ok(summary)
}

/// Switch rate of one diagnostic path at `params`.
fn diagnostic_switching(cfg: &ExperimentConfig, spec: &ArrivalProcessSpec, params: &Params) -> Result<serde_json::Value, RunError> {
    let t = run_sample_path(spec, params, cfg.horizon(), Policy::QuasiDynamic, &sim_config(cfg))?;
    Ok(switching(t.diagnostics.switches, cfg.horizon()))
}

fn optimize(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, RunError> {
    let spec = cfg.spec();
    let r = batch_optimize(&batch_config(cfg), &spec, &cfg.initial_params())?;
    art.write("trajectory.csv", |w| write_trajectory_csv(&r.trajectory, w))?;
    let final_params = Params::new(r.final_params).expect("projected parameters are feasible");
    Ok(json!({
        "mode": cfg.mode(),
        "initial_cost": r.initial_cost,
        "final_cost": r.final_cost,
        "reduction_percent": 100.0 * r.reduction,
        "final_params": r.final_params,
        "switching_initial": diagnostic_switching(cfg, &spec, &cfg.initial_params())?,
        "switching_final": diagnostic_switching(cfg, &spec, &final_params)?,
    }))
}

fn online(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, RunError> {
    let r = online_optimize(&online_config(cfg), &cfg.spec(), &cfg.initial_params())?;
    art.write("windows.csv", |w| write_windows_csv(&r.windows, w))?;
    let n = r.windows.len().max(1) as f64;
    let switches: usize = r.windows.iter().map(|w| w.switches).sum();
    Ok(json!({
        "mode": cfg.mode(),
        "windows": r.windows.len(),
        "mean_cost": r.windows.iter().map(|w| w.cost).sum::<f64>() / n,
        "final_params": r.final_params,
        "switching": switching(switches, cfg.horizon()),
    }))
}

fn validate_gradient(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, RunError> {
    let spec = cfg.spec();
    let params = cfg.initial_params();
    let sim = sim_config(cfg);
    let trace = run_sample_path(&spec, &params, cfg.horizon(), Policy::QuasiDynamic, &sim)?;
    let report = ipa_gradient_with(&trace, &cfg.weights, ipa_options(cfg));
    let fd = finite_difference_gradient(&spec, &params, cfg.horizon(), &sim, &FdConfig { delta: [cfg.gradient.delta; NUM_PARAMS] })?;
    let cmp = compare_gradients(&report.grad, &fd.grad, &fd.stable);
    let informative = cmp.relative_error.iter().flatten().count();
    let doc = json!({
        "comparison": cmp,
        "max_relative_error": cmp.max_relative_error(),
        "informative_coordinates": informative,
        "delta": fd.effective_delta,
        "ipa_report": report,
        "switching": switching(trace.diagnostics.switches, cfg.horizon()),
    });
    art.json("gradient_comparison.json", &doc)?;
    Ok(json!({
        "cosine": cmp.cosine,
        "max_relative_error": cmp.max_relative_error(),
        "stable_coordinates": cmp.stable.iter().filter(|&&s| s).count(),
        "informative_coordinates": informative,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub interarrival: [f64; NUM_FLOWS],
    pub j_init: f64,
    pub j_opt: f64,
    pub params_opt: [f64; NUM_PARAMS],
    pub reduction_percent: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        for v in r.interarrival {
            write!(out, "{v:.9},")?;
        }
        write!(out, "{:.9},{:.9}", r.j_init, r.j_opt)?;
        for v in r.params_opt {
            write!(out, ",{v:.9}")?;
        }
        writeln!(out, ",{:.9}", r.reduction_percent)?;
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, RunError> {
    let batch = batch_config(cfg);
    let rows = cfg
        .sweep
        .rows
        .iter()
        .map(|ia| {
            let spec = cfg.arrival_spec(ia.map(|v| 1.0 / v), cfg.mode());
            let r = batch_optimize(&batch, &spec, &cfg.initial_params())?;
            Ok(SweepRow {
                interarrival: *ia,
                j_init: r.initial_cost,
                j_opt: r.final_cost,
                params_opt: r.final_params,
                reduction_percent: 100.0 * r.reduction,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    art.write("sweep.csv", |w| write_sweep_csv(&rows, w))?;
    Ok(json!({ "rows": rows }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub scale: f64,
    pub rates: [f64; NUM_FLOWS],
    pub j_baseline: f64,
    pub j_tlc_init: f64,
    pub j_tlc_opt: f64,
    pub params_opt: [f64; NUM_PARAMS],
}

impl BaselineRow {
    /// Relative improvement of the optimised controller over the baseline.
    pub fn opt_vs_baseline_percent(&self) -> f64 {
        if self.j_baseline > 0.0 {
            100.0 * (1.0 - self.j_tlc_opt / self.j_baseline)
        } else {
            0.0
        }
    }
}

pub fn write_baseline_csv<W: Write>(rows: &[BaselineRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{BASELINE_CSV_HEADER}")?;
    for r in rows {
        write!(out, "{:.9}", r.scale)?;
        for v in r.rates {
            write!(out, ",{v:.9}")?;
        }
        writeln!(
            out,
            ",{:.9},{:.9},{:.9},{:.9}",
            r.j_baseline,
            r.j_tlc_init,
            r.j_tlc_opt,
            r.opt_vs_baseline_percent()
        )?;
    }
    Ok(())
}

/// Evaluation seeds of the baseline comparison, shared by all policies.
pub fn evaluation_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| master.wrapping_mul(1000).wrapping_add(i)).collect()
}

/// Mean cost over common random numbers.
pub fn mean_cost(
    spec: &ArrivalProcessSpec,
    params: &Params,
    seeds: &[u64],
    horizon: f64,
    policy: Policy,
    sim: &Config,
) -> Result<f64, SimError> {
    let costs: Vec<Result<f64, SimError>> = seeds
        .par_iter()
        .map(|&s| sample_cost(&spec.with_seed(s), params, horizon, policy, sim))
        .collect();
    let mut total = 0.0;
    for c in costs {
        total += c?;
    }
    Ok(total / seeds.len().max(1) as f64)
}

/// Baseline, unoptimised and optimised controller at one rate scaling.
pub fn baseline_row(cfg: &ExperimentConfig, scale: f64) -> Result<BaselineRow, RunError> {
    let rates = cfg.rates.expect("resolved config has rates").map(|r| r * scale);
    let spec = cfg.arrival_spec(rates, SimMode::Discrete);
    let r = batch_optimize(&batch_config(cfg), &spec, &cfg.initial_params())?;
    let opt = Params::new(r.final_params).expect("projected parameters are feasible");
    let seeds = evaluation_seeds(cfg.seed, cfg.baseline.eval_replications);
    let sim = sim_config(cfg);
    let h = cfg.horizon();
    Ok(BaselineRow {
        scale,
        rates,
        j_baseline: mean_cost(&spec, &cfg.initial_params(), &seeds, h, Policy::Baseline, &sim)?,
        j_tlc_init: mean_cost(&spec, &cfg.initial_params(), &seeds, h, Policy::QuasiDynamic, &sim)?,
        j_tlc_opt: mean_cost(&spec, &opt, &seeds, h, Policy::QuasiDynamic, &sim)?,
        params_opt: r.final_params,
    })
}

fn compare_baseline(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, RunError> {
    let rows = cfg
        .baseline
        .scales
        .iter()
        .map(|&k| baseline_row(cfg, k))
        .collect::<Result<Vec<_>, RunError>>()?;
    art.write("baseline.csv", |w| write_baseline_csv(&rows, w))?;
    Ok(json!({ "rows": rows }))
}
