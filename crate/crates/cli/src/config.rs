//! Experiment configuration: one TOML file per run.
//!
//! Every key is optional except where a scenario cannot run without it;
//! unknown keys are rejected. After [`ExperimentConfig::resolve`] every
//! scenario-dependent default is filled in, and the resolved config is what
//! gets echoed next to the artifacts.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tlc_core::{ArrivalProcessSpec, Params, Policy, RatePerturbation, SimMode, NUM_FLOWS, NUM_PARAMS};

/// Mean arrival rates measured at the Veberöd intersection (veh/s, ped/s).
pub const VEBEROD_RATES: [f64; NUM_FLOWS] = [0.11, 0.125, 0.01, 0.01];

/// Initial parameters `[θ1min, θ1max, θ2min, θ2max, θ3, θ4, s1, s2, s3, s4]`.
pub const DEFAULT_INITIAL: [f64; NUM_PARAMS] = [10.0, 20.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0];

/// Interarrival vectors of the default sweep.
pub const TABLE_ROWS: [[f64; NUM_FLOWS]; 13] = [
    [5.0, 5.0, 20.0, 20.0],
    [5.0, 6.0, 20.0, 20.0],
    [5.0, 7.0, 20.0, 20.0],
    [5.0, 8.0, 20.0, 20.0],
    [6.0, 6.0, 20.0, 20.0],
    [6.0, 7.0, 20.0, 20.0],
    [6.0, 8.0, 20.0, 20.0],
    [7.0, 7.0, 20.0, 20.0],
    [7.0, 8.0, 20.0, 20.0],
    [8.0, 8.0, 20.0, 20.0],
    [6.0, 6.0, 10.0, 20.0],
    [6.0, 6.0, 15.0, 20.0],
    [6.0, 6.0, 25.0, 20.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Simulate,
    Optimize,
    Online,
    ValidateGradient,
    Sweep,
    CompareBaseline,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::Optimize => "optimize",
            Scenario::Online => "online",
            Scenario::ValidateGradient => "validate-gradient",
            Scenario::Sweep => "sweep",
            Scenario::CompareBaseline => "compare-baseline",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Veberod,
}

impl Preset {
    pub fn rates(self) -> [f64; NUM_FLOWS] {
        match self {
            Preset::Veberod => VEBEROD_RATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// Gradient steps of a batch run.
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    /// Sample paths averaged per step.
    #[serde(default = "d_replications")]
    pub replications: usize,
    /// Largest coordinate move per step.
    #[serde(default = "d_rho0")]
    pub rho0: f64,
    /// Divide `rho0` by `⌈l/10⌉` at step `l`.
    #[serde(default)]
    pub decay: bool,
    /// Steps are `rho0 / max(norm_floor, ‖g‖∞)`.
    #[serde(default)]
    pub norm_floor: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            iterations: d_iterations(),
            replications: d_replications(),
            rho0: d_rho0(),
            decay: false,
            norm_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSection {
    #[serde(default = "d_window")]
    pub window: f64,
    /// Weights of the current and the previous window's gradient.
    #[serde(default = "d_smoothing")]
    pub smoothing: [f64; 2],
    /// Smooth reported costs instead of gradients.
    #[serde(default)]
    pub smooth_costs: bool,
}

impl Default for OnlineSection {
    fn default() -> Self {
        Self { window: d_window(), smoothing: d_smoothing(), smooth_costs: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Interarrival vectors `1/ᾱ`, one optimization per row.
    #[serde(default = "d_rows")]
    pub rows: Vec<[f64; NUM_FLOWS]>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { rows: d_rows() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    /// Factors applied to the base rates.
    #[serde(default = "d_scales")]
    pub scales: Vec<f64>,
    /// Common-random-number sample paths per policy and scale.
    #[serde(default = "d_replications")]
    pub eval_replications: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { scales: d_scales(), eval_replications: d_replications() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSection {
    /// Central-difference half width, the same for every coordinate.
    #[serde(default = "d_delta")]
    pub delta: f64,
}

impl Default for GradientSection {
    fn default() -> Self {
        Self { delta: d_delta() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    /// Defaults to `fluid` for validate-gradient and `discrete` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SimMode>,
    /// Master seed.
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// At most one of `preset`, `rates` and `interarrival`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<[f64; NUM_FLOWS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interarrival: Option<[f64; NUM_FLOWS]>,
    /// Seconds; 43200 for online, 1000 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "d_h")]
    pub h: f64,
    #[serde(default = "d_weights")]
    pub weights: [f64; NUM_FLOWS],
    #[serde(default = "d_initial")]
    pub initial: [f64; NUM_PARAMS],
    /// Arrival-rate estimation window of the discrete mode.
    #[serde(default = "d_rate_window")]
    pub rate_window: f64,
    /// Crossing-road headway of the uncontrolled junction.
    #[serde(default = "d_conflict_headway")]
    pub conflict_headway: f64,
    /// Simulate only.
    #[serde(default = "d_policy")]
    pub policy: Policy,
    /// Output directory; `out/<scenario>` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Temporary rate change of one flow (1-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<RatePerturbation>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub online: OnlineSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub gradient: GradientSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all keys have defaults")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

/// Reads and strictly parses a config file. The result still needs
/// [`ExperimentConfig::resolve`].
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string().trim_end().to_string(),
    })
}

impl ExperimentConfig {
    /// Fills scenario-dependent defaults and validates. The arrival process
    /// ends up as explicit `rates`.
    pub fn resolve(mut self, scenario: Scenario) -> Result<Self, ConfigError> {
        if let Some(s) = self.scenario {
            if s != scenario {
                return Err(invalid("scenario", format!("config is for `{s}`, not `{scenario}`")));
            }
        }
        self.scenario = Some(scenario);
        let mode = *self.mode.get_or_insert(match scenario {
            Scenario::ValidateGradient => SimMode::Fluid,
            _ => SimMode::Discrete,
        });

        let given = [self.preset.is_some(), self.rates.is_some(), self.interarrival.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(invalid("rates", "give only one of `preset`, `rates` and `interarrival`"));
        }
        if let Some(ia) = self.interarrival {
            check_positive("interarrival", &ia)?;
        }
        let rates = match (self.preset, self.rates, self.interarrival) {
            (Some(p), _, _) => p.rates(),
            (_, Some(r), _) => r,
            (_, _, Some(ia)) => ia.map(|v| 1.0 / v),
            _ => match scenario {
                Scenario::Online => [0.154, 0.175, 0.014, 0.014],
                Scenario::CompareBaseline => VEBEROD_RATES,
                Scenario::ValidateGradient => [6.0, 6.0, 10.0, 20.0].map(|v| 1.0 / v),
                _ => [5.0, 5.0, 20.0, 20.0].map(|v| 1.0 / v),
            },
        };
        check_positive("rates", &rates)?;
        self.rates = Some(rates);
        self.preset = None;
        self.interarrival = None;

        let horizon = *self.horizon.get_or_insert(match scenario {
            Scenario::Online => 43_200.0,
            _ => 1000.0,
        });
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(invalid("h", "must be positive"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights", "must be finite and non-negative"));
        }
        Params::new(self.initial).map_err(|e| invalid("initial", e.to_string()))?;
        if !(self.rate_window.is_finite() && self.rate_window > 0.0) {
            return Err(invalid("rate_window", "must be positive"));
        }
        if !(self.conflict_headway.is_finite() && self.conflict_headway >= 0.0) {
            return Err(invalid("conflict_headway", "must be non-negative"));
        }
        if self.policy == Policy::Baseline && mode != SimMode::Discrete {
            return Err(invalid("policy", "the baseline junction needs `mode = \"discrete\"`"));
        }
        if scenario == Scenario::ValidateGradient && mode != SimMode::Fluid {
            return Err(invalid("mode", "gradient validation runs on the fluid model"));
        }
        if scenario == Scenario::CompareBaseline && mode != SimMode::Discrete {
            return Err(invalid("mode", "the baseline comparison needs the discrete model"));
        }
        if let Some(p) = self.perturbation {
            self.arrival_spec(rates, mode).with_perturbation(p).validate().map_err(|e| invalid("perturbation", e))?;
        }

        let o = &self.optimizer;
        if o.replications == 0 {
            return Err(invalid("optimizer.replications", "must be at least 1"));
        }
        if !(o.rho0.is_finite() && o.rho0 > 0.0) {
            return Err(invalid("optimizer.rho0", "must be positive"));
        }
        if !(o.norm_floor.is_finite() && o.norm_floor >= 0.0) {
            return Err(invalid("optimizer.norm_floor", "must be non-negative"));
        }
        let w = &self.online;
        if scenario == Scenario::Online && !(w.window > 0.0 && w.window <= horizon) {
            return Err(invalid("online.window", "must be positive and at most the horizon"));
        }
        if w.smoothing.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("online.smoothing", "weights must be finite and non-negative"));
        }
        if scenario == Scenario::Sweep && self.sweep.rows.is_empty() {
            return Err(invalid("sweep.rows", "needs at least one row"));
        }
        for (k, row) in self.sweep.rows.iter().enumerate() {
            check_positive(&format!("sweep.rows[{k}]"), row)?;
        }
        if self.baseline.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("baseline.scales", "must be positive"));
        }
        if self.baseline.eval_replications == 0 {
            return Err(invalid("baseline.eval_replications", "must be at least 1"));
        }
        if !(self.gradient.delta.is_finite() && self.gradient.delta > 0.0) {
            return Err(invalid("gradient.delta", "must be positive"));
        }
        Ok(self)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario.unwrap_or(Scenario::Simulate)
    }

    pub fn mode(&self) -> SimMode {
        self.mode.unwrap_or(SimMode::Discrete)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1000.0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| Path::new("out").join(self.scenario().name()))
    }

    pub fn initial_params(&self) -> Params {
        Params::new(self.initial).expect("validated in resolve")
    }

    /// Arrival process at the given rates with the config's perturbation.
    pub fn arrival_spec(&self, rates: [f64; NUM_FLOWS], mode: SimMode) -> ArrivalProcessSpec {
        let spec = ArrivalProcessSpec::new(mode, rates, self.seed);
        match self.perturbation {
            Some(p) => spec.with_perturbation(p),
            None => spec,
        }
    }

    /// Arrival process of a resolved config.
    pub fn spec(&self) -> ArrivalProcessSpec {
        self.arrival_spec(self.rates.expect("resolved config has rates"), self.mode())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn check_positive(key: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(invalid(key, "all entries must be positive"))
    }
}

fn d_seed() -> u64 {
    1
}
fn d_iterations() -> usize {
    20
}
fn d_replications() -> usize {
    20
}
fn d_rho0() -> f64 {
    2.0
}
fn d_window() -> f64 {
    1200.0
}
fn d_smoothing() -> [f64; 2] {
    [0.6, 0.4]
}
fn d_rows() -> Vec<[f64; NUM_FLOWS]> {
    TABLE_ROWS.to_vec()
}
fn d_scales() -> Vec<f64> {
    vec![1.0, 1.3, 1.5, 2.0]
}
fn d_delta() -> f64 {
    1e-3
}
fn d_h() -> f64 {
    1.2
}
fn d_weights() -> [f64; NUM_FLOWS] {
    [1.0; NUM_FLOWS]
}
fn d_initial() -> [f64; NUM_PARAMS] {
    DEFAULT_INITIAL
}
fn d_rate_window() -> f64 {
    60.0
}
fn d_conflict_headway() -> f64 {
    2.2
}
fn d_policy() -> Policy {
    Policy::QuasiDynamic
}
