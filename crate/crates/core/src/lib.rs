//! Quasi-dynamic traffic light control at a single intersection with two
//! vehicle flows and two pedestrian flows.
//!
//! The crate contains an event-driven simulator of the stochastic hybrid
//! system (fluid and discrete arrivals), an infinitesimal perturbation
//! analysis (IPA) estimator of the cost gradient with respect to the ten
//! controller parameters, a finite-difference oracle to check it, and batch
//! and online gradient-descent optimizers.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod arrivals;
pub mod controller;
pub mod invariants;
pub mod ipa;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod scalar;
pub mod sim;

pub use arrivals::{ArrivalProcessSpec, RatePerturbation, SimMode};
pub use controller::{baseline_decision, control_decision, BaselineDecision, ControlDecision};
pub use invariants::{check_trace, Invariant, Violation};
pub use ipa::{ipa_gradient, ipa_gradient_with, GradientReport, IpaEstimator, IpaOptions};
pub use model::{
    classify_region, pedestrian_indicator, EventKind, EventRecord, HybridState, ParamError, ParameterVector,
    Region, TieBreak, NUM_FLOWS, NUM_PARAMS,
};
pub use oracle::{compare_gradients, finite_difference_gradient, FdConfig, FdGradient, GradientComparison, OracleError};
pub use optimizer::{
    batch_optimize, online_optimize, project, smooth_gradient, BatchConfig, BatchResult, IterationRecord,
    OnlineConfig, OnlineResult, StepSchedule, WindowRecord,
};
pub use scalar::Scalar;
pub use sim::{run_sample_path, sample_cost, Policy, SimConfig, SimError, Simulation};

pub type Params = ParameterVector<f64>;
pub type State = HybridState<f64>;
pub type Record = EventRecord<f64>;
pub type Trace = sim::EventTrace<f64>;
pub type Config = SimConfig<f64>;
pub type Gradient = [f64; NUM_PARAMS];
