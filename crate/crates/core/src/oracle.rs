//! Central finite differences with common random numbers, the reference
//! the IPA estimator is checked against.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::{ArrivalProcessSpec, SimMode};
use crate::ipa::Grad;
use crate::model::{EventKind, ParameterVector, NUM_PARAMS};
use crate::scalar::Scalar;
use crate::sim::{run_sample_path, EventTrace, Policy, SimConfig, SimError};

#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("finite differences are only defined on the fluid model")]
    NotFluid,
    #[error("step for parameter {index} collapses to zero after projection")]
    InfeasibleDelta { index: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub delta: [f64; NUM_PARAMS],
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { delta: [1e-3; NUM_PARAMS] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdGradient {
    pub grad: [f64; NUM_PARAMS],
    /// Step actually used on each side after keeping the perturbed vectors feasible.
    pub effective_delta: [f64; NUM_PARAMS],
    /// Both perturbed paths have the same event-kind sequence as the base path.
    pub stable: [bool; NUM_PARAMS],
    pub base_cost: f64,
}

/// Largest step `≤ delta` for which `υ ± step·e_i` stays feasible.
fn feasible_step(params: &[f64; NUM_PARAMS], i: usize, delta: f64) -> f64 {
    let v = params[i];
    // index pairs (θmin, θmax) per road must stay ordered
    let room = match i {
        0 | 2 => (params[i + 1] - v).min(v),
        1 | 3 => v - params[i - 1],
        _ => v,
    };
    delta.min(room.max(0.0))
}

fn signature<T: Scalar>(trace: &EventTrace<T>) -> Vec<(EventKind, u8)> {
    trace.records.iter().map(|r| (r.kind, r.flow)).collect()
}

/// `FD_i = [L(υ + δ_i e_i) − L(υ − δ_i e_i)] / (2δ_i)` with the seed of
/// `spec` used for every evaluation.
pub fn finite_difference_gradient(
    spec: &ArrivalProcessSpec,
    params: &ParameterVector<f64>,
    horizon: f64,
    cfg: &SimConfig<f64>,
    fd: &FdConfig,
) -> Result<FdGradient, OracleError> {
    if spec.mode != SimMode::Fluid {
        return Err(OracleError::NotFluid);
    }
    let base = run_sample_path(spec, params, horizon, Policy::QuasiDynamic, cfg)?;
    let base_sig = signature(&base);
    let raw = *params.as_array();

    let mut steps = [0.0; NUM_PARAMS];
    for i in 0..NUM_PARAMS {
        steps[i] = feasible_step(&raw, i, fd.delta[i]);
        if !(steps[i] > 0.0) {
            return Err(OracleError::InfeasibleDelta { index: i + 1 });
        }
    }

    let evals: Vec<Result<(f64, bool), OracleError>> = (0..2 * NUM_PARAMS)
        .into_par_iter()
        .map(|k| {
            let (i, sign) = (k / 2, if k % 2 == 0 { 1.0 } else { -1.0 });
            let mut v = raw;
            v[i] += sign * steps[i];
            let p = ParameterVector::new(v).map_err(|_| OracleError::InfeasibleDelta { index: i + 1 })?;
            let trace = run_sample_path(spec, &p, horizon, Policy::QuasiDynamic, cfg)?;
            Ok((trace.cost, signature(&trace) == base_sig))
        })
        .collect();

    let mut grad = [0.0; NUM_PARAMS];
    let mut stable = [false; NUM_PARAMS];
    for i in 0..NUM_PARAMS {
        let (plus, s_plus) = evals[2 * i].clone()?;
        let (minus, s_minus) = evals[2 * i + 1].clone()?;
        grad[i] = (plus - minus) / (2.0 * steps[i]);
        stable[i] = s_plus && s_minus;
    }
    Ok(FdGradient {
        grad,
        effective_delta: steps,
        stable,
        base_cost: base.cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientComparison {
    pub ipa: [f64; NUM_PARAMS],
    pub fd: [f64; NUM_PARAMS],
    /// `|ipa − fd| / |fd|` where the coordinate is stable and `|fd| > 1e-3`.
    pub relative_error: [Option<f64>; NUM_PARAMS],
    /// Cosine similarity over the stable coordinates.
    pub cosine: f64,
    pub stable: [bool; NUM_PARAMS],
}

impl GradientComparison {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_error.iter().flatten().fold(0.0, |m, &e| m.max(e))
    }
}

pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

pub fn compare_gradients(ipa: &Grad<f64>, fd: &Grad<f64>, stable: &[bool; NUM_PARAMS]) -> GradientComparison {
    let mut relative_error = [None; NUM_PARAMS];
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..NUM_PARAMS {
        if !stable[i] {
            continue;
        }
        if fd[i].abs() > RELATIVE_ERROR_FLOOR {
            relative_error[i] = Some((ipa[i] - fd[i]).abs() / fd[i].abs());
        }
        dot += ipa[i] * fd[i];
        na += ipa[i] * ipa[i];
        nb += fd[i] * fd[i];
    }
    let cosine = if na > 0.0 && nb > 0.0 {
        (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
    } else if na == 0.0 && nb == 0.0 {
        1.0
    } else {
        0.0
    };
    GradientComparison {
        ipa: *ipa,
        fd: *fd,
        relative_error,
        cosine,
        stable: *stable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors() {
        let g = [1.0, -2.0, 0.5, 0.0, 0.1, 0.2, 3.0, 0.0, 0.0, 1.0];
        let c = compare_gradients(&g, &g, &[true; NUM_PARAMS]);
        assert!((c.cosine - 1.0).abs() < 1e-12);
        assert_eq!(c.max_relative_error(), 0.0);
    }

    #[test]
    fn doubled_ipa() {
        let fd = [1.0, -2.0, 0.5, 0.3, 0.1, 0.2, 3.0, 0.4, 0.6, 1.0];
        let ipa = fd.map(|v| 2.0 * v);
        let c = compare_gradients(&ipa, &fd, &[true; NUM_PARAMS]);
        for e in c.relative_error {
            assert!((e.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unstable_coordinates_excluded() {
        let fd = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let ipa = [1.0, -50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut stable = [true; NUM_PARAMS];
        stable[1] = false;
        let c = compare_gradients(&ipa, &fd, &stable);
        assert!((c.cosine - 1.0).abs() < 1e-12);
        assert_eq!(c.relative_error[1], None);
    }

    #[test]
    fn feasible_step_respects_ordering() {
        let p = [10.0, 10.02, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 0.01, 5.0];
        assert!((feasible_step(&p, 0, 0.05) - 0.02).abs() < 1e-12);
        assert!((feasible_step(&p, 1, 0.05) - 0.02).abs() < 1e-12);
        assert_eq!(feasible_step(&p, 8, 0.05), 0.01);
        assert_eq!(feasible_step(&p, 2, 0.05), 0.05);
    }
}
