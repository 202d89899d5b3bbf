//! Insurer best response to a quoted reinsurance loading.
//!
//! A CARA insurer facing loading `c` picks the control solving
//! `∫ ∂_a r(z, a) {(1 + c) − e^{γ r(z, a)}} F(dz) = 0`.

use std::cell::RefCell;

use serde::Serialize;
use thiserror::Error;

use crate::contracts::{Contract, ContractError, MIN_PROPORTION};
use crate::measures::{tilted_moment, InsurerSpec, MeasureError};
use crate::numerics::{solve_scalar_root_with_derivative, NumericsError, SolverConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InsurerError {
    #[error("loading {0} must be finite and nonnegative")]
    InvalidLoading(f64),
    #[error("no best response: {0}")]
    NoSolution(String),
    #[error("tilted moment diverges: {0}")]
    Divergent(String),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl From<MeasureError> for InsurerError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Divergent(msg) => InsurerError::Divergent(msg),
            MeasureError::Numerics(n) => InsurerError::Numerics(n),
            other => InsurerError::Contract(ContractError::Measure(other)),
        }
    }
}

pub type Result<T> = std::result::Result<T, InsurerError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub control: f64,
    /// Outcome of [`second_order_check`] at `control`.
    pub second_order: bool,
    /// The control sits on the boundary of its domain rather than at a root.
    pub corner: bool,
}

fn check_loading(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(InsurerError::InvalidLoading(c));
    }
    Ok(())
}

/// Insurer's optimal control `α†[c]`.
pub fn best_response(insurer: &InsurerSpec, contract: &Contract, c: f64) -> Result<BestResponse> {
    best_response_with(insurer, contract, c, &SolverConfig::default())
}

pub fn best_response_with(
    insurer: &InsurerSpec,
    contract: &Contract,
    c: f64,
    cfg: &SolverConfig,
) -> Result<BestResponse> {
    check_loading(c)?;
    let gamma = insurer.risk_aversion;
    let (control, corner) = match contract {
        Contract::ExcessOfLoss | Contract::CappedExcessOfLoss { .. } => (c.ln_1p() / gamma, false),
        Contract::Proportional => proportional_response(insurer, c, cfg)?,
    };
    Ok(BestResponse {
        control,
        second_order: second_order_check(insurer, contract, c, control)?,
        corner,
    })
}

/// Solves `(1 + c) μ = E[Z e^{γ a Z}]` on `[1e-9, 1]`.
fn proportional_response(insurer: &InsurerSpec, c: f64, cfg: &SolverConfig) -> Result<(f64, bool)> {
    let sev = &insurer.severity;
    let gamma = insurer.risk_aversion;
    let target = (1.0 + c) * sev.mean();
    let f = |a: f64| -> Result<(f64, f64)> {
        let m1 = tilted_moment(sev, 1, gamma * a)?;
        let m2 = tilted_moment(sev, 2, gamma * a)?;
        Ok((m1 - target, gamma * m2))
    };

    let lo = MIN_PROPORTION;
    if f(lo)?.0 >= 0.0 {
        return Ok((lo, true));
    }
    // When γ exceeds the tail rate the tilted moment has a pole inside
    // (0, 1]; the residual is +∞ there, so the root lies below it.
    let cap = sev.tail_rate() / gamma;
    let hi = if cap <= 1.0 { cap * (1.0 - 1e-12) } else { 1.0 };
    if hi <= lo {
        return Err(InsurerError::NoSolution("tilted moment diverges on the whole domain".into()));
    }
    if f(hi)?.0 <= 0.0 {
        if hi < 1.0 {
            return Err(InsurerError::NoSolution(format!("residual negative next to the tilt pole at a = {hi}")));
        }
        return Ok((1.0, true));
    }
    let failure = RefCell::new(None);
    let root = solve_scalar_root_with_derivative(
        |a| match f(a) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                (f64::NAN, f64::NAN)
            }
        },
        (lo, hi),
        cfg,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok((root?, false))
}

/// `dα†/dc = ∫ ∂_a r F / (γ ∫ (∂_a r)² e^{γ r} F)` at the best response
/// (the second-derivative term vanishes for the supported contracts).
/// Zero when the response is a corner.
pub fn response_slope(insurer: &InsurerSpec, contract: &Contract, c: f64, response: &BestResponse) -> Result<f64> {
    check_loading(c)?;
    if response.corner {
        return Ok(0.0);
    }
    let gamma = insurer.risk_aversion;
    match contract {
        Contract::ExcessOfLoss | Contract::CappedExcessOfLoss { .. } => Ok(1.0 / (gamma * (1.0 + c))),
        Contract::Proportional => {
            let a = response.control;
            let m2 = tilted_moment(&insurer.severity, 2, gamma * a)?;
            Ok(insurer.severity.mean() / (gamma * m2))
        }
    }
}

/// Left-hand side of the first-order condition at control `a`.
pub fn foc_residual(insurer: &InsurerSpec, contract: &Contract, c: f64, a: f64) -> Result<f64> {
    check_loading(c)?;
    let a = contract.admissible(a)?;
    let gamma = insurer.risk_aversion;
    let sev = &insurer.severity;
    match contract {
        Contract::Proportional => Ok((1.0 + c) * sev.mean() - tilted_moment(sev, 1, gamma * a)?),
        // r = a wherever ∂_a r = 1.
        _ => Ok(contract.control_mass(sev, a) * ((1.0 + c) - (gamma * a).exp())),
    }
}

/// `∫ ∂²_a r(z, a) ((1 + c) − e^{γ r}) F(dz) ≤ 0`.
///
/// All supported retentions are piecewise linear in `a`, so the integrand
/// vanishes almost everywhere and the condition always holds.
pub fn second_order_check(_insurer: &InsurerSpec, contract: &Contract, _c: f64, a: f64) -> Result<bool> {
    contract.admissible(a)?;
    let curvature = match contract {
        Contract::Proportional | Contract::ExcessOfLoss | Contract::CappedExcessOfLoss { .. } => 0.0,
    };
    Ok(curvature <= 0.0)
}
