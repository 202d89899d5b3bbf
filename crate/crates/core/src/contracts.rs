//! Retention functions, expected-value premiums and the reinsurer's
//! aggregate loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{InsurerSpec, MeasureError, SeverityModel};

/// Smallest admissible proportional retention.
pub const MIN_PROPORTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractError {
    #[error("control {control} is outside the domain of {kind} contracts")]
    ControlOutOfDomain { kind: ContractKind, control: f64 },
    #[error("invalid layer limit {0}")]
    InvalidLimit(f64),
    #[error("ceded loss integral diverges: {0}")]
    Divergent(String),
    #[error(transparent)]
    Measure(MeasureError),
}

impl From<MeasureError> for ContractError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Divergent(msg) => ContractError::Divergent(msg),
            other => ContractError::Measure(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, ContractError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractKind {
    Proportional,
    ExcessOfLoss,
    CappedExcessOfLoss,
}

impl std::fmt::Display for ContractKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContractKind::Proportional => "proportional",
            ContractKind::ExcessOfLoss => "excess-of-loss",
            ContractKind::CappedExcessOfLoss => "capped-excess-of-loss",
        })
    }
}

impl std::str::FromStr for ContractKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "proportional" => Ok(ContractKind::Proportional),
            "xl" | "excess-of-loss" => Ok(ContractKind::ExcessOfLoss),
            "capped-xl" | "capped-excess-of-loss" => Ok(ContractKind::CappedExcessOfLoss),
            other => Err(format!("unknown contract kind `{other}`")),
        }
    }
}

/// A reinsurance treaty shape. The control `a` is the retained proportion
/// (proportional) or the retention level (XL variants).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Contract {
    Proportional,
    ExcessOfLoss,
    CappedExcessOfLoss { limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetentionOutput {
    Value,
    /// `∂_a r(z, a)`.
    ControlDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PremiumSide {
    Insurer,
    Reinsurer,
}

impl Contract {
    pub fn capped(limit: f64) -> Result<Self> {
        if !(limit > 0.0) || limit.is_nan() {
            return Err(ContractError::InvalidLimit(limit));
        }
        Ok(Contract::CappedExcessOfLoss { limit })
    }

    /// Builds a contract of `kind`; `limit` is only read for capped XL.
    pub fn of_kind(kind: ContractKind, limit: Option<f64>) -> Result<Self> {
        match kind {
            ContractKind::Proportional => Ok(Contract::Proportional),
            ContractKind::ExcessOfLoss => Ok(Contract::ExcessOfLoss),
            ContractKind::CappedExcessOfLoss => Self::capped(limit.unwrap_or(f64::NAN)),
        }
    }

    pub fn kind(&self) -> ContractKind {
        match self {
            Contract::Proportional => ContractKind::Proportional,
            Contract::ExcessOfLoss => ContractKind::ExcessOfLoss,
            Contract::CappedExcessOfLoss { .. } => ContractKind::CappedExcessOfLoss,
        }
    }

    pub fn limit(&self) -> Option<f64> {
        match *self {
            Contract::CappedExcessOfLoss { limit } => Some(limit),
            _ => None,
        }
    }

    /// Checks `a ∈ 𝒜` and maps it to the value used in computations
    /// (proportional controls are clamped to `[1e-9, 1]`).
    pub fn admissible(&self, a: f64) -> Result<f64> {
        let err = || ContractError::ControlOutOfDomain { kind: self.kind(), control: a };
        if !a.is_finite() {
            return Err(err());
        }
        match self {
            Contract::Proportional => {
                if a <= 0.0 || a > 1.0 + 1e-12 {
                    return Err(err());
                }
                Ok(a.clamp(MIN_PROPORTION, 1.0))
            }
            _ => {
                if a < 0.0 {
                    return Err(err());
                }
                Ok(a)
            }
        }
    }

    /// `r(z, a)` for an already-admissible control.
    pub fn value(&self, z: f64, a: f64) -> f64 {
        match *self {
            Contract::Proportional => a * z,
            Contract::ExcessOfLoss => a.min(z),
            Contract::CappedExcessOfLoss { limit } => {
                if z <= a + limit {
                    a.min(z)
                } else {
                    z - limit
                }
            }
        }
    }

    /// `∂_a r(z, a)`, left-continuous at the kinks.
    pub fn control_derivative(&self, z: f64, a: f64) -> f64 {
        match *self {
            Contract::Proportional => z,
            Contract::ExcessOfLoss => indicator(a <= z),
            Contract::CappedExcessOfLoss { limit } => indicator(a <= z && z <= a + limit),
        }
    }

    /// Ceded part `z − r(z, a)`.
    pub fn ceded(&self, z: f64, a: f64) -> f64 {
        match *self {
            Contract::Proportional => (1.0 - a) * z,
            Contract::ExcessOfLoss => (z - a).max(0.0),
            Contract::CappedExcessOfLoss { limit } => (z - a).clamp(0.0, limit),
        }
    }

    /// Kinks of `z ↦ r(z, a)`.
    pub fn kinks(&self, a: f64) -> Vec<f64> {
        match *self {
            Contract::Proportional => Vec::new(),
            Contract::ExcessOfLoss => vec![a],
            Contract::CappedExcessOfLoss { limit } => vec![a, a + limit],
        }
    }

    /// Asymptotic slope of `z ↦ z − r(z, a)`.
    pub fn ceded_tail_slope(&self, a: f64) -> f64 {
        match self {
            Contract::Proportional => 1.0 - a,
            Contract::ExcessOfLoss => 1.0,
            Contract::CappedExcessOfLoss { .. } => 0.0,
        }
    }

    /// Expected ceded loss per claim `∫ (z − r(z, a)) F(dz)`.
    pub fn expected_ceded(&self, severity: &SeverityModel, a: f64) -> Result<f64> {
        Ok(match *self {
            Contract::Proportional => (1.0 - a) * severity.mean(),
            Contract::ExcessOfLoss => severity.stop_loss(a)?,
            Contract::CappedExcessOfLoss { limit } => {
                (severity.stop_loss(a)? - severity.stop_loss(a + limit)?).max(0.0)
            }
        })
    }

    /// `∫ ∂_a r(z, a) F(dz)`.
    pub fn control_mass(&self, severity: &SeverityModel, a: f64) -> f64 {
        match *self {
            Contract::Proportional => severity.mean(),
            Contract::ExcessOfLoss => severity.survival(a),
            Contract::CappedExcessOfLoss { limit } => {
                (severity.survival(a) - severity.survival(a + limit)).max(0.0)
            }
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Retention `r(z, a)` or its control derivative.
pub fn retention(contract: &Contract, z: f64, a: f64, output: RetentionOutput) -> Result<f64> {
    let a = contract.admissible(a)?;
    if !(z >= 0.0) {
        return Err(ContractError::Measure(MeasureError::OutOfDomain { what: "loss", value: z }));
    }
    Ok(match output {
        RetentionOutput::Value => contract.value(z, a),
        RetentionOutput::ControlDerivative => contract.control_derivative(z, a),
    })
}

/// Premium rate under the expected-value principle.
///
/// The insurer side is `(1 + loading) λ μ` and ignores the contract and
/// control; the reinsurer side is `(1 + loading) λ ∫ (z − r(z, a)) F(dz)`.
pub fn premium(
    side: PremiumSide,
    insurer: &InsurerSpec,
    contract: &Contract,
    a: f64,
    loading: f64,
) -> Result<f64> {
    if !(loading >= 0.0) || !loading.is_finite() {
        return Err(ContractError::Measure(MeasureError::OutOfDomain { what: "loading", value: loading }));
    }
    match side {
        PremiumSide::Insurer => Ok((1.0 + loading) * insurer.intensity * insurer.severity.mean()),
        PremiumSide::Reinsurer => {
            let a = contract.admissible(a)?;
            let ceded = contract.expected_ceded(&insurer.severity, a)?;
            if !ceded.is_finite() {
                return Err(ContractError::Divergent("expected ceded loss".into()));
            }
            Ok((1.0 + loading) * insurer.intensity * ceded)
        }
    }
}

/// `L(z, α) = Σ_k [z − r_k(z, α_k)]`.
///
/// # Panics
/// If `contracts` and `alpha` differ in length.
pub fn aggregate_loss(contracts: &[Contract], alpha: &[f64], z: f64) -> f64 {
    assert_eq!(contracts.len(), alpha.len(), "one control per contract");
    contracts.iter().zip(alpha).map(|(c, &a)| c.ceded(z, a)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_insurer(scale: f64, intensity: f64) -> InsurerSpec {
        InsurerSpec::new(0.5, intensity, SeverityModel::exponential(scale).unwrap(), 0.2, 1.0).unwrap()
    }

    #[test]
    fn retention_values() {
        use RetentionOutput::*;
        assert_eq!(retention(&Contract::Proportional, 3.0, 0.5, Value).unwrap(), 1.5);
        assert_eq!(retention(&Contract::ExcessOfLoss, 3.0, 1.0, Value).unwrap(), 1.0);
        let capped = Contract::capped(2.0).unwrap();
        assert_eq!(retention(&capped, 5.0, 1.0, Value).unwrap(), 3.0);
        assert_eq!(retention(&capped, 2.5, 1.0, Value).unwrap(), 1.0);
        assert_eq!(retention(&capped, 0.5, 1.0, Value).unwrap(), 0.5);
    }

    #[test]
    fn derivatives_are_left_continuous_indicators() {
        use RetentionOutput::*;
        let capped = Contract::capped(2.0).unwrap();
        assert_eq!(retention(&Contract::Proportional, 3.0, 0.5, ControlDerivative).unwrap(), 3.0);
        assert_eq!(retention(&Contract::ExcessOfLoss, 1.0, 1.0, ControlDerivative).unwrap(), 1.0);
        assert_eq!(retention(&Contract::ExcessOfLoss, 0.99, 1.0, ControlDerivative).unwrap(), 0.0);
        assert_eq!(retention(&capped, 3.0, 1.0, ControlDerivative).unwrap(), 1.0);
        assert_eq!(retention(&capped, 3.01, 1.0, ControlDerivative).unwrap(), 0.0);
    }

    #[test]
    fn control_domain() {
        use RetentionOutput::*;
        assert!(retention(&Contract::Proportional, 1.0, 0.0, Value).is_err());
        assert!(retention(&Contract::Proportional, 1.0, 1.5, Value).is_err());
        assert!(retention(&Contract::ExcessOfLoss, 1.0, -0.1, Value).is_err());
        assert!(retention(&Contract::ExcessOfLoss, 1.0, f64::NAN, Value).is_err());
        assert_eq!(Contract::Proportional.admissible(1e-12).unwrap(), MIN_PROPORTION);
        assert!(Contract::capped(0.0).is_err());
        assert!(Contract::of_kind(ContractKind::CappedExcessOfLoss, None).is_err());
    }

    #[test]
    fn premiums() {
        let ins = exp_insurer(1.0, 2.0);
        let p = premium(PremiumSide::Reinsurer, &ins, &Contract::Proportional, 1.0, 0.7).unwrap();
        assert_eq!(p, 0.0);
        let a = 2.0 * 2f64.ln();
        let p = premium(PremiumSide::Reinsurer, &ins, &Contract::ExcessOfLoss, a, 1.0).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
        let g = InsurerSpec::new(0.5, 2.0, SeverityModel::gamma(1.5, 1.0).unwrap(), 0.2, 1.0).unwrap();
        let p = premium(PremiumSide::Insurer, &g, &Contract::ExcessOfLoss, 3.0, 0.2).unwrap();
        assert!((p - 3.6).abs() < 1e-14);
        assert!(premium(PremiumSide::Insurer, &g, &Contract::ExcessOfLoss, 3.0, -0.2).is_err());
    }

    #[test]
    fn capped_premium_approaches_uncapped() {
        let ins = exp_insurer(1.25, 2.5);
        let a = 1.3;
        let uncapped = premium(PremiumSide::Reinsurer, &ins, &Contract::ExcessOfLoss, a, 0.5).unwrap();
        let capped = premium(PremiumSide::Reinsurer, &ins, &Contract::capped(40.0 * 1.25).unwrap(), a, 0.5).unwrap();
        assert!((uncapped - capped).abs() / uncapped < 1e-6);
    }

    #[test]
    fn aggregate_losses() {
        let xl = [Contract::ExcessOfLoss, Contract::ExcessOfLoss];
        assert_eq!(aggregate_loss(&xl, &[1.84, 1.56], 1.0), 0.0);
        let prop = [Contract::Proportional, Contract::Proportional];
        assert!((aggregate_loss(&prop, &[0.6, 0.8], 10.0) - 6.0).abs() < 1e-14);
        let c = Contract::capped(1.0).unwrap();
        assert_eq!(aggregate_loss(&[c, c], &[1.8387, 1.5632], 10.0), 2.0);
    }

    #[test]
    fn control_mass_matches_derivative_integral() {
        let sev = SeverityModel::gamma(2.0, 1.25).unwrap();
        let c = Contract::capped(1.5).unwrap();
        let a = 0.8;
        let direct = crate::numerics::integrate_with_breaks(
            |z| c.control_derivative(z, a) * sev.density(z),
            0.0,
            5.0,
            &c.kinks(a),
            &crate::numerics::QuadratureConfig::precise(),
        )
        .unwrap();
        assert!((direct - c.control_mass(&sev, a)).abs() < 1e-12);
    }
}
