//! Closed-form equilibria for gamma severities under proportional treaties
//! and exponential severities under (capped) excess-of-loss treaties.
//!
//! These are derived independently of the general quadrature-based solver
//! and serve as its reference.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::measures::InsurerSpec;
use crate::numerics::{
    solve_fixed_point_system, solve_scalar_root, solve_scalar_root_with_derivative, NumericsError,
    SolverConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("distorted compensator is not integrable: {0}")]
    NonIntegrable(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaProportionalSolution {
    pub controls: Vec<f64>,
    pub loadings: Vec<f64>,
    /// Shape `m̃` of the pricing severity.
    pub shape: f64,
    /// Scale `ξ̃` of the pricing severity.
    pub scale: f64,
    /// Total intensity `Λ` of the pricing compensator.
    pub total_intensity: f64,
}

fn oracle_solver() -> SolverConfig {
    SolverConfig {
        tolerance: 1e-15,
        max_iterations: 400,
        ..SolverConfig::default()
    }
}

fn check_weights(insurers: &[InsurerSpec]) -> Result<()> {
    if insurers.is_empty() {
        return Err(OracleError::ConstraintViolated("no insurers".into()));
    }
    let sum: f64 = insurers.iter().map(|i| i.weight).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(OracleError::ConstraintViolated(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Equilibrium of the proportional game with gamma severities and an
/// expected-wealth reinsurer.
///
/// The pricing compensator is `Λ · Gamma(m̃, ξ̃)` with `m̃ = Σ π_k m_k`,
/// `1/ξ̃ = Σ π_k/ξ_k − ε Σ (1 − α_k)`. Each retention solves
/// `0 = −u^{−(m+1)} + γ(1+m)ξ(1−α) u^{−(m+2)} + m̃ξ̃Λ/(mξλ)` with
/// `u = 1 − αγξ`; the coupling through `Σ (1 − α_k)` is resolved by an outer
/// scalar root.
pub fn gamma_proportional_oracle(insurers: &[InsurerSpec], ambiguity: f64) -> Result<GammaProportionalSolution> {
    check_weights(insurers)?;
    let n = insurers.len() as f64;
    let mut params = Vec::with_capacity(insurers.len());
    for (k, ins) in insurers.iter().enumerate() {
        let (m, xi) = ins.severity.gamma_parameters().ok_or_else(|| {
            OracleError::ConstraintViolated(format!("insurer {} is not gamma distributed", k + 1))
        })?;
        let mut bound = 1.0 / ins.risk_aversion;
        if ambiguity > 0.0 {
            bound = bound.min(1.0 / (n * ambiguity));
        }
        if xi > bound {
            return Err(OracleError::ConstraintViolated(format!(
                "insurer {}: xi = {xi} exceeds min(1/gamma, 1/(n eps)) = {bound}",
                k + 1
            )));
        }
        params.push((ins.weight, ins.intensity, m, xi, ins.risk_aversion));
    }
    let shape: f64 = params.iter().map(|p| p.0 * p.2).sum();
    let rate0: f64 = params.iter().map(|p| p.0 / p.3).sum();
    // log Π (λ/(Γ(m) ξ^m))^π
    let log_k: f64 = params
        .iter()
        .map(|&(w, l, m, xi, _)| w * (l.ln() - ln_gamma(m) - m * xi.ln()))
        .sum();

    let pricing = |s: f64| {
        let scale = 1.0 / (rate0 - ambiguity * s);
        let total = (log_k + ln_gamma(shape) + shape * scale.ln()).exp();
        (scale, total)
    };
    let cfg = oracle_solver();
    let retentions = |s: f64| -> Result<Vec<f64>> {
        let (scale, total) = pricing(s);
        params
            .iter()
            .map(|&(_, l, m, xi, g)| {
                let q = shape * scale * total / (m * xi * l);
                let p = g * xi;
                let eq = |a: f64| {
                    let u = 1.0 - p * a;
                    let f = -u.powf(-(m + 1.0)) + p * (1.0 + m) * (1.0 - a) * u.powf(-(m + 2.0)) + q;
                    let df = -2.0 * (m + 1.0) * p * u.powf(-(m + 2.0))
                        + p * p * (1.0 + m) * (m + 2.0) * (1.0 - a) * u.powf(-(m + 3.0));
                    (f, df)
                };
                let (lo, hi) = (crate::contracts::MIN_PROPORTION, 1.0);
                let f_hi = eq(hi).0;
                if f_hi >= 0.0 || f_hi.is_nan() {
                    // Reinsurance priced above the full-retention threshold.
                    return Ok(1.0);
                }
                if eq(lo).0 <= 0.0 {
                    return Ok(lo);
                }
                Ok(solve_scalar_root_with_derivative(eq, (lo, hi), &cfg)?)
            })
            .collect()
    };

    let s_max = if ambiguity > 0.0 {
        n.min(rate0 / ambiguity * (1.0 - 1e-12))
    } else {
        n
    };
    let mut failure = None;
    let h = |s: f64| match retentions(s) {
        Ok(a) => s - a.iter().map(|ak| 1.0 - ak).sum::<f64>(),
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let h = std::cell::RefCell::new(h);
    let s = solve_scalar_root(|s| (h.borrow_mut())(s), (0.0, s_max), &cfg);
    if let Some(e) = failure {
        return Err(e);
    }
    let s = s.map_err(|e| OracleError::NoSolution(format!("ceded-share coupling: {e}")))?;
    let controls = retentions(s)?;
    let (scale, total) = pricing(s);
    let loadings = params
        .iter()
        .zip(&controls)
        .map(|(&(_, l, m, xi, g), &a)| {
            if a >= 1.0 {
                // Corner: only the pricing term remains.
                shape * scale * total / (m * xi * l) - 1.0
            } else {
                (1.0 - a * g * xi).powf(-(m + 1.0)) - 1.0
            }
        })
        .collect();
    Ok(GammaProportionalSolution {
        controls,
        loadings,
        shape,
        scale,
        total_intensity: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessOfLossSolution {
    pub controls: Vec<f64>,
    pub loadings: Vec<f64>,
    /// `p_k^R = (1 + η_k) λ_k ∫_{α_k}^{α_k + ℓ_k} F̄_k(z) dz`.
    pub premiums: Vec<f64>,
}

/// Exponential-family data `(π, λ, ξ, γ)` with optional layer limits.
struct ExpMarket {
    weight: Vec<f64>,
    intensity: Vec<f64>,
    scale: Vec<f64>,
    gamma: Vec<f64>,
    limit: Vec<f64>,
    log_k: f64,
    rate: f64,
    ambiguity: f64,
}

impl ExpMarket {
    fn new(insurers: &[InsurerSpec], limits: Option<&[f64]>, ambiguity: f64) -> Result<Self> {
        check_weights(insurers)?;
        let n = insurers.len();
        let limit = match limits {
            Some(l) if l.len() == n => l.to_vec(),
            Some(l) => {
                return Err(OracleError::ConstraintViolated(format!("{} limits for {n} insurers", l.len())))
            }
            None => vec![f64::INFINITY; n],
        };
        if limit.iter().any(|l| !(*l > 0.0)) {
            return Err(OracleError::ConstraintViolated("limits must be positive".into()));
        }
        let mut scale = Vec::with_capacity(n);
        for (k, ins) in insurers.iter().enumerate() {
            match ins.severity {
                crate::measures::SeverityModel::Exponential { scale: xi } => {
                    if ins.risk_aversion * xi >= 1.0 {
                        return Err(OracleError::ConstraintViolated(format!(
                            "insurer {}: gamma * xi = {} must be below 1",
                            k + 1,
                            ins.risk_aversion * xi
                        )));
                    }
                    scale.push(xi)
                }
                _ => {
                    return Err(OracleError::ConstraintViolated(format!(
                        "insurer {} is not exponentially distributed",
                        k + 1
                    )))
                }
            }
        }
        let weight: Vec<f64> = insurers.iter().map(|i| i.weight).collect();
        let intensity: Vec<f64> = insurers.iter().map(|i| i.intensity).collect();
        let log_k = weight.iter().zip(&intensity).zip(&scale).map(|((w, l), xi)| w * (l / xi).ln()).sum();
        let rate = weight.iter().zip(&scale).map(|(w, xi)| w / xi).sum();
        Ok(Self {
            weight,
            intensity,
            scale,
            gamma: insurers.iter().map(|i| i.risk_aversion).collect(),
            limit,
            log_k,
            rate,
            ambiguity,
        })
    }

    /// `ln ς(z) = ln K − ρ z + ε Σ min((z − α_j)_+, ℓ_j)` is piecewise
    /// linear; integrate `ς` over `[lo, hi]` segment by segment.
    fn integral(&self, alpha: &[f64], lo: f64, hi: f64) -> Result<f64> {
        let mut knots: Vec<f64> = alpha
            .iter()
            .zip(&self.limit)
            .flat_map(|(&a, &l)| [a, a + l])
            .filter(|&x| x.is_finite() && x > lo && x < hi)
            .collect();
        knots.sort_by(f64::total_cmp);
        let log_s = |z: f64| {
            let loss: f64 = alpha.iter().zip(&self.limit).map(|(&a, &l)| (z - a).clamp(0.0, l)).sum();
            self.log_k - self.rate * z + self.ambiguity * loss
        };
        let slope_after = |z: f64| {
            let active = alpha
                .iter()
                .zip(&self.limit)
                .filter(|(&a, &l)| a <= z && z < a + l)
                .count() as f64;
            -self.rate + self.ambiguity * active
        };
        let mut total = 0.0;
        let mut left = lo;
        for right in knots.into_iter().chain(std::iter::once(hi)) {
            let s = slope_after(left);
            let e0 = log_s(left);
            if right.is_infinite() {
                if s >= 0.0 {
                    return Err(OracleError::NonIntegrable(format!(
                        "tail exponent slope {s} is not negative"
                    )));
                }
                total += e0.exp() / -s;
                break;
            }
            let h = right - left;
            total += if s == 0.0 { e0.exp() * h } else { e0.exp() * (s * h).exp_m1() / s };
            left = right;
        }
        Ok(total)
    }

    fn layer_mass(&self, k: usize) -> f64 {
        // 1 − e^{−ℓ/ξ}
        -(-self.limit[k] / self.scale[k]).exp_m1()
    }

    fn solve(&self) -> Result<ExcessOfLossSolution> {
        let n = self.weight.len();
        let map = |alpha: &[f64]| -> Result<Vec<f64>> {
            (0..n)
                .map(|k| {
                    let (g, xi, l) = (self.gamma[k], self.scale[k], self.intensity[k]);
                    let a = alpha[k].max(0.0);
                    let i = self.integral(alpha, a, a + self.limit[k])?;
                    let denom_log = l.ln() - a / xi + (1.0 - g * xi).ln() + self.layer_mass(k).ln();
                    Ok(alpha[k] - (i.ln() - denom_log) / g)
                })
                .collect()
        };
        let alpha0: Vec<f64> = (0..n)
            .map(|k| -(1.0 - self.gamma[k] * self.scale[k]).ln() / self.gamma[k])
            .collect();
        let sol = solve_fixed_point_system(map, &alpha0, &oracle_solver())?;
        let controls = sol.x;
        if controls.iter().any(|&a| a < 0.0) {
            return Err(OracleError::NoSolution(format!("negative retention {controls:?}")));
        }
        let loadings: Vec<f64> = controls.iter().zip(&self.gamma).map(|(a, g)| (g * a).exp_m1()).collect();
        let premiums = (0..n)
            .map(|k| {
                (1.0 + loadings[k])
                    * self.intensity[k]
                    * self.scale[k]
                    * (-controls[k] / self.scale[k]).exp()
                    * self.layer_mass(k)
            })
            .collect();
        Ok(ExcessOfLossSolution {
            controls,
            loadings,
            premiums,
        })
    }
}

/// Equilibrium of the uncapped excess-of-loss game with exponential
/// severities and an expected-wealth reinsurer.
///
/// Retentions solve
/// `e^{γ_k α_k} (1 − γ_k ξ_k) λ_k e^{−α_k/ξ_k} = ∫_{α_k}^∞ v^g(z) e^{ε Σ_j (z − α_j)_+} dz`.
pub fn exponential_xl_oracle(insurers: &[InsurerSpec], ambiguity: f64) -> Result<ExcessOfLossSolution> {
    let market = ExpMarket::new(insurers, None, ambiguity)?;
    let n = insurers.len() as f64;
    if ambiguity * n >= market.rate {
        return Err(OracleError::NonIntegrable(format!(
            "n eps = {} is not below the barycentre rate {}",
            ambiguity * n,
            market.rate
        )));
    }
    market.solve()
}

/// Capped excess-of-loss counterpart of [`exponential_xl_oracle`] with
/// layer widths `limits`; the distorted compensator is always integrable.
pub fn capped_xl_oracle(insurers: &[InsurerSpec], ambiguity: f64, limits: &[f64]) -> Result<ExcessOfLossSolution> {
    ExpMarket::new(insurers, Some(limits), ambiguity)?.solve()
}
