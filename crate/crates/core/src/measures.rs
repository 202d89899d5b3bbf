//! Claim-severity models, Poisson compensators and their barycentres.
//!
//! A compensator here is an intensity density `z ↦ ς(z)` on `[0, ∞)` measured
//! in claims per unit time per unit loss. Insurer `k`'s compensator is
//! `v_k(z) = λ_k f_k(z)`. Fields are evaluated in log space so that geometric
//! means and exponential distortions of small densities do not underflow.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use serde::Serialize;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use thiserror::Error;

use crate::numerics::{
    integrate_upper_tail_with_breaks, solve_scalar_root_with_derivative, NumericsError,
    QuadratureConfig, SolverConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("{what} = {value} is outside its domain")]
    OutOfDomain { what: &'static str, value: f64 },
    #[error("invalid severity model: {0}")]
    InvalidModel(String),
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error(transparent)]
    Numerics(NumericsError),
}

impl From<NumericsError> for MeasureError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::Divergent(msg) => MeasureError::Divergent(msg),
            other => MeasureError::Numerics(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, MeasureError>;

// ---------------------------------------------------------------------------
// Severity models
// ---------------------------------------------------------------------------

/// Density given on a grid, linearly interpolated between knots and extended
/// beyond the last knot by an exponential tail fitted to the last two knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Cumulative mass at each knot.
    cumulative: Vec<f64>,
    tail_rate: f64,
    /// Pairs as supplied, before normalization.
    input: Vec<(f64, f64)>,
}

impl TabulatedDensity {
    /// Builds a normalized density from `(z, density)` pairs. The first knot
    /// must be at 0, knots strictly increasing, and the last two densities
    /// positive and decreasing so that an exponential tail exists.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(MeasureError::InvalidModel(
                "tabulated density needs at least two knots".into(),
            ));
        }
        if points[0].0 != 0.0 {
            return Err(MeasureError::InvalidModel(
                "tabulated density must start at z = 0".into(),
            ));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(MeasureError::InvalidModel(
                    "knots must be strictly increasing".into(),
                ));
            }
        }
        if points.iter().any(|&(z, f)| !z.is_finite() || !f.is_finite() || f < 0.0) {
            return Err(MeasureError::InvalidModel(
                "densities must be finite and nonnegative".into(),
            ));
        }
        let n = points.len();
        let (z0, f0) = points[n - 2];
        let (z1, f1) = points[n - 1];
        if !(f1 > 0.0 && f0 > f1) {
            return Err(MeasureError::InvalidModel(
                "last two densities must be positive and decreasing to fit an exponential tail"
                    .into(),
            ));
        }
        let tail_rate = (f0 / f1).ln() / (z1 - z0);

        let knots: Vec<f64> = points.iter().map(|p| p.0).collect();
        let raw: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut cumulative = vec![0.0; n];
        for i in 1..n {
            cumulative[i] = cumulative[i - 1] + 0.5 * (raw[i] + raw[i - 1]) * (knots[i] - knots[i - 1]);
        }
        let total = cumulative[n - 1] + raw[n - 1] / tail_rate;
        if !(total > 0.0) {
            return Err(MeasureError::InvalidModel("density has zero mass".into()));
        }
        let values = raw.iter().map(|f| f / total).collect();
        let cumulative = cumulative.iter().map(|c| c / total).collect();
        Ok(Self {
            knots,
            values,
            cumulative,
            tail_rate,
            input: points.to_vec(),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Normalized `(z, density)` pairs.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.knots.iter().copied().zip(self.values.iter().copied()).collect()
    }

    /// The pairs this density was built from.
    pub fn input_points(&self) -> &[(f64, f64)] {
        &self.input
    }

    pub fn tail_rate(&self) -> f64 {
        self.tail_rate
    }

    fn last(&self) -> (f64, f64) {
        let n = self.knots.len();
        (self.knots[n - 1], self.values[n - 1])
    }

    fn segment(&self, z: f64) -> usize {
        // Index i with knots[i] <= z < knots[i+1].
        match self.knots.binary_search_by(|k| k.total_cmp(&z)) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    fn density(&self, z: f64) -> f64 {
        let (zn, fnv) = self.last();
        if z >= zn {
            return fnv * (-self.tail_rate * (z - zn)).exp();
        }
        let i = self.segment(z);
        let t = (z - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    fn cdf(&self, z: f64) -> f64 {
        let (zn, fnv) = self.last();
        if z >= zn {
            let c = self.cumulative[self.knots.len() - 1];
            return (c + fnv / self.tail_rate * (-(-self.tail_rate * (z - zn)).exp_m1())).min(1.0);
        }
        let i = self.segment(z);
        let dz = z - self.knots[i];
        let f_here = self.density(z);
        (self.cumulative[i] + 0.5 * (self.values[i] + f_here) * dz).min(1.0)
    }

    fn survival(&self, z: f64) -> f64 {
        let (zn, fnv) = self.last();
        if z >= zn {
            return fnv / self.tail_rate * (-self.tail_rate * (z - zn)).exp();
        }
        (1.0 - self.cdf(z)).max(0.0)
    }

    fn mean(&self) -> f64 {
        let mut m = 0.0;
        for i in 0..self.knots.len() - 1 {
            let (a, b) = (self.knots[i], self.knots[i + 1]);
            let (fa, fb) = (self.values[i], self.values[i + 1]);
            // ∫_a^b z (fa + (fb − fa)(z − a)/(b − a)) dz
            let h = b - a;
            m += h * (fa * (2.0 * a + b) + fb * (a + 2.0 * b)) / 6.0;
        }
        let (zn, fnv) = self.last();
        m + fnv / self.tail_rate * (zn + 1.0 / self.tail_rate)
    }
}

/// Parametric or tabulated claim-size distribution on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SeverityModel {
    Exponential { scale: f64 },
    Gamma { shape: f64, scale: f64 },
    Tabulated(TabulatedDensity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeverityQuery {
    Density,
    Cdf,
    Survival,
    Mean,
    Quantile,
}

impl SeverityModel {
    pub fn exponential(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(MeasureError::OutOfDomain { what: "scale", value: scale });
        }
        Ok(Self::Exponential { scale })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(MeasureError::OutOfDomain { what: "shape", value: shape });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(MeasureError::OutOfDomain { what: "scale", value: scale });
        }
        Ok(Self::Gamma { shape, scale })
    }

    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        Ok(Self::Tabulated(TabulatedDensity::new(points)?))
    }

    /// Shape and scale when the model belongs to the gamma family
    /// (exponential being shape 1).
    pub fn gamma_parameters(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Exponential { scale } => Some((1.0, scale)),
            Self::Gamma { shape, scale } => Some((shape, scale)),
            Self::Tabulated(_) => None,
        }
    }

    /// Exponential decay rate of the density tail.
    pub fn tail_rate(&self) -> f64 {
        match self {
            Self::Exponential { scale } | Self::Gamma { scale, .. } => 1.0 / scale,
            Self::Tabulated(t) => t.tail_rate(),
        }
    }

    /// Points where the density is not smooth (useful as quadrature breaks).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Tabulated(t) => t.knots().to_vec(),
            _ => Vec::new(),
        }
    }

    pub fn log_density(&self, z: f64) -> f64 {
        if z < 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Exponential { scale } => -z / scale - scale.ln(),
            Self::Gamma { shape, scale } => {
                if z == 0.0 {
                    return match shape.total_cmp(&1.0) {
                        std::cmp::Ordering::Less => f64::INFINITY,
                        std::cmp::Ordering::Equal => -scale.ln(),
                        std::cmp::Ordering::Greater => f64::NEG_INFINITY,
                    };
                }
                (shape - 1.0) * z.ln() - z / scale - ln_gamma(shape) - shape * scale.ln()
            }
            Self::Tabulated(ref t) => t.density(z).ln(),
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        match self {
            Self::Tabulated(t) if z >= 0.0 => t.density(z),
            _ => self.log_density(z).exp(),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { scale } => -(-z / scale).exp_m1(),
            Self::Gamma { shape, scale } => gamma_lr(shape, z / scale),
            Self::Tabulated(ref t) => t.cdf(z),
        }
    }

    pub fn survival(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential { scale } => (-z / scale).exp(),
            Self::Gamma { shape, scale } => gamma_ur(shape, z / scale),
            Self::Tabulated(ref t) => t.survival(z),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { scale } => scale,
            Self::Gamma { shape, scale } => shape * scale,
            Self::Tabulated(ref t) => t.mean(),
        }
    }

    /// Generalized inverse of the cdf, `inf { z : F(z) ≥ p }`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(MeasureError::OutOfDomain { what: "quantile level", value: p });
        }
        match *self {
            Self::Exponential { scale } => Ok(-scale * (-p).ln_1p()),
            Self::Gamma { shape, scale } => {
                // Wilson–Hilferty start, then Newton–bisection on the cdf.
                let mut hi = shape * scale * 2.0 + 10.0 * scale * shape.sqrt();
                while self.cdf(hi) < p {
                    hi *= 2.0;
                }
                let cfg = SolverConfig {
                    tolerance: 1e-15,
                    ..SolverConfig::default()
                };
                let root = solve_scalar_root_with_derivative(
                    |z| (self.cdf(z) - p, self.density(z)),
                    (0.0, hi),
                    &cfg,
                )?;
                Ok(root)
            }
            Self::Tabulated(ref t) => {
                let (mut lo, mut hi) = (0.0, *t.knots.last().unwrap());
                while t.cdf(hi) < p {
                    lo = hi;
                    hi = 2.0 * hi + 1.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if t.cdf(mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(hi)
            }
        }
    }

    /// Stop-loss transform `E[(Z − a)_+] = ∫_a^∞ F̄(z) dz`.
    pub fn stop_loss(&self, a: f64) -> Result<f64> {
        if a <= 0.0 {
            return Ok(self.mean() - a);
        }
        match *self {
            Self::Exponential { scale } => Ok(scale * (-a / scale).exp()),
            Self::Gamma { shape, scale } => {
                let x = a / scale;
                Ok(shape * scale * gamma_ur(shape + 1.0, x) - a * gamma_ur(shape, x))
            }
            Self::Tabulated(_) => {
                let mut breaks = self.breakpoints();
                breaks.retain(|k| *k > a);
                Ok(integrate_upper_tail_with_breaks(
                    |z| self.survival(z),
                    a,
                    &breaks,
                    &QuadratureConfig::precise(),
                )?)
            }
        }
    }
}

/// Evaluates one of the standard distribution functionals.
pub fn severity_eval(model: &SeverityModel, query: SeverityQuery, arg: f64) -> Result<f64> {
    match query {
        SeverityQuery::Quantile => model.quantile(arg),
        SeverityQuery::Mean => Ok(model.mean()),
        _ if !(arg >= 0.0) => Err(MeasureError::OutOfDomain { what: "loss", value: arg }),
        SeverityQuery::Density => Ok(model.density(arg)),
        SeverityQuery::Cdf => Ok(model.cdf(arg)),
        SeverityQuery::Survival => Ok(model.survival(arg)),
    }
}

/// `E[Z^order e^{tilt Z}]` for `order ∈ {1, 2}`.
pub fn tilted_moment(model: &SeverityModel, order: u32, tilt: f64) -> Result<f64> {
    if !(order == 1 || order == 2) {
        return Err(MeasureError::OutOfDomain {
            what: "moment order",
            value: order as f64,
        });
    }
    if !tilt.is_finite() {
        return Err(MeasureError::OutOfDomain { what: "tilt", value: tilt });
    }
    if tilt >= model.tail_rate() {
        return Err(MeasureError::Divergent(format!(
            "tilt {tilt} reaches the tail rate {}",
            model.tail_rate()
        )));
    }
    match model.gamma_parameters() {
        Some((m, xi)) => {
            let base = 1.0 - tilt * xi;
            Ok(match order {
                1 => m * xi / base.powf(m + 1.0),
                _ => m * (m + 1.0) * xi * xi / base.powf(m + 2.0),
            })
        }
        None => {
            let p = order as i32;
            Ok(integrate_upper_tail_with_breaks(
                |z| z.powi(p) * (tilt * z).exp() * model.density(z),
                0.0,
                &model.breakpoints(),
                &QuadratureConfig::precise(),
            )?)
        }
    }
}

// ---------------------------------------------------------------------------
// Insurers
// ---------------------------------------------------------------------------

/// One insurer's preferences and loss model.
#[derive(Debug, Clone, PartialEq)]
pub struct InsurerSpec {
    /// CARA risk aversion γ.
    pub risk_aversion: f64,
    /// Claim arrival rate λ.
    pub intensity: f64,
    pub severity: SeverityModel,
    /// Insurer's own premium loading θ (only used when simulating wealth).
    pub loading: f64,
    /// Reinsurer's prior weight π on this insurer's model.
    pub weight: f64,
}

impl InsurerSpec {
    pub fn new(
        risk_aversion: f64,
        intensity: f64,
        severity: SeverityModel,
        loading: f64,
        weight: f64,
    ) -> Result<Self> {
        let spec = Self {
            risk_aversion,
            intensity,
            severity,
            loading,
            weight,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("risk aversion", self.risk_aversion), ("intensity", self.intensity)];
        for (what, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MeasureError::OutOfDomain { what, value });
            }
        }
        if !(self.loading >= 0.0 && self.loading.is_finite()) {
            return Err(MeasureError::OutOfDomain { what: "insurer loading", value: self.loading });
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(MeasureError::OutOfDomain { what: "weight", value: self.weight });
        }
        Ok(())
    }

    /// Premium rate collected from policyholders, `(1 + θ) λ μ`.
    pub fn premium_rate(&self) -> f64 {
        (1.0 + self.loading) * self.intensity * self.severity.mean()
    }

    pub fn compensator(&self) -> CompensatorField {
        CompensatorField::insurer(self)
    }
}

// ---------------------------------------------------------------------------
// Compensator fields
// ---------------------------------------------------------------------------

/// Closed-form identification of a field: `total · Gamma(shape, scale)` density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaFamily {
    pub total: f64,
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Integrability {
    Integrable,
    NonIntegrable(String),
    Unknown,
}

impl Integrability {
    pub fn is_integrable(&self) -> bool {
        matches!(self, Integrability::Integrable)
    }
}

type LogDensity = dyn Fn(f64) -> f64 + Send + Sync;

/// Nonnegative intensity density on `[0, ∞)`.
///
/// Immutable after construction; clones share the evaluator.
#[derive(Clone)]
pub struct CompensatorField {
    log_density: Arc<LogDensity>,
    family: Option<GammaFamily>,
    integrability: Integrability,
    breakpoints: Vec<f64>,
    /// Exponential decay rate of the tail when known analytically.
    tail_rate: Option<f64>,
    total: Arc<OnceLock<f64>>,
}

impl fmt::Debug for CompensatorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompensatorField")
            .field("family", &self.family)
            .field("integrability", &self.integrability)
            .field("breakpoints", &self.breakpoints)
            .field("tail_rate", &self.tail_rate)
            .field("total", &self.total.get())
            .finish()
    }
}

impl CompensatorField {
    /// Field from a log-density. Nothing is assumed about integrability.
    pub fn from_log_fn<F>(log_density: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            log_density: Arc::new(log_density),
            family: None,
            integrability: Integrability::Unknown,
            breakpoints: Vec::new(),
            tail_rate: None,
            total: Arc::new(OnceLock::new()),
        }
    }

    /// `v_k(z) = λ_k f_k(z)`.
    pub fn insurer(insurer: &InsurerSpec) -> Self {
        let severity = insurer.severity.clone();
        let log_lambda = insurer.intensity.ln();
        let family = severity.gamma_parameters().map(|(shape, scale)| GammaFamily {
            total: insurer.intensity,
            shape,
            scale,
        });
        let breakpoints = severity.breakpoints();
        let tail_rate = severity.tail_rate();
        let field = Self::from_log_fn(move |z| log_lambda + severity.log_density(z))
            .with_breakpoints(breakpoints)
            .with_tail_rate(tail_rate)
            .with_integrability(Integrability::Integrable)
            .with_total(insurer.intensity);
        match family {
            Some(f) => field.with_family(f),
            None => field,
        }
    }

    pub fn with_family(mut self, family: GammaFamily) -> Self {
        self.family = Some(family);
        self.with_total(family.total)
    }

    pub fn with_integrability(mut self, integrability: Integrability) -> Self {
        self.integrability = integrability;
        self
    }

    pub fn with_breakpoints(mut self, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.retain(|b| b.is_finite() && *b > 0.0);
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        self.breakpoints = breakpoints;
        self
    }

    pub fn with_tail_rate(mut self, rate: f64) -> Self {
        self.tail_rate = Some(rate);
        self
    }

    pub fn with_total(self, total: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(total);
        Self {
            total: Arc::new(cell),
            ..self
        }
    }

    /// `ς(z)`; zero for `z < 0`.
    pub fn eval(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        (self.log_density)(z).exp()
    }

    pub fn log_eval(&self, z: f64) -> f64 {
        if z < 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.log_density)(z)
    }

    pub fn family(&self) -> Option<GammaFamily> {
        self.family
    }

    pub fn integrability(&self) -> &Integrability {
        &self.integrability
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn tail_rate(&self) -> Option<f64> {
        self.tail_rate
    }

    /// Cached total mass, if it has been set or computed.
    pub fn cached_total(&self) -> Option<f64> {
        self.total.get().copied()
    }

    /// `ς(z) / Λ`.
    pub fn normalized(&self, z: f64) -> Result<f64> {
        Ok(self.eval(z) / total_intensity(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarycentreKind {
    Arithmetic,
    Geometric,
}

fn check_weights(insurers: &[InsurerSpec]) -> Result<()> {
    if insurers.is_empty() {
        return Err(MeasureError::InvalidModel("barycentre of an empty market".into()));
    }
    let sum: f64 = insurers.iter().map(|i| i.weight).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MeasureError::OutOfDomain { what: "sum of weights", value: sum });
    }
    Ok(())
}

/// Weighted arithmetic `Σ π_k v_k` or geometric `Π v_k^{π_k}` mean of the
/// insurers' compensators.
pub fn barycentre_density(insurers: &[InsurerSpec], kind: BarycentreKind) -> Result<CompensatorField> {
    check_weights(insurers)?;
    let parts: Vec<(f64, f64, SeverityModel)> = insurers
        .iter()
        .filter(|i| i.weight > 0.0)
        .map(|i| (i.weight, i.intensity.ln(), i.severity.clone()))
        .collect();
    let mut breakpoints: Vec<f64> = parts.iter().flat_map(|p| p.2.breakpoints()).collect();
    breakpoints.sort_by(f64::total_cmp);

    match kind {
        BarycentreKind::Arithmetic => {
            let total: f64 = insurers.iter().map(|i| i.weight * i.intensity).sum();
            let tail_rate = parts.iter().map(|p| p.2.tail_rate()).fold(f64::INFINITY, f64::min);
            let single = if parts.len() == 1 {
                parts[0].2.gamma_parameters()
            } else {
                None
            };
            let field = CompensatorField::from_log_fn(move |z| {
                let s: f64 = parts.iter().map(|(w, ll, sev)| w * (ll + sev.log_density(z)).exp()).sum();
                s.ln()
            })
            .with_breakpoints(breakpoints)
            .with_tail_rate(tail_rate)
            .with_integrability(Integrability::Integrable)
            .with_total(total);
            Ok(match single {
                Some((shape, scale)) => field.with_family(GammaFamily { total, shape, scale }),
                None => field,
            })
        }
        BarycentreKind::Geometric => {
            let tail_rate: f64 = parts.iter().map(|p| p.0 * p.2.tail_rate()).sum();
            let family = geometric_gamma_family(&parts);
            let warned = Arc::new(AtomicBool::new(false));
            let field = CompensatorField::from_log_fn(move |z| {
                let mut s = 0.0;
                for (w, ll, sev) in &parts {
                    let l = sev.log_density(z);
                    if l == f64::NEG_INFINITY && !warned.swap(true, Ordering::Relaxed) {
                        log::warn!("geometric barycentre: compensator vanishes at z = {z}; supports differ");
                    }
                    s += w * (ll + l);
                }
                s
            })
            .with_breakpoints(breakpoints)
            .with_tail_rate(tail_rate)
            .with_integrability(Integrability::Integrable);
            Ok(match family {
                Some(f) => field.with_family(f),
                None => field,
            })
        }
    }
}

/// Geometric mean of gamma-family compensators is again gamma:
/// shape `Σπ m_k`, rate `Σπ/ξ_k`.
fn geometric_gamma_family(parts: &[(f64, f64, SeverityModel)]) -> Option<GammaFamily> {
    let params: Option<Vec<(f64, f64, f64, f64)>> = parts
        .iter()
        .map(|(w, ll, sev)| sev.gamma_parameters().map(|(m, xi)| (*w, *ll, m, xi)))
        .collect();
    let params = params?;
    let shape: f64 = params.iter().map(|p| p.0 * p.2).sum();
    let rate: f64 = params.iter().map(|p| p.0 / p.3).sum();
    Some(GammaFamily {
        total: gamma_family_total(&params, shape, 1.0 / rate),
        shape,
        scale: 1.0 / rate,
    })
}

/// `Λ = ξ̃^{m̃} Γ(m̃) Π (λ_k / (Γ(m_k) ξ_k^{m_k}))^{π_k}` for weights, log-intensities,
/// shapes and scales given as `(π, ln λ, m, ξ)`.
pub(crate) fn gamma_family_total(params: &[(f64, f64, f64, f64)], shape: f64, scale: f64) -> f64 {
    let log_prefactor: f64 = params
        .iter()
        .map(|&(w, ll, m, xi)| w * (ll - ln_gamma(m) - m * xi.ln()))
        .sum();
    (shape * scale.ln() + ln_gamma(shape) + log_prefactor).exp()
}

fn union_breaks(a: &CompensatorField, b: &CompensatorField) -> Vec<f64> {
    let mut v: Vec<f64> = a.breakpoints().iter().chain(b.breakpoints()).copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// KL divergence rate `∫ (ς log(ς/v) − ς + v) dz` between two compensators.
pub fn kl_rate(candidate: &CompensatorField, reference: &CompensatorField) -> Result<f64> {
    kl_rate_with(candidate, reference, &QuadratureConfig::precise())
}

pub fn kl_rate_with(
    candidate: &CompensatorField,
    reference: &CompensatorField,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let integrand = |z: f64| {
        let ls = candidate.log_eval(z);
        let lv = reference.log_eval(z);
        let s = ls.exp();
        let v = lv.exp();
        if s == 0.0 {
            return v;
        }
        if v == 0.0 {
            // Candidate puts mass where the reference has none.
            return f64::INFINITY;
        }
        // s (ls − lv) − s + v, written to keep cancellation small when s ≈ v.
        let d = ls - lv;
        v * (d.exp() * d - d.exp_m1())
    };
    let value = integrate_upper_tail_with_breaks(integrand, 0.0, &union_breaks(candidate, reference), cfg)
        .map_err(|e| match e {
            NumericsError::NonFinite { at } => MeasureError::Divergent(format!(
                "candidate is not absolutely continuous w.r.t. the reference at z = {at}"
            )),
            other => other.into(),
        })?;
    Ok(value.max(0.0))
}

/// Total intensity `Λ = ∫ ς(z) dz`.
pub fn total_intensity(field: &CompensatorField) -> Result<f64> {
    total_intensity_with(field, &QuadratureConfig::precise())
}

pub fn total_intensity_with(field: &CompensatorField, cfg: &QuadratureConfig) -> Result<f64> {
    if let Some(t) = field.cached_total() {
        return Ok(t);
    }
    if let Integrability::NonIntegrable(reason) = field.integrability() {
        return Err(MeasureError::Divergent(reason.clone()));
    }
    let value = integrate_upper_tail_with_breaks(|z| field.eval(z), 0.0, field.breakpoints(), cfg)?;
    let _ = field.total.set(value);
    Ok(value)
}
