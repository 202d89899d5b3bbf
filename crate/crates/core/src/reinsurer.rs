//! Reinsurer pricing: distorted compensator, loading fixed point and the
//! Stackelberg equilibrium.
//!
//! Given insurer controls `α`, the ambiguity-averse reinsurer prices under
//! `ς(z) = v^g(z) exp(ε L(z, α))` (expected-wealth objective) or
//! `ς(z) = v^g(z) exp((ε/m)(e^{m L(z, α)} − 1))` (CARA objective with risk
//! aversion `m`), where `v^g` is the weighted geometric mean of the insurers'
//! compensators and `L` the aggregate ceded loss.
//!
//! The loading for insurer `k` solves
//!
//! ```text
//! 1 + c_k = A_k / (s_k C_k) + B_k / C_k
//! A_k = λ_k ∫ (z − r_k) F_k(dz)
//! B_k = ∫ ∂_a r_k · w · ς dz          (w = 1, or e^{m L} for CARA)
//! C_k = λ_k ∫ ∂_a r_k F_k(dz)
//! s_k = dα_k†/dc
//! ```
//!
//! with every quantity evaluated at the best response `α_k†[c_k]`.

use serde::Serialize;
use thiserror::Error;

use crate::contracts::{premium, Contract, ContractError, ContractKind, PremiumSide};
use crate::insurer::{best_response_with, response_slope, BestResponse, InsurerError};
use crate::measures::{
    barycentre_density, total_intensity_with, BarycentreKind, CompensatorField, InsurerSpec,
    Integrability, MeasureError, SeverityModel,
};
use crate::numerics::{
    integrate_upper_tail_with_breaks, integrate_with_breaks, lambert_w, solve_fixed_point_system,
    LambertBranch, NumericsError, QuadratureConfig, SolverConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReinsurerError {
    #[error("invalid market: {0}")]
    Validation(String),
    #[error("distorted compensator is not integrable: {0}")]
    NonIntegrable(String),
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("loading fixed point not reached after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("equilibrium solver failed: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Insurer(#[from] InsurerError),
    #[error(transparent)]
    Contract(ContractError),
    #[error(transparent)]
    Measure(MeasureError),
    #[error(transparent)]
    Numerics(NumericsError),
}

impl From<NumericsError> for ReinsurerError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::Divergent(msg) => ReinsurerError::Divergent(msg),
            NumericsError::MaxIterations { iterations, residual } => {
                ReinsurerError::MaxIterations { iterations, residual }
            }
            NumericsError::InvalidConfig(msg) => ReinsurerError::Validation(msg),
            other => ReinsurerError::Numerics(other),
        }
    }
}

impl From<MeasureError> for ReinsurerError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Divergent(msg) => ReinsurerError::Divergent(msg),
            MeasureError::Numerics(n) => n.into(),
            other => ReinsurerError::Measure(other),
        }
    }
}

impl From<ContractError> for ReinsurerError {
    fn from(e: ContractError) -> Self {
        match e {
            ContractError::Divergent(msg) => ReinsurerError::Divergent(msg),
            other => ReinsurerError::Contract(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, ReinsurerError>;

/// Reinsurer's objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Expected terminal wealth.
    Wealth,
    /// CARA utility with risk aversion `m`.
    Utility { risk_aversion: f64 },
}

/// Full description of the game.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub insurers: Vec<InsurerSpec>,
    /// One contract per insurer, all of the same kind.
    pub contracts: Vec<Contract>,
    /// Ambiguity aversion ε.
    pub ambiguity: f64,
    pub objective: Objective,
    /// Horizon `T`, only used by simulation.
    pub horizon: f64,
    pub quadrature: QuadratureConfig,
    pub solver: SolverConfig,
}

impl MarketSpec {
    pub fn new(
        insurers: Vec<InsurerSpec>,
        contracts: Vec<Contract>,
        ambiguity: f64,
        objective: Objective,
    ) -> Result<Self> {
        let spec = Self {
            insurers,
            contracts,
            ambiguity,
            objective,
            horizon: 1.0,
            quadrature: QuadratureConfig::precise(),
            solver: SolverConfig::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every insurer under the same contract.
    pub fn uniform(
        insurers: Vec<InsurerSpec>,
        contract: Contract,
        ambiguity: f64,
        objective: Objective,
    ) -> Result<Self> {
        let contracts = vec![contract; insurers.len()];
        Self::new(insurers, contracts, ambiguity, objective)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.insurers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insurers.is_empty()
    }

    pub fn kind(&self) -> ContractKind {
        self.contracts[0].kind()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(ReinsurerError::Validation(msg));
        if self.insurers.is_empty() {
            return invalid("market needs at least one insurer".into());
        }
        if self.contracts.len() != self.insurers.len() {
            return invalid(format!(
                "{} contracts for {} insurers",
                self.contracts.len(),
                self.insurers.len()
            ));
        }
        let kind = self.contracts[0].kind();
        if self.contracts.iter().any(|c| c.kind() != kind) {
            return invalid("all insurers must hold the same contract kind".into());
        }
        for c in &self.contracts {
            if let Some(l) = c.limit() {
                if !(l > 0.0 && l.is_finite()) {
                    return invalid(format!("limit {l} must be positive and finite"));
                }
            }
        }
        for (k, ins) in self.insurers.iter().enumerate() {
            if let Err(e) = ins.validate() {
                return invalid(format!("insurer {}: {e}", k + 1));
            }
        }
        let sum: f64 = self.insurers.iter().map(|i| i.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return invalid(format!("weights sum to {sum}, expected 1"));
        }
        if !(self.ambiguity >= 0.0 && self.ambiguity.is_finite()) {
            return invalid(format!("ambiguity {} must be finite and nonnegative", self.ambiguity));
        }
        if let Objective::Utility { risk_aversion } = self.objective {
            if !(risk_aversion > 0.0 && risk_aversion.is_finite()) {
                return invalid(format!("reinsurer risk aversion {risk_aversion} must be positive"));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon {} must be positive", self.horizon));
        }
        self.quadrature.validate()?;
        self.solver.validate()?;

        let n = self.len() as f64;
        for (k, ins) in self.insurers.iter().enumerate() {
            if let Some((_, xi)) = ins.severity.gamma_parameters() {
                let mut bound = 1.0 / ins.risk_aversion;
                if self.ambiguity > 0.0 {
                    bound = bound.min(1.0 / (n * self.ambiguity));
                }
                if xi >= bound {
                    log::warn!(
                        "insurer {}: scale {xi} is not below min(1/gamma, 1/(n eps)) = {bound}; \
                         tilted moments or the distorted compensator may diverge",
                        k + 1
                    );
                }
            }
        }
        Ok(())
    }

    /// Weighted geometric barycentre `v^g`.
    pub fn geometric_barycentre(&self) -> Result<CompensatorField> {
        Ok(barycentre_density(&self.insurers, BarycentreKind::Geometric)?)
    }

    fn has_tabulated(&self) -> bool {
        self.insurers
            .iter()
            .any(|i| matches!(i.severity, SeverityModel::Tabulated(_)))
    }

    fn check_controls(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.len() {
            return Err(ReinsurerError::Validation(format!(
                "{} controls for {} insurers",
                alpha.len(),
                self.len()
            )));
        }
        self.contracts
            .iter()
            .zip(alpha)
            .map(|(c, &a)| Ok(c.admissible(a)?))
            .collect()
    }

    fn kinks(&self, alpha: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .contracts
            .iter()
            .zip(alpha)
            .flat_map(|(c, &a)| c.kinks(a))
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// Exponent of the distortion applied to `v^g` for an aggregate loss `loss`.
pub fn distortion_exponent(ambiguity: f64, objective: Objective, loss: f64) -> f64 {
    match objective {
        Objective::Wealth => ambiguity * loss,
        Objective::Utility { risk_aversion: m } => ambiguity * (m * loss).exp_m1() / m,
    }
}

/// Pricing compensator `ς` for controls `alpha`.
pub fn distorted_compensator(market: &MarketSpec, alpha: &[f64]) -> Result<CompensatorField> {
    let alpha = market.check_controls(alpha)?;
    let vg = market.geometric_barycentre()?;
    let integrability = check_integrability(market, &alpha)?;
    let contracts = market.contracts.clone();
    let (eps, objective) = (market.ambiguity, market.objective);
    let mut breaks = vg.breakpoints().to_vec();
    breaks.extend(market.kinks(&alpha));
    let tail_rate = vg.tail_rate();
    let controls = alpha.clone();
    let base = vg.clone();
    let field = CompensatorField::from_log_fn(move |z| {
        let loss: f64 = contracts.iter().zip(&controls).map(|(c, &a)| c.ceded(z, a)).sum();
        base.log_eval(z) + distortion_exponent(eps, objective, loss)
    })
    .with_breakpoints(breaks)
    .with_integrability(integrability);
    Ok(match tail_rate {
        // Capped contracts leave the tail of v^g untouched.
        Some(r) if market.kind() == ContractKind::CappedExcessOfLoss || eps == 0.0 => field.with_tail_rate(r),
        Some(r) if objective == Objective::Wealth => {
            let slope: f64 = market.contracts.iter().zip(&alpha).map(|(c, &a)| c.ceded_tail_slope(a)).sum();
            field.with_tail_rate(r - eps * slope)
        }
        _ => field,
    })
}

/// Decides whether `ς` (and the weighted pricing integrals built on it)
/// have finite mass.
pub fn check_integrability(market: &MarketSpec, alpha: &[f64]) -> Result<Integrability> {
    let alpha = market.check_controls(alpha)?;
    let vg = market.geometric_barycentre()?;
    let slope: f64 = market
        .contracts
        .iter()
        .zip(&alpha)
        .map(|(c, &a)| c.ceded_tail_slope(a))
        .sum();
    let eps = market.ambiguity;

    if market.has_tabulated() {
        return Ok(probe_integrability(market, &alpha, &vg));
    }
    let rate = match vg.tail_rate() {
        Some(r) => r,
        None => return Ok(probe_integrability(market, &alpha, &vg)),
    };
    if slope <= 0.0 {
        return Ok(Integrability::Integrable);
    }
    Ok(match market.objective {
        Objective::Wealth => {
            if eps * slope < rate {
                Integrability::Integrable
            } else {
                Integrability::NonIntegrable(format!(
                    "ambiguity {eps} times ceded-loss slope {slope} is not below the barycentre tail rate {rate}"
                ))
            }
        }
        Objective::Utility { risk_aversion: m } => {
            if eps > 0.0 {
                Integrability::NonIntegrable(format!(
                    "aggregate ceded loss is unbounded (slope {slope}), so exp((eps/m)(e^(mL) - 1)) outgrows any exponential tail"
                ))
            } else if m * slope < rate {
                Integrability::Integrable
            } else {
                Integrability::NonIntegrable(format!(
                    "risk aversion {m} times ceded-loss slope {slope} is not below the barycentre tail rate {rate}"
                ))
            }
        }
    })
}

/// Truncation-doubling check on the pricing integrand `w · ς`.
fn probe_integrability(market: &MarketSpec, alpha: &[f64], vg: &CompensatorField) -> Integrability {
    let cfg = QuadratureConfig {
        abs_tol: 1e-10,
        rel_tol: 1e-8,
        ..QuadratureConfig::default()
    };
    let mut breaks = vg.breakpoints().to_vec();
    breaks.extend(market.kinks(alpha));
    let weight_rate = match market.objective {
        Objective::Wealth => 0.0,
        Objective::Utility { risk_aversion } => risk_aversion,
    };
    let f = |z: f64| {
        let loss = crate::contracts::aggregate_loss(&market.contracts, alpha, z);
        (vg.log_eval(z)
            + distortion_exponent(market.ambiguity, market.objective, loss)
            + weight_rate * loss)
            .exp()
            * (1.0 + z)
    };
    match integrate_upper_tail_with_breaks(f, 0.0, &breaks, &cfg) {
        Ok(v) if v.is_finite() => Integrability::Integrable,
        Ok(_) => Integrability::NonIntegrable("probe returned a non-finite mass".into()),
        Err(e) => Integrability::NonIntegrable(format!("truncation probe: {e}")),
    }
}

/// Per-insurer quantities entering the loading equation at controls `α†[c]`.
#[derive(Debug, Clone)]
struct PricingTerms {
    responses: Vec<BestResponse>,
    rhs: Vec<f64>,
}

fn inner_solver(cfg: &SolverConfig) -> SolverConfig {
    SolverConfig {
        tolerance: (cfg.tolerance * 1e-3).max(1e-300),
        max_iterations: cfg.max_iterations.max(200),
        ..*cfg
    }
}

fn pricing_terms(market: &MarketSpec, c: &[f64]) -> Result<PricingTerms> {
    if c.len() != market.len() {
        return Err(ReinsurerError::Validation(format!(
            "{} loadings for {} insurers",
            c.len(),
            market.len()
        )));
    }
    let inner = inner_solver(&market.solver);
    let responses: Vec<BestResponse> = market
        .insurers
        .iter()
        .zip(&market.contracts)
        .zip(c)
        .map(|((ins, con), &ck)| best_response_with(ins, con, ck, &inner))
        .collect::<std::result::Result<_, _>>()?;
    let alpha: Vec<f64> = responses.iter().map(|r| r.control).collect();

    let integrability = check_integrability(market, &alpha)?;
    if let Integrability::NonIntegrable(reason) = integrability {
        return Err(ReinsurerError::NonIntegrable(reason));
    }
    let vg = market.geometric_barycentre()?;
    let mut breaks = vg.breakpoints().to_vec();
    breaks.extend(market.kinks(&alpha));
    breaks.sort_by(f64::total_cmp);

    let (eps, objective) = (market.ambiguity, market.objective);
    let weight_rate = match objective {
        Objective::Wealth => 0.0,
        Objective::Utility { risk_aversion } => risk_aversion,
    };
    // log(w · ς) at z.
    let log_weighted = |z: f64| {
        let loss = crate::contracts::aggregate_loss(&market.contracts, &alpha, z);
        vg.log_eval(z) + distortion_exponent(eps, objective, loss) + weight_rate * loss
    };

    let cfg = &market.quadrature;
    let mut rhs = Vec::with_capacity(market.len());
    for (k, ((ins, con), br)) in market.insurers.iter().zip(&market.contracts).zip(&responses).enumerate() {
        let a = br.control;
        let sev = &ins.severity;
        let control_mass = con.control_mass(sev, a);
        if !(control_mass > 0.0) {
            return Err(ReinsurerError::SolverFailure(format!(
                "insurer {}: retention {a} leaves no claim mass where the control binds",
                k + 1
            )));
        }
        let lambda = ins.intensity;
        let denom = lambda * control_mass;
        let b = match *con {
            Contract::Proportional => {
                integrate_upper_tail_with_breaks(|z| z * log_weighted(z).exp(), 0.0, &breaks, cfg)?
            }
            Contract::ExcessOfLoss => {
                let tail: Vec<f64> = breaks.iter().copied().filter(|&x| x > a).collect();
                integrate_upper_tail_with_breaks(|z| log_weighted(z).exp(), a, &tail, cfg)?
            }
            Contract::CappedExcessOfLoss { limit } => {
                integrate_with_breaks(|z| log_weighted(z).exp(), a, a + limit, &breaks, cfg)?
            }
        };
        // A/(s C): the ratio A/C is the mean ceded loss per unit of control
        // mass, and 1/s is finite even where s vanishes.
        let mean_ceded = con.expected_ceded(sev, a)? / control_mass;
        let inverse_slope = match con {
            Contract::Proportional => {
                ins.risk_aversion * crate::measures::tilted_moment(sev, 2, ins.risk_aversion * a)? / sev.mean()
            }
            _ => ins.risk_aversion * (1.0 + c[k]),
        };
        rhs.push(mean_ceded * inverse_slope + b / denom);
    }
    Ok(PricingTerms { responses, rhs })
}

/// `(1 + c_k) − RHS_k(c)` for every insurer.
pub fn loading_residual(market: &MarketSpec, c: &[f64]) -> Result<Vec<f64>> {
    let terms = pricing_terms(market, c)?;
    Ok(c.iter().zip(&terms.rhs).map(|(ck, r)| 1.0 + ck - r).collect())
}

/// Residual of coordinate `k` scanned over a grid of its own loading with
/// the others held fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualScan {
    pub insurer: usize,
    pub loadings: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Number of sign changes along the scan.
    pub sign_changes: usize,
}

pub fn residual_landscape(market: &MarketSpec, eta: &[f64], points: usize) -> Vec<ResidualScan> {
    let points = points.max(2);
    (0..market.len())
        .map(|k| {
            let top = 3.0 * eta[k].max(0.5);
            let loadings: Vec<f64> = (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect();
            let residuals: Vec<f64> = loadings
                .iter()
                .map(|&ck| {
                    let mut c = eta.to_vec();
                    c[k] = ck;
                    loading_residual(market, &c).map(|r| r[k]).unwrap_or(f64::NAN)
                })
                .collect();
            let sign_changes = residuals
                .windows(2)
                .filter(|w| w[0].is_finite() && w[1].is_finite() && w[0].signum() != w[1].signum())
                .count();
            ResidualScan {
                insurer: k + 1,
                loadings,
                residuals,
                sign_changes,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub residual_norm: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub second_order: Vec<bool>,
    pub corner: Vec<bool>,
    pub integrability: Integrability,
    pub initial_loadings: Vec<f64>,
    pub landscape: Vec<ResidualScan>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    pub controls: Vec<f64>,
    pub loadings: Vec<f64>,
    /// Reinsurance premium rates `p_k^R`.
    pub premiums: Vec<f64>,
    /// `Λ = ∫ ς* dz`.
    pub total_intensity: f64,
    #[serde(skip)]
    pub compensator: CompensatorField,
    pub diagnostics: Diagnostics,
}

/// Documented starting point of the loading iteration.
///
/// In utility mode the iteration starts from the expected-wealth
/// equilibrium of the same market, so that the returned root is the branch
/// that connects continuously to the `m → 0` limit. The loading system can
/// have several roots for larger `m`.
pub fn initial_loadings(market: &MarketSpec) -> Result<Vec<f64>> {
    if let Objective::Utility { .. } = market.objective {
        let wealth = MarketSpec { objective: Objective::Wealth, ..market.clone() };
        let start = heuristic_loadings(&wealth)?;
        match solve_equilibrium_from(&wealth, &start, false) {
            Ok(eq) => return Ok(eq.loadings),
            Err(e) => log::warn!("wealth-mode start unavailable ({e}); using the heuristic start"),
        }
    }
    heuristic_loadings(market)
}

/// `θ_k` (or 0.5) for proportional contracts, `e^{γ_k med(Z_k)} − 1` for XL.
fn heuristic_loadings(market: &MarketSpec) -> Result<Vec<f64>> {
    market
        .insurers
        .iter()
        .zip(&market.contracts)
        .map(|(ins, con)| match con {
            Contract::Proportional => Ok(if ins.loading > 0.0 { ins.loading } else { 0.5 }),
            _ => Ok((ins.risk_aversion * ins.severity.quantile(0.5)?).exp_m1()),
        })
        .collect()
}

/// Number of grid points per coordinate in the residual landscape.
const LANDSCAPE_POINTS: usize = 7;

/// Solves for `(α*, η*, ς*)`.
pub fn solve_equilibrium(market: &MarketSpec) -> Result<EquilibriumResult> {
    market.validate()?;
    let eta0 = initial_loadings(market)?;
    solve_equilibrium_from(market, &eta0, true)
}

/// Same as [`solve_equilibrium`] from a caller-supplied start, optionally
/// skipping the landscape scan.
pub fn solve_equilibrium_from(market: &MarketSpec, eta0: &[f64], landscape: bool) -> Result<EquilibriumResult> {
    market.validate()?;
    let alpha0: Vec<f64> = market
        .insurers
        .iter()
        .zip(&market.contracts)
        .zip(eta0)
        .map(|((ins, con), &c)| best_response_with(ins, con, c.max(0.0), &inner_solver(&market.solver)).map(|r| r.control))
        .collect::<std::result::Result<_, _>>()?;
    if let Integrability::NonIntegrable(reason) = check_integrability(market, &alpha0)? {
        return Err(ReinsurerError::NonIntegrable(reason));
    }

    // Loadings are nonnegative; extend the residual continuously below 0 so
    // trial steps of the solver stay evaluable.
    let residual = |c: &[f64]| -> Result<Vec<f64>> {
        let clipped: Vec<f64> = c.iter().map(|v| v.max(0.0)).collect();
        let r = loading_residual(market, &clipped)?;
        Ok(r.iter().zip(c).zip(&clipped).map(|((ri, ci), cc)| ri + (ci - cc)).collect())
    };
    let solution = solve_fixed_point_system(residual, eta0, &market.solver).map_err(|e| match e {
        ReinsurerError::Numerics(NumericsError::SingularJacobian { residual }) => ReinsurerError::SolverFailure(
            format!("singular Jacobian with residual {residual:e}"),
        ),
        other => other,
    })?;

    let eta = solution.x.clone();
    if eta.iter().any(|&v| v < 0.0) {
        return Err(ReinsurerError::SolverFailure(format!(
            "fixed point has a negative loading {eta:?}"
        )));
    }
    let terms = pricing_terms(market, &eta)?;
    let controls: Vec<f64> = terms.responses.iter().map(|r| r.control).collect();
    let compensator = distorted_compensator(market, &controls)?;
    let total = total_intensity_with(&compensator, &market.quadrature)?;
    let premiums = market
        .insurers
        .iter()
        .zip(&market.contracts)
        .zip(controls.iter().zip(&eta))
        .map(|((ins, con), (&a, &c))| premium(PremiumSide::Reinsurer, ins, con, a, c))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let landscape = if landscape {
        residual_landscape(market, &eta, LANDSCAPE_POINTS)
    } else {
        Vec::new()
    };
    if landscape.iter().any(|s| s.sign_changes > 1) {
        log::warn!("loading residual changes sign more than once along a coordinate; the equilibrium may not be unique");
    }
    Ok(EquilibriumResult {
        diagnostics: Diagnostics {
            residual_norm: solution.residual_norm,
            iterations: solution.iterations,
            newton_steps: solution.newton_steps,
            second_order: terms.responses.iter().map(|r| r.second_order).collect(),
            corner: terms.responses.iter().map(|r| r.corner).collect(),
            integrability: compensator.integrability().clone(),
            initial_loadings: eta0.to_vec(),
            landscape,
        },
        controls,
        loadings: eta,
        premiums,
        total_intensity: total,
        compensator,
    })
}

/// Aggregate-loss level at which the wealth and utility distortions cross:
/// `L* = −W(−m e^{−m}) / m − 1`.
pub fn crossover_loss(m: f64, branch: LambertBranch) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(NumericsError::OutOfDomain { what: "risk aversion", x: m }.into());
    }
    let w = lambert_w(-m * (-m).exp(), branch)?;
    Ok(-w / m - 1.0)
}

/// `dα†/dc` at the equilibrium, exposed for diagnostics.
pub fn equilibrium_slopes(market: &MarketSpec, result: &EquilibriumResult) -> Result<Vec<f64>> {
    let inner = inner_solver(&market.solver);
    market
        .insurers
        .iter()
        .zip(&market.contracts)
        .zip(&result.loadings)
        .map(|((ins, con), &c)| {
            let br = best_response_with(ins, con, c, &inner)?;
            Ok(response_slope(ins, con, c, &br)?)
        })
        .collect()
}
