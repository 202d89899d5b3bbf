//! Compound-Poisson simulation of the wealth processes.
//!
//! Every replication draws from its own ChaCha8 stream keyed by
//! `(master seed, replication index)` and replications are reduced in a
//! fixed chunk order, so results do not depend on the number of threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::contracts::{premium, Contract, ContractError, PremiumSide};
use crate::insurer::{best_response, InsurerError};
use crate::measures::{kl_rate, total_intensity, CompensatorField, InsurerSpec, MeasureError, SeverityModel};
use crate::numerics::{integrate_upper_tail_with_breaks, integrate_with_breaks, NumericsError, QuadratureConfig};
use crate::reinsurer::{MarketSpec, Objective};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("compensator is not integrable: {0}")]
    NonIntegrable(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Insurer(#[from] InsurerError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, SimulationError>;

/// Replications per parallel work unit.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    /// `X_0` of the insurer being simulated.
    pub insurer_wealth: f64,
    /// `Y_0`.
    pub reinsurer_wealth: f64,
    /// Pair each replication with one using mirrored claim-size uniforms.
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            replications: 100_000,
            seed: 0,
            insurer_wealth: 0.0,
            reinsurer_wealth: 0.0,
            antithetic: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SimulationError::InvalidConfig(format!("horizon {} must be finite and nonnegative", self.horizon)));
        }
        if self.replications == 0 {
            return Err(SimulationError::InvalidConfig("at least one replication is required".into()));
        }
        if !(self.insurer_wealth.is_finite() && self.reinsurer_wealth.is_finite()) {
            return Err(SimulationError::InvalidConfig("initial wealth must be finite".into()));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Standard deviation of one observation (a pair average when antithetic).
    pub std_dev: f64,
    pub observations: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    fn estimate(&self) -> Estimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        Estimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            std_dev: var.sqrt(),
            observations: self.n,
        }
    }
}

/// Uniform on the open interval (0, 1).
fn open01(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Inverse-cdf claim sampling.
pub trait ClaimSampler: Sync {
    fn quantile(&self, u: f64) -> f64;
    fn tag(&self) -> String;
}

impl ClaimSampler for SeverityModel {
    fn quantile(&self, u: f64) -> f64 {
        match *self {
            SeverityModel::Exponential { scale } => -scale * (-u).ln_1p(),
            _ => SeverityModel::quantile(self, u).unwrap_or(f64::NAN),
        }
    }

    fn tag(&self) -> String {
        match self {
            SeverityModel::Exponential { scale } => format!("exponential(scale={scale})"),
            SeverityModel::Gamma { shape, scale } => format!("gamma(shape={shape}, scale={scale})"),
            SeverityModel::Tabulated(t) => format!("tabulated({} knots)", t.knots().len()),
        }
    }
}

/// Quantile function of a normalized compensator, tabulated on a uniform
/// grid with piecewise-linear cdf between knots and an exponential tail.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    knots: Vec<f64>,
    cdf: Vec<f64>,
    tail_rate: f64,
    total: f64,
}

impl QuantileTable {
    pub const KNOTS: usize = 2048;

    pub fn new(field: &CompensatorField) -> Result<Self> {
        Self::with_knots(field, Self::KNOTS)
    }

    pub fn with_knots(field: &CompensatorField, knots: usize) -> Result<Self> {
        if knots < 2 {
            return Err(SimulationError::InvalidConfig("quantile table needs two knots".into()));
        }
        let cfg = QuadratureConfig::precise();
        let total = total_intensity(field)?;
        // Truncate where the remaining mass is negligible.
        let mut z_max = 1.0;
        loop {
            let breaks: Vec<f64> = field.breakpoints().iter().copied().filter(|&b| b > z_max).collect();
            let tail = integrate_upper_tail_with_breaks(|z| field.eval(z), z_max, &breaks, &cfg)?;
            if tail <= 1e-13 * total || z_max > 1e6 {
                break;
            }
            z_max *= 1.5;
        }
        let h = z_max / (knots - 1) as f64;
        let grid: Vec<f64> = (0..knots).map(|i| i as f64 * h).collect();
        let masses: Vec<f64> = grid
            .par_windows(2)
            .map(|w| integrate_with_breaks(|z| field.eval(z), w[0], w[1], field.breakpoints(), &cfg))
            .collect::<std::result::Result<_, _>>()?;
        let mut cdf = Vec::with_capacity(knots);
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in masses {
            acc += m;
            cdf.push(acc / total);
        }
        let tail_rate = field.tail_rate().filter(|r| *r > 0.0).unwrap_or(1.0 / h);
        Ok(Self {
            knots: grid,
            cdf,
            tail_rate,
            total,
        })
    }

    /// Total intensity `Λ` of the tabulated field.
    pub fn total(&self) -> f64 {
        self.total
    }
}

impl ClaimSampler for QuantileTable {
    fn quantile(&self, u: f64) -> f64 {
        let last = *self.cdf.last().unwrap();
        if u >= last {
            let z_max = *self.knots.last().unwrap();
            let rest = (1.0 - last).max(f64::MIN_POSITIVE);
            return z_max - ((1.0 - u) / rest).max(f64::MIN_POSITIVE).ln() / self.tail_rate;
        }
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.knots[i - 1] + t * (self.knots[i] - self.knots[i - 1])
    }

    fn tag(&self) -> String {
        format!("quantile-table({} knots, total={})", self.knots.len(), self.total)
    }
}

/// One realization of a marked Poisson process on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventPath {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
    pub source: String,
}

/// Draws arrivals by exponential gaps and sizes by inversion. With
/// `mirror`, size uniforms `u` are replaced by `1 − u` while arrival times
/// are unchanged.
fn draw_events(
    rng: &mut ChaCha8Rng,
    intensity: f64,
    horizon: f64,
    sampler: &dyn ClaimSampler,
    mirror: bool,
    mut visit: impl FnMut(f64, f64),
) {
    if !(intensity > 0.0) || horizon <= 0.0 {
        return;
    }
    let mut t = 0.0;
    loop {
        t += -open01(rng).ln() / intensity;
        if t > horizon {
            break;
        }
        let u = open01(rng);
        let z = sampler.quantile(if mirror { 1.0 - u } else { u });
        visit(t, z);
    }
}

/// Simulates a compound Poisson path with intensity `Λ` over `[0, T]`.
pub fn simulate_compound_poisson(intensity: f64, sampler: &dyn ClaimSampler, horizon: f64, seed: u64) -> EventPath {
    let mut rng = stream(seed, 0);
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    draw_events(&mut rng, intensity, horizon, sampler, false, |t, z| {
        times.push(t);
        sizes.push(z);
    });
    EventPath {
        times,
        sizes,
        source: sampler.tag(),
    }
}

/// Runs `replications` scenarios, each writing `width` statistics into its
/// output slice, and returns per-statistic estimates.
fn run<F>(sim: &SimConfig, width: usize, scenario: F) -> Vec<Estimate>
where
    F: Fn(&mut ChaCha8Rng, bool, &mut [f64]) + Sync,
{
    let units = if sim.antithetic { sim.replications.div_ceil(2) } else { sim.replications };
    let chunks = units.div_ceil(CHUNK);
    let partial: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![Welford::default(); width];
            let mut out = vec![0.0; width];
            let mut mirrored = vec![0.0; width];
            let end = ((chunk + 1) * CHUNK).min(units);
            for unit in chunk * CHUNK..end {
                let mut rng = stream(sim.seed, unit as u64);
                scenario(&mut rng, false, &mut out);
                if sim.antithetic {
                    let mut rng = stream(sim.seed, unit as u64);
                    scenario(&mut rng, true, &mut mirrored);
                    for (o, m) in out.iter_mut().zip(&mirrored) {
                        *o = 0.5 * (*o + m);
                    }
                }
                for (a, &x) in acc.iter_mut().zip(&out) {
                    a.push(x);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Welford::default(); width];
    for part in &partial {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total.iter().map(Welford::estimate).collect()
}

fn cara(gamma: f64, x: f64) -> f64 {
    -(-gamma * x).exp() / gamma
}

/// Expected CARA utility of the insurer's terminal wealth
/// `X_T = X_0 + (p^I − p^R(a)) T − Σ r(Z_i, a)` at each control in `grid`,
/// using common random numbers across the grid.
pub fn estimate_insurer_objective_grid(
    insurer: &InsurerSpec,
    contract: &Contract,
    grid: &[f64],
    c: f64,
    sim: &SimConfig,
) -> Result<Vec<Estimate>> {
    insurer_statistic_grid(insurer, contract, grid, c, sim, |x| cara(insurer.risk_aversion, x))
}

/// Single-control version of [`estimate_insurer_objective_grid`].
pub fn estimate_insurer_objective(
    insurer: &InsurerSpec,
    contract: &Contract,
    a: f64,
    c: f64,
    sim: &SimConfig,
) -> Result<Estimate> {
    Ok(estimate_insurer_objective_grid(insurer, contract, &[a], c, sim)?[0])
}

/// Terminal wealth `X_T` itself (mean and spread).
pub fn estimate_insurer_wealth(
    insurer: &InsurerSpec,
    contract: &Contract,
    a: f64,
    c: f64,
    sim: &SimConfig,
) -> Result<Estimate> {
    Ok(insurer_statistic_grid(insurer, contract, &[a], c, sim, |x| x)?[0])
}

fn insurer_statistic_grid(
    insurer: &InsurerSpec,
    contract: &Contract,
    grid: &[f64],
    c: f64,
    sim: &SimConfig,
    statistic: impl Fn(f64) -> f64 + Sync,
) -> Result<Vec<Estimate>> {
    sim.validate()?;
    let p_i = premium(PremiumSide::Insurer, insurer, contract, 0.0, insurer.loading)?;
    let controls: Vec<f64> = grid.iter().map(|&a| contract.admissible(a)).collect::<std::result::Result<_, _>>()?;
    let drift: Vec<f64> = controls
        .iter()
        .map(|&a| Ok(sim.insurer_wealth + (p_i - premium(PremiumSide::Reinsurer, insurer, contract, a, c)?) * sim.horizon))
        .collect::<Result<_>>()?;
    let sev = &insurer.severity;
    Ok(run(sim, grid.len(), |rng, mirror, out| {
        out.copy_from_slice(&drift);
        draw_events(rng, insurer.intensity, sim.horizon, sev, mirror, |_, z| {
            for (o, &a) in out.iter_mut().zip(&controls) {
                *o -= contract.value(z, a);
            }
        });
        for o in out.iter_mut() {
            *o = statistic(*o);
        }
    }))
}

/// Reinsurer's penalized objective under pricing compensator `ς`.
///
/// Claims arrive with intensity `Λ = ∫ ς` and sizes from `ς/Λ`. The
/// reinsurer collects `Σ_k p_k^R` and pays `L(Z, α)` per claim, where `α`
/// are the insurers' best responses to `c`. In wealth mode the KL penalty
/// `(T/ε) Σ π_k KL(ς ‖ v_k)` is added analytically (omitted when `ε = 0`);
/// in utility mode the estimate is the plain CARA utility of `Y_T`.
pub fn estimate_reinsurer_objective(
    market: &MarketSpec,
    c: &[f64],
    compensator: &CompensatorField,
    sim: &SimConfig,
) -> Result<Estimate> {
    sim.validate()?;
    if let crate::measures::Integrability::NonIntegrable(reason) = compensator.integrability() {
        return Err(SimulationError::NonIntegrable(reason.clone()));
    }
    if c.len() != market.len() {
        return Err(SimulationError::InvalidConfig(format!("{} loadings for {} insurers", c.len(), market.len())));
    }
    let mut alpha = Vec::with_capacity(market.len());
    let mut income = 0.0;
    for ((ins, con), &ck) in market.insurers.iter().zip(&market.contracts).zip(c) {
        let a = best_response(ins, con, ck)?.control;
        income += premium(PremiumSide::Reinsurer, ins, con, a, ck)?;
        alpha.push(a);
    }
    let penalty = match market.objective {
        Objective::Wealth if market.ambiguity > 0.0 => {
            let mut kl = 0.0;
            for ins in &market.insurers {
                if ins.weight > 0.0 {
                    kl += ins.weight * kl_rate(compensator, &ins.compensator())?;
                }
            }
            sim.horizon / market.ambiguity * kl
        }
        _ => 0.0,
    };
    let table = QuantileTable::new(compensator)?;
    let lambda = table.total();
    let y0 = sim.reinsurer_wealth + income * sim.horizon;
    let objective = market.objective;
    let est = run(sim, 1, |rng, mirror, out| {
        let mut y = y0;
        draw_events(rng, lambda, sim.horizon, &table, mirror, |_, z| {
            y -= crate::contracts::aggregate_loss(&market.contracts, &alpha, z);
        });
        out[0] = match objective {
            Objective::Wealth => y,
            Objective::Utility { risk_aversion } => cara(risk_aversion, y),
        };
    })[0];
    Ok(Estimate {
        mean: est.mean + penalty,
        ..est
    })
}

/// `E^{P_k}[dQ^ς/dP_k]` on `[0, T]`, which equals one for any admissible `ς`.
///
/// The density is `exp(Σ_i ln(ς(Z_i)/v_k(Z_i)) − T ∫ (ς − v_k) dz)` with
/// claims simulated under insurer `k`'s own model.
pub fn estimate_density_martingale(insurer: &InsurerSpec, candidate: &CompensatorField, sim: &SimConfig) -> Result<Estimate> {
    sim.validate()?;
    let reference = insurer.compensator();
    let compensator_gap = total_intensity(candidate)? - insurer.intensity;
    let base = -sim.horizon * compensator_gap;
    let sev = &insurer.severity;
    Ok(run(sim, 1, |rng, mirror, out| {
        let mut log_density = base;
        draw_events(rng, insurer.intensity, sim.horizon, sev, mirror, |_, z| {
            log_density += candidate.log_eval(z) - reference.log_eval(z);
        });
        out[0] = log_density.exp();
    })[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical_value: f64,
    pub p_value: f64,
    pub passed: bool,
}

/// Pearson test of sampled claim sizes against `ς/Λ` on `bins` bins.
///
/// Bin edges are equiprobable under `table`, but the expected counts come
/// from direct quadrature of the field.
pub fn mark_histogram_test(
    sizes: &[f64],
    field: &CompensatorField,
    table: &QuantileTable,
    bins: usize,
    significance: f64,
) -> Result<ChiSquareTest> {
    if bins < 2 || sizes.is_empty() {
        return Err(SimulationError::InvalidConfig("need at least two bins and one sample".into()));
    }
    let cfg = QuadratureConfig::precise();
    let total = total_intensity(field)?;
    let edges: Vec<f64> = (1..bins).map(|i| table.quantile(i as f64 / bins as f64)).collect();
    let mut probs = Vec::with_capacity(bins);
    let mut lower = 0.0;
    for &e in &edges {
        probs.push(integrate_with_breaks(|z| field.eval(z), lower, e, field.breakpoints(), &cfg)? / total);
        lower = e;
    }
    let tail_breaks: Vec<f64> = field.breakpoints().iter().copied().filter(|&b| b > lower).collect();
    probs.push(integrate_upper_tail_with_breaks(|z| field.eval(z), lower, &tail_breaks, &cfg)? / total);

    let mut counts = vec![0usize; bins];
    for &z in sizes {
        counts[edges.partition_point(|&e| e <= z)] += 1;
    }
    let n = sizes.len() as f64;
    let statistic: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&o, &p)| {
            let e = n * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = bins - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    let critical_value = chi.inverse_cdf(1.0 - significance);
    Ok(ChiSquareTest {
        statistic,
        degrees_of_freedom: dof,
        critical_value,
        p_value: chi.sf(statistic),
        passed: statistic <= critical_value,
    })
}

/// Claim sizes from `count` draws of the sampler on independent streams.
pub fn sample_sizes(sampler: &dyn ClaimSampler, count: usize, seed: u64) -> Vec<f64> {
    (0..count)
        .into_par_iter()
        .map(|i| sampler.quantile(open01(&mut stream(seed, i as u64))))
        .collect()
}
