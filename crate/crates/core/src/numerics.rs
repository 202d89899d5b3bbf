//! Deterministic numerical kernel.
//!
//! Everything downstream (premiums, loading equations, KL rates, total
//! intensities) reduces to integrals over `[lower, ∞)` of exponentially
//! decaying integrands, scalar roots on a bracket, or small nonlinear systems.
//! This module provides those three primitives plus the Lambert W function.
//!
//! Quadrature is a globally adaptive 21-point Gauss–Kronrod scheme. The upper
//! tail is handled by integrating successive panels whose width doubles until a
//! panel contributes less than the requested tolerance; a tail that keeps
//! growing is reported as [`NumericsError::Divergent`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("integrand returned a non-finite value at z = {at}")]
    NonFinite { at: f64 },
    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NoBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("singular Jacobian and Picard fallback did not converge (residual {residual:e})")]
    SingularJacobian { residual: f64 },
    #[error("argument {x} outside the domain of {what}")]
    OutOfDomain { what: &'static str, x: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Tolerances and limits for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Width of the first panel of a semi-infinite integral; later panels double.
    pub initial_span: f64,
    /// Maximum number of subintervals per finite panel.
    pub max_subdivisions: usize,
    /// Maximum number of panel doublings before a tail is declared divergent.
    pub max_doublings: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            initial_span: 8.0,
            max_subdivisions: 2000,
            max_doublings: 48,
        }
    }
}

impl QuadratureConfig {
    /// Tolerances used by the equilibrium solver, tight enough for loading
    /// residuals at the 1e-12 level.
    pub fn precise() -> Self {
        Self {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(NumericsError::InvalidConfig(
                "quadrature tolerances must be > 0".into(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(NumericsError::InvalidConfig(
                "max subdivisions must be >= 1".into(),
            ));
        }
        if !(self.initial_span > 0.0 && self.initial_span.is_finite()) {
            return Err(NumericsError::InvalidConfig(
                "initial span must be finite and > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Tolerances and limits for root-finding and fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on the residual (max-norm for systems).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Picard damping factor in (0, 1].
    pub damping: f64,
    /// Relative step for finite-difference derivatives: `h = fd_step * (1 + |x|)`.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 200,
            damping: 1.0,
            fd_step: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(NumericsError::InvalidConfig("tolerance must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(NumericsError::InvalidConfig(
                "damping must lie in (0, 1]".into(),
            ));
        }
        if !(self.fd_step > 0.0) {
            return Err(NumericsError::InvalidConfig(
                "finite-difference step must be > 0".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Gauss–Kronrod 21
// ---------------------------------------------------------------------------

/// Kronrod abscissae on [0, 1]; odd indices are the embedded Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_74,
    0.973_906_528_517_171_720_08,
    0.930_157_491_355_708_226_00,
    0.865_063_366_688_984_510_73,
    0.780_817_726_586_416_897_06,
    0.679_409_568_299_024_406_23,
    0.562_757_134_668_604_683_34,
    0.433_395_394_129_247_190_80,
    0.294_392_862_701_460_198_13,
    0.148_874_338_981_631_210_88,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278,
    0.032_558_162_307_964_727_479,
    0.054_755_896_574_351_996_031,
    0.075_039_674_810_919_952_767,
    0.093_125_454_583_697_605_535,
    0.109_387_158_802_297_641_90,
    0.123_491_976_262_065_851_08,
    0.134_709_217_311_473_325_93,
    0.142_775_938_577_060_080_80,
    0.147_739_104_901_338_491_37,
    0.149_445_554_002_916_905_66,
];

/// Gauss-10 weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_594,
    0.149_451_349_150_580_593_15,
    0.219_086_362_515_982_044_00,
    0.269_266_719_309_996_355_09,
    0.295_524_224_714_752_870_17,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    if !fc.is_finite() {
        return Err(NumericsError::NonFinite { at: centre });
    }
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for i in 0..10 {
        let dx = half * XGK[i];
        let (x1, x2) = (centre - dx, centre + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(NumericsError::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(NumericsError::NonFinite { at: x2 });
        }
        kronrod += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs().max(50.0 * f64::EPSILON * value.abs());
    Ok(Panel { a, b, value, error })
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let first = gk21(f, a, b)?;
    let mut heap = BinaryHeap::new();
    let mut total = first.value;
    let mut error = first.error;
    heap.push(first);
    while error > cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
        if heap.len() >= cfg.max_subdivisions {
            log::warn!(
                "quadrature on [{a}, {b}] hit {} subdivisions (error estimate {error:e})",
                cfg.max_subdivisions
            );
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval collapsed to adjacent floats.
            heap.push(worst);
            break;
        }
        let left = gk21(f, worst.a, mid)?;
        let right = gk21(f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the incremental updates.
    Ok(heap.iter().map(|p| p.value).sum())
}

fn sorted_breaks(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Vec::with_capacity(pts.len() + 2);
    out.push(a);
    out.extend(pts);
    out.push(b);
    out
}

/// Integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    integrate_with_breaks(f, a, b, &[], cfg)
}

/// Integral over `[a, b]`, splitting at the given interior points (kinks or
/// jumps of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    cfg.validate()?;
    if b < a {
        return Ok(-integrate_with_breaks(f, b, a, breaks, cfg)?);
    }
    let pts = sorted_breaks(a, b, breaks);
    pts.windows(2).map(|w| adaptive(&f, w[0], w[1], cfg)).sum()
}

/// Integral of `f` over `[lower, ∞)`.
pub fn integrate_upper_tail<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    integrate_upper_tail_with_breaks(f, lower, &[], cfg)
}

/// Integral of `f` over `[lower, ∞)` with interior break points.
///
/// Panels `[U_i, U_{i+1}]` with `U_{i+1} - lower = 2 (U_i - lower)` are added
/// until a panel is both below tolerance and no larger than its predecessor.
pub fn integrate_upper_tail_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !lower.is_finite() || lower < 0.0 {
        return Err(NumericsError::OutOfDomain {
            what: "integrate_upper_tail (lower bound)",
            x: lower,
        });
    }
    // Make sure every break point falls inside the first panel or a later one.
    let last_break = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lower)
        .fold(lower, f64::max);
    let mut span = cfg.initial_span.max(1.1 * (last_break - lower));
    let mut hi = lower + span;
    let mut total = integrate_with_breaks(&f, lower, hi, breaks, cfg)?;
    let mut previous = f64::INFINITY;
    let mut growth = 0usize;
    for _ in 0..cfg.max_doublings {
        let next = lower + 2.0 * span;
        let panel = match integrate_with_breaks(&f, hi, next, breaks, cfg) {
            Ok(v) => v,
            Err(NumericsError::NonFinite { at }) => {
                return Err(NumericsError::Divergent(format!(
                    "integrand overflowed at z = {at} while extending the tail"
                )))
            }
            Err(e) => return Err(e),
        };
        total += panel;
        if !total.is_finite() {
            return Err(NumericsError::Divergent("tail mass is unbounded".into()));
        }
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if panel.abs() <= tol && panel.abs() <= previous {
            return Ok(total);
        }
        growth = if panel.abs() > previous { growth + 1 } else { 0 };
        if growth >= 8 {
            return Err(NumericsError::Divergent(format!(
                "tail panels grew for {growth} consecutive doublings (upper cutoff {next})"
            )));
        }
        previous = panel.abs();
        span *= 2.0;
        hi = next;
    }
    Err(NumericsError::Divergent(format!(
        "tail mass still above tolerance at cutoff {hi}"
    )))
}

// ---------------------------------------------------------------------------
// Scalar roots
// ---------------------------------------------------------------------------

/// Root of `f` on `bracket`, with a central-difference derivative.
pub fn solve_scalar_root<F: Fn(f64) -> f64>(
    f: F,
    bracket: (f64, f64),
    cfg: &SolverConfig,
) -> Result<f64> {
    let step = cfg.fd_step;
    solve_scalar_root_with_derivative(
        |x| {
            let h = step * (1.0 + x.abs());
            (f(x), (f(x + h) - f(x - h)) / (2.0 * h))
        },
        bracket,
        cfg,
    )
}

/// Safeguarded Newton–bisection. `fdf` returns `(f(x), f'(x))`.
///
/// Newton steps that leave the current bracket, or fail to halve the
/// residual, are replaced by bisection.
pub fn solve_scalar_root_with_derivative<F: Fn(f64) -> (f64, f64)>(
    fdf: F,
    bracket: (f64, f64),
    cfg: &SolverConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 {
        bracket
    } else {
        (bracket.1, bracket.0)
    };
    let f_lo = fdf(lo).0;
    let f_hi = fdf(hi).0;
    if !f_lo.is_finite() {
        return Err(NumericsError::NonFinite { at: lo });
    }
    if !f_hi.is_finite() {
        return Err(NumericsError::NonFinite { at: hi });
    }
    if f_lo.abs() <= cfg.tolerance {
        return Ok(lo);
    }
    if f_hi.abs() <= cfg.tolerance {
        return Ok(hi);
    }
    if f_lo * f_hi > 0.0 {
        return Err(NumericsError::NoBracket { lo, hi, f_lo, f_hi });
    }
    // Orient so that f(lo) < 0 < f(hi).
    let flipped = f_lo > 0.0;
    let sign = if flipped { -1.0 } else { 1.0 };

    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    let mut last_abs = f64::INFINITY;
    for _ in 0..cfg.max_iterations.max(200) {
        let (fx, dfx) = fdf(x);
        if !fx.is_finite() {
            return Err(NumericsError::NonFinite { at: x });
        }
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() <= cfg.tolerance {
            return Ok(x);
        }
        if sign * fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            // Bracket cannot shrink further in double precision.
            return Ok(best.1);
        }
        let newton = x - fx / dfx;
        let use_newton = dfx.is_finite()
            && dfx != 0.0
            && newton > lo
            && newton < hi
            && fx.abs() <= 0.5 * last_abs;
        last_abs = fx.abs();
        x = if use_newton { newton } else { 0.5 * (lo + hi) };
    }
    Err(NumericsError::MaxIterations {
        iterations: cfg.max_iterations,
        residual: best.0,
    })
}

// ---------------------------------------------------------------------------
// Fixed-point systems
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub newton_steps: usize,
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves `residual(x) = 0` where `x - residual(x)` is the natural Picard map.
///
/// Damped Picard steps `x ← x − damping·residual(x)` are taken until the step
/// drops below 1e-3 (or stops contracting); from then on Newton steps with a
/// central-difference Jacobian and a backtracking line search on `‖r‖₂` are
/// used. A singular Jacobian falls back to Picard for that iteration. When the
/// line search stalls away from a root, Picard steps are taken unconditionally
/// and Newton stays off until the residual has halved.
pub fn solve_fixed_point_system<E, F>(
    mut residual: F,
    x0: &[f64],
    cfg: &SolverConfig,
) -> std::result::Result<FixedPointSolution, E>
where
    E: From<NumericsError>,
    F: FnMut(&[f64]) -> std::result::Result<Vec<f64>, E>,
{
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::InvalidConfig("initial guess must be finite".into()).into());
    }
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let mut norm = max_norm(&r);
    let mut newton_mode = false;
    let mut newton_steps = 0;
    let mut singular = false;
    // Newton is suspended while the residual stays at or above this level.
    let mut newton_block = f64::INFINITY;

    for iteration in 0..cfg.max_iterations {
        if !norm.is_finite() {
            return Err(NumericsError::NonFinite { at: f64::NAN }.into());
        }
        if norm <= cfg.tolerance {
            return Ok(FixedPointSolution {
                x,
                residual_norm: norm,
                iterations: iteration,
                newton_steps,
            });
        }
        if norm < newton_block {
            newton_block = f64::INFINITY;
            if cfg.damping * norm < 1e-3 {
                newton_mode = true;
            }
        }

        let mut stepped = false;
        let mut stalled = false;
        if newton_mode && newton_block.is_infinite() {
            match newton_direction(&mut residual, &x, &r, cfg)? {
                Some(dir) => {
                    singular = false;
                    let merit = l2_norm(&r);
                    let mut t = 1.0;
                    for _ in 0..20 {
                        let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
                        if let Ok(rt) = residual(&trial) {
                            if rt.iter().all(|v| v.is_finite()) && l2_norm(&rt) < merit {
                                x = trial;
                                norm = max_norm(&rt);
                                r = rt;
                                stepped = true;
                                newton_steps += 1;
                                break;
                            }
                        }
                        t *= 0.5;
                    }
                    stalled = !stepped;
                }
                None => singular = true,
            }
        }
        if !stepped {
            let trial: Vec<f64> = x.iter().zip(&r).map(|(xi, ri)| xi - cfg.damping * ri).collect();
            let rt = residual(&trial)?;
            let nt = max_norm(&rt);
            if stalled {
                if !(nt < norm) && norm <= cfg.tolerance.sqrt() {
                    // Neither step improves: the residual is at its noise floor.
                    break;
                }
                newton_mode = false;
                newton_block = 0.5 * norm;
            } else if nt > 0.9 * norm && newton_block.is_infinite() {
                newton_mode = true;
            }
            x = trial;
            r = rt;
            norm = nt;
        }
    }
    if norm <= cfg.tolerance {
        return Ok(FixedPointSolution {
            x,
            residual_norm: norm,
            iterations: cfg.max_iterations,
            newton_steps,
        });
    }
    if singular {
        return Err(NumericsError::SingularJacobian { residual: norm }.into());
    }
    Err(NumericsError::MaxIterations {
        iterations: cfg.max_iterations,
        residual: norm,
    }
    .into())
}

fn newton_direction<E, F>(
    residual: &mut F,
    x: &[f64],
    r: &[f64],
    cfg: &SolverConfig,
) -> std::result::Result<Option<Vec<f64>>, E>
where
    E: From<NumericsError>,
    F: FnMut(&[f64]) -> std::result::Result<Vec<f64>, E>,
{
    let n = x.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = cfg.fd_step * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let plus = residual(&probe)?;
        probe[j] = x[j] - h;
        let minus = residual(&probe)?;
        probe[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
    Ok(jac.lu().solve(&rhs).map(|d| d.iter().copied().collect::<Vec<_>>()).filter(|d| d.iter().all(|v| v.is_finite())))
}

// ---------------------------------------------------------------------------
// Lambert W
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambertBranch {
    Principal,
    MinusOne,
}

const INV_E: f64 = 0.367_879_441_171_442_33;

/// Lambert W on the principal (`W ≥ −1`) or lower (`W ≤ −1`) real branch.
pub fn lambert_w(x: f64, branch: LambertBranch) -> Result<f64> {
    if !x.is_finite() {
        return Err(NumericsError::OutOfDomain { what: "lambert_w", x });
    }
    // Allow a couple of ulps of slack at the branch point.
    let branch_gap = x + INV_E;
    if branch_gap < -4.0 * f64::EPSILON {
        return Err(NumericsError::OutOfDomain { what: "lambert_w", x });
    }
    if branch == LambertBranch::MinusOne && x >= 0.0 {
        return Err(NumericsError::OutOfDomain {
            what: "lambert_w (minus-one branch)",
            x,
        });
    }
    if branch_gap <= 4.0 * f64::EPSILON {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
    let mut w = match branch {
        LambertBranch::Principal => {
            if p < 0.5 {
                -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
            } else if x < 3.0 {
                0.5 * (1.0 + x).ln()
            } else {
                let l = x.ln();
                l - l.ln()
            }
        }
        LambertBranch::MinusOne => {
            if p < 0.5 {
                -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
            } else {
                let l = (-x).ln();
                (l - (-l).ln()).min(-1.0 - p)
            }
        }
    };

    // Halley iteration on w e^w − x.
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        // Stay on the requested side of the branch point.
        let next = match branch {
            LambertBranch::Principal if next < -1.0 => 0.5 * (w - 1.0),
            LambertBranch::MinusOne if next > -1.0 => 0.5 * (w - 1.0),
            _ => next,
        };
        if (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs()) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn tail_of_exponential_normalizes() {
        let v = integrate_upper_tail(|z: f64| (-z).exp(), 0.0, &cfg()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tail_mean_of_exponential() {
        let xi = 1.25;
        let v = integrate_upper_tail(|z: f64| z * (-z / xi).exp() / xi, 0.0, &cfg()).unwrap();
        assert!((v - 1.25).abs() < 1e-9);
    }

    #[test]
    fn tail_of_scaled_exponential() {
        let v = integrate_upper_tail(|z: f64| 2.0 * (-0.9 * z).exp(), 0.0, &cfg()).unwrap();
        assert!((v - 2.0 / 0.9).abs() < 1e-9);
    }

    #[test]
    fn growing_tail_is_divergent() {
        let err = integrate_upper_tail(|z: f64| (0.1 * z).exp(), 0.0, &cfg()).unwrap_err();
        assert!(matches!(err, NumericsError::Divergent(_)), "{err:?}");
        let err = integrate_upper_tail(|_z: f64| 1.0, 0.0, &cfg()).unwrap_err();
        assert!(matches!(err, NumericsError::Divergent(_)), "{err:?}");
    }

    #[test]
    fn nan_integrand_is_non_finite() {
        let err = integrate(|_z: f64| f64::NAN, 0.0, 1.0, &cfg()).unwrap_err();
        assert!(matches!(err, NumericsError::NonFinite { .. }));
    }

    #[test]
    fn breaks_handle_jumps() {
        let f = |z: f64| if z >= 1.3 { (-z).exp() } else { 0.0 };
        let v = integrate_upper_tail_with_breaks(f, 0.0, &[1.3], &QuadratureConfig::precise()).unwrap();
        assert!((v - (-1.3f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn far_break_beyond_first_panel() {
        let f = |z: f64| if z >= 20.0 { (-(z - 20.0)).exp() } else { 0.0 };
        let v = integrate_upper_tail_with_breaks(f, 0.0, &[20.0], &cfg()).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_quadrature_config() {
        let bad = QuadratureConfig {
            abs_tol: 0.0,
            ..cfg()
        };
        assert!(integrate(|z| z, 0.0, 1.0, &bad).is_err());
    }

    #[test]
    fn scalar_roots() {
        let s = SolverConfig::default();
        let r = solve_scalar_root(|x| x * x - 2.0, (0.0, 2.0), &s).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let r = solve_scalar_root(|a| (0.5 * a).exp() - 2.0, (0.0, 10.0), &s).unwrap();
        assert!((r - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scalar_root_single_insurer_gamma_proportional() {
        let f = |a: f64| {
            let d = 1.0 - 0.5 * a;
            -1.0 / d.powf(2.5) + 0.5 * 2.5 * (1.0 - a) / d.powf(3.5) + 1.0
        };
        let r = solve_scalar_root(f, (0.0, 1.0), &SolverConfig::default()).unwrap();
        assert!((r - 0.661).abs() < 5e-4, "{r}");
        assert!(f(r).abs() <= 1e-12);
    }

    #[test]
    fn scalar_root_without_bracket() {
        let err = solve_scalar_root(|x| x * x + 1.0, (0.0, 1.0), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, NumericsError::NoBracket { .. }));
    }

    #[test]
    fn fixed_point_constant_and_linear_maps() {
        let s = SolverConfig::default();
        let sol = solve_fixed_point_system::<NumericsError, _>(
            |x| Ok(vec![x[0] - 1.0, x[1] - 2.0]),
            &[0.0, 0.0],
            &s,
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 2.0).abs() < 1e-12);

        let sol = solve_fixed_point_system::<NumericsError, _>(
            |x| Ok(vec![2.0 * x[0] - 2.0, 4.0 * x[1] - 4.0]),
            &[0.0, 0.0],
            &s,
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_nonlinear_needs_newton() {
        // Picard diverges on this map (slope 3 at the root) but Newton does not.
        let s = SolverConfig::default();
        let sol = solve_fixed_point_system::<NumericsError, _>(
            |x| Ok(vec![x[0] * x[0] * x[0] - 8.0]),
            &[2.1],
            &s,
        )
        .unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
        assert!(sol.newton_steps > 0);
    }

    #[test]
    fn fixed_point_reports_max_iterations() {
        let s = SolverConfig {
            max_iterations: 5,
            ..SolverConfig::default()
        };
        let err = solve_fixed_point_system::<NumericsError, _>(|x| Ok(vec![x[0].exp()]), &[0.0], &s)
            .unwrap_err();
        assert!(matches!(
            err,
            NumericsError::MaxIterations { .. } | NumericsError::SingularJacobian { .. }
        ));
    }

    #[test]
    fn lambert_values() {
        assert_eq!(lambert_w(0.0, LambertBranch::Principal).unwrap(), 0.0);
        let w = lambert_w(std::f64::consts::E, LambertBranch::Principal).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
        // Oracle: bisection for w e^w = -0.5 e^{-0.5} on w < -1 (frozen below).
        let x = -0.5 * (-0.5f64).exp();
        let w = lambert_w(x, LambertBranch::MinusOne).unwrap();
        assert!((w - -1.756_431_208_626_169_5).abs() < 1e-12, "{w}");
        // The principal branch of the same argument is −0.5 itself.
        let w0 = lambert_w(x, LambertBranch::Principal).unwrap();
        assert!((w0 + 0.5).abs() < 1e-14);
        assert_eq!(lambert_w(-INV_E, LambertBranch::MinusOne).unwrap(), -1.0);
    }

    #[test]
    fn lambert_domain_errors() {
        assert!(lambert_w(-0.5, LambertBranch::Principal).is_err());
        assert!(lambert_w(0.1, LambertBranch::MinusOne).is_err());
        assert!(lambert_w(f64::NAN, LambertBranch::Principal).is_err());
    }
}
