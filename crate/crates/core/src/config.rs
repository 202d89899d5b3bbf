//! Flat key-value market configuration.
//!
//! ```text
//! # two Gamma insurers under proportional reinsurance
//! contract  = proportional        # proportional | xl | capped-xl
//! objective = wealth              # wealth | utility
//! epsilon   = 0.1
//! horizon   = 1
//!
//! insurer.1.gamma    = 0.5
//! insurer.1.lambda   = 2
//! insurer.1.severity = gamma      # gamma | exponential | tabulated
//! insurer.1.shape    = 1.5
//! insurer.1.scale    = 1
//! insurer.1.theta    = 0.2
//! insurer.1.weight   = 0.5
//! ```
//!
//! Utility mode needs `risk_aversion`, capped XL needs `insurer.N.limit`,
//! and tabulated severities take `insurer.N.table = z:f, z:f, ...`. The
//! optional `quadrature.*` and `solver.*` keys override numerical settings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::contracts::{Contract, ContractKind};
use crate::measures::{InsurerSpec, SeverityModel};
use crate::numerics::{QuadratureConfig, SolverConfig};
use crate::reinsurer::{MarketSpec, Objective};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid market: {0}")]
    Validation(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

const GLOBAL_KEYS: &[&str] = &["contract", "objective", "epsilon", "horizon", "risk_aversion"];
const QUADRATURE_KEYS: &[&str] = &["abs_tol", "rel_tol", "initial_span", "max_subdivisions", "max_doublings"];
const SOLVER_KEYS: &[&str] = &["tolerance", "max_iterations", "damping", "fd_step"];
const INSURER_KEYS: &[&str] = &["gamma", "lambda", "severity", "shape", "scale", "table", "theta", "weight", "limit"];

/// Value with the line it came from.
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Document {
    global: BTreeMap<String, Entry>,
    insurers: BTreeMap<usize, BTreeMap<String, Entry>>,
}

fn parse_error(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse { line, message: message.into() }
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Validation(message.into())
}

fn tokenize(text: &str) -> Result<Document> {
    let mut doc = Document::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_error(line, format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(parse_error(line, format!("empty value for `{key}`")));
        }
        let entry = Entry { value: value.to_string(), line };
        let parts: Vec<&str> = key.split('.').collect();
        let slot = match parts.as_slice() {
            ["insurer", idx, field] => {
                let k: usize = idx
                    .parse()
                    .ok()
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| parse_error(line, format!("insurer index `{idx}` must be a positive integer")))?;
                if !INSURER_KEYS.contains(field) {
                    return Err(parse_error(line, format!("unknown insurer field `{field}`")));
                }
                doc.insurers.entry(k).or_default().insert(field.to_string(), entry)
            }
            ["quadrature", field] if QUADRATURE_KEYS.contains(field) => doc.global.insert(key.to_string(), entry),
            ["solver", field] if SOLVER_KEYS.contains(field) => doc.global.insert(key.to_string(), entry),
            [field] if GLOBAL_KEYS.contains(field) => doc.global.insert(key.to_string(), entry),
            _ => return Err(parse_error(line, format!("unknown key `{key}`"))),
        };
        if slot.is_some() {
            return Err(parse_error(line, format!("duplicate key `{key}`")));
        }
    }
    Ok(doc)
}

fn value<T: FromStr>(entry: &Entry, key: &str) -> Result<T> {
    entry
        .value
        .parse()
        .map_err(|_| parse_error(entry.line, format!("cannot parse `{}` for `{key}`", entry.value)))
}

fn optional<T: FromStr>(map: &BTreeMap<String, Entry>, key: &str) -> Result<Option<T>> {
    map.get(key).map(|e| value(e, key)).transpose()
}

fn required<T: FromStr>(map: &BTreeMap<String, Entry>, key: &str, owner: &str) -> Result<T> {
    optional(map, key)?.ok_or_else(|| invalid(format!("missing required key `{owner}{key}`")))
}

fn parse_table(entry: &Entry) -> Result<Vec<(f64, f64)>> {
    entry
        .value
        .split(',')
        .map(|pair| {
            let (z, f) = pair
                .split_once(':')
                .ok_or_else(|| parse_error(entry.line, format!("table entry `{}` must be `z:f`", pair.trim())))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_error(entry.line, format!("cannot parse `{}` in table", s.trim())))
            };
            Ok((num(z)?, num(f)?))
        })
        .collect()
}

/// Parses and validates a market description.
pub fn parse_market_spec_str(text: &str) -> Result<MarketSpec> {
    let doc = tokenize(text)?;
    let g = &doc.global;
    let epsilon: f64 = required(g, "epsilon", "")?;
    let kind: ContractKind = match g.get("contract") {
        Some(e) => e.value.parse().map_err(|err| parse_error(e.line, format!("{err}")))?,
        None => return Err(invalid("missing required key `contract`")),
    };
    let objective = match g.get("objective").map(|e| (e.value.as_str(), e.line)) {
        None | Some(("wealth", _)) => {
            if g.contains_key("risk_aversion") {
                log::warn!("risk_aversion is ignored in wealth mode");
            }
            Objective::Wealth
        }
        Some(("utility", _)) => Objective::Utility { risk_aversion: required(g, "risk_aversion", "")? },
        Some((other, line)) => return Err(parse_error(line, format!("objective must be wealth or utility, found `{other}`"))),
    };
    let horizon: f64 = optional(g, "horizon")?.unwrap_or(1.0);

    let mut quadrature = QuadratureConfig::precise();
    if let Some(v) = optional(g, "quadrature.abs_tol")? {
        quadrature.abs_tol = v;
    }
    if let Some(v) = optional(g, "quadrature.rel_tol")? {
        quadrature.rel_tol = v;
    }
    if let Some(v) = optional(g, "quadrature.initial_span")? {
        quadrature.initial_span = v;
    }
    if let Some(v) = optional(g, "quadrature.max_subdivisions")? {
        quadrature.max_subdivisions = v;
    }
    if let Some(v) = optional(g, "quadrature.max_doublings")? {
        quadrature.max_doublings = v;
    }
    let mut solver = SolverConfig::default();
    if let Some(v) = optional(g, "solver.tolerance")? {
        solver.tolerance = v;
    }
    if let Some(v) = optional(g, "solver.max_iterations")? {
        solver.max_iterations = v;
    }
    if let Some(v) = optional(g, "solver.damping")? {
        solver.damping = v;
    }
    if let Some(v) = optional(g, "solver.fd_step")? {
        solver.fd_step = v;
    }

    if doc.insurers.is_empty() {
        return Err(invalid("no insurers defined"));
    }
    let n = doc.insurers.len();
    if doc.insurers.keys().copied().ne(1..=n) {
        return Err(invalid(format!("insurer indices must run 1..{n} without gaps")));
    }
    let with_weight = doc.insurers.values().filter(|m| m.contains_key("weight")).count();
    if with_weight != 0 && with_weight != n {
        return Err(invalid("either every insurer or none must set `weight`"));
    }

    let mut insurers = Vec::with_capacity(n);
    let mut contracts = Vec::with_capacity(n);
    for (&k, map) in &doc.insurers {
        let owner = format!("insurer.{k}.");
        let gamma: f64 = required(map, "gamma", &owner)?;
        let lambda: f64 = required(map, "lambda", &owner)?;
        let severity_name: String = required(map, "severity", &owner)?;
        let severity = match severity_name.as_str() {
            "exponential" => SeverityModel::exponential(required(map, "scale", &owner)?),
            "gamma" => SeverityModel::gamma(required(map, "shape", &owner)?, required(map, "scale", &owner)?),
            "tabulated" => {
                let entry = map.get("table").ok_or_else(|| invalid(format!("missing required key `{owner}table`")))?;
                SeverityModel::tabulated(&parse_table(entry)?)
            }
            other => {
                let line = map["severity"].line;
                return Err(parse_error(line, format!("unknown severity `{other}`")));
            }
        }
        .map_err(|e| invalid(format!("insurer {k}: {e}")))?;
        if let Some((_, xi)) = severity.gamma_parameters() {
            if gamma > 0.0 && xi >= 1.0 / gamma {
                return Err(invalid(format!("insurer {k}: xi_k >= 1/gamma_k (xi = {xi}, gamma = {gamma})")));
            }
        }
        let theta: f64 = optional(map, "theta")?.unwrap_or(0.0);
        let weight: f64 = optional(map, "weight")?.unwrap_or(1.0 / n as f64);
        let limit: Option<f64> = optional(map, "limit")?;
        if limit.is_some() && kind != ContractKind::CappedExcessOfLoss {
            return Err(invalid(format!("insurer {k}: `limit` only applies to capped-xl contracts")));
        }
        let contract = Contract::of_kind(kind, limit).map_err(|e| invalid(format!("insurer {k}: {e}")))?;
        let spec = InsurerSpec::new(gamma, lambda, severity, theta, weight)
            .map_err(|e| invalid(format!("insurer {k}: {e}")))?;
        insurers.push(spec);
        contracts.push(contract);
    }

    let sum: f64 = insurers.iter().map(|i| i.weight).sum();
    if !(sum > 0.0) {
        return Err(invalid("weights must have a positive sum"));
    }
    if (sum - 1.0).abs() > 1e-12 {
        log::warn!("weights sum to {sum}; renormalizing");
        for ins in &mut insurers {
            ins.weight /= sum;
        }
    }

    let spec = MarketSpec {
        insurers,
        contracts,
        ambiguity: epsilon,
        objective,
        horizon,
        quadrature,
        solver,
    };
    spec.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(spec)
}

/// Reads and parses a config file.
pub fn parse_market_spec(path: &Path) -> Result<MarketSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_market_spec_str(&text)
}

/// Serializes a market so that [`parse_market_spec_str`] reproduces it exactly.
pub fn write_market_spec(spec: &MarketSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "contract = {}", spec.kind());
    match spec.objective {
        Objective::Wealth => {
            let _ = writeln!(s, "objective = wealth");
        }
        Objective::Utility { risk_aversion } => {
            let _ = writeln!(s, "objective = utility");
            let _ = writeln!(s, "risk_aversion = {risk_aversion}");
        }
    }
    let _ = writeln!(s, "epsilon = {}", spec.ambiguity);
    let _ = writeln!(s, "horizon = {}", spec.horizon);
    let q = &spec.quadrature;
    let _ = writeln!(s, "quadrature.abs_tol = {:e}", q.abs_tol);
    let _ = writeln!(s, "quadrature.rel_tol = {:e}", q.rel_tol);
    let _ = writeln!(s, "quadrature.initial_span = {}", q.initial_span);
    let _ = writeln!(s, "quadrature.max_subdivisions = {}", q.max_subdivisions);
    let _ = writeln!(s, "quadrature.max_doublings = {}", q.max_doublings);
    let o = &spec.solver;
    let _ = writeln!(s, "solver.tolerance = {:e}", o.tolerance);
    let _ = writeln!(s, "solver.max_iterations = {}", o.max_iterations);
    let _ = writeln!(s, "solver.damping = {}", o.damping);
    let _ = writeln!(s, "solver.fd_step = {:e}", o.fd_step);
    for (k, (ins, contract)) in spec.insurers.iter().zip(&spec.contracts).enumerate() {
        let p = format!("insurer.{}", k + 1);
        let _ = writeln!(s, "\n{p}.gamma = {}", ins.risk_aversion);
        let _ = writeln!(s, "{p}.lambda = {}", ins.intensity);
        match &ins.severity {
            SeverityModel::Exponential { scale } => {
                let _ = writeln!(s, "{p}.severity = exponential\n{p}.scale = {scale}");
            }
            SeverityModel::Gamma { shape, scale } => {
                let _ = writeln!(s, "{p}.severity = gamma\n{p}.shape = {shape}\n{p}.scale = {scale}");
            }
            SeverityModel::Tabulated(t) => {
                let table: Vec<String> = t.input_points().iter().map(|(z, f)| format!("{z}:{f}")).collect();
                let _ = writeln!(s, "{p}.severity = tabulated\n{p}.table = {}", table.join(", "));
            }
        }
        let _ = writeln!(s, "{p}.theta = {}", ins.loading);
        let _ = writeln!(s, "{p}.weight = {}", ins.weight);
        if let Some(l) = contract.limit() {
            let _ = writeln!(s, "{p}.limit = {l}");
        }
    }
    s
}
