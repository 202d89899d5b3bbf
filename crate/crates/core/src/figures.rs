//! Experiment runner: equilibria, parameter sweeps, simulations and the
//! tables behind the published figures, written as CSV/JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::ConfigError;
use crate::contracts::{Contract, ContractKind};
use crate::measures::{barycentre_density, BarycentreKind, InsurerSpec, SeverityModel};
use crate::montecarlo::{
    estimate_density_martingale, estimate_insurer_objective_grid, estimate_reinsurer_objective, Estimate, SimConfig,
    SimulationError,
};
use crate::reinsurer::{initial_loadings, solve_equilibrium, solve_equilibrium_from, EquilibriumResult, MarketSpec, Objective, ReinsurerError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("not integrable: {0}")]
    NonIntegrable(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl From<ReinsurerError> for RunError {
    fn from(e: ReinsurerError) -> Self {
        match e {
            ReinsurerError::Validation(m) => RunError::Validation(m),
            ReinsurerError::NonIntegrable(m) => RunError::NonIntegrable(m),
            other => RunError::Solver(other.to_string()),
        }
    }
}

impl From<SimulationError> for RunError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidConfig(m) => RunError::Validation(m),
            SimulationError::NonIntegrable(m) => RunError::NonIntegrable(m),
            other => RunError::Solver(other.to_string()),
        }
    }
}

impl RunError {
    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Validation(_) | RunError::NonIntegrable(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    Compensators,
    TotalIntensity,
    LoadingsVsWeight,
    XlCompensators,
    XlLoadings,
    CappedSweep,
    UtilitySweep,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Compensators,
        FigureId::TotalIntensity,
        FigureId::LoadingsVsWeight,
        FigureId::XlCompensators,
        FigureId::XlLoadings,
        FigureId::CappedSweep,
        FigureId::UtilitySweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Compensators => "compensators",
            FigureId::TotalIntensity => "total-intensity",
            FigureId::LoadingsVsWeight => "loadings-vs-weight",
            FigureId::XlCompensators => "xl-compensators",
            FigureId::XlLoadings => "xl-loadings",
            FigureId::CappedSweep => "capped-sweep",
            FigureId::UtilitySweep => "utility-sweep",
        }
    }

    /// Market used when no config is given.
    pub fn default_market(self) -> MarketSpec {
        match self {
            FigureId::Compensators | FigureId::TotalIntensity | FigureId::LoadingsVsWeight => presets::gamma_proportional(0.1),
            FigureId::XlCompensators | FigureId::XlLoadings => presets::exponential_xl(0.1),
            FigureId::CappedSweep => presets::exponential_capped(0.0, 1.0),
            FigureId::UtilitySweep => presets::exponential_capped(0.1, 1.0),
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| RunError::Validation(format!("unknown figure `{s}`")))
    }
}

/// The two worked markets of the model, with the calibration used throughout.
pub mod presets {
    use super::*;

    /// Two Gamma insurers under proportional reinsurance, equal weights.
    pub fn gamma_proportional(epsilon: f64) -> MarketSpec {
        let insurers = vec![
            InsurerSpec::new(0.5, 2.0, SeverityModel::gamma(1.5, 1.0).unwrap(), 0.0, 0.5).unwrap(),
            InsurerSpec::new(0.5, 2.5, SeverityModel::gamma(2.0, 1.25).unwrap(), 0.0, 0.5).unwrap(),
        ];
        MarketSpec::uniform(insurers, Contract::Proportional, epsilon, Objective::Wealth).unwrap()
    }

    fn exponential_insurers() -> Vec<InsurerSpec> {
        vec![
            InsurerSpec::new(0.5, 2.0, SeverityModel::exponential(1.0).unwrap(), 0.0, 0.5).unwrap(),
            InsurerSpec::new(0.5, 2.5, SeverityModel::exponential(1.25).unwrap(), 0.0, 0.5).unwrap(),
        ]
    }

    /// Two exponential insurers under excess-of-loss reinsurance.
    pub fn exponential_xl(epsilon: f64) -> MarketSpec {
        MarketSpec::uniform(exponential_insurers(), Contract::ExcessOfLoss, epsilon, Objective::Wealth).unwrap()
    }

    /// Same market with a common layer width `limit`.
    pub fn exponential_capped(epsilon: f64, limit: f64) -> MarketSpec {
        let contract = Contract::capped(limit).unwrap();
        MarketSpec::uniform(exponential_insurers(), contract, epsilon, Objective::Wealth).unwrap()
    }
}

/// Formats a float with 12 significant digits, trailing zeros trimmed.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        trim(&format!("{:.*}", (11 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

/// Named columns of reals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureTable {
    pub id: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureTable {
    pub fn new(id: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            id: id.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    fn check_finite(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(RunError::Solver(format!(
                    "{}: non-finite `{}` in row {}",
                    self.id,
                    self.columns[j],
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_sig12(v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Epsilon,
    Pi2,
    Limit,
    RiskAversion,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "eps",
            SweepParam::Pi2 => "pi2",
            SweepParam::Limit => "limit",
            SweepParam::RiskAversion => "m",
        }
    }
}

impl FromStr for SweepParam {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps" | "epsilon" => Ok(SweepParam::Epsilon),
            "pi2" => Ok(SweepParam::Pi2),
            "limit" => Ok(SweepParam::Limit),
            "m" => Ok(SweepParam::RiskAversion),
            other => Err(RunError::Validation(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Equilibrium,
    Sweep { param: SweepParam, from: f64, to: f64, steps: usize },
    Simulate { replications: usize, seed: u64, antithetic: bool },
    Figure(FigureId),
}

/// Evenly spaced grid with `steps` points including both ends.
pub fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect(),
    }
}

/// Copy of `market` with `param` set to `value`.
pub fn apply_param(market: &MarketSpec, param: SweepParam, value: f64) -> Result<MarketSpec> {
    let mut m = market.clone();
    match param {
        SweepParam::Epsilon => m.ambiguity = value,
        SweepParam::Pi2 => {
            if m.len() != 2 {
                return Err(RunError::Validation("the pi2 sweep needs exactly two insurers".into()));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(RunError::Validation(format!("pi2 = {value} is outside [0, 1]")));
            }
            m.insurers[0].weight = 1.0 - value;
            m.insurers[1].weight = value;
        }
        SweepParam::Limit => {
            if m.kind() == ContractKind::Proportional {
                return Err(RunError::Validation("the limit sweep needs an excess-of-loss market".into()));
            }
            let c = Contract::capped(value).map_err(|e| RunError::Validation(e.to_string()))?;
            m.contracts = vec![c; m.len()];
        }
        SweepParam::RiskAversion => {
            if m.kind() != ContractKind::CappedExcessOfLoss {
                return Err(RunError::Validation(
                    "the m sweep needs capped excess-of-loss contracts (the utility-mode compensator is otherwise not integrable)".into(),
                ));
            }
            m.objective = Objective::Utility { risk_aversion: value };
        }
    }
    m.validate()?;
    Ok(m)
}

/// Solves without the residual landscape scan.
fn solve_quiet(market: &MarketSpec) -> Result<EquilibriumResult> {
    let eta0 = initial_loadings(market)?;
    Ok(solve_equilibrium_from(market, &eta0, false)?)
}

/// Equilibria at each grid value, solved in parallel and returned in grid order.
pub fn sweep(market: &MarketSpec, param: SweepParam, grid: &[f64]) -> Result<Vec<EquilibriumResult>> {
    grid.par_iter()
        .map(|&v| {
            let m = apply_param(market, param, v)?;
            solve_quiet(&m).map_err(|e| match e {
                RunError::Solver(msg) => RunError::Solver(format!("{} = {v}: {msg}", param.as_str())),
                other => other,
            })
        })
        .collect()
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}_{k}")).collect()
}

fn equilibrium_columns(first: &str, n: usize) -> Vec<String> {
    let mut cols = vec![first.to_string()];
    cols.extend(indexed("alpha", n));
    cols.extend(indexed("eta", n));
    cols.extend(indexed("premium", n));
    cols.push("lambda_total".into());
    cols.push("residual".into());
    cols
}

fn equilibrium_row(x: f64, r: &EquilibriumResult) -> Vec<f64> {
    let mut row = vec![x];
    row.extend(&r.controls);
    row.extend(&r.loadings);
    row.extend(&r.premiums);
    row.push(r.total_intensity);
    row.push(r.diagnostics.residual_norm);
    row
}

fn sweep_table(id: &str, market: &MarketSpec, param: SweepParam, grid: &[f64]) -> Result<FigureTable> {
    let results = sweep(market, param, grid)?;
    let mut table = FigureTable::new(id, equilibrium_columns(param.as_str(), market.len()));
    for (&x, r) in grid.iter().zip(&results) {
        table.push(equilibrium_row(x, r));
    }
    Ok(table)
}

/// Single-insurer compensators, both barycentres and the equilibrium `ς*`
/// on `z ∈ [0, 10]`.
fn compensator_table(id: &str, market: &MarketSpec) -> Result<FigureTable> {
    let eq = solve_quiet(market)?;
    let va = barycentre_density(&market.insurers, BarycentreKind::Arithmetic).map_err(ReinsurerError::from)?;
    let vg = market.geometric_barycentre()?;
    let own: Vec<_> = market.insurers.iter().map(|i| i.compensator()).collect();
    let mut cols = vec!["z".to_string()];
    cols.extend(indexed("v", market.len()));
    cols.extend(["v_arithmetic".into(), "v_geometric".into(), "sigma".into()]);
    let mut table = FigureTable::new(id, cols);
    for z in linspace(0.0, 10.0, 201) {
        let mut row = vec![z];
        row.extend(own.iter().map(|v| v.eval(z)));
        row.extend([va.eval(z), vg.eval(z), eq.compensator.eval(z)]);
        table.push(row);
    }
    Ok(table)
}

/// Builds the table behind figure `id` from `market`.
pub fn figure_table(id: FigureId, market: &MarketSpec) -> Result<FigureTable> {
    let name = id.as_str();
    let table = match id {
        FigureId::Compensators | FigureId::XlCompensators => compensator_table(name, market)?,
        FigureId::TotalIntensity | FigureId::XlLoadings => {
            sweep_table(name, market, SweepParam::Epsilon, &linspace(0.0, 0.3, 13))?
        }
        FigureId::LoadingsVsWeight => sweep_table(name, market, SweepParam::Pi2, &linspace(0.0, 1.0, 21))?,
        FigureId::CappedSweep => {
            let grid = linspace(0.25, 6.0, 24);
            let mut table = sweep_table(name, market, SweepParam::Limit, &grid)?;
            // Reference premiums without a cap.
            let mut uncapped = market.clone();
            uncapped.contracts = vec![Contract::ExcessOfLoss; market.len()];
            let reference = solve_quiet(&uncapped)?;
            table.columns.extend(indexed("premium_uncapped", market.len()));
            for row in &mut table.rows {
                row.extend(&reference.premiums);
            }
            table
        }
        FigureId::UtilitySweep => sweep_table(name, market, SweepParam::RiskAversion, &linspace(0.1, 1.0, 10))?,
    };
    table.check_finite()?;
    Ok(table)
}

/// Monte Carlo check of one equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub replications: usize,
    pub seed: u64,
    pub controls: Vec<f64>,
    pub loadings: Vec<f64>,
    /// Insurer utility at `α* − 0.05`, `α*` and `α* + 0.05`.
    pub insurer_utility: Vec<[Estimate; 3]>,
    /// `E^{P_k}[dQ^{ς*}/dP_k]`.
    pub density_mean: Vec<Estimate>,
    pub reinsurer_at_equilibrium: Estimate,
    pub reinsurer_at_barycentre: Estimate,
}

pub const SIMULATION_STEP: f64 = 0.05;

pub fn simulate_equilibrium(market: &MarketSpec, sim: &SimConfig) -> Result<SimulationReport> {
    let eq = solve_quiet(market)?;
    let mut insurer_utility = Vec::with_capacity(market.len());
    let mut density_mean = Vec::with_capacity(market.len());
    for (k, (ins, con)) in market.insurers.iter().zip(&market.contracts).enumerate() {
        let a = eq.controls[k];
        let grid = [a - SIMULATION_STEP, a, a + SIMULATION_STEP].map(|x| match con {
            Contract::Proportional => x.clamp(crate::contracts::MIN_PROPORTION, 1.0),
            _ => x.max(0.0),
        });
        let est = estimate_insurer_objective_grid(ins, con, &grid, eq.loadings[k], sim)?;
        insurer_utility.push([est[0], est[1], est[2]]);
        density_mean.push(estimate_density_martingale(ins, &eq.compensator, sim)?);
    }
    let vg = market.geometric_barycentre()?;
    Ok(SimulationReport {
        replications: sim.replications,
        seed: sim.seed,
        controls: eq.controls.clone(),
        loadings: eq.loadings.clone(),
        insurer_utility,
        density_mean,
        reinsurer_at_equilibrium: estimate_reinsurer_objective(market, &eq.loadings, &eq.compensator, sim)?,
        reinsurer_at_barycentre: estimate_reinsurer_objective(market, &eq.loadings, &vg, sim)?,
    })
}

fn simulation_table(report: &SimulationReport) -> FigureTable {
    let cols = [
        "insurer",
        "alpha",
        "eta",
        "utility_left",
        "utility",
        "utility_right",
        "utility_se",
        "density_mean",
        "density_se",
    ];
    let mut table = FigureTable::new("simulation", cols.iter().map(|c| c.to_string()).collect());
    for k in 0..report.controls.len() {
        let u = &report.insurer_utility[k];
        table.push(vec![
            (k + 1) as f64,
            report.controls[k],
            report.loadings[k],
            u[0].mean,
            u[1].mean,
            u[2].mean,
            u[1].std_error,
            report.density_mean[k].mean,
            report.density_mean[k].std_error,
        ]);
    }
    table
}

fn write_file(path: PathBuf, contents: &str) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| RunError::Solver(format!("cannot serialize output: {e}")))
}

/// Runs `command` and writes its outputs into `out`.
///
/// `market` may be omitted only for figures, which then use their preset.
/// Files: `equilibrium.json` + `equilibrium.csv`, `sweep_<param>.csv`,
/// `simulation.json` + `simulation.csv`, `figure_<id>.csv`.
pub fn run_command(command: &Command, market: Option<&MarketSpec>, out: &Path) -> Result<FigureTable> {
    let need = || market.ok_or_else(|| RunError::Validation("this command needs a market config".into()));
    std::fs::create_dir_all(out).map_err(|e| RunError::Io {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    match command {
        Command::Equilibrium => {
            let market = need()?;
            let eq = solve_equilibrium(market)?;
            let mut table = FigureTable::new(
                "equilibrium",
                ["insurer", "alpha", "eta", "premium", "lambda_total"].iter().map(|c| c.to_string()).collect(),
            );
            for k in 0..market.len() {
                table.push(vec![(k + 1) as f64, eq.controls[k], eq.loadings[k], eq.premiums[k], eq.total_intensity]);
            }
            table.check_finite()?;
            write_file(out.join("equilibrium.json"), &to_json(&eq)?)?;
            write_file(out.join("equilibrium.csv"), &table.to_csv())?;
            Ok(table)
        }
        Command::Sweep { param, from, to, steps } => {
            let market = need()?;
            if *steps == 0 {
                return Err(RunError::Validation("a sweep needs at least one step".into()));
            }
            let table = sweep_table(&format!("sweep-{}", param.as_str()), market, *param, &linspace(*from, *to, *steps))?;
            table.check_finite()?;
            write_file(out.join(format!("sweep_{}.csv", param.as_str())), &table.to_csv())?;
            Ok(table)
        }
        Command::Simulate { replications, seed, antithetic } => {
            let market = need()?;
            let sim = SimConfig {
                horizon: market.horizon,
                replications: *replications,
                seed: *seed,
                antithetic: *antithetic,
                ..SimConfig::default()
            };
            let report = simulate_equilibrium(market, &sim)?;
            let table = simulation_table(&report);
            table.check_finite()?;
            write_file(out.join("simulation.json"), &to_json(&report)?)?;
            write_file(out.join("simulation.csv"), &table.to_csv())?;
            Ok(table)
        }
        Command::Figure(id) => {
            let preset;
            let market = match market {
                Some(m) => m,
                None => {
                    preset = id.default_market();
                    &preset
                }
            };
            let table = figure_table(*id, market)?;
            write_file(out.join(format!("figure_{id}.csv")), &table.to_csv())?;
            Ok(table)
        }
    }
}
