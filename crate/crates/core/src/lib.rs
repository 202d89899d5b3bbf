//! Stackelberg equilibria of a reinsurance game between one
//! ambiguity-averse reinsurer and several CARA insurers with compound
//! Poisson losses.
//!
//! The reinsurer quotes loadings, each insurer best-responds with a
//! retention, and the reinsurer prices claims under a distorted compensator
//! of the insurers' geometric barycentre. [`solve_equilibrium`] computes the
//! triple (retentions, loadings, compensator); [`closedform`] holds the
//! exact solutions used to validate it and [`montecarlo`] checks it by
//! simulation.

pub mod closedform;
pub mod config;
pub mod contracts;
pub mod figures;
pub mod insurer;
pub mod measures;
pub mod montecarlo;
pub mod numerics;
pub mod reinsurer;

pub use config::{parse_market_spec, parse_market_spec_str, write_market_spec, ConfigError};
pub use contracts::{Contract, ContractKind};
pub use figures::{run_command, Command, FigureId, FigureTable, RunError, SweepParam};
pub use insurer::{best_response, BestResponse};
pub use measures::{CompensatorField, InsurerSpec, Integrability, SeverityModel};
pub use montecarlo::{Estimate, SimConfig};
pub use numerics::{QuadratureConfig, SolverConfig};
pub use reinsurer::{solve_equilibrium, EquilibriumResult, MarketSpec, Objective, ReinsurerError};
