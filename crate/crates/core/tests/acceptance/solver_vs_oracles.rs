use std::time::Instant;

use stackre::closedform::{capped_xl_oracle, exponential_xl_oracle, gamma_proportional_oracle};
use stackre::contracts::Contract;
use stackre::measures::{InsurerSpec, SeverityModel};
use stackre::reinsurer::{solve_equilibrium, MarketSpec, Objective};

fn gamma_pair(pi2: f64) -> Vec<InsurerSpec> {
    vec![
        InsurerSpec::new(0.5, 2.0, SeverityModel::gamma(1.5, 1.0).unwrap(), 0.0, 1.0 - pi2).unwrap(),
        InsurerSpec::new(0.5, 2.5, SeverityModel::gamma(2.0, 1.25).unwrap(), 0.0, pi2).unwrap(),
    ]
}

fn exp_pair() -> Vec<InsurerSpec> {
    vec![
        InsurerSpec::new(0.5, 2.0, SeverityModel::exponential(1.0).unwrap(), 0.0, 0.5).unwrap(),
        InsurerSpec::new(0.5, 2.5, SeverityModel::exponential(1.25).unwrap(), 0.0, 0.5).unwrap(),
    ]
}

fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{what}: {a:?} vs {b:?}");
    }
}

#[test]
fn gamma_proportional_matches_oracle() {
    for pi2 in [0.0, 0.5, 1.0] {
        for eps in [0.0, 0.05, 0.1] {
            let t = Instant::now();
            let market = MarketSpec::uniform(gamma_pair(pi2), Contract::Proportional, eps, Objective::Wealth).unwrap();
            let sol = solve_equilibrium(&market).unwrap();
            let oracle = gamma_proportional_oracle(&gamma_pair(pi2), eps).unwrap();
            eprintln!("pi2={pi2} eps={eps} {:?} {:?} in {:?}", sol.controls, sol.loadings, t.elapsed());
            assert_close(&sol.controls, &oracle.controls, 1e-6, "controls");
            assert_close(&sol.loadings, &oracle.loadings, 1e-6, "loadings");
            assert!((sol.total_intensity - oracle.total_intensity).abs() < 1e-8);
            assert!(sol.diagnostics.residual_norm <= 1e-12);
        }
    }
}

#[test]
fn exponential_xl_matches_oracle() {
    for eps in [0.0, 0.1, 0.2] {
        let market = MarketSpec::uniform(exp_pair(), Contract::ExcessOfLoss, eps, Objective::Wealth).unwrap();
        let sol = solve_equilibrium(&market).unwrap();
        let oracle = exponential_xl_oracle(&exp_pair(), eps).unwrap();
        assert_close(&sol.controls, &oracle.controls, 1e-6, "controls");
        assert_close(&sol.loadings, &oracle.loadings, 1e-6, "loadings");
        assert_close(&sol.premiums, &oracle.premiums, 1e-6, "premiums");
    }
}

#[test]
fn capped_xl_matches_oracle() {
    for eps in [0.0, 0.1, 0.5] {
        for limit in [0.5, 1.0, 6.0] {
            let market = MarketSpec::uniform(exp_pair(), Contract::capped(limit).unwrap(), eps, Objective::Wealth).unwrap();
            let sol = solve_equilibrium(&market).unwrap();
            let oracle = capped_xl_oracle(&exp_pair(), eps, &[limit, limit]).unwrap();
            assert_close(&sol.controls, &oracle.controls, 1e-6, "controls");
            assert_close(&sol.loadings, &oracle.loadings, 1e-6, "loadings");
            assert_close(&sol.premiums, &oracle.premiums, 1e-6, "premiums");
        }
    }
}
