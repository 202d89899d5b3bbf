use proptest::prelude::*;

use stackre::contracts::{retention, Contract, RetentionOutput};
use stackre::figures::presets;
use stackre::insurer::best_response;
use stackre::measures::{barycentre_density, kl_rate, total_intensity, BarycentreKind, InsurerSpec, SeverityModel};
use stackre::reinsurer::{distorted_compensator, loading_residual, solve_equilibrium, MarketSpec, Objective};
use stackre::{parse_market_spec_str, write_market_spec};

fn severity() -> impl Strategy<Value = SeverityModel> {
    prop_oneof![
        (0.3..1.6f64).prop_map(|s| SeverityModel::exponential(s).unwrap()),
        (0.5..3.0f64, 0.3..1.2f64).prop_map(|(m, s)| SeverityModel::gamma(m, s).unwrap()),
    ]
}

fn insurer(weight: f64) -> impl Strategy<Value = InsurerSpec> {
    (0.1..0.6f64, 0.5..4.0f64, severity()).prop_map(move |(gamma, lambda, sev)| {
        InsurerSpec::new(gamma, lambda, sev, 0.1, weight).unwrap()
    })
}

fn contract() -> impl Strategy<Value = Contract> {
    prop_oneof![
        Just(Contract::Proportional),
        Just(Contract::ExcessOfLoss),
        (0.2..5.0f64).prop_map(|l| Contract::capped(l).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_response_is_monotone_in_loading(
        ins in insurer(1.0),
        contract in contract(),
        c1 in 0.0..4.0f64,
        dc in 0.0..2.0f64,
    ) {
        let lo = best_response(&ins, &contract, c1).unwrap().control;
        let hi = best_response(&ins, &contract, c1 + dc).unwrap().control;
        prop_assert!(hi >= lo - 1e-10, "{lo} > {hi}");
    }

    #[test]
    fn retention_stays_in_the_claim(contract in contract(), z in 0.0..20.0f64, a in 0.0..5.0f64) {
        let a = contract.admissible(a.min(1.0).max(1e-9)).unwrap();
        let r = retention(&contract, z, a, RetentionOutput::Value).unwrap();
        prop_assert!((0.0..=z + 1e-12).contains(&r));
    }

    #[test]
    fn arithmetic_barycentre_dominates_geometric(
        a in insurer(0.5),
        b in insurer(0.5),
        w in 0.05..0.95f64,
        z in 0.01..15.0f64,
    ) {
        let mut pair = vec![a, b];
        pair[0].weight = w;
        pair[1].weight = 1.0 - w;
        let va = barycentre_density(&pair, BarycentreKind::Arithmetic).unwrap();
        let vg = barycentre_density(&pair, BarycentreKind::Geometric).unwrap();
        prop_assert!(va.eval(z) >= vg.eval(z) * (1.0 - 1e-12));
    }

    #[test]
    fn kl_rate_is_nonnegative(a in insurer(1.0), b in insurer(1.0)) {
        let kl = kl_rate(&a.compensator(), &b.compensator()).unwrap();
        prop_assert!(kl >= -1e-12, "{kl}");
        let own = kl_rate(&a.compensator(), &a.compensator()).unwrap();
        prop_assert!(own.abs() < 1e-12);
    }

    #[test]
    fn exponent_dominance(m in 1e-4..5.0f64, loss in 0.0..20.0f64) {
        let lhs = (m * loss).exp_m1() / m;
        prop_assert!(lhs >= loss * (1.0 - 1e-15));
    }

    #[test]
    fn config_round_trip(
        a in insurer(0.3),
        b in insurer(0.7),
        eps in 0.0..0.3f64,
        limit in 0.2..4.0f64,
        kind in 0..3usize,
        utility in proptest::option::of(0.05..1.0f64),
    ) {
        let contract = match kind {
            0 => Contract::Proportional,
            1 => Contract::ExcessOfLoss,
            _ => Contract::capped(limit).unwrap(),
        };
        let objective = utility.map_or(Objective::Wealth, |m| Objective::Utility { risk_aversion: m });
        // Keep the scale inside the validated region.
        let fix = |mut i: InsurerSpec| {
            if let Some((m, s)) = i.severity.gamma_parameters() {
                let s = s.min(0.9 / i.risk_aversion);
                i.severity = if matches!(i.severity, SeverityModel::Exponential { .. }) {
                    SeverityModel::exponential(s).unwrap()
                } else {
                    SeverityModel::gamma(m, s).unwrap()
                };
            }
            i
        };
        let spec = MarketSpec::uniform(vec![fix(a), fix(b)], contract, eps, objective).unwrap();
        let text = write_market_spec(&spec);
        prop_assert_eq!(parse_market_spec_str(&text).unwrap(), spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Uncapped XL only has an equilibrium while 1/ξ_k − Σπ_j/ξ_j + nε < γ_k
    // for every k; the ranges keep the scales close enough for that.
    #[test]
    fn equilibria_have_tiny_residual(
        xi1 in 0.9..1.3f64,
        xi2 in 0.9..1.3f64,
        eps in 0.0..0.05f64,
        limit in proptest::option::of(0.5..4.0f64),
        w in 0.2..0.8f64,
    ) {
        let insurers = vec![
            InsurerSpec::new(0.5, 2.0, SeverityModel::exponential(xi1).unwrap(), 0.0, w).unwrap(),
            InsurerSpec::new(0.5, 2.5, SeverityModel::exponential(xi2).unwrap(), 0.0, 1.0 - w).unwrap(),
        ];
        let contract = limit.map_or(Contract::ExcessOfLoss, |l| Contract::capped(l).unwrap());
        let market = MarketSpec::uniform(insurers, contract, eps, Objective::Wealth).unwrap();
        let eq = solve_equilibrium(&market).unwrap();
        prop_assert!(eq.diagnostics.residual_norm <= 1e-12);
        let r = loading_residual(&market, &eq.loadings).unwrap();
        prop_assert!(r.iter().all(|v| v.abs() <= 1e-12), "{r:?}");
    }
}

#[test]
fn utility_compensator_dominates_wealth_compensator() {
    let wealth = presets::exponential_capped(0.1, 1.0);
    let alpha = [1.8, 1.5];
    let w = distorted_compensator(&wealth, &alpha).unwrap();
    for m in [0.01, 0.5, 2.0] {
        let utility = MarketSpec { objective: Objective::Utility { risk_aversion: m }, ..wealth.clone() };
        let u = distorted_compensator(&utility, &alpha).unwrap();
        for i in 0..=400 {
            let z = i as f64 * 0.025;
            assert!(u.eval(z) >= w.eval(z) * (1.0 - 1e-14), "m={m} z={z}");
        }
    }
}

#[test]
fn loadings_and_retentions_rise_with_ambiguity() {
    for market in [presets::gamma_proportional(0.0), presets::exponential_xl(0.0)] {
        let mut prev: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for eps in [0.0, 0.05, 0.1] {
            let eq = solve_equilibrium(&MarketSpec { ambiguity: eps, ..market.clone() }).unwrap();
            if let Some((a, e, lambda)) = &prev {
                for k in 0..2 {
                    assert!(eq.controls[k] >= a[k] - 1e-12, "alpha_{k} at eps={eps}");
                    assert!(eq.loadings[k] >= e[k] - 1e-12, "eta_{k} at eps={eps}");
                }
                assert!(eq.total_intensity >= *lambda - 1e-12);
            }
            prev = Some((eq.controls, eq.loadings, eq.total_intensity));
        }
    }
}

#[test]
fn total_intensity_rises_with_second_weight() {
    let market = presets::gamma_proportional(0.1);
    let mut prev = 0.0;
    for pi2 in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mut m = market.clone();
        m.insurers[0].weight = 1.0 - pi2;
        m.insurers[1].weight = pi2;
        let eq = solve_equilibrium(&m).unwrap();
        assert!(eq.total_intensity >= prev, "pi2={pi2}");
        assert!((total_intensity(&eq.compensator).unwrap() - eq.total_intensity).abs() < 1e-10);
        prev = eq.total_intensity;
    }
}

#[test]
fn utility_limit_as_m_vanishes() {
    let wealth = presets::exponential_capped(0.1, 1.0);
    let base = solve_equilibrium(&wealth).unwrap();
    let gap = |m: f64| {
        let eq = solve_equilibrium(&MarketSpec { objective: Objective::Utility { risk_aversion: m }, ..wealth.clone() }).unwrap();
        eq.loadings
            .iter()
            .zip(&base.loadings)
            .chain(eq.controls.iter().zip(&base.controls))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (g2, g3) = (gap(1e-2), gap(1e-3));
    assert!(g3 < g2, "{g3} !< {g2}");
    assert!(g3 < 1e-2);
}
