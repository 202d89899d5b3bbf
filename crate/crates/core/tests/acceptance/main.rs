//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! (written straight to stdout so it shows even when the test passes).
//!
//! The property suites and solver-vs-oracle comparisons are compiled into
//! the same binary so one failing criterion does not hide their results.

mod properties;
mod solver_vs_oracles;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use stackre::closedform::{capped_xl_oracle, exponential_xl_oracle, gamma_proportional_oracle};
use stackre::contracts::{Contract, MIN_PROPORTION};
use stackre::figures::{apply_param, linspace, presets, sweep, SweepParam};
use stackre::insurer::best_response;
use stackre::measures::{barycentre_density, kl_rate, BarycentreKind, InsurerSpec, Integrability, SeverityModel};
use stackre::montecarlo::{estimate_density_martingale, estimate_insurer_objective_grid, SimConfig};
use stackre::reinsurer::{
    check_integrability, distorted_compensator, loading_residual, solve_equilibrium, MarketSpec, Objective,
    ReinsurerError,
};
use statrs::distribution::{Continuous, Gamma};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name} = {got:.6}, expected {want} ± {tol}"))
}

fn in_time(started: Instant, limit: Duration) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn exp_cdf(scale: f64, z: f64) -> f64 {
    -(-z / scale).exp_m1()
}

fn quantile_anchors() -> Outcome {
    let t0 = Instant::now();
    let eq = solve_equilibrium(&presets::exponential_capped(0.0, 1.0)).map_err(|e| e.to_string())?;
    in_time(t0, Duration::from_secs(1))?;
    let (a1, a2) = (eq.controls[0], eq.controls[1]);
    within("F1(a1)", exp_cdf(1.0, a1), 0.84, 0.015)?;
    within("F1(a1+1)", exp_cdf(1.0, a1 + 1.0), 0.94, 0.015)?;
    within("F2(a2)", exp_cdf(1.25, a2), 0.71, 0.015)?;
    within("F2(a2+1)", exp_cdf(1.25, a2 + 1.0), 0.87, 0.015)?;
    Ok(format!(
        "F1: {:.3}->{:.3}, F2: {:.3}->{:.3} in {:.0?}",
        exp_cdf(1.0, a1),
        exp_cdf(1.0, a1 + 1.0),
        exp_cdf(1.25, a2),
        exp_cdf(1.25, a2 + 1.0),
        t0.elapsed()
    ))
}

fn ceded_share_anchors() -> Outcome {
    let t0 = Instant::now();
    let grid = linspace(0.0, 1.0, 21);
    let results = sweep(&presets::gamma_proportional(0.0), SweepParam::Pi2, &grid).map_err(|e| e.to_string())?;
    in_time(t0, Duration::from_secs(5))?;
    let first = &results[0].controls;
    let last = &results[20].controls;
    within("1-a1 at pi2=0", 1.0 - first[0], 0.34, 0.02)?;
    within("1-a2 at pi2=0", 1.0 - first[1], 0.27, 0.02)?;
    within("1-a1 at pi2=1", 1.0 - last[0], 0.20, 0.02)?;
    within("1-a2 at pi2=1", 1.0 - last[1], 0.24, 0.02)?;
    Ok(format!(
        "pi2=0: ({:.3}, {:.3}), pi2=1: ({:.3}, {:.3}) over 21 points in {:.2?}",
        1.0 - first[0],
        1.0 - first[1],
        1.0 - last[0],
        1.0 - last[1],
        t0.elapsed()
    ))
}

fn severity_anchors() -> Outcome {
    let m = presets::exponential_xl(0.0);
    let f1 = m.insurers[0].severity.cdf(1.0);
    let f2 = m.insurers[1].severity.cdf(1.0);
    within("F1(1)", f1, 0.632, 0.005)?;
    within("F2(1)", f2, 0.551, 0.005)?;
    Ok(format!("F1(1) = {f1:.4}, F2(1) = {f2:.4}"))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.1] {
        let market = presets::gamma_proportional(eps);
        let eq = solve_equilibrium(&market).map_err(|e| e.to_string())?;
        let or = gamma_proportional_oracle(&market.insurers, eps).map_err(|e| e.to_string())?;
        worst = worst.max(max_gap(&eq.controls, &or.controls)).max(max_gap(&eq.loadings, &or.loadings));
    }
    for eps in [0.0, 0.1] {
        let market = presets::exponential_xl(eps);
        let eq = solve_equilibrium(&market).map_err(|e| e.to_string())?;
        let or = exponential_xl_oracle(&market.insurers, eps).map_err(|e| e.to_string())?;
        worst = worst.max(max_gap(&eq.controls, &or.controls)).max(max_gap(&eq.loadings, &or.loadings));
    }
    for eps in [0.0, 0.1] {
        let market = presets::exponential_capped(eps, 1.0);
        let eq = solve_equilibrium(&market).map_err(|e| e.to_string())?;
        let or = capped_xl_oracle(&market.insurers, eps, &[1.0, 1.0]).map_err(|e| e.to_string())?;
        worst = worst.max(max_gap(&eq.controls, &or.controls)).max(max_gap(&eq.loadings, &or.loadings));
    }
    ensure(worst <= 1e-6, || format!("largest gap {worst:e}"))?;
    Ok(format!("largest |d alpha|, |d eta| = {worst:.1e} over 6 markets"))
}

fn single_xl_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for gamma in [0.25, 0.5] {
        for eps in [0.0, 0.1, 0.25] {
            let ins = InsurerSpec::new(gamma, 2.0, SeverityModel::exponential(1.0).unwrap(), 0.0, 1.0).unwrap();
            let market = MarketSpec::uniform(vec![ins], Contract::ExcessOfLoss, eps, Objective::Wealth).unwrap();
            let eq = solve_equilibrium(&market).map_err(|e| e.to_string())?;
            let alpha = (1.0 / ((1.0 - gamma) * (1.0 - eps))).ln() / gamma;
            let eta = (gamma * alpha).exp() - 1.0;
            worst = worst.max((eq.controls[0] - alpha).abs()).max((eq.loadings[0] - eta).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("largest gap {worst:e}"))?;
    Ok(format!("largest gap {worst:.1e} over 6 (gamma xi, eps xi) pairs"))
}

fn barycentre_limit() -> Outcome {
    let base = presets::gamma_proportional(0.0);
    let vg = base.geometric_barycentre().map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let eq = solve_equilibrium(&MarketSpec { ambiguity: eps, ..base.clone() }).map_err(|e| e.to_string())?;
        let gap = (0..=2000)
            .map(|i| {
                let z = i as f64 * 0.01;
                (eq.compensator.eval(z) - vg.eval(z)).abs()
            })
            .fold(0.0, f64::max);
        gaps.push(gap);
    }
    let ratios = [gaps[1] / gaps[0], gaps[2] / gaps[1]];
    ensure(ratios.iter().all(|&r| r < 0.15), || format!("gaps {}, ratios {ratios:.3?}", sci(&gaps)))?;
    Ok(format!("sup gaps {}, ratios per decade {ratios:.3?}", sci(&gaps)))
}

fn gamma_closure() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lambda0 = 0.0;
    for eps in [0.0, 0.05, 0.1] {
        let market = presets::gamma_proportional(eps);
        let eq = solve_equilibrium(&market).map_err(|e| e.to_string())?;
        let or = gamma_proportional_oracle(&market.insurers, eps).map_err(|e| e.to_string())?;
        let pdf = Gamma::new(or.shape, 1.0 / or.scale).unwrap();
        for i in 1..=400 {
            let z = i as f64 * 0.05;
            let got = eq.compensator.eval(z) / eq.total_intensity;
            worst = worst.max((got - pdf.pdf(z)).abs());
        }
        if eps == 0.0 {
            within("Lambda(0)", eq.total_intensity, or.total_intensity, 1e-8)?;
            lambda0 = eq.total_intensity;
        }
    }
    ensure(worst <= 1e-8, || format!("density gap {worst:e}"))?;
    Ok(format!("density gap {worst:.1e}, Lambda(0) = {lambda0:.9}"))
}

fn capped_limit() -> Outcome {
    let market = presets::exponential_xl(0.0);
    let uncapped = solve_equilibrium(&market).map_err(|e| e.to_string())?.premiums;
    let grid = linspace(0.25, 6.0, 24);
    let capped = sweep(&market, SweepParam::Limit, &grid).map_err(|e| e.to_string())?;
    let at6 = &capped[23].premiums;
    let gaps: Vec<f64> = at6.iter().zip(&uncapped).map(|(c, u)| (c - u).abs()).collect();
    let monotone = (0..2).all(|k| capped.windows(2).all(|w| w[1].premiums[k] >= w[0].premiums[k]));
    let converging = (0..2).all(|k| {
        capped
            .windows(2)
            .all(|w| (w[1].premiums[k] - uncapped[k]).abs() <= (w[0].premiums[k] - uncapped[k]).abs())
    });
    let detail = format!("|p_capped(6) - p_uncapped| = {}, monotone {monotone}, gap shrinking {converging}", sci(&gaps));
    ensure(gaps.iter().all(|&g| g < 1e-3) && monotone && converging, || detail.clone())?;
    Ok(detail)
}

fn utility_limit() -> Outcome {
    let wealth = presets::exponential_capped(0.1, 1.0);
    let base = solve_equilibrium(&wealth).map_err(|e| e.to_string())?;
    let near = solve_equilibrium(&MarketSpec { objective: Objective::Utility { risk_aversion: 1e-3 }, ..wealth.clone() })
        .map_err(|e| e.to_string())?;
    let gap = max_gap(&near.controls, &base.controls).max(max_gap(&near.loadings, &base.loadings));
    ensure(gap <= 1e-3, || format!("m = 1e-3 differs from wealth mode by {gap:e}"))?;
    let grid = linspace(0.1, 1.0, 10);
    let results = sweep(&wealth, SweepParam::RiskAversion, &grid).map_err(|e| e.to_string())?;
    for k in 0..2 {
        for (i, w) in results.windows(2).enumerate() {
            ensure(w[1].loadings[k] >= w[0].loadings[k], || {
                format!("eta_{} drops between m = {} and m = {}", k + 1, grid[i], grid[i + 1])
            })?;
        }
    }
    Ok(format!(
        "gap at m=1e-3: {gap:.1e}; eta over m in [0.1,1]: ({:.3}->{:.3}, {:.3}->{:.3})",
        results[0].loadings[0], results[9].loadings[0], results[0].loadings[1], results[9].loadings[1]
    ))
}

fn integrability_guard() -> Outcome {
    let utility = MarketSpec {
        objective: Objective::Utility { risk_aversion: 0.5 },
        ..presets::exponential_xl(0.1)
    };
    match solve_equilibrium(&utility) {
        Err(ReinsurerError::NonIntegrable(_)) => {}
        other => return Err(format!("utility XL returned {other:?}")),
    }
    let base = presets::exponential_xl(0.0);
    // (Σ π_k / ξ_k) / n; an exponential scale is its mean.
    let n = base.len() as f64;
    let threshold = base.insurers.iter().map(|i| i.weight / i.severity.mean()).sum::<f64>() / n;
    let status = |eps: f64| {
        check_integrability(&MarketSpec { ambiguity: eps, ..base.clone() }, &[1.0, 1.0]).map_err(|e| e.to_string())
    };
    let below = status(threshold - 5e-4)?;
    let above = status(threshold + 5e-4)?;
    ensure(below.is_integrable(), || format!("eps just below {threshold}: {below:?}"))?;
    ensure(matches!(above, Integrability::NonIntegrable(_)), || format!("eps just above {threshold}: {above:?}"))?;
    match solve_equilibrium(&MarketSpec { ambiguity: threshold + 5e-4, ..base.clone() }) {
        Err(ReinsurerError::NonIntegrable(_)) => {}
        other => return Err(format!("solver above threshold returned {:?}", other.map(|r| r.loadings))),
    }
    Ok(format!("utility XL refused; wealth mode flips at eps = {threshold} within ±5e-4"))
}

fn monte_carlo() -> Outcome {
    let t0 = Instant::now();
    let ins = InsurerSpec::new(0.5, 2.0, SeverityModel::exponential(1.0).unwrap(), 0.2, 1.0).unwrap();
    let c = 1.0;
    let sim = SimConfig {
        replications: 1_000_000,
        seed: 20_240_601,
        ..SimConfig::default()
    };
    let mut lines = Vec::new();
    for (contract, grid) in [
        (Contract::Proportional, linspace(0.05, 1.0, 20)),
        (Contract::ExcessOfLoss, linspace(0.5, 2.5, 41)),
        (Contract::capped(1.0).unwrap(), linspace(0.5, 2.5, 41)),
    ] {
        let target = best_response(&ins, &contract, c).map_err(|e| e.to_string())?.control;
        let grid: Vec<f64> = grid.iter().map(|&a| a.max(MIN_PROPORTION)).collect();
        let est = estimate_insurer_objective_grid(&ins, &contract, &grid, c, &sim).map_err(|e| e.to_string())?;
        let best = (0..grid.len()).max_by(|&i, &j| est[i].mean.total_cmp(&est[j].mean)).unwrap();
        let argmax = grid[best];
        ensure((argmax - target).abs() <= 0.05 + 1e-12, || {
            format!("{}: argmax {argmax} vs best response {target:.4}", contract.kind())
        })?;
        lines.push(format!("{} {argmax:.2}~{target:.4}", contract.kind()));
    }
    // dQ/dP under each insurer's model, for an equilibrium compensator.
    let market = presets::gamma_proportional(0.1);
    let eq = solve_equilibrium(&market).map_err(|e| e.to_string())?;
    let xl = presets::exponential_xl(0.1);
    let xl_eq = solve_equilibrium(&xl).map_err(|e| e.to_string())?;
    let mut rn = Vec::new();
    for (m, sigma) in [(&market, &eq.compensator), (&xl, &xl_eq.compensator)] {
        for ins in &m.insurers {
            let est = estimate_density_martingale(ins, sigma, &SimConfig { replications: 200_000, seed: 7, ..SimConfig::default() })
                .map_err(|e| e.to_string())?;
            ensure((est.mean - 1.0).abs() <= 3.0 * est.std_error, || {
                format!("E[dQ/dP] = {} ± {}", est.mean, est.std_error)
            })?;
            rn.push(format!("{:.4}±{:.4}", est.mean, est.std_error));
        }
    }
    in_time(t0, Duration::from_secs(120))?;
    Ok(format!("argmax {}; E[dQ/dP] {}; {:.1?}", lines.join(", "), rn.join(" "), t0.elapsed()))
}

fn property_suites() -> Outcome {
    let gamma_ins = presets::gamma_proportional(0.0).insurers;
    let exp_ins = presets::exponential_xl(0.0).insurers;
    // Monotone best response.
    for ins in gamma_ins.iter().chain(&exp_ins) {
        for contract in [Contract::Proportional, Contract::ExcessOfLoss, Contract::capped(1.0).unwrap()] {
            let mut prev = 0.0;
            for i in 0..=40 {
                let a = best_response(ins, &contract, i as f64 * 0.25).map_err(|e| e.to_string())?.control;
                ensure(a >= prev - 1e-12, || format!("best response decreases at c = {}", i as f64 * 0.25))?;
                prev = a;
            }
        }
    }
    // AM >= GM and KL >= 0.
    for ins in [&gamma_ins, &exp_ins] {
        let va = barycentre_density(ins, BarycentreKind::Arithmetic).map_err(|e| e.to_string())?;
        let vg = barycentre_density(ins, BarycentreKind::Geometric).map_err(|e| e.to_string())?;
        for i in 0..=1000 {
            let z = i as f64 * 0.02;
            ensure(va.eval(z) >= vg.eval(z) * (1.0 - 1e-12), || format!("v^a < v^g at z = {z}"))?;
        }
        for a in ins.iter() {
            for b in ins.iter() {
                let kl = kl_rate(&a.compensator(), &b.compensator()).map_err(|e| e.to_string())?;
                ensure(kl >= -1e-12, || format!("negative KL {kl}"))?;
            }
            let kl = kl_rate(&vg, &a.compensator()).map_err(|e| e.to_string())?;
            ensure(kl >= -1e-12, || format!("negative KL {kl}"))?;
        }
    }
    // Exponent dominance, pointwise and on the compensators.
    for m in [1e-3, 0.1, 0.5, 1.0, 3.0] {
        for i in 0..=200 {
            let l = i as f64 * 0.1;
            ensure((m * l).exp_m1() / m >= l, || format!("exponent dominance fails at m = {m}, L = {l}"))?;
        }
        let wealth = presets::exponential_capped(0.1, 1.0);
        let utility = MarketSpec { objective: Objective::Utility { risk_aversion: m }, ..wealth.clone() };
        let alpha = [1.8, 1.5];
        let w = distorted_compensator(&wealth, &alpha).map_err(|e| e.to_string())?;
        let u = distorted_compensator(&utility, &alpha).map_err(|e| e.to_string())?;
        for i in 0..=400 {
            let z = i as f64 * 0.025;
            ensure(u.eval(z) >= w.eval(z) * (1.0 - 1e-14), || format!("utility < wealth compensator at z = {z}"))?;
        }
    }
    // Residual at returned equilibria.
    let mut worst: f64 = 0.0;
    let markets = [
        presets::gamma_proportional(0.0),
        presets::gamma_proportional(0.1),
        presets::exponential_xl(0.1),
        presets::exponential_capped(0.1, 1.0),
        apply_param(&presets::exponential_capped(0.1, 1.0), SweepParam::RiskAversion, 0.5).map_err(|e| e.to_string())?,
    ];
    for market in &markets {
        let eq = solve_equilibrium(market).map_err(|e| e.to_string())?;
        let r = loading_residual(market, &eq.loadings).map_err(|e| e.to_string())?;
        worst = worst.max(r.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    ensure(worst <= 1e-12, || format!("fixed-point residual {worst:e}"))?;
    Ok(format!("all suites hold; largest equilibrium residual {worst:.1e}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("capped XL quantile anchors", quantile_anchors),
        ("Gamma ceded-share anchors", ceded_share_anchors),
        ("severity quantile anchors", severity_anchors),
        ("closed-form oracle agreement", oracle_agreement),
        ("single-insurer XL identity", single_xl_identity),
        ("barycentre limit", barycentre_limit),
        ("Gamma family closure", gamma_closure),
        ("capped to uncapped limit", capped_limit),
        ("utility-mode limit", utility_limit),
        ("integrability guard", integrability_guard),
        ("Monte Carlo optimality", monte_carlo),
        ("property suites", property_suites),
    ];
    let mut failed = Vec::new();
    let mut report = String::from("\n");
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        report.push_str(&format!("criterion {:>2} {tag} {name}: {detail}\n", i + 1));
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    std::io::stdout().lock().write_all(report.as_bytes()).unwrap();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
