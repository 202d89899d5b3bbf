//! Benchmark fixtures: the worked markets at a few ambiguity levels.

use stackre::figures::presets;
use stackre::MarketSpec;

/// Named markets covering each contract kind.
pub fn markets() -> Vec<(&'static str, MarketSpec)> {
    vec![
        ("gamma-proportional/eps=0", presets::gamma_proportional(0.0)),
        ("gamma-proportional/eps=0.1", presets::gamma_proportional(0.1)),
        ("exponential-xl/eps=0.1", presets::exponential_xl(0.1)),
        ("exponential-capped/eps=0.1", presets::exponential_capped(0.1, 1.0)),
    ]
}
