//! Adaptive step counts: how many steps each explained-gain threshold needs.

use dnaplan::dna::{DnaProfile, TimeGrid};
use dnaplan::planner::{build_graph, plan_adaptive};

fn main() -> dnaplan::Result<()> {
    let k_max: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    let points: usize = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(100);
    for rate in [1.0, 3.0, 6.0, 10.0] {
        let dna = DnaProfile::from_fn(TimeGrid::uniform(points)?, |t| (rate * t).exp_m1())?;
        let graph = build_graph(&dna, true, true)?;
        let full = plan_adaptive(&graph, 1.0, k_max)?;
        let steps_for = |th: f64| full.rho_curve.iter().find(|(_, r)| *r >= th).map(|(n, _)| *n).unwrap();
        let (lo, mid, hi) = (steps_for(0.985), steps_for(0.99), steps_for(0.995));
        println!("rate {rate:>4}: n(0.985) = {lo}, n(0.99) = {mid}, n(0.995) = {hi}, n(0.999) = {}", steps_for(0.999));
        let curve: Vec<String> = full.rho_curve.iter().take(12).map(|(n, r)| format!("{n}:{r:.4}")).collect();
        println!("    {}", curve.join(" "));
    }
    Ok(())
}
