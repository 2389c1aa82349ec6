//! Fixed-budget and unconstrained plans on a profile measured in the simulator,
//! next to the evenly spaced schedule with the same budget.

use dnaplan::dna::TimeGrid;
use dnaplan::flow_sim::{ErrorTable, SimScenario};
use dnaplan::planner::{build_graph, path_cost, plan_fixed, plan_unconstrained, uniform_schedule};

fn fmt(ts: &[f64]) -> String {
    ts.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>().join(" ")
}

fn main() -> dnaplan::Result<()> {
    let grid = TimeGrid::uniform(101)?;
    let table = ErrorTable::from_fn(&grid, |t| (6.0 * t).exp_m1().sqrt())?;
    let dna = SimScenario::random(8, table, 0)?.extract_dna(&grid)?;
    let graph = build_graph(&dna, true, true)?;

    for k in [4, 10, 20] {
        let plan = plan_fixed(&graph, k)?;
        let uniform = uniform_schedule(&graph, k)?;
        println!("K = {k}");
        println!("  planned  cost {:>10.4}  [{}]", plan.total_cost, fmt(&plan.timesteps));
        println!("  uniform  cost {:>10.4}  [{}]", path_cost(&graph, &uniform)?, fmt(&uniform));
    }

    let best = plan_unconstrained(&graph)?;
    println!("unconstrained: {} steps, cost {:.4}", best.steps, best.total_cost);
    println!("{}", plan_fixed(&graph, 4)?.to_json()?);
    Ok(())
}
