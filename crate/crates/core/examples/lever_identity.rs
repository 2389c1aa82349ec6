//! In the linear-flow world a first-order jump from t to k lands exactly
//! ((t - k) / t)^2 * C(t) away from the ideal state. Rollouts with and without
//! restarting on the ideal path show what happens when the drift is carried.

use dnaplan::dna::TimeGrid;
use dnaplan::flow_sim::{ErrorTable, GaussianDenoiser, SimScenario};
use dnaplan::planner::{build_graph, plan_fixed};

fn main() -> dnaplan::Result<()> {
    let grid = TimeGrid::uniform(51)?;
    let table = ErrorTable::from_fn(&grid, |t| 0.2 + 1.5 * t * t)?;
    let scenario = SimScenario::random(8, table, 3)?;

    for (t, k) in [(1.0, 0.0), (0.9, 0.6), (0.5, 0.49), (0.3, 0.3)] {
        println!("t = {t:<4} k = {k:<4} residual {:.1e}", scenario.verify_lever_identity(t, k)?);
    }

    let dna = scenario.extract_dna(&grid)?;
    let plan = plan_fixed(&build_graph(&dna, true, true)?, 8)?;
    let on = scenario.rollout(&plan.timesteps, true)?;
    let off = scenario.rollout(&plan.timesteps, false)?;
    println!("8-step plan, restarted each step: drift {:.4}, final error {:.4}", on.total_drift(), on.final_err_sq);
    println!("8-step plan, drift carried:       drift {:.4}, final error {:.4}", off.total_drift(), off.final_err_sq);
    on.write_csv(std::io::stdout())?;

    let gauss = GaussianDenoiser { dim: 4, data_std: 1.0 };
    let coarse = TimeGrid::uniform(6)?;
    let exact = gauss.analytic_dna(&coarse)?;
    let sampled = gauss.monte_carlo_dna(&coarse, 20_000, 7)?;
    for ((t, a), b) in coarse.points().iter().zip(exact.values()).zip(sampled.values()) {
        println!("gaussian C({t:.1}) exact {a:.4} sampled {b:.4}");
    }
    Ok(())
}
