//! Planning on a stride-2 copy of a profile and planning on the full graph with
//! every other node switched off give the same schedule.

use std::collections::BTreeSet;

use dnaplan::dna::{resample, stride_indices, DnaProfile, TimeGrid};
use dnaplan::planner::{build_graph, plan_fixed, restrict_nodes};

fn main() -> dnaplan::Result<()> {
    let dna = DnaProfile::from_fn(TimeGrid::uniform(100)?, |t| (4.0 * t).exp_m1() + 0.05 * (30.0 * t).sin().abs())?;
    let coarse = resample(&dna, 2)?;
    println!("{} points -> {} points, first kept t = {:.4}", dna.len(), coarse.len(), coarse.times()[0]);

    let keep: BTreeSet<usize> = stride_indices(dna.len(), 2).into_iter().collect();
    let restricted = restrict_nodes(&build_graph(&dna, true, true)?, &keep)?;
    let a = plan_fixed(&build_graph(&coarse, true, true)?, 8)?;
    let b = plan_fixed(&restricted, 8)?;
    assert_eq!(a.timesteps, b.timesteps);
    println!("resampled:  {:?}", a.timesteps);
    println!("restricted: {:?}", b.timesteps);
    Ok(())
}
