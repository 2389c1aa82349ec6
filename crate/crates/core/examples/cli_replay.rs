//! Drives the command line in-process: extract, plan, then replay the plan from
//! its manifest and confirm the bytes match.

use dnaplan::cli::{manifest_path, run};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("dnaplan-cli-replay");
    std::fs::create_dir_all(&dir)?;
    let dna = dir.join("dna.json");
    let plan = dir.join("plan.json");
    let (dna_s, plan_s) = (dna.to_string_lossy(), plan.to_string_lossy());

    assert_eq!(run(["dnaplan", "sim-extract", "--seed", "3", "-o", &dna_s]), 0);
    let args = ["dnaplan", "plan", "--dna", &dna_s, "--adaptive", "--rho", "0.99", "--max-steps", "50", "-o", &plan_s];
    assert_eq!(run(args), 0);
    let first = std::fs::read(&plan)?;

    let manifest = manifest_path(&plan);
    println!("{}", std::fs::read_to_string(&manifest)?);
    assert_eq!(run(["dnaplan", "replay", &manifest.to_string_lossy()]), 0);
    println!("replay identical: {}", std::fs::read(&plan)? == first);
    Ok(())
}
