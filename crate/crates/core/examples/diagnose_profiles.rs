//! Stability labels for the three gain archetypes.

use dnaplan::diagnostics::{archetypes, classify, stepwise_gain, Thresholds};

fn main() -> dnaplan::Result<()> {
    let cfg = Thresholds::default();
    for (name, dna) in [
        ("monotone decay", archetypes::monotone_decay(100)?),
        ("initial dip", archetypes::initial_dip(100)?),
        ("flat gain", archetypes::flat_gain(100)?),
    ] {
        let report = classify(&stepwise_gain(&dna)?, &cfg);
        println!(
            "{name:<15} {:<20} start {:.3} stop {:.3} negative {:?}",
            format!("{:?}", report.label),
            report.suggested_start,
            report.suggested_stop,
            report.negative_gain_regions
        );
    }
    let report = classify(&stepwise_gain(&archetypes::initial_dip(20)?)?, &cfg);
    println!("{}", report.to_json()?);
    Ok(())
}
