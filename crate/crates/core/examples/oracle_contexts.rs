//! Every method with the oracle document forced to rank 1.

use rmcd::bench::{run_oracle_experiment, ExperimentSpec};

fn main() -> rmcd::Result<()> {
    let report = run_oracle_experiment(&ExperimentSpec::default())?;
    for t in &report.tiers {
        println!("kb size {} (recall@1 {:.3})", t.kb_size, t.recall.at1);
        for m in &t.methods {
            println!("  {:<16} {:.3}", m.name, m.accuracy);
        }
    }
    Ok(())
}
