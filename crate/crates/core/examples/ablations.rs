//! Full RMCD against each single-switch variant, largest tier only.

use rmcd::bench::{run_ablation_suite, ExperimentSpec};

fn main() -> rmcd::Result<()> {
    let spec = ExperimentSpec {
        tiers: vec![16384],
        ..ExperimentSpec::default()
    };
    let report = run_ablation_suite(&spec)?;
    let tier = &report.tiers[0];
    let full = tier.accuracy("full").unwrap_or_default();
    for m in &tier.methods {
        println!("{:<14} {:.3} ({:+.3})", m.name, m.accuracy, m.accuracy - full);
    }
    Ok(())
}
