//! Measured backend calls per generated token for each method and context count.

use rmcd::bench::{run_cost_accounting, ExperimentSpec};

fn main() -> rmcd::Result<()> {
    let counts = [1, 3, 5];
    let report = run_cost_accounting(&ExperimentSpec::default(), &counts)?;
    let tier = &report.tiers[0];
    println!("{:<16} {}", "method", counts.map(|n| format!("n={n:<6}")).join(" "));
    for m in rmcd::decoder::Method::ALL {
        let row: Vec<String> = counts
            .iter()
            .map(|n| format!("{:<8.2}", tier.method(&format!("{m} n={n}")).map_or(f64::NAN, |r| r.fwd_calls_per_token)))
            .collect();
        println!("{:<16} {}", m.name(), row.join(" "));
    }
    Ok(())
}
