//! Accuracy and recall across the three default knowledge-base sizes.

use rmcd::bench::{render_csv, run_benchmark, ExperimentSpec};

fn main() -> rmcd::Result<()> {
    let report = run_benchmark(&ExperimentSpec::default())?;
    print!("{}", render_csv(&report));
    Ok(())
}
