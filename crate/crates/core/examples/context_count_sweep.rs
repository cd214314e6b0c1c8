//! Accuracy as the number of retrieved contexts grows from 1 to 5.

use rmcd::bench::{run_context_sweep, ExperimentSpec};
use rmcd::decoder::Method;

fn main() -> rmcd::Result<()> {
    let spec = ExperimentSpec {
        tiers: vec![16384],
        methods: vec![Method::Rag, Method::Consistency, Method::MaxProbability, Method::Concat, Method::Rmcd],
        ..ExperimentSpec::default()
    };
    let report = run_context_sweep(&spec)?;
    let tier = &report.tiers[0];
    print!("{:<16}", "method");
    for n in &spec.n_sweep {
        print!(" n={n:<5}");
    }
    println!();
    for m in &spec.methods {
        print!("{:<16}", m.name());
        for n in &spec.n_sweep {
            print!(" {:<7.3}", tier.accuracy(&format!("{m} n={n}")).unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
