//! Temperature softmax, masking and the two token selectors.

use rmcd::numerics::{greedy_select, nucleus_sample, stable_softmax, weighted_logit_sum, LogitVector};
use rmcd::seed::stream;

fn main() -> rmcd::Result<()> {
    let logits = LogitVector::new(vec![2.0, 1.0, 0.5, -1.0, f64::NEG_INFINITY])?;
    for t in [0.5, 1.0, 2.0] {
        let p = stable_softmax(&logits, t)?;
        println!("T={t}: {:.4?}", p.as_slice());
    }

    let other = LogitVector::new(vec![0.0, 3.0, 0.0, 0.0, 0.0])?;
    let mixed = weighted_logit_sum(&[&logits, &other], &[1.0, -0.5])?;
    println!("1.0 * a - 0.5 * b = {:?}", mixed.as_slice());

    let p = stable_softmax(&logits, 1.0)?;
    println!("greedy -> {}", greedy_select(&p));
    let mut rng = stream(7, &[b"example"]);
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        counts[nucleus_sample(&p, 0.9, &mut rng)] += 1;
    }
    println!("top-p 0.9 counts over 10000 draws: {counts:?}");
    Ok(())
}
