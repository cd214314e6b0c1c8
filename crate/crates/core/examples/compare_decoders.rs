//! All seven decoders on the same retrieved contexts for a few queries.

use rmcd::backend::GroundedWorldModel;
use rmcd::bench::ExperimentSpec;
use rmcd::decoder::{generate, Method};
use rmcd::kb::{retrieve, Bm25};
use rmcd::seed::stream;

fn main() -> rmcd::Result<()> {
    let spec = ExperimentSpec::default();
    let world = spec.world_for_tier(1024)?;
    let backend = GroundedWorldModel::from_world(&world, spec.backend)?;
    let bm25 = Bm25::new(spec.bm25);
    for q in world.queries.iter().step_by(97).take(5) {
        let set = retrieve(&world.kb, &bm25, &q.question, spec.decoder.n_contexts)?;
        let rank = set.position(&q.oracle_doc_id).map_or("-".to_string(), |r| (r + 1).to_string());
        println!("{}  gold: {}  oracle rank: {rank}", q.question, q.answers[0]);
        for &method in Method::ALL {
            let mut rng = stream(spec.seed, &[q.qid.as_bytes(), method.name().as_bytes()]);
            let r = generate(method, &backend, &q.question, &set, &spec.config_for(method), &mut rng)?;
            let mark = if q.answers.iter().any(|a| a.to_lowercase() == r.answer) { "ok" } else { "" };
            println!("  {:<16} {:<24} {mark}", method.name(), r.answer);
        }
    }
    Ok(())
}
