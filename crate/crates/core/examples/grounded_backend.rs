//! How the grounded backend reacts to no context, a relevant context and a
//! distractor about another entity.

use rmcd::backend::{Backend, GroundedParams, GroundedWorldModel, PromptState};
use rmcd::kb::{synthesize_world, SyntheticWorldSpec};
use rmcd::numerics::stable_softmax;

fn main() -> rmcd::Result<()> {
    let spec = SyntheticWorldSpec {
        num_entities: 4,
        attributes_per_entity: 2,
        num_distractor_docs: 20,
        distractor_attributes: (1, 2),
        ..SyntheticWorldSpec::default()
    };
    let world = synthesize_world(&spec, 3)?;
    let backend = GroundedWorldModel::from_world(&world, GroundedParams::default())?;
    let q = &world.queries[0];
    let attribute = q.question.split_whitespace().nth(3).unwrap_or_default();
    let oracle = world.kb.get(&q.oracle_doc_id).expect("oracle exists");
    let distractor = world
        .kb
        .documents()
        .iter()
        .find(|d| d.id != oracle.id && d.text.lines().any(|l| l.starts_with(&format!("{attribute}:"))))
        .expect("some distractor shares the attribute");

    let state = PromptState::new(q.question.as_str());
    let vocab = backend.vocabulary();
    println!("{}  gold: {}", q.question, q.answers[0]);
    for (label, context) in [("none", None), ("oracle", Some(oracle.text.as_str())), ("distractor", Some(distractor.text.as_str()))] {
        let p = stable_softmax(&backend.next_token_logits(&state, context)?, 1.0)?;
        let mut ranked: Vec<(usize, f64)> = p.as_slice().iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = ranked
            .iter()
            .take(3)
            .map(|(t, p)| format!("{}={p:.3}", vocab.token(*t).unwrap_or("?")))
            .collect();
        println!("  {label:<10} {}", top.join("  "));
    }
    Ok(())
}
