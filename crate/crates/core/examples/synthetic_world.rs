//! A small seeded world: oracle documents, distractors and their queries.

use rmcd::kb::{check_oracles, synthesize_world, SyntheticWorldSpec};

fn main() -> rmcd::Result<()> {
    let spec = SyntheticWorldSpec {
        num_entities: 3,
        attributes_per_entity: 3,
        num_distractor_docs: 4,
        distractor_attributes: (2, 3),
        ..SyntheticWorldSpec::default()
    };
    let world = synthesize_world(&spec, 42)?;
    check_oracles(&world.kb, &world.queries)?;
    for d in world.kb.documents() {
        println!("[{}] {}", d.id, d.text.replace('\n', " | "));
    }
    println!();
    for q in &world.queries {
        println!("{:<12} {:<40} -> {}", q.qid, q.question, q.answers[0]);
    }
    Ok(())
}
