//! Every intermediate of one RMCD step on a retrieved set with a conflicting
//! distractor.

use rmcd::backend::{GroundedParams, GroundedWorldModel, PromptState};
use rmcd::decoder::{augment_with_sentinel, rmcd_trace, DecoderConfig};
use rmcd::kb::{Document, QueryRecord, RetrievedContextSet, ScoredContext};

fn main() -> rmcd::Result<()> {
    let docs: Vec<Document> = [
        ("oracle", "entity: alpha beta\ncolor: red"),
        ("near", "entity: alpha gamma\ncolor: green"),
        ("far", "entity: delta beta\norigin: marsh"),
    ]
    .iter()
    .map(|(id, text)| Document {
        id: id.to_string(),
        title: id.to_string(),
        text: text.to_string(),
        entity_id: id.to_string(),
    })
    .collect();
    let query = QueryRecord {
        qid: "q".into(),
        question: "What is the color of Alpha Beta?".into(),
        answers: vec!["red".into()],
        oracle_doc_id: "oracle".into(),
    };
    let backend = GroundedWorldModel::from_documents(&docs, std::slice::from_ref(&query), GroundedParams::default())?;
    let set = RetrievedContextSet::new(
        docs.iter()
            .zip([6.0, 5.2, 2.0])
            .map(|(d, s)| ScoredContext::new(&d.id, &d.text, s))
            .collect(),
    )?;

    let config = DecoderConfig::default();
    let augmented = augment_with_sentinel(&set, config.empty_context_mode)?;
    let trace = rmcd_trace(&backend, &PromptState::new(query.question.as_str()), &augmented, &config)?;
    let vocab = rmcd::backend::Backend::vocabulary(&backend);

    println!("contexts  {:?}", augmented.iter().map(|c| if c.is_sentinel() { "<empty>" } else { c.doc_id.as_str() }).collect::<Vec<_>>());
    println!("scores    {:?}", augmented.scores());
    println!("w         {:.4?}", trace.relative.as_slice());
    println!("alpha     {:.4?}", trace.weights.as_slice());
    println!("C^c       {:?}", trace.constraint_set);
    if let Some(s) = &trace.plausible {
        let names: Vec<&str> = s.members().iter().map(|&t| vocab.token(t).unwrap_or("?")).collect();
        println!("plausible {names:?}");
    }
    for (t, p) in trace.distribution.as_slice().iter().enumerate().filter(|(_, p)| **p > 1e-4) {
        println!("  p({}) = {p:.4}", vocab.token(t).unwrap_or("?"));
    }
    Ok(())
}
