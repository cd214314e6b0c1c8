//! Index a handful of documents, rank them for a question, and inject an oracle.

use rmcd::kb::{inject_oracle, retrieve, Bm25, Document, KnowledgeBase, ScoredContext};

fn doc(id: &str, text: &str) -> Document {
    Document {
        id: id.into(),
        title: id.into(),
        text: text.into(),
        entity_id: id.into(),
    }
}

fn main() -> rmcd::Result<()> {
    let kb = KnowledgeBase::new(vec![
        doc("lighthouse", "entity: old lighthouse\ncolor: white\norigin: granite coast"),
        doc("barn", "entity: red barn\ncolor: red\norigin: valley"),
        doc("tower", "entity: old tower\ncolor: grey\norigin: hill"),
        doc("pier", "entity: long pier\norigin: coast"),
        doc("crane", "entity: harbor crane\norigin: port"),
        doc("mill", "entity: water mill\norigin: river"),
    ])?;
    let bm25 = Bm25::default();
    let question = "What is the color of Old Lighthouse?";
    let set = retrieve(&kb, &bm25, question, 3)?;
    println!("{question}");
    for c in &set {
        println!("  {:<10} {:.4}", c.doc_id, c.score);
    }

    let pier = kb.get("pier").expect("indexed");
    let injected = inject_oracle(&set, ScoredContext::new(&pier.id, &pier.text, 0.0))?;
    println!("with `pier` injected as oracle:");
    for c in &injected {
        println!("  {:<10} {:.4}", c.doc_id, c.score);
    }
    Ok(())
}
