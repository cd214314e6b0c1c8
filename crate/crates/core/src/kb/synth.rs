use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Document, KnowledgeBase, QueryRecord};
use crate::error::{Error, Result};
use crate::seed::{stream, StreamRng};

const ATTRIBUTE_NAMES: &[&str] = &[
    "color", "origin", "genre", "founder", "material", "capital", "language", "species",
    "habitat", "river", "mountain", "currency", "religion", "sport", "instrument", "architect",
    "designer", "author", "director", "manufacturer", "composer", "publisher", "occupation",
    "employer", "award", "parent", "spouse", "sibling", "mascot", "motto", "emblem", "cuisine",
];

/// Words the generator must never produce as names or values.
const RESERVED_WORDS: &[&str] = &["what", "is", "the", "of", "entity", "related"];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Shape of a synthetic knowledge world: queried entities with attribute
/// facts, plus distractor documents about other entities that reuse the same
/// attribute names with conflicting values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub num_entities: usize,
    pub attributes_per_entity: usize,
    pub num_distractor_docs: usize,
    pub value_vocab_size: usize,
    /// Values are 1 to this many words long.
    pub max_value_tokens: usize,
    /// Size of the pool distractor names draw their unshared token from.
    pub name_pool_size: usize,
    /// Fraction of distractors whose name shares a token with a queried entity.
    pub name_share_rate: f64,
    /// Fraction of distractors carrying a `related:` line naming the target.
    pub related_rate: f64,
    /// Chance that a distractor repeats its target's rumor value for an
    /// attribute instead of drawing a fresh wrong value.
    pub rumor_rate: f64,
    /// Inclusive range for the number of attribute lines in a distractor.
    pub distractor_attributes: (usize, usize),
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        Self {
            num_entities: 50,
            attributes_per_entity: 10,
            num_distractor_docs: 0,
            value_vocab_size: 512,
            max_value_tokens: 3,
            name_pool_size: 400,
            name_share_rate: 0.5,
            related_rate: 0.02,
            rumor_rate: 0.5,
            distractor_attributes: (10, 10),
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::WorldSpec(msg));
        if self.num_entities == 0 || self.attributes_per_entity == 0 || self.value_vocab_size == 0 {
            return bad("entity, attribute and value vocabulary counts must be positive".into());
        }
        if self.value_vocab_size < self.attributes_per_entity {
            return bad(format!(
                "value_vocab_size {} is smaller than attributes_per_entity {}; values would not be distinguishable",
                self.value_vocab_size, self.attributes_per_entity
            ));
        }
        if self.value_vocab_size < 2 {
            return bad("distractors need at least two distinct values".into());
        }
        if self.max_value_tokens == 0 {
            return bad("max_value_tokens must be positive".into());
        }
        let (lo, hi) = self.distractor_attributes;
        if lo == 0 || lo > hi {
            return bad(format!("invalid distractor attribute range {lo}..={hi}"));
        }
        for (name, rate) in [
            ("name_share_rate", self.name_share_rate),
            ("related_rate", self.related_rate),
            ("rumor_rate", self.rumor_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        if self.name_pool_size < 2 * self.num_entities.min(64) {
            return bad(format!("name_pool_size {} is too small", self.name_pool_size));
        }
        Ok(())
    }
}

/// Every word the world can emit, by role.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldLexicon {
    pub attributes: Vec<String>,
    pub values: Vec<String>,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityFacts {
    pub entity_id: String,
    pub doc_id: String,
    pub first: String,
    pub last: String,
    /// `(attribute, value)` in attribute order.
    pub facts: Vec<(String, String)>,
    /// One wrong value per attribute that distractors tend to repeat.
    pub rumors: Vec<String>,
}

impl EntityFacts {
    pub fn display_name(&self) -> String {
        format!("{} {}", capitalize(&self.first), capitalize(&self.last))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub kb: KnowledgeBase,
    pub queries: Vec<QueryRecord>,
    pub entities: Vec<EntityFacts>,
    pub lexicon: WorldLexicon,
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn syllable(rng: &mut StreamRng) -> [u8; 2] {
    [
        CONSONANTS[rng.gen_range(0..CONSONANTS.len())],
        VOWELS[rng.gen_range(0..VOWELS.len())],
    ]
}

/// Draws `count` fresh pseudo-words of `syllables` syllables (plus an optional
/// closing consonant), never repeating anything in `taken`.
fn fresh_words(
    rng: &mut StreamRng,
    count: usize,
    syllables: usize,
    closed: bool,
    taken: &mut HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut w = Vec::with_capacity(2 * syllables + 1);
        for _ in 0..syllables {
            w.extend_from_slice(&syllable(rng));
        }
        if closed {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
        }
        let w = String::from_utf8(w).expect("ascii");
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn value_string(rng: &mut StreamRng, first: usize, spec: &SyntheticWorldSpec, values: &[String]) -> String {
    let len = rng.gen_range(1..=spec.max_value_tokens);
    let mut words = vec![values[first].as_str()];
    for _ in 1..len {
        words.push(&values[rng.gen_range(0..values.len())]);
    }
    words.join(" ")
}

fn first_word(value: &str) -> &str {
    value.split(' ').next().unwrap_or(value)
}

/// A value whose first word differs from `gold`'s.
fn conflicting_value(rng: &mut StreamRng, gold: &str, spec: &SyntheticWorldSpec, values: &[String]) -> String {
    loop {
        let f = rng.gen_range(0..values.len());
        if values[f] != first_word(gold) {
            return value_string(rng, f, spec, values);
        }
    }
}

/// Builds a deterministic world for `spec` and `seed`. Distractor `i` depends
/// only on the seed, the entities and `i`, so a world with more distractors
/// contains every document of a smaller one.
pub fn synthesize_world(spec: &SyntheticWorldSpec, seed: u64) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = stream(seed, &[b"lexicon"]);
    let mut taken: HashSet<String> = RESERVED_WORDS.iter().map(|w| w.to_string()).collect();
    taken.extend(ATTRIBUTE_NAMES.iter().map(|w| w.to_string()));

    let mut attributes: Vec<String> = ATTRIBUTE_NAMES
        .iter()
        .take(spec.attributes_per_entity)
        .map(|w| w.to_string())
        .collect();
    if spec.attributes_per_entity > attributes.len() {
        let extra = spec.attributes_per_entity - attributes.len();
        attributes.extend(fresh_words(&mut rng, extra, 3, true, &mut taken));
    }
    let values = fresh_words(&mut rng, spec.value_vocab_size, 2, true, &mut taken);
    let names = fresh_words(&mut rng, spec.name_pool_size.max(2), 3, false, &mut taken);

    let mut rng = stream(seed, &[b"entities"]);
    let mut used_pairs = HashSet::new();
    let mut entities = Vec::with_capacity(spec.num_entities);
    for idx in 0..spec.num_entities {
        let (first, last) = loop {
            let a = rng.gen_range(0..names.len());
            let b = rng.gen_range(0..names.len());
            if a != b && used_pairs.insert((a, b)) {
                break (names[a].clone(), names[b].clone());
            }
        };
        let firsts: Vec<usize> = rand::seq::index::sample(&mut rng, values.len(), attributes.len()).into_vec();
        let facts: Vec<(String, String)> = attributes
            .iter()
            .zip(firsts)
            .map(|(a, f)| (a.clone(), value_string(&mut rng, f, spec, &values)))
            .collect();
        let rumors = facts
            .iter()
            .map(|(_, gold)| conflicting_value(&mut rng, gold, spec, &values))
            .collect();
        entities.push(EntityFacts {
            entity_id: format!("ent{idx:05}"),
            doc_id: format!("doc{idx:05}"),
            first,
            last,
            facts,
            rumors,
        });
    }

    let mut docs: Vec<Document> = entities
        .iter()
        .map(|e| {
            let mut text = format!("entity: {} {}", e.first, e.last);
            for (a, v) in &e.facts {
                text.push_str(&format!("\n{a}: {v}"));
            }
            Document {
                id: e.doc_id.clone(),
                title: e.display_name(),
                text,
                entity_id: e.entity_id.clone(),
            }
        })
        .collect();

    for i in 0..spec.num_distractor_docs {
        docs.push(distractor(spec, seed, i, &entities, &attributes, &values, &names).0);
    }

    let queries = entities
        .iter()
        .flat_map(|e| {
            e.facts.iter().enumerate().map(move |(j, (a, v))| QueryRecord {
                qid: format!("{}-{j:02}", e.entity_id),
                question: format!("What is the {a} of {}?", e.display_name()),
                answers: vec![v.clone()],
                oracle_doc_id: e.doc_id.clone(),
            })
        })
        .collect();

    Ok(SyntheticWorld {
        kb: KnowledgeBase::new(docs)?,
        queries,
        entities,
        lexicon: WorldLexicon {
            attributes,
            values,
            names,
        },
    })
}

fn distractor(
    spec: &SyntheticWorldSpec,
    seed: u64,
    i: usize,
    entities: &[EntityFacts],
    attributes: &[String],
    values: &[String],
    names: &[String],
) -> (Document, usize) {
    let mut rng = stream(seed, &[b"distractor", &(i as u64).to_le_bytes()]);
    let target_idx = rng.gen_range(0..entities.len());
    let target = &entities[target_idx];
    let pick_other = |rng: &mut StreamRng| loop {
        let w = &names[rng.gen_range(0..names.len())];
        if *w != target.first && *w != target.last {
            break w.clone();
        }
    };
    let related = rng.gen_bool(spec.related_rate);
    // a document naming the target in full never also borrows one of its names
    let share = !related && rng.gen_bool(spec.name_share_rate);
    let (first, last) = loop {
        let pair = if !share {
            (pick_other(&mut rng), pick_other(&mut rng))
        } else if rng.gen_bool(0.5) {
            (target.first.clone(), pick_other(&mut rng))
        } else {
            (pick_other(&mut rng), target.last.clone())
        };
        // never reuse a queried entity's full name
        if !entities.iter().any(|e| e.first == pair.0 && e.last == pair.1) {
            break pair;
        }
    };

    let (lo, hi) = spec.distractor_attributes;
    let count = rng.gen_range(lo..=hi).min(attributes.len());
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, attributes.len(), count).into_vec();
    chosen.sort_unstable();

    let mut text = format!("entity: {first} {last}");
    for a in chosen {
        let value = if rng.gen_bool(spec.rumor_rate) {
            target.rumors[a].clone()
        } else {
            conflicting_value(&mut rng, &target.facts[a].1, spec, values)
        };
        text.push_str(&format!("\n{}: {value}", attributes[a]));
    }
    if related {
        text.push_str(&format!("\nrelated: {} {}", target.first, target.last));
    }
    let mut title_words = [first.as_str(), last.as_str()].map(capitalize);
    title_words.shuffle(&mut rng);
    let doc = Document {
        id: format!("dis{i:06}"),
        title: title_words.join(" "),
        text,
        entity_id: format!("dent{i:06}"),
    };
    (doc, target_idx)
}
