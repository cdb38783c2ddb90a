//! Seeded synthetic worlds.
//!
//! Entities `e{i}` have a type `i % (N_TYPES + 1)`; the extra class only
//! ever appears as a head. Relation `g` links a head to a tail of type
//! `g % N_TYPES` with the verb `verb{g}`; its description is the type noun
//! suffixed with `g` (`place7`) and its gold question starts with the type's
//! wh-word:
//!
//! ```text
//! context   e13 verb4 e4 .
//! question  which e13 verb4 ?
//! ```
//!
//! The QA corpus draws from the same verbs but uses two-fact passages and
//! no descriptions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::QAPretrainExample;
use super::{negative_for, FoldSpec};
use crate::error::{Error, Result};
use crate::pipeline::{Candidate, REInstance, NULL_TAIL};

pub const N_TYPES: usize = 6;
pub const WH_WORDS: [&str; N_TYPES] = ["who", "where", "when", "what", "which", "whom"];
pub const DESCRIPTIONS: [&str; N_TYPES] = ["person", "place", "time", "thing", "team", "partner"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyWorldConfig {
    pub n_entities: usize,
    pub n_train_relations: usize,
    pub n_dev_relations: usize,
    pub n_test_relations: usize,
    pub contexts_per_relation: usize,
    pub negative_fraction: f64,
    pub seed: u64,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        ToyWorldConfig {
            n_entities: 70,
            n_train_relations: 6,
            n_dev_relations: 1,
            n_test_relations: 3,
            contexts_per_relation: 200,
            negative_fraction: 0.5,
            seed: 0,
        }
    }
}

impl ToyWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_train_relations == 0 || self.n_dev_relations == 0 || self.n_test_relations == 0 {
            return bad("every split needs at least one relation");
        }
        if self.contexts_per_relation == 0 {
            return bad("contexts_per_relation must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return bad("negative_fraction must be in [0, 1]");
        }
        if self.n_entities < N_TYPES + 1 {
            return bad("n_entities must cover every entity type");
        }
        Ok(())
    }

    pub fn n_relations(&self) -> usize {
        self.n_train_relations + self.n_dev_relations + self.n_test_relations
    }
}

fn entity(i: usize) -> String {
    format!("e{i}")
}

/// Entity ids of type `t` (`N_TYPES` is the head class).
fn entities_of(n_entities: usize, t: usize) -> Vec<usize> {
    (0..n_entities).filter(|i| i % (N_TYPES + 1) == t).collect()
}

#[derive(Debug, Clone)]
struct Relation {
    id: String,
    verb: String,
    description: String,
    ty: usize,
}

impl Relation {
    fn new(g: usize, prefix: &str) -> Self {
        Relation {
            id: format!("R{g}"),
            verb: format!("{prefix}{g}"),
            description: format!("{}{g}", DESCRIPTIONS[g % N_TYPES]),
            ty: g % N_TYPES,
        }
    }

    fn instance(&self, head: &str, tail: &str) -> REInstance {
        REInstance {
            context: format!("{head} {} {tail} .", self.verb),
            head: head.into(),
            relation: self.verb.clone(),
            description: self.description.clone(),
            tail: Some(tail.into()),
            gold_question: Some(format!("{} {head} {} ?", WH_WORDS[self.ty], self.verb)),
            relation_id: self.id.clone(),
            is_negative: false,
            answers: Vec::new(),
        }
    }

    fn candidate(&self) -> Candidate {
        Candidate::from_instance(&self.instance("XXX", "t"))
    }
}

fn gen_split<R: Rng>(rels: &[Relation], fallback: &[Relation], cfg: &ToyWorldConfig, rng: &mut R) -> Vec<REInstance> {
    let heads = entities_of(cfg.n_entities, N_TYPES);
    let mut out = Vec::new();
    for rel in rels {
        let tails = entities_of(cfg.n_entities, rel.ty);
        for _ in 0..cfg.contexts_per_relation {
            let h = entity(*heads.choose(rng).expect("head class non-empty"));
            let t = entity(*tails.choose(rng).expect("type class non-empty"));
            out.push(rel.instance(&h, &t));
        }
    }
    let n_neg = ((out.len() as f64) * cfg.negative_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..out.len()).collect();
    idx.shuffle(rng);
    for &i in &idx[..n_neg] {
        let src = &out[i];
        let own = rels.iter().find(|r| r.id == src.relation_id).expect("own relation");
        let others: Vec<&Relation> = rels.iter().filter(|r| r.id != own.id).collect();
        let different: Vec<&Relation> = others.iter().copied().filter(|r| r.ty != own.ty).collect();
        out[i] = if let Some(other) = different.choose(rng).or_else(|| others.choose(rng)) {
            negative_for(src, &other.candidate())
        } else {
            // single-relation split: keep the relation, state a fact of another
            // type (train relations come first in `fallback`)
            let decoy = fallback.iter().find(|r| r.ty != own.ty).expect("two relation types");
            let tails = entities_of(cfg.n_entities, decoy.ty);
            let t = entity(*tails.choose(rng).expect("type class non-empty"));
            REInstance {
                context: format!("{} {} {t} .", src.head, decoy.verb),
                tail: None,
                is_negative: true,
                ..src.clone()
            }
        };
    }
    out
}

/// Builds a zero-shot fold: train, dev and test relations are disjoint and
/// a `negative_fraction` of each split asks about a relation the context
/// does not state.
pub fn gen_toy_world(cfg: &ToyWorldConfig) -> Result<FoldSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rels: Vec<Relation> = (0..cfg.n_relations()).map(|g| Relation::new(g, "verb")).collect();
    let (train, rest) = rels.split_at(cfg.n_train_relations);
    let (dev, test) = rest.split_at(cfg.n_dev_relations);
    let fallback: Vec<Relation> = train.iter().chain(dev).chain(test).cloned().collect();
    let train_s = gen_split(train, &fallback, cfg, &mut rng);
    let dev_s = gen_split(dev, &fallback, cfg, &mut rng);
    let test_s = gen_split(test, &fallback, cfg, &mut rng);
    FoldSpec::new(train_s, dev_s, test_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaCorpusConfig {
    pub n_entities: usize,
    pub n_verbs: usize,
    pub n_examples: usize,
    pub unanswerable_fraction: f64,
    pub seed: u64,
}

impl Default for QaCorpusConfig {
    fn default() -> Self {
        QaCorpusConfig {
            n_entities: 70,
            n_verbs: 24,
            n_examples: 3000,
            unanswerable_fraction: 1.0 / 3.0,
            seed: 0,
        }
    }
}

/// QA pretraining examples over the same entities as the toy world, with
/// two-fact passages. Unanswerable questions ask for a type absent from the
/// passage.
pub fn gen_qa_corpus(cfg: &QaCorpusConfig) -> Result<Vec<QAPretrainExample>> {
    if cfg.n_verbs < 3 || cfg.n_entities < 2 * (N_TYPES + 1) {
        return Err(Error::Config(
            "QA corpus needs >= 3 verbs and two entities per type".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5141_5f43_4f52_5055);
    let verbs: Vec<Relation> = (0..cfg.n_verbs).map(|j| Relation::new(j, "verb")).collect();
    let heads = entities_of(cfg.n_entities, N_TYPES);
    let mut out = Vec::with_capacity(cfg.n_examples);
    while out.len() < cfg.n_examples {
        let a = verbs.choose(&mut rng).expect("verbs");
        let b = verbs.choose(&mut rng).expect("verbs");
        if a.ty == b.ty {
            continue;
        }
        let mut hs = heads.choose_multiple(&mut rng, 2).map(|&i| entity(i));
        let (h1, h2) = (
            hs.next().expect("two heads"),
            hs.next().unwrap_or_else(|| entity(N_TYPES)),
        );
        let t1 = entity(*entities_of(cfg.n_entities, a.ty).choose(&mut rng).expect("tails"));
        let t2 = entity(*entities_of(cfg.n_entities, b.ty).choose(&mut rng).expect("tails"));
        let facts = [format!("{h1} {} {t1} .", a.verb), format!("{h2} {} {t2} .", b.verb)];
        let passage = if rng.gen_bool(0.5) {
            format!("{} {}", facts[0], facts[1])
        } else {
            format!("{} {}", facts[1], facts[0])
        };
        let (head, verb, answer) = if rng.gen_bool(cfg.unanswerable_fraction) {
            let absent: Vec<&Relation> = verbs.iter().filter(|v| v.ty != a.ty && v.ty != b.ty).collect();
            let c = absent.choose(&mut rng).expect("a third type");
            let head = if rng.gen_bool(0.5) { &h1 } else { &h2 };
            (head.clone(), *c, NULL_TAIL.to_string())
        } else if rng.gen_bool(0.5) {
            (h1.clone(), a, t1)
        } else {
            (h2.clone(), b, t2)
        };
        out.push(QAPretrainExample {
            passage,
            question: format!("{} {head} {} ?", WH_WORDS[verb.ty], verb.verb),
            answer,
            entities: vec![head],
        });
    }
    Ok(out)
}

/// Every word the toy generators can produce, for building a vocabulary up
/// front.
pub fn toy_vocab_words(world: &ToyWorldConfig, qa: &QaCorpusConfig) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    words.extend(WH_WORDS.iter().map(|s| s.to_string()));
    words.extend((0..world.n_relations()).map(|g| format!("{}{g}", DESCRIPTIONS[g % N_TYPES])));
    words.extend((0..world.n_entities.max(qa.n_entities)).map(entity));
    words.extend((0..world.n_relations().max(qa.n_verbs)).map(|g| format!("verb{g}")));
    words.extend(["answer:", "context:", "relation:", "question:", ";", ".", "?"].map(String::from));
    words
}
