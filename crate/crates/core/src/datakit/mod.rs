//! Datasets: fold containers, negative augmentation, file formats, and
//! synthetic corpora.

mod io;
mod synth;
mod toy;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use io::{load_dataset, load_fold, load_jsonl, load_reqa_tsv, save_fold, save_jsonl, DataFormat};
pub use synth::{pretrain_split, synthesize_q_pretrain, QAPretrainExample, INTERROGATIVES};
pub use toy::{
    gen_qa_corpus, gen_toy_world, toy_vocab_words, QaCorpusConfig, ToyWorldConfig, DESCRIPTIONS, N_TYPES, WH_WORDS,
};

pub use crate::pipeline::make_pseudo_question;

use crate::error::{Error, Result};
use crate::pipeline::{Candidate, REInstance};

/// Train/dev/test splits whose relation types never overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub train: Vec<REInstance>,
    pub dev: Vec<REInstance>,
    pub test: Vec<REInstance>,
}

impl FoldSpec {
    pub fn new(train: Vec<REInstance>, dev: Vec<REInstance>, test: Vec<REInstance>) -> Result<Self> {
        let fold = FoldSpec { train, dev, test };
        fold.check_disjoint()?;
        Ok(fold)
    }

    pub fn relation_ids(split: &[REInstance]) -> BTreeSet<&str> {
        split.iter().map(|i| i.relation_id.as_str()).collect()
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let sets = [
            ("train", Self::relation_ids(&self.train)),
            ("dev", Self::relation_ids(&self.dev)),
            ("test", Self::relation_ids(&self.test)),
        ];
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                if let Some(r) = sets[i].1.intersection(&sets[j].1).next() {
                    return Err(Error::RelationOverlap(format!(
                        "{r} in {} and {}",
                        sets[i].0, sets[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn all(&self) -> impl Iterator<Item = &REInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

/// Turns `inst` into a negative asking about `other` instead.
pub(crate) fn negative_for(inst: &REInstance, other: &Candidate) -> REInstance {
    REInstance {
        relation: other.relation.clone(),
        description: other.description.clone(),
        relation_id: other.relation_id.clone(),
        tail: None,
        is_negative: true,
        answers: Vec::new(),
        gold_question: other
            .question_template
            .as_ref()
            .map(|t| t.replacen(crate::pipeline::HEAD_SLOT, &inst.head, 1)),
        ..inst.clone()
    }
}

/// Originals followed by one negative per original, whose relation is a
/// uniformly drawn different relation of `train`.
pub fn augment_negatives(train: &[REInstance], seed: u64) -> Result<Vec<REInstance>> {
    let mut relations: BTreeMap<String, Candidate> = BTreeMap::new();
    for inst in train {
        relations
            .entry(inst.relation_id.clone())
            .and_modify(|c| {
                if c.question_template.is_none() && !inst.is_negative {
                    *c = Candidate::from_instance(inst);
                }
            })
            .or_insert_with(|| {
                let mut c = Candidate::from_instance(inst);
                if inst.is_negative {
                    c.question_template = None;
                }
                c
            });
    }
    if relations.len() < 2 {
        return Err(Error::CannotSynthesizeNegatives);
    }
    let relations: Vec<Candidate> = relations.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = train.to_vec();
    for inst in train {
        let others: Vec<&Candidate> = relations.iter().filter(|c| c.relation_id != inst.relation_id).collect();
        let other = others.choose(&mut rng).expect("at least one other relation");
        out.push(negative_for(inst, other));
    }
    Ok(out)
}
