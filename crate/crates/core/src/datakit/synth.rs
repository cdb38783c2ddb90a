//! Question-generator pretraining data from QA examples: pick an annotated
//! entity as the head and a few leftover question words as the relation.

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::{REInstance, NULL_TAIL};

pub const INTERROGATIVES: [&str; 9] = ["what", "where", "when", "who", "which", "whose", "whom", "why", "how"];

const MAX_KEYWORDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPretrainExample {
    pub passage: String,
    pub question: String,
    /// `NO_ANSWER` for unanswerable questions.
    pub answer: String,
    /// Annotated entity mentions.
    pub entities: Vec<String>,
}

/// Question words left once punctuation, interrogatives and entity tokens
/// are removed, in question order.
pub(crate) fn keyword_pool(question: &str, entities: &[String]) -> Vec<String> {
    let entity_tokens: Vec<&str> = entities.iter().flat_map(|e| e.split_whitespace()).collect();
    question
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_string())
        .filter(|t| !t.is_empty())
        .filter(|t| !INTERROGATIVES.contains(&t.to_lowercase().as_str()))
        .filter(|t| !entity_tokens.contains(&t.as_str()))
        .collect()
}

/// One `(c, e1, r, e2 -> q)` instance per usable example. Examples without
/// entities or without keyword candidates are dropped.
pub fn synthesize_q_pretrain(examples: &[QAPretrainExample], seed: u64) -> Vec<REInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut dropped = 0usize;
    for ex in examples {
        let Some(head) = ex.entities.choose(&mut rng) else {
            dropped += 1;
            continue;
        };
        let pool = keyword_pool(&ex.question, &ex.entities);
        if pool.is_empty() {
            dropped += 1;
            continue;
        }
        let k = rng.gen_range(1..=pool.len().min(MAX_KEYWORDS));
        let mut picked = (0..pool.len()).choose_multiple(&mut rng, k);
        picked.sort_unstable();
        let relation = picked.iter().map(|&i| pool[i].as_str()).collect::<Vec<_>>().join(" ");
        let negative = ex.answer == NULL_TAIL;
        out.push(REInstance {
            context: ex.passage.clone(),
            head: head.clone(),
            relation: relation.clone(),
            description: String::new(),
            tail: (!negative).then(|| ex.answer.clone()),
            gold_question: Some(ex.question.clone()),
            relation_id: relation,
            is_negative: negative,
            answers: Vec::new(),
        });
    }
    if dropped > 0 {
        log::info!(
            "dropped {dropped} of {} QA examples without entities or keywords",
            examples.len()
        );
    }
    out
}

/// Deterministic split of `insts` into (train, held-out), holding out
/// roughly `held_out` of them.
pub fn pretrain_split(insts: &[REInstance], held_out: f64, seed: u64) -> (Vec<REInstance>, Vec<REInstance>) {
    let mut idx: Vec<usize> = (0..insts.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_held = ((insts.len() as f64) * held_out).round() as usize;
    let held = idx[..n_held].iter().map(|&i| insts[i].clone()).collect();
    let train = idx[n_held..].iter().map(|&i| insts[i].clone()).collect();
    (train, held)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ex(q: &str, entities: &[&str]) -> QAPretrainExample {
        QAPretrainExample {
            passage: "Isaac Nicola was born in Havana .".into(),
            question: q.into(),
            answer: "Havana".into(),
            entities: entities.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn isaac_keywords() {
        let e = ex("Where was Isaac Nicola born?", &["Isaac Nicola"]);
        assert_eq!(keyword_pool(&e.question, &e.entities), vec!["was", "born"]);
        for seed in 0..50 {
            let out = synthesize_q_pretrain(std::slice::from_ref(&e), seed);
            assert_eq!(out.len(), 1);
            let r: Vec<&str> = out[0].relation.split_whitespace().collect();
            assert!(!r.is_empty() && r.len() <= 2);
            assert!(r.iter().all(|t| ["was", "born"].contains(t)));
            assert_eq!(out[0].head, "Isaac Nicola");
            assert_eq!(out[0].tail.as_deref(), Some("Havana"));
        }
    }

    #[test]
    fn empty_pool_and_no_entities_dropped() {
        assert!(synthesize_q_pretrain(&[ex("what Isaac Nicola ?", &["Isaac Nicola"])], 0).is_empty());
        assert!(synthesize_q_pretrain(&[ex("where was he born ?", &[])], 0).is_empty());
    }

    #[test]
    fn unanswerable_becomes_negative() {
        let mut e = ex("who coached Isaac Nicola ?", &["Isaac Nicola"]);
        e.answer = NULL_TAIL.into();
        let out = synthesize_q_pretrain(&[e], 1);
        assert!(out[0].is_negative && out[0].tail.is_none());
    }

    #[test]
    fn deterministic_per_seed() {
        let e = ex(
            "where did the young Isaac Nicola first study guitar music ?",
            &["Isaac Nicola"],
        );
        let exs = vec![e; 20];
        assert_eq!(synthesize_q_pretrain(&exs, 9), synthesize_q_pretrain(&exs, 9));
    }

    proptest! {
        #[test]
        fn keywords_exclude_stoplist_and_entities(
            words in proptest::collection::vec("[a-zA-Z]{1,6}[?.,]?", 1..12),
            ent in "[A-Z][a-z]{2,5}",
            seed in 0u64..1000,
        ) {
            let mut q = words.clone();
            q.insert(0, "Which".into());
            q.push(ent.clone());
            let e = QAPretrainExample {
                passage: "p".into(),
                question: q.join(" "),
                answer: "a".into(),
                entities: vec![ent.clone()],
            };
            for inst in synthesize_q_pretrain(&[e], seed) {
                let toks: Vec<&str> = inst.relation.split_whitespace().collect();
                prop_assert!(toks.len() <= 4 && !toks.is_empty());
                for t in toks {
                    prop_assert!(!INTERROGATIVES.contains(&t.to_lowercase().as_str()));
                    prop_assert!(t != ent);
                    prop_assert!(!t.chars().any(|c| c.is_ascii_punctuation()));
                }
            }
        }
    }
}
