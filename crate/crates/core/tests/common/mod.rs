#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use lqre_core::model::DiffModel;
use lqre_core::objectives::Episode;
use lqre_core::{REInstance, TinyConfig, TinySeq2Seq, Vocab};
use proptest::test_runner::Config;

pub fn isaac() -> REInstance {
    let mut inst = REInstance::positive(
        "Isaac Nicola Romero (1916 in Havana, Cuba) was a prominent Cuban guitarist.",
        "Isaac Nicola",
        "place of birth",
        "most specific known birth location of a person, animal or fictional character",
        "Havana",
    );
    inst.gold_question = Some("What was Isaac Nicola's city of birth?".into());
    inst
}

pub fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    let raw = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    raw.strip_suffix('\n').unwrap_or(&raw).to_string()
}

pub fn small_vocab(n: usize) -> Arc<Vocab> {
    Arc::new(Vocab::from_tokens((0..n).map(|i| format!("w{i}"))))
}

/// A random model with its parameters multiplied by `scale`, so that
/// next-token distributions are far from uniform.
pub fn sharp_model(
    vocab: &Arc<Vocab>,
    dim: usize,
    max_len: usize,
    no_answer: bool,
    seed: u64,
    scale: f64,
) -> TinySeq2Seq {
    let cfg = TinyConfig {
        dim,
        max_len,
        allow_no_answer: no_answer,
    };
    let m = TinySeq2Seq::random(Arc::clone(vocab), cfg, seed);
    let mut p = m.params().clone();
    p.scale(scale);
    m.with_params(p).unwrap()
}

/// An instance small enough that every question can be enumerated.
pub struct EnumToy {
    pub vocab: Arc<Vocab>,
    pub pq: TinySeq2Seq,
    pub pa: TinySeq2Seq,
    pub search: TinySeq2Seq,
    pub ep: Episode,
}

/// Five content tokens, questions up to two tokens plus EOS.
pub fn enum_toy(seed: u64, scale: f64) -> EnumToy {
    let vocab = small_vocab(5);
    let inst = REInstance::positive("w0 w3 w1 .", "w0", "w3", "w4", "w1");
    EnumToy {
        pq: sharp_model(&vocab, 4, 3, false, 3 * seed, scale),
        pa: sharp_model(&vocab, 4, 2, true, 3 * seed + 1, scale),
        search: sharp_model(&vocab, 4, 3, false, 3 * seed + 2, scale),
        ep: Episode::new(&vocab, &inst),
        vocab,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs()).max(1e-8)
    }
}

/// Proptest settings for integration tests, which have no source file to
/// persist regressions next to.
pub fn prop_config(cases: u32) -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(cases)
    }
}
