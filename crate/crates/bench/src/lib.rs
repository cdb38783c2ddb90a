//! Fixtures shared by the criterion benches in `benches/`.

use std::sync::Arc;

use lqre_core::datakit::{gen_toy_world, ToyWorldConfig};
use lqre_core::objectives::Episode;
use lqre_core::runner::build_vocab;
use lqre_core::{REInstance, TinyConfig, TinySeq2Seq, Vocab};

pub struct Fixture {
    pub vocab: Arc<Vocab>,
    pub train: Vec<REInstance>,
    pub pq: TinySeq2Seq,
    pub pa: TinySeq2Seq,
    pub search: TinySeq2Seq,
}

/// Random generators over the default toy-world vocabulary.
pub fn fixture(dim: usize) -> Fixture {
    let fold = gen_toy_world(&ToyWorldConfig {
        contexts_per_relation: 20,
        ..ToyWorldConfig::default()
    })
    .expect("toy world");
    let vocab = Arc::new(build_vocab(fold.all()));
    let model = |max_len, allow_no_answer, seed| {
        let cfg = TinyConfig {
            dim,
            max_len,
            allow_no_answer,
        };
        TinySeq2Seq::random(Arc::clone(&vocab), cfg, seed)
    };
    Fixture {
        pq: model(6, false, 1),
        pa: model(4, true, 2),
        search: model(6, false, 3),
        train: fold.train,
        vocab,
    }
}

impl Fixture {
    pub fn episodes(&self, n: usize) -> Vec<Episode> {
        self.train
            .iter()
            .take(n)
            .map(|i| Episode::new(&self.vocab, i))
            .collect()
    }
}
