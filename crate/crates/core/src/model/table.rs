use std::sync::Arc;

use super::{default_can_emit, SeqModel};
use crate::vocab::{TokenId, Vocab, EOS};

/// Logit gap used for (numerically) point-mass steps. `exp(-60)` is far
/// below any tolerance used in this crate while keeping every log-prob
/// finite.
pub const POINT_MASS_GAP: f64 = 60.0;

#[derive(Debug, Clone)]
enum Behavior {
    /// Follows `content` then EOS with point mass; uniform once off the chain.
    Chain(Vec<TokenId>),
    /// The same logits at every step.
    Fixed(Vec<f64>),
}

/// Hand-constructed model for oracle tests: the first rule whose trigger
/// tokens all occur in the input decides the output distribution.
#[derive(Debug, Clone)]
pub struct TableModel {
    vocab: Arc<Vocab>,
    max_len: usize,
    allow_no_answer: bool,
    rules: Vec<(Vec<TokenId>, Behavior)>,
    fallback: Behavior,
}

#[derive(Debug, Clone)]
pub struct TableState {
    behavior: usize,
    prefix: Vec<TokenId>,
}

impl TableModel {
    /// Uniform over the output support until rules are added.
    pub fn new(vocab: Arc<Vocab>, max_len: usize, allow_no_answer: bool) -> Self {
        let v = vocab.len();
        TableModel {
            vocab,
            max_len,
            allow_no_answer,
            rules: Vec::new(),
            fallback: Behavior::Fixed(vec![0.0; v]),
        }
    }

    /// Point mass on `content` followed by EOS for any input.
    pub fn point_mass(vocab: Arc<Vocab>, max_len: usize, allow_no_answer: bool, content: &[TokenId]) -> Self {
        let mut m = Self::new(vocab, max_len, allow_no_answer);
        m.fallback = Behavior::Chain(content.to_vec());
        m
    }

    /// The same next-token logits at every step, for any input.
    pub fn fixed(vocab: Arc<Vocab>, max_len: usize, allow_no_answer: bool, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), vocab.len());
        let mut m = Self::new(vocab, max_len, allow_no_answer);
        m.fallback = Behavior::Fixed(logits);
        m
    }

    /// When every token of `trigger` is in the input, emit `content` then EOS.
    pub fn with_chain(mut self, trigger: &[TokenId], content: &[TokenId]) -> Self {
        self.rules.push((trigger.to_vec(), Behavior::Chain(content.to_vec())));
        self
    }

    /// When every token of `trigger` is in the input, use `logits` at every step.
    pub fn with_fixed(mut self, trigger: &[TokenId], logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), self.vocab.len());
        self.rules.push((trigger.to_vec(), Behavior::Fixed(logits)));
        self
    }

    fn behavior(&self, idx: usize) -> &Behavior {
        self.rules.get(idx).map(|(_, b)| b).unwrap_or(&self.fallback)
    }
}

impl SeqModel for TableModel {
    type State = TableState;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn can_emit(&self, token: TokenId) -> bool {
        default_can_emit(token, self.allow_no_answer)
    }

    fn start(&self, input: &[TokenId]) -> TableState {
        let behavior = self
            .rules
            .iter()
            .position(|(trigger, _)| trigger.iter().all(|t| input.contains(t)))
            .unwrap_or(self.rules.len());
        TableState {
            behavior,
            prefix: Vec::new(),
        }
    }

    fn logits(&self, state: &TableState) -> Vec<f64> {
        match self.behavior(state.behavior) {
            Behavior::Fixed(z) => z.clone(),
            Behavior::Chain(content) => {
                let mut z = vec![0.0; self.vocab.len()];
                let t = state.prefix.len();
                if state.prefix.as_slice() == &content[..t.min(content.len())] && t <= content.len() {
                    let next = content.get(t).copied().unwrap_or(EOS);
                    z.iter_mut().for_each(|x| *x = -POINT_MASS_GAP);
                    z[next as usize] = 0.0;
                }
                z
            }
        }
    }

    fn advance(&self, state: &TableState, token: TokenId) -> TableState {
        let mut prefix = state.prefix.clone();
        prefix.push(token);
        TableState {
            behavior: state.behavior,
            prefix,
        }
    }
}
