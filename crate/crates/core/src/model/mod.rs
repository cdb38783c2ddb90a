//! Autoregressive conditional sequence models.
//!
//! [`SeqModel`] is the decoding interface shared by every model: encode an
//! input, read next-token logits from a state, advance the state by one
//! token. The distribution over whole outputs is derived from it here so
//! every implementation agrees on masking and length truncation:
//!
//! * tokens outside the model's output support get probability zero;
//! * at position `max_len - 1` all mass goes to EOS, so the distribution over
//!   EOS-terminated sequences of length `<= max_len` is exactly normalized.

mod checkpoint;
mod params;
mod table;
mod tiny;

pub use checkpoint::{load_model, save_model, Architecture, Checkpoint, LAYOUT_VERSION};
pub use params::{clip_norm, sgd_step, ParamVector};
pub use table::{TableModel, POINT_MASS_GAP};
pub use tiny::{TinyConfig, TinySeq2Seq};

use crate::error::{Error, Result};
use crate::vocab::{Sequence, TokenId, Vocab, EOS, NUM_RESERVED};

pub trait SeqModel {
    type State: Clone;

    fn vocab(&self) -> &Vocab;

    /// Maximum output length in tokens, EOS included.
    fn max_len(&self) -> usize;

    /// Whether the model may emit `token` at all.
    fn can_emit(&self, token: TokenId) -> bool;

    /// Decoder state before the first output token.
    fn start(&self, input: &[TokenId]) -> Self::State;

    /// Raw next-token logits, one per vocabulary entry.
    fn logits(&self, state: &Self::State) -> Vec<f64>;

    fn advance(&self, state: &Self::State, token: TokenId) -> Self::State;
}

/// A model whose parameters live in one flat vector and whose log-likelihood
/// has an analytic gradient.
pub trait DiffModel: SeqModel + Sized {
    fn params(&self) -> &ParamVector;

    fn with_params(&self, params: ParamVector) -> Result<Self>;

    /// Adds `weight * d log p(output | input) / d params` into `grad` and
    /// returns `log p(output | input)`.
    fn accumulate_grad(&self, input: &[TokenId], output: &Sequence, weight: f64, grad: &mut ParamVector)
        -> Result<f64>;

    fn grad_log_prob(&self, input: &[TokenId], output: &Sequence) -> Result<ParamVector> {
        let mut grad = ParamVector::zeros(self.params().len());
        self.accumulate_grad(input, output, 1.0, &mut grad)?;
        Ok(grad)
    }
}

/// Log-softmax of `logits` restricted to `emit`; excluded entries are -inf.
pub(crate) fn masked_log_softmax(logits: &[f64], emit: impl Fn(usize) -> bool) -> Vec<f64> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| emit(i))
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| emit(i))
        .map(|(_, &l)| (l - max).exp())
        .sum();
    let lse = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &l)| if emit(i) { l - lse } else { f64::NEG_INFINITY })
        .collect()
}

/// Next-token log-probabilities at output `position` (0-based), with the
/// support mask and the forced EOS at `max_len - 1` applied.
pub fn step_log_probs<M: SeqModel + ?Sized>(model: &M, state: &M::State, position: usize) -> Vec<f64> {
    let v = model.vocab().len();
    if position + 1 >= model.max_len() {
        let mut lp = vec![f64::NEG_INFINITY; v];
        lp[EOS as usize] = 0.0;
        return lp;
    }
    let logits = model.logits(state);
    masked_log_softmax(&logits, |i| model.can_emit(i as TokenId))
}

fn check_prefix(prefix: &[TokenId]) -> Result<()> {
    if prefix.contains(&EOS) {
        return Err(Error::InvalidSequence("prefix contains EOS".into()));
    }
    Ok(())
}

/// Raw logits after feeding `prefix` (which must not contain EOS).
pub fn next_logits<M: SeqModel + ?Sized>(model: &M, input: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>> {
    check_prefix(prefix)?;
    let mut state = model.start(input);
    for &t in prefix {
        state = model.advance(&state, t);
    }
    Ok(model.logits(&state))
}

pub(crate) fn check_len(output: &Sequence, max_len: usize) -> Result<()> {
    if output.len() > max_len {
        return Err(Error::SequenceTooLong {
            len: output.len(),
            max_len,
        });
    }
    Ok(())
}

/// Sum over output positions of the log-probability of each token given the
/// input and the preceding tokens. May be -inf for tokens outside the
/// model's support.
pub fn log_prob<M: SeqModel + ?Sized>(model: &M, input: &[TokenId], output: &Sequence) -> Result<f64> {
    check_len(output, model.max_len())?;
    let mut state = model.start(input);
    let mut total = 0.0;
    let ids = output.ids();
    for (pos, &tok) in ids.iter().enumerate() {
        let lp = step_log_probs(model, &state, pos);
        total += lp[tok as usize];
        if pos + 1 < ids.len() {
            state = model.advance(&state, tok);
        }
    }
    Ok(total)
}

/// Number of EOS-terminated sequences of length `<= max_len` over `n` tokens.
pub fn sequence_count(n: usize, max_len: usize) -> u128 {
    (0..max_len as u32)
        .map(|l| (n as u128).saturating_pow(l))
        .fold(0u128, |a, b| a.saturating_add(b))
}

pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Every EOS-terminated sequence of length `<= max_len` whose content tokens
/// come from `tokens`, shortest first, lexicographic within a length.
pub fn enumerate_over(tokens: &[TokenId], max_len: usize) -> Result<Vec<Sequence>> {
    let count = sequence_count(tokens.len(), max_len);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::with_capacity(count as usize);
    let mut layer: Vec<Vec<TokenId>> = vec![Vec::new()];
    for len in 0..max_len {
        for content in &layer {
            let mut ids = content.clone();
            ids.push(EOS);
            out.push(Sequence::new(ids)?);
        }
        if len + 1 == max_len {
            break;
        }
        layer = layer
            .iter()
            .flat_map(|c| {
                sorted.iter().map(move |&t| {
                    let mut n = c.clone();
                    n.push(t);
                    n
                })
            })
            .collect();
    }
    Ok(out)
}

/// All EOS-terminated sequences of length `<= max_len` over the
/// vocabulary's non-reserved tokens.
pub fn enumerate_sequences(vocab: &Vocab, max_len: usize) -> Result<Vec<Sequence>> {
    let tokens: Vec<TokenId> = vocab.content_ids().collect();
    enumerate_over(&tokens, max_len)
}

/// Enumeration over everything `model` can emit besides EOS.
pub fn enumerate_support<M: SeqModel + ?Sized>(model: &M) -> Result<Vec<Sequence>> {
    let tokens: Vec<TokenId> = (0..model.vocab().len() as TokenId)
        .filter(|&t| t != EOS && model.can_emit(t))
        .collect();
    enumerate_over(&tokens, model.max_len())
}

pub(crate) fn default_can_emit(token: TokenId, allow_no_answer: bool) -> bool {
    token == EOS || (token as usize) >= NUM_RESERVED || (allow_no_answer && token == crate::vocab::NO_ANSWER)
}
