//! A small recurrent encoder-decoder with hand-written backpropagation.
//!
//! The encoder is the mean of the input token embeddings. The decoder is a
//! single tanh cell driven by that encoding, its previous state and the
//! embedding of the previous output token:
//!
//! ```text
//! x   = mean(E[input])
//! h_0 = tanh(W_in x + b_h + W_tok E[BOS])
//! h_t = tanh(W_in x + b_h + W_rec h_{t-1} + W_tok E[y_{t-1}])
//! z_t = W_out h_t + b_out
//! ```
//!
//! All weights live in one [`ParamVector`] in the order
//! `E, W_in, W_rec, W_tok, b_h, W_out, b_out` (matrices row-major).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, default_can_emit, masked_log_softmax, DiffModel, ParamVector, SeqModel};
use crate::error::{Error, Result};
use crate::vocab::{Sequence, TokenId, Vocab, BOS};

pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyConfig {
    pub dim: usize,
    pub max_len: usize,
    /// Lets the model emit `NO_ANSWER` (answer generators only).
    pub allow_no_answer: bool,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            dim: 32,
            max_len: 8,
            allow_no_answer: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    v: usize,
    d: usize,
    emb: usize,
    w_in: usize,
    w_rec: usize,
    w_tok: usize,
    b_h: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(v: usize, d: usize) -> Self {
        let emb = 0;
        let w_in = emb + v * d;
        let w_rec = w_in + d * d;
        let w_tok = w_rec + d * d;
        let b_h = w_tok + d * d;
        let w_out = b_h + d;
        let b_out = w_out + v * d;
        Layout {
            v,
            d,
            emb,
            w_in,
            w_rec,
            w_tok,
            b_h,
            w_out,
            b_out,
            total: b_out + v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TinySeq2Seq {
    vocab: Arc<Vocab>,
    config: TinyConfig,
    layout: Layout,
    params: ParamVector,
}

#[derive(Debug, Clone)]
pub struct TinyState {
    ctx: Arc<Vec<f64>>,
    h: Vec<f64>,
}

/// `out += M v` for a row-major `rows x cols` block of `p` at `off`.
#[inline]
fn matvec_add(p: &[f64], off: usize, rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &p[off + i * cols..off + (i + 1) * cols];
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T u`
#[inline]
fn matvec_t_add(p: &[f64], off: usize, rows: usize, cols: usize, u: &[f64], out: &mut [f64]) {
    for (i, &ui) in u.iter().enumerate().take(rows) {
        if ui == 0.0 {
            continue;
        }
        let row = &p[off + i * cols..off + (i + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * ui;
        }
    }
}

/// `G += u v^T` into the block at `off`.
#[inline]
fn outer_add(g: &mut [f64], off: usize, u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let row = &mut g[off + i * cols..off + (i + 1) * cols];
        for (gij, vj) in row.iter_mut().zip(v) {
            *gij += ui * vj;
        }
    }
}

impl TinySeq2Seq {
    pub fn zeros(vocab: Arc<Vocab>, config: TinyConfig) -> Self {
        let layout = Layout::new(vocab.len(), config.dim);
        TinySeq2Seq {
            vocab,
            config,
            params: ParamVector::zeros(layout.total),
            layout,
        }
    }

    /// Parameters drawn uniformly from `[-0.1, 0.1]`.
    pub fn random(vocab: Arc<Vocab>, config: TinyConfig, seed: u64) -> Self {
        let mut model = Self::zeros(vocab, config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params.as_mut_slice() {
            *p = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        model
    }

    pub fn from_params(vocab: Arc<Vocab>, config: TinyConfig, params: ParamVector) -> Result<Self> {
        let layout = Layout::new(vocab.len(), config.dim);
        if params.len() != layout.total {
            return Err(Error::LayoutMismatch {
                expected: layout.total,
                actual: params.len(),
            });
        }
        Ok(TinySeq2Seq {
            vocab,
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> TinyConfig {
        self.config
    }

    pub fn shared_vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn param_count(vocab_size: usize, dim: usize) -> usize {
        Layout::new(vocab_size, dim).total
    }

    fn emb(&self, tok: TokenId) -> &[f64] {
        let l = &self.layout;
        let off = l.emb + tok as usize * l.d;
        &self.params.as_slice()[off..off + l.d]
    }

    fn encode(&self, input: &[TokenId]) -> Vec<f64> {
        let d = self.layout.d;
        let mut x = vec![0.0; d];
        if input.is_empty() {
            return x;
        }
        for &t in input {
            for (xi, e) in x.iter_mut().zip(self.emb(t)) {
                *xi += e;
            }
        }
        let inv = 1.0 / input.len() as f64;
        x.iter_mut().for_each(|xi| *xi *= inv);
        x
    }

    fn context(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let p = self.params.as_slice();
        let mut ctx = p[l.b_h..l.b_h + l.d].to_vec();
        matvec_add(p, l.w_in, l.d, l.d, x, &mut ctx);
        ctx
    }

    fn cell(&self, ctx: &[f64], h_prev: Option<&[f64]>, prev: TokenId) -> Vec<f64> {
        let l = &self.layout;
        let p = self.params.as_slice();
        let mut a = ctx.to_vec();
        if let Some(h) = h_prev {
            matvec_add(p, l.w_rec, l.d, l.d, h, &mut a);
        }
        matvec_add(p, l.w_tok, l.d, l.d, self.emb(prev), &mut a);
        a.iter_mut().for_each(|ai| *ai = ai.tanh());
        a
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let p = self.params.as_slice();
        let mut z = p[l.b_out..l.b_out + l.v].to_vec();
        matvec_add(p, l.w_out, l.v, l.d, h, &mut z);
        z
    }
}

impl SeqModel for TinySeq2Seq {
    type State = TinyState;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn can_emit(&self, token: TokenId) -> bool {
        default_can_emit(token, self.config.allow_no_answer)
    }

    fn start(&self, input: &[TokenId]) -> TinyState {
        let x = self.encode(input);
        let ctx = self.context(&x);
        let h = self.cell(&ctx, None, BOS);
        TinyState { ctx: Arc::new(ctx), h }
    }

    fn logits(&self, state: &TinyState) -> Vec<f64> {
        self.output(&state.h)
    }

    fn advance(&self, state: &TinyState, token: TokenId) -> TinyState {
        let h = self.cell(&state.ctx, Some(&state.h), token);
        TinyState {
            ctx: Arc::clone(&state.ctx),
            h,
        }
    }
}

impl DiffModel for TinySeq2Seq {
    fn params(&self) -> &ParamVector {
        &self.params
    }

    fn with_params(&self, params: ParamVector) -> Result<Self> {
        Self::from_params(Arc::clone(&self.vocab), self.config, params)
    }

    fn accumulate_grad(
        &self,
        input: &[TokenId],
        output: &Sequence,
        weight: f64,
        grad: &mut ParamVector,
    ) -> Result<f64> {
        check_len(output, self.config.max_len)?;
        if grad.len() != self.layout.total {
            return Err(Error::LayoutMismatch {
                expected: self.layout.total,
                actual: grad.len(),
            });
        }
        let l = self.layout;
        let ids = output.ids();
        // positions with a learned distribution; the last allowed slot is forced EOS
        let steps = ids.len().min(l_max_free(self.config.max_len));
        if ids.len() > steps && ids[steps] != crate::vocab::EOS {
            return Err(Error::InvalidSequence("forced-EOS slot holds another token".into()));
        }

        let x = self.encode(input);
        let ctx = self.context(&x);
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut prevs: Vec<TokenId> = Vec::with_capacity(steps);
        let mut probs: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut total = 0.0;
        for t in 0..steps {
            let prev = if t == 0 { BOS } else { ids[t - 1] };
            let h = self.cell(&ctx, hs.last().map(Vec::as_slice), prev);
            let lp = masked_log_softmax(&self.output(&h), |i| self.can_emit(i as TokenId));
            let y = ids[t] as usize;
            if lp[y] == f64::NEG_INFINITY {
                return Err(Error::InvalidSequence(format!(
                    "token {y} outside the model's output support"
                )));
            }
            total += lp[y];
            probs.push(lp.into_iter().map(f64::exp).collect());
            hs.push(h);
            prevs.push(prev);
        }

        if weight == 0.0 {
            return Ok(total);
        }
        let p = self.params.as_slice();
        let g = grad.as_mut_slice();
        let d = l.d;
        let mut dctx = vec![0.0; d];
        let mut dh_next = vec![0.0; d];
        for t in (0..steps).rev() {
            let mut dz = probs[t].iter().map(|&q| -weight * q).collect::<Vec<_>>();
            dz[ids[t] as usize] += weight;
            let h = &hs[t];
            outer_add(g, l.w_out, &dz, h);
            for (gb, dzi) in g[l.b_out..l.b_out + l.v].iter_mut().zip(&dz) {
                *gb += dzi;
            }
            let mut dh = std::mem::take(&mut dh_next);
            if dh.is_empty() {
                dh = vec![0.0; d];
            }
            matvec_t_add(p, l.w_out, l.v, d, &dz, &mut dh);
            let da: Vec<f64> = dh.iter().zip(h).map(|(dhi, hi)| dhi * (1.0 - hi * hi)).collect();
            for (c, a) in dctx.iter_mut().zip(&da) {
                *c += a;
            }
            let prev = prevs[t];
            outer_add(g, l.w_tok, &da, self.emb(prev));
            let eoff = l.emb + prev as usize * d;
            matvec_t_add(p, l.w_tok, d, d, &da, &mut g[eoff..eoff + d]);
            dh_next = vec![0.0; d];
            if t > 0 {
                outer_add(g, l.w_rec, &da, &hs[t - 1]);
                matvec_t_add(p, l.w_rec, d, d, &da, &mut dh_next);
            }
        }
        for (gb, c) in g[l.b_h..l.b_h + d].iter_mut().zip(&dctx) {
            *gb += c;
        }
        outer_add(g, l.w_in, &dctx, &x);
        if !input.is_empty() {
            let mut dx = vec![0.0; d];
            matvec_t_add(p, l.w_in, d, d, &dctx, &mut dx);
            let inv = 1.0 / input.len() as f64;
            for &tok in input {
                let off = l.emb + tok as usize * d;
                for (ge, dxi) in g[off..off + d].iter_mut().zip(&dx) {
                    *ge += dxi * inv;
                }
            }
        }
        Ok(total)
    }
}

#[inline]
fn l_max_free(max_len: usize) -> usize {
    max_len.saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_support, log_prob, next_logits, step_log_probs};
    use crate::vocab::{EOS, NO_ANSWER};

    fn vocab(n: usize) -> Arc<Vocab> {
        Arc::new(Vocab::from_tokens((0..n).map(|i| format!("w{i}"))))
    }

    fn cfg(max_len: usize) -> TinyConfig {
        TinyConfig {
            dim: 6,
            max_len,
            allow_no_answer: false,
        }
    }

    fn seq(ids: &[TokenId]) -> Sequence {
        Sequence::from_content(ids).unwrap()
    }

    #[test]
    fn zero_params_give_uniform_log_prob() {
        let m = TinySeq2Seq::zeros(vocab(4), cfg(6));
        let input = [6, 7, EOS];
        // emittable: 4 content tokens + EOS
        let v = 5.0f64;
        let out = seq(&[6, 8, 9]);
        let lp = log_prob(&m, &input, &out).unwrap();
        assert!((lp - 4.0 * (1.0 / v).ln()).abs() < 1e-12);
        let z = next_logits(&m, &input, &[6]).unwrap();
        assert!(z.iter().all(|&x| x == z[0]));
    }

    #[test]
    fn eos_only_output_is_one_step() {
        let m = TinySeq2Seq::random(vocab(4), cfg(5), 3);
        let input = [7, EOS];
        let st = m.start(&input);
        let lp0 = step_log_probs(&m, &st, 0)[EOS as usize];
        let lp = log_prob(&m, &input, &Sequence::eos()).unwrap();
        assert_eq!(lp, lp0);
    }

    #[test]
    fn chained_step_logits_reproduce_log_prob() {
        // independent recomputation: softmax of next_logits at every prefix
        let m = TinySeq2Seq::random(vocab(5), cfg(6), 11);
        let input = [6, 9, 10, 6, EOS];
        let out = seq(&[8, 6, 10]);
        let mut expect = 0.0;
        for t in 0..out.len() {
            let z = next_logits(&m, &input, &out.ids()[..t]).unwrap();
            let emit: Vec<usize> = (0..z.len()).filter(|&i| m.can_emit(i as TokenId)).collect();
            let max = emit.iter().map(|&i| z[i]).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + emit.iter().map(|&i| (z[i] - max).exp()).sum::<f64>().ln();
            expect += z[out.ids()[t] as usize] - lse;
        }
        let lp = log_prob(&m, &input, &out).unwrap();
        assert!((lp - expect).abs() < 1e-12, "{lp} vs {expect}");
    }

    #[test]
    fn softmax_of_logits_normalizes() {
        let m = TinySeq2Seq::random(vocab(5), cfg(6), 5);
        let z = next_logits(&m, &[6, 7, EOS], &[8, 9]).unwrap();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = z.iter().map(|x| (x - max).exp()).sum();
        let total: f64 = z.iter().map(|x| (x - max).exp() / s).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(z.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn exhaustive_normalization() {
        let m = TinySeq2Seq::random(vocab(3), cfg(4), 9);
        let input = [6, 8, EOS];
        let total: f64 = enumerate_support(&m)
            .unwrap()
            .iter()
            .map(|s| log_prob(&m, &input, s).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn exhaustive_normalization_with_no_answer() {
        let c = TinyConfig {
            allow_no_answer: true,
            ..cfg(3)
        };
        let m = TinySeq2Seq::random(vocab(3), c, 2);
        let space = enumerate_support(&m).unwrap();
        assert!(space.iter().any(|s| s.ids()[0] == NO_ANSWER));
        let total: f64 = space.iter().map(|s| log_prob(&m, &[7, EOS], s).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_long_output_errors() {
        let m = TinySeq2Seq::random(vocab(3), cfg(3), 1);
        let out = seq(&[6, 7, 8]);
        assert!(matches!(
            log_prob(&m, &[EOS], &out),
            Err(Error::SequenceTooLong { len: 4, max_len: 3 })
        ));
        assert!(m.grad_log_prob(&[EOS], &out).is_err());
    }

    #[test]
    fn gradient_is_linear_in_sequences() {
        let m = TinySeq2Seq::random(vocab(4), cfg(5), 4);
        let input = [6, 7, 9, EOS];
        let a = seq(&[6, 7]);
        let b = seq(&[9]);
        let mut both = ParamVector::zeros(m.params().len());
        m.accumulate_grad(&input, &a, 1.0, &mut both).unwrap();
        m.accumulate_grad(&input, &b, 1.0, &mut both).unwrap();
        let mut sum = m.grad_log_prob(&input, &a).unwrap();
        sum.axpy(1.0, &m.grad_log_prob(&input, &b).unwrap()).unwrap();
        for (x, y) in both.as_slice().iter().zip(sum.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_forward() {
        let a = TinySeq2Seq::random(vocab(4), cfg(5), 42);
        let b = TinySeq2Seq::random(vocab(4), cfg(5), 42);
        let out = seq(&[6, 8]);
        let la = log_prob(&a, &[7, EOS], &out).unwrap();
        let lb = log_prob(&b, &[7, EOS], &out).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
    }

    #[test]
    fn init_within_range() {
        let m = TinySeq2Seq::random(vocab(4), cfg(5), 8);
        assert!(m.params().as_slice().iter().all(|p| p.abs() <= INIT_RANGE));
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if d == 0.0 {
            0.0
        } else {
            d / a.abs().max(b.abs()).max(1e-8)
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::seq::index::sample;
        use rand::SeedableRng;

        let h = 1e-4;
        for (seed, no_answer) in [(1u64, false), (2, true), (3, false)] {
            let m = TinySeq2Seq::random(
                vocab(6),
                TinyConfig {
                    allow_no_answer: no_answer,
                    ..cfg(6)
                },
                seed,
            );
            let input = [6, 9, 11, 7, EOS];
            let out = if no_answer {
                seq(&[NO_ANSWER])
            } else {
                seq(&[8, 10, 8, 11])
            };
            let g = m.grad_log_prob(&input, &out).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in sample(&mut rng, g.len(), 50) {
                let at = |delta: f64| {
                    let mut p = m.params().clone();
                    p.as_mut_slice()[i] += delta;
                    log_prob(&m.with_params(p).unwrap(), &input, &out).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                assert!(rel_err(g[i], fd) <= 1e-3, "coord {i}: analytic {} fd {fd}", g[i]);
            }
        }
    }
}
