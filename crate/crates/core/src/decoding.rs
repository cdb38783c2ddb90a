//! Greedy decoding, beam search and nucleus (top-p) sampling over any
//! [`SeqModel`].
//!
//! Scores are plain sums of token log-probabilities (no length
//! normalization). Ties are broken towards the lowest token id, and between
//! whole hypotheses towards the lexicographically smaller id list.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_len, step_log_probs, SeqModel};
use crate::vocab::{Sequence, TokenId, EOS};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub seq: Sequence,
    /// Sum of the chosen tokens' log-probabilities under the model.
    pub log_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Nucleus threshold in `(0, 1]`.
    pub p: f64,
    pub n_samples: usize,
    pub beam_size: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            p: 0.95,
            n_samples: 8,
            beam_size: 8,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!("p must be in (0, 1], got {}", self.p)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Argmax at every step (lowest id on ties) until EOS.
pub fn greedy<M: SeqModel + ?Sized>(model: &M, input: &[TokenId]) -> ScoredSequence {
    let mut state = model.start(input);
    let mut ids = Vec::new();
    let mut score = 0.0;
    for pos in 0..model.max_len() {
        let lp = step_log_probs(model, &state, pos);
        let mut best = EOS;
        let mut best_lp = f64::NEG_INFINITY;
        for (tok, &l) in lp.iter().enumerate() {
            if l > best_lp {
                best_lp = l;
                best = tok as TokenId;
            }
        }
        ids.push(best);
        score += best_lp;
        if best == EOS {
            break;
        }
        state = model.advance(&state, best);
    }
    ScoredSequence {
        seq: Sequence::new(ids).expect("greedy output ends with EOS"),
        log_score: score,
    }
}

struct Hyp<S> {
    state: S,
    ids: Vec<TokenId>,
    score: f64,
}

/// Descending score, then ascending lexicographic ids.
fn rank(a_score: f64, a_ids: &[TokenId], b_score: f64, b_ids: &[TokenId]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_ids.cmp(b_ids))
}

/// Length-unnormalized beam search. Hypotheses that emit EOS leave the beam
/// and compete with each other by total log-score; an EOS extension retires
/// only if it ranks within the step's top `beam_size` candidates, so a beam
/// of one reproduces greedy decoding. Returns at most
/// `beam_size` results, best first.
pub fn beam<M: SeqModel + ?Sized>(model: &M, input: &[TokenId], beam_size: usize) -> Vec<ScoredSequence> {
    let beam_size = beam_size.max(1);
    let mut active = vec![Hyp {
        state: model.start(input),
        ids: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<(Vec<TokenId>, f64)> = Vec::new();

    for pos in 0..model.max_len() {
        // (parent, token, score)
        let mut cands: Vec<(usize, TokenId, f64)> = Vec::new();
        for (i, h) in active.iter().enumerate() {
            let lp = step_log_probs(model, &h.state, pos);
            for (tok, &l) in lp.iter().enumerate() {
                if l.is_finite() {
                    cands.push((i, tok as TokenId, h.score + l));
                }
            }
        }
        cands.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| active[a.0].ids.cmp(&active[b.0].ids))
                .then_with(|| a.1.cmp(&b.1))
        });
        let mut next = Vec::with_capacity(beam_size);
        for (rank, &(parent, tok, score)) in cands.iter().enumerate() {
            let h = &active[parent];
            if tok == EOS {
                // only EOS candidates that would have made the beam retire
                if rank >= beam_size {
                    continue;
                }
                let mut ids = h.ids.clone();
                ids.push(EOS);
                finished.push((ids, score));
            } else if next.len() < beam_size {
                let mut ids = h.ids.clone();
                ids.push(tok);
                next.push(Hyp {
                    state: model.advance(&h.state, tok),
                    ids,
                    score,
                });
            }
        }
        active = next;
        if active.is_empty() {
            break;
        }
        // log-probs are <= 0, so no active hypothesis can overtake a full
        // set of better finished ones
        if finished.len() >= beam_size {
            finished.sort_by(|a, b| rank(a.1, &a.0, b.1, &b.0));
            finished.truncate(beam_size);
            let best_active = active.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if finished[beam_size - 1].1 >= best_active {
                break;
            }
        }
    }
    finished.sort_by(|a, b| rank(a.1, &a.0, b.1, &b.0));
    finished.truncate(beam_size);
    finished
        .into_iter()
        .map(|(ids, score)| ScoredSequence {
            seq: Sequence::new(ids).expect("finished hypotheses end with EOS"),
            log_score: score,
        })
        .collect()
}

/// The nucleus of a next-token distribution: tokens sorted by descending
/// probability (lowest id first on ties), cut at the smallest prefix whose
/// cumulative mass reaches `p`. The top token is always included. Returns
/// `(token, probability)` pairs.
pub fn nucleus(log_probs: &[f64], p: f64) -> Vec<(TokenId, f64)> {
    let mut toks: Vec<(TokenId, f64)> = log_probs
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(t, l)| (t as TokenId, l.exp()))
        .collect();
    toks.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if p >= 1.0 {
        return toks;
    }
    let mut cum = 0.0;
    let mut keep = toks.len();
    for (i, &(_, q)) in toks.iter().enumerate() {
        cum += q;
        // small slack so a boundary reached up to rounding still counts
        if cum >= p - 1e-12 {
            keep = i + 1;
            break;
        }
    }
    toks.truncate(keep.max(1));
    toks
}

fn draw<R: Rng + ?Sized>(nucleus: &[(TokenId, f64)], rng: &mut R) -> TokenId {
    let mass: f64 = nucleus.iter().map(|&(_, q)| q).sum();
    let mut u = rng.gen::<f64>() * mass;
    for &(tok, q) in nucleus {
        if u < q {
            return tok;
        }
        u -= q;
    }
    nucleus.last().expect("nucleus is never empty").0
}

/// One top-p sample. `log_score` is the untruncated model log-probability.
pub fn sample_one<M: SeqModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    input: &[TokenId],
    p: f64,
    rng: &mut R,
) -> ScoredSequence {
    sample_scored(model, input, p, rng).0
}

/// One top-p sample together with its log-density under the sampler, as
/// [`truncated_log_prob`] would compute it.
pub fn sample_scored<M: SeqModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    input: &[TokenId],
    p: f64,
    rng: &mut R,
) -> (ScoredSequence, f64) {
    let mut state = model.start(input);
    let mut ids = Vec::new();
    let mut score = 0.0;
    let mut trunc = 0.0;
    for pos in 0..model.max_len() {
        let lp = step_log_probs(model, &state, pos);
        let nuc = nucleus(&lp, p);
        let tok = draw(&nuc, rng);
        ids.push(tok);
        score += lp[tok as usize];
        trunc += if p >= 1.0 {
            lp[tok as usize]
        } else {
            let mass: f64 = nuc.iter().map(|&(_, q)| q).sum();
            (lp[tok as usize].exp() / mass).ln()
        };
        if tok == EOS {
            break;
        }
        state = model.advance(&state, tok);
    }
    let seq = ScoredSequence {
        seq: Sequence::new(ids).expect("sample ends with EOS"),
        log_score: score,
    };
    (seq, trunc)
}

/// `n` independent top-p samples drawn with `rng`.
pub fn top_p_sample_with<M: SeqModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    input: &[TokenId],
    p: f64,
    n: usize,
    rng: &mut R,
) -> Vec<ScoredSequence> {
    (0..n).map(|_| sample_one(model, input, p, rng)).collect()
}

/// `cfg.n_samples` top-p samples from a generator seeded with `cfg.seed`.
pub fn top_p_sample<M: SeqModel + ?Sized>(model: &M, input: &[TokenId], cfg: &SamplerConfig) -> Vec<ScoredSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    top_p_sample_with(model, input, cfg.p, cfg.n_samples, &mut rng)
}

/// Exact log-density of `seq` under [`top_p_sample`] with threshold `p`:
/// the sum of log renormalized in-nucleus probabilities, or `-inf` if some
/// token falls outside its step's nucleus.
pub fn truncated_log_prob<M: SeqModel + ?Sized>(model: &M, input: &[TokenId], seq: &Sequence, p: f64) -> f64 {
    if check_len(seq, model.max_len()).is_err() {
        return f64::NEG_INFINITY;
    }
    let mut state = model.start(input);
    let mut total = 0.0;
    let ids = seq.ids();
    for (pos, &tok) in ids.iter().enumerate() {
        let lp = step_log_probs(model, &state, pos);
        if p >= 1.0 {
            total += lp[tok as usize];
        } else {
            let nuc = nucleus(&lp, p);
            let Some(&(_, q)) = nuc.iter().find(|&&(t, _)| t == tok) else {
                return f64::NEG_INFINITY;
            };
            let mass: f64 = nuc.iter().map(|&(_, q)| q).sum();
            total += (q / mass).ln();
        }
        if pos + 1 < ids.len() {
            state = model.advance(&state, tok);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{enumerate_support, log_prob, TableModel, TinyConfig, TinySeq2Seq};
    use crate::vocab::Vocab;

    fn vocab(n: usize) -> Arc<Vocab> {
        Arc::new(Vocab::from_tokens((0..n).map(|i| format!("w{i}"))))
    }

    #[test]
    fn greedy_follows_point_mass_chain() {
        let m = TableModel::point_mass(vocab(4), 6, false, &[8, 6, 9]);
        let out = greedy(&m, &[EOS]);
        assert_eq!(out.seq.ids(), &[8, 6, 9, EOS]);
    }

    #[test]
    fn greedy_ties_go_to_lowest_id() {
        // all emittable tokens tie; EOS (id 2) is the lowest emittable id
        let m = TinySeq2Seq::zeros(
            vocab(3),
            TinyConfig {
                dim: 4,
                max_len: 5,
                allow_no_answer: false,
            },
        );
        let out = greedy(&m, &[6, EOS]);
        assert_eq!(out.seq.ids(), &[EOS]);
        assert!((out.log_score - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn greedy_forced_eos_when_eos_is_never_best() {
        let v = vocab(2);
        let mut z = vec![0.0; v.len()];
        z[EOS as usize] = -5.0;
        z[7] = 1.0;
        let m = TableModel::fixed(v, 4, false, z);
        assert_eq!(greedy(&m, &[EOS]).seq.ids(), &[7, 7, 7, EOS]);
    }

    #[test]
    fn greedy_matches_beam_one() {
        for seed in 0..20 {
            let m = TinySeq2Seq::random(
                vocab(4),
                TinyConfig {
                    dim: 5,
                    max_len: 5,
                    allow_no_answer: false,
                },
                seed,
            );
            let g = greedy(&m, &[6, 7, EOS]);
            let b = beam(&m, &[6, 7, EOS], 1);
            assert_eq!(g.seq, b[0].seq);
            assert!((g.log_score - b[0].log_score).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_scores_are_log_probs_and_sorted() {
        let m = TinySeq2Seq::random(
            vocab(4),
            TinyConfig {
                dim: 5,
                max_len: 5,
                allow_no_answer: false,
            },
            7,
        );
        let input = [6, 9, EOS];
        let out = beam(&m, &input, 8);
        assert!(out.len() <= 8 && !out.is_empty());
        for w in out.windows(2) {
            assert!(w[0].log_score >= w[1].log_score);
        }
        for s in &out {
            assert!((s.log_score - log_prob(&m, &input, &s.seq).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn beam_point_mass_single_hypothesis() {
        let m = TableModel::point_mass(vocab(4), 6, false, &[9, 8]);
        let out = beam(&m, &[EOS], 4);
        assert_eq!(out[0].seq, greedy(&m, &[EOS]).seq);
        assert!(out[0].log_score > -1e-20);
        assert!(out.iter().skip(1).all(|s| s.log_score < -50.0));
    }

    #[test]
    fn beam_covers_space_exactly() {
        let m = TinySeq2Seq::random(
            vocab(3),
            TinyConfig {
                dim: 5,
                max_len: 3,
                allow_no_answer: false,
            },
            1,
        );
        let space = enumerate_support(&m).unwrap();
        let input = [7, EOS];
        let best = space
            .iter()
            .map(|s| (log_prob(&m, &input, s).unwrap(), s))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        let out = beam(&m, &input, space.len());
        assert_eq!(&out[0].seq, best.1);
    }

    #[test]
    fn nucleus_cuts_at_threshold() {
        let lp: Vec<f64> = [0.5, 0.3, 0.15, 0.05].iter().map(|q: &f64| q.ln()).collect();
        let nuc = nucleus(&lp, 0.95);
        assert_eq!(nuc.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(nucleus(&lp, 0.1).len(), 1);
        assert_eq!(nucleus(&lp, 1.0).len(), 4);
    }

    #[test]
    fn nucleus_ties_prefer_low_ids() {
        let lp = vec![(0.25f64).ln(); 4];
        let nuc = nucleus(&lp, 0.5);
        assert_eq!(nuc.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn point_mass_samples_identical() {
        let m = TableModel::point_mass(vocab(3), 5, false, &[7, 8]);
        let cfg = SamplerConfig {
            p: 0.95,
            n_samples: 50,
            beam_size: 1,
            seed: 3,
        };
        let out = top_p_sample(&m, &[EOS], &cfg);
        assert_eq!(out.len(), 50);
        assert!(out.iter().all(|s| s.seq.ids() == [7, 8, EOS]));
    }

    #[test]
    fn truncated_density_examples() {
        let m = TinySeq2Seq::random(
            vocab(3),
            TinyConfig {
                dim: 4,
                max_len: 4,
                allow_no_answer: false,
            },
            5,
        );
        let input = [6, EOS];
        let seq = Sequence::from_content(&[7, 6]).unwrap();
        let full = log_prob(&m, &input, &seq).unwrap();
        assert_eq!(truncated_log_prob(&m, &input, &seq, 1.0), full);

        // a token that is never in a tiny nucleus
        let v = vocab(3);
        let mut z = vec![0.0; v.len()];
        z[6] = 10.0;
        let peaked = TableModel::fixed(v, 4, false, z);
        let bad = Sequence::from_content(&[7]).unwrap();
        assert_eq!(truncated_log_prob(&peaked, &input, &bad, 0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn sampler_config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig {
            p: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SamplerConfig {
            p: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SamplerConfig {
            n_samples: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SamplerConfig {
            beam_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
