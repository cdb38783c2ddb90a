//! Training objectives over a latent question.
//!
//! The marginal likelihood `log sum_q P_Q(q | x) P_A(e2 | q, x)` is optimized
//! through a posterior weight `phi(q)` over a finite set of questions:
//!
//! * on-policy, `phi ∝ P_Q · P_A` over samples from the question generator;
//! * off-policy, `phi ∝ P_Q · P_A / S` over samples from a frozen search
//!   model `S` that also sees the tail.
//!
//! The question and answer gradients are `phi`-weighted sums of
//! `∇ log P_Q(q)` and `∇ log P_A(e2 | q)`. The hard-EM alternative for the
//! answer module trains on the top beam question only. All gradients are
//! ascent directions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::{beam, sample_scored, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::{clip_norm, log_prob, sgd_step, DiffModel, ParamVector, SeqModel};
use crate::pipeline::{answer_target, prompt_ids, AnswerFrame, PromptKind, REInstance};
use crate::vocab::{Sequence, TokenId, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSample {
    pub seq: Sequence,
    /// Log-density of the distribution the sample was drawn from.
    pub log_s: f64,
    pub log_pq: f64,
    /// `log P_A(e2 | answer input with this question)`.
    pub log_pa: f64,
    pub weight_phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    OnPolicy,
    OffPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectiveKind {
    GoldQ,
    PseudoQ,
    MmlMml,
    MmlG,
    OffmmlOffmml,
    OffmmlG,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::GoldQ,
        ObjectiveKind::PseudoQ,
        ObjectiveKind::MmlMml,
        ObjectiveKind::MmlG,
        ObjectiveKind::OffmmlOffmml,
        ObjectiveKind::OffmmlG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::GoldQ => "GOLD_Q",
            ObjectiveKind::PseudoQ => "PSEUDO_Q",
            ObjectiveKind::MmlMml => "MML_MML",
            ObjectiveKind::MmlG => "MML_G",
            ObjectiveKind::OffmmlOffmml => "OFFMML_OFFMML",
            ObjectiveKind::OffmmlG => "OFFMML_G",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL.into_iter().find(|k| k.name() == norm)
    }

    /// Whether the question generator is trained.
    pub fn trains_question(self) -> bool {
        !matches!(self, ObjectiveKind::GoldQ | ObjectiveKind::PseudoQ)
    }

    /// Whether questions are drawn from the frozen search model.
    pub fn off_policy(self) -> bool {
        matches!(self, ObjectiveKind::OffmmlOffmml | ObjectiveKind::OffmmlG)
    }

    /// Whether the answer module trains on the top beam question.
    pub fn hard_answer(self) -> bool {
        matches!(self, ObjectiveKind::MmlG | ObjectiveKind::OffmmlG)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub sampler: SamplerConfig,
    /// Leave the question generator untouched on negative instances.
    #[serde(default)]
    pub skip_neg_q: bool,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind) -> Self {
        ObjectiveSpec {
            kind,
            sampler: SamplerConfig::default(),
            skip_neg_q: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    /// Absent for the gold- and pseudo-question objectives.
    pub grad_q: Option<ParamVector>,
    pub grad_a: ParamVector,
}

/// Token-level views of one instance, built once per instance.
#[derive(Debug, Clone)]
pub struct Episode {
    pub question_input: Vec<TokenId>,
    pub search_input: Vec<TokenId>,
    pub frame: AnswerFrame,
    pub target: Sequence,
    pub pseudo_input: Vec<TokenId>,
    pub gold_input: Option<Vec<TokenId>>,
    pub is_negative: bool,
    pub head: String,
}

impl Episode {
    pub fn new(vocab: &Vocab, inst: &REInstance) -> Self {
        let ids = |kind, q: Option<&str>| prompt_ids(vocab, kind, inst, q).expect("question presence matches kind");
        Episode {
            question_input: ids(PromptKind::QuestionGen, None),
            search_input: ids(PromptKind::Search, None),
            frame: AnswerFrame::new(vocab, inst),
            target: answer_target(vocab, inst),
            pseudo_input: ids(PromptKind::AnswerPseudo, None),
            gold_input: inst
                .gold_question
                .as_deref()
                .map(|q| ids(PromptKind::AnswerGold, Some(q))),
            is_negative: inst.is_negative,
            head: inst.head.clone(),
        }
    }
}

/// Fills `weight_phi` by self-normalizing the chosen log-weights with a
/// max shift.
pub fn compute_phi(samples: &mut [QuestionSample], mode: PhiMode) -> Result<()> {
    let logw: Vec<f64> = samples
        .iter()
        .map(|s| match mode {
            PhiMode::OnPolicy => s.log_pq + s.log_pa,
            PhiMode::OffPolicy => s.log_pq + s.log_pa - s.log_s,
        })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    for (s, w) in samples.iter_mut().zip(w) {
        s.weight_phi = w / z;
    }
    Ok(())
}

/// Effective sample size `1 / sum(w^2)`.
pub fn effective_sample_size(samples: &[QuestionSample]) -> f64 {
    let s2: f64 = samples.iter().map(|s| s.weight_phi * s.weight_phi).sum();
    if s2 > 0.0 {
        1.0 / s2
    } else {
        0.0
    }
}

/// Scores given questions under both modules, with `log_s` set from `search`
/// when given (on `search_input`), else from `pq`. Weights are left at 0.
pub fn score_questions<M: SeqModel>(
    pq: &M,
    pa: &M,
    search: Option<&M>,
    ep: &Episode,
    questions: &[Sequence],
) -> Result<Vec<QuestionSample>> {
    questions
        .iter()
        .map(|q| {
            let log_pq = log_prob(pq, &ep.question_input, q)?;
            let log_s = match search {
                Some(s) => log_prob(s, &ep.search_input, q)?,
                None => log_pq,
            };
            Ok(QuestionSample {
                seq: q.clone(),
                log_s,
                log_pq,
                log_pa: log_prob(pa, &ep.frame.input(q), &ep.target)?,
                weight_phi: 0.0,
            })
        })
        .collect()
}

/// Draws top-p questions from `pq` (on-policy) or `search` (off-policy) and
/// scores them. `log_s` is the sampler's truncated density.
pub fn draw_samples<M: SeqModel, R: Rng + ?Sized>(
    pq: &M,
    pa: &M,
    search: Option<&M>,
    ep: &Episode,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<QuestionSample>> {
    let (model, input) = match search {
        Some(s) => (s, &ep.search_input),
        None => (pq, &ep.question_input),
    };
    (0..sampler.n_samples)
        .map(|_| {
            let (s, log_s) = sample_scored(model, input, sampler.p, rng);
            let log_pq = match search {
                Some(_) => log_prob(pq, &ep.question_input, &s.seq)?,
                None => s.log_score,
            };
            let log_pa = log_prob(pa, &ep.frame.input(&s.seq), &ep.target)?;
            Ok(QuestionSample {
                seq: s.seq,
                log_s,
                log_pq,
                log_pa,
                weight_phi: 0.0,
            })
        })
        .collect()
}

fn check_finite(g: ParamVector) -> Result<ParamVector> {
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::NonFiniteGradient)
    }
}

/// `sum_i phi_i ∇ log P_Q(q_i)`.
pub fn grad_q_mml<M: DiffModel>(pq: &M, ep: &Episode, samples: &[QuestionSample]) -> Result<ParamVector> {
    let mut g = ParamVector::zeros(pq.params().len());
    for s in samples.iter().filter(|s| s.weight_phi != 0.0) {
        pq.accumulate_grad(&ep.question_input, &s.seq, s.weight_phi, &mut g)?;
    }
    check_finite(g)
}

/// `sum_i phi_i ∇ log P_A(e2 | q_i)`.
pub fn grad_a_mml<M: DiffModel>(pa: &M, ep: &Episode, samples: &[QuestionSample]) -> Result<ParamVector> {
    let mut g = ParamVector::zeros(pa.params().len());
    for s in samples.iter().filter(|s| s.weight_phi != 0.0) {
        pa.accumulate_grad(&ep.frame.input(&s.seq), &ep.target, s.weight_phi, &mut g)?;
    }
    check_finite(g)
}

/// `∇ log P_A(e2 | q̂)` for the top beam question `q̂` of `pq`. Also returns
/// `q̂` and `log P_A(e2 | q̂)`.
pub fn grad_a_g<Q: SeqModel, A: DiffModel>(
    pq: &Q,
    pa: &A,
    ep: &Episode,
    beam_size: usize,
) -> Result<(ParamVector, Sequence, f64)> {
    let q = beam(pq, &ep.question_input, beam_size)
        .into_iter()
        .next()
        .map(|s| s.seq)
        .unwrap_or_else(Sequence::eos);
    let mut g = ParamVector::zeros(pa.params().len());
    let lp = pa.accumulate_grad(&ep.frame.input(&q), &ep.target, 1.0, &mut g)?;
    Ok((check_finite(g)?, q, lp))
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log sum_q P_Q(q) P_A(e2 | q)` over `space`.
pub fn exact_marginal<M: SeqModel>(pq: &M, pa: &M, ep: &Episode, space: &[Sequence]) -> Result<f64> {
    let terms = space
        .iter()
        .map(|q| Ok(log_prob(pq, &ep.question_input, q)? + log_prob(pa, &ep.frame.input(q), &ep.target)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_sum_exp(terms.into_iter()))
}

/// The exact posterior over `space`: on-policy weights over an enumeration.
pub fn exact_phi<M: SeqModel>(pq: &M, pa: &M, ep: &Episode, space: &[Sequence]) -> Result<Vec<QuestionSample>> {
    let mut samples = score_questions(pq, pa, None, ep, space)?;
    compute_phi(&mut samples, PhiMode::OnPolicy)?;
    Ok(samples)
}

/// One JSON-lines training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub objective: ObjectiveKind,
    #[serde(rename = "mean_log_PA")]
    pub mean_log_pa: f64,
    pub ess: f64,
    pub skipped_instances: usize,
}

struct InstanceGrad {
    grad_q: Option<ParamVector>,
    grad_a: ParamVector,
    log_pa: f64,
    ess: f64,
}

fn instance_grad<M: DiffModel, R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    pq: &M,
    pa: &M,
    search: Option<&M>,
    ep: &Episode,
    rng: &mut R,
) -> Result<InstanceGrad> {
    let kind = spec.kind;
    if !kind.trains_question() {
        let input = match kind {
            ObjectiveKind::GoldQ => ep
                .gold_input
                .as_ref()
                .ok_or_else(|| Error::MissingGoldQuestion { head: ep.head.clone() })?,
            _ => &ep.pseudo_input,
        };
        let mut g = ParamVector::zeros(pa.params().len());
        let lp = pa.accumulate_grad(input, &ep.target, 1.0, &mut g)?;
        return Ok(InstanceGrad {
            grad_q: None,
            grad_a: check_finite(g)?,
            log_pa: lp,
            ess: 1.0,
        });
    }

    let (proposal, mode) = if kind.off_policy() {
        (
            Some(search.ok_or_else(|| Error::Config(format!("{kind} needs a search model")))?),
            PhiMode::OffPolicy,
        )
    } else {
        (None, PhiMode::OnPolicy)
    };
    let mut samples = draw_samples(pq, pa, proposal, ep, &spec.sampler, rng)?;
    compute_phi(&mut samples, mode)?;
    let grad_q = if spec.skip_neg_q && ep.is_negative {
        ParamVector::zeros(pq.params().len())
    } else {
        grad_q_mml(pq, ep, &samples)?
    };
    let (grad_a, log_pa) = if kind.hard_answer() {
        let (g, _, lp) = grad_a_g(pq, pa, ep, spec.sampler.beam_size)?;
        (g, lp)
    } else {
        let lp = samples.iter().map(|s| s.weight_phi * s.log_pa).sum();
        (grad_a_mml(pa, ep, &samples)?, lp)
    };
    Ok(InstanceGrad {
        grad_q: Some(grad_q),
        grad_a,
        ess: effective_sample_size(&samples),
        log_pa,
    })
}

/// Batch-mean gradients for `spec`. Instances with a degenerate posterior
/// are skipped; the second value counts them.
pub fn batch_gradients<M: DiffModel, R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    pq: &M,
    pa: &M,
    search: Option<&M>,
    batch: &[Episode],
    rng: &mut R,
) -> Result<(GradPair, StepStats)> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let mut gq = spec
        .kind
        .trains_question()
        .then(|| ParamVector::zeros(pq.params().len()));
    let mut ga = ParamVector::zeros(pa.params().len());
    let (mut used, mut skipped) = (0usize, 0usize);
    let (mut sum_lp, mut sum_ess) = (0.0, 0.0);
    for ep in batch {
        match instance_grad(spec, pq, pa, search, ep, rng) {
            Ok(g) => {
                if let (Some(acc), Some(q)) = (gq.as_mut(), g.grad_q.as_ref()) {
                    acc.axpy(1.0, q)?;
                }
                ga.axpy(1.0, &g.grad_a)?;
                sum_lp += g.log_pa;
                sum_ess += g.ess;
                used += 1;
            }
            Err(Error::DegeneratePosterior) => {
                log::warn!("skipping instance with degenerate posterior");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let n = used.max(1) as f64;
    if let Some(g) = gq.as_mut() {
        g.scale(1.0 / n);
    }
    ga.scale(1.0 / n);
    let stats = StepStats {
        step: 0,
        objective: spec.kind,
        mean_log_pa: if used > 0 { sum_lp / n } else { f64::NEG_INFINITY },
        ess: if used > 0 { sum_ess / n } else { 0.0 },
        skipped_instances: skipped,
    };
    Ok((GradPair { grad_q: gq, grad_a: ga }, stats))
}

/// One ascent step on both modules. `search` is only read.
pub fn train_step<M: DiffModel, R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    pq: &M,
    pa: &M,
    search: Option<&M>,
    batch: &[Episode],
    lr: f64,
    rng: &mut R,
) -> Result<(M, M, StepStats)> {
    train_step_with(spec, pq, pa, search, batch, &StepSize::uniform(lr), rng)
}

/// Per-model learning rates with optional gradient-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSize {
    pub lr_q: f64,
    pub lr_a: f64,
    pub clip_norm: Option<f64>,
}

impl StepSize {
    pub fn uniform(lr: f64) -> Self {
        StepSize {
            lr_q: lr,
            lr_a: lr,
            clip_norm: None,
        }
    }

    fn apply<M: DiffModel>(&self, model: &M, grad: &ParamVector, lr: f64) -> Result<M> {
        let mut g = grad.clone();
        if let Some(c) = self.clip_norm {
            clip_norm(&mut g, c);
        }
        model.with_params(sgd_step(model.params(), &g, lr)?)
    }
}

pub fn train_step_with<M: DiffModel, R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    pq: &M,
    pa: &M,
    search: Option<&M>,
    batch: &[Episode],
    step: &StepSize,
    rng: &mut R,
) -> Result<(M, M, StepStats)> {
    let (grads, stats) = batch_gradients(spec, pq, pa, search, batch, rng)?;
    let new_q = match &grads.grad_q {
        Some(g) => step.apply(pq, g, step.lr_q)?,
        None => pq.with_params(pq.params().clone())?,
    };
    let new_a = step.apply(pa, &grads.grad_a, step.lr_a)?;
    Ok((new_q, new_a, stats))
}
