//! End-to-end runs: pretraining, objective training with dev-based model
//! selection, and evaluation.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::{beam, SamplerConfig};
use crate::error::{Error, Result};
use crate::metrics::{perplexity, te_score, zre_score, EvalReport, TEMetrics, ZREMetrics};
use crate::model::{clip_norm, log_prob, sgd_step, DiffModel, ParamVector, TinyConfig, TinySeq2Seq};
use crate::objectives::{train_step_with, Episode, ObjectiveKind, ObjectiveSpec, StepSize, StepStats};
use crate::pipeline::{
    answer_target, classify_index, format_prompt, predict_tail, prompt_ids, AnswerSource, Candidate, InferConfig,
    PromptKind, REInstance,
};
use crate::vocab::{Sequence, TokenId, Vocab, NO_ANSWER_SURFACE, SEP_SURFACE};

/// Vocabulary over every prompt any instance can produce.
pub fn build_vocab<'a>(insts: impl IntoIterator<Item = &'a REInstance>) -> Vocab {
    let mut v = Vocab::new();
    for w in [
        "answer:",
        "context:",
        "relation:",
        "question:",
        ";",
        SEP_SURFACE,
        NO_ANSWER_SURFACE,
    ] {
        v.add(w);
    }
    for inst in insts {
        let q = inst.gold_question.as_deref().unwrap_or("");
        for text in [
            format_prompt(PromptKind::Search, inst, None).expect("no question"),
            format_prompt(PromptKind::AnswerGenerated, inst, Some(q)).expect("question given"),
        ] {
            for tok in text.split_whitespace() {
                v.add(tok);
            }
        }
        for a in &inst.answers {
            for tok in a.split_whitespace() {
                v.add(tok);
            }
        }
    }
    v
}

pub type Pair = (Vec<TokenId>, Sequence);

/// Mean per-example log-likelihood.
pub fn mean_log_lik<M: DiffModel>(model: &M, pairs: &[Pair]) -> Result<f64> {
    let mut s = 0.0;
    for (x, y) in pairs {
        s += log_prob(model, x, y)?;
    }
    Ok(s / pairs.len().max(1) as f64)
}

/// Mini-batch gradient ascent on `sum log p(y | x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Minibatch gradients are rescaled to at most this norm.
    pub clip_norm: f64,
    pub seed: u64,
}

/// Minibatch SGD ascent on the mean log-likelihood of `pairs`.
pub fn supervised_fit<M: DiffModel>(mut model: M, pairs: &[Pair], cfg: &FitConfig) -> Result<M> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut g = ParamVector::zeros(model.params().len());
            for &i in chunk {
                let (x, y) = &pairs[i];
                model.accumulate_grad(x, y, 1.0 / chunk.len() as f64, &mut g)?;
            }
            clip_norm(&mut g, cfg.clip_norm);
            model = model.with_params(sgd_step(model.params(), &g, cfg.lr)?)?;
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub dim: usize,
    pub q_max_len: usize,
    pub a_max_len: usize,
    pub lr_question: f64,
    pub lr_answer: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: 32,
            q_max_len: 6,
            a_max_len: 4,
            lr_question: 0.2,
            lr_answer: 1.0,
            epochs: 40,
            batch_size: 16,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    fn fit(&self, lr: f64, seed_offset: u64) -> FitConfig {
        FitConfig {
            lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            seed: self.seed.wrapping_add(seed_offset),
        }
    }

    pub fn question_config(&self) -> TinyConfig {
        TinyConfig {
            dim: self.dim,
            max_len: self.q_max_len,
            allow_no_answer: false,
        }
    }

    pub fn answer_config(&self) -> TinyConfig {
        TinyConfig {
            dim: self.dim,
            max_len: self.a_max_len,
            allow_no_answer: true,
        }
    }
}

/// Question generator pairs: each instance with a gold question yields a
/// `QUESTION_GEN` and a `SEARCH` example.
pub fn question_pairs(vocab: &Vocab, insts: &[REInstance]) -> Vec<Pair> {
    let mut out = Vec::new();
    for inst in insts {
        let Some(q) = &inst.gold_question else { continue };
        let target = vocab.tokenize(q);
        for kind in [PromptKind::QuestionGen, PromptKind::Search] {
            out.push((
                prompt_ids(vocab, kind, inst, None).expect("no question"),
                target.clone(),
            ));
        }
    }
    out
}

/// Answer generator pairs: `ANSWER_GENERATED` and `ANSWER_GOLD` prompts with
/// the gold question.
pub fn answer_pairs(vocab: &Vocab, insts: &[REInstance]) -> Vec<Pair> {
    let mut out = Vec::new();
    for inst in insts {
        let Some(q) = &inst.gold_question else { continue };
        let target = answer_target(vocab, inst);
        for kind in [PromptKind::AnswerGenerated, PromptKind::AnswerGold] {
            out.push((
                prompt_ids(vocab, kind, inst, Some(q)).expect("question given"),
                target.clone(),
            ));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ModelSet {
    pub pq: TinySeq2Seq,
    pub pa: TinySeq2Seq,
    /// Frozen copy of the pretrained question generator.
    pub search: TinySeq2Seq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub answer_held_out_init: f64,
    pub answer_held_out_trained: f64,
    pub question_held_out_init: f64,
    pub question_held_out_trained: f64,
}

/// Pretrains both generators on `train` (instances with gold questions) and
/// copies the question generator into the search model.
pub fn pretrain(
    vocab: Arc<Vocab>,
    train: &[REInstance],
    held_out: &[REInstance],
    cfg: &PretrainConfig,
) -> Result<(ModelSet, PretrainReport)> {
    if train.iter().all(|i| i.gold_question.is_none()) {
        return Err(Error::Config("pretraining corpus has no gold questions".into()));
    }
    let pq0 = TinySeq2Seq::random(Arc::clone(&vocab), cfg.question_config(), cfg.seed);
    let pa0 = TinySeq2Seq::random(Arc::clone(&vocab), cfg.answer_config(), cfg.seed.wrapping_add(1));
    let (qp, ap) = (question_pairs(&vocab, train), answer_pairs(&vocab, train));
    let (qh, ah) = (question_pairs(&vocab, held_out), answer_pairs(&vocab, held_out));
    let pq = supervised_fit(pq0.clone(), &qp, &cfg.fit(cfg.lr_question, 2))?;
    let pa = supervised_fit(pa0.clone(), &ap, &cfg.fit(cfg.lr_answer, 3))?;
    let report = PretrainReport {
        answer_held_out_init: mean_log_lik(&pa0, &ah)?,
        answer_held_out_trained: mean_log_lik(&pa, &ah)?,
        question_held_out_init: mean_log_lik(&pq0, &qh)?,
        question_held_out_trained: mean_log_lik(&pq, &qh)?,
    };
    let search = pq.clone();
    Ok((ModelSet { pq, pa, search }, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub objective: ObjectiveKind,
    pub lr: f64,
    /// Question-generator rate; `lr` when unset.
    pub lr_q: Option<f64>,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub eval_every: usize,
    pub epochs: usize,
    pub sampler: SamplerConfig,
    pub skip_neg_q: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            objective: ObjectiveKind::OffmmlG,
            lr: 0.0005,
            lr_q: None,
            clip_norm: None,
            batch_size: 16,
            eval_every: 100,
            epochs: 1,
            sampler: SamplerConfig::default(),
            skip_neg_q: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(lr) = self.lr_q.filter(|lr| !(*lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config(format!("lr_q must be positive, got {lr}")));
        }
        if let Some(c) = self.clip_norm.filter(|c| c.is_nan() || *c <= 0.0) {
            return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size, eval_every and epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            kind: self.objective,
            sampler: self.sampler,
            skip_neg_q: self.skip_neg_q,
        }
    }

    pub fn step_size(&self) -> StepSize {
        StepSize {
            lr_q: self.lr_q.unwrap_or(self.lr),
            lr_a: self.lr,
            clip_norm: self.clip_norm,
        }
    }

    pub fn infer(&self) -> InferConfig {
        InferConfig {
            beam_size: self.sampler.beam_size,
            source: source_for(self.objective),
            marginal_k: 1,
        }
    }
}

/// The answer-input source matching how `kind` trains the answer module.
pub fn source_for(kind: ObjectiveKind) -> AnswerSource {
    match kind {
        ObjectiveKind::GoldQ => AnswerSource::Gold,
        ObjectiveKind::PseudoQ => AnswerSource::Pseudo,
        _ => AnswerSource::Generated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevPoint {
    pub step: usize,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Dev-selected question generator.
    pub pq: TinySeq2Seq,
    /// Dev-selected answer generator.
    pub pa: TinySeq2Seq,
    /// Question generator after the last step.
    pub last_pq: TinySeq2Seq,
    pub best: DevPoint,
    pub dev_history: Vec<DevPoint>,
    pub log: Vec<StepStats>,
}

/// Index of the first maximum.
pub fn best_index(f1s: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &f) in f1s.iter().enumerate() {
        if best.is_none_or(|b| f > f1s[b]) {
            best = Some(i);
        }
    }
    best
}

/// Trains with `cfg.objective` for `cfg.epochs` passes over `train`,
/// scoring dev tail-extraction F1 every `eval_every` steps and after the
/// last step, and returns the best-scoring models. `search` is only read.
pub fn train(
    cfg: &RunConfig,
    models: &ModelSet,
    train: &[REInstance],
    dev: &[REInstance],
    mut on_step: impl FnMut(&StepStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Config("train and dev splits must be non-empty".into()));
    }
    if cfg.objective == ObjectiveKind::GoldQ {
        if let Some(i) = train.iter().chain(dev).find(|i| i.gold_question.is_none()) {
            return Err(Error::MissingGoldQuestion { head: i.head.clone() });
        }
    }
    let vocab = models.pa.shared_vocab();
    let episodes: Vec<Episode> = train.iter().map(|i| Episode::new(vocab, i)).collect();
    let spec = cfg.spec();
    let infer = cfg.infer();
    let step_size = cfg.step_size();
    let search = cfg.objective.off_policy().then_some(&models.search);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut pq, mut pa) = (models.pq.clone(), models.pa.clone());
    let mut best: Option<(DevPoint, TinySeq2Seq, TinySeq2Seq)> = None;
    let mut history = Vec::new();
    let mut log = Vec::new();
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    let total_steps = cfg.epochs * episodes.len().div_ceil(cfg.batch_size);

    let mut evaluate = |step: usize, pq: &TinySeq2Seq, pa: &TinySeq2Seq, history: &mut Vec<DevPoint>| -> Result<()> {
        let f1 = evaluate_te(pq, pa, dev, &infer)?.0.f1;
        let point = DevPoint { step, f1 };
        log::info!("step {step}: dev TE F1 {f1:.4}");
        history.push(point);
        if best.as_ref().is_none_or(|(b, _, _)| f1 > b.f1) {
            best = Some((point, pq.clone(), pa.clone()));
        }
        Ok(())
    };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Episode> = chunk.iter().map(|&i| episodes[i].clone()).collect();
            let (q2, a2, mut stats) = train_step_with(&spec, &pq, &pa, search, &batch, &step_size, &mut rng)?;
            pq = q2;
            pa = a2;
            step += 1;
            stats.step = step;
            on_step(&stats);
            log.push(stats);
            if step.is_multiple_of(cfg.eval_every) || step == total_steps {
                evaluate(step, &pq, &pa, &mut history)?;
            }
        }
    }
    let last_pq = pq;
    let (best, pq, pa) = best.expect("at least one evaluation");
    Ok(TrainOutcome {
        pq,
        pa,
        last_pq,
        best,
        dev_history: history,
        log,
    })
}

type Golds = Option<Vec<String>>;

/// Predicted tails, overall and per-relation tail-extraction metrics.
pub fn evaluate_te(
    pq: &TinySeq2Seq,
    pa: &TinySeq2Seq,
    insts: &[REInstance],
    cfg: &InferConfig,
) -> Result<(TEMetrics, BTreeMap<String, TEMetrics>, Vec<String>)> {
    let preds: Vec<String> = insts
        .iter()
        .map(|i| predict_tail(pq, pa, i, cfg).map(|p| p.tail))
        .collect::<Result<_>>()?;
    let golds: Vec<Option<Vec<String>>> = insts.iter().map(REInstance::accepted).collect();
    let overall = te_score(&preds, &golds)?;
    let mut groups: BTreeMap<String, (Vec<String>, Vec<Golds>)> = BTreeMap::new();
    for ((inst, p), g) in insts.iter().zip(&preds).zip(&golds) {
        let e = groups.entry(inst.relation_id.clone()).or_default();
        e.0.push(p.clone());
        e.1.push(g.clone());
    }
    let per = groups
        .into_iter()
        .map(|(k, (p, g))| Ok((k, te_score(&p, &g)?)))
        .collect::<Result<_>>()?;
    Ok((overall, per, preds))
}

/// Relation classification over the positives of `insts`, with the
/// distinct positive relations of `insts` as candidates.
pub fn evaluate_zre(pq: &TinySeq2Seq, pa: &TinySeq2Seq, insts: &[REInstance], cfg: &InferConfig) -> Result<ZREMetrics> {
    let candidates = Candidate::collect(insts);
    let positives: Vec<&REInstance> = insts.iter().filter(|i| !i.is_negative).collect();
    let mut preds = Vec::with_capacity(positives.len());
    for inst in &positives {
        let i = classify_index(pq, pa, inst, &candidates, cfg)?;
        preds.push(candidates[i].relation_id.clone());
    }
    let golds: Vec<&str> = positives.iter().map(|i| i.relation_id.as_str()).collect();
    zre_score(&preds, &golds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Te,
    Zre,
    Both,
}

pub fn evaluate(
    pq: &TinySeq2Seq,
    pa: &TinySeq2Seq,
    insts: &[REInstance],
    cfg: &InferConfig,
    mode: EvalMode,
) -> Result<EvalReport> {
    let (te, per_relation) = if mode != EvalMode::Zre {
        let (te, per, _) = evaluate_te(pq, pa, insts, cfg)?;
        (Some(te), per)
    } else {
        (None, BTreeMap::new())
    };
    let zre = if mode != EvalMode::Te {
        Some(evaluate_zre(pq, pa, insts, cfg)?)
    } else {
        None
    };
    Ok(EvalReport { te, zre, per_relation })
}

/// Perplexity under `search` (on the search prompt) of the top beam
/// questions that `pq` decodes for `insts`.
pub fn question_perplexity(
    pq: &TinySeq2Seq,
    search: &TinySeq2Seq,
    insts: &[REInstance],
    beam_size: usize,
) -> Result<f64> {
    let vocab = search.shared_vocab();
    let mut pairs = Vec::with_capacity(insts.len());
    for inst in insts {
        let q_in = prompt_ids(vocab, PromptKind::QuestionGen, inst, None)?;
        let q = beam(pq, &q_in, beam_size)
            .into_iter()
            .next()
            .map(|s| s.seq)
            .unwrap_or_else(Sequence::eos);
        pairs.push((prompt_ids(vocab, PromptKind::Search, inst, None)?, q));
    }
    perplexity(search, &pairs)
}
