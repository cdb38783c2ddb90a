//! The seeded zero-shot toy run: generate a world and a QA corpus, pretrain,
//! then train and evaluate each objective from the same pretrained models.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datakit::{
    gen_qa_corpus, gen_toy_world, pretrain_split, synthesize_q_pretrain, FoldSpec, QaCorpusConfig, ToyWorldConfig,
};
use crate::error::{Error, Result};
use crate::metrics::TEMetrics;
use crate::objectives::ObjectiveKind;
use crate::pipeline::{AnswerSource, InferConfig};
use crate::runner::{
    build_vocab, evaluate, pretrain, question_perplexity, train, DevPoint, EvalMode, ModelSet, PretrainConfig,
    PretrainReport, RunConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExperimentConfig {
    pub world: ToyWorldConfig,
    pub qa: QaCorpusConfig,
    /// Fraction of the synthesized pretraining corpus held out.
    pub held_out: f64,
    pub pretrain: PretrainConfig,
    /// `objective` is overridden per entry of `kinds`.
    pub run: RunConfig,
    pub kinds: Vec<ObjectiveKind>,
}

impl Default for ToyExperimentConfig {
    fn default() -> Self {
        ToyExperimentConfig {
            world: ToyWorldConfig::default(),
            qa: QaCorpusConfig::default(),
            held_out: 0.1,
            pretrain: PretrainConfig::default(),
            run: RunConfig {
                lr: 0.3,
                lr_q: Some(1.0),
                clip_norm: Some(1.0),
                eval_every: 25,
                epochs: 1,
                ..RunConfig::default()
            },
            kinds: vec![
                ObjectiveKind::GoldQ,
                ObjectiveKind::PseudoQ,
                ObjectiveKind::OffmmlG,
                ObjectiveKind::MmlMml,
            ],
        }
    }
}

impl ToyExperimentConfig {
    /// Every generator and trainer seeded from `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.world.seed = seed;
        c.qa.seed = seed;
        c.pretrain.seed = seed;
        c.run.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineScore {
    pub te: TEMetrics,
    pub zre_macro_f1: f64,
    /// Perplexity under the frozen search model of the decoded questions.
    pub question_ppl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindResult {
    pub kind: ObjectiveKind,
    pub test: PipelineScore,
    /// Question perplexity of the generator after the last step.
    pub last_question_ppl: f64,
    pub best: DevPoint,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExperimentReport {
    pub seed: u64,
    pub pretrain: PretrainReport,
    pub base: PipelineScore,
    pub results: Vec<KindResult>,
    pub seconds: f64,
}

impl ToyExperimentReport {
    pub fn get(&self, kind: ObjectiveKind) -> Option<&KindResult> {
        self.results.iter().find(|r| r.kind == kind)
    }
}

fn score(
    pq: &crate::TinySeq2Seq,
    pa: &crate::TinySeq2Seq,
    models: &ModelSet,
    fold: &FoldSpec,
    infer: &InferConfig,
) -> Result<PipelineScore> {
    let r = evaluate(pq, pa, &fold.test, infer, EvalMode::Both)?;
    let (Some(te), Some(zre)) = (r.te, r.zre) else {
        return Err(Error::Config("evaluation returned no scores".into()));
    };
    Ok(PipelineScore {
        te,
        zre_macro_f1: zre.macro_f1,
        question_ppl: question_perplexity(pq, &models.search, &fold.test, infer.beam_size)?,
    })
}

/// World and pretrained models shared by every objective of one seed.
pub fn toy_setup(cfg: &ToyExperimentConfig) -> Result<(FoldSpec, ModelSet, PretrainReport)> {
    let fold = gen_toy_world(&cfg.world)?;
    let corpus = synthesize_q_pretrain(&gen_qa_corpus(&cfg.qa)?, cfg.qa.seed);
    let (ptrain, pheld) = pretrain_split(&corpus, cfg.held_out, cfg.pretrain.seed);
    let vocab = Arc::new(build_vocab(fold.all().chain(&corpus)));
    let (models, report) = pretrain(vocab, &ptrain, &pheld, &cfg.pretrain)?;
    Ok((fold, models, report))
}

pub fn toy_experiment(cfg: &ToyExperimentConfig) -> Result<ToyExperimentReport> {
    let t0 = Instant::now();
    let (fold, models, pretrain_report) = toy_setup(cfg)?;
    let base_infer = InferConfig {
        beam_size: cfg.run.sampler.beam_size,
        source: AnswerSource::Generated,
        marginal_k: 1,
    };
    let base = score(&models.pq, &models.pa, &models, &fold, &base_infer)?;
    let mut results = Vec::with_capacity(cfg.kinds.len());
    for &kind in &cfg.kinds {
        let t = Instant::now();
        let run = RunConfig {
            objective: kind,
            ..cfg.run
        };
        let out = train(&run, &models, &fold.train, &fold.dev, |_| {})?;
        let test = score(&out.pq, &out.pa, &models, &fold, &run.infer())?;
        log::info!("seed {} {kind}: test TE F1 {:.3}", cfg.run.seed, test.te.f1);
        results.push(KindResult {
            kind,
            test,
            last_question_ppl: question_perplexity(&out.last_pq, &models.search, &fold.test, run.sampler.beam_size)?,
            best: out.best,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(ToyExperimentReport {
        seed: cfg.run.seed,
        pretrain: pretrain_report,
        base,
        results,
        seconds: t0.elapsed().as_secs_f64(),
    })
}
