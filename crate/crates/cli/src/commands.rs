use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use lqre_core::datakit::{
    augment_negatives, gen_qa_corpus, gen_toy_world, load_dataset, load_fold, load_jsonl, pretrain_split, save_fold,
    save_jsonl, synthesize_q_pretrain, DataFormat, FoldSpec,
};
use lqre_core::decoding::top_p_sample_with;
use lqre_core::model::{load_model, save_model};
use lqre_core::pipeline::{predict_tail, prompt_ids, AnswerSource};
use lqre_core::runner::{build_vocab, evaluate, pretrain as run_pretrain, train as run_train, ModelSet};
use lqre_core::{Error, PromptKind, REInstance, TinySeq2Seq, Vocab};

use crate::config::{config_error, parse_named, parse_objective, parse_relations, set, FileConfig};
use crate::{EvalArgs, GenDataArgs, InferArgs, InputArgs, PretrainArgs, TrainArgs};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const PQ_FILE: &str = "pq.json";
pub const PA_FILE: &str = "pa.json";
pub const SEARCH_FILE: &str = "search.json";
pub const QA_FILE: &str = "qa_pretrain.jsonl";

/// 2 for configuration errors, 3 for data errors, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(
            Error::Config(_)
            | Error::MissingGoldQuestion { .. }
            | Error::MissingQuestion(_)
            | Error::UnexpectedQuestion(_)
            | Error::NoCandidates,
        ) => 2,
        Some(
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Checkpoint(_)
            | Error::RelationOverlap(_)
            | Error::CannotSynthesizeNegatives
            | Error::LengthMismatch { .. },
        ) => 3,
        _ => 1,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> anyhow::Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.set_seed(a.common.seed);
    if let Some(r) = &a.relations {
        let (tr, dv, te) = parse_relations(r)?;
        cfg.world.n_train_relations = tr;
        cfg.world.n_dev_relations = dv;
        cfg.world.n_test_relations = te;
    }
    set(&mut cfg.world.n_entities, a.entities);
    set(&mut cfg.world.contexts_per_relation, a.contexts);
    set(&mut cfg.world.negative_fraction, a.negative_fraction);
    set(&mut cfg.qa.n_examples, a.qa_examples);
    cfg.qa.n_entities = cfg.world.n_entities;
    cfg.negs |= a.negs;

    let mut fold = gen_toy_world(&cfg.world)?;
    if cfg.negs {
        let train = augment_negatives(&fold.train, cfg.world.seed)?;
        fold = FoldSpec::new(train, fold.dev, fold.test)?;
    }
    let corpus = synthesize_q_pretrain(&gen_qa_corpus(&cfg.qa)?, cfg.qa.seed);
    let count = |s: &[REInstance]| FoldSpec::relation_ids(s).len();
    let manifest = json!({
        "world": cfg.world,
        "qa": cfg.qa,
        "negs": cfg.negs,
        "relations": { "train": count(&fold.train), "dev": count(&fold.dev), "test": count(&fold.test) },
        "instances": { "train": fold.train.len(), "dev": fold.dev.len(), "test": fold.test.len(), "qa_pretrain": corpus.len() },
    });
    save_fold(&a.out, &fold, &manifest)?;
    save_jsonl(&a.out.join(QA_FILE), &corpus)?;
    log::info!("wrote {} instances to {}", fold.all().count(), a.out.display());
    Ok(())
}

pub fn pretrain(a: &PretrainArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.set_seed(a.common.seed);
    let p = &mut cfg.pretrain;
    set(&mut p.dim, a.dim);
    set(&mut p.epochs, a.epochs);
    set(&mut p.lr_question, a.lr_question);
    set(&mut p.lr_answer, a.lr_answer);
    set(&mut p.batch_size, a.batch_size);
    set(&mut p.q_max_len, a.max_len.or(cfg.max_len));
    set(&mut cfg.held_out, a.held_out);
    if !(0.0..1.0).contains(&cfg.held_out) {
        return Err(config_error(format!(
            "held-out fraction must be in [0, 1), got {}",
            cfg.held_out
        )));
    }

    let fold = load_fold(&a.data)?;
    let default_corpus = a.data.join(QA_FILE);
    let corpus = match (&a.corpus, default_corpus.exists()) {
        (Some(path), _) => load_jsonl(path)?,
        (None, true) => load_jsonl(&default_corpus)?,
        (None, false) => fold.train.clone(),
    };
    let (train, held) = pretrain_split(&corpus, cfg.held_out, cfg.pretrain.seed);
    let vocab = Arc::new(build_vocab(fold.all().chain(&corpus)));
    let (models, report) = run_pretrain(Arc::clone(&vocab), &train, &held, &cfg.pretrain)?;

    create_dir(&a.out)?;
    vocab.save(&a.out.join(VOCAB_FILE))?;
    save_model(&models.pq, &a.out.join(PQ_FILE))?;
    save_model(&models.pa, &a.out.join(PA_FILE))?;
    save_model(&models.search, &a.out.join(SEARCH_FILE))?;
    write_json(
        &a.out.join("pretrain_report.json"),
        &json!({ "config": cfg.pretrain, "held_out": cfg.held_out, "corpus_size": corpus.len(), "report": report }),
    )?;
    log::info!(
        "held-out log-likelihood: answer {:.3} -> {:.3}, question {:.3} -> {:.3}",
        report.answer_held_out_init,
        report.answer_held_out_trained,
        report.question_held_out_init,
        report.question_held_out_trained
    );
    Ok(())
}

fn load_vocab(dir: &Path) -> Result<Arc<Vocab>> {
    Ok(Arc::new(Vocab::load(&dir.join(VOCAB_FILE))?))
}

/// The generator with a different output length limit.
fn with_max_len(m: TinySeq2Seq, max_len: Option<usize>) -> Result<TinySeq2Seq> {
    let Some(max_len) = max_len else { return Ok(m) };
    if max_len == 0 {
        return Err(config_error("max-len must be >= 1"));
    }
    let mut c = m.config();
    c.max_len = max_len;
    Ok(TinySeq2Seq::from_params(
        Arc::clone(m.shared_vocab()),
        c,
        lqre_core::model::DiffModel::params(&m).clone(),
    )?)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.set_seed(a.common.seed);
    cfg.apply_sampler(&a.sampler);
    let r = &mut cfg.run;
    if let Some(o) = &a.objective {
        r.objective = parse_objective(o)?;
    }
    set(&mut r.lr, a.lr);
    if a.lr_q.is_some() {
        r.lr_q = a.lr_q;
    }
    if a.clip_norm.is_some() {
        r.clip_norm = a.clip_norm;
    }
    set(&mut r.batch_size, a.batch_size);
    set(&mut r.eval_every, a.eval_every);
    set(&mut r.epochs, a.epochs);
    r.skip_neg_q |= a.skip_neg_q;
    cfg.run.validate()?;

    let fold = load_fold(&a.data)?;
    let vocab = load_vocab(&a.models)?;
    let models = ModelSet {
        pq: with_max_len(load_model(&a.models.join(PQ_FILE), Arc::clone(&vocab))?, cfg.max_len)?,
        pa: load_model(&a.models.join(PA_FILE), Arc::clone(&vocab))?,
        search: with_max_len(
            load_model(&a.models.join(SEARCH_FILE), Arc::clone(&vocab))?,
            cfg.max_len,
        )?,
    };

    create_dir(&a.out)?;
    let log_path = a.out.join("train_log.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
    let mut write_err = None;
    let outcome = run_train(&cfg.run, &models, &fold.train, &fold.dev, |stats| {
        let line = serde_json::to_string(stats).expect("stats serialize");
        if let Err(e) = writeln!(log_file, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&log_path, e));
    }

    vocab.save(&a.out.join(VOCAB_FILE))?;
    save_model(&outcome.pq, &a.out.join(PQ_FILE))?;
    save_model(&outcome.pa, &a.out.join(PA_FILE))?;
    write_json(&a.out.join("run_config.json"), &cfg.run)?;
    write_json(
        &a.out.join("dev_history.json"),
        &json!({ "best": outcome.best, "history": outcome.dev_history }),
    )?;
    log::info!("best dev TE F1 {:.4} at step {}", outcome.best.f1, outcome.best.step);
    Ok(())
}

fn load_input(a: &InputArgs) -> Result<Vec<REInstance>> {
    let format: DataFormat = a.format.parse()?;
    if let Some(path) = &a.input {
        return Ok(load_dataset(path, format)?);
    }
    let dir = a
        .data
        .as_ref()
        .ok_or_else(|| config_error("one of --data or --input is required"))?;
    let path: PathBuf = match a.split.as_str() {
        s @ ("train" | "dev" | "test") => dir.join(format!("{s}.jsonl")),
        other => return Err(config_error(format!("unknown split {other:?}"))),
    };
    Ok(load_dataset(&path, DataFormat::Jsonl)?)
}

fn load_generators(dir: &Path, max_len: Option<usize>) -> Result<(TinySeq2Seq, TinySeq2Seq)> {
    let vocab = load_vocab(dir)?;
    let pq = with_max_len(load_model(&dir.join(PQ_FILE), Arc::clone(&vocab))?, max_len)?;
    let pa = load_model(&dir.join(PA_FILE), vocab)?;
    Ok((pq, pa))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.set_seed(a.common.seed);
    cfg.apply_sampler(&a.sampler);
    if let Some(m) = &a.mode {
        cfg.eval_mode = parse_named("mode", m)?;
    }
    if let Some(s) = &a.source {
        cfg.infer.source = parse_named::<AnswerSource>("source", s)?;
    }
    set(&mut cfg.infer.marginal_k, a.marginal_k);
    if cfg.infer.beam_size == 0 || cfg.infer.marginal_k == 0 {
        return Err(config_error("beam and marginal-k must be >= 1"));
    }
    let insts = load_input(&a.input)?;
    let (pq, pa) = load_generators(&a.models, cfg.max_len)?;
    let report = evaluate(&pq, &pa, &insts, &cfg.infer, cfg.eval_mode)?;
    if let Some(path) = &a.csv {
        fs::write(path, report.to_csv()).map_err(|e| io_err(path, e))?;
    }
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

#[derive(Serialize)]
struct InferRecord<'a> {
    head: &'a str,
    relation: &'a str,
    question: Option<String>,
    tail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sampled_questions: Vec<String>,
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.set_seed(a.common.seed);
    cfg.apply_sampler(&a.sampler);
    cfg.run.sampler.validate()?;
    if let Some(s) = &a.source {
        cfg.infer.source = parse_named::<AnswerSource>("source", s)?;
    }
    let insts = load_input(&a.input)?;
    let (pq, pa) = load_generators(&a.models, cfg.max_len)?;
    let vocab = Arc::clone(pq.shared_vocab());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.sampler.seed);
    let mut out = String::new();
    for inst in &insts {
        let pred = predict_tail(&pq, &pa, inst, &cfg.infer)?;
        let sampled_questions = if a.sampler.samples.is_some() {
            let input = prompt_ids(&vocab, PromptKind::QuestionGen, inst, None)?;
            top_p_sample_with(&pq, &input, cfg.run.sampler.p, cfg.run.sampler.n_samples, &mut rng)
                .iter()
                .map(|s| vocab.text(&s.seq))
                .collect()
        } else {
            Vec::new()
        };
        let rec = InferRecord {
            head: &inst.head,
            relation: &inst.relation,
            question: pred.question,
            tail: pred.tail,
            sampled_questions,
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)
}
