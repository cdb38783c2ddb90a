//! Relation-extraction instances, prompt templates, tail generation and
//! relation classification.
//!
//! The five prompt templates (`[..]` parts only when the description is
//! non-empty):
//!
//! ```text
//! QUESTION_GEN      answer: {e1} <SEP> {r}[ ; {d}] context: {c} </s>
//! SEARCH            answer: {e1} <SEP> {r}[ ; {d}] {e2} context: {c} </s>
//! ANSWER_PSEUDO     question: {e1} <SEP> {r} context: {c} </s>
//! ANSWER_GENERATED  relation: {e1} {r} question: {q} context: {c} </s>
//! ANSWER_GOLD       question: {q} context: {c} </s>
//! ```

use serde::{Deserialize, Serialize};

use crate::decoding::{beam, greedy};
use crate::error::{Error, Result};
use crate::model::{log_prob, SeqModel};
use crate::vocab::{Sequence, TokenId, Vocab, NO_ANSWER};

/// Surface form of the null tail.
pub const NULL_TAIL: &str = "NO_ANSWER";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct REInstance {
    pub context: String,
    pub head: String,
    /// Relation keywords.
    pub relation: String,
    #[serde(default)]
    pub description: String,
    /// `None` for negatives.
    pub tail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_question: Option<String>,
    pub relation_id: String,
    pub is_negative: bool,
    /// Every answer accepted at evaluation. Empty means just `tail`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answers: Vec<String>,
}

impl REInstance {
    pub fn positive(context: &str, head: &str, relation: &str, description: &str, tail: &str) -> Self {
        REInstance {
            context: context.into(),
            head: head.into(),
            relation: relation.into(),
            description: description.into(),
            tail: Some(tail.into()),
            gold_question: None,
            relation_id: relation.into(),
            is_negative: false,
            answers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_negative != self.tail.is_none() {
            return Err(Error::Config(format!(
                "instance with head {:?}: is_negative must match a null tail",
                self.head
            )));
        }
        for (name, v) in [
            ("context", &self.context),
            ("head", &self.head),
            ("relation", &self.relation),
        ] {
            if v.trim().is_empty() {
                return Err(Error::Config(format!("instance field {name} is empty")));
            }
        }
        Ok(())
    }

    /// The tail surface, `NO_ANSWER` for negatives.
    pub fn tail_text(&self) -> &str {
        self.tail.as_deref().unwrap_or(NULL_TAIL)
    }

    /// Accepted answers for scoring; `None` for negatives.
    pub fn accepted(&self) -> Option<Vec<String>> {
        let tail = self.tail.as_ref()?;
        if self.answers.is_empty() {
            Some(vec![tail.clone()])
        } else {
            Some(self.answers.clone())
        }
    }

    /// A copy asking about another relation. Gold fields are cleared.
    pub fn with_relation(&self, relation: &str, description: &str) -> Self {
        REInstance {
            relation: relation.into(),
            description: description.into(),
            gold_question: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    QuestionGen,
    Search,
    AnswerPseudo,
    AnswerGenerated,
    AnswerGold,
}

impl PromptKind {
    pub fn name(self) -> &'static str {
        match self {
            PromptKind::QuestionGen => "QUESTION_GEN",
            PromptKind::Search => "SEARCH",
            PromptKind::AnswerPseudo => "ANSWER_PSEUDO",
            PromptKind::AnswerGenerated => "ANSWER_GENERATED",
            PromptKind::AnswerGold => "ANSWER_GOLD",
        }
    }

    fn takes_question(self) -> bool {
        matches!(self, PromptKind::AnswerGenerated | PromptKind::AnswerGold)
    }
}

fn relation_segment(inst: &REInstance) -> String {
    if inst.description.is_empty() {
        inst.relation.clone()
    } else {
        format!("{} ; {}", inst.relation, inst.description)
    }
}

pub fn format_prompt(kind: PromptKind, inst: &REInstance, q: Option<&str>) -> Result<String> {
    let q = match (kind.takes_question(), q) {
        (true, Some(q)) => q,
        (true, None) => return Err(Error::MissingQuestion(kind.name())),
        (false, Some(_)) => return Err(Error::UnexpectedQuestion(kind.name())),
        (false, None) => "",
    };
    let (e1, c) = (&inst.head, &inst.context);
    Ok(match kind {
        PromptKind::QuestionGen => format!("answer: {e1} <SEP> {} context: {c} </s>", relation_segment(inst)),
        PromptKind::Search => format!(
            "answer: {e1} <SEP> {} {} context: {c} </s>",
            relation_segment(inst),
            inst.tail_text()
        ),
        PromptKind::AnswerPseudo => format!("question: {e1} <SEP> {} context: {c} </s>", inst.relation),
        PromptKind::AnswerGenerated => format!("relation: {e1} {} question: {q} context: {c} </s>", inst.relation),
        PromptKind::AnswerGold => format!("question: {q} context: {c} </s>"),
    })
}

/// The `{e1} <SEP> {r}` pseudo question.
pub fn make_pseudo_question(e1: &str, r: &str) -> String {
    format!("{} <SEP> {}", e1.trim(), r.trim())
}

/// Token ids of an `ANSWER_GENERATED` prompt around a question slot, so the
/// answer input for many questions is built without re-tokenizing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerFrame {
    prefix: Vec<TokenId>,
    suffix: Vec<TokenId>,
}

impl AnswerFrame {
    pub fn new(vocab: &Vocab, inst: &REInstance) -> Self {
        let prefix = format!("relation: {} {} question:", inst.head, inst.relation);
        let suffix = format!("context: {} </s>", inst.context);
        let ids = |s: &str| -> Vec<TokenId> {
            s.split_whitespace()
                .map(|t| vocab.id(t).unwrap_or(crate::vocab::UNK))
                .collect()
        };
        AnswerFrame {
            prefix: ids(&prefix),
            suffix: ids(&suffix),
        }
    }

    /// Answer input for the question `q` (its EOS is dropped).
    pub fn input(&self, q: &Sequence) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.prefix.len() + q.len() + self.suffix.len());
        out.extend_from_slice(&self.prefix);
        out.extend_from_slice(q.content());
        out.extend_from_slice(&self.suffix);
        out
    }
}

/// Answer target: the tail tokens, or `NO_ANSWER` for negatives.
pub fn answer_target(vocab: &Vocab, inst: &REInstance) -> Sequence {
    match &inst.tail {
        Some(t) => vocab.tokenize(t),
        None => Sequence::from_content(&[NO_ANSWER]).expect("valid target"),
    }
}

pub fn prompt_ids(vocab: &Vocab, kind: PromptKind, inst: &REInstance, q: Option<&str>) -> Result<Vec<TokenId>> {
    Ok(vocab.tokenize(&format_prompt(kind, inst, q)?).ids().to_vec())
}

/// What the answer generator is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    /// Top beam question from the question generator.
    Generated,
    /// The `{e1} <SEP> {r}` string.
    Pseudo,
    /// The instance's gold question.
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub beam_size: usize,
    pub source: AnswerSource,
    /// Questions summed over in relation scoring; 1 scores the top beam
    /// question alone.
    pub marginal_k: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            beam_size: 8,
            source: AnswerSource::Generated,
            marginal_k: 1,
        }
    }
}

/// Top beam question from `pq` for `inst`.
pub fn best_question<Q: SeqModel + ?Sized>(pq: &Q, inst: &REInstance, beam_size: usize) -> Sequence {
    let input = prompt_ids(pq.vocab(), PromptKind::QuestionGen, inst, None).expect("question prompt has no q");
    beam(pq, &input, beam_size)
        .into_iter()
        .next()
        .map(|s| s.seq)
        .unwrap_or_else(Sequence::eos)
}

/// Answer input for `inst` under `source`, plus the question text used.
fn answer_input<Q: SeqModel + ?Sized>(
    pq: &Q,
    vocab: &Vocab,
    inst: &REInstance,
    cfg: &InferConfig,
) -> Result<(Vec<TokenId>, Option<String>)> {
    match cfg.source {
        AnswerSource::Generated => {
            let q = best_question(pq, inst, cfg.beam_size);
            Ok((AnswerFrame::new(vocab, inst).input(&q), Some(pq.vocab().text(&q))))
        }
        AnswerSource::Pseudo => Ok((prompt_ids(vocab, PromptKind::AnswerPseudo, inst, None)?, None)),
        AnswerSource::Gold => {
            let q = inst
                .gold_question
                .as_deref()
                .ok_or_else(|| Error::MissingGoldQuestion {
                    head: inst.head.clone(),
                })?;
            Ok((
                prompt_ids(vocab, PromptKind::AnswerGold, inst, Some(q))?,
                Some(q.to_string()),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question: Option<String>,
    pub tail: String,
}

/// Generates the tail for `inst` (or `NO_ANSWER`) together with the question
/// it was conditioned on. Never reads the tail or negative flag.
pub fn predict_tail<Q: SeqModel + ?Sized, A: SeqModel + ?Sized>(
    pq: &Q,
    pa: &A,
    inst: &REInstance,
    cfg: &InferConfig,
) -> Result<Prediction> {
    let (input, question) = answer_input(pq, pa.vocab(), inst, cfg)?;
    let out = greedy(pa, &input);
    let tail = if out.seq.content().first() == Some(&NO_ANSWER) || out.seq.content().is_empty() {
        NULL_TAIL.to_string()
    } else {
        pa.vocab().text(&out.seq)
    };
    Ok(Prediction { question, tail })
}

pub fn generate_tail<Q: SeqModel + ?Sized, A: SeqModel + ?Sized>(
    pq: &Q,
    pa: &A,
    inst: &REInstance,
    cfg: &InferConfig,
) -> Result<String> {
    predict_tail(pq, pa, inst, cfg).map(|p| p.tail)
}

/// A candidate relation for classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub relation_id: String,
    pub relation: String,
    pub description: String,
    /// Gold question with the head replaced by `XXX`, for gold-question
    /// scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_template: Option<String>,
}

pub const HEAD_SLOT: &str = "XXX";

impl Candidate {
    pub fn from_instance(inst: &REInstance) -> Self {
        Candidate {
            relation_id: inst.relation_id.clone(),
            relation: inst.relation.clone(),
            description: inst.description.clone(),
            question_template: inst
                .gold_question
                .as_ref()
                .map(|q| q.replacen(&inst.head, HEAD_SLOT, 1)),
        }
    }

    /// Distinct positive relations of `insts`, in first-seen order.
    pub fn collect(insts: &[REInstance]) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = Vec::new();
        for inst in insts.iter().filter(|i| !i.is_negative) {
            if !out.iter().any(|c| c.relation_id == inst.relation_id) {
                out.push(Candidate::from_instance(inst));
            }
        }
        out
    }

    fn variant(&self, inst: &REInstance) -> REInstance {
        let mut v = inst.with_relation(&self.relation, &self.description);
        v.relation_id = self.relation_id.clone();
        v.gold_question = self
            .question_template
            .as_ref()
            .map(|t| t.replacen(HEAD_SLOT, &inst.head, 1));
        v
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Score of `candidate` for the known tail of `inst`: `log P_A(e2 | q̂)` for
/// the top beam question, or with `marginal_k > 1` the log of
/// `sum P_Q(q) P_A(e2 | q)` over the top `marginal_k` beam questions.
pub fn score_relation<Q: SeqModel + ?Sized, A: SeqModel + ?Sized>(
    pq: &Q,
    pa: &A,
    inst: &REInstance,
    candidate: &Candidate,
    cfg: &InferConfig,
) -> Result<f64> {
    let variant = candidate.variant(inst);
    let target = answer_target(pa.vocab(), inst);
    if cfg.source != AnswerSource::Generated || cfg.marginal_k <= 1 {
        let (input, _) = answer_input(pq, pa.vocab(), &variant, cfg)?;
        return log_prob(pa, &input, &target);
    }
    let q_input = prompt_ids(pq.vocab(), PromptKind::QuestionGen, &variant, None)?;
    let frame = AnswerFrame::new(pa.vocab(), &variant);
    let mut terms = Vec::new();
    for q in beam(pq, &q_input, cfg.beam_size.max(cfg.marginal_k))
        .into_iter()
        .take(cfg.marginal_k)
    {
        terms.push(q.log_score + log_prob(pa, &frame.input(&q.seq), &target)?);
    }
    Ok(log_sum_exp(&terms))
}

/// Index into `candidates` of the highest-scoring relation; ties go to the
/// earliest candidate.
pub fn classify_index<Q: SeqModel + ?Sized, A: SeqModel + ?Sized>(
    pq: &Q,
    pa: &A,
    inst: &REInstance,
    candidates: &[Candidate],
    cfg: &InferConfig,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let s = score_relation(pq, pa, inst, c, cfg)?;
        if s > best.1 || (i == 0 && s == best.1) {
            best = (i, s);
        }
    }
    Ok(best.0)
}

pub fn classify_relation<Q: SeqModel + ?Sized, A: SeqModel + ?Sized>(
    pq: &Q,
    pa: &A,
    inst: &REInstance,
    candidates: &[Candidate],
    cfg: &InferConfig,
) -> Result<String> {
    let i = classify_index(pq, pa, inst, candidates, cfg)?;
    Ok(candidates[i].relation_id.clone())
}
