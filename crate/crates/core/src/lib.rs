//! Latent-question training for zero-shot relation extraction.
//!
//! A question generator `P_Q` turns a (context, head, relation) triple into
//! a question, and an answer generator `P_A` reads that question and emits
//! the tail entity or `NO_ANSWER`. The question is never observed: both
//! modules are trained by marginal likelihood over it, optionally with
//! samples from a frozen search model that also sees the tail.
//!
//! Modules, bottom up:
//!
//! * [`vocab`] and [`model`]: tokens, sequences and differentiable
//!   sequence models;
//! * [`decoding`]: greedy, beam and nucleus decoding;
//! * [`pipeline`]: prompts, tail generation, relation classification;
//! * [`objectives`]: gradient estimators and the training step;
//! * [`datakit`]: file formats and synthetic corpora;
//! * [`metrics`]: tail and relation scores;
//! * [`runner`]: pretraining, training and evaluation loops.

pub mod datakit;
pub mod decoding;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod pipeline;
pub mod runner;
pub mod vocab;

pub use decoding::{SamplerConfig, ScoredSequence};
pub use error::{Error, Result};
pub use metrics::{EvalReport, TEMetrics, ZREMetrics};
pub use model::{DiffModel, ParamVector, SeqModel, TinyConfig, TinySeq2Seq};
pub use objectives::{GradPair, ObjectiveKind, ObjectiveSpec, QuestionSample};
pub use pipeline::{PromptKind, REInstance};
pub use vocab::{Sequence, TokenId, Vocab};
