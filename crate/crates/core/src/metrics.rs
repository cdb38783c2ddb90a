//! Tail-extraction and relation-classification scores, and perplexity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_prob, SeqModel};
use crate::pipeline::NULL_TAIL;
use crate::vocab::{Sequence, TokenId};

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TEMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub predicted_non_null: usize,
    pub gold_positive: usize,
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

fn is_null(pred: &str) -> bool {
    let p = pred.trim();
    p.is_empty() || p == NULL_TAIL
}

/// Tail-extraction precision (over non-null predictions) and recall (over
/// positive examples). Matching is exact after trimming and lowercasing;
/// `golds[i] = None` marks a negative.
pub fn te_score<S: AsRef<str>>(preds: &[S], golds: &[Option<Vec<String>>]) -> Result<TEMetrics> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let (mut tp, mut non_null, mut pos) = (0, 0, 0);
    for (pred, gold) in preds.iter().zip(golds) {
        let pred = pred.as_ref();
        let null = is_null(pred);
        if !null {
            non_null += 1;
        }
        if let Some(answers) = gold {
            pos += 1;
            let p = normalize(pred);
            if !null && answers.iter().any(|a| normalize(a) == p) {
                tp += 1;
            }
        }
    }
    let precision = ratio(tp, non_null);
    let recall = ratio(tp, pos);
    Ok(TEMetrics {
        precision,
        recall,
        f1: f1(precision, recall),
        tp,
        predicted_non_null: non_null,
        gold_positive: pos,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZREMetrics {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_relation: BTreeMap<String, RelationScore>,
}

/// Macro precision/recall/F1 over the gold relation types present.
pub fn zre_score<S: AsRef<str>, T: AsRef<str>>(preds: &[S], golds: &[T]) -> Result<ZREMetrics> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let mut per: BTreeMap<String, RelationScore> = BTreeMap::new();
    let blank = RelationScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        gold: 0,
        predicted: 0,
        correct: 0,
    };
    for g in golds {
        per.entry(g.as_ref().to_string()).or_insert(blank).gold += 1;
    }
    for (p, g) in preds.iter().zip(golds) {
        let (p, g) = (p.as_ref(), g.as_ref());
        if let Some(s) = per.get_mut(p) {
            s.predicted += 1;
        }
        if p == g {
            per.get_mut(g).expect("gold relation counted").correct += 1;
        }
    }
    for s in per.values_mut() {
        s.precision = ratio(s.correct, s.predicted);
        s.recall = ratio(s.correct, s.gold);
        s.f1 = f1(s.precision, s.recall);
    }
    let n = per.len().max(1) as f64;
    let mean = |f: fn(&RelationScore) -> f64| per.values().map(f).sum::<f64>() / n;
    Ok(ZREMetrics {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        per_relation: per,
    })
}

/// `exp(-sum log p / sum tokens)` over `(input, output)` pairs; token counts
/// include EOS.
pub fn perplexity<M: SeqModel + ?Sized>(model: &M, pairs: &[(Vec<TokenId>, Sequence)]) -> Result<f64> {
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for (input, output) in pairs {
        nll -= log_prob(model, input, output)?;
        tokens += output.len();
    }
    if tokens == 0 {
        return Err(Error::Config("perplexity of an empty corpus".into()));
    }
    Ok((nll / tokens as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub te: Option<TEMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zre: Option<ZREMetrics>,
    pub per_relation: BTreeMap<String, TEMetrics>,
}

impl EvalReport {
    /// One row per scored block: `metric,scope,precision,recall,f1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,scope,precision,recall,f1\n");
        let mut row = |m: &str, scope: &str, p: f64, r: f64, f: f64| {
            writeln!(out, "{m},{scope},{p:.6},{r:.6},{f:.6}").expect("write to string");
        };
        if let Some(te) = &self.te {
            row("te", "all", te.precision, te.recall, te.f1);
        }
        for (rel, te) in &self.per_relation {
            row("te", rel, te.precision, te.recall, te.f1);
        }
        if let Some(z) = &self.zre {
            row("zre", "macro", z.macro_precision, z.macro_recall, z.macro_f1);
            for (rel, s) in &z.per_relation {
                row("zre", rel, s.precision, s.recall, s.f1);
            }
        }
        out
    }
}
