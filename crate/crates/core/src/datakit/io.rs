use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FoldSpec;
use crate::error::{Error, Result};
use crate::pipeline::{REInstance, HEAD_SLOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Jsonl,
    ReqaTsv,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "reqa_tsv" | "reqa-tsv" => Ok(DataFormat::ReqaTsv),
            other => Err(Error::Config(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Deserialize)]
struct RawInstance {
    context: String,
    head: String,
    relation: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    tail: Option<String>,
    #[serde(default)]
    gold_question: Option<String>,
    #[serde(default)]
    relation_id: Option<String>,
    #[serde(default)]
    answers: Vec<String>,
}

impl From<RawInstance> for REInstance {
    fn from(r: RawInstance) -> Self {
        REInstance {
            relation_id: r.relation_id.unwrap_or_else(|| r.relation.clone()),
            is_negative: r.tail.is_none(),
            context: r.context,
            head: r.head,
            relation: r.relation,
            description: r.description,
            tail: r.tail,
            gold_question: r.gold_question,
            answers: r.answers,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// One JSON object per line; blank lines are skipped. A null or missing
/// `tail` marks a negative.
pub fn load_jsonl(path: &Path) -> Result<Vec<REInstance>> {
    let raw = read(path)?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RawInstance = serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let inst = REInstance::from(r);
        inst.validate().map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

/// Tab-separated `relation, question template, head, context, answers...`.
/// `XXX` in the template stands for the head; no answers marks a negative.
/// The first answer is the training target, all of them are accepted.
pub fn load_reqa_tsv(path: &Path) -> Result<Vec<REInstance>> {
    let raw = read(path)?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected at least 4 tab-separated columns, got {}", cols.len()),
            ));
        }
        let answers: Vec<String> = cols[4..]
            .iter()
            .map(|a| a.trim())
            .filter(|a| !a.is_empty())
            .map(String::from)
            .collect();
        let head = cols[2].trim();
        let inst = REInstance {
            context: cols[3].trim().into(),
            head: head.into(),
            relation: cols[0].trim().into(),
            description: String::new(),
            tail: answers.first().cloned(),
            gold_question: Some(cols[1].trim().replace(HEAD_SLOT, head)),
            relation_id: cols[0].trim().into(),
            is_negative: answers.is_empty(),
            answers: if answers.len() > 1 { answers } else { Vec::new() },
        };
        inst.validate().map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Vec<REInstance>> {
    match format {
        DataFormat::Jsonl => load_jsonl(path),
        DataFormat::ReqaTsv => load_reqa_tsv(path),
    }
}

pub fn save_jsonl(path: &Path, insts: &[REInstance]) -> Result<()> {
    let mut out = String::new();
    for inst in insts {
        out.push_str(&serde_json::to_string(inst)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `manifest.json`.
pub fn save_fold(dir: &Path, fold: &FoldSpec, manifest: &serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_jsonl(&dir.join("train.jsonl"), &fold.train)?;
    save_jsonl(&dir.join("dev.jsonl"), &fold.dev)?;
    save_jsonl(&dir.join("test.jsonl"), &fold.test)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_fold(dir: &Path) -> Result<FoldSpec> {
    FoldSpec::new(
        load_jsonl(&dir.join("train.jsonl"))?,
        load_jsonl(&dir.join("dev.jsonl"))?,
        load_jsonl(&dir.join("test.jsonl"))?,
    )
}
