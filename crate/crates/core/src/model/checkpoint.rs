use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DiffModel, ParamVector, TinyConfig, TinySeq2Seq};
use crate::error::{Error, Result};
use crate::vocab::Vocab;

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    TinySeq2seq {
        vocab_size: usize,
        #[serde(flatten)]
        config: TinyConfig,
    },
}

/// On-disk model: architecture descriptor plus the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layout_version: u32,
    pub architecture: Architecture,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn of(model: &TinySeq2Seq) -> Self {
        Checkpoint {
            layout_version: LAYOUT_VERSION,
            architecture: Architecture::TinySeq2seq {
                vocab_size: model.shared_vocab().len(),
                config: model.config(),
            },
            params: model.params().clone(),
        }
    }

    pub fn into_model(self, vocab: Arc<Vocab>) -> Result<TinySeq2Seq> {
        if self.layout_version != LAYOUT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported layout version {}",
                self.layout_version
            )));
        }
        let Architecture::TinySeq2seq { vocab_size, config } = self.architecture;
        if vocab_size != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {vocab_size} tokens, vocabulary has {}",
                vocab.len()
            )));
        }
        TinySeq2Seq::from_params(vocab, config, self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = serde_json::to_string(self)?;
        std::fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

pub fn save_model(model: &TinySeq2Seq, path: &Path) -> Result<()> {
    Checkpoint::of(model).save(path)
}

pub fn load_model(path: &Path, vocab: Arc<Vocab>) -> Result<TinySeq2Seq> {
    Checkpoint::load(path)?.into_model(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let vocab = Arc::new(Vocab::from_tokens(["a", "b"]));
        let m = TinySeq2Seq::random(Arc::clone(&vocab), TinyConfig::default(), 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path, vocab).unwrap();
        assert_eq!(back.params(), m.params());
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["layout_version"], 1);
        assert_eq!(raw["architecture"]["kind"], "tiny_seq2seq");
    }

    #[test]
    fn rejects_wrong_vocab() {
        let m = TinySeq2Seq::random(Arc::new(Vocab::from_tokens(["a"])), TinyConfig::default(), 3);
        let err = Checkpoint::of(&m).into_model(Arc::new(Vocab::new()));
        assert!(matches!(err, Err(Error::Checkpoint(_))));
    }
}
