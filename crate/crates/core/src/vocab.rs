//! Whitespace vocabulary and token sequences.
//!
//! Reserved tokens occupy ids 0..=5 in a fixed order; every other token is a
//! content token. Text is split on whitespace, unknown words map to `<unk>`,
//! and a sequence always ends with exactly one `</s>`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const NO_ANSWER: TokenId = 4;
pub const UNK: TokenId = 5;

/// Number of reserved ids; the first content token has this id.
pub const NUM_RESERVED: usize = 6;

pub const EOS_SURFACE: &str = "</s>";
pub const SEP_SURFACE: &str = "<SEP>";
pub const NO_ANSWER_SURFACE: &str = "NO_ANSWER";

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<s>", EOS_SURFACE, SEP_SURFACE, NO_ANSWER_SURFACE, "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// A vocabulary holding only the reserved tokens.
    pub fn new() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for tok in RESERVED {
            v.push_unchecked(tok);
        }
        v
    }

    /// Reserved tokens followed by `content` in first-seen order.
    pub fn from_tokens<I, S>(content: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for tok in content {
            v.add(tok.as_ref());
        }
        v
    }

    /// Builds a vocabulary from every whitespace token in `texts`.
    pub fn build<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut v = Self::new();
        for text in texts {
            for tok in text.split_whitespace() {
                v.add(tok);
            }
        }
        v
    }

    fn push_unchecked(&mut self, tok: &str) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.tokens.push(tok.to_string());
        self.index.insert(tok.to_string(), id);
        id
    }

    /// Returns the id of `tok`, inserting it if new.
    pub fn add(&mut self, tok: &str) -> TokenId {
        match self.index.get(tok) {
            Some(&id) => id,
            None => self.push_unchecked(tok),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, tok: &str) -> Option<TokenId> {
        self.index.get(tok).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_reserved(id: TokenId) -> bool {
        (id as usize) < NUM_RESERVED
    }

    /// Ids of all non-reserved tokens.
    pub fn content_ids(&self) -> impl Iterator<Item = TokenId> {
        (NUM_RESERVED as TokenId)..(self.tokens.len() as TokenId)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace tokenization. Unknown words become `<unk>`; the result is
    /// cut after the first `</s>`, or gets one appended.
    pub fn tokenize(&self, text: &str) -> Sequence {
        let mut ids = Vec::new();
        for tok in text.split_whitespace() {
            let id = self.id(tok).unwrap_or(UNK);
            ids.push(id);
            if id == EOS {
                break;
            }
        }
        if ids.last() != Some(&EOS) {
            ids.push(EOS);
        }
        Sequence(ids)
    }

    /// Space-joined surfaces of `ids`, including any `</s>`.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or(RESERVED[UNK as usize]));
        }
        out
    }

    /// Surface text of a sequence without its terminating `</s>`.
    pub fn text(&self, seq: &Sequence) -> String {
        self.decode(seq.content())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for tok in &self.tokens {
            writeln!(out, "{tok}").expect("write to string");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (i, line) in raw.lines().enumerate() {
            let tok = line.trim_end_matches('\r');
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(parse_err(format!("invalid token {tok:?}")));
            }
            if i < NUM_RESERVED && tok != RESERVED[i] {
                return Err(parse_err(format!(
                    "expected reserved token {:?}, found {tok:?}",
                    RESERVED[i]
                )));
            }
            if v.index.contains_key(tok) {
                return Err(parse_err(format!("duplicate token {tok:?}")));
            }
            v.push_unchecked(tok);
        }
        if v.len() < NUM_RESERVED {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: v.len() + 1,
                msg: "missing reserved tokens".into(),
            });
        }
        Ok(v)
    }
}

/// Token ids terminated by exactly one EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sequence(Vec<TokenId>);

impl Sequence {
    pub fn new(ids: Vec<TokenId>) -> Result<Self> {
        match ids.iter().position(|&t| t == EOS) {
            None => Err(Error::InvalidSequence("missing EOS".into())),
            Some(p) if p + 1 != ids.len() => Err(Error::InvalidSequence("tokens after EOS".into())),
            Some(_) if ids.contains(&PAD) => Err(Error::InvalidSequence("PAD before EOS".into())),
            Some(_) => Ok(Sequence(ids)),
        }
    }

    /// Appends EOS to `content`.
    pub fn from_content(content: &[TokenId]) -> Result<Self> {
        let mut ids = content.to_vec();
        ids.push(EOS);
        Self::new(ids)
    }

    pub fn eos() -> Self {
        Sequence(vec![EOS])
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    /// Ids without the terminating EOS.
    pub fn content(&self) -> &[TokenId] {
        &self.0[..self.0.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
