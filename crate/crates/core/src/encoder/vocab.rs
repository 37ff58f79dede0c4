use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("special token {0:?} missing from vocabulary")]
    MissingSpecial(String),
    #[error("special tokens must be distinct, {0:?} used twice")]
    SpecialCollision(String),
    #[error("token {token:?} appears on lines {first} and {second}")]
    Duplicate { token: String, first: usize, second: usize },
}

/// Names of the special tokens and the subword continuation marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecialTokens {
    pub cls: String,
    pub sep: String,
    pub pad: String,
    pub unk: String,
    pub continuation: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            cls: "[CLS]".into(),
            sep: "[SEP]".into(),
            pad: "[PAD]".into(),
            unk: "[UNK]".into(),
            continuation: "##".into(),
        }
    }
}

/// Ids of the special tokens within one vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: u32,
    pub sep: u32,
    pub pad: u32,
    pub unk: u32,
}

/// Token/id bijection. Ids are dense line numbers of the vocabulary file.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    specials: SpecialIds,
    continuation: String,
}

impl Vocabulary {
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self, VocabError> {
        Self::with_specials(tokens, &SpecialTokens::default())
    }

    pub fn with_specials<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        specials: &SpecialTokens,
    ) -> Result<Self, VocabError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if let Some(first) = index.insert(tok.clone(), i as u32) {
                return Err(VocabError::Duplicate {
                    token: tok.clone(),
                    first: first as usize + 1,
                    second: i + 1,
                });
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| VocabError::MissingSpecial(name.to_string()))
        };
        let ids = SpecialIds {
            cls: lookup(&specials.cls)?,
            sep: lookup(&specials.sep)?,
            pad: lookup(&specials.pad)?,
            unk: lookup(&specials.unk)?,
        };
        let names = [&specials.cls, &specials.sep, &specials.pad, &specials.unk];
        for (i, a) in names.iter().enumerate() {
            if names[i + 1..].contains(a) {
                return Err(VocabError::SpecialCollision((*a).clone()));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            specials: ids,
            continuation: specials.continuation.clone(),
        })
    }

    /// Loads a vocabulary file: one token per line, line number (from 0) is the id.
    pub fn load(path: impl AsRef<Path>, specials: &SpecialTokens) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::with_specials(text.lines().map(|l| l.trim_end_matches('\r')), specials)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn continuation(&self) -> &str {
        &self.continuation
    }

    /// SHA-256 over the newline-joined token list; identifies the vocabulary
    /// in model artifacts.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
