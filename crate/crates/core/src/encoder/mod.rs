//! Text to fixed-dimension sentence embeddings.
//!
//! Tokenization is WordPiece-style over a line-per-token vocabulary. The
//! encoder behind it is frozen and pluggable: either a model exported to ONNX
//! (feature `onnx`) or a seeded deterministic stub for tests and desk runs.

mod cache;
#[cfg(feature = "onnx")]
mod onnx;
mod stub;
mod vocab;
mod wordpiece;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::EmbeddingCache;
pub use stub::StubEncoder;
pub use vocab::{SpecialIds, SpecialTokens, VocabError, Vocabulary};
pub use wordpiece::{detokenize, tokenize, TokenSequence};

pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_DIM: usize = 768;

/// Sequences per inference call for model-backed encoders.
#[cfg(feature = "onnx")]
const MODEL_CHUNK: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("failed to load encoder model {path}: {reason}")]
    Load { path: PathBuf, reason: String },
    #[error("encoder output has dimension {actual}, backend declares {declared}")]
    DimensionMismatch { declared: usize, actual: usize },
    #[error("sequences must share max_len: found {expected} and {found}")]
    RaggedBatch { expected: usize, found: usize },
    #[error("encoder produced a non-finite value for sequence {0}")]
    NonFinite(usize),
    #[error("encoder inference failed: {0}")]
    Inference(String),
    #[error("backend kind {0:?} is not available in this build")]
    Unsupported(&'static str),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("embedding cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
}

/// A sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Hidden state at the first (CLS) position.
    #[default]
    Cls,
    /// Mean over unmasked positions.
    Mean,
}

/// Shape of the tensor the interchange model returns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// `[batch, seq, dim]`, pooled here.
    #[default]
    HiddenStates,
    /// `[batch, dim]`, already pooled by the model.
    Pooled,
}

fn default_input_ids() -> String {
    "input_ids".into()
}

fn default_attention_mask() -> Option<String> {
    Some("attention_mask".into())
}

/// Where an exported encoder lives and how its tensors are named.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterchangeConfig {
    pub path: PathBuf,
    #[serde(default = "default_input_ids")]
    pub input_ids_name: String,
    #[serde(default = "default_attention_mask")]
    pub attention_mask_name: Option<String>,
    #[serde(default)]
    pub token_type_ids_name: Option<String>,
    /// Output tensor to read; the first output when unset.
    #[serde(default)]
    pub output_name: Option<String>,
    #[serde(default)]
    pub output_kind: OutputKind,
}

impl InterchangeConfig {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        InterchangeConfig {
            path: path.into(),
            input_ids_name: default_input_ids(),
            attention_mask_name: default_attention_mask(),
            token_type_ids_name: None,
            output_name: None,
            output_kind: OutputKind::HiddenStates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    InterchangeModel(InterchangeConfig),
    DeterministicStub { seed: u64 },
}

/// Serializable recipe for an [`EncoderBackend`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    #[serde(flatten)]
    pub kind: BackendKind,
    pub dim: usize,
    #[serde(default)]
    pub pooling: Pooling,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        BackendDescriptor {
            kind: BackendKind::DeterministicStub { seed: 7 },
            dim: DEFAULT_DIM,
            pooling: Pooling::Cls,
        }
    }
}

impl BackendDescriptor {
    pub fn build(&self) -> Result<EncoderBackend, EncoderError> {
        if self.dim == 0 {
            return Err(EncoderError::Config("dim must be positive".into()));
        }
        match &self.kind {
            BackendKind::DeterministicStub { seed } => Ok(build_stub_backend(*seed, self.dim)),
            BackendKind::InterchangeModel(cfg) => load_interchange_backend(cfg, self.dim, self.pooling),
        }
    }
}

enum Engine {
    Stub(StubEncoder),
    #[cfg(feature = "onnx")]
    Onnx(onnx::OnnxEncoder),
}

/// A loaded, immutable encoder. Safe to share across threads.
pub struct EncoderBackend {
    backend_id: String,
    dim: usize,
    kind: BackendKind,
    pooling: Pooling,
    engine: Engine,
}

impl fmt::Debug for EncoderBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncoderBackend")
            .field("backend_id", &self.backend_id)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("pooling", &self.pooling)
            .finish()
    }
}

impl EncoderBackend {
    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &BackendKind {
        &self.kind
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }
}

/// Seeded bag-of-subwords projection backend. Panics if `dim` is zero.
pub fn build_stub_backend(seed: u64, dim: usize) -> EncoderBackend {
    assert!(dim > 0, "stub backend dimension must be positive");
    EncoderBackend {
        backend_id: format!("stub-v1:seed={seed}:dim={dim}"),
        dim,
        kind: BackendKind::DeterministicStub { seed },
        pooling: Pooling::Cls,
        engine: Engine::Stub(StubEncoder::new(seed, dim)),
    }
}

/// Loads an exported encoder. All loading and shape problems are reported
/// here rather than during [`embed`].
#[cfg(feature = "onnx")]
pub fn load_interchange_backend(
    config: &InterchangeConfig,
    dim: usize,
    pooling: Pooling,
) -> Result<EncoderBackend, EncoderError> {
    let bytes = std::fs::read(&config.path).map_err(|e| EncoderError::Load {
        path: config.path.clone(),
        reason: e.to_string(),
    })?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let engine = onnx::OnnxEncoder::load(config, dim, pooling)?;
    let pool = match pooling {
        Pooling::Cls => "cls",
        Pooling::Mean => "mean",
    };
    Ok(EncoderBackend {
        backend_id: format!("onnx:{}:{pool}:dim={dim}", &digest[..16]),
        dim,
        kind: BackendKind::InterchangeModel(config.clone()),
        pooling,
        engine: Engine::Onnx(engine),
    })
}

#[cfg(not(feature = "onnx"))]
pub fn load_interchange_backend(
    _config: &InterchangeConfig,
    _dim: usize,
    _pooling: Pooling,
) -> Result<EncoderBackend, EncoderError> {
    Err(EncoderError::Unsupported("interchange_model"))
}

/// Embeds each sequence; output order matches input order.
pub fn embed(seqs: &[TokenSequence], backend: &EncoderBackend) -> Result<Vec<EmbeddingVector>, EncoderError> {
    if let Some(first) = seqs.first() {
        if let Some(bad) = seqs.iter().find(|s| s.max_len != first.max_len) {
            return Err(EncoderError::RaggedBatch {
                expected: first.max_len,
                found: bad.max_len,
            });
        }
    }
    let raw: Vec<Vec<f64>> = match &backend.engine {
        Engine::Stub(stub) => seqs.par_iter().map(|s| stub.embed_sequence(s)).collect(),
        #[cfg(feature = "onnx")]
        Engine::Onnx(model) => {
            let chunks: Result<Vec<_>, _> = seqs.par_chunks(MODEL_CHUNK).map(|c| model.run_batch(c)).collect();
            chunks?.into_iter().flatten().collect()
        }
    };
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v.len() != backend.dim {
                return Err(EncoderError::DimensionMismatch {
                    declared: backend.dim,
                    actual: v.len(),
                });
            }
            let v = EmbeddingVector(v);
            if !v.is_finite() {
                return Err(EncoderError::NonFinite(i));
            }
            Ok(v)
        })
        .collect()
}

/// Vocabulary, backend and sequence length bundled for text-level use.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub vocab: Arc<Vocabulary>,
    pub backend: Arc<EncoderBackend>,
    pub max_len: usize,
}

impl TextEncoder {
    pub fn new(vocab: Arc<Vocabulary>, backend: Arc<EncoderBackend>, max_len: usize) -> Self {
        TextEncoder {
            vocab,
            backend,
            max_len,
        }
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text, &self.vocab, self.max_len)
    }

    pub fn embed_texts<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>, EncoderError> {
        let seqs: Vec<TokenSequence> = texts.par_iter().map(|t| self.tokenize(t.as_ref())).collect();
        embed(&seqs, &self.backend)
    }

    /// Identifies everything that influences an embedding: backend, vocabulary
    /// and sequence length.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.backend.backend_id().as_bytes());
        h.update(b"\0");
        h.update(self.vocab.fingerprint().as_bytes());
        h.update(b"\0");
        h.update(self.max_len.to_le_bytes());
        hex::encode(h.finalize())
    }
}
