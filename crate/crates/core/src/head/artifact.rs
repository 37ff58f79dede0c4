use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{forward, HeadError, HeadParams, TrainConfig};
use crate::corpus::{Class, SentenceRecord};
use crate::encoder::TextEncoder;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Persisted classifier head together with the identity of the encoder it
/// was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub dim: usize,
    pub classes: Vec<Class>,
    /// Row-major `[classes x dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub encoder_backend_id: String,
    pub vocab_hash: String,
    pub max_len: usize,
    pub threshold: f64,
    pub train_config: TrainConfig,
    pub data_fingerprint: String,
}

/// One scored text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub burnout_probability: f64,
    pub label: Class,
    pub threshold: f64,
}

/// SHA-256 over `(id, label, text)` of the training records, in order.
pub fn data_fingerprint(records: &[SentenceRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.id.as_bytes());
        h.update(b"\0");
        h.update(r.label.as_str().as_bytes());
        h.update(b"\0");
        h.update(r.text.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl ModelArtifact {
    pub fn new(
        params: &HeadParams,
        encoder: &TextEncoder,
        threshold: f64,
        train_config: &TrainConfig,
        training_data: &[SentenceRecord],
    ) -> Self {
        ModelArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            dim: params.dim(),
            classes: Class::ORDER.to_vec(),
            weights: params.weights().to_vec(),
            bias: params.bias().to_vec(),
            encoder_backend_id: encoder.backend.backend_id().to_string(),
            vocab_hash: encoder.vocab.fingerprint(),
            max_len: encoder.max_len,
            threshold,
            train_config: train_config.clone(),
            data_fingerprint: data_fingerprint(training_data),
        }
    }

    pub fn params(&self) -> Result<HeadParams, HeadError> {
        let bias: [f64; 2] = self.bias.as_slice().try_into().map_err(|_| HeadError::Artifact {
            path: String::new(),
            reason: format!("bias must have 2 entries, found {}", self.bias.len()),
        })?;
        HeadParams::from_parts(self.dim, self.weights.clone(), bias)
    }

    /// Short content hash used as the served model version.
    pub fn version(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("serializable");
        hex::encode(&Sha256::digest(&bytes)[..6])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HeadError> {
        let path = path.as_ref();
        crate::jsonl::write_json(path, self).map_err(|e| HeadError::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HeadError> {
        let path = path.as_ref();
        let err = |reason: String| HeadError::Artifact {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let artifact: ModelArtifact = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if artifact.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(err(format!("unsupported schema_version {}", artifact.schema_version)));
        }
        if artifact.classes != Class::ORDER {
            return Err(err("classes must be [neutral, burnout]".into()));
        }
        if !(artifact.threshold > 0.0 && artifact.threshold < 1.0) {
            return Err(err(format!("threshold {} outside (0, 1)", artifact.threshold)));
        }
        artifact.params().map_err(|e| err(e.to_string()))?;
        Ok(artifact)
    }

    /// Errors unless `encoder` matches the one the head was trained with.
    pub fn check_encoder(&self, encoder: &TextEncoder) -> Result<(), HeadError> {
        let actual = encoder.backend.backend_id();
        if actual != self.encoder_backend_id {
            return Err(HeadError::BackendMismatch {
                expected: self.encoder_backend_id.clone(),
                actual: actual.to_string(),
            });
        }
        let vocab = encoder.vocab.fingerprint();
        if vocab != self.vocab_hash {
            return Err(HeadError::BackendMismatch {
                expected: format!("vocab {}", self.vocab_hash),
                actual: format!("vocab {vocab}"),
            });
        }
        if encoder.max_len != self.max_len {
            return Err(HeadError::BackendMismatch {
                expected: format!("max_len {}", self.max_len),
                actual: format!("max_len {}", encoder.max_len),
            });
        }
        Ok(())
    }
}

/// Burnout probability for each text; label is `Burnout` iff the
/// probability reaches `model.threshold`.
pub fn score<S: AsRef<str> + Sync>(
    model: &ModelArtifact,
    texts: &[S],
    encoder: &TextEncoder,
) -> Result<Vec<ScoreResult>, HeadError> {
    model.check_encoder(encoder)?;
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let params = model.params()?;
    let vectors = encoder.embed_texts(texts)?;
    vectors
        .iter()
        .map(|v| {
            let p = forward(&params, v)?[Class::Burnout.index()];
            Ok(ScoreResult {
                burnout_probability: p,
                label: if p >= model.threshold {
                    Class::Burnout
                } else {
                    Class::Neutral
                },
                threshold: model.threshold,
            })
        })
        .collect()
}
