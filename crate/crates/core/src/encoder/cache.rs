use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingVector, EncoderError, TextEncoder};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    vector: EmbeddingVector,
}

/// On-disk embedding cache keyed by encoder fingerprint and text hash.
///
/// One append-only JSONL file per encoder fingerprint lives under `dir`.
/// Frozen encoders make cached vectors exact replacements for recomputation.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    entries: HashMap<String, EmbeddingVector>,
}

fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingCache {
    pub fn open(dir: impl AsRef<Path>, encoder: &TextEncoder) -> Result<Self, EncoderError> {
        let dir = dir.as_ref();
        let path = dir.join(format!("{}.jsonl", &encoder.fingerprint()[..24]));
        let cache_err = |reason: String| EncoderError::Cache {
            path: path.clone(),
            reason,
        };
        fs::create_dir_all(dir).map_err(|e| cache_err(e.to_string()))?;
        let mut entries = HashMap::new();
        if path.exists() {
            let file = fs::File::open(&path).map_err(|e| cache_err(e.to_string()))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| cache_err(e.to_string()))?;
                // A torn final line from an interrupted write is skipped.
                if let Ok(entry) = serde_json::from_str::<Entry>(&line) {
                    if entry.vector.dim() == encoder.backend.dim() {
                        entries.insert(entry.key, entry.vector);
                    }
                }
            }
        }
        Ok(EmbeddingCache { path, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Embeds `texts`, computing only cache misses and appending them to disk.
    pub fn embed_texts<S: AsRef<str> + Sync>(
        &mut self,
        encoder: &TextEncoder,
        texts: &[S],
    ) -> Result<Vec<EmbeddingVector>, EncoderError> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t.as_ref())).collect();
        let mut missing: Vec<usize> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if !self.entries.contains_key(k) && !missing.iter().any(|&j| keys[j] == *k) {
                missing.push(i);
            }
        }
        if !missing.is_empty() {
            let miss_texts: Vec<&str> = missing.iter().map(|&i| texts[i].as_ref()).collect();
            let vectors = encoder.embed_texts(&miss_texts)?;
            let cache_err = |e: std::io::Error| EncoderError::Cache {
                path: self.path.clone(),
                reason: e.to_string(),
            };
            let mut buf = Vec::new();
            for (&i, v) in missing.iter().zip(&vectors) {
                let entry = Entry {
                    key: keys[i].clone(),
                    vector: v.clone(),
                };
                serde_json::to_writer(&mut buf, &entry).expect("serializable");
                buf.push(b'\n');
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(cache_err)?;
            file.write_all(&buf).map_err(cache_err)?;
            for (&i, v) in missing.iter().zip(vectors) {
                self.entries.insert(keys[i].clone(), v);
            }
        }
        Ok(keys.iter().map(|k| self.entries[k].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::encoder::{build_stub_backend, Vocabulary};

    #[test]
    fn cached_vectors_equal_fresh_ones() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = Arc::new(Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "tired", "happy"]).unwrap());
        let enc = TextEncoder::new(vocab, Arc::new(build_stub_backend(1, 8)), 16);
        let texts = ["tired", "happy", "tired happy", "tired"];
        let fresh = enc.embed_texts(&texts).unwrap();

        let mut cache = EmbeddingCache::open(dir.path(), &enc).unwrap();
        assert_eq!(cache.embed_texts(&enc, &texts).unwrap(), fresh);
        assert_eq!(cache.len(), 3);

        let mut reopened = EmbeddingCache::open(dir.path(), &enc).unwrap();
        assert_eq!(reopened.len(), 3);
        assert_eq!(reopened.embed_texts(&enc, &texts).unwrap(), fresh);
    }
}
