use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GenerationBatch;
use crate::corpus::{Label, SentenceRecord, Source};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("requested {requested} sentences but the pool holds only {available}")]
    PoolTooSmall { requested: usize, available: usize },
}

/// All generated sentences as labeled synthetic records, in batch order
/// with burnout sentences before neutral ones. Exact duplicate texts keep
/// their first occurrence. Ids are `{prompt_id}-b{i}` / `{prompt_id}-n{i}`.
pub fn synthetic_pool(batches: &[GenerationBatch]) -> Vec<SentenceRecord> {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for b in batches {
        let labeled = [
            (Label::Burnout, 'b', &b.burnout_sentences),
            (Label::Neutral, 'n', &b.neutral_sentences),
        ];
        for (label, tag, sentences) in labeled {
            for (i, text) in sentences.iter().enumerate() {
                let text = text.trim();
                if text.is_empty() || !seen.insert(text.to_string()) {
                    continue;
                }
                pool.push(SentenceRecord::new(
                    format!("{}-{tag}{i}", b.prompt_id),
                    text,
                    Source::Synthetic,
                    label,
                ));
            }
        }
    }
    pool
}

/// Uniform sample of `n` pool sentences without replacement. The same seed
/// gives the same sample; records come back in pool order.
pub fn sample_synthetic(batches: &[GenerationBatch], n: usize, seed: u64) -> Result<Vec<SentenceRecord>, SampleError> {
    let pool = synthetic_pool(batches);
    if n > pool.len() {
        return Err(SampleError::PoolTooSmall {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    let mut pool: Vec<Option<SentenceRecord>> = pool.into_iter().map(Some).collect();
    Ok(picked
        .into_iter()
        .map(|i| pool[i].take().expect("indices are distinct"))
        .collect())
}
