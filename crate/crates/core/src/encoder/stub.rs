//! Deterministic stand-in for a pretrained encoder.
//!
//! Each token id owns a pseudo-random vector derived from `(seed, id)`; a
//! sequence embeds to the mean of its content-token vectors. The result
//! depends only on the multiset of content ids, so sentences drawn from
//! disjoint token pools land in disjoint convex hulls and are linearly
//! separable whenever the pools' vectors are independent.

use super::wordpiece::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEncoder {
    seed: u64,
    dim: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl StubEncoder {
    pub fn new(seed: u64, dim: usize) -> Self {
        StubEncoder { seed, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Component `j` of the vector for `token`, uniform in [-1, 1).
    fn component(&self, token: u32, j: usize) -> f64 {
        let h = splitmix64(splitmix64(self.seed ^ (u64::from(token) << 32)) ^ j as u64);
        (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    /// Mean of token vectors over the multiset `ids`; the zero vector when empty.
    pub fn embed_ids(&self, ids: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if ids.is_empty() {
            return out;
        }
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        for &id in &sorted {
            for (j, v) in out.iter_mut().enumerate() {
                *v += self.component(id, j);
            }
        }
        let n = sorted.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn embed_sequence(&self, seq: &TokenSequence) -> Vec<f64> {
        self.embed_ids(seq.content_ids())
    }
}
