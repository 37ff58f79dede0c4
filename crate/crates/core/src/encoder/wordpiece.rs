//! Greedy longest-match subword tokenization.

use serde::{Deserialize, Serialize};

use super::vocab::{SpecialIds, Vocabulary};

/// Words longer than this many characters are mapped straight to UNK.
const MAX_WORD_CHARS: usize = 100;

/// Fixed-length encoder input: `[CLS] content.. [SEP] [PAD]..`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub max_len: usize,
}

impl TokenSequence {
    /// Wraps content ids with CLS/SEP and pads. Content is truncated to
    /// `max_len - 2`; `max_len` below 2 is raised to 2.
    pub fn from_content(content: &[u32], specials: SpecialIds, max_len: usize) -> Self {
        let max_len = max_len.max(2);
        let kept = content.len().min(max_len - 2);
        let mut ids = Vec::with_capacity(max_len);
        ids.push(specials.cls);
        ids.extend_from_slice(&content[..kept]);
        ids.push(specials.sep);
        let used = ids.len();
        ids.resize(max_len, specials.pad);
        let mut attention_mask = vec![1u8; used];
        attention_mask.resize(max_len, 0);
        TokenSequence {
            ids,
            attention_mask,
            max_len,
        }
    }

    /// Number of unmasked positions, including CLS and SEP.
    pub fn used_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Ids strictly between CLS and SEP.
    pub fn content_ids(&self) -> &[u32] {
        let used = self.used_len();
        if used < 2 {
            return &[];
        }
        &self.ids[1..used - 1]
    }
}

/// Lowercases, splits on whitespace and segments each word greedily into the
/// longest vocabulary pieces, marking non-initial pieces with the continuation
/// prefix. A word that cannot be fully segmented becomes a single UNK.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let lowered = text.to_lowercase();
    let budget = max_len.max(2) - 2;
    let mut content = Vec::new();
    for word in lowered.split_whitespace() {
        if content.len() >= budget {
            break;
        }
        segment_word(word, vocab, &mut content);
    }
    TokenSequence::from_content(&content, vocab.specials(), max_len)
}

fn segment_word(word: &str, vocab: &Vocabulary, out: &mut Vec<u32>) {
    let chars: Vec<char> = word.chars().collect();
    let unk = vocab.specials().unk;
    if chars.len() > MAX_WORD_CHARS {
        out.push(unk);
        return;
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(vocab.continuation());
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                pieces.push(id);
                start = end;
            }
            None => {
                out.push(unk);
                return;
            }
        }
    }
    out.extend(pieces);
}

/// Joins content pieces back into text, gluing continuation pieces to the
/// preceding piece.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for &id in seq.content_ids() {
        let piece = vocab.token(id).unwrap_or("");
        match piece.strip_prefix(vocab.continuation()) {
            Some(rest) if !out.is_empty() => out.push_str(rest),
            _ => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(piece);
            }
        }
    }
    out
}
