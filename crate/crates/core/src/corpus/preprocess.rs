use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Label, RawComment, SentenceRecord, Source};

/// Length thresholds for dropping short fragments. A sentence is dropped only
/// when it is below *both* thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_words: usize,
    pub min_chars: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_words: 3,
            min_chars: 15,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_words == 0 {
            return Err("min_words must be at least 1".into());
        }
        if self.min_chars == 0 {
            return Err("min_chars must be at least 1".into());
        }
        Ok(())
    }
}

const TERMINALS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '»', '”', '’', ')', ']'];

/// Splits text into whitespace-normalized sentences. Boundaries are line
/// breaks and runs of terminal punctuation followed by whitespace or the end
/// of the text; closing quotes and brackets stay with the sentence they end.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.split(['\n', '\r']) {
        let chars: Vec<char> = line.chars().collect();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            if TERMINALS.contains(&chars[i]) {
                let mut end = i + 1;
                while end < chars.len() && (TERMINALS.contains(&chars[end]) || CLOSERS.contains(&chars[end])) {
                    end += 1;
                }
                if end == chars.len() || chars[end].is_whitespace() {
                    push_normalized(&mut out, &chars[start..end]);
                    start = end;
                }
                i = end;
            } else {
                i += 1;
            }
        }
        if start < chars.len() {
            push_normalized(&mut out, &chars[start..]);
        }
    }
    out
}

fn push_normalized(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let normalized = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if !normalized.is_empty() {
        out.push(normalized);
    }
}

fn is_url(token: &str) -> bool {
    let t = token
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_ascii_lowercase();
    t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www.")
}

/// True when the sentence carries words: at least one alphanumeric character
/// outside URL tokens. Emoji-only, punctuation-only and URL-only sentences fail.
fn has_content(sentence: &str) -> bool {
    sentence
        .split_whitespace()
        .filter(|t| !is_url(t))
        .any(|t| t.chars().any(char::is_alphanumeric))
}

/// Turns comments into unlabeled sentence records awaiting GPT labelling.
///
/// Record ids are `{comment_id}-s{n}` where `n` is the sentence position in
/// the comment before filtering, so ids stay stable when thresholds change.
/// Exact duplicate sentence texts are kept once (first occurrence).
pub fn preprocess(comments: &[RawComment], config: &PreprocessConfig) -> Vec<SentenceRecord> {
    let min_words = config.min_words.max(1);
    let min_chars = config.min_chars.max(1);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for comment in comments {
        for (n, sentence) in split_sentences(&comment.text).into_iter().enumerate() {
            if !has_content(&sentence) {
                continue;
            }
            let record = SentenceRecord::new(
                format!("{}-s{}", comment.id, n),
                sentence,
                Source::YoutubeGpt,
                Label::Unlabeled,
            );
            if record.word_count < min_words && record.char_count < min_chars {
                continue;
            }
            if !seen.insert(record.text.clone()) {
                continue;
            }
            out.push(record);
        }
    }
    out
}
