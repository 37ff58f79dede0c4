//! Sentence corpus: raw comment ingestion, preprocessing and per-stratum statistics.

mod ingest;
mod preprocess;
mod stats;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use ingest::{ingest_comments, parse_comments, DumpFormat, IngestError};
pub use preprocess::{preprocess, split_sentences, PreprocessConfig};
pub use stats::{compute_stats, CorpusStats, StratumStats, TotalStats};

/// One comment as exported from a video platform dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    pub video_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<DateTime<Utc>>,
}

/// Where a sentence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    YoutubeGpt,
    YoutubeManual,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Synthetic, Source::YoutubeGpt, Source::YoutubeManual];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Synthetic => "synthetic",
            Source::YoutubeGpt => "youtube_gpt",
            Source::YoutubeManual => "youtube_manual",
        }
    }

    /// Human-readable stratum name used in report tables.
    pub fn describe(self) -> &'static str {
        match self {
            Source::Synthetic => "Synthetic",
            Source::YoutubeGpt => "YouTube comments with GPT labelling",
            Source::YoutubeManual => "YouTube comments with manual labelling",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Burnout,
    Neutral,
    Unlabeled,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Burnout, Label::Neutral, Label::Unlabeled];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Burnout => "burnout",
            Label::Neutral => "neutral",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "burnout" => Ok(Label::Burnout),
            "neutral" => Ok(Label::Neutral),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Binary class of the classifier. The index order `[Neutral, Burnout]` is
/// the logit order of the head; `Burnout` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Neutral = 0,
    Burnout = 1,
}

impl Class {
    pub const ORDER: [Class; 2] = [Class::Neutral, Class::Burnout];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_positive(self) -> bool {
        self == Class::Burnout
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Neutral => "neutral",
            Class::Burnout => "burnout",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<Class> for Label {
    fn from(c: Class) -> Self {
        match c {
            Class::Neutral => Label::Neutral,
            Class::Burnout => Label::Burnout,
        }
    }
}

impl TryFrom<Label> for Class {
    type Error = Label;

    fn try_from(label: Label) -> Result<Self, Self::Error> {
        match label {
            Label::Burnout => Ok(Class::Burnout),
            Label::Neutral => Ok(Class::Neutral),
            Label::Unlabeled => Err(label),
        }
    }
}

/// One training or evaluation sentence.
///
/// Length counts are always derived from `text`; values found in serialized
/// input are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SentenceRecordWire")]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub label: Label,
    pub char_count: usize,
    pub word_count: usize,
}

#[derive(Deserialize)]
struct SentenceRecordWire {
    id: String,
    text: String,
    source: Source,
    label: Label,
}

impl From<SentenceRecordWire> for SentenceRecord {
    fn from(w: SentenceRecordWire) -> Self {
        SentenceRecord::new(w.id, w.text, w.source, w.label)
    }
}

impl SentenceRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: Source, label: Label) -> Self {
        let text = text.into();
        let char_count = text.chars().count();
        let word_count = text.split_whitespace().count();
        SentenceRecord {
            id: id.into(),
            text,
            source,
            label,
            char_count,
            word_count,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    /// The binary class, or `None` for unlabeled records.
    pub fn class(&self) -> Option<Class> {
        Class::try_from(self.label).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_counts_follow_text() {
        let r = SentenceRecord::new("a", "  Привет, мир  ", Source::Synthetic, Label::Burnout);
        assert_eq!(r.char_count, 15);
        assert_eq!(r.word_count, 2);
    }

    #[test]
    fn deserialized_counts_are_recomputed() {
        let json =
            r#"{"id":"x","text":"one two","source":"youtube_gpt","label":"neutral","char_count":99,"word_count":0}"#;
        let r: SentenceRecord = serde_json::from_str(json).unwrap();
        assert_eq!((r.char_count, r.word_count), (7, 2));
        assert_eq!(r.source, Source::YoutubeGpt);
    }

    #[test]
    fn class_conversion() {
        assert_eq!(Class::try_from(Label::Burnout), Ok(Class::Burnout));
        assert!(Class::try_from(Label::Unlabeled).is_err());
        assert_eq!(Class::Burnout.index(), 1);
    }
}
