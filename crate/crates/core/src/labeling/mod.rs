//! Labeler verdicts, discrepancy detection and the manual adjudication protocol.
//!
//! Sentences on which the LLM pre-assessment and a model iteration disagree
//! are queued for a human, who scores four protocol parameters. The
//! parameters map to a training outcome through [`map_manual_label`].

mod queue;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Class, Label, SentenceRecord, Source};

pub use queue::{AdjudicationQueue, CompletedLabel, LabelVersion, QueueStats, VerdictIndex};
pub use store::{AdjudicationStore, Event, EventBody, PendingItem, StoreError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LabelingError {
    #[error("sentence {0:?} has no conflicting verdicts on record")]
    NoConflict(String),
    #[error("sentence {0:?} is not pending adjudication")]
    NotPending(String),
    #[error("sentence {0:?} is already labeled; submit a correction instead")]
    AlreadyLabeled(String),
    #[error("sentence {0:?} has no label to correct")]
    NotLabeled(String),
    #[error("{labeler} already gave a verdict for sentence {sentence_id:?}")]
    DuplicateVerdict { sentence_id: String, labeler: Labeler },
    #[error("unknown labeler {0:?} (expected llm, human or model:<k>)")]
    BadLabeler(String),
}

/// Who produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Labeler {
    LlmPreassessor,
    ModelIteration(u32),
    Human,
}

impl fmt::Display for Labeler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Labeler::LlmPreassessor => f.write_str("llm"),
            Labeler::ModelIteration(k) => write!(f, "model:{k}"),
            Labeler::Human => f.write_str("human"),
        }
    }
}

impl FromStr for Labeler {
    type Err = LabelingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(Labeler::LlmPreassessor),
            "human" => Ok(Labeler::Human),
            _ => s
                .strip_prefix("model:")
                .and_then(|k| k.parse().ok())
                .map(Labeler::ModelIteration)
                .ok_or_else(|| LabelingError::BadLabeler(s.to_string())),
        }
    }
}

impl Serialize for Labeler {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Labeler {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LikelyBurnout,
    UnlikelyBurnout,
}

impl Verdict {
    pub fn class(self) -> Class {
        match self {
            Verdict::LikelyBurnout => Class::Burnout,
            Verdict::UnlikelyBurnout => Class::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelerVerdict {
    pub sentence_id: String,
    pub labeler: Labeler,
    pub verdict: Verdict,
    pub created_at: DateTime<Utc>,
}

/// Three-valued protocol parameter (burnout indicators, time relevance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Present,
    NotPresent,
    #[serde(rename = "na")]
    NA,
}

impl Indicator {
    pub const ALL: [Indicator; 3] = [Indicator::Present, Indicator::NotPresent, Indicator::NA];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl Relevance {
    pub const ALL: [Relevance; 2] = [Relevance::Relevant, Relevance::Irrelevant];
}

/// Annotator confidence, serialized as the integer 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Confidence {
    Zero,
    One,
}

impl Confidence {
    pub const ALL: [Confidence; 2] = [Confidence::Zero, Confidence::One];
}

impl Serialize for Confidence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(match self {
            Confidence::Zero => 0,
            Confidence::One => 1,
        })
    }
}

impl<'de> Deserialize<'de> for Confidence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Confidence::Zero),
            1 => Ok(Confidence::One),
            other => Err(serde::de::Error::custom(format!(
                "confidence must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// The four protocol parameters a human assigns to a discrepant sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualLabel {
    pub sentence_id: String,
    pub burnout_indicators: Indicator,
    pub time_relevance: Indicator,
    pub relevance: Relevance,
    pub confidence: Confidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    LowConfidence,
    InsufficientInformation,
    PastExperience,
    TimeUnknown,
}

impl ExclusionReason {
    pub fn code(self) -> &'static str {
        match self {
            ExclusionReason::LowConfidence => "low-confidence",
            ExclusionReason::InsufficientInformation => "insufficient-information",
            ExclusionReason::PastExperience => "past-experience",
            ExclusionReason::TimeUnknown => "time-unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "value", rename_all = "snake_case")]
pub enum TrainingLabelOutcome {
    Positive,
    Negative,
    Excluded { reason: ExclusionReason },
}

impl TrainingLabelOutcome {
    /// The training class, or `None` for exclusions.
    pub fn class(self) -> Option<Class> {
        match self {
            TrainingLabelOutcome::Positive => Some(Class::Burnout),
            TrainingLabelOutcome::Negative => Some(Class::Neutral),
            TrainingLabelOutcome::Excluded { .. } => None,
        }
    }
}

impl fmt::Display for TrainingLabelOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainingLabelOutcome::Positive => f.write_str("Positive"),
            TrainingLabelOutcome::Negative => f.write_str("Negative"),
            TrainingLabelOutcome::Excluded { reason } => write!(f, "Excluded: {}", reason.code()),
        }
    }
}

/// Maps protocol parameters to a training outcome. Rules apply in order:
///
/// 1. confidence 0 → excluded (`low-confidence`)
/// 2. burnout indicators N/A → excluded (`insufficient-information`)
/// 3. indicators present, time relevance not present → excluded (`past-experience`)
/// 4. indicators present, time present, relevant → positive
/// 5. indicators not present, or the comment is irrelevant → negative
/// 6. otherwise (indicators present, time N/A, relevant) → excluded (`time-unknown`)
pub fn map_manual_label(label: &ManualLabel) -> TrainingLabelOutcome {
    use Indicator::*;
    use TrainingLabelOutcome::*;
    let excluded = |reason| Excluded { reason };
    if label.confidence == Confidence::Zero {
        return excluded(ExclusionReason::LowConfidence);
    }
    if label.burnout_indicators == NA {
        return excluded(ExclusionReason::InsufficientInformation);
    }
    if label.burnout_indicators == Present && label.time_relevance == NotPresent {
        return excluded(ExclusionReason::PastExperience);
    }
    if label.burnout_indicators == Present && label.time_relevance == Present && label.relevance == Relevance::Relevant
    {
        return Positive;
    }
    if label.burnout_indicators == NotPresent || label.relevance == Relevance::Irrelevant {
        return Negative;
    }
    excluded(ExclusionReason::TimeUnknown)
}

/// Ids where both labelers have a verdict and the verdicts differ, sorted.
pub fn find_discrepancies(verdicts: &[LabelerVerdict], a: Labeler, b: Labeler) -> Vec<String> {
    let mut by_a: HashMap<&str, Verdict> = HashMap::new();
    let mut by_b: HashMap<&str, Verdict> = HashMap::new();
    for v in verdicts {
        if v.labeler == a {
            by_a.insert(&v.sentence_id, v.verdict);
        }
        if v.labeler == b {
            by_b.insert(&v.sentence_id, v.verdict);
        }
    }
    let mut out: Vec<String> = by_a
        .iter()
        .filter(|(id, va)| by_b.get(*id).is_some_and(|vb| vb != *va))
        .map(|(id, _)| id.to_string())
        .collect();
    out.sort();
    out
}

/// Outcome of comparing two labelers over a set of sentences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconciliation {
    /// Sentences labeled by `primary` without a conflicting `secondary` verdict.
    pub agreed: Vec<SentenceRecord>,
    /// Sentence ids where the two labelers disagree.
    pub discrepant: Vec<String>,
    /// Sentence ids `primary` never judged.
    pub unjudged: Vec<String>,
}

/// Splits `records` into the automatically labeled stratum (labels from
/// `primary`) and the discrepancies needing adjudication.
pub fn reconcile(
    records: &[SentenceRecord],
    verdicts: &[LabelerVerdict],
    primary: Labeler,
    secondary: Labeler,
) -> Reconciliation {
    let mut index: BTreeMap<&str, (Option<Verdict>, Option<Verdict>)> = BTreeMap::new();
    for v in verdicts {
        let slot = index.entry(v.sentence_id.as_str()).or_default();
        if v.labeler == primary {
            slot.0 = Some(v.verdict);
        } else if v.labeler == secondary {
            slot.1 = Some(v.verdict);
        }
    }
    let mut out = Reconciliation::default();
    for r in records {
        match index.get(r.id.as_str()).copied().unwrap_or_default() {
            (None, _) => out.unjudged.push(r.id.clone()),
            (Some(a), Some(b)) if a != b => out.discrepant.push(r.id.clone()),
            (Some(a), _) => out.agreed.push(
                r.clone()
                    .with_label(Label::from(a.class()))
                    .with_source(Source::YoutubeGpt),
            ),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(id: &str, labeler: Labeler, verdict: Verdict) -> LabelerVerdict {
        LabelerVerdict {
            sentence_id: id.into(),
            labeler,
            verdict,
            created_at: "2024-03-01T00:00:00Z".parse().unwrap(),
        }
    }

    fn ml(b: Indicator, t: Indicator, r: Relevance, c: Confidence) -> ManualLabel {
        ManualLabel {
            sentence_id: "s".into(),
            burnout_indicators: b,
            time_relevance: t,
            relevance: r,
            confidence: c,
            note: None,
        }
    }

    const A: Labeler = Labeler::LlmPreassessor;
    const B: Labeler = Labeler::ModelIteration(1);

    #[test]
    fn labeler_strings() {
        assert_eq!("model:3".parse::<Labeler>().unwrap(), Labeler::ModelIteration(3));
        assert_eq!(Labeler::ModelIteration(1).to_string(), "model:1");
        assert!("robot".parse::<Labeler>().is_err());
        let json = serde_json::to_string(&Labeler::LlmPreassessor).unwrap();
        assert_eq!(json, "\"llm\"");
    }

    #[test]
    fn agreement_yields_no_discrepancies() {
        let vs: Vec<_> = (1..=5)
            .flat_map(|i| {
                let id = i.to_string();
                [v(&id, A, Verdict::LikelyBurnout), v(&id, B, Verdict::LikelyBurnout)]
            })
            .collect();
        assert!(find_discrepancies(&vs, A, B).is_empty());
    }

    #[test]
    fn mixed_verdicts_brute_force() {
        use Verdict::*;
        // a: Likely on {1,2}, Unlikely on {3,4}; b: Unlikely on {2,3}, Likely on {1}, Unlikely on {4}.
        let a = [
            ("1", LikelyBurnout),
            ("2", LikelyBurnout),
            ("3", UnlikelyBurnout),
            ("4", UnlikelyBurnout),
        ];
        let b = [
            ("1", LikelyBurnout),
            ("2", UnlikelyBurnout),
            ("3", UnlikelyBurnout),
            ("4", UnlikelyBurnout),
        ];
        let mut vs = Vec::new();
        for (id, x) in a {
            vs.push(v(id, A, x));
        }
        for (id, x) in b {
            vs.push(v(id, B, x));
        }
        let mut oracle = Vec::new();
        for (ia, xa) in &a {
            for (ib, xb) in &b {
                if ia == ib && xa != xb {
                    oracle.push(ia.to_string());
                }
            }
        }
        assert_eq!(find_discrepancies(&vs, A, B), oracle);
        assert_eq!(find_discrepancies(&vs, A, B), ["2"]);
        assert_eq!(find_discrepancies(&vs, B, A), ["2"]);
    }

    #[test]
    fn single_labeler_not_discrepant() {
        let vs = [v("x", A, Verdict::LikelyBurnout)];
        assert!(find_discrepancies(&vs, A, B).is_empty());
    }

    #[test]
    fn anchored_mappings() {
        use Confidence::*;
        use Indicator::*;
        use Relevance::*;
        assert_eq!(
            map_manual_label(&ml(Present, Present, Relevant, One)),
            TrainingLabelOutcome::Positive
        );
        assert_eq!(
            map_manual_label(&ml(NotPresent, NA, Irrelevant, One)),
            TrainingLabelOutcome::Negative
        );
        assert_eq!(
            map_manual_label(&ml(Present, NotPresent, Relevant, One)),
            TrainingLabelOutcome::Excluded {
                reason: ExclusionReason::PastExperience
            }
        );
        assert_eq!(
            map_manual_label(&ml(Present, Present, Relevant, Zero)),
            TrainingLabelOutcome::Excluded {
                reason: ExclusionReason::LowConfidence
            }
        );
    }

    #[test]
    fn relevant_without_indicators_is_negative() {
        use Indicator::*;
        assert_eq!(
            map_manual_label(&ml(NotPresent, Present, Relevance::Relevant, Confidence::One)),
            TrainingLabelOutcome::Negative
        );
        assert_eq!(
            map_manual_label(&ml(Present, NA, Relevance::Relevant, Confidence::One)),
            TrainingLabelOutcome::Excluded {
                reason: ExclusionReason::TimeUnknown
            }
        );
    }

    #[test]
    fn all_36_combinations() {
        let mut tally: HashMap<String, usize> = HashMap::new();
        for b in Indicator::ALL {
            for t in Indicator::ALL {
                for r in Relevance::ALL {
                    for c in Confidence::ALL {
                        let label = ml(b, t, r, c);
                        let out = map_manual_label(&label);
                        assert_eq!(out, map_manual_label(&label));
                        *tally.entry(out.to_string()).or_default() += 1;
                    }
                }
            }
        }
        assert_eq!(tally.values().sum::<usize>(), 36);
        assert_eq!(tally["Excluded: low-confidence"], 18);
        assert_eq!(tally["Excluded: insufficient-information"], 6);
        assert_eq!(tally["Excluded: past-experience"], 2);
        assert_eq!(tally["Positive"], 1);
        assert_eq!(tally["Negative"], 8);
        assert_eq!(tally["Excluded: time-unknown"], 1);
    }

    #[test]
    fn manual_label_json() {
        let json = r#"{"sentence_id":"c1-s0","burnout_indicators":"present","time_relevance":"na","relevance":"irrelevant","confidence":1}"#;
        let l: ManualLabel = serde_json::from_str(json).unwrap();
        assert_eq!(l.time_relevance, Indicator::NA);
        assert_eq!(l.confidence, Confidence::One);
        assert!(serde_json::from_str::<ManualLabel>(&json.replace(":1}", ":2}")).is_err());
        let out = serde_json::to_value(TrainingLabelOutcome::Excluded {
            reason: ExclusionReason::LowConfidence,
        })
        .unwrap();
        assert_eq!(
            out,
            serde_json::json!({"value": "excluded", "reason": "low-confidence"})
        );
    }

    #[test]
    fn reconcile_partitions_records() {
        use Verdict::*;
        let recs: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|id| SentenceRecord::new(*id, format!("text {id}"), Source::YoutubeGpt, Label::Unlabeled))
            .collect();
        let vs = [
            v("a", A, LikelyBurnout),
            v("a", B, LikelyBurnout),
            v("b", A, UnlikelyBurnout),
            v("b", B, LikelyBurnout),
            v("c", A, UnlikelyBurnout),
        ];
        let r = reconcile(&recs, &vs, A, B);
        assert_eq!(r.agreed.len(), 2);
        assert_eq!(r.agreed[0].label, Label::Burnout);
        assert_eq!(r.agreed[1].label, Label::Neutral);
        assert_eq!(r.discrepant, ["b"]);
        assert_eq!(r.unjudged, ["d"]);
    }
}
