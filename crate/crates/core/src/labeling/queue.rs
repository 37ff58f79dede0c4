use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{map_manual_label, Labeler, LabelerVerdict, LabelingError, ManualLabel, TrainingLabelOutcome, Verdict};

/// At most one verdict per `(sentence, labeler)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictIndex {
    by_sentence: BTreeMap<String, BTreeMap<Labeler, LabelerVerdict>>,
}

impl VerdictIndex {
    pub fn check(&self, v: &LabelerVerdict) -> Result<(), LabelingError> {
        match self.by_sentence.get(&v.sentence_id) {
            Some(m) if m.contains_key(&v.labeler) => Err(LabelingError::DuplicateVerdict {
                sentence_id: v.sentence_id.clone(),
                labeler: v.labeler,
            }),
            _ => Ok(()),
        }
    }

    pub fn record(&mut self, v: LabelerVerdict) -> Result<(), LabelingError> {
        self.check(&v)?;
        self.by_sentence
            .entry(v.sentence_id.clone())
            .or_default()
            .insert(v.labeler, v);
        Ok(())
    }

    /// True when at least two labelers disagree on `id`.
    pub fn has_conflict(&self, id: &str) -> bool {
        self.by_sentence.get(id).is_some_and(|m| {
            let mut seen: Option<Verdict> = None;
            m.values().any(|v| match seen {
                None => {
                    seen = Some(v.verdict);
                    false
                }
                Some(s) => s != v.verdict,
            })
        })
    }

    pub fn verdicts_for(&self, id: &str) -> Vec<LabelerVerdict> {
        self.by_sentence
            .get(id)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.by_sentence.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sentence.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVersion {
    pub version: u32,
    pub label: ManualLabel,
    pub outcome: TrainingLabelOutcome,
    pub recorded_at: DateTime<Utc>,
}

/// Append-only label history for one sentence; the last version is current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedLabel {
    pub versions: Vec<LabelVersion>,
}

impl CompletedLabel {
    pub fn current(&self) -> &LabelVersion {
        self.versions
            .last()
            .expect("completed labels have at least one version")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pending: usize,
    pub completed: usize,
    pub positive: usize,
    pub negative: usize,
    pub excluded: usize,
}

/// Pending sentence ids (FIFO) and completed manual labels. An id is never
/// both pending and completed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdjudicationQueue {
    pending: Vec<String>,
    completed: BTreeMap<String, CompletedLabel>,
}

impl AdjudicationQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> &[String] {
        &self.pending
    }

    pub fn completed(&self) -> &BTreeMap<String, CompletedLabel> {
        &self.completed
    }

    pub fn is_pending(&self, id: &str) -> bool {
        self.pending.iter().any(|p| p == id)
    }

    /// The ids `enqueue` would add, in order, after validating every id.
    pub fn plan_enqueue(&self, ids: &[String], verdicts: &VerdictIndex) -> Result<Vec<String>, LabelingError> {
        let mut fresh = Vec::new();
        let mut batch = HashSet::new();
        for id in ids {
            if !verdicts.has_conflict(id) {
                return Err(LabelingError::NoConflict(id.clone()));
            }
            if self.is_pending(id) || self.completed.contains_key(id) || !batch.insert(id.as_str()) {
                continue;
            }
            fresh.push(id.clone());
        }
        Ok(fresh)
    }

    /// Appends conflicting ids not yet pending or completed. Idempotent; if any
    /// id lacks conflicting verdicts nothing is enqueued.
    pub fn enqueue(&mut self, ids: &[String], verdicts: &VerdictIndex) -> Result<usize, LabelingError> {
        let fresh = self.plan_enqueue(ids, verdicts)?;
        let n = fresh.len();
        self.pending.extend(fresh);
        Ok(n)
    }

    pub fn plan_submit(&self, label: &ManualLabel) -> Result<TrainingLabelOutcome, LabelingError> {
        if self.completed.contains_key(&label.sentence_id) {
            return Err(LabelingError::AlreadyLabeled(label.sentence_id.clone()));
        }
        if !self.is_pending(&label.sentence_id) {
            return Err(LabelingError::NotPending(label.sentence_id.clone()));
        }
        Ok(map_manual_label(label))
    }

    /// Moves a pending id to completed with its computed outcome.
    pub fn submit(&mut self, label: ManualLabel, at: DateTime<Utc>) -> Result<TrainingLabelOutcome, LabelingError> {
        let outcome = self.plan_submit(&label)?;
        self.pending.retain(|p| *p != label.sentence_id);
        self.completed.insert(
            label.sentence_id.clone(),
            CompletedLabel {
                versions: vec![LabelVersion {
                    version: 1,
                    label,
                    outcome,
                    recorded_at: at,
                }],
            },
        );
        Ok(outcome)
    }

    pub fn plan_amend(&self, label: &ManualLabel) -> Result<(u32, TrainingLabelOutcome), LabelingError> {
        let done = self
            .completed
            .get(&label.sentence_id)
            .ok_or_else(|| LabelingError::NotLabeled(label.sentence_id.clone()))?;
        Ok((done.current().version + 1, map_manual_label(label)))
    }

    /// Records a correction as a new version of a completed label.
    pub fn amend(
        &mut self,
        label: ManualLabel,
        at: DateTime<Utc>,
    ) -> Result<(u32, TrainingLabelOutcome), LabelingError> {
        let (version, outcome) = self.plan_amend(&label)?;
        let entry = self
            .completed
            .get_mut(&label.sentence_id)
            .expect("checked by plan_amend");
        entry.versions.push(LabelVersion {
            version,
            label,
            outcome,
            recorded_at: at,
        });
        Ok((version, outcome))
    }

    pub fn stats(&self) -> QueueStats {
        let mut s = QueueStats {
            pending: self.pending.len(),
            completed: self.completed.len(),
            ..QueueStats::default()
        };
        for c in self.completed.values() {
            match c.current().outcome {
                TrainingLabelOutcome::Positive => s.positive += 1,
                TrainingLabelOutcome::Negative => s.negative += 1,
                TrainingLabelOutcome::Excluded { .. } => s.excluded += 1,
            }
        }
        s
    }
}
