use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::queue::{AdjudicationQueue, QueueStats, VerdictIndex};
use super::{LabelerVerdict, LabelingError, ManualLabel, TrainingLabelOutcome};
use crate::corpus::{Label, SentenceRecord, Source};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error("event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path} line {line} is corrupt: {reason}")]
    Corrupt { path: String, line: usize, reason: String },
    #[error("no text registered for sentence {0:?}")]
    MissingText(String),
}

impl StoreError {
    /// True for rejections caused by the request rather than the store.
    pub fn is_conflict(&self) -> bool {
        matches!(self, StoreError::Labeling(LabelingError::AlreadyLabeled(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Sentence {
        id: String,
        text: String,
    },
    Verdict(LabelerVerdict),
    Enqueue {
        ids: Vec<String>,
    },
    Label {
        label: ManualLabel,
        outcome: TrainingLabelOutcome,
    },
    Amend {
        label: ManualLabel,
        outcome: TrainingLabelOutcome,
        version: u32,
    },
}

/// One line of the event log: `{"type": .., "payload": .., "ts": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub body: EventBody,
    pub ts: DateTime<Utc>,
}

/// The next sentence to adjudicate, with what the labelers said about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingItem {
    pub sentence_id: String,
    pub text: Option<String>,
    pub verdicts: Vec<LabelerVerdict>,
}

struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        let io = |source| StoreError::Io {
            path: self.path.display().to_string(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

/// Verdicts, sentence texts and the adjudication queue, persisted as an
/// append-only JSONL event log. Each mutation is validated against current
/// state, made durable, then applied; reopening replays the log.
///
/// One writer per log file. Callers sharing a store across threads wrap it
/// in a mutex.
#[derive(Default)]
pub struct AdjudicationStore {
    log: Option<EventLog>,
    texts: HashMap<String, String>,
    verdicts: VerdictIndex,
    queue: AdjudicationQueue,
}

impl AdjudicationStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the log at `path` and replays it. A torn final line
    /// left by a crash mid-append is dropped; corruption elsewhere is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let shown = path.display().to_string();
        let io = |source| StoreError::Io {
            path: shown.clone(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;

        let mut store = AdjudicationStore::default();
        let mut reader = BufReader::new(&file);
        let mut good_len: u64 = 0;
        let mut line_no = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = buf.ends_with('\n');
            let trimmed = buf.trim();
            if trimmed.is_empty() {
                good_len += n as u64;
                continue;
            }
            let parsed = serde_json::from_str::<Event>(trimmed)
                .map_err(|e| e.to_string())
                .and_then(|ev| store.replay(ev).map_err(|e| e.to_string()));
            match parsed {
                Ok(()) => good_len += n as u64,
                Err(reason) if !complete => {
                    warn!(path = %shown, line = line_no, %reason, "dropping torn final event");
                    break;
                }
                Err(reason) => {
                    return Err(StoreError::Corrupt {
                        path: shown,
                        line: line_no,
                        reason,
                    })
                }
            }
        }
        drop(reader);
        let len = file.metadata().map_err(io)?.len();
        if len != good_len {
            file.set_len(good_len).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        } else if good_len > 0 && !ends_with_newline(&mut file).map_err(io)? {
            // A complete final event that only lacks its newline.
            file.write_all(b"\n").map_err(io)?;
        }
        store.log = Some(EventLog { path, file });
        Ok(store)
    }

    fn replay(&mut self, event: Event) -> Result<(), LabelingError> {
        match event.body {
            EventBody::Sentence { id, text } => {
                self.texts.insert(id, text);
            }
            EventBody::Verdict(v) => self.verdicts.record(v)?,
            EventBody::Enqueue { ids } => {
                self.queue.enqueue(&ids, &self.verdicts)?;
            }
            EventBody::Label { label, .. } => {
                self.queue.submit(label, event.ts)?;
            }
            EventBody::Amend { label, .. } => {
                self.queue.amend(label, event.ts)?;
            }
        }
        Ok(())
    }

    fn persist(&mut self, body: EventBody) -> Result<Event, StoreError> {
        let event = Event { body, ts: Utc::now() };
        if let Some(log) = self.log.as_mut() {
            log.append(&event)?;
        }
        Ok(event)
    }

    /// Registers the text shown to annotators for `id`. Re-registering the
    /// same text is a no-op.
    pub fn add_sentence(&mut self, id: &str, text: &str) -> Result<(), StoreError> {
        if self.texts.get(id).is_some_and(|t| t == text) {
            return Ok(());
        }
        self.persist(EventBody::Sentence {
            id: id.to_string(),
            text: text.to_string(),
        })?;
        self.texts.insert(id.to_string(), text.to_string());
        Ok(())
    }

    pub fn record_verdict(&mut self, verdict: LabelerVerdict) -> Result<(), StoreError> {
        self.verdicts.check(&verdict)?;
        self.persist(EventBody::Verdict(verdict.clone()))?;
        self.verdicts.record(verdict)?;
        Ok(())
    }

    /// Queues conflicting sentences; returns how many were newly added.
    pub fn enqueue(&mut self, ids: &[String]) -> Result<usize, StoreError> {
        let fresh = self.queue.plan_enqueue(ids, &self.verdicts)?;
        if fresh.is_empty() {
            return Ok(0);
        }
        self.persist(EventBody::Enqueue { ids: fresh.clone() })?;
        Ok(self.queue.enqueue(&fresh, &self.verdicts)?)
    }

    pub fn submit(&mut self, label: ManualLabel) -> Result<TrainingLabelOutcome, StoreError> {
        let outcome = self.queue.plan_submit(&label)?;
        let event = self.persist(EventBody::Label {
            label: label.clone(),
            outcome,
        })?;
        Ok(self.queue.submit(label, event.ts)?)
    }

    /// Records a correction to an already completed label as a new version.
    pub fn amend(&mut self, label: ManualLabel) -> Result<(u32, TrainingLabelOutcome), StoreError> {
        let (version, outcome) = self.queue.plan_amend(&label)?;
        let event = self.persist(EventBody::Amend {
            label: label.clone(),
            outcome,
            version,
        })?;
        Ok(self.queue.amend(label, event.ts)?)
    }

    pub fn next_pending(&self) -> Option<PendingItem> {
        self.queue.pending().first().map(|id| PendingItem {
            sentence_id: id.clone(),
            text: self.texts.get(id).cloned(),
            verdicts: self.verdicts.verdicts_for(id),
        })
    }

    pub fn stats(&self) -> QueueStats {
        self.queue.stats()
    }

    pub fn queue(&self) -> &AdjudicationQueue {
        &self.queue
    }

    pub fn verdicts(&self) -> &VerdictIndex {
        &self.verdicts
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.texts.get(id).map(String::as_str)
    }

    /// Current manual labels that map to a training class, as
    /// manually labeled records sorted by id.
    pub fn manual_records(&self) -> Result<Vec<SentenceRecord>, StoreError> {
        let mut out = Vec::new();
        for (id, done) in self.queue.completed() {
            let Some(class) = done.current().outcome.class() else {
                continue;
            };
            let text = self.texts.get(id).ok_or_else(|| StoreError::MissingText(id.clone()))?;
            out.push(SentenceRecord::new(
                id.clone(),
                text.clone(),
                Source::YoutubeManual,
                Label::from(class),
            ));
        }
        Ok(out)
    }
}

fn ends_with_newline(file: &mut File) -> std::io::Result<bool> {
    use std::io::Read;
    let mut last = [0u8; 1];
    file.seek(SeekFrom::End(-1))?;
    file.read_exact(&mut last)?;
    file.seek(SeekFrom::End(0))?;
    Ok(last[0] == b'\n')
}
