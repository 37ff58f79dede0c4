use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::RawComment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Jsonl,
    Csv,
}

impl DumpFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(DumpFormat::Jsonl),
            "csv" => Some(DumpFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for DumpFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(DumpFormat::Jsonl),
            "csv" => Ok(DumpFormat::Csv),
            other => Err(format!("unknown dump format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row} (line {line}): {reason}")]
    Malformed { row: usize, line: usize, reason: String },
    #[error("missing CSV column {0:?} (header must include id,video_id,text)")]
    MissingColumn(&'static str),
    #[error("duplicate comment id {id:?}: first at row {first_row}, again at row {second_row}")]
    DuplicateId {
        id: String,
        first_row: usize,
        second_row: usize,
    },
}

/// Reads a comment dump. Rows are numbered from 1 over data rows (the CSV
/// header is not a row); `line` in errors is the physical line in the file.
pub fn ingest_comments(path: impl AsRef<Path>, format: DumpFormat) -> Result<Vec<RawComment>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_comments(file, format)
}

pub fn parse_comments<R: Read>(reader: R, format: DumpFormat) -> Result<Vec<RawComment>, IngestError> {
    let rows = match format {
        DumpFormat::Jsonl => parse_jsonl(reader)?,
        DumpFormat::Csv => parse_csv(reader)?,
    };
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    for (row, comment) in rows {
        if let Some(&first_row) = seen.get(&comment.id) {
            return Err(IngestError::DuplicateId {
                id: comment.id,
                first_row,
                second_row: row,
            });
        }
        seen.insert(comment.id.clone(), row);
        out.push(comment);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonComment {
    id: String,
    video_id: String,
    text: String,
    #[serde(default)]
    fetched_at: Option<DateTime<Utc>>,
}

fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<(usize, RawComment)>, IngestError> {
    let mut rows = Vec::new();
    let mut row = 0;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Malformed {
            row: row + 1,
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let c: JsonComment = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            row,
            line: line_no,
            reason: e.to_string(),
        })?;
        let comment = checked(row, line_no, c.id, c.video_id, c.text, c.fetched_at)?;
        rows.push((row, comment));
    }
    Ok(rows)
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<(usize, RawComment)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Malformed {
            row: 0,
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(IngestError::MissingColumn(name))
    };
    let (id_col, video_col, text_col) = (col("id")?, col("video_id")?, col("text")?);
    let fetched_col = headers.iter().position(|h| h.trim() == "fetched_at");
    let width = headers.len();

    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0;
    loop {
        row += 1;
        let line_hint = rdr.position().line() as usize;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(line_hint);
                return Err(IngestError::Malformed {
                    row,
                    line,
                    reason: e.to_string(),
                });
            }
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(line_hint);
        if record.len() != width {
            return Err(IngestError::Malformed {
                row,
                line,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let fetched_at = match fetched_col.map(|c| record[c].trim()) {
            None | Some("") => None,
            Some(ts) => Some(ts.parse::<DateTime<Utc>>().map_err(|e| IngestError::Malformed {
                row,
                line,
                reason: format!("bad fetched_at {ts:?}: {e}"),
            })?),
        };
        let comment = checked(
            row,
            line,
            record[id_col].to_string(),
            record[video_col].to_string(),
            record[text_col].to_string(),
            fetched_at,
        )?;
        rows.push((row, comment));
    }
    Ok(rows)
}

fn checked(
    row: usize,
    line: usize,
    id: String,
    video_id: String,
    text: String,
    fetched_at: Option<DateTime<Utc>>,
) -> Result<RawComment, IngestError> {
    let malformed = |reason: &str| IngestError::Malformed {
        row,
        line,
        reason: reason.to_string(),
    };
    if id.trim().is_empty() {
        return Err(malformed("empty id"));
    }
    if text.trim().is_empty() {
        return Err(malformed("empty text"));
    }
    Ok(RawComment {
        id,
        video_id,
        text,
        fetched_at,
    })
}
