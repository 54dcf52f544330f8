//! Submission CSV: one row per annotated frame.
//!
//! Header: `ID,Driver_State_Changed,Hazard_Track_1..S,Hazard_Name_1..S`,
//! where `ID` is `{video_id}_{frame_index}` (split on the last underscore)
//! and `Driver_State_Changed` is `True` or `False`. Hazards fill the slots
//! from the left; unused slots are empty.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

/// Layout version of the CSV written by [`write_submission`].
pub const SUBMISSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SubmissionError {
    #[error("{source_name}: bad header: {message}")]
    Header { source_name: String, message: String },
    #[error("{source_name}, line {line}: {message}")]
    Row {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("{source_name}, line {line}: duplicate ID {id}")]
    DuplicateId { source_name: String, line: u64, id: String },
    #[error("{source_name}: {source}")]
    Csv {
        source_name: String,
        #[source]
        source: csv::Error,
    },
    #[error("video {video_id}, frame {frame_index}: {count} hazards exceed {slots} slots")]
    TooManyHazards {
        video_id: String,
        frame_index: usize,
        count: usize,
        slots: usize,
    },
    #[error("invalid row key: {0}")]
    InvalidKey(String),
    #[error("slot count must be at least 1")]
    ZeroSlots,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HazardSlot {
    pub track_id: String,
    /// Caption; may be empty.
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubmissionRow {
    pub driver_state_changed: bool,
    pub hazards: Vec<HazardSlot>,
}

/// Rows keyed by `(video_id, frame_index)`, at most `slots` hazards each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionTable {
    slots: usize,
    rows: BTreeMap<(String, usize), SubmissionRow>,
}

impl SubmissionTable {
    pub fn new(slots: usize) -> Result<Self, SubmissionError> {
        if slots == 0 {
            return Err(SubmissionError::ZeroSlots);
        }
        Ok(Self {
            slots,
            rows: BTreeMap::new(),
        })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Inserts or replaces a row. Video ids must be non-empty and track ids
    /// non-empty.
    pub fn insert(&mut self, video_id: &str, frame_index: usize, row: SubmissionRow) -> Result<(), SubmissionError> {
        if video_id.is_empty() {
            return Err(SubmissionError::InvalidKey("empty video id".into()));
        }
        if row.hazards.len() > self.slots {
            return Err(SubmissionError::TooManyHazards {
                video_id: video_id.into(),
                frame_index,
                count: row.hazards.len(),
                slots: self.slots,
            });
        }
        if row.hazards.iter().any(|h| h.track_id.is_empty()) {
            return Err(SubmissionError::InvalidKey(format!(
                "{video_id}_{frame_index}: empty track id"
            )));
        }
        self.rows.insert((video_id.to_string(), frame_index), row);
        Ok(())
    }

    pub fn get(&self, video_id: &str, frame_index: usize) -> Option<&SubmissionRow> {
        self.rows.get(&(video_id.to_string(), frame_index))
    }

    /// Rows in `(video_id, frame_index)` order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, usize, &SubmissionRow)> {
        self.rows.iter().map(|((v, f), r)| (v.as_str(), *f, r))
    }

    /// Rows of one video in frame order.
    pub fn video_rows<'a>(&'a self, video_id: &'a str) -> impl Iterator<Item = (usize, &'a SubmissionRow)> + 'a {
        self.rows
            .range((video_id.to_string(), 0)..=(video_id.to_string(), usize::MAX))
            .map(|((_, f), r)| (*f, r))
    }

    pub fn video_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.rows.keys().map(|(v, _)| v.as_str()).collect();
        ids.dedup();
        ids
    }
}

pub fn header(slots: usize) -> Vec<String> {
    let mut h = vec!["ID".to_string(), "Driver_State_Changed".to_string()];
    h.extend((1..=slots).map(|i| format!("Hazard_Track_{i}")));
    h.extend((1..=slots).map(|i| format!("Hazard_Name_{i}")));
    h
}

pub fn row_id(video_id: &str, frame_index: usize) -> String {
    format!("{video_id}_{frame_index}")
}

/// Splits an ID on its last underscore.
pub fn parse_row_id(id: &str) -> Option<(&str, usize)> {
    let (video, frame) = id.rsplit_once('_')?;
    if video.is_empty() || frame.is_empty() || !frame.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // canonical decimal only, so that the ID round-trips
    if frame.len() > 1 && frame.starts_with('0') {
        return None;
    }
    Some((video, frame.parse().ok()?))
}

pub fn write_submission_to<W: Write>(table: &SubmissionTable, out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header(table.slots))?;
    let mut record = Vec::with_capacity(2 + 2 * table.slots);
    for (video, frame, row) in table.rows() {
        record.clear();
        record.push(row_id(video, frame));
        record.push(if row.driver_state_changed { "True" } else { "False" }.to_string());
        for i in 0..table.slots {
            record.push(row.hazards.get(i).map_or_else(String::new, |h| h.track_id.clone()));
        }
        for i in 0..table.slots {
            record.push(row.hazards.get(i).map_or_else(String::new, |h| h.name.clone()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_submission(table: &SubmissionTable, path: &Path) -> Result<(), SubmissionError> {
    let file = std::fs::File::create(path).map_err(|e| SubmissionError::Csv {
        source_name: path.display().to_string(),
        source: e.into(),
    })?;
    write_submission_to(table, std::io::BufWriter::new(file)).map_err(|source| SubmissionError::Csv {
        source_name: path.display().to_string(),
        source,
    })
}

pub fn read_submission(path: &Path) -> Result<SubmissionTable, SubmissionError> {
    let source_name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| SubmissionError::Csv {
        source_name: source_name.clone(),
        source: e.into(),
    })?;
    read_submission_from(file, &source_name)
}

/// Parses a submission; the slot count comes from the header.
pub fn read_submission_from<R: Read>(input: R, source_name: &str) -> Result<SubmissionTable, SubmissionError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = r.records();
    let csv_err = |source| SubmissionError::Csv {
        source_name: source_name.into(),
        source,
    };
    let head = records
        .next()
        .ok_or_else(|| SubmissionError::Header {
            source_name: source_name.into(),
            message: "file is empty".into(),
        })?
        .map_err(csv_err)?;
    let width = head.len();
    if width < 4 || width % 2 != 0 {
        return Err(SubmissionError::Header {
            source_name: source_name.into(),
            message: format!("expected 2 + 2·S columns, got {width}"),
        });
    }
    let slots = (width - 2) / 2;
    let expected = header(slots);
    if let Some(i) = (0..width).find(|&i| head[i] != expected[i]) {
        return Err(SubmissionError::Header {
            source_name: source_name.into(),
            message: format!("column {} is {:?}, expected {:?}", i + 1, &head[i], expected[i]),
        });
    }

    let mut table = SubmissionTable::new(slots)?;
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| SubmissionError::Row {
            source_name: source_name.into(),
            line,
            message,
        };
        if rec.len() != width {
            return Err(bad(format!("expected {width} fields, got {}", rec.len())));
        }
        let id = &rec[0];
        let (video, frame) =
            parse_row_id(id).ok_or_else(|| bad(format!("ID {id:?} is not {{video_id}}_{{frame_index}}")))?;
        let driver_state_changed = match &rec[1] {
            "True" => true,
            "False" => false,
            other => {
                return Err(bad(format!(
                    "Driver_State_Changed must be True or False, got {other:?}"
                )))
            }
        };
        let mut hazards = Vec::new();
        let mut ended = false;
        for i in 0..slots {
            let (track, name) = (&rec[2 + i], &rec[2 + slots + i]);
            if track.is_empty() {
                if !name.is_empty() {
                    return Err(bad(format!(
                        "Hazard_Name_{} is set but Hazard_Track_{} is empty",
                        i + 1,
                        i + 1
                    )));
                }
                ended = true;
            } else if ended {
                return Err(bad(format!("Hazard_Track_{} follows an empty slot", i + 1)));
            } else {
                hazards.push(HazardSlot {
                    track_id: track.to_string(),
                    name: name.to_string(),
                });
            }
        }
        if table.get(video, frame).is_some() {
            return Err(SubmissionError::DuplicateId {
                source_name: source_name.into(),
                line,
                id: id.to_string(),
            });
        }
        table.insert(
            video,
            frame,
            SubmissionRow {
                driver_state_changed,
                hazards,
            },
        )?;
    }
    Ok(table)
}
