//! Event-annotated video manifests.
//!
//! The manifest is JSONL, one [`VideoRecord`] per line:
//!
//! ```text
//! {"video_id": str, "duration": float,
//!  "events": [{"event_id": str, "description": str, "start": float, "end": float}, ...]}
//! ```
//!
//! Blank lines are ignored. COIN's native `database` JSON is converted with
//! [`convert_coin`]; see that function for the field mapping.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Minimum number of events a video needs before distractor options can be built.
pub const MIN_EVENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub event_id: String,
    pub description: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub duration: f64,
    pub events: Vec<EventAnnotation>,
}

impl VideoRecord {
    pub fn descriptions(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.description.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub video_count: usize,
    pub events_per_video_mean: f64,
    pub duration_min: f64,
    pub duration_max: f64,
    pub duration_mean: f64,
}

/// The rule a record broke.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationRule {
    /// `start < end` failed for the event at this index.
    EmptySpan { event: usize },
    NegativeStart { event: usize },
    NonFiniteTime { event: usize },
    BlankDescription { event: usize },
    /// Event `event` starts before its predecessor ends.
    Overlap { event: usize },
    /// Events are not sorted by start time.
    Unsorted { event: usize },
    TooFewEvents { found: usize },
    DurationTooShort { duration: f64, last_end: f64 },
}

impl fmt::Display for ValidationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySpan { event } => write!(f, "event {event}: start < end violated"),
            Self::NegativeStart { event } => write!(f, "event {event}: start must be non-negative"),
            Self::NonFiniteTime { event } => write!(f, "event {event}: times must be finite"),
            Self::BlankDescription { event } => write!(f, "event {event}: description is blank"),
            Self::Overlap { event } => {
                write!(f, "event {event}: overlaps previous event (end_i <= start_(i+1) violated)")
            }
            Self::Unsorted { event } => write!(f, "event {event}: events not sorted by start"),
            Self::TooFewEvents { found } => {
                write!(f, "events count >= {MIN_EVENTS} violated (found {found})")
            }
            Self::DurationTooShort { duration, last_end } => {
                write!(f, "duration {duration} is shorter than last event end {last_end}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("manifest line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("video {video_id}: {rule}")]
    Validation {
        video_id: String,
        rule: ValidationRule,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("COIN conversion: {0}")]
    Coin(String),
}

/// Checks every [`VideoRecord`] invariant, reporting the first violation.
pub fn validate(record: &VideoRecord) -> Result<(), AnnotationError> {
    let fail = |rule| {
        Err(AnnotationError::Validation {
            video_id: record.video_id.clone(),
            rule,
        })
    };
    for (i, e) in record.events.iter().enumerate() {
        if !e.start.is_finite() || !e.end.is_finite() {
            return fail(ValidationRule::NonFiniteTime { event: i });
        }
        if e.start < 0.0 {
            return fail(ValidationRule::NegativeStart { event: i });
        }
        if e.start >= e.end {
            return fail(ValidationRule::EmptySpan { event: i });
        }
        if e.description.trim().is_empty() {
            return fail(ValidationRule::BlankDescription { event: i });
        }
        if i > 0 {
            let prev = &record.events[i - 1];
            if e.start < prev.start {
                return fail(ValidationRule::Unsorted { event: i });
            }
            if prev.end > e.start {
                return fail(ValidationRule::Overlap { event: i });
            }
        }
    }
    if record.events.len() < MIN_EVENTS {
        return fail(ValidationRule::TooFewEvents {
            found: record.events.len(),
        });
    }
    let last_end = record.events.last().map_or(0.0, |e| e.end);
    if !(record.duration >= last_end) {
        return fail(ValidationRule::DurationTooShort {
            duration: record.duration,
            last_end,
        });
    }
    Ok(())
}

/// Parses a JSONL manifest, validating every record. Output preserves manifest order.
pub fn parse_annotations(manifest: &str) -> Result<Vec<VideoRecord>, AnnotationError> {
    let mut records = Vec::new();
    for (idx, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: VideoRecord =
            serde_json::from_str(line).map_err(|e| AnnotationError::Parse {
                line: idx + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
        validate(&record)?;
        records.push(record);
    }
    Ok(records)
}

/// Canonical JSONL rendering: one compact object per line, fields in schema order.
pub fn serialize_annotations(records: &[VideoRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("VideoRecord serializes"));
        out.push('\n');
    }
    out
}

pub fn dataset_stats(records: &[VideoRecord]) -> Result<DatasetStats, AnnotationError> {
    if records.is_empty() {
        return Err(AnnotationError::EmptyDataset);
    }
    let n = records.len() as f64;
    let event_total: usize = records.iter().map(|r| r.events.len()).sum();
    // Sorting before summation makes the mean independent of input order.
    let mut durations: Vec<f64> = records.iter().map(|r| r.duration).collect();
    durations.sort_by(f64::total_cmp);
    let duration_sum: f64 = durations.iter().sum();
    Ok(DatasetStats {
        video_count: records.len(),
        events_per_video_mean: event_total as f64 / n,
        duration_min: durations[0],
        duration_max: durations[durations.len() - 1],
        // Rounding can push the mean a ulp outside [min, max] for equal durations.
        duration_mean: (duration_sum / n).clamp(durations[0], durations[durations.len() - 1]),
    })
}

#[derive(Deserialize)]
struct CoinFile {
    database: serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct CoinVideo {
    duration: f64,
    annotation: Vec<CoinSegment>,
}

#[derive(Deserialize)]
struct CoinSegment {
    id: serde_json::Value,
    segment: [f64; 2],
    label: String,
}

/// Result of converting a COIN database: records that validated, and the rest.
#[derive(Debug, Default)]
pub struct CoinConversion {
    pub records: Vec<VideoRecord>,
    pub rejected: Vec<(String, ValidationRule)>,
}

/// Converts COIN's `{"database": {youtube_id: {...}}}` JSON into manifest records.
///
/// Mapping: `video_id` = database key; `duration` = `duration`; each entry of
/// `annotation` becomes an event with `event_id` = `id` (stringified),
/// `description` = `label`, `start`/`end` = `segment[0]`/`segment[1]`.
/// Segments are sorted by start; videos are emitted in key order. Records that
/// break an invariant land in `rejected` instead of being repaired.
pub fn convert_coin(json: &str) -> Result<CoinConversion, AnnotationError> {
    let file: CoinFile =
        serde_json::from_str(json).map_err(|e| AnnotationError::Coin(e.to_string()))?;
    let mut out = CoinConversion::default();
    for (video_id, value) in file.database {
        let video: CoinVideo = serde_json::from_value(value)
            .map_err(|e| AnnotationError::Coin(format!("{video_id}: {e}")))?;
        let mut events: Vec<EventAnnotation> = video
            .annotation
            .into_iter()
            .map(|s| EventAnnotation {
                event_id: match s.id {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                },
                description: s.label,
                start: s.segment[0],
                end: s.segment[1],
            })
            .collect();
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        let record = VideoRecord {
            video_id,
            duration: video.duration,
            events,
        };
        match validate(&record) {
            Ok(()) => out.records.push(record),
            Err(AnnotationError::Validation { video_id, rule }) => {
                out.rejected.push((video_id, rule))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn sample_record(video_id: &str, descriptions: &[&str]) -> VideoRecord {
    let events = descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| EventAnnotation {
            event_id: format!("{}", i + 1),
            description: d.to_string(),
            start: i as f64 * 10.0,
            end: i as f64 * 10.0 + 8.0,
        })
        .collect::<Vec<_>>();
    VideoRecord {
        video_id: video_id.into(),
        duration: descriptions.len() as f64 * 10.0,
        events,
    }
}
