//! Preference tuples for video-, text- and response-conditioned DPO.
//!
//! Each base tuple `(video, question, chosen, rejected)` is expanded with a
//! rejected video `v_l` (frame shuffle, area crop or frame blanking) and a
//! perturbation clause `c` appended to the question.

mod frames;
mod text;
mod transform;

pub use frames::{decode_pgm, encode_pgm, read_pgm, write_pgm, Frame, FrameSequence};
pub use text::{
    negate_claim, render_perturbation_prompt, Perturbation, RemoteGenerator, StubGenerator,
    TextGenerator, PERTURBATION_PROMPT_V1, PERTURBATION_PROMPT_VERSION,
};
pub use transform::{
    crop_cell_count, reject_video, replace_frame_count, VideoMode, CROP_AREA_FRACTION,
    REPLACE_FRACTION,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

/// Quantization levels for frame tokens.
pub const FRAME_TOKEN_LEVELS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum PrefError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid frames: {0}")]
    InvalidFrames(String),
    #[error("shuffle needs at least 2 frames")]
    NoOpShuffle,
    #[error("crop needs at least 5 cells per frame, got {height}x{width}")]
    DegenerateFrame { height: usize, width: usize },
    #[error("perturbation generation failed: {0}")]
    Generation(String),
    #[error("invalid tuple {id}: {message}")]
    InvalidTuple { id: String, message: String },
    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Input row for `make-prefs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseTuple {
    pub id: String,
    /// Directory of `.pgm` frames, relative to the input file's directory unless absolute.
    pub video_path: String,
    pub question: String,
    pub chosen: String,
    pub rejected: String,
    /// Caption used by the perturbation generator.
    pub caption: String,
}

/// One preference JSONL row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTuple {
    pub tuple_id: String,
    pub video_path: String,
    pub rejected_video_path: Option<String>,
    pub question: String,
    pub perturbation: Option<String>,
    pub chosen: String,
    pub rejected: String,
    pub video_mode: VideoMode,
    pub seed: u64,
    /// Exact generator prompt, recorded for remote generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_video_tokens: Option<Vec<String>>,
}

impl PreferenceTuple {
    pub fn validate(&self) -> Result<(), PrefError> {
        let bad = |message: &str| PrefError::InvalidTuple {
            id: self.tuple_id.clone(),
            message: message.into(),
        };
        if self.chosen == self.rejected {
            return Err(bad("chosen and rejected responses are identical"));
        }
        if self.perturbation.as_deref().is_some_and(|c| c.trim().is_empty()) {
            return Err(bad("perturbation is empty"));
        }
        if self.question.trim().is_empty() {
            return Err(bad("question is empty"));
        }
        Ok(())
    }
}

/// Stream for the rejected video of one tuple. Epoch 0 is the fixed per-tuple draw.
pub fn rejection_stream(seed: u64, tuple_id: &str, mode: VideoMode, epoch: usize) -> StreamRng {
    let purpose = if epoch == 0 {
        format!("reject-video:{mode}")
    } else {
        format!("reject-video:{mode}:epoch{epoch}")
    };
    StreamRng::new(seed, tuple_id, &purpose)
}

pub fn tuple_id_for(base_id: &str, mode: VideoMode) -> String {
    format!("{base_id}/{mode}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltTuple {
    pub tuple: PreferenceTuple,
    pub rejected_frames: FrameSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedTuple {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct PrefBuild {
    pub tuples: Vec<BuiltTuple>,
    pub skipped: Vec<SkippedTuple>,
}

/// Expands base tuples with `v_l` and `c`. A tuple that fails is skipped and reported, never fatal.
pub fn build_pref_tuples(
    base: &[BaseTuple],
    load_frames: impl Fn(&BaseTuple) -> Result<FrameSequence, PrefError>,
    mode: VideoMode,
    generator: &dyn TextGenerator,
    seed: u64,
) -> PrefBuild {
    let mut out = PrefBuild::default();
    for b in base {
        let tuple_id = tuple_id_for(&b.id, mode);
        let result = (|| {
            let frames = load_frames(b)?;
            let mut rng = rejection_stream(seed, &tuple_id, mode, 0);
            let rejected_frames = reject_video(&frames, mode, &mut rng)?;
            let c = generator.generate(&b.caption, &b.question, &b.chosen)?;
            let tuple = PreferenceTuple {
                tuple_id: tuple_id.clone(),
                video_path: b.video_path.clone(),
                rejected_video_path: None,
                question: b.question.clone(),
                perturbation: Some(c.text),
                chosen: b.chosen.clone(),
                rejected: b.rejected.clone(),
                video_mode: mode,
                seed,
                perturbation_prompt: c.prompt,
                video_tokens: Some(frames.tokens(FRAME_TOKEN_LEVELS)),
                rejected_video_tokens: Some(rejected_frames.tokens(FRAME_TOKEN_LEVELS)),
            };
            tuple.validate()?;
            Ok::<_, PrefError>(BuiltTuple {
                tuple,
                rejected_frames,
            })
        })();
        match result {
            Ok(t) => out.tuples.push(t),
            Err(e) => out.skipped.push(SkippedTuple {
                id: b.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    out
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes rejected frames under `{out_stem}_rejected/` and the JSONL at `out`.
///
/// `rejected_video_path` is stored relative to the JSONL's directory.
pub fn write_pref_dataset(out: &Path, built: &mut [BuiltTuple]) -> Result<(), PrefError> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "prefs".into());
    let root = format!("{stem}_rejected");
    for b in built.iter_mut() {
        let rel = format!("{root}/{}", sanitize(&b.tuple.tuple_id));
        b.rejected_frames.save_dir(&parent.join(&rel))?;
        b.tuple.rejected_video_path = Some(rel);
    }
    let tuples: Vec<&PreferenceTuple> = built.iter().map(|b| &b.tuple).collect();
    write_jsonl(out, tuples)
}

pub(crate) fn write_jsonl<T: Serialize>(
    out: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), PrefError> {
    let io = |source| PrefError::Io {
        path: out.to_path_buf(),
        source,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out).map_err(io)?);
    for row in rows {
        let line = serde_json::to_string(&row).expect("row serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PrefError> {
    let text = std::fs::read_to_string(path).map_err(|source| PrefError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PrefError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_base_tuples(path: &Path) -> Result<Vec<BaseTuple>, PrefError> {
    read_jsonl(path)
}

pub fn write_base_tuples(path: &Path, tuples: &[BaseTuple]) -> Result<(), PrefError> {
    write_jsonl(path, tuples)
}

/// Reads and validates a preference JSONL file.
pub fn read_pref_tuples(path: &Path) -> Result<Vec<PreferenceTuple>, PrefError> {
    let tuples: Vec<PreferenceTuple> = read_jsonl(path)?;
    for t in &tuples {
        t.validate()?;
    }
    Ok(tuples)
}

pub fn write_pref_tuples(path: &Path, tuples: &[PreferenceTuple]) -> Result<(), PrefError> {
    write_jsonl(path, tuples)
}

/// Resolves `p` against `base_dir` unless it is absolute.
pub fn resolve_path(base_dir: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n: usize) -> Vec<BaseTuple> {
        (0..n)
            .map(|i| BaseTuple {
                id: format!("b{i}"),
                video_path: format!("videos/b{i}"),
                question: "What does the man do first?".into(),
                chosen: "the man pours water first".into(),
                rejected: "the man stirs the soup first".into(),
                caption: "a man cooking in a kitchen".into(),
            })
            .collect()
    }

    fn frames_for(b: &BaseTuple) -> Result<FrameSequence, PrefError> {
        let k = b.id[1..].parse::<usize>().unwrap();
        let frames = (0..4)
            .map(|i| Frame::filled(4, 5, ((i + k) % 5 + 1) as f64 / 6.0).unwrap())
            .collect();
        FrameSequence::new(frames)
    }

    #[test]
    fn ten_tuples_all_populated_and_deterministic() {
        let built = build_pref_tuples(&base(10), frames_for, VideoMode::Shuffle, &StubGenerator, 4);
        assert_eq!(built.tuples.len(), 10);
        assert!(built.skipped.is_empty());
        for t in &built.tuples {
            assert!(t.tuple.perturbation.is_some());
            assert_ne!(t.tuple.video_tokens, t.tuple.rejected_video_tokens);
        }
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str| {
            let mut b = build_pref_tuples(&base(10), frames_for, VideoMode::Shuffle, &StubGenerator, 4);
            let p = dir.path().join(name);
            write_pref_dataset(&p, &mut b.tuples).unwrap();
            std::fs::read(p).unwrap()
        };
        let (a, b) = (write("a.jsonl"), write("b.jsonl"));
        let strip = |bytes: Vec<u8>, stem: &str| String::from_utf8(bytes).unwrap().replace(stem, "X");
        assert_eq!(strip(a, "a_rejected"), strip(b, "b_rejected"));
        let back = read_pref_tuples(&dir.path().join("a.jsonl")).unwrap();
        assert_eq!(back.len(), 10);
        let saved = FrameSequence::load_dir(&dir.path().join(back[0].rejected_video_path.as_ref().unwrap()))
            .unwrap();
        assert_eq!(saved.len(), 4);
    }

    #[test]
    fn empty_base_and_per_tuple_failures() {
        assert!(build_pref_tuples(&[], frames_for, VideoMode::Crop, &StubGenerator, 1)
            .tuples
            .is_empty());
        let mut rows = base(3);
        rows[1].chosen = rows[1].rejected.clone();
        let built = build_pref_tuples(&rows, frames_for, VideoMode::Replace, &StubGenerator, 1);
        assert_eq!(built.tuples.len(), 2);
        assert_eq!(built.skipped.len(), 1);
        assert_eq!(built.skipped[0].id, "b1");
    }

    #[test]
    fn wire_fields_and_nulls() {
        let built = build_pref_tuples(&base(1), frames_for, VideoMode::Crop, &StubGenerator, 2);
        let mut t = built.tuples[0].tuple.clone();
        t.perturbation = None;
        let v = serde_json::to_value(&t).unwrap();
        for k in [
            "tuple_id", "video_path", "rejected_video_path", "question", "perturbation", "chosen",
            "rejected", "video_mode", "seed",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["perturbation"].is_null());
        assert_eq!(v["video_mode"], "crop");
        assert!(v.get("perturbation_prompt").is_none());
    }
}
