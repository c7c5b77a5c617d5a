use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    parse_selection, render_prompt, EvalError, PromptPayload, ResponseRequest, Responder,
    RetryPolicy, TransportError,
};
use crate::metrics::{ParsedRole, SelectionRecord};
use crate::perturb::{shuffle_option_rounds, BenchmarkItem, Modality, Setting};
use crate::rng::StreamRng;

const FRAME_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "webp", "pgm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// 1 for a single pass over the built layout, 4 for the rotated rounds.
    pub rounds: u8,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    /// Keys the backoff jitter streams.
    pub seed: u64,
    /// Intrinsic items attach the sorted images in `{frames_dir}/{video_id}/{setting}/`.
    pub frames_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            rounds: 1,
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            seed: 0,
            frames_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tasks: usize,
    /// Already present in the log before this run.
    pub skipped: usize,
    pub written: usize,
    /// Written with an error annotation after exhausting retries.
    pub failed: usize,
}

/// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`, scaled by `0.5 + 0.5 * jitter`.
pub fn backoff_delay(policy: &RetryPolicy, attempt: u32, jitter: f64) -> Duration {
    let exp = 2f64.powi(attempt.saturating_sub(1).min(30) as i32);
    let secs = policy.backoff_base_secs.max(0.0) * exp * (0.5 + 0.5 * jitter.clamp(0.0, 1.0));
    Duration::from_secs_f64(secs)
}

/// Reads a selection log. An unterminated final line (an interrupted write) is ignored.
pub fn load_log(path: &Path) -> Result<Vec<SelectionRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log(path, &text)
}

fn parse_log(path: &Path, text: &str) -> Result<Vec<SelectionRecord>, EvalError> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut out = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| EvalError::Log {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Opens the log for appending, dropping any unterminated tail, and returns the keys already present.
fn open_for_resume(path: &Path) -> Result<(File, HashSet<(String, Setting, u8)>), EvalError> {
    let io = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(io)?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(io)?;
    let keep = text.rfind('\n').map_or(0, |i| i + 1);
    if keep < text.len() {
        file.set_len(keep as u64).map_err(io)?;
    }
    file.seek(SeekFrom::Start(keep as u64)).map_err(io)?;
    let done = parse_log(path, &text[..keep])?
        .into_iter()
        .map(|r| (r.item_id, r.setting, r.round))
        .collect();
    Ok((file, done))
}

fn frame_files(dir: &Path, item: &BenchmarkItem) -> Result<Vec<PathBuf>, EvalError> {
    let dir = dir.join(&item.video_id).join(item.setting.as_str());
    let entries = std::fs::read_dir(&dir).map_err(|_| EvalError::MissingFrames(vec![dir.clone()]))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    if files.is_empty() {
        return Err(EvalError::MissingFrames(vec![dir]));
    }
    files.sort();
    Ok(files)
}

struct Task {
    item: BenchmarkItem,
    round: u8,
    payload: PromptPayload,
}

fn respond_with_retry(
    responder: &dyn Responder,
    task: &Task,
    retry: &RetryPolicy,
    seed: u64,
) -> Result<String, (TransportError, u32)> {
    let request = ResponseRequest {
        item: &task.item,
        round: task.round,
        payload: &task.payload,
    };
    let purpose = format!("retry:{}:{}", task.item.setting.as_str(), task.round);
    let mut jitter = StreamRng::new(seed, &task.item.item_id, &purpose);
    let mut attempt = 1;
    loop {
        match responder.respond(&request) {
            Ok(text) => return Ok(text),
            Err(e) if e.retryable && attempt < retry.max_attempts => {
                std::thread::sleep(backoff_delay(retry, attempt, jitter.unit_f64()));
                attempt += 1;
            }
            Err(e) => return Err((e, attempt)),
        }
    }
}

fn record_for(task: &Task, outcome: Result<String, (TransportError, u32)>) -> SelectionRecord {
    match outcome {
        Ok(text) => parse_selection(&text, &task.item, task.round),
        Err((e, attempts)) => SelectionRecord {
            item_id: task.item.item_id.clone(),
            setting: task.item.setting,
            round: task.round,
            raw_text: String::new(),
            parsed_letter: None,
            parsed_role: ParsedRole::Unparsable,
            error: Some(format!("{e} (after {attempts} attempt(s))")),
            severity: Some(task.item.severity),
        },
    }
}

/// Evaluates every item (both settings, whatever `bench` contains) and appends to `output`.
///
/// Pairs `(item_id, setting, round)` already in `output` are skipped, so an
/// interrupted run can be restarted with the same arguments. Requests that
/// still fail after the retry budget are logged as unparsable with an error.
pub fn run_evaluation(
    bench: &[BenchmarkItem],
    responder: &dyn Responder,
    options: &RunOptions,
    output: &Path,
) -> Result<RunSummary, EvalError> {
    if options.rounds != 1 && options.rounds != 4 {
        return Err(EvalError::InvalidConfig(format!(
            "rounds must be 1 or 4, got {}",
            options.rounds
        )));
    }
    if options.max_concurrency == 0 {
        return Err(EvalError::InvalidConfig("max_concurrency must be >= 1".into()));
    }
    if options.retry.max_attempts == 0 {
        return Err(EvalError::InvalidConfig("max_attempts must be >= 1".into()));
    }

    let (file, done) = open_for_resume(output)?;
    let mut summary = RunSummary::default();
    let mut tasks = Vec::new();
    for item in bench {
        let variants: Vec<BenchmarkItem> = if options.rounds == 4 {
            shuffle_option_rounds(item, item.seed)?.into()
        } else {
            vec![item.clone()]
        };
        for (round, variant) in variants.into_iter().enumerate() {
            let round = round as u8;
            summary.tasks += 1;
            if done.contains(&(variant.item_id.clone(), variant.setting, round)) {
                summary.skipped += 1;
                continue;
            }
            let frames = match (&options.frames_dir, variant.modality()) {
                (Some(dir), Modality::Intrinsic) => Some(frame_files(dir, &variant)?),
                _ => None,
            };
            let payload = render_prompt(&variant, frames.as_deref())?;
            tasks.push(Task {
                item: variant,
                round,
                payload,
            });
        }
    }
    if tasks.is_empty() {
        return Ok(summary);
    }

    let io = |source| EvalError::Io {
        path: output.to_path_buf(),
        source,
    };
    let workers = options.max_concurrency.min(tasks.len());
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::sync_channel::<(usize, SelectionRecord)>(workers * 2);
    let mut writer = BufWriter::new(file);

    std::thread::scope(|scope| -> Result<(), EvalError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (tasks, next, stop) = (&tasks, &next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let outcome = respond_with_retry(responder, task, &options.retry, options.seed);
                if tx.send((i, record_for(task, outcome))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Reorder so the log is written in task order regardless of completion order.
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        let result = (|| {
            for (i, rec) in &rx {
                pending.insert(i, rec);
                while let Some(rec) = pending.remove(&cursor) {
                    let line = serde_json::to_string(&rec).expect("record serializes");
                    writeln!(writer, "{line}").map_err(io)?;
                    writer.flush().map_err(io)?;
                    summary.written += 1;
                    summary.failed += usize::from(rec.error.is_some());
                    cursor += 1;
                }
            }
            Ok(())
        })();
        if result.is_err() {
            stop.store(true, Ordering::Relaxed);
            drop(rx);
        }
        result
    })?;
    Ok(summary)
}
