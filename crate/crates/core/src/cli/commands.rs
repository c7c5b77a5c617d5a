use std::borrow::Cow;
use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::{
    resolve_train_config, svg, BuildBenchArgs, CliError, Command, EvaluateArgs, GapArgs,
    MakePrefsArgs, ReportArgs, ScoreArgs, SettingChoice, TrainToyArgs,
};
use crate::annotations::{convert_coin, parse_annotations, VideoRecord};
use crate::evalclient::{
    load_log, read_bench, run_evaluation, write_bench, EndpointConfig, HttpResponder, Responder,
    RetryPolicy, RunOptions,
};
use crate::metrics::{build_report, gap_stats, MetricReport};
use crate::panodpo::{
    build_vocab, encode_tuples, init_pair, load_checkpoint, log_prob, save_checkpoint,
    tokenize_text, train_epochs, write_history_csv, Checkpoint, Vocab,
};
use crate::perturb::{build_item, OptionRole, Setting};
use crate::prefdata::{
    build_pref_tuples, read_base_tuples, read_pref_tuples, reject_video, rejection_stream,
    resolve_path, write_pref_dataset, BaseTuple, FrameSequence, PreferenceTuple, RemoteGenerator,
    StubGenerator, TextGenerator, FRAME_TOKEN_LEVELS,
};

const GAP_BINS: usize = 20;

pub(super) fn run(cmd: &Command) -> Result<Value, CliError> {
    match cmd {
        Command::BuildBench(a) => build_bench(cmd, a),
        Command::Evaluate(a) => evaluate(cmd, a),
        Command::Score(a) => score(cmd, a),
        Command::MakePrefs(a) => make_prefs(cmd, a),
        Command::TrainToy(a) => train_toy(cmd, a),
        Command::Gap(a) => gap(cmd, a),
        Command::Report(a) => report(cmd, a),
    }
}

/// `{out}.run.json` for commands whose output is a single file.
fn sidecar(out: &Path) -> PathBuf {
    let mut s = OsString::from(out.as_os_str());
    s.push(".run.json");
    PathBuf::from(s)
}

fn write_run_config(path: &Path, cmd: &Command, resolved: Value) -> Result<(), CliError> {
    let config = json!({
        "temrob_version": env!("CARGO_PKG_VERSION"),
        "command": cmd,
        "resolved": resolved,
    });
    let mut text = serde_json::to_string_pretty(&config)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn parent_dir(path: &Path) -> &Path {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

/// `target` as a path relative to `base`, both taken from the current directory.
fn rebase(target: &Path, base: &Path) -> Result<String, CliError> {
    let abs = |p: &Path| std::path::absolute(p).map_err(|e| CliError::io(p, e));
    let (target, base) = (abs(target)?, abs(base)?);
    fn norm(p: &Path) -> Vec<std::path::Component<'_>> {
        let mut out = Vec::new();
        for c in p.components() {
            match c {
                std::path::Component::CurDir => {}
                std::path::Component::ParentDir if !out.is_empty() => {
                    out.pop();
                }
                c => out.push(c),
            }
        }
        out
    }
    let (t, b) = (norm(&target), norm(&base));
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return Ok(target.display().to_string());
    }
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    rel.extend(&t[common..]);
    Ok(if rel.as_os_str().is_empty() {
        ".".into()
    } else {
        rel.display().to_string()
    })
}

fn warn(value: Value) {
    eprintln!("{}", json!({ "warning": value }));
}

/// COIN's `{"database": ...}` JSON if the whole file is one such object, else a JSONL manifest.
fn load_annotations(text: &str) -> Result<Vec<VideoRecord>, CliError> {
    let is_coin = matches!(
        serde_json::from_str::<Value>(text),
        Ok(Value::Object(ref m)) if m.contains_key("database")
    );
    if !is_coin {
        return Ok(parse_annotations(text)?);
    }
    let conv = convert_coin(text)?;
    for (video_id, rule) in &conv.rejected {
        warn(json!({ "video_id": video_id, "rejected": rule.to_string() }));
    }
    Ok(conv.records)
}

fn build_bench(cmd: &Command, a: &BuildBenchArgs) -> Result<Value, CliError> {
    let text =
        std::fs::read_to_string(&a.annotations).map_err(|e| CliError::io(&a.annotations, e))?;
    let records = load_annotations(&text)?;
    let mut items = Vec::new();
    let mut skipped = 0;
    for record in &records {
        for severity in a.perturb.severities() {
            match build_item(record, severity, a.seed) {
                Ok(pair) => {
                    items.push(pair.clean);
                    items.push(pair.adversarial);
                }
                Err(e) => {
                    skipped += 1;
                    warn(json!({
                        "video_id": record.video_id,
                        "severity": severity,
                        "skipped": e.to_string(),
                    }));
                }
            }
        }
    }
    write_bench(&a.out, &items)?;
    write_run_config(&sidecar(&a.out), cmd, json!({ "severities": a.perturb.severities() }))?;
    Ok(json!({ "videos": records.len(), "items": items.len(), "skipped": skipped }))
}

fn endpoint_config(
    url: &str,
    model: &str,
    auth_env: Option<&String>,
    retry: RetryPolicy,
) -> EndpointConfig {
    let mut cfg = EndpointConfig::new(url, model);
    cfg.auth_token_env = auth_env.cloned();
    cfg.retry = retry;
    cfg
}

fn evaluate(cmd: &Command, a: &EvaluateArgs) -> Result<Value, CliError> {
    let mut bench = read_bench(&a.bench)?;
    bench.retain(|item| match a.setting {
        SettingChoice::Both => true,
        SettingChoice::Clean => item.setting == Setting::Clean,
        SettingChoice::Adversarial => item.setting == Setting::Adversarial,
    });
    let retry = RetryPolicy {
        max_attempts: a.max_attempts,
        backoff_base_secs: a.backoff_base,
    };
    let options = RunOptions {
        rounds: a.rounds,
        max_concurrency: a.max_concurrency as usize,
        retry,
        seed: a.seed,
        frames_dir: a.frames_dir.clone(),
    };
    let (responder, endpoint): (Box<dyn Responder>, Option<EndpointConfig>) =
        match (&a.mock, &a.endpoint, &a.model) {
            (Some(mock), None, _) => (Box::new(*mock), None),
            (None, Some(url), Some(model)) => {
                let mut cfg = endpoint_config(url, model, a.auth_env.as_ref(), retry);
                cfg.timeout_secs = a.timeout;
                cfg.max_concurrency = options.max_concurrency;
                (Box::new(HttpResponder::new(&cfg)?), Some(cfg))
            }
            _ => {
                return Err(CliError::new(
                    "usage",
                    "give either --mock MODE or --endpoint URL --model NAME",
                ))
            }
        };
    let summary = run_evaluation(&bench, responder.as_ref(), &options, &a.out)?;
    write_run_config(
        &sidecar(&a.out),
        cmd,
        json!({ "run_options": options, "endpoint": endpoint }),
    )?;
    Ok(serde_json::to_value(summary)?)
}

fn score(cmd: &Command, a: &ScoreArgs) -> Result<Value, CliError> {
    let mut records = load_log(&a.clean)?;
    records.retain(|r| r.setting == Setting::Clean);
    let mut adv = load_log(&a.adv)?;
    adv.retain(|r| r.setting == Setting::Adversarial);
    records.extend(adv);
    let report = build_report(&records)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_file(&a.out, text.as_bytes())?;
    let csv_path = a.csv.then(|| a.out.with_extension("csv"));
    if let Some(p) = &csv_path {
        if *p == a.out {
            return Err(CliError::new("usage", "--out must not end in .csv when --csv is set"));
        }
        report.write_csv(create(p)?)?;
    }
    write_run_config(&sidecar(&a.out), cmd, json!({ "csv_path": csv_path }))?;
    Ok(json!({
        "acc_clean": report.acc_clean,
        "acc_adv": report.acc_adv,
        "fr": report.fr,
        "wfr": report.wfr,
        "t_acc": report.t_acc,
    }))
}

fn make_prefs(cmd: &Command, a: &MakePrefsArgs) -> Result<Value, CliError> {
    let mut base = read_base_tuples(&a.input)?;
    let dir = parent_dir(&a.input);
    // Output paths are relative to the output file, which may live elsewhere.
    let out_dir = parent_dir(&a.out);
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    for b in &mut base {
        b.video_path = rebase(&resolve_path(dir, &b.video_path), out_dir)?;
    }
    let load = |b: &BaseTuple| FrameSequence::load_dir(&resolve_path(out_dir, &b.video_path));
    let generator: Box<dyn TextGenerator> = match &a.generator_endpoint {
        Some(url) => {
            let retry = RetryPolicy::default();
            let cfg = endpoint_config(url, &a.generator_model, a.auth_env.as_ref(), retry);
            Box::new(RemoteGenerator::new(HttpResponder::new(&cfg)?, retry))
        }
        None => Box::new(StubGenerator),
    };
    let mut built = build_pref_tuples(&base, load, a.video_mode, generator.as_ref(), a.seed);
    for s in &built.skipped {
        warn(json!({ "tuple": s.id, "skipped": s.error }));
    }
    write_pref_dataset(&a.out, &mut built.tuples)?;
    write_run_config(&sidecar(&a.out), cmd, Value::Null)?;
    Ok(json!({ "written": built.tuples.len(), "skipped": built.skipped.len() }))
}

/// Redraws every rejected video with the epoch's stream, from the frames on disk.
fn reroll(tuples: &[PreferenceTuple], dir: &Path, epoch: usize) -> Result<Vec<PreferenceTuple>, CliError> {
    tuples
        .iter()
        .map(|t| {
            let frames = FrameSequence::load_dir(&resolve_path(dir, &t.video_path))?;
            let mut rng = rejection_stream(t.seed, &t.tuple_id, t.video_mode, epoch);
            let rejected = reject_video(&frames, t.video_mode, &mut rng)?;
            Ok(PreferenceTuple {
                rejected_video_tokens: Some(rejected.tokens(FRAME_TOKEN_LEVELS)),
                ..t.clone()
            })
        })
        .collect()
}

fn train_toy(cmd: &Command, a: &TrainToyArgs) -> Result<Value, CliError> {
    let cfg = resolve_train_config(a);
    cfg.validate()?;
    let tuples = read_pref_tuples(&a.prefs)?;
    if tuples.is_empty() {
        return Err(CliError::new("prefdata", format!("{} has no tuples", a.prefs.display())));
    }
    let rerolled = if a.reroll_rejected {
        let dir = parent_dir(&a.prefs);
        (1..=cfg.epochs)
            .map(|e| reroll(&tuples, dir, e))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let mut vocab = build_vocab(&tuples);
    for t in rerolled.iter().flatten() {
        for tok in t.rejected_video_tokens.iter().flatten() {
            vocab.add(tok);
        }
    }
    let train_set = encode_tuples(&tuples, &vocab, false)?;
    let epoch_sets = rerolled
        .iter()
        .map(|set| encode_tuples(set, &vocab, false))
        .collect::<Result<Vec<_>, _>>()?;
    let heldout = match &a.heldout {
        Some(p) => encode_tuples(&read_pref_tuples(p)?, &vocab, true)?,
        None => train_set.clone(),
    };
    let mut pair = init_pair(vocab.len(), &cfg);
    let outcome = train_epochs(
        &mut pair,
        |e| match epoch_sets.get(e.wrapping_sub(1)) {
            Some(set) => Cow::Borrowed(set.as_slice()),
            None => Cow::Borrowed(train_set.as_slice()),
        },
        &heldout,
        &cfg,
    )?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let meta = json!({ "config": cfg, "history": outcome.history, "steps": outcome.steps });
    save_checkpoint(
        &a.out.join("checkpoint.bin"),
        &Checkpoint {
            params: pair.theta.clone(),
            vocab,
            meta,
        },
    )?;
    write_history_csv(&outcome.history, create(&a.out.join("history.csv"))?)?;
    write_run_config(&a.out.join("run_config.json"), cmd, json!({ "train_config": cfg }))?;
    let last = outcome.history.last().expect("history has the initial row");
    Ok(json!({
        "steps": outcome.steps,
        "initial_gap": outcome.history[0].mean_gap,
        "final_gap": last.mean_gap,
        "final_total": last.total,
    }))
}

#[derive(Serialize)]
struct GapRow<'a> {
    item_id: &'a str,
    severity: &'static str,
    setting: &'static str,
    log_p_correct: f64,
    log_p_shortcut: f64,
    gap: f64,
}

fn encode_words(vocab: &Vocab, text: &str) -> Vec<u32> {
    vocab.encode_lossy(&tokenize_text(text))
}

fn gap(cmd: &Command, a: &GapArgs) -> Result<Value, CliError> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let bench = read_bench(&a.bench)?;
    let vocab = &ckpt.vocab;
    let answer = |text: &str| {
        let mut ids = encode_words(vocab, text);
        ids.push(vocab.eos());
        ids
    };
    let mut writer = csv::Writer::from_writer(create(&a.out)?);
    let mut gaps = Vec::with_capacity(bench.len());
    for item in &bench {
        let option = |role| item.options.iter().find(|o| o.role == role);
        let (Some(correct), Some(shortcut)) = (option(OptionRole::Correct), option(OptionRole::Shortcut))
        else {
            warn(json!({ "item_id": item.item_id, "skipped": "no correct or shortcut option" }));
            continue;
        };
        // The prompt shows event descriptions before the question.
        let mut context: Vec<u32> = item
            .context_descriptions()
            .unwrap_or_default()
            .iter()
            .flat_map(|d| encode_words(vocab, d))
            .collect();
        context.extend(encode_words(vocab, &item.question));
        let lp_c = log_prob(&ckpt.params, &context, &answer(&correct.text))?;
        let lp_s = log_prob(&ckpt.params, &context, &answer(&shortcut.text))?;
        gaps.push(lp_c - lp_s);
        writer.serialize(GapRow {
            item_id: &item.item_id,
            severity: item.severity.as_str(),
            setting: item.setting.as_str(),
            log_p_correct: lp_c,
            log_p_shortcut: lp_s,
            gap: lp_c - lp_s,
        })?;
    }
    writer.flush().map_err(|e| CliError::io(&a.out, e))?;
    let stats = gap_stats(&gaps, GAP_BINS)
        .ok_or_else(|| CliError::new("metrics", "no finite gaps to summarize"))?;
    let svg_path = a.out.with_extension("svg");
    write_file(&svg_path, svg::histogram_svg(&stats, "log p(correct) - log p(shortcut)").as_bytes())?;
    write_run_config(&sidecar(&a.out), cmd, json!({ "svg_path": svg_path, "bins": GAP_BINS }))?;
    Ok(json!({ "items": gaps.len(), "mean_gap": stats.mean, "min": stats.min, "max": stats.max }))
}

fn report(cmd: &Command, a: &ReportArgs) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let report: MetricReport = serde_json::from_str(&text)?;
    let csv_path = a.out.join("metrics.csv");
    let svg_path = a.out.join("severity_bars.svg");
    report.write_csv(create(&csv_path)?)?;
    write_file(&svg_path, svg::severity_bars_svg(&report.severity_bars()).as_bytes())?;
    write_run_config(&a.out.join("run_config.json"), cmd, Value::Null)?;
    Ok(json!({ "csv": csv_path, "svg": svg_path }))
}
