//! Clean vs adversarial evaluation with deterministic mock models, then the metric report.
//!
//! Run: `cargo run --example mock_evaluation`

use temrob::annotations::{EventAnnotation, VideoRecord};
use temrob::evalclient::{load_log, run_evaluation, MockPolicy, RunOptions};
use temrob::metrics::build_report;
use temrob::perturb::{build_item, BenchmarkItem, Setting, Severity};

const STEPS: [&str; 6] = ["measure", "cut", "sand", "glue", "clamp", "paint"];

fn bench(videos: usize, seed: u64) -> anyhow::Result<Vec<BenchmarkItem>> {
    let mut items = Vec::new();
    for v in 0..videos {
        let n = 3 + v % 4;
        let record = VideoRecord {
            video_id: format!("shelf-{v}"),
            duration: 10.0 * n as f64,
            events: (0..n)
                .map(|i| EventAnnotation {
                    event_id: i.to_string(),
                    description: format!("{} the board", STEPS[i]),
                    start: 10.0 * i as f64,
                    end: 10.0 * i as f64 + 9.0,
                })
                .collect(),
        };
        for s in Severity::ALL {
            let pair = build_item(&record, s, seed)?;
            items.extend([pair.clean, pair.adversarial]);
        }
    }
    Ok(items)
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let items = bench(8, 1)?;
    let (clean, adv): (Vec<_>, Vec<_>) = items.into_iter().partition(|i| i.setting == Setting::Clean);

    // A model that always answers right on clean input and always takes the
    // shortcut on perturbed input: the worst case the flip rates describe.
    let mut log = Vec::new();
    for (name, policy, subset) in [
        ("clean", MockPolicy::AlwaysCorrect, &clean),
        ("adversarial", MockPolicy::AlwaysShortcut, &adv),
    ] {
        let path = dir.path().join(format!("{name}.jsonl"));
        let summary = run_evaluation(subset, &policy, &RunOptions::default(), &path)?;
        println!("{name}: {summary:?}");
        log.extend(load_log(&path)?);
    }
    let report = build_report(&log)?;
    println!(
        "\nshortcut model: acc_clean {:?} acc_adv {:?} FR {:?} WFR {:?}",
        report.acc_clean, report.acc_adv, report.fr, report.wfr
    );

    // A random guesser over both settings, for contrast.
    let path = dir.path().join("uniform.jsonl");
    let both: Vec<_> = clean.iter().chain(&adv).cloned().collect();
    run_evaluation(&both, &MockPolicy::SeededUniform(7), &RunOptions::default(), &path)?;
    let report = build_report(&load_log(&path)?)?;
    println!("\nuniform guesser, per severity:");
    report.write_csv(std::io::stdout())?;
    Ok(())
}
