//! Rotating the correct option through A-D exposes a model that always answers one letter.
//!
//! Run: `cargo run --example true_accuracy_rounds`

use temrob::annotations::{EventAnnotation, VideoRecord};
use temrob::evalclient::{load_log, run_evaluation, MockPolicy, RunOptions};
use temrob::metrics::build_report;
use temrob::perturb::{build_item, shuffle_option_rounds, Severity, OPTION_LETTERS};

fn main() -> anyhow::Result<()> {
    let steps = ["boil water", "add pasta", "stir", "drain", "add sauce"];
    let record = VideoRecord {
        video_id: "pasta".into(),
        duration: 100.0,
        events: steps
            .iter()
            .enumerate()
            .map(|(i, d)| EventAnnotation {
                event_id: i.to_string(),
                description: d.to_string(),
                start: 20.0 * i as f64,
                end: 20.0 * i as f64 + 15.0,
            })
            .collect(),
    };
    let items: Vec<_> = Severity::ALL
        .into_iter()
        .map(|s| build_item(&record, s, 5).map(|p| p.adversarial))
        .collect::<Result<_, _>>()?;

    let rounds = shuffle_option_rounds(&items[0], items[0].seed)?;
    println!("{} in four rounds:", items[0].item_id);
    for (r, item) in rounds.iter().enumerate() {
        let roles: Vec<String> = item
            .options
            .iter()
            .zip(OPTION_LETTERS)
            .map(|(o, l)| format!("{l}={:?}", o.role))
            .collect();
        println!("  round {r}: {}", roles.join(" "));
    }

    let dir = tempfile::tempdir()?;
    let opts = RunOptions {
        rounds: 4,
        ..RunOptions::default()
    };
    for policy in [MockPolicy::FixedLetter('A'), MockPolicy::AlwaysCorrect, MockPolicy::SeededUniform(3)] {
        let path = dir.path().join(format!("{}.jsonl", policy.to_string().replace(':', "-")));
        run_evaluation(&items, &policy, &opts, &path)?;
        let report = build_report(&load_log(&path)?)?;
        println!(
            "{:<18} round-0 accuracy {:.2}  T-Acc {:.2}",
            policy.to_string(),
            report.acc_adv.unwrap_or(f64::NAN),
            report.t_acc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
