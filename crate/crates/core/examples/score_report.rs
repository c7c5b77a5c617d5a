//! Logs to a metric report, a CSV table and SVG charts.
//!
//! Run: `cargo run --example score_report [OUT_DIR]`

use std::path::PathBuf;

use temrob::cli::{histogram_svg, severity_bars_svg};
use temrob::metrics::{build_report, gap_stats, ParsedRole, SelectionRecord};
use temrob::perturb::{Setting, Severity};
use temrob::rng::StreamRng;

/// A made-up model that is right 80% of the time on clean input and, when perturbed,
/// falls for the shortcut with a severity-dependent probability.
fn simulated_log(items_per_severity: usize) -> Vec<SelectionRecord> {
    let mut records = Vec::new();
    for (s, shortcut_rate) in Severity::ALL.into_iter().zip([0.2, 0.45, 0.3, 0.6]) {
        for i in 0..items_per_severity {
            let id = format!("{}-{i}", s.as_str());
            let mut rng = StreamRng::new(0, &id, "simulated-model");
            let clean = if rng.unit_f64() < 0.8 { ParsedRole::Correct } else { ParsedRole::Incorrect };
            let u = rng.unit_f64();
            let adv = if u < shortcut_rate {
                ParsedRole::Shortcut
            } else if u < shortcut_rate + 0.1 {
                ParsedRole::Incorrect
            } else {
                ParsedRole::Correct
            };
            for (setting, role) in [(Setting::Clean, clean), (Setting::Adversarial, adv)] {
                records.push(SelectionRecord {
                    item_id: id.clone(),
                    setting,
                    round: 0,
                    raw_text: String::new(),
                    parsed_letter: None,
                    parsed_role: role,
                    error: None,
                    severity: Some(s),
                });
            }
        }
    }
    records
}

fn main() -> anyhow::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("temrob-examples/score_report"));
    std::fs::create_dir_all(&out_dir)?;

    let report = build_report(&simulated_log(200))?;
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    report.write_csv(std::io::stdout())?;
    report.write_csv(std::fs::File::create(out_dir.join("metrics.csv"))?)?;
    std::fs::write(out_dir.join("severity_bars.svg"), severity_bars_svg(&report.severity_bars()))?;

    // Likelihood gaps are usually produced by `temrob gap`; here they are simulated.
    let mut rng = StreamRng::unscoped(1, "simulated-gaps");
    let gaps: Vec<f64> = (0..500)
        .map(|_| (0..4).map(|_| rng.unit_f64()).sum::<f64>() - 1.6)
        .collect();
    let stats = gap_stats(&gaps, 20).expect("finite gaps");
    println!("\ngap mean {:.4} over {} items", stats.mean, stats.gaps.len());
    std::fs::write(out_dir.join("gaps.svg"), histogram_svg(&stats, "log p(correct) - log p(shortcut)"))?;
    println!("wrote report.json, metrics.csv and two SVG charts to {}", out_dir.display());
    Ok(())
}
