//! Annotations in, paired clean/adversarial benchmark out.
//!
//! Run: `cargo run --example build_benchmark [OUT_DIR]`

use std::path::PathBuf;

use temrob::annotations::{convert_coin, dataset_stats, parse_annotations, serialize_annotations};
use temrob::evalclient::write_bench;
use temrob::perturb::{build_item, Severity};

const MANIFEST: &str = r#"{"video_id":"omelette","duration":95.0,"events":[{"event_id":"1","description":"crack eggs into a bowl","start":2.0,"end":14.0},{"event_id":"2","description":"whisk the eggs","start":15.0,"end":30.0},{"event_id":"3","description":"melt butter in the pan","start":31.0,"end":50.0},{"event_id":"4","description":"pour the eggs into the pan","start":51.0,"end":66.0},{"event_id":"5","description":"fold the omelette","start":70.0,"end":90.0}]}
{"video_id":"bike-tire","duration":120.0,"events":[{"event_id":"1","description":"remove the wheel","start":0.0,"end":25.0},{"event_id":"2","description":"take out the inner tube","start":26.0,"end":50.0},{"event_id":"3","description":"patch the hole","start":51.0,"end":80.0},{"event_id":"4","description":"inflate the tire","start":81.0,"end":110.0}]}
"#;

/// A two-video excerpt in COIN's native layout. The second video has only two steps.
const COIN: &str = r#"{"database": {
  "a1b2c3": {"duration": 60.0, "annotation": [
    {"id": "1", "segment": [3.0, 10.0], "label": "unscrew the cap"},
    {"id": "2", "segment": [12.0, 30.0], "label": "pour out the old oil"},
    {"id": "3", "segment": [31.0, 55.0], "label": "fill with new oil"}]},
  "d4e5f6": {"duration": 30.0, "annotation": [
    {"id": "1", "segment": [0.0, 10.0], "label": "open the box"},
    {"id": "2", "segment": [11.0, 20.0], "label": "take out the lamp"}]}
}}"#;

fn main() -> anyhow::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("temrob-examples/build_benchmark"));
    std::fs::create_dir_all(&out_dir)?;

    let mut records = parse_annotations(MANIFEST)?;
    let coin = convert_coin(COIN)?;
    for (id, rule) in &coin.rejected {
        println!("COIN video {id} rejected: {rule}");
    }
    records.extend(coin.records);
    let stats = dataset_stats(&records)?;
    println!(
        "{} videos, {:.2} events per video, durations {:.0}-{:.0}s",
        stats.video_count, stats.events_per_video_mean, stats.duration_min, stats.duration_max
    );
    std::fs::write(out_dir.join("manifest.jsonl"), serialize_annotations(&records))?;

    let seed = 42;
    let mut items = Vec::new();
    for record in &records {
        for severity in Severity::ALL {
            let pair = build_item(record, severity, seed)?;
            if record.video_id == "omelette" {
                println!("\n== {} ({})", pair.adversarial.item_id, severity.as_str());
                if let Some(ctx) = pair.adversarial.context_descriptions() {
                    println!("adversarial context: {}", ctx.join(" | "));
                }
                if let Some(plan) = &pair.adversarial.edit_plan {
                    println!("adversarial clip order: {:?}", plan.segments);
                }
                println!("Q: {}", pair.adversarial.question);
                for (letter, (c, a)) in ['A', 'B', 'C', 'D']
                    .iter()
                    .zip(pair.clean.options.iter().zip(&pair.adversarial.options))
                {
                    println!("  {letter}. {}", a.text);
                    println!("     role clean={:?} adversarial={:?}", c.role, a.role);
                }
            }
            items.push(pair.clean);
            items.push(pair.adversarial);
        }
    }
    let path = out_dir.join("bench.jsonl");
    write_bench(&path, &items)?;
    println!("\nwrote {} items to {}", items.len(), path.display());
    Ok(())
}
