//! DPO vs PanoDPO on synthetic preferences with a text shortcut.
//!
//! The training split's question carries a hint that agrees with the chosen
//! answer, so a policy can fit it while ignoring the video. The held-out split
//! points the hint at the rejected answer; only the planted video signal still
//! identifies the chosen one. The held-out gap
//! `log pi(chosen) - log pi(rejected)` therefore measures reliance on the video.
//!
//! Run (release is much faster): `cargo run --release --example train_toy_policy [OUT_DIR] [LR]`

use std::path::PathBuf;

use temrob::panodpo::{
    build_vocab, encode_tuples, init_pair, save_checkpoint, synthetic_tuples, train,
    write_history_csv, Checkpoint, LossKind, SyntheticSplit, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("temrob-examples/train_toy_policy"));
    let lr: Option<f64> = args.next().map(|s| s.parse()).transpose()?;
    std::fs::create_dir_all(&out_dir)?;

    let train_tuples = synthetic_tuples(512, 0, SyntheticSplit::Train);
    let held_tuples = synthetic_tuples(128, 0, SyntheticSplit::Shortcut);
    let vocab = build_vocab(&train_tuples);
    let train_set = encode_tuples(&train_tuples, &vocab, false)?;
    let heldout = encode_tuples(&held_tuples, &vocab, true)?;
    println!("{} training tuples, {} held-out, vocabulary {}", train_set.len(), heldout.len(), vocab.len());
    println!("example: {:?}", train_tuples[0]);

    for loss in [LossKind::Dpo, LossKind::PanoDpo] {
        let defaults = TrainConfig::default();
        let cfg = TrainConfig {
            loss,
            lr: lr.unwrap_or(defaults.lr),
            ..defaults
        };
        let mut pair = init_pair(vocab.len(), &cfg);
        let outcome = train(&mut pair, &train_set, &heldout, &cfg)?;
        println!("\n{loss:?}, {} steps, lr {:e}", outcome.steps, cfg.lr);
        write_history_csv(&outcome.history, std::io::stdout())?;

        let name = format!("{loss:?}").to_lowercase();
        write_history_csv(&outcome.history, std::fs::File::create(out_dir.join(format!("{name}_history.csv")))?)?;
        save_checkpoint(
            &out_dir.join(format!("{name}.bin")),
            &Checkpoint {
                params: pair.theta.clone(),
                vocab: vocab.clone(),
                meta: serde_json::json!({ "config": cfg }),
            },
        )?;
    }
    println!("\ncheckpoints and histories in {}", out_dir.display());
    Ok(())
}
