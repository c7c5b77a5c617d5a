//! Building preference tuples: rejected videos from frame grids, and perturbation clauses.
//!
//! Run: `cargo run --example preference_data [OUT_DIR]`

use std::path::PathBuf;

use temrob::prefdata::{
    build_pref_tuples, crop_cell_count, negate_claim, reject_video, render_perturbation_prompt,
    replace_frame_count, write_base_tuples, write_pref_dataset, BaseTuple, Frame, FrameSequence,
    StubGenerator, VideoMode,
};
use temrob::rng::StreamRng;

/// Frame `i` is a horizontal gradient offset by `i`, so reorders and blanks are easy to see.
fn gradient_video(frames: usize, h: usize, w: usize) -> anyhow::Result<FrameSequence> {
    let seq = (0..frames)
        .map(|i| {
            let data = (0..h * w)
                .map(|c| (0.1 + 0.1 * i as f64 + 0.05 * (c % w) as f64).min(1.0))
                .collect();
            Frame::new(h, w, data)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSequence::new(seq)?)
}

fn main() -> anyhow::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("temrob-examples/preference_data"));
    std::fs::create_dir_all(&out_dir)?;

    let video = gradient_video(6, 5, 8)?;
    println!(
        "video: {} frames of {:?}; crop zeroes {} cells per frame, replace blanks {} frames",
        video.len(),
        video.dims(),
        crop_cell_count(5, 8),
        replace_frame_count(video.len())
    );
    for mode in VideoMode::ALL {
        let mut rng = StreamRng::new(0, "demo", mode.as_str());
        let rejected = reject_video(&video, mode, &mut rng)?;
        let means: Vec<String> = rejected.frames().iter().map(|f| format!("{:.2}", f.mean())).collect();
        let zeros: Vec<usize> = rejected.frames().iter().map(Frame::count_zeros).collect();
        println!("  {:<8} frame means [{}] zeros {zeros:?}", mode.as_str(), means.join(", "));
    }
    println!("  tokens(v_w): {:?}", video.tokens(4));

    let answer = "The chef stirs the soup before adding salt.";
    println!("\nstub clause for {answer:?}:\n  Note that in the video, {}.", negate_claim(answer));
    println!("\nprompt a remote generator would receive:\n{}", render_perturbation_prompt(
        "A chef cooks soup.",
        "What happens before the salt is added?",
        answer,
    ));

    let base: Vec<BaseTuple> = (0..3)
        .map(|i| -> anyhow::Result<BaseTuple> {
            let rel = format!("frames/clip{i}");
            gradient_video(4 + i, 4, 4)?.save_dir(&out_dir.join(&rel))?;
            Ok(BaseTuple {
                id: format!("clip{i}"),
                video_path: rel,
                question: "What does the chef do first?".into(),
                chosen: "The chef chops the onions.".into(),
                rejected: "The chef serves the soup.".into(),
                caption: "A chef prepares soup.".into(),
            })
        })
        .collect::<Result<_, _>>()?;
    write_base_tuples(&out_dir.join("base.jsonl"), &base)?;

    let load = |b: &BaseTuple| FrameSequence::load_dir(&out_dir.join(&b.video_path));
    let mut built = build_pref_tuples(&base, load, VideoMode::Replace, &StubGenerator, 11);
    let out = out_dir.join("prefs.jsonl");
    write_pref_dataset(&out, &mut built.tuples)?;
    println!("\nwrote {} tuples to {}", built.tuples.len(), out.display());
    if let Some(t) = built.tuples.first() {
        println!("{}", serde_json::to_string_pretty(&t.tuple)?);
    }
    Ok(())
}
