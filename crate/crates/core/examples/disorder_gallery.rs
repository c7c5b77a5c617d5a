//! The four perturbation operators on one event list, across a few seeds.
//!
//! Run: `cargo run --example disorder_gallery [N_EVENTS]`

use temrob::perturb::{
    absolute_disorder, light_disorder, relative_disorder, severe_disorder,
    severe_disorder_swap_count,
};

const EVENTS: [&str; 8] = [
    "gather tools",
    "loosen bolts",
    "jack up the car",
    "remove the wheel",
    "mount the spare",
    "tighten bolts",
    "lower the car",
    "stow the jack",
];

fn show(order: &[usize]) -> String {
    order.iter().map(|&i| EVENTS[i]).collect::<Vec<_>>().join(" > ")
}

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(6);
    anyhow::ensure!((3..=EVENTS.len()).contains(&n), "N_EVENTS must be in 3..={}", EVENTS.len());
    println!("original: {}\n", show(&(0..n).collect::<Vec<_>>()));

    for seed in 0..3 {
        println!("seed {seed}");
        let light = light_disorder(n, seed)?;
        println!(
            "  light    (swap at {:?}): {}",
            light.adjacent_swap_position(),
            show(light.as_slice())
        );
        let severe = severe_disorder(n, seed)?;
        println!(
            "  severe   ({} transpositions): {}",
            severe_disorder_swap_count(n),
            show(severe.as_slice())
        );
        let abs = absolute_disorder(n, seed)?;
        println!("  absolute (pair {:?} reversed): {}", abs.target_pair, show(&abs.order));
        let rel = relative_disorder(n, seed)?;
        println!(
            "  relative (event {:?} inside pair {:?}): {}",
            rel.inserted, rel.target_pair, show(&rel.order)
        );
    }
    Ok(())
}
