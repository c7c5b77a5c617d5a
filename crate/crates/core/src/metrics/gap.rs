use serde::{Deserialize, Serialize};

/// Per-item likelihood gaps `log p(correct) - log p(shortcut)` and their histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub gaps: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `bin_count + 1` equal-width edges over `[min, max]`.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Mean and equal-width histogram. `None` for empty or non-finite input.
pub fn gap_stats(gaps: &[f64], bin_count: usize) -> Option<GapStats> {
    if gaps.is_empty() || gaps.iter().any(|g| !g.is_finite()) {
        return None;
    }
    let bins = bin_count.max(1);
    let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let width = (max - min) / bins as f64;
    let bin_edges = (0..=bins).map(|i| min + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &g in gaps {
        let idx = if width > 0.0 {
            (((g - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Some(GapStats {
        gaps: gaps.to_vec(),
        mean,
        min,
        max,
        bin_edges,
        counts,
    })
}
