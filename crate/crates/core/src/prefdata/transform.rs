use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FrameSequence, PrefError};
use crate::rng::StreamRng;

pub const CROP_AREA_FRACTION: f64 = 0.20;
pub const REPLACE_FRACTION: f64 = 0.5;
const MIN_CROP_CELLS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoMode {
    Shuffle,
    Crop,
    Replace,
}

impl VideoMode {
    pub const ALL: [VideoMode; 3] = [Self::Shuffle, Self::Crop, Self::Replace];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Shuffle => "shuffle",
            Self::Crop => "crop",
            Self::Replace => "replace",
        }
    }
}

impl fmt::Display for VideoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VideoMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown video mode {s:?}"))
    }
}

/// Cells zeroed by a crop: `round(0.20 * H * W)`.
pub fn crop_cell_count(height: usize, width: usize) -> usize {
    (CROP_AREA_FRACTION * (height * width) as f64).round() as usize
}

/// Frames blanked by a replace: `floor(0.5 * n)`.
pub fn replace_frame_count(n: usize) -> usize {
    (REPLACE_FRACTION * n as f64).floor() as usize
}

/// Produces the rejected video `v_l` from `v_w`. Output dimensions and length always match the input.
pub fn reject_video(
    frames: &FrameSequence,
    mode: VideoMode,
    rng: &mut StreamRng,
) -> Result<FrameSequence, PrefError> {
    let mut out = frames.clone();
    match mode {
        VideoMode::Shuffle => {
            let n = frames.len();
            if n < 2 {
                return Err(PrefError::NoOpShuffle);
            }
            // Uniform over the n! - 1 non-identity orders.
            let order = loop {
                let mut order: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut order);
                if order.iter().enumerate().any(|(i, &o)| i != o) {
                    break order;
                }
            };
            let src = frames.frames();
            for (slot, &from) in out.frames_mut().iter_mut().zip(&order) {
                *slot = src[from].clone();
            }
        }
        VideoMode::Crop => {
            let (h, w) = frames.dims();
            if h * w < MIN_CROP_CELLS {
                return Err(PrefError::DegenerateFrame { height: h, width: w });
            }
            let area = crop_cell_count(h, w);
            for frame in out.frames_mut() {
                for (r, c) in crop_cells(h, w, area, rng) {
                    frame.zero_at(r, c);
                }
            }
        }
        VideoMode::Replace => {
            let k = replace_frame_count(frames.len());
            for i in rng.sample_indices(frames.len(), k) {
                out.frames_mut()[i].zero_all();
            }
        }
    }
    Ok(out)
}

/// Cells of one crop region with exactly `area` cells.
///
/// The height is uniform over the heights that admit an exact `h x (area / h)`
/// rectangle inside the frame, then the position is uniform. When no exact
/// rectangle fits, the height is uniform over heights whose `ceil(area / h)`
/// columns fit, and the region fills that box column by column, leaving the
/// last column partial.
pub(crate) fn crop_cells(
    height: usize,
    width: usize,
    area: usize,
    rng: &mut StreamRng,
) -> Vec<(usize, usize)> {
    let exact: Vec<usize> = (1..=height)
        .filter(|h| area % h == 0 && area / h <= width)
        .collect();
    let (rows, cols, ragged) = if exact.is_empty() {
        let fits: Vec<usize> = (1..=height).filter(|h| area.div_ceil(*h) <= width).collect();
        let h = fits[rng.below(fits.len())];
        (h, area.div_ceil(h), true)
    } else {
        let h = exact[rng.below(exact.len())];
        (h, area / h, false)
    };
    let top = rng.below(height - rows + 1);
    let left = rng.below(width - cols + 1);
    let mut cells = Vec::with_capacity(area);
    'fill: for c in 0..cols {
        for r in 0..rows {
            if ragged && cells.len() == area {
                break 'fill;
            }
            cells.push((top + r, left + c));
        }
    }
    cells
}
