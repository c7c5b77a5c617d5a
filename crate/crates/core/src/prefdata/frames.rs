use std::path::{Path, PathBuf};

use super::PrefError;

/// Grayscale frame, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, PrefError> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(PrefError::InvalidFrames(format!(
                "{height}x{width} frame with {} values",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PrefError::InvalidFrames(format!("value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self, PrefError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub(crate) fn zero_at(&mut self, row: usize, col: usize) {
        self.data[row * self.width + col] = 0.0;
    }

    pub(crate) fn zero_all(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|v| **v == 0.0).count()
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

/// Non-empty sequence of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self, PrefError> {
        let Some(first) = frames.first() else {
            return Err(PrefError::InvalidFrames("empty frame sequence".into()));
        };
        let dims = (first.height, first.width);
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| (f.height, f.width) != dims)
        {
            return Err(PrefError::InvalidFrames(format!(
                "frame {i} is {}x{}, expected {}x{}",
                f.height, f.width, dims.0, dims.1
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub(crate) fn frames_mut(&mut self) -> &mut [Frame] {
        &mut self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.frames[0].height, self.frames[0].width)
    }

    /// One token per frame, `v{position}_{level}`, with the frame mean quantized into `levels` bins.
    pub fn tokens(&self, levels: usize) -> Vec<String> {
        let levels = levels.max(1);
        self.frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let level = ((f.mean() * levels as f64) as usize).min(levels - 1);
                format!("v{i}_{level}")
            })
            .collect()
    }

    /// Loads every `.pgm` file in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self, PrefError> {
        let io = |source| PrefError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
            })
            .collect();
        paths.sort();
        let frames = paths.iter().map(|p| read_pgm(p)).collect::<Result<_, _>>()?;
        Self::new(frames)
    }

    /// Writes `frame_0000.pgm`, `frame_0001.pgm`, ... into `dir`, creating it.
    pub fn save_dir(&self, dir: &Path) -> Result<(), PrefError> {
        std::fs::create_dir_all(dir).map_err(|source| PrefError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (i, f) in self.frames.iter().enumerate() {
            write_pgm(&dir.join(format!("frame_{i:04}.pgm")), f)?;
        }
        Ok(())
    }
}

/// Encodes a frame as binary PGM (P5) with 16-bit samples.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width, frame.height).into_bytes();
    for v in &frame.data {
        let s = (v * 65535.0).round() as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<(), PrefError> {
    std::fs::write(path, encode_pgm(frame)).map_err(|source| PrefError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_pgm(path: &Path) -> Result<Frame, PrefError> {
    let bytes = std::fs::read(path).map_err(|source| PrefError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pgm(&bytes).map_err(|m| PrefError::InvalidFrames(format!("{}: {m}", path.display())))
}

/// Decodes P5 (8- or 16-bit) or P2 portable graymaps into `[0, 1]` values.
pub fn decode_pgm(bytes: &[u8]) -> Result<Frame, String> {
    let mut pos = 0;
    let mut header = Vec::new();
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    let n = width * height;
    let scale = maxval as f64;
    let samples: Vec<usize> = match header[0].as_str() {
        "P5" => {
            // Exactly one whitespace byte separates the header from the raster.
            let raster = bytes.get(pos + 1..).ok_or("missing raster")?;
            let bps = if maxval < 256 { 1 } else { 2 };
            if raster.len() < n * bps {
                return Err(format!("raster has {} bytes, need {}", raster.len(), n * bps));
            }
            if bps == 1 {
                raster[..n].iter().map(|b| *b as usize).collect()
            } else {
                raster[..2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                    .collect()
            }
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let v: Vec<usize> = text
                .split_ascii_whitespace()
                .take(n)
                .map(num)
                .collect::<Result<_, _>>()?;
            if v.len() < n {
                return Err(format!("raster has {} samples, need {n}", v.len()));
            }
            v
        }
        other => return Err(format!("unsupported magic {other:?}")),
    };
    if let Some(s) = samples.iter().find(|s| **s > maxval) {
        return Err(format!("sample {s} exceeds maxval {maxval}"));
    }
    Frame::new(height, width, samples.iter().map(|s| *s as f64 / scale).collect())
        .map_err(|e| e.to_string())
}
