//! Dataset ingestion and pair sampling.
//!
//! Three sources produce [`ImageSample`]s: IDX files (MNIST), a directory
//! holding `manifest.jsonl` plus binary PGM images, and the built-in
//! synthetic text renderer. Everything lands on a fixed canvas with pixel
//! values in `[0, 1]`.

mod font;
mod idx;
mod manifest;
mod pairs;
mod synthetic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use idx::{read_idx, write_idx};
pub use manifest::{decode_pgm, encode_pgm, read_manifest, write_manifest};
pub use pairs::{sample_pair_minibatch, PairExample, PairLabel, PairSampler, PAIRS_PER_KIND};
pub use synthetic::{render_synthetic, synthetic_corpus, SyntheticStyle};

/// Label carried by images that contain no text.
pub const BLANK_LABEL: &str = "\u{2400}BLANK\u{2400}";

/// Trims surrounding whitespace and collapses internal runs of whitespace to
/// one space. Empty results map to [`BLANK_LABEL`].
pub fn canonicalize_label(raw: &str) -> String {
    let joined = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined.is_empty() {
        BLANK_LABEL.to_string()
    } else {
        joined
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Idx,
    Manifest,
    Synthetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
}

impl Canvas {
    pub const TEXT: Canvas = Canvas {
        height: 28,
        width: 56,
    };
    pub const DIGIT: Canvas = Canvas {
        height: 28,
        width: 28,
    };

    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "canvas must be non-empty, got {height}×{width}"
            )));
        }
        Ok(Self { height, width })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    /// `[1, H, W]`, values in `[0, 1]`.
    pub pixels: Tensor,
    pub label: String,
    pub source: Source,
}

impl ImageSample {
    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

/// Scales a `height × width` raster by `min(H/h, W/w)` and centers it on the
/// canvas, padding with zeros. Resampling is area-weighted, so a raster that
/// already has the canvas size is copied unchanged.
pub fn fit_to_canvas(pixels: &[f64], height: usize, width: usize, canvas: Canvas) -> Result<Tensor> {
    if height == 0 || width == 0 || pixels.len() != height * width {
        return Err(Error::Shape(format!(
            "raster of {} values does not match {height}×{width}",
            pixels.len()
        )));
    }
    let scale = (canvas.height as f64 / height as f64).min(canvas.width as f64 / width as f64);
    let new_h = ((height as f64 * scale).round() as usize).clamp(1, canvas.height);
    let new_w = ((width as f64 * scale).round() as usize).clamp(1, canvas.width);
    let top = (canvas.height - new_h) / 2;
    let left = (canvas.width - new_w) / 2;

    let mut out = vec![0.0; canvas.height * canvas.width];
    // source extent covered by one destination pixel, per axis
    let sy = height as f64 / new_h as f64;
    let sx = width as f64 / new_w as f64;
    for y in 0..new_h {
        let (y0, y1) = (y as f64 * sy, (y + 1) as f64 * sy);
        for x in 0..new_w {
            let (x0, x1) = (x as f64 * sx, (x + 1) as f64 * sx);
            let mut acc = 0.0;
            let mut area = 0.0;
            for r in (y0.floor() as usize)..(y1.ceil() as usize).min(height) {
                let wy = (y1.min(r as f64 + 1.0) - y0.max(r as f64)).max(0.0);
                if wy == 0.0 {
                    continue;
                }
                for c in (x0.floor() as usize)..(x1.ceil() as usize).min(width) {
                    let wx = (x1.min(c as f64 + 1.0) - x0.max(c as f64)).max(0.0);
                    acc += wy * wx * pixels[r * width + c];
                    area += wy * wx;
                }
            }
            out[(top + y) * canvas.width + left + x] = if area > 0.0 { acc / area } else { 0.0 };
        }
    }
    Tensor::new(vec![1, canvas.height, canvas.width], out)
}

/// Loads a dataset directory: `manifest.jsonl` takes precedence, otherwise
/// the directory must hold one `*images-idx3-ubyte[.gz]` file with a matching
/// `*labels-idx1-ubyte[.gz]`. Samples are fitted to `canvas`.
pub fn load_dataset(dir: &Path, canvas: Canvas) -> Result<Vec<ImageSample>> {
    if dir.join("manifest.jsonl").is_file() {
        return read_manifest(dir, canvas);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut images = None;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.contains("images-idx3-ubyte") {
            if images.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "{}: more than one IDX image file",
                    dir.display()
                )));
            }
            images = Some(path);
        }
    }
    let images = images.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{}: neither manifest.jsonl nor an IDX image file found",
            dir.display()
        ))
    })?;
    let name = images.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let labels = images.with_file_name(name.replace("images-idx3-ubyte", "labels-idx1-ubyte"));
    let samples = read_idx(&images, &labels)?;
    samples
        .into_iter()
        .map(|s| {
            if s.height() == canvas.height && s.width() == canvas.width {
                return Ok(s);
            }
            let pixels = fit_to_canvas(s.pixels.data(), s.height(), s.width(), canvas)?;
            Ok(ImageSample { pixels, ..s })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels() {
        assert_eq!(canonicalize_label("  Mountain \t  Laurel \n"), "Mountain Laurel");
        assert_eq!(canonicalize_label(""), BLANK_LABEL);
        assert_eq!(canonicalize_label(" \t "), BLANK_LABEL);
        assert_eq!(canonicalize_label("2016"), "2016");
    }

    #[test]
    fn fit_is_identity_on_canvas_sized_input() {
        let px: Vec<f64> = (0..28 * 56).map(|i| (i % 17) as f64 / 16.0).collect();
        let t = fit_to_canvas(&px, 28, 56, Canvas::TEXT).unwrap();
        assert_eq!(t.data(), &px[..]);
    }

    #[test]
    fn fit_scales_and_centers() {
        // 100 wide × 20 tall onto 28×56: scale = min(28/20, 56/100) = 0.56
        let px = vec![1.0; 20 * 100];
        let t = fit_to_canvas(&px, 20, 100, Canvas::TEXT).unwrap();
        let new_h = (20.0f64 * 0.56).round() as usize; // 11
        assert_eq!(new_h, 11);
        let top = (28 - new_h) / 2;
        for y in 0..28 {
            let row = &t.data()[y * 56..(y + 1) * 56];
            let ink = (top..top + new_h).contains(&y);
            assert!(row.iter().all(|&v| if ink { (v - 1.0).abs() < 1e-12 } else { v == 0.0 }), "row {y}");
        }
    }

    #[test]
    fn fit_preserves_mean_intensity_on_downscale() {
        let px: Vec<f64> = (0..40 * 40).map(|i| ((i / 40 + i % 40) % 2) as f64).collect();
        let t = fit_to_canvas(&px, 40, 40, Canvas::DIGIT).unwrap();
        let mean = t.sum() / (28.0 * 28.0);
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
