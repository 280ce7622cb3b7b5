//! Synthetic text images rendered from the built-in bitmap font.
//!
//! A render is fully determined by `(label, style, seed, canvas)`. The noise
//! level drives both the geometric jitter (translation and scale) and the
//! salt-and-pepper corruption, so `noise = 0` with `slant = 0` reproduces the
//! font raster exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::font::{self, GLYPH_HEIGHT};
use super::{canonicalize_label, Canvas, ImageSample, Source};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest translation jitter in pixels at noise level 1.
const MAX_SHIFT: f64 = 3.0;
/// Largest relative scale jitter at noise level 1.
const MAX_SCALE_JITTER: f64 = 0.15;
/// Salt-and-pepper flip probability at noise level 1.
const MAX_FLIP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStyle {
    /// Pixels per font cell.
    pub font_scale: f64,
    /// Horizontal shear; positive leans right.
    pub slant: f64,
    /// In `[0, 1]`.
    pub noise: f64,
}

impl Default for SyntheticStyle {
    fn default() -> Self {
        Self {
            font_scale: 1.5,
            slant: 0.0,
            noise: 0.3,
        }
    }
}

impl SyntheticStyle {
    fn validate(&self) -> Result<()> {
        if !(self.font_scale > 0.0) || !self.font_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "font scale must be positive, got {}",
                self.font_scale
            )));
        }
        if !self.slant.is_finite() {
            return Err(Error::InvalidArgument("slant must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!(
                "noise level must lie in [0, 1], got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Renders `label` onto `canvas`. Empty or whitespace-only labels render as
/// blank (noise only) images carrying the blank sentinel.
pub fn render_synthetic(label: &str, style: &SyntheticStyle, seed: u64, canvas: Canvas) -> Result<ImageSample> {
    style.validate()?;
    let text = label.trim();
    let (rows, cols, bits) = font::rasterize(text).ok_or_else(|| {
        Error::InvalidArgument(format!("label {label:?} contains non-printable characters"))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale_jitter = 1.0 + style.noise * MAX_SCALE_JITTER * rng.gen_range(-1.0..=1.0);
    let dx = style.noise * MAX_SHIFT * rng.gen_range(-1.0..=1.0);
    let dy = style.noise * MAX_SHIFT * rng.gen_range(-1.0..=1.0);
    let scale = style.font_scale * scale_jitter;

    // worst-case footprint over all jitter draws
    let max_scale = style.font_scale * (1.0 + style.noise * MAX_SCALE_JITTER);
    let margin = 2.0 * style.noise * MAX_SHIFT;
    let need_w = cols as f64 * max_scale + style.slant.abs() * rows as f64 * max_scale + margin;
    let need_h = rows as f64 * max_scale + margin;
    if need_w > canvas.width as f64 || need_h > canvas.height as f64 {
        return Err(Error::InvalidArgument(format!(
            "label {label:?} needs {need_w:.1}×{need_h:.1} px, canvas is {}×{}",
            canvas.width, canvas.height
        )));
    }

    let text_w = cols as f64 * scale;
    let text_h = rows as f64 * scale;
    let left = ((canvas.width as f64 - text_w) / 2.0 + dx).round();
    let top = ((canvas.height as f64 - text_h) / 2.0 + dy).round();
    let mid = text_h / 2.0;

    let mut data = vec![0.0; canvas.height * canvas.width];
    if cols > 0 {
        for y in 0..canvas.height {
            let v = y as f64 + 0.5 - top;
            let row = (v / scale).floor();
            if row < 0.0 || row >= GLYPH_HEIGHT as f64 {
                continue;
            }
            let shear = style.slant * (mid - v);
            for x in 0..canvas.width {
                let u = (x as f64 + 0.5 - left - shear) / scale;
                let col = u.floor();
                if col >= 0.0 && col < cols as f64 && bits[row as usize * cols + col as usize] {
                    data[y * canvas.width + x] = 1.0;
                }
            }
        }
    }

    let flip = style.noise * MAX_FLIP;
    if flip > 0.0 {
        for px in &mut data {
            if rng.gen_bool(flip) {
                *px = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            }
        }
    }

    Ok(ImageSample {
        id: format!("synthetic/{seed}/{text}"),
        pixels: Tensor::new(vec![1, canvas.height, canvas.width], data)?,
        label: canonicalize_label(label),
        source: Source::Synthetic,
    })
}

/// Renders `per_label` variants of every label. Each variant perturbs the
/// base style's slant by up to ±0.25 and its scale by up to ±10%, seeded
/// from `seed`. Sample ids are `syn-<label index>-<variant>`.
pub fn synthetic_corpus(
    labels: &[&str],
    per_label: usize,
    base: &SyntheticStyle,
    seed: u64,
    canvas: Canvas,
) -> Result<Vec<ImageSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len() * per_label);
    for (li, label) in labels.iter().enumerate() {
        for v in 0..per_label {
            let style = SyntheticStyle {
                font_scale: base.font_scale * rng.gen_range(0.9..=1.1),
                slant: base.slant + rng.gen_range(-0.25..=0.25),
                noise: base.noise,
            };
            let mut s = render_synthetic(label, &style, rng.gen(), canvas)?;
            s.id = format!("syn-{li}-{v}");
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BLANK_LABEL;

    #[test]
    fn deterministic() {
        let st = SyntheticStyle::default();
        let a = render_synthetic("2016", &st, 42, Canvas::TEXT).unwrap();
        let b = render_synthetic("2016", &st, 42, Canvas::TEXT).unwrap();
        assert_eq!(a.pixels, b.pixels);
        let c = render_synthetic("2016", &st, 43, Canvas::TEXT).unwrap();
        assert_ne!(a.pixels, c.pixels);
    }

    #[test]
    fn clean_render_is_exact_font_raster() {
        let st = SyntheticStyle {
            font_scale: 1.0,
            slant: 0.0,
            noise: 0.0,
        };
        let canvas = Canvas::TEXT;
        let s = render_synthetic("AB", &st, 9, canvas).unwrap();
        let (rows, cols, bits) = font::rasterize("AB").unwrap();
        let left = ((canvas.width - cols) as f64 / 2.0).round() as usize;
        let top = ((canvas.height - rows) as f64 / 2.0).round() as usize;
        for y in 0..canvas.height {
            for x in 0..canvas.width {
                let inside = (top..top + rows).contains(&y) && (left..left + cols).contains(&x);
                let expect = inside && bits[(y - top) * cols + (x - left)];
                assert_eq!(s.pixels.data()[y * canvas.width + x], if expect { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn overflow_rejected() {
        let st = SyntheticStyle::default();
        assert!(render_synthetic("Mountain Laurel", &st, 0, Canvas::TEXT).is_err());
        assert!(render_synthetic("LEER", &st, 0, Canvas::TEXT).is_ok());
    }

    #[test]
    fn rejects_non_printable_and_bad_style() {
        assert!(render_synthetic("ñ", &SyntheticStyle::default(), 0, Canvas::TEXT).is_err());
        let st = SyntheticStyle {
            noise: 2.0,
            ..Default::default()
        };
        assert!(render_synthetic("A", &st, 0, Canvas::TEXT).is_err());
    }

    #[test]
    fn blank_label_renders_blank_class() {
        let st = SyntheticStyle {
            noise: 0.0,
            ..Default::default()
        };
        let s = render_synthetic("  ", &st, 1, Canvas::TEXT).unwrap();
        assert_eq!(s.label, BLANK_LABEL);
        assert_eq!(s.pixels.sum(), 0.0);
    }

    #[test]
    fn corpus_shape() {
        let c = synthetic_corpus(&["LEER", "2016", "2018"], 50, &SyntheticStyle::default(), 5, Canvas::TEXT).unwrap();
        assert_eq!(c.len(), 150);
        let labels: std::collections::BTreeSet<_> = c.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels.len(), 3);
        let ids: std::collections::BTreeSet<_> = c.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), 150);
        assert!(c.iter().all(|s| s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
