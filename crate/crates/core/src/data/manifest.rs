use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{canonicalize_label, fit_to_canvas, Canvas, ImageSample, Source};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    file: String,
    label: String,
}

/// Decoded 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Gray {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

/// Parses a binary PGM (`P5`, maxval ≤ 255). Comments in the header are
/// skipped.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Gray, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P5" {
        return Err(format!(
            "not a binary PGM (magic {:?}, expected \"P5\")",
            String::from_utf8_lossy(fields[0])
        ));
    }
    let num = |f: &[u8], what: &str| -> std::result::Result<usize, String> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad PGM {what}"))
    };
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err("PGM has zero extent".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("only 8-bit PGM is supported (maxval {maxval})"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("truncated PGM header".into());
    }
    pos += 1;
    let n = width * height;
    if bytes.len() - pos < n {
        return Err(format!("PGM raster truncated: {} of {n} bytes", bytes.len() - pos));
    }
    let mut pixels = bytes[pos..pos + n].to_vec();
    if maxval != 255 {
        for p in &mut pixels {
            *p = ((usize::from(*p).min(maxval) * 255 + maxval / 2) / maxval) as u8;
        }
    }
    Ok(Gray {
        height,
        width,
        pixels,
    })
}

/// Encodes a `[1, H, W]` or `[H, W]` raster with values in `[0, 1]` as P5.
pub fn encode_pgm(pixels: &[f64], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Loads `dir/manifest.jsonl`: one `{"file": ..., "label": ...}` object per
/// line, `file` relative to `dir` and pointing at a P5 image.
pub fn read_manifest(dir: &Path, canvas: Canvas) -> Result<Vec<ImageSample>> {
    let path = dir.join("manifest.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |reason: String| Error::Manifest {
            path: path.clone(),
            line: line_no,
            reason,
        };
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(format!("malformed record: {e}")))?;
        let file = dir.join(&rec.file);
        let bytes = fs::read(&file).map_err(|e| bad(format!("{}: {e}", file.display())))?;
        let gray = decode_pgm(&bytes).map_err(|e| bad(format!("{}: {e}", file.display())))?;
        let data: Vec<f64> = gray.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
        let pixels = fit_to_canvas(&data, gray.height, gray.width, canvas)?;
        samples.push(ImageSample {
            id: rec.file,
            pixels,
            label: canonicalize_label(&rec.label),
            source: Source::Manifest,
        });
    }
    Ok(samples)
}

/// Writes samples as `imgNNNNN.pgm` files plus `manifest.jsonl` into `dir`.
pub fn write_manifest(dir: &Path, samples: &[ImageSample]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        let file = format!("img{i:05}.pgm");
        let path = dir.join(&file);
        fs::write(&path, encode_pgm(s.pixels.data(), s.height(), s.width()))
            .map_err(|e| Error::io(&path, e))?;
        let rec = Record {
            file,
            label: s.label.clone(),
        };
        manifest.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
