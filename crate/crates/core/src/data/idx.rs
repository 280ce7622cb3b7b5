use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{ImageSample, Source};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads a file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated: needed {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// Parses an IDX image file (magic `0x00000803`) and its label file
/// (magic `0x00000801`). Files may be gzip-compressed. Pixels are scaled by
/// 1/255 and labels become their decimal strings.
pub fn read_idx(images: &Path, labels: &Path) -> Result<Vec<ImageSample>> {
    let image_bytes = read_maybe_gz(images)?;
    let label_bytes = read_maybe_gz(labels)?;

    let mut ic = Cursor {
        path: images,
        bytes: &image_bytes,
        pos: 0,
    };
    let magic = ic.u32()?;
    if magic != IMAGE_MAGIC {
        ic.pos = 0;
        return Err(ic.err(format!("bad image magic {magic:#010x}")));
    }
    let count = ic.u32()? as usize;
    let rows = ic.u32()? as usize;
    let cols = ic.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(ic.err(format!("degenerate image size {rows}×{cols}")));
    }

    let mut lc = Cursor {
        path: labels,
        bytes: &label_bytes,
        pos: 0,
    };
    let magic = lc.u32()?;
    if magic != LABEL_MAGIC {
        lc.pos = 0;
        return Err(lc.err(format!("bad label magic {magic:#010x}")));
    }
    let label_count = lc.u32()? as usize;
    if label_count != count {
        return Err(lc.err(format!(
            "label count {label_count} does not match image count {count}"
        )));
    }

    let stem = images
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.split('-').next().unwrap_or(n).to_string())
        .unwrap_or_else(|| "idx".to_string());
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let px = ic.take(rows * cols)?;
        let label = lc.take(1)?[0];
        let data = px.iter().map(|&b| f64::from(b) / 255.0).collect();
        samples.push(ImageSample {
            id: format!("{stem}/{i}"),
            pixels: Tensor::new(vec![1, rows, cols], data)?,
            label: label.to_string(),
            source: Source::Idx,
        });
    }
    if ic.pos != image_bytes.len() {
        return Err(ic.err("trailing bytes after last image"));
    }
    if lc.pos != label_bytes.len() {
        return Err(lc.err("trailing bytes after last label"));
    }
    Ok(samples)
}

/// Writes samples as an IDX image/label pair (gzip when the path ends in
/// `.gz`). Pixels are quantized to bytes. Labels that are all decimal `u8`
/// values are stored as such; otherwise each label is stored as its index in
/// the sorted label vocabulary. Returns the byte → label vocabulary.
pub fn write_idx(samples: &[ImageSample], images: &Path, labels: &Path) -> Result<Vec<String>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot write an empty IDX file".into()))?;
    let (rows, cols) = (first.height(), first.width());
    if samples.iter().any(|s| s.height() != rows || s.width() != cols) {
        return Err(Error::Shape("IDX samples must share one raster size".into()));
    }

    let numeric: Option<Vec<u8>> = samples.iter().map(|s| s.label.parse::<u8>().ok()).collect();
    let (codes, vocab) = match numeric {
        Some(codes) => {
            let max = codes.iter().copied().max().unwrap_or(0);
            (codes, (0..=max).map(|b| b.to_string()).collect::<Vec<_>>())
        }
        None => {
            let vocab: Vec<String> = samples
                .iter()
                .map(|s| s.label.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if vocab.len() > 256 {
                return Err(Error::InvalidArgument(format!(
                    "{} distinct labels do not fit in IDX label bytes",
                    vocab.len()
                )));
            }
            let codes = samples
                .iter()
                .map(|s| vocab.binary_search(&s.label).map(|i| i as u8))
                .collect::<std::result::Result<Vec<_>, _>>()
                .expect("every label is in the vocabulary");
            (codes, vocab)
        }
    };

    let mut img = Vec::with_capacity(16 + samples.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for v in [samples.len(), rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for s in samples {
        img.extend(s.pixels.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + samples.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    lab.extend_from_slice(&codes);

    write_maybe_gz(images, &img)?;
    write_maybe_gz(labels, &lab)?;
    Ok(vocab)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let payload = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}
