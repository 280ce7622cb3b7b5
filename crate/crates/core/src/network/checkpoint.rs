//! Little-endian binary checkpoints.
//!
//! ```text
//! "DSSN" | u32 version | u32 spec length | spec record
//!        | u32 tensor count | per tensor: u32 name length, name,
//!                                         u32 rank, u32 extents…, f64 data…
//! ```
//!
//! The spec record is eight `u32` extents (input height, input width, kernel
//! size, conv1, conv2, ip, relu head, feat) followed by five `f64` values
//! (margin, conv2/relu/feat head weights).

use std::fs;
use std::path::Path;

use super::{HeadWeights, Network, NetworkParams, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DSSN";
pub const CHECKPOINT_VERSION: u32 = 1;
const SPEC_RECORD_LEN: usize = 8 * 4 + 4 * 8;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in u32")))
}

/// Serializes a network to checkpoint bytes.
pub fn write_checkpoint(net: &Network) -> Result<Vec<u8>> {
    let spec = &net.spec;
    let mut out = Vec::with_capacity(64 + 8 * net.params.parameter_count());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, SPEC_RECORD_LEN as u32);
    for v in [
        spec.input_height,
        spec.input_width,
        spec.kernel_size,
        spec.conv1_channels,
        spec.conv2_channels,
        spec.ip_width,
        spec.relu_head_dim,
        spec.feat_dim,
    ] {
        put_u32(&mut out, to_u32(v, "extent")?);
    }
    let w = spec.head_weights;
    for v in [spec.margin, w.conv2, w.relu, w.feat] {
        put_f64(&mut out, v);
    }
    let shapes = spec.param_shapes();
    put_u32(&mut out, shapes.len() as u32);
    for ((name, _), t) in shapes.iter().zip(net.params.tensors()) {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut out, to_u32(d, "extent")?);
        }
        for &v in t.data() {
            put_f64(&mut out, v);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses checkpoint bytes, verifying the tensors against the embedded spec.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a DSSN checkpoint)".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let spec_len = r.u32("spec length")? as usize;
    if spec_len != SPEC_RECORD_LEN {
        return Err(Error::Checkpoint(format!(
            "spec record is {spec_len} bytes, expected {SPEC_RECORD_LEN}"
        )));
    }
    let mut ext = [0usize; 8];
    for e in &mut ext {
        *e = r.u32("spec")? as usize;
    }
    let margin = r.f64("spec")?;
    let head_weights = HeadWeights {
        conv2: r.f64("spec")?,
        relu: r.f64("spec")?,
        feat: r.f64("spec")?,
    };
    let spec = NetworkSpec {
        input_height: ext[0],
        input_width: ext[1],
        kernel_size: ext[2],
        conv1_channels: ext[3],
        conv2_channels: ext[4],
        ip_width: ext[5],
        relu_head_dim: ext[6],
        feat_dim: ext[7],
        margin,
        head_weights,
    };
    spec.validate()
        .map_err(|e| Error::Checkpoint(format!("invalid spec record: {e}")))?;

    let expected = spec.param_shapes();
    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors in file, spec requires {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in &expected {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if name != *want_name {
            return Err(Error::Checkpoint(format!("expected tensor {want_name}, found {name}")));
        }
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("tensor extent")? as usize);
        }
        if shape != *want_shape {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {shape:?}, spec requires {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("count checked");
    let params = NetworkParams {
        conv1_w: next(),
        conv1_b: next(),
        conv2_w: next(),
        conv2_b: next(),
        ip_w: next(),
        ip_b: next(),
        relu_head_w: next(),
        relu_head_b: next(),
        feat_w: next(),
        feat_b: next(),
    };
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Network::from_parts(spec, params)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(net)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
