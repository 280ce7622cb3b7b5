//! Index persistence and the embedding TSV export.
//!
//! Binary index layout, little-endian:
//!
//! ```text
//! "MIDX" | u32 version | u32 feat dim | u64 entry count
//!        | per entry: u32 id length, id, u32 label length, label, f64 × dim
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Entry, ManifoldIndex};
use crate::error::{Error, Result};
use crate::network::{Head, MultiLevelEmbedding};

const MAGIC: &[u8; 4] = b"MIDX";
pub const INDEX_VERSION: u32 = 1;

pub fn write_index(index: &ManifoldIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    out.extend_from_slice(&(index.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    for e in index.entries() {
        for s in [&e.id, &e.label] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for v in &e.feat {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Index(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Index("string is not UTF-8".into()))
    }
}

pub fn read_index(bytes: &[u8]) -> Result<ManifoldIndex> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Index("bad magic (not an MIDX index)".into()));
    }
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(Error::Index(format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let mut index = ManifoldIndex::new(dim)?;
    for _ in 0..count {
        let id = r.string()?;
        let label = r.string()?;
        let feat = r
            .take(dim * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        index.insert(id, feat, label)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Index(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(index)
}

pub fn save_index(index: &ManifoldIndex, path: &Path) -> Result<()> {
    fs::write(path, write_index(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: &Path) -> Result<ManifoldIndex> {
    read_index(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// One row of the embedding export.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub label: String,
    pub embedding: MultiLevelEmbedding,
}

impl EmbeddingRow {
    pub fn entry(&self) -> Entry {
        Entry {
            id: self.id.clone(),
            feat: self.embedding.feat.clone(),
            label: self.label.clone(),
        }
    }
}

const TSV_ORDER: [Head; 4] = [Head::Feat, Head::Relu, Head::Conv2, Head::Ip];

fn check_field(field: &str, what: &str) -> Result<()> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!("{what} `{field}` contains a tab or newline")));
    }
    Ok(())
}

/// Renders rows as TSV with columns `id label feat:i… relu:i… conv2:i… ip:i…`.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_embeddings_tsv(rows: &[EmbeddingRow]) -> Result<String> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no embeddings to export".into()))?;
    let dims: Vec<usize> = TSV_ORDER.iter().map(|&h| first.embedding.head(h).len()).collect();
    let mut out = String::from("id\tlabel");
    for (h, n) in TSV_ORDER.iter().zip(&dims) {
        for i in 0..*n {
            let _ = write!(out, "\t{}:{i}", h.name());
        }
    }
    out.push('\n');
    for row in rows {
        check_field(&row.id, "id")?;
        check_field(&row.label, "label")?;
        out.push_str(&row.id);
        out.push('\t');
        out.push_str(&row.label);
        for (h, n) in TSV_ORDER.iter().zip(&dims) {
            let v = row.embedding.head(*h);
            if v.len() != *n {
                return Err(Error::Shape(format!("row `{}` has {} {} values, expected {n}", row.id, v.len(), h)));
            }
            for x in v {
                let _ = write!(out, "\t{x}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_embeddings_tsv(text: &str, path: &Path) -> Result<Vec<EmbeddingRow>> {
    let bad = |line: usize, reason: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(bad(1, "header must start with `id\tlabel`".into()));
    }
    // which head each value column belongs to
    let mut heads = Vec::with_capacity(cols.len() - 2);
    for c in &cols[2..] {
        let head = c
            .split_once(':')
            .and_then(|(h, _)| h.parse::<Head>().ok())
            .ok_or_else(|| bad(1, format!("unrecognized column `{c}`")))?;
        heads.push(head);
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(bad(i + 1, format!("{} fields, header has {}", fields.len(), cols.len())));
        }
        let mut e = MultiLevelEmbedding {
            conv2_head: Vec::new(),
            relu_head: Vec::new(),
            feat: Vec::new(),
            ip: Vec::new(),
        };
        for (f, h) in fields[2..].iter().zip(&heads) {
            let v: f64 = f.parse().map_err(|_| bad(i + 1, format!("`{f}` is not a number")))?;
            match h {
                Head::Conv2 => e.conv2_head.push(v),
                Head::Relu => e.relu_head.push(v),
                Head::Feat => e.feat.push(v),
                Head::Ip => e.ip.push(v),
            }
        }
        rows.push(EmbeddingRow {
            id: fields[0].to_string(),
            label: fields[1].to_string(),
            embedding: e,
        });
    }
    Ok(rows)
}
