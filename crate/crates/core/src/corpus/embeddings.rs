//! `.vrem` embedding files.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `VREM` |
//! | 4 | 4 | version (1) |
//! | 8 | 4 | modality (0 visual, 1 text) |
//! | 12 | 4 | dim |
//! | 16 | 4 | count |
//! | 20 | 1 | timestamp flag (0/1) |
//! | 21 | 4·count | f32 timestamps, if flagged |
//! | .. | 4·count·dim | f32 values, row-major |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::vector::Vector;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"VREM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Text,
}

impl Modality {
    fn code(self) -> u32 {
        match self {
            Modality::Visual => 0,
            Modality::Text => 1,
        }
    }

    pub fn file_suffix(self) -> &'static str {
        match self {
            Modality::Visual => ".visual.vrem",
            Modality::Text => ".text.vrem",
        }
    }
}

/// Per-video embeddings: one row per 1 fps frame (visual) or a single row (text).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub video_id: String,
    pub modality: Modality,
    pub dim: usize,
    pub count: usize,
    pub values: Vec<f32>,
    pub timestamps: Option<Vec<f32>>,
}

impl EmbeddingMatrix {
    pub fn new(
        video_id: impl Into<String>,
        modality: Modality,
        dim: usize,
        values: Vec<f32>,
        timestamps: Option<Vec<f32>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill rows of width {dim}",
                values.len()
            )));
        }
        let m = EmbeddingMatrix {
            video_id: video_id.into(),
            modality,
            dim,
            count: values.len() / dim,
            values,
            timestamps,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(
        video_id: impl Into<String>,
        modality: Modality,
        rows: &[R],
        timestamps: Option<Vec<f32>>,
    ) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyInput)?.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend(row.iter().map(|&v| v as f32));
        }
        Self::new(video_id, modality, dim, values, timestamps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.count == 0 {
            return Err(Error::InvalidArgument("empty embedding matrix".into()));
        }
        if self.values.len() != self.dim * self.count {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {}x{} matrix",
                self.values.len(),
                self.count,
                self.dim
            )));
        }
        if self.modality == Modality::Text && self.count != 1 {
            return Err(Error::InvalidArgument(format!(
                "text embedding must have one row, found {}",
                self.count
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i / self.dim,
                col: i % self.dim,
            });
        }
        if let Some(ts) = &self.timestamps {
            if ts.len() != self.count {
                return Err(Error::InvalidArgument(format!(
                    "{} timestamps for {} rows",
                    ts.len(),
                    self.count
                )));
            }
            if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "timestamps must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// All rows widened to f64.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.count).map(|i| self.row_f64(i)).collect()
    }

    /// Timestamp of row `i`; the row index in seconds when none are stored (1 fps).
    pub fn timestamp(&self, i: usize) -> f64 {
        match &self.timestamps {
            Some(ts) => f64::from(ts[i]),
            None => i as f64,
        }
    }

    pub fn to_vector(&self, i: usize) -> Result<Vector> {
        Vector::from_f32(self.row(i))
    }
}

pub fn encode_embeddings(e: &EmbeddingMatrix) -> Result<Vec<u8>> {
    e.validate()?;
    let ts_len = e.timestamps.as_ref().map_or(0, Vec::len);
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * (ts_len + e.values.len()));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&e.modality.code().to_le_bytes());
    buf.extend_from_slice(&to_u32(e.dim)?.to_le_bytes());
    buf.extend_from_slice(&to_u32(e.count)?.to_le_bytes());
    buf.push(u8::from(e.timestamps.is_some()));
    for t in e.timestamps.iter().flatten() {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for v in &e.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{n} exceeds u32")))
}

pub fn write_embeddings(e: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let bytes = encode_embeddings(e)?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn decode_embeddings(video_id: &str, bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let modality = match word(8) {
        0 => Modality::Visual,
        1 => Modality::Text,
        other => return Err(Error::CorruptFile(format!("unknown modality code {other}"))),
    };
    let dim = word(12) as usize;
    let count = word(16) as usize;
    let has_ts = match bytes[20] {
        0 => false,
        1 => true,
        other => return Err(Error::CorruptFile(format!("timestamp flag {other}"))),
    };
    if dim == 0 || count == 0 {
        return Err(Error::CorruptFile(format!("empty shape {count}x{dim}")));
    }
    let ts_len = if has_ts { count } else { 0 };
    let expected = HEADER_LEN as u64 + 4 * (ts_len as u64 + count as u64 * dim as u64);
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::CorruptFile(format!(
            "{} trailing bytes",
            bytes.len() as u64 - expected
        )));
    }
    let floats = |start: usize, n: usize| -> Vec<f32> {
        bytes[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let timestamps = has_ts.then(|| floats(HEADER_LEN, count));
    let values = floats(HEADER_LEN + 4 * ts_len, count * dim);
    let m = EmbeddingMatrix {
        video_id: video_id.to_string(),
        modality,
        dim,
        count,
        values,
        timestamps,
    };
    m.validate().map_err(|e| match e {
        Error::NonFiniteValue { .. } => e,
        other => Error::CorruptFile(other.to_string()),
    })?;
    Ok(m)
}

/// Reads a `.vrem` file. The video id is the file name minus its
/// `.visual.vrem` / `.text.vrem` suffix.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&video_id_from_path(path), &bytes)
}

pub fn video_id_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for m in [Modality::Visual, Modality::Text] {
        if let Some(id) = name.strip_suffix(m.file_suffix()) {
            return id.to_string();
        }
    }
    name.strip_suffix(".vrem").unwrap_or(&name).to_string()
}

pub fn embedding_path(dir: &Path, video_id: &str, modality: Modality) -> std::path::PathBuf {
    dir.join(format!("{video_id}{}", modality.file_suffix()))
}
