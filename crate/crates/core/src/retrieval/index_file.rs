//! `VIDX` index files.
//!
//! Layout (little-endian): magic `VIDX`, version u32, alpha f64, dim u32,
//! count u32, then per entry an id length u32, the UTF-8 id, three presence
//! flags u8 (visual, text, ensemble) and each present vector as `dim` f32s.
//! Fields the binary format does not carry live in a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FrameSelection, IndexEntry, VideoIndex};
use crate::vector::{l2_normalize, Vector};
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"VIDX";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub corpus_id: String,
    pub selection: FrameSelection,
    pub frames_per_video: usize,
}

fn push_vector(buf: &mut Vec<u8>, v: &Vector) {
    for &x in v.as_slice() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

pub fn encode_index(index: &VideoIndex) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_LEN + index.len() * (16 + 12 * index.dim));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&index.alpha.to_le_bytes());
    buf.extend_from_slice(&(index.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(index.len() as u32).to_le_bytes());
    for e in &index.entries {
        for v in [e.visual.as_ref(), e.text.as_ref(), Some(&e.ensemble)].into_iter().flatten() {
            if v.dim() != index.dim {
                return Err(Error::DimMismatch {
                    expected: index.dim,
                    found: v.dim(),
                });
            }
        }
        buf.extend_from_slice(&(e.video_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.video_id.as_bytes());
        buf.push(u8::from(e.visual.is_some()));
        buf.push(u8::from(e.text.is_some()));
        buf.push(1);
        for v in [e.visual.as_ref(), e.text.as_ref(), Some(&e.ensemble)].into_iter().flatten() {
            push_vector(&mut buf, v);
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::TruncatedFile {
            expected: (self.at + n) as u64,
            actual: self.bytes.len() as u64,
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::CorruptFile(format!("presence flag {other}"))),
        }
    }

    fn vector(&mut self, dim: usize, entry: usize) -> Result<Vector> {
        let raw = self.take(4 * dim)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: entry, col });
        }
        let v = Vector::new(values)?;
        l2_normalize(&v).map_err(|_| Error::CorruptFile(format!("entry {entry}: zero vector")))
    }
}

/// Decodes index bytes; vectors are re-normalized in f64 after widening.
/// Metadata not stored in the binary format takes the supplied values.
pub fn decode_index(bytes: &[u8], meta: Option<&IndexMeta>) -> Result<VideoIndex> {
    let mut r = Reader { bytes, at: 0 };
    let found: [u8; 4] = r
        .take(4)
        .map_err(|_| Error::TruncatedFile {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        })?
        .try_into()
        .unwrap();
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
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let alpha = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::CorruptFile(format!("alpha {alpha} outside [0, 1]")));
    }
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::CorruptFile("zero dimension".into()));
    }
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let len = r.u32()? as usize;
        let video_id = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::CorruptFile(format!("entry {i}: id is not UTF-8")))?
            .to_string();
        let (has_visual, has_text, has_ensemble) = (r.flag()?, r.flag()?, r.flag()?);
        if !has_ensemble {
            return Err(Error::CorruptFile(format!("entry `{video_id}` lacks an ensemble vector")));
        }
        let visual = has_visual.then(|| r.vector(dim, i)).transpose()?;
        let text = has_text.then(|| r.vector(dim, i)).transpose()?;
        let ensemble = r.vector(dim, i)?;
        entries.push(IndexEntry {
            video_id,
            visual,
            text,
            ensemble,
        });
    }
    if r.at != bytes.len() {
        return Err(Error::CorruptFile(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let meta = meta.cloned().unwrap_or(IndexMeta {
        corpus_id: String::new(),
        selection: FrameSelection::Uniform,
        frames_per_video: 4,
    });
    Ok(VideoIndex {
        corpus_id: meta.corpus_id,
        alpha,
        dim,
        selection: meta.selection,
        frames_per_video: meta.frames_per_video,
        entries,
    })
}

fn meta_path(index_path: &Path) -> PathBuf {
    let mut name = index_path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    index_path.with_file_name(name)
}

pub fn write_index_meta(index: &VideoIndex, index_path: &Path) -> Result<()> {
    let meta = IndexMeta {
        corpus_id: index.corpus_id.clone(),
        selection: index.selection,
        frames_per_video: index.frames_per_video,
    };
    let path = meta_path(index_path);
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_index_meta(index_path: &Path) -> Result<Option<IndexMeta>> {
    let path = meta_path(index_path);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::schema("index meta", e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}

/// Writes `<path>` and its `<path>.meta.json` sidecar.
pub fn write_index(index: &VideoIndex, path: &Path) -> Result<()> {
    let bytes = encode_index(index)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_index_meta(index, path)
}

pub fn read_index(path: &Path) -> Result<VideoIndex> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = read_index_meta(path)?;
    decode_index(&bytes, meta.as_ref())
}
