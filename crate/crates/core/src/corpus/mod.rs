//! Corpus manifests and per-video embedding files.

mod embeddings;
mod manifest;

use std::path::{Path, PathBuf};

pub use embeddings::{
    decode_embeddings, embedding_path, encode_embeddings, read_embeddings, video_id_from_path,
    write_embeddings, EmbeddingMatrix, Modality, HEADER_LEN,
};
pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, resolve_embedding_dir, save_manifest,
    CorpusManifest, VideoRecord,
};

use crate::{Error, Result};

/// A loaded manifest bound to the directory its embedding files live in.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub embedding_dir: PathBuf,
}

impl Corpus {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = load_manifest(manifest_path)?;
        let embedding_dir = resolve_embedding_dir(&manifest, manifest_path);
        Ok(Corpus {
            manifest,
            embedding_dir,
        })
    }

    pub fn new(manifest: CorpusManifest, embedding_dir: PathBuf) -> Self {
        Corpus {
            manifest,
            embedding_dir,
        }
    }

    pub fn dim(&self) -> usize {
        self.manifest.embedding_dim as usize
    }

    pub fn record(&self, video_id: &str) -> Result<&VideoRecord> {
        self.manifest
            .video(video_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown video `{video_id}`")))
    }

    /// Visual frame embeddings, checked against the manifest's dim and frame count.
    pub fn load_visual(&self, video_id: &str) -> Result<EmbeddingMatrix> {
        let record = self.record(video_id)?;
        let path = embedding_path(&self.embedding_dir, video_id, Modality::Visual);
        let m = read_embeddings(&path).map_err(|e| e.for_video(video_id))?;
        self.check(&m, Modality::Visual)?;
        if m.count != record.frame_count as usize {
            return Err(Error::CorruptFile(format!(
                "{} frame rows, manifest says {}",
                m.count, record.frame_count
            ))
            .for_video(video_id));
        }
        Ok(m)
    }

    /// Text embedding, `None` when the file does not exist.
    pub fn load_text(&self, video_id: &str) -> Result<Option<EmbeddingMatrix>> {
        let path = embedding_path(&self.embedding_dir, video_id, Modality::Text);
        if !path.exists() {
            return Ok(None);
        }
        let m = read_embeddings(&path).map_err(|e| e.for_video(video_id))?;
        self.check(&m, Modality::Text)?;
        Ok(Some(m))
    }

    fn check(&self, m: &EmbeddingMatrix, modality: Modality) -> Result<()> {
        if m.modality != modality {
            return Err(Error::CorruptFile(format!(
                "expected {modality:?} embeddings, file holds {:?}",
                m.modality
            ))
            .for_video(&m.video_id));
        }
        if m.dim != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: m.dim,
            }
            .for_video(&m.video_id));
        }
        Ok(())
    }
}
