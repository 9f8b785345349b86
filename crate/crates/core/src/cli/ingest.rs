use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::client::ModelClient;
use crate::corpus::{
    embedding_path, read_embeddings, save_manifest, video_id_from_path, write_embeddings, CorpusManifest,
    EmbeddingMatrix, Modality, VideoRecord,
};
use crate::encoder::EncoderClient;
use crate::generation::ensure_transcript;
use crate::{Error, Result};

const MEDIA_EXTENSIONS: [&str; 6] = ["mp4", "mkv", "webm", "avi", "mov", "m4v"];

/// One line of `metadata.jsonl` in a precomputed directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataLine {
    video_id: String,
    #[serde(default)]
    source_path: Option<String>,
    #[serde(default)]
    duration_s: Option<f64>,
    #[serde(default)]
    subtitle: Option<String>,
    #[serde(default)]
    aux_transcript: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

fn read_metadata(dir: &Path) -> Result<HashMap<String, MetadataLine>> {
    let path = dir.join("metadata.jsonl");
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: MetadataLine = serde_json::from_str(line)
            .map_err(|e| Error::schema(format!("metadata.jsonl line {}", n + 1), e.to_string()))?;
        out.insert(m.video_id.clone(), m);
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.sort();
    Ok(paths)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Copies existing embedding files into `out/embeddings` and writes
/// `out/manifest.json` listing them.
pub fn ingest_precomputed(src: &Path, out: &Path, corpus_id: &str) -> Result<PathBuf> {
    let mut meta = read_metadata(src)?;
    let emb_dir = out.join("embeddings");
    create_dir(&emb_dir)?;
    let mut manifest: Option<CorpusManifest> = None;
    for path in sorted_entries(src)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !name.ends_with(Modality::Visual.file_suffix()) {
            continue;
        }
        let id = video_id_from_path(&path);
        let visual = read_embeddings(&path).map_err(|e| e.for_video(&id))?;
        let m = manifest.get_or_insert_with(|| CorpusManifest::empty(corpus_id, "precomputed", visual.dim as u32, "embeddings"));
        if visual.dim != m.embedding_dim as usize {
            return Err(Error::DimMismatch {
                expected: m.embedding_dim as usize,
                found: visual.dim,
            }
            .for_video(&id));
        }
        write_embeddings(&visual, &embedding_path(&emb_dir, &id, Modality::Visual))?;
        let text_src = embedding_path(src, &id, Modality::Text);
        if text_src.exists() {
            let text = read_embeddings(&text_src).map_err(|e| e.for_video(&id))?;
            if text.dim != visual.dim {
                return Err(Error::DimMismatch {
                    expected: visual.dim,
                    found: text.dim,
                }
                .for_video(&id));
            }
            write_embeddings(&text, &embedding_path(&emb_dir, &id, Modality::Text))?;
        }
        let md = meta.remove(&id).unwrap_or_default();
        m.videos.push(VideoRecord {
            source_path: md.source_path.unwrap_or_else(|| format!("{id}.mp4")),
            duration_s: md.duration_s.unwrap_or(visual.count as f64),
            frame_count: visual.count as u32,
            subtitle: md.subtitle,
            aux_transcript: md.aux_transcript,
            category: md.category,
            video_id: id,
        });
    }
    let manifest = manifest.ok_or_else(|| {
        Error::InvalidArgument(format!("no `*{}` files in {}", Modality::Visual.file_suffix(), src.display()))
    })?;
    if let Some(stray) = meta.keys().min() {
        return Err(Error::schema("metadata.jsonl", format!("`{stray}` has no visual embedding file")));
    }
    manifest.validate()?;
    let path = out.join("manifest.json");
    save_manifest(&manifest, &path)?;
    Ok(path)
}

fn media_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| MEDIA_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect())
}

fn ingest_one(
    path: &Path,
    id: &str,
    encoder: &EncoderClient<'_>,
    dim: usize,
    fps: f64,
    transcribe: bool,
    emb_dir: &Path,
) -> Result<VideoRecord> {
    let source_path = path.to_string_lossy().into_owned();
    let frames = encoder.embed_frames(&source_path, fps, Some(dim))?;
    let ts = frames.timestamps.as_ref().map(|t| t.iter().map(|&x| x as f32).collect());
    let visual = EmbeddingMatrix::from_rows(id, Modality::Visual, &frames.embeddings, ts)?;
    write_embeddings(&visual, &embedding_path(emb_dir, id, Modality::Visual))?;
    let subtitle_path = path.with_extension("txt");
    let subtitle = if subtitle_path.exists() {
        Some(std::fs::read_to_string(&subtitle_path).map_err(|e| Error::io(&subtitle_path, e))?)
    } else {
        None
    };
    let mut record = VideoRecord {
        video_id: id.to_string(),
        source_path,
        duration_s: frames.count as f64 / fps,
        frame_count: frames.count as u32,
        subtitle,
        aux_transcript: None,
        category: None,
    };
    if transcribe {
        record = ensure_transcript(&record, encoder)?;
    }
    if let Some(text) = record.text().filter(|t| !t.trim().is_empty()) {
        let r = encoder.embed_text(&[text.to_string()], Some(dim))?;
        let m = EmbeddingMatrix::from_rows(id, Modality::Text, &r.embeddings, None)?;
        write_embeddings(&m, &embedding_path(emb_dir, id, Modality::Text))?;
    }
    Ok(record)
}

/// Embeds every media file through the encoder service. Videos that fail
/// are left out of the manifest; the first failure is returned after the
/// manifest of the rest is written.
pub fn ingest_media(
    media: &Path,
    out: &Path,
    corpus_id: &str,
    client: &dyn ModelClient,
    fps: f64,
    transcribe: bool,
) -> Result<PathBuf> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidArgument(format!("fps {fps} must be positive")));
    }
    let encoder = EncoderClient::new(client);
    let health = encoder.health()?;
    let files = media_files(media)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no media files in {}", media.display())));
    }
    let emb_dir = out.join("embeddings");
    create_dir(&emb_dir)?;
    let mut manifest = CorpusManifest::empty(corpus_id, &health.encoder_id, health.dim as u32, "embeddings");
    let mut failures = Vec::new();
    for path in &files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match ingest_one(path, &id, &encoder, health.dim, fps, transcribe, &emb_dir) {
            Ok(r) => manifest.videos.push(r),
            Err(e) => {
                log::error!("ingest of `{id}` failed: {e}");
                failures.push(e.for_video(&id));
            }
        }
    }
    manifest.validate()?;
    let path = out.join("manifest.json");
    save_manifest(&manifest, &path)?;
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(path),
    }
}
