use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

/// One video in the corpus. Frames are pre-sampled at 1 fps upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub source_path: String,
    pub duration_s: f64,
    pub frame_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl VideoRecord {
    /// Subtitle if present, otherwise the ASR transcript.
    pub fn text(&self) -> Option<&str> {
        self.subtitle.as_deref().or(self.aux_transcript.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub encoder_id: String,
    pub embedding_dim: u32,
    pub embedding_dir: String,
    pub videos: Vec<VideoRecord>,
}

const MANIFEST_KEYS: [&str; 5] = [
    "corpus_id",
    "encoder_id",
    "embedding_dim",
    "embedding_dir",
    "videos",
];
const VIDEO_REQUIRED: [&str; 4] = ["video_id", "source_path", "duration_s", "frame_count"];
const VIDEO_OPTIONAL: [&str; 3] = ["subtitle", "aux_transcript", "category"];

impl CorpusManifest {
    pub fn empty(corpus_id: &str, encoder_id: &str, dim: u32, embedding_dir: &str) -> Self {
        CorpusManifest {
            corpus_id: corpus_id.to_string(),
            encoder_id: encoder_id.to_string(),
            embedding_dim: dim,
            embedding_dir: embedding_dir.to_string(),
            videos: Vec::new(),
        }
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::schema("embedding_dim", "must be positive"));
        }
        let mut seen = HashSet::new();
        for (i, v) in self.videos.iter().enumerate() {
            if v.video_id.is_empty() {
                return Err(Error::schema(format!("videos[{i}].video_id"), "empty"));
            }
            if v.video_id.contains(['/', '\\']) {
                return Err(Error::schema(
                    format!("videos[{i}].video_id"),
                    "must not contain path separators",
                ));
            }
            if !seen.insert(v.video_id.as_str()) {
                return Err(Error::DuplicateVideoId(v.video_id.clone()));
            }
            if v.frame_count == 0 {
                return Err(Error::schema(format!("videos[{i}].frame_count"), "must be >= 1"));
            }
            if !(v.duration_s.is_finite() && v.duration_s >= 0.0) {
                return Err(Error::schema(
                    format!("videos[{i}].duration_s"),
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }
}

/// Embedding directory resolved against the manifest's own location.
pub fn resolve_embedding_dir(manifest: &CorpusManifest, manifest_path: &Path) -> PathBuf {
    let dir = Path::new(&manifest.embedding_dir);
    if dir.is_absolute() {
        dir.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(dir)
    }
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<CorpusManifest> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::schema("<root>", e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema("<root>", "expected a JSON object"))?;
    check_keys(obj, "", &MANIFEST_KEYS, &[])?;

    let videos = obj["videos"]
        .as_array()
        .ok_or_else(|| Error::schema("videos", "expected an array"))?;
    let mut records = Vec::with_capacity(videos.len());
    for (i, video) in videos.iter().enumerate() {
        let prefix = format!("videos[{i}].");
        let vobj = video
            .as_object()
            .ok_or_else(|| Error::schema(format!("videos[{i}]"), "expected an object"))?;
        check_keys(vobj, &prefix, &VIDEO_REQUIRED, &VIDEO_OPTIONAL)?;
        records.push(VideoRecord {
            video_id: field(vobj, &prefix, "video_id")?,
            source_path: field(vobj, &prefix, "source_path")?,
            duration_s: field(vobj, &prefix, "duration_s")?,
            frame_count: field(vobj, &prefix, "frame_count")?,
            subtitle: field(vobj, &prefix, "subtitle")?,
            aux_transcript: field(vobj, &prefix, "aux_transcript")?,
            category: field(vobj, &prefix, "category")?,
        });
    }

    let manifest = CorpusManifest {
        corpus_id: field(obj, "", "corpus_id")?,
        encoder_id: field(obj, "", "encoder_id")?,
        embedding_dim: field(obj, "", "embedding_dim")?,
        embedding_dir: field(obj, "", "embedding_dir")?,
        videos: records,
    };
    manifest.validate()?;
    Ok(manifest)
}

fn check_keys(
    obj: &Map<String, Value>,
    prefix: &str,
    required: &[&str],
    optional: &[&str],
) -> Result<()> {
    for key in required {
        if !obj.contains_key(*key) {
            return Err(Error::schema(format!("{prefix}{key}"), "missing"));
        }
    }
    for key in obj.keys() {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(Error::schema(format!("{prefix}{key}"), "unknown key"));
        }
    }
    Ok(())
}

fn field<T: serde::de::DeserializeOwned + Default>(
    obj: &Map<String, Value>,
    prefix: &str,
    key: &str,
) -> Result<T> {
    match obj.get(key) {
        None => Ok(T::default()),
        Some(value) => serde_json::from_value(value.clone())
            .map_err(|e| Error::schema(format!("{prefix}{key}"), e.to_string())),
    }
}

/// Canonical serialization: pretty-printed, struct field order, trailing newline.
pub fn manifest_to_string(m: &CorpusManifest) -> String {
    let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
    text.push('\n');
    text
}

pub fn save_manifest(m: &CorpusManifest, path: &Path) -> Result<()> {
    m.validate()?;
    fs::write(path, manifest_to_string(m)).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
