//! Engine configuration: one JSON file, every field optional, overridable
//! from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::generation::ContextMode;
use crate::nn::TrainConfig;
use crate::{Error, Result};

pub const CONFIG_ENV: &str = "VRAG_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub k: usize,
    pub frames_per_video: usize,
    pub candidates: usize,
    pub n_subsets: usize,
    pub require_text: bool,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            k: 1,
            frames_per_video: 4,
            candidates: 8,
            n_subsets: 10,
            require_text: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub frames_per_video: usize,
    pub candidates: usize,
    pub n_subsets: usize,
    pub mode: ContextMode,
    pub max_transcript_chars: usize,
    pub model: String,
    /// Directory of exported frame JPEGs, `<dir>/<video_id>/<index>.jpg`.
    pub frame_dir: Option<PathBuf>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            frames_per_video: 32,
            candidates: 64,
            n_subsets: 40,
            mode: ContextMode::VideoOnly,
            max_transcript_chars: 8000,
            model: "generator".into(),
            frame_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorPaths {
    pub retrieval: Option<PathBuf>,
    pub generation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub encoder_url: Option<String>,
    pub generator_url: Option<String>,
    pub timeout_s: f64,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            encoder_url: None,
            generator_url: None,
            timeout_s: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: [usize; 2],
    /// Output width of each tower of the generation scorer.
    pub tower_dim: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            hidden: [64, 32],
            tower_dim: 32,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub manifest_path: Option<PathBuf>,
    pub alpha: f64,
    pub retrieval: RetrievalSection,
    pub generation: GenerationSection,
    pub selector: SelectorPaths,
    pub endpoints: Endpoints,
    pub training: TrainingSection,
    pub seed: u64,
    pub max_inflight: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            manifest_path: None,
            alpha: 0.6,
            retrieval: RetrievalSection::default(),
            generation: GenerationSection::default(),
            selector: SelectorPaths::default(),
            endpoints: Endpoints::default(),
            training: TrainingSection::default(),
            seed: 0,
            max_inflight: 4,
        }
    }
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(field, "must be >= 1"));
    }
    Ok(())
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", format!("{} is outside [0, 1]", self.alpha)));
        }
        let r = &self.retrieval;
        positive("retrieval.k", r.k)?;
        positive("retrieval.frames_per_video", r.frames_per_video)?;
        positive("retrieval.n_subsets", r.n_subsets)?;
        if r.frames_per_video > r.candidates {
            return Err(Error::config(
                "retrieval.frames_per_video",
                format!("{} exceeds retrieval.candidates = {}", r.frames_per_video, r.candidates),
            ));
        }
        let g = &self.generation;
        positive("generation.frames_per_video", g.frames_per_video)?;
        positive("generation.n_subsets", g.n_subsets)?;
        positive("generation.max_transcript_chars", g.max_transcript_chars)?;
        if g.frames_per_video > g.candidates {
            return Err(Error::config(
                "generation.frames_per_video",
                format!("{} exceeds generation.candidates = {}", g.frames_per_video, g.candidates),
            ));
        }
        if g.model.trim().is_empty() {
            return Err(Error::config("generation.model", "must not be empty"));
        }
        if !(self.endpoints.timeout_s > 0.0 && self.endpoints.timeout_s.is_finite()) {
            return Err(Error::config("endpoints.timeout_s", "must be a positive number of seconds"));
        }
        let t = &self.training;
        positive("training.epochs", t.epochs)?;
        positive("training.batch_size", t.batch_size)?;
        positive("training.hidden", t.hidden[0].min(t.hidden[1]))?;
        positive("training.tower_dim", t.tower_dim)?;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate", "must be a positive number"));
        }
        positive("max_inflight", self.max_inflight)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: EngineConfig = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths inside the file are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.manifest_path);
        rebase(&mut cfg.selector.retrieval);
        rebase(&mut cfg.selector.generation);
        rebase(&mut cfg.generation.frame_dir);
        Ok(cfg)
    }

    /// `path`, else the file named by `VRAG_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(text: &str) -> String {
        match EngineConfig::from_json_str(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults() {
        let c = EngineConfig::from_json_str("{}").unwrap();
        assert_eq!(c.alpha, 0.6);
        assert_eq!(c.retrieval.k, 1);
        assert_eq!((c.retrieval.frames_per_video, c.retrieval.candidates), (4, 8));
        assert_eq!((c.generation.frames_per_video, c.generation.candidates), (32, 64));
        assert_eq!(c.generation.n_subsets, 40);
        assert_eq!(c.max_inflight, 4);
    }

    #[test]
    fn violations_name_the_field() {
        assert_eq!(field_of(r#"{"alpha": 1.5}"#), "alpha");
        assert_eq!(field_of(r#"{"alpha": -0.1}"#), "alpha");
        assert_eq!(
            field_of(r#"{"retrieval": {"frames_per_video": 9}}"#),
            "retrieval.frames_per_video"
        );
        assert_eq!(
            field_of(r#"{"generation": {"candidates": 16}}"#),
            "generation.frames_per_video"
        );
        assert_eq!(field_of(r#"{"max_inflight": 0}"#), "max_inflight");
        assert_eq!(field_of(r#"{"retrieval": {"k": 0}}"#), "retrieval.k");
        assert_eq!(field_of(r#"{"training": {"learning_rate": 0}}"#), "training.learning_rate");
        match EngineConfig::from_json_str(r#"{"alhpa": 0.5}"#) {
            Err(e) => assert!(e.to_string().contains("alhpa")),
            Ok(_) => panic!("unknown key accepted"),
        }
    }

    #[test]
    fn paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"manifest_path": "data/manifest.json", "seed": 9}"#).unwrap();
        let c = EngineConfig::load(&path).unwrap();
        assert_eq!(c.manifest_path.unwrap(), dir.path().join("data/manifest.json"));
        assert_eq!(c.seed, 9);
    }
}
