//! Generated corpora with known answers.
//!
//! Every video gets a random unit "identity" direction; its embeddings and
//! its query are built around that direction, so the correct video for each
//! query is known by construction.

use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::corpus::{
    embedding_path, save_manifest, write_embeddings, CorpusManifest, EmbeddingMatrix, Modality, VideoRecord,
};
use crate::queries::{write_queries, QueryRecord};
use crate::vector::Vector;
use crate::{seed, Error, Result};

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `v` plus isotropic Gaussian noise of standard deviation `sigma`, renormalized.
pub fn perturb(v: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noisy: Vec<f64> = v
        .iter()
        .map(|x| x + sigma * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let n = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
    noisy.into_iter().map(|x| x / n).collect()
}

pub fn noisy_query(q: &Vector, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vector> {
    Vector::new(perturb(q.as_slice(), sigma, rng))
}

/// A corpus written to disk plus its queries.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest_path: PathBuf,
    pub queries: Vec<QueryRecord>,
}

impl SyntheticCorpus {
    pub fn write_queries(&self, path: &Path) -> Result<()> {
        write_queries(&self.queries, path)
    }
}

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub n_videos: usize,
    pub dim: usize,
    pub frames: usize,
    /// Noise on each frame around the identity direction.
    pub frame_noise: f64,
    /// Noise on the text embedding; `None` writes no text files.
    pub text_noise: Option<f64>,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_videos: 1000,
            dim: 64,
            frames: 6,
            frame_noise: 0.05,
            text_noise: Some(0.05),
        }
    }
}

fn video_id(i: usize) -> String {
    format!("vid{i:04}")
}

fn record(id: &str, frames: usize, category: Option<String>) -> VideoRecord {
    VideoRecord {
        video_id: id.to_string(),
        source_path: format!("media/{id}.mp4"),
        duration_s: frames as f64,
        frame_count: frames as u32,
        subtitle: None,
        aux_transcript: None,
        category,
    }
}

fn timestamps(n: usize) -> Option<Vec<f32>> {
    Some((0..n).map(|t| t as f32).collect())
}

fn write_manifest(dir: &Path, corpus_id: &str, dim: usize, videos: Vec<VideoRecord>) -> Result<PathBuf> {
    let mut m = CorpusManifest::empty(corpus_id, "synthetic", dim as u32, "embeddings");
    m.videos = videos;
    let path = dir.join("manifest.json");
    save_manifest(&m, &path)?;
    Ok(path)
}

fn embeddings_dir(dir: &Path) -> Result<PathBuf> {
    let e = dir.join("embeddings");
    std::fs::create_dir_all(&e).map_err(|err| Error::io(&e, err))?;
    Ok(e)
}

fn planted_query(id: &str, identity: Vec<f64>) -> QueryRecord {
    QueryRecord {
        query_id: format!("q-{id}"),
        question: None,
        embedding: Some(identity),
        answer: None,
        source_video_id: Some(id.to_string()),
        category: None,
    }
}

/// Frames and text scattered tightly around each video's identity; the
/// query is the identity itself.
pub fn write_planted(dir: &Path, spec: &PlantedSpec, root_seed: u64) -> Result<SyntheticCorpus> {
    let emb = embeddings_dir(dir)?;
    let mut rng = seed::substream(root_seed, "synthetic/planted");
    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut queries = Vec::with_capacity(spec.n_videos);
    for i in 0..spec.n_videos {
        let id = video_id(i);
        let identity = random_unit(&mut rng, spec.dim);
        let frames: Vec<Vec<f64>> = (0..spec.frames)
            .map(|_| perturb(&identity, spec.frame_noise, &mut rng))
            .collect();
        let visual = EmbeddingMatrix::from_rows(&id, Modality::Visual, &frames, timestamps(spec.frames))?;
        write_embeddings(&visual, &embedding_path(&emb, &id, Modality::Visual))?;
        if let Some(sigma) = spec.text_noise {
            let text = perturb(&identity, sigma, &mut rng);
            let m = EmbeddingMatrix::from_rows(&id, Modality::Text, &[text], None)?;
            write_embeddings(&m, &embedding_path(&emb, &id, Modality::Text))?;
        }
        videos.push(record(&id, spec.frames, None));
        queries.push(planted_query(&id, identity));
    }
    Ok(SyntheticCorpus {
        manifest_path: write_manifest(dir, "planted", spec.dim, videos)?,
        queries,
    })
}

#[derive(Debug, Clone)]
pub struct DistractorSpec {
    pub n_videos: usize,
    pub dim: usize,
    pub frames: usize,
    /// Frames per video that carry the identity direction.
    pub identity_frames: usize,
    pub jitter: f64,
}

impl Default for DistractorSpec {
    fn default() -> Self {
        DistractorSpec {
            n_videos: 100,
            dim: 16,
            frames: 10,
            identity_frames: 2,
            jitter: 0.05,
        }
    }
}

/// Each video hides a few identity frames at random positions among frames
/// drawn from a pool shared by every video. The pool depends only on
/// `pool_seed`, so corpora written with different `root_seed`s share it.
/// No text embeddings are written.
pub fn write_distractor(dir: &Path, spec: &DistractorSpec, root_seed: u64, pool_seed: u64) -> Result<SyntheticCorpus> {
    if spec.identity_frames > spec.frames {
        return Err(Error::InvalidArgument("more identity frames than frames".into()));
    }
    let n_noise = spec.frames - spec.identity_frames;
    let mut pool_rng = seed::substream(pool_seed, "synthetic/pool");
    let pool: Vec<Vec<f64>> = (0..n_noise).map(|_| random_unit(&mut pool_rng, spec.dim)).collect();
    let emb = embeddings_dir(dir)?;
    let mut rng = seed::substream(root_seed, "synthetic/distractor");
    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut queries = Vec::with_capacity(spec.n_videos);
    for i in 0..spec.n_videos {
        let id = video_id(i);
        let identity = random_unit(&mut rng, spec.dim);
        let mut slots = index::sample(&mut rng, spec.frames, spec.identity_frames).into_vec();
        slots.sort_unstable();
        let mut noise_order: Vec<usize> = (0..n_noise).collect();
        noise_order.shuffle(&mut rng);
        let mut noise = noise_order.into_iter();
        let frames: Vec<Vec<f64>> = (0..spec.frames)
            .map(|t| {
                let base = if slots.contains(&t) {
                    &identity
                } else {
                    &pool[noise.next().expect("one pool frame per noise slot")]
                };
                perturb(base, spec.jitter, &mut rng)
            })
            .collect();
        let visual = EmbeddingMatrix::from_rows(&id, Modality::Visual, &frames, timestamps(spec.frames))?;
        write_embeddings(&visual, &embedding_path(&emb, &id, Modality::Visual))?;
        videos.push(record(&id, spec.frames, None));
        queries.push(planted_query(&id, identity));
    }
    Ok(SyntheticCorpus {
        manifest_path: write_manifest(dir, "distractor", spec.dim, videos)?,
        queries,
    })
}

const CATEGORIES: [&str; 3] = ["cooking", "repair", "crafts"];

/// A directory of precomputed embedding files in the layout `vrag ingest
/// --precomputed` reads: `<id>.visual.vrem`, `<id>.text.vrem`, and a
/// `metadata.jsonl` with subtitles and categories. Also writes
/// `queries.jsonl` with questions, reference answers and ground truth.
pub fn write_precomputed_fixture(dir: &Path, n_videos: usize, dim: usize, frames: usize, root_seed: u64) -> Result<Vec<QueryRecord>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = seed::substream(root_seed, "synthetic/fixture");
    let mut meta = String::new();
    let mut queries = Vec::with_capacity(n_videos);
    for i in 0..n_videos {
        let id = video_id(i);
        let identity = random_unit(&mut rng, dim);
        let rows: Vec<Vec<f64>> = (0..frames).map(|_| perturb(&identity, 0.3, &mut rng)).collect();
        let visual = EmbeddingMatrix::from_rows(&id, Modality::Visual, &rows, timestamps(frames))?;
        write_embeddings(&visual, &embedding_path(dir, &id, Modality::Visual))?;
        let text = EmbeddingMatrix::from_rows(&id, Modality::Text, &[perturb(&identity, 0.1, &mut rng)], None)?;
        write_embeddings(&text, &embedding_path(dir, &id, Modality::Text))?;
        let category = CATEGORIES[i % CATEGORIES.len()];
        let step = rng.random_range(2..9);
        meta.push_str(
            &json!({
                "video_id": id,
                "source_path": format!("media/{id}.mp4"),
                "subtitle": format!("In this {category} video we finish task {i} in {step} steps."),
                "category": category,
            })
            .to_string(),
        );
        meta.push('\n');
        queries.push(QueryRecord {
            query_id: format!("q{i:02}"),
            question: Some(format!("How many steps does task {i} take?")),
            embedding: Some(identity),
            answer: Some(format!("Task {i} takes {step} steps.")),
            source_video_id: Some(id),
            category: Some(category.to_string()),
        });
    }
    let meta_path = dir.join("metadata.jsonl");
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    write_queries(&queries, &dir.join("queries.jsonl"))?;
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    #[test]
    fn planted_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlantedSpec {
            n_videos: 5,
            dim: 8,
            ..PlantedSpec::default()
        };
        let c = write_planted(dir.path(), &spec, 1).unwrap();
        let corpus = Corpus::open(&c.manifest_path).unwrap();
        assert_eq!(corpus.manifest.videos.len(), 5);
        let v = corpus.load_visual("vid0003").unwrap();
        assert_eq!((v.count, v.dim), (6, 8));
        assert!(corpus.load_text("vid0003").unwrap().is_some());
        assert_eq!(c.queries[3].source_video_id.as_deref(), Some("vid0003"));
    }

    #[test]
    fn distractor_pool_is_shared_and_identity_is_planted() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = DistractorSpec {
            n_videos: 3,
            jitter: 0.0,
            ..DistractorSpec::default()
        };
        let ca = write_distractor(a.path(), &spec, 1, 7).unwrap();
        let cb = write_distractor(b.path(), &spec, 2, 7).unwrap();
        let rows = |c: &SyntheticCorpus, id: &str| Corpus::open(&c.manifest_path).unwrap().load_visual(id).unwrap().rows();
        let id = |c: &SyntheticCorpus| c.queries[0].embedding.clone().unwrap();
        let near = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-6);
        let ra = rows(&ca, "vid0000");
        let rb = rows(&cb, "vid0000");
        assert_eq!(ra.iter().filter(|r| near(r, &id(&ca))).count(), 2);
        let noise_a: Vec<_> = ra.iter().filter(|r| !near(r, &id(&ca))).collect();
        assert!(noise_a.iter().all(|n| rb.iter().any(|r| near(r, n))));
    }

    #[test]
    fn fixture_layout() {
        let dir = tempfile::tempdir().unwrap();
        let q = write_precomputed_fixture(dir.path(), 4, 8, 5, 0).unwrap();
        assert_eq!(q.len(), 4);
        assert!(dir.path().join("vid0002.visual.vrem").exists());
        assert!(dir.path().join("vid0002.text.vrem").exists());
        let meta = std::fs::read_to_string(dir.path().join("metadata.jsonl")).unwrap();
        assert_eq!(meta.lines().count(), 4);
    }
}
