//! Video-level representations, exact top-k ranking, and recall.

mod index_file;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use index_file::{
    decode_index, encode_index, read_index, read_index_meta, write_index, write_index_meta, IndexMeta,
};

use crate::corpus::{Corpus, EmbeddingMatrix, VideoRecord};
use crate::selector::{uniform_stride, CandidateFrames, SelectorMode, SelectorModel};
use crate::vector::{dot, interpolate_ensemble, l2_normalize, mean_pool, Vector};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSelection {
    Uniform,
    Adaptive,
}

/// Which stored representation to rank against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Visual,
    Text,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub video_id: String,
    pub visual: Option<Vector>,
    pub text: Option<Vector>,
    pub ensemble: Vector,
}

impl IndexEntry {
    pub fn repr(&self, which: Representation) -> Option<&Vector> {
        match which {
            Representation::Visual => self.visual.as_ref(),
            Representation::Text => self.text.as_ref(),
            Representation::Ensemble => Some(&self.ensemble),
        }
    }
}

/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoIndex {
    pub corpus_id: String,
    pub alpha: f64,
    pub dim: usize,
    pub selection: FrameSelection,
    pub frames_per_video: usize,
    pub entries: Vec<IndexEntry>,
}

impl VideoIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, video_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.video_id == video_id)
    }
}

#[derive(Debug, Clone)]
pub struct IndexConfig<'a> {
    pub alpha: f64,
    pub frames_per_video: usize,
    /// Candidate count for k-means++ reduction before adaptive selection.
    pub candidates: usize,
    pub n_subsets: usize,
    /// Videos without text fail when `alpha > 0` unless this is false, in
    /// which case they fall back to the visual representation.
    pub require_text: bool,
    pub selector: Option<&'a SelectorModel>,
    pub seed: u64,
}

impl Default for IndexConfig<'_> {
    fn default() -> Self {
        IndexConfig {
            alpha: 0.6,
            frames_per_video: 4,
            candidates: 8,
            n_subsets: 10,
            require_text: true,
            selector: None,
            seed: 0,
        }
    }
}

impl IndexConfig<'_> {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if self.frames_per_video == 0 {
            return Err(Error::config("frames_per_video", "must be >= 1"));
        }
        if let Some(sel) = self.selector {
            if sel.mode != SelectorMode::Retrieval {
                return Err(Error::WrongMode {
                    expected: SelectorMode::Retrieval,
                    found: sel.mode,
                });
            }
            if sel.m != self.frames_per_video {
                return Err(Error::config(
                    "frames_per_video",
                    format!("selector picks {} frames, config asks for {}", sel.m, self.frames_per_video),
                ));
            }
        }
        Ok(())
    }

    fn selection(&self) -> FrameSelection {
        if self.selector.is_some() {
            FrameSelection::Adaptive
        } else {
            FrameSelection::Uniform
        }
    }
}

/// Candidate positions chosen for retrieval: uniform stride without a
/// selector, k-means++ reduction then subset selection with one.
pub fn select_retrieval_frames(visual: &EmbeddingMatrix, cfg: &IndexConfig<'_>, seed: u64) -> Result<Vec<usize>> {
    match cfg.selector {
        None => Ok(uniform_stride(visual.count, cfg.frames_per_video)),
        Some(sel) => {
            let candidates =
                CandidateFrames::reduce(visual, cfg.candidates, seed::derive(seed, "retrieval/reduce"))?;
            let pick = sel.select_frames(&candidates, None, cfg.n_subsets, seed::derive(seed, "retrieval/select"))?;
            Ok(candidates.original_indices(&pick.frame_indices))
        }
    }
}

/// Mean of the chosen frames and the text vector, each normalized, mixed
/// with `alpha`.
pub fn embed_video_repr(
    record: &VideoRecord,
    visual: &EmbeddingMatrix,
    text: Option<&Vector>,
    cfg: &IndexConfig<'_>,
    seed: u64,
) -> Result<IndexEntry> {
    cfg.validate()?;
    if visual.count == 0 {
        return Err(Error::EmptyInput);
    }
    let picked = select_retrieval_frames(visual, cfg, seed)?;
    let rows: Vec<Vec<f64>> = picked.iter().map(|&i| visual.row_f64(i)).collect();
    let visual_repr = l2_normalize(&mean_pool(&rows)?)?;
    let text_repr = text.map(l2_normalize).transpose()?;
    if let Some(t) = &text_repr {
        if t.dim() != visual_repr.dim() {
            return Err(Error::DimMismatch {
                expected: visual_repr.dim(),
                found: t.dim(),
            });
        }
    }
    let ensemble = match &text_repr {
        Some(t) if cfg.alpha == 1.0 => t.clone(),
        Some(_) if cfg.alpha == 0.0 => visual_repr.clone(),
        Some(t) => interpolate_ensemble(t, &visual_repr, cfg.alpha)?,
        None if cfg.alpha > 0.0 && cfg.require_text => {
            return Err(Error::MissingTextEmbedding(record.video_id.clone()))
        }
        None => visual_repr.clone(),
    };
    Ok(IndexEntry {
        video_id: record.video_id.clone(),
        visual: Some(visual_repr),
        text: text_repr,
        ensemble,
    })
}

/// Text embedding file rows mean-pooled into one vector.
fn text_vector(corpus: &Corpus, video_id: &str) -> Result<Option<Vector>> {
    match corpus.load_text(video_id)? {
        None => Ok(None),
        Some(m) => Ok(Some(mean_pool(&m.rows())?)),
    }
}

/// One entry per manifest video, in manifest order. Failures name the video.
pub fn build_index(corpus: &Corpus, cfg: &IndexConfig<'_>) -> Result<VideoIndex> {
    cfg.validate()?;
    let entries = corpus
        .manifest
        .videos
        .par_iter()
        .map(|record| {
            let id = &record.video_id;
            let build = || {
                let visual = corpus.load_visual(id)?;
                let text = text_vector(corpus, id)?;
                embed_video_repr(record, &visual, text.as_ref(), cfg, seed::derive(cfg.seed, &format!("index/{id}")))
            };
            build().map_err(|e| e.for_video(id))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoIndex {
        corpus_id: corpus.manifest.corpus_id.clone(),
        alpha: cfg.alpha,
        dim: corpus.dim(),
        selection: cfg.selection(),
        frames_per_video: cfg.frames_per_video,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub video_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub ranked: Vec<Ranked>,
    pub k: usize,
}

impl RetrievalResult {
    pub fn with_query_id(mut self, query_id: impl Into<String>) -> Self {
        self.query_id = query_id.into();
        self
    }

    pub fn position(&self, video_id: &str) -> Option<usize> {
        self.ranked.iter().position(|r| r.video_id == video_id)
    }
}

/// Exact cosine ranking against one representation. Entries lacking it
/// are left out. Ties go to the smaller video id.
pub fn rank_by(index: &VideoIndex, query: &Vector, k: usize, which: Representation) -> Result<RetrievalResult> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if query.dim() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            found: query.dim(),
        });
    }
    let q = l2_normalize(query)?;
    let mut ranked: Vec<Ranked> = index
        .entries
        .iter()
        .filter_map(|e| {
            e.repr(which).map(|v| Ranked {
                video_id: e.video_id.clone(),
                score: dot(v.as_slice(), q.as_slice()).clamp(-1.0, 1.0),
            })
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.video_id.cmp(&b.video_id)));
    ranked.truncate(k);
    Ok(RetrievalResult {
        query_id: String::new(),
        ranked,
        k,
    })
}

/// Top-`k` videos by cosine to the ensemble representation.
pub fn retrieve_topk(index: &VideoIndex, query: &Vector, k: usize) -> Result<RetrievalResult> {
    rank_by(index, query, k, Representation::Ensemble)
}

/// Fraction of results whose ground truth sits in the top `k`.
pub fn recall_at_k(results: &[RetrievalResult], truth: &HashMap<String, String>, k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut hits = 0usize;
    for r in results {
        let gt = truth
            .get(&r.query_id)
            .ok_or_else(|| Error::MissingTruth(r.query_id.clone()))?;
        if r.ranked.iter().take(k).any(|x| &x.video_id == gt) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// One JSON object per line: `{query_id, ranked: [{video_id, score}], k}`.
pub fn write_results_jsonl(results: &[RetrievalResult], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for r in results {
        serde_json::to_writer(&mut buf, r).expect("result serializes");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_results_jsonl(path: &Path) -> Result<Vec<RetrievalResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::schema(format!("line {}", n + 1), e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: &[f64]) -> Vector {
        l2_normalize(&Vector::new(values.to_vec()).unwrap()).unwrap()
    }

    fn entry(id: &str, v: &[f64]) -> IndexEntry {
        IndexEntry {
            video_id: id.into(),
            visual: Some(unit(v)),
            text: None,
            ensemble: unit(v),
        }
    }

    fn index(entries: Vec<IndexEntry>) -> VideoIndex {
        VideoIndex {
            corpus_id: "c".into(),
            alpha: 0.0,
            dim: entries.first().map_or(2, |e| e.ensemble.dim()),
            selection: FrameSelection::Uniform,
            frames_per_video: 4,
            entries,
        }
    }

    fn record(id: &str) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            source_path: format!("{id}.mp4"),
            duration_s: 10.0,
            frame_count: 10,
            subtitle: None,
            aux_transcript: None,
            category: None,
        }
    }

    #[test]
    fn planted_identity_ranks_first() {
        let idx = index(vec![entry("a", &[1.0, 0.0, 0.0]), entry("b", &[0.0, 1.0, 0.0]), entry("c", &[0.6, 0.8, 0.0])]);
        let r = retrieve_topk(&idx, &unit(&[0.6, 0.8, 0.0]), 2).unwrap();
        assert_eq!(r.ranked[0].video_id, "c");
        assert!((r.ranked[0].score - 1.0).abs() < 1e-12);
        assert_eq!(r.ranked.len(), 2);
    }

    #[test]
    fn ties_by_ascending_id_and_scale_invariance() {
        let idx = index(vec![entry("z", &[1.0, 0.0]), entry("m", &[1.0, 0.0]), entry("a", &[0.0, 1.0])]);
        let r = retrieve_topk(&idx, &Vector::new(vec![5.0, 0.0]).unwrap(), 3).unwrap();
        let ids: Vec<&str> = r.ranked.iter().map(|x| x.video_id.as_str()).collect();
        assert_eq!(ids, ["m", "z", "a"]);
        let r2 = retrieve_topk(&idx, &Vector::new(vec![0.01, 0.0]).unwrap(), 3).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn errors() {
        let idx = index(vec![entry("a", &[1.0, 0.0])]);
        assert!(matches!(retrieve_topk(&idx, &unit(&[1.0, 0.0, 0.0]), 1), Err(Error::DimMismatch { .. })));
        assert!(matches!(retrieve_topk(&index(vec![]), &unit(&[1.0, 0.0]), 1), Err(Error::EmptyIndex)));
        assert!(retrieve_topk(&idx, &unit(&[1.0, 0.0]), 0).is_err());
    }

    #[test]
    fn recall_counts_and_missing_truth() {
        let mk = |q: &str, ids: &[&str]| RetrievalResult {
            query_id: q.into(),
            ranked: ids.iter().map(|i| Ranked { video_id: i.to_string(), score: 0.0 }).collect(),
            k: ids.len(),
        };
        let ids: Vec<String> = (0..10).map(|i| format!("v{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let results = vec![mk("q1", &refs), mk("q2", &refs)];
        let truth: HashMap<String, String> = [("q1", "v6"), ("q2", "v6")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(recall_at_k(&results, &truth, 5).unwrap(), 0.0);
        assert_eq!(recall_at_k(&results, &truth, 10).unwrap(), 1.0);
        assert!(matches!(
            recall_at_k(&[mk("q3", &refs)], &truth, 1),
            Err(Error::MissingTruth(q)) if q == "q3"
        ));
    }

    #[test]
    fn embed_endpoints_and_single_frame() {
        let frames = EmbeddingMatrix::from_rows("v", crate::corpus::Modality::Visual, &[vec![3.0, 4.0]], None).unwrap();
        let text = Vector::new(vec![0.0, 2.0]).unwrap();
        let cfg = IndexConfig {
            alpha: 0.0,
            ..IndexConfig::default()
        };
        let e = embed_video_repr(&record("v"), &frames, Some(&text), &cfg, 0).unwrap();
        assert_eq!(e.visual.as_ref().unwrap().as_slice(), &[0.6, 0.8]);
        assert_eq!(e.ensemble, *e.visual.as_ref().unwrap());
        let cfg = IndexConfig {
            alpha: 1.0,
            ..IndexConfig::default()
        };
        let e = embed_video_repr(&record("v"), &frames, Some(&text), &cfg, 0).unwrap();
        assert_eq!(e.ensemble.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn missing_text_policy() {
        let frames = EmbeddingMatrix::from_rows("v", crate::corpus::Modality::Visual, &[vec![1.0, 0.0]], None).unwrap();
        let cfg = IndexConfig::default();
        assert!(matches!(
            embed_video_repr(&record("v"), &frames, None, &cfg, 0),
            Err(Error::MissingTextEmbedding(_))
        ));
        let cfg = IndexConfig {
            require_text: false,
            ..IndexConfig::default()
        };
        let e = embed_video_repr(&record("v"), &frames, None, &cfg, 0).unwrap();
        assert_eq!(e.ensemble, *e.visual.as_ref().unwrap());
    }

    #[test]
    fn uniform_uses_configured_frames() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| if i % 3 == 1 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let frames = EmbeddingMatrix::from_rows("v", crate::corpus::Modality::Visual, &rows, None).unwrap();
        let cfg = IndexConfig {
            alpha: 0.0,
            ..IndexConfig::default()
        };
        // stride picks 1, 3, 6, 8: one of them (1) lies on the first axis
        let e = embed_video_repr(&record("v"), &frames, None, &cfg, 0).unwrap();
        let expected = unit(&[1.0, 3.0]);
        for (a, b) in e.visual.unwrap().as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
