//! Adaptive frame selection.
//!
//! A video's frames are first reduced to a small candidate set (see
//! [`crate::cluster::reduce_frames`]). Subsets of `m` candidates are sampled
//! from that set, scored by a trained network, and the best-scoring subset is
//! kept. Ties always go to the lexicographically smallest index list.

mod collect;
mod model;

use std::collections::HashSet;
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use collect::{
    build_generation_set, build_retrieval_set, collect_training_data, label_subsets,
    read_examples_jsonl, write_examples_jsonl, CollectedData, QuerySimilarity, SelectorTrainingExample,
    SkippedPair, SubsetSignal, TrainingPair,
};
pub use model::{GenerationExample, SelectorModel, SelectorNet, TwinTowers};

use crate::cluster::reduce_frames;
use crate::corpus::EmbeddingMatrix;
use crate::nn::{train, TrainConfig, TrainReport};
use crate::{seed, Error, Result};

/// Largest combination space [`brute_force_select`] will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    Retrieval,
    Generation,
}

impl fmt::Display for SelectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectorMode::Retrieval => "retrieval",
            SelectorMode::Generation => "generation",
        })
    }
}

impl std::str::FromStr for SelectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(SelectorMode::Retrieval),
            "generation" => Ok(SelectorMode::Generation),
            other => Err(Error::InvalidArgument(format!("unknown selector mode `{other}`"))),
        }
    }
}

/// A chosen subset: strictly increasing positions in the candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCandidate {
    pub frame_indices: Vec<usize>,
    pub score: Option<f64>,
}

/// One frame handed to the retrieval scorer.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    pub timestamp: f64,
    pub embedding: &'a [f64],
}

/// The reduced candidate frames of one video, in ascending timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFrames {
    /// Row indices into the video's full frame matrix.
    pub frame_indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl CandidateFrames {
    /// k-means++ reduction of the video's frames to at most `k` candidates.
    pub fn reduce(frames: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Self> {
        let rows = frames.rows();
        let picked = reduce_frames(&rows, k, seed)?;
        Ok(Self::gather(frames, &picked))
    }

    /// Every frame as a candidate.
    pub fn all(frames: &EmbeddingMatrix) -> Self {
        let all: Vec<usize> = (0..frames.count).collect();
        Self::gather(frames, &all)
    }

    pub fn gather(frames: &EmbeddingMatrix, indices: &[usize]) -> Self {
        CandidateFrames {
            frame_indices: indices.to_vec(),
            timestamps: indices.iter().map(|&i| frames.timestamp(i)).collect(),
            rows: indices.iter().map(|&i| frames.row_f64(i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn frame_refs(&self, subset: &[usize]) -> Vec<FrameRef<'_>> {
        subset
            .iter()
            .map(|&i| FrameRef {
                timestamp: self.timestamps[i],
                embedding: &self.rows[i],
            })
            .collect()
    }

    pub fn subset_rows(&self, subset: &[usize]) -> Vec<&[f64]> {
        subset.iter().map(|&i| self.rows[i].as_slice()).collect()
    }

    /// Maps candidate positions back to frame indices of the full video.
    pub fn original_indices(&self, subset: &[usize]) -> Vec<usize> {
        subset.iter().map(|&i| self.frame_indices[i]).collect()
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn n_choose_k(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at each step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

/// All `m`-subsets of `0..n` in lexicographic order.
fn enumerate_lexicographic(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    loop {
        out.push(current.clone());
        let Some(pos) = (0..m).rev().find(|&i| current[i] != i + n - m) else {
            return out;
        };
        current[pos] += 1;
        for j in pos + 1..m {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Up to `n_subsets` distinct subsets of size `min(m, candidate_count)`,
/// each drawn uniformly. When `n_subsets` covers the whole combination space
/// the full lexicographic enumeration is returned instead.
pub fn sample_subsets(
    candidate_count: usize,
    m: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if candidate_count == 0 || m == 0 || n_subsets == 0 {
        return Err(Error::InvalidArgument(
            "candidate_count, m and n_subsets must be positive".into(),
        ));
    }
    let size = m.min(candidate_count);
    if n_subsets as u128 >= n_choose_k(candidate_count, size) {
        return Ok(enumerate_lexicographic(candidate_count, size));
    }
    let mut rng = seed::rng(seed);
    let mut seen = HashSet::with_capacity(n_subsets);
    let mut out = Vec::with_capacity(n_subsets);
    while out.len() < n_subsets {
        let mut subset = index::sample(&mut rng, candidate_count, size).into_vec();
        subset.sort_unstable();
        if seen.insert(subset.clone()) {
            out.push(subset);
        }
    }
    Ok(out)
}

fn better(score: f64, subset: &[usize], best: &Option<(f64, Vec<usize>)>) -> bool {
    match best {
        None => true,
        Some((b, b_subset)) => score > *b || (score == *b && subset < b_subset.as_slice()),
    }
}

fn checked_score(score: f64, subset: &[usize]) -> Result<f64> {
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::InvalidArgument(format!("non-finite score for subset {subset:?}")))
    }
}

/// Argmax of `score` over the sampled subsets. With `candidate_count <= m`
/// the identity subset is returned without scoring.
pub fn select_by<F>(
    mut score: F,
    candidate_count: usize,
    m: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<SubsetCandidate>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if candidate_count == 0 {
        return Err(Error::EmptyInput);
    }
    if candidate_count <= m {
        return Ok(SubsetCandidate {
            frame_indices: (0..candidate_count).collect(),
            score: None,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in sample_subsets(candidate_count, m, n_subsets, seed)? {
        let s = checked_score(score(&subset)?, &subset)?;
        if better(s, &subset, &best) {
            best = Some((s, subset));
        }
    }
    let (s, frame_indices) = best.expect("at least one subset sampled");
    Ok(SubsetCandidate {
        frame_indices,
        score: Some(s),
    })
}

/// Exact argmax over every `m`-subset of the candidates, same tie-break as
/// [`select_by`]. Refuses spaces larger than [`BRUTE_FORCE_CAP`].
pub fn brute_force_select<F>(mut score: F, candidate_count: usize, m: usize) -> Result<SubsetCandidate>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if candidate_count == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    if candidate_count <= m {
        return Ok(SubsetCandidate {
            frame_indices: (0..candidate_count).collect(),
            score: None,
        });
    }
    if n_choose_k(candidate_count, m) > BRUTE_FORCE_CAP {
        return Err(Error::SpaceTooLarge {
            n: candidate_count,
            m,
        });
    }

    fn walk<F: FnMut(&[usize]) -> Result<f64>>(
        start: usize,
        n: usize,
        m: usize,
        prefix: &mut Vec<usize>,
        score: &mut F,
        best: &mut Option<(f64, Vec<usize>)>,
    ) -> Result<()> {
        if prefix.len() == m {
            let s = checked_score(score(prefix)?, prefix)?;
            if better(s, prefix, best) {
                *best = Some((s, prefix.clone()));
            }
            return Ok(());
        }
        let remaining = m - prefix.len();
        for i in start..=n - remaining {
            prefix.push(i);
            walk(i + 1, n, m, prefix, score, best)?;
            prefix.pop();
        }
        Ok(())
    }

    let mut best = None;
    walk(0, candidate_count, m, &mut Vec::with_capacity(m), &mut score, &mut best)?;
    let (s, frame_indices) = best.expect("non-empty space");
    Ok(SubsetCandidate {
        frame_indices,
        score: Some(s),
    })
}

/// Fits the model's scorer to labeled subsets of the given pairs.
pub fn train_selector(
    model: &mut SelectorModel,
    examples: &[SelectorTrainingExample],
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if let Some(ex) = examples.iter().find(|e| e.frame_indices.len() != model.m) {
        return Err(Error::DimMismatch {
            expected: model.m,
            found: ex.frame_indices.len(),
        });
    }
    match &mut model.net {
        SelectorNet::Concat(net) => train(net, &build_retrieval_set(examples, pairs)?, cfg),
        SelectorNet::Towers(towers) => train(towers, &build_generation_set(examples, pairs)?, cfg),
    }
}

/// Evenly spaced indices: the centre of each of `m` equal-width bins over `0..n`.
pub fn uniform_stride(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    (0..m).map(|i| (2 * i + 1) * n / (2 * m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(n_choose_k(8, 4), 70);
        assert_eq!(n_choose_k(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(n_choose_k(3, 5), 0);
        assert_eq!(n_choose_k(500, 250), u128::MAX);
    }

    #[test]
    fn eight_choose_four_enumerates_all() {
        let subsets = sample_subsets(8, 4, 100, 1).unwrap();
        assert_eq!(subsets.len(), 70);
        let distinct: HashSet<_> = subsets.iter().cloned().collect();
        assert_eq!(distinct.len(), 70);
        assert_eq!(subsets[0], vec![0, 1, 2, 3]);
        assert_eq!(subsets[69], vec![4, 5, 6, 7]);
    }

    #[test]
    fn forty_of_sixty_four_choose_thirty_two() {
        let subsets = sample_subsets(64, 32, 40, 7).unwrap();
        assert_eq!(subsets.len(), 40);
        let distinct: HashSet<_> = subsets.iter().cloned().collect();
        assert_eq!(distinct.len(), 40);
        for s in &subsets {
            assert_eq!(s.len(), 32);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(*s.last().unwrap() < 64);
        }
        assert_eq!(subsets, sample_subsets(64, 32, 40, 7).unwrap());
        assert_ne!(subsets, sample_subsets(64, 32, 40, 8).unwrap());
    }

    #[test]
    fn whole_set_when_m_covers_it() {
        assert_eq!(sample_subsets(3, 3, 10, 0).unwrap(), vec![vec![0, 1, 2]]);
        assert_eq!(sample_subsets(3, 5, 10, 0).unwrap(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        // 6 choose 2 = 15 subsets, draw 1 per seed many times
        let mut counts = std::collections::HashMap::new();
        for seed in 0..15_000u64 {
            let s = sample_subsets(6, 2, 1, seed).unwrap().remove(0);
            *counts.entry(s).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 15);
        for c in counts.values() {
            assert!((800..1200).contains(c), "{counts:?}");
        }
    }

    #[test]
    fn identity_when_few_candidates() {
        let out = select_by(|_| Ok(1.0), 4, 4, 10, 0).unwrap();
        assert_eq!(out.frame_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn constant_scorer_picks_lexicographically_smallest() {
        let sampled = sample_subsets(10, 3, 20, 5).unwrap();
        let smallest = sampled.iter().min().unwrap().clone();
        let out = select_by(|_| Ok(0.5), 10, 3, 20, 5).unwrap();
        assert_eq!(out.frame_indices, smallest);
    }

    #[test]
    fn brute_force_injective_scores() {
        // score = 10*a + b for subset [a, b] over 6 choose 2; max is [4, 5]
        let out = brute_force_select(|s| Ok((10 * s[0] + s[1]) as f64), 6, 2).unwrap();
        assert_eq!(out.frame_indices, vec![4, 5]);
        assert_eq!(out.score, Some(45.0));
        // reversed preference: min of 10a+b is [0,1]
        let out = brute_force_select(|s| Ok(-((10 * s[0] + s[1]) as f64)), 6, 2).unwrap();
        assert_eq!(out.frame_indices, vec![0, 1]);
    }

    #[test]
    fn brute_force_constant_and_cap() {
        assert_eq!(
            brute_force_select(|_| Ok(3.0), 6, 2).unwrap().frame_indices,
            vec![0, 1]
        );
        assert!(matches!(
            brute_force_select(|_| Ok(0.0), 64, 32),
            Err(Error::SpaceTooLarge { n: 64, m: 32 })
        ));
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(select_by(|_| Ok(f64::NAN), 5, 2, 10, 0).is_err());
    }

    #[test]
    fn stride_is_centered() {
        assert_eq!(uniform_stride(10, 4), vec![1, 3, 6, 8]);
        assert_eq!(uniform_stride(3, 4), vec![0, 1, 2]);
        assert_eq!(uniform_stride(100, 32).len(), 32);
    }
}
