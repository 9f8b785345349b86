use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::GenerationExample;
use super::{sample_subsets, CandidateFrames};
use crate::nn::LabeledExample;
use crate::vector::cosine_slices;
use crate::{seed, Error, Result};

/// How many subsets at each end of the ranking receive a label.
const LABELED_PER_SIDE: usize = 3;

/// A query with its ground-truth video and that video's reduced candidates.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub query_id: String,
    pub query: Vec<f64>,
    pub video_id: String,
    pub candidates: CandidateFrames,
    /// Question text and reference answer, used by answer-quality signals.
    pub question: Option<String>,
    pub reference_answer: Option<String>,
}

/// Raw quality of a subset for a pair; higher is better.
pub trait SubsetSignal {
    fn signal(&self, pair: &TrainingPair, subset: &[usize]) -> Result<f64>;
}

impl<F> SubsetSignal for F
where
    F: Fn(&TrainingPair, &[usize]) -> Result<f64>,
{
    fn signal(&self, pair: &TrainingPair, subset: &[usize]) -> Result<f64> {
        self(pair, subset)
    }
}

/// Cosine between the mean-pooled subset and the query.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuerySimilarity;

impl SubsetSignal for QuerySimilarity {
    fn signal(&self, pair: &TrainingPair, subset: &[usize]) -> Result<f64> {
        let pooled = crate::vector::mean_pool(&pair.candidates.subset_rows(subset))?;
        cosine_slices(pooled.as_slice(), &pair.query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorTrainingExample {
    #[serde(default)]
    pub query_id: Option<String>,
    pub video_id: String,
    pub frame_indices: Vec<usize>,
    pub label: bool,
    pub raw_signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub query_id: String,
    pub video_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectedData {
    pub examples: Vec<SelectorTrainingExample>,
    pub skipped: Vec<SkippedPair>,
}

/// Ranks subsets by signal (descending, ties by index list) and labels the
/// top three `true` and the bottom three `false`. Returns
/// `(position in input, label)` in ranking order.
pub fn label_subsets(scored: &[(Vec<usize>, f64)]) -> Result<Vec<(usize, bool)>> {
    if scored.len() < 2 * LABELED_PER_SIDE {
        return Err(Error::TooFewSubsets(scored.len()));
    }
    if let Some((s, _)) = scored.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite signal for subset {s:?}")));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .1
            .total_cmp(&scored[a].1)
            .then_with(|| scored[a].0.cmp(&scored[b].0))
    });
    let n = order.len();
    let mut out: Vec<(usize, bool)> = order[..LABELED_PER_SIDE].iter().map(|&i| (i, true)).collect();
    out.extend(order[n - LABELED_PER_SIDE..].iter().map(|&i| (i, false)));
    Ok(out)
}

/// Samples subsets for every pair, scores them with `signal` and keeps the
/// labeled extremes. Pairs with fewer than `m` candidates, or too small a
/// combination space, are skipped and reported.
pub fn collect_training_data(
    pairs: &[TrainingPair],
    m: usize,
    n_subsets: usize,
    seed: u64,
    signal: &dyn SubsetSignal,
) -> Result<CollectedData> {
    if n_subsets < 2 * LABELED_PER_SIDE {
        return Err(Error::TooFewSubsets(n_subsets));
    }
    let mut out = CollectedData::default();
    for (i, pair) in pairs.iter().enumerate() {
        let skip = |reason: String| SkippedPair {
            query_id: pair.query_id.clone(),
            video_id: pair.video_id.clone(),
            reason,
        };
        if pair.candidates.len() < m {
            log::warn!(
                "skipping {}/{}: {} candidates for m = {m}",
                pair.query_id,
                pair.video_id,
                pair.candidates.len()
            );
            out.skipped.push(skip(format!("{} candidates, fewer than m = {m}", pair.candidates.len())));
            continue;
        }
        let pair_seed = seed::derive(seed, &format!("collect/{i}/{}/{}", pair.query_id, pair.video_id));
        let subsets = sample_subsets(pair.candidates.len(), m, n_subsets, pair_seed)?;
        if subsets.len() < 2 * LABELED_PER_SIDE {
            log::warn!("skipping {}/{}: only {} subsets", pair.query_id, pair.video_id, subsets.len());
            out.skipped.push(skip(format!("only {} distinct subsets", subsets.len())));
            continue;
        }
        let scored = subsets
            .into_iter()
            .map(|s| {
                let v = signal.signal(pair, &s)?;
                Ok((s, v))
            })
            .collect::<Result<Vec<_>>>()?;
        for (pos, label) in label_subsets(&scored)? {
            out.examples.push(SelectorTrainingExample {
                query_id: Some(pair.query_id.clone()),
                video_id: pair.video_id.clone(),
                frame_indices: scored[pos].0.clone(),
                label,
                raw_signal: scored[pos].1,
            });
        }
    }
    Ok(out)
}

fn pair_lookup(pairs: &[TrainingPair]) -> HashMap<(&str, &str), &TrainingPair> {
    pairs
        .iter()
        .map(|p| ((p.query_id.as_str(), p.video_id.as_str()), p))
        .collect()
}

fn find_pair<'a>(
    lookup: &HashMap<(&str, &str), &'a TrainingPair>,
    ex: &SelectorTrainingExample,
) -> Result<&'a TrainingPair> {
    let q = ex.query_id.as_deref().unwrap_or("");
    lookup.get(&(q, ex.video_id.as_str())).copied().ok_or_else(|| {
        Error::InvalidArgument(format!("no training pair for query `{q}` and video `{}`", ex.video_id))
    })
}

fn check_subset(ex: &SelectorTrainingExample, pair: &TrainingPair) -> Result<()> {
    if ex.frame_indices.iter().any(|&i| i >= pair.candidates.len()) {
        return Err(Error::InvalidArgument(format!(
            "subset {:?} out of range for video `{}`",
            ex.frame_indices, ex.video_id
        )));
    }
    Ok(())
}

/// Concat-scorer inputs: subset rows in candidate (timestamp) order.
pub fn build_retrieval_set(
    examples: &[SelectorTrainingExample],
    pairs: &[TrainingPair],
) -> Result<Vec<LabeledExample>> {
    let lookup = pair_lookup(pairs);
    examples
        .iter()
        .map(|ex| {
            let pair = find_pair(&lookup, ex)?;
            check_subset(ex, pair)?;
            Ok(LabeledExample {
                input: ex
                    .frame_indices
                    .iter()
                    .flat_map(|&i| pair.candidates.rows[i].iter().copied())
                    .collect(),
                label: usize::from(ex.label),
            })
        })
        .collect()
}

pub fn build_generation_set(
    examples: &[SelectorTrainingExample],
    pairs: &[TrainingPair],
) -> Result<Vec<GenerationExample>> {
    let lookup = pair_lookup(pairs);
    examples
        .iter()
        .map(|ex| {
            let pair = find_pair(&lookup, ex)?;
            check_subset(ex, pair)?;
            Ok(GenerationExample {
                frames: ex
                    .frame_indices
                    .iter()
                    .map(|&i| pair.candidates.rows[i].clone())
                    .collect(),
                query: pair.query.clone(),
                label: usize::from(ex.label),
            })
        })
        .collect()
}

pub fn write_examples_jsonl(examples: &[SelectorTrainingExample], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, ex).expect("example serializes");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_examples_jsonl(path: &Path) -> Result<Vec<SelectorTrainingExample>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: SelectorTrainingExample = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("line {}", n + 1), e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::n_choose_k;

    fn pair_with(rows: Vec<Vec<f64>>, query: Vec<f64>) -> TrainingPair {
        TrainingPair {
            query_id: "q".into(),
            query,
            video_id: "v".into(),
            candidates: CandidateFrames {
                frame_indices: (0..rows.len()).collect(),
                timestamps: (0..rows.len()).map(|i| i as f64).collect(),
                rows,
            },
            question: None,
            reference_answer: None,
        }
    }

    #[test]
    fn labels_top_and_bottom_three() {
        let signals = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];
        let scored: Vec<_> = signals.iter().enumerate().map(|(i, &s)| (vec![i], s)).collect();
        let labels = label_subsets(&scored).unwrap();
        let truthy: Vec<usize> = labels.iter().filter(|l| l.1).map(|l| l.0).collect();
        let falsy: Vec<usize> = labels.iter().filter(|l| !l.1).map(|l| l.0).collect();
        assert_eq!(truthy, vec![0, 1, 2]);
        assert_eq!(falsy, vec![5, 6, 7]);
    }

    #[test]
    fn five_subsets_are_too_few() {
        let scored: Vec<_> = (0..5).map(|i| (vec![i], i as f64)).collect();
        assert!(matches!(label_subsets(&scored), Err(Error::TooFewSubsets(5))));
        assert!(matches!(
            collect_training_data(&[], 4, 5, 0, &QuerySimilarity),
            Err(Error::TooFewSubsets(5))
        ));
    }

    #[test]
    fn ties_fall_back_to_index_order() {
        let scored: Vec<_> = (0..6).rev().map(|i| (vec![i], 1.0)).collect();
        let labels = label_subsets(&scored).unwrap();
        let first: Vec<Vec<usize>> = labels.iter().filter(|l| l.1).map(|l| scored[l.0].0.clone()).collect();
        assert_eq!(first, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn aligned_frames_appear_in_every_true_subset() {
        // candidates 2 and 5 point at the query; the rest are orthogonal noise
        let d = 8;
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let mut v = vec![0.0; d];
                if i == 2 || i == 5 {
                    v[0] = 1.0;
                } else {
                    v[1 + i % (d - 1)] = 1.0;
                }
                v
            })
            .collect();
        let mut query = vec![0.0; d];
        query[0] = 1.0;
        let pair = pair_with(rows, query);
        for seed in 0..20 {
            let data = collect_training_data(std::slice::from_ref(&pair), 4, 10, seed, &QuerySimilarity)
                .unwrap();
            assert_eq!(data.examples.len(), 6);
            for ex in data.examples.iter().filter(|e| e.label) {
                assert!(ex.frame_indices.contains(&2) || ex.frame_indices.contains(&5));
            }
        }
        // exhaustive: all 70 subsets
        let data = collect_training_data(std::slice::from_ref(&pair), 4, 70, 0, &QuerySimilarity).unwrap();
        assert_eq!(n_choose_k(8, 4), 70);
        for ex in data.examples.iter().filter(|e| e.label) {
            assert!(ex.frame_indices.contains(&2) && ex.frame_indices.contains(&5));
        }
    }

    #[test]
    fn skips_short_videos_and_tiny_spaces() {
        let short = pair_with(vec![vec![1.0, 0.0]; 3], vec![1.0, 0.0]);
        let tiny = TrainingPair {
            query_id: "q2".into(),
            ..pair_with(vec![vec![1.0, 0.0]; 5], vec![1.0, 0.0])
        };
        let data = collect_training_data(&[short, tiny], 4, 10, 0, &QuerySimilarity).unwrap();
        assert!(data.examples.is_empty());
        assert_eq!(data.skipped.len(), 2);
    }

    #[test]
    fn labeling_invariants_and_determinism() {
        use rand::Rng;
        let mut rng = seed::rng(4);
        let pairs: Vec<TrainingPair> = (0..5)
            .map(|p| TrainingPair {
                query_id: format!("q{p}"),
                ..pair_with(
                    (0..8).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                    (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let a = collect_training_data(&pairs, 4, 10, 3, &QuerySimilarity).unwrap();
        let b = collect_training_data(&pairs, 4, 10, 3, &QuerySimilarity).unwrap();
        assert_eq!(a, b);
        for chunk in a.examples.chunks(6) {
            let min_true = chunk.iter().filter(|e| e.label).map(|e| e.raw_signal).fold(f64::MAX, f64::min);
            let max_false = chunk.iter().filter(|e| !e.label).map(|e| e.raw_signal).fold(f64::MIN, f64::max);
            assert_eq!(chunk.iter().filter(|e| e.label).count(), 3);
            assert!(min_true >= max_false);
        }
    }

    #[test]
    fn jsonl_round_trip_and_feature_building() {
        let pair = pair_with(
            (0..6).map(|i| vec![i as f64, 1.0]).collect(),
            vec![1.0, 1.0],
        );
        let data = collect_training_data(std::slice::from_ref(&pair), 2, 15, 1, &QuerySimilarity).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.jsonl");
        write_examples_jsonl(&data.examples, &path).unwrap();
        assert_eq!(read_examples_jsonl(&path).unwrap(), data.examples);

        let set = build_retrieval_set(&data.examples, std::slice::from_ref(&pair)).unwrap();
        let first = &data.examples[0].frame_indices;
        assert_eq!(set[0].input, vec![first[0] as f64, 1.0, first[1] as f64, 1.0]);
        assert_eq!(set[0].label, 1);
        let gen = build_generation_set(&data.examples, std::slice::from_ref(&pair)).unwrap();
        assert_eq!(gen[0].frames.len(), 2);
        assert!(build_retrieval_set(&data.examples, &[]).is_err());
    }
}
