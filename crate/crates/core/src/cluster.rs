//! Frame-space reduction: k-means++ seeding, Lloyd iteration, and
//! centroid-nearest frame selection.
//!
//! Distances are squared Euclidean on the raw frame embeddings.

use rand::Rng;

use crate::vector::squared_distance;
use crate::{seed, Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster index per frame.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroids.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after the initial assignment and after each iteration.
    pub cost_history: Vec<f64>,
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewFrames {
            frames: points.len(),
            k,
        });
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: p.len(),
            });
        }
    }
    Ok(dim)
}

/// Indices of the k-means++ seeds: the first uniform, the rest by D² sampling.
///
/// If every remaining point coincides with a chosen seed, the next seed is
/// drawn uniformly from the points not yet chosen.
pub fn kmeans_pp_seed_indices(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    check_points(points, k)?;
    let n = points.len();
    let mut rng = seed::rng(seed);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();

    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &points[next]));
        }
    }
    Ok(chosen)
}

pub fn kmeans_pp_seed(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(kmeans_pp_seed_indices(points, k, seed)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest_centroid(p, centroids).0).collect()
}

/// Gives every empty cluster a point: the point farthest from its centroid
/// among clusters that can spare one (lowest index on ties). The moved point
/// becomes the empty cluster's centroid, so cost never increases.
fn repair_empty(points: &[Vec<f64>], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut donor: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[assignment[i]]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        let (i, _) = donor.expect("n >= k leaves a cluster with two members");
        assignment[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn cost_of(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn update_centroids(points: &[Vec<f64>], assignment: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = centroids[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for ((centroid, sum), count) in centroids.iter_mut().zip(sums).zip(counts) {
        if count > 0 {
            *centroid = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

/// Lloyd iteration from the given seeds. Stops when the relative cost
/// decrease falls below `tol` or after `max_iters` iterations.
pub fn lloyd_cluster(
    points: &[Vec<f64>],
    seeds: &[Vec<f64>],
    max_iters: usize,
    tol: f64,
) -> Result<ClusterAssignment> {
    let k = seeds.len();
    let dim = check_points(points, k)?;
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    if let Some(bad) = seeds.iter().find(|s| s.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.len(),
        });
    }

    let mut centroids = seeds.to_vec();
    let mut assignment = assign(points, &centroids);
    repair_empty(points, &mut assignment, &mut centroids);
    let mut cost = cost_of(points, &assignment, &centroids);
    let mut history = vec![cost];
    let mut iterations = 0;

    while iterations < max_iters && cost > 0.0 {
        update_centroids(points, &assignment, &mut centroids);
        assignment = assign(points, &centroids);
        repair_empty(points, &mut assignment, &mut centroids);
        let next = cost_of(points, &assignment, &centroids);
        iterations += 1;
        history.push(next);
        let converged = (cost - next) < tol * cost;
        cost = next;
        if converged {
            break;
        }
    }

    Ok(ClusterAssignment {
        k,
        assignment,
        centroids,
        cost,
        iterations,
        cost_history: history,
    })
}

/// Indices of `min(k, n)` representative frames, ascending: per cluster the
/// member nearest its centroid (lowest index on ties). With `n <= k` every
/// frame is returned.
pub fn reduce_frames(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if points.len() <= k {
        return Ok((0..points.len()).collect());
    }
    let seeds = kmeans_pp_seed(points, k, seed)?;
    let clusters = lloyd_cluster(points, &seeds, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;

    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, (p, &c)) in points.iter().zip(&clusters.assignment).enumerate() {
        let d = squared_distance(p, &clusters.centroids[c]);
        if best[c].is_none_or(|(_, bd)| d < bd) {
            best[c] = Some((i, d));
        }
    }
    let mut picked: Vec<usize> = best
        .into_iter()
        .map(|b| b.expect("repaired clusters are non-empty").0)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::seed::rng(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        centers
            .iter()
            .flat_map(|c| {
                (0..per)
                    .map(|_| vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)])
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn k_equals_n_picks_every_frame() {
        let pts = blobs(&[[0.0, 0.0], [3.0, 1.0]], 3, 0.5, 1);
        let mut idx = kmeans_pp_seed_indices(&pts, pts.len(), 9).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..pts.len()).collect::<Vec<_>>());
    }

    #[test]
    fn identical_frames_single_seed() {
        let pts = vec![vec![2.0, -1.0]; 5];
        assert_eq!(kmeans_pp_seed(&pts, 1, 4).unwrap(), vec![vec![2.0, -1.0]]);
    }

    #[test]
    fn too_few_frames() {
        let pts = vec![vec![0.0]; 2];
        assert!(matches!(
            kmeans_pp_seed(&pts, 3, 0),
            Err(Error::TooFewFrames { frames: 2, k: 3 })
        ));
    }

    #[test]
    fn seeding_is_deterministic() {
        let pts = blobs(&[[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]], 20, 1.0, 2);
        assert_eq!(
            kmeans_pp_seed_indices(&pts, 4, 77).unwrap(),
            kmeans_pp_seed_indices(&pts, 4, 77).unwrap()
        );
    }

    #[test]
    fn converged_input_costs_nothing() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![4.0, 0.0]];
        let out = lloyd_cluster(&pts, &pts, 10, DEFAULT_TOL).unwrap();
        assert_eq!(out.cost, 0.0);
        assert!(out.iterations <= 1);
    }

    #[test]
    fn square_corners_converge_to_edge_midpoints() {
        let side = 2.0;
        let pts = vec![
            vec![0.0, 0.0],
            vec![side, 0.0],
            vec![side, side],
            vec![0.0, side],
        ];
        let out = lloyd_cluster(&pts, &pts[..2], 100, DEFAULT_TOL).unwrap();
        assert!((out.cost - 4.0 * (side / 2.0) * (side / 2.0)).abs() < 1e-12);
        let mut cents = out.centroids.clone();
        cents.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cents, vec![vec![0.0, side / 2.0], vec![side, side / 2.0]]);
    }

    #[test]
    fn cost_matches_assignment() {
        let pts = blobs(&[[0.0, 0.0], [2.0, 2.0]], 30, 1.0, 5);
        let seeds = kmeans_pp_seed(&pts, 5, 5).unwrap();
        let out = lloyd_cluster(&pts, &seeds, 100, DEFAULT_TOL).unwrap();
        let recomputed = cost_of(&pts, &out.assignment, &out.centroids);
        assert!((out.cost - recomputed).abs() <= 1e-6 * recomputed.max(1.0));
        let mut sizes = [0; 5];
        out.assignment.iter().for_each(|&a| sizes[a] += 1);
        assert!(sizes.iter().all(|&s| s >= 1));
    }

    #[test]
    fn fewer_frames_than_clusters() {
        let pts = blobs(&[[0.0, 0.0]], 6, 1.0, 1);
        assert_eq!(reduce_frames(&pts, 8, 0).unwrap(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn identical_frames_tie_break_lowest() {
        let pts = vec![vec![0.25, 0.5, -1.0]; 8];
        for seed in 0..10 {
            assert_eq!(reduce_frames(&pts, 4, seed).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn one_frame_per_blob() {
        let pts = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 10, 0.05, 8);
        for seed in 0..50 {
            let picked = reduce_frames(&pts, 3, seed).unwrap();
            let blobs_hit: Vec<usize> = picked.iter().map(|i| i / 10).collect();
            assert_eq!(blobs_hit, vec![0, 1, 2], "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn lloyd_cost_never_increases(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 8..40),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let seeds = kmeans_pp_seed(&pts, k, seed).unwrap();
            let out = lloyd_cluster(&pts, &seeds, 50, 0.0).unwrap();
            for w in out.cost_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", out.cost_history);
            }
        }

        #[test]
        fn reduced_indices_distinct_sorted_in_range(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..30),
            k in 1usize..10,
            seed in any::<u64>(),
        ) {
            let idx = reduce_frames(&pts, k, seed).unwrap();
            prop_assert_eq!(idx.len(), k.min(pts.len()));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < pts.len()));
            prop_assert_eq!(&idx, &reduce_frames(&pts, k, seed).unwrap());
        }
    }
}
