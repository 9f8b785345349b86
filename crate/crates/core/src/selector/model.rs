use std::path::Path;

use serde_json::{json, Value};

use super::{select_by, CandidateFrames, FrameRef, SelectorMode, SubsetCandidate};
use crate::nn::{cross_entropy_loss, softmax, Mlp, Trainable};
use crate::vector::dot;
use crate::{seed, Error, Result};

/// Frame tower and query tower for the query-conditioned scorer.
///
/// `score = <mean_i frame(f_i), query(q)>`, trained as the positive logit of
/// the two-class logits `[0, score]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinTowers {
    pub frame: Mlp,
    pub query: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationExample {
    pub frames: Vec<Vec<f64>>,
    pub query: Vec<f64>,
    pub label: usize,
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

impl TwinTowers {
    pub fn new(frame: Mlp, query: Mlp) -> Result<Self> {
        if frame.output_dim() != query.output_dim() {
            return Err(Error::DimMismatch {
                expected: frame.output_dim(),
                found: query.output_dim(),
            });
        }
        Ok(TwinTowers { frame, query })
    }

    pub fn score<R: AsRef<[f64]>>(&self, frames: &[R], query: &[f64]) -> Result<f64> {
        if frames.is_empty() {
            return Err(Error::EmptyInput);
        }
        let outs = frames
            .iter()
            .map(|f| self.frame.forward(f.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(dot(&mean_rows(&outs), &self.query.forward(query)?))
    }
}

impl Trainable for TwinTowers {
    type Example = GenerationExample;

    fn loss(&self, ex: &GenerationExample) -> Result<f64> {
        cross_entropy_loss(&[0.0, self.score(&ex.frames, &ex.query)?], ex.label)
    }

    fn loss_and_grad(&self, ex: &GenerationExample) -> Result<(f64, Vec<Vec<f64>>)> {
        if ex.frames.is_empty() {
            return Err(Error::EmptyInput);
        }
        let caches = ex
            .frames
            .iter()
            .map(|f| self.frame.forward_cached(f))
            .collect::<Result<Vec<_>>>()?;
        let q_cache = self.query.forward_cached(&ex.query)?;
        let outs: Vec<Vec<f64>> = caches.iter().map(|c| c.output.clone()).collect();
        let pooled = mean_rows(&outs);
        let s = dot(&pooled, &q_cache.output);
        let logits = [0.0, s];
        let loss = cross_entropy_loss(&logits, ex.label)?;
        let mut g = softmax(&logits)[1];
        if ex.label == 1 {
            g -= 1.0;
        }

        let n = caches.len() as f64;
        let per_frame: Vec<f64> = q_cache.output.iter().map(|q| g * q / n).collect();
        let mut frame_grad = vec![0.0; self.frame.params().len()];
        for cache in &caches {
            let grads = self.frame.backward(cache, &per_frame)?;
            for (a, b) in frame_grad.iter_mut().zip(grads.values) {
                *a += b;
            }
        }
        let q_out_grad: Vec<f64> = pooled.iter().map(|f| g * f).collect();
        let query_grad = self.query.backward(&q_cache, &q_out_grad)?.values;
        Ok((loss, vec![frame_grad, query_grad]))
    }

    fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.frame.params_mut(), self.query.params_mut()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectorNet {
    /// Scores the concatenation of `m` frame embeddings.
    Concat(Mlp),
    Towers(TwinTowers),
}

/// A trained subset scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub mode: SelectorMode,
    pub m: usize,
    pub candidate_count: usize,
    pub embedding_dim: usize,
    pub net: SelectorNet,
}

impl SelectorModel {
    pub fn from_concat(m: usize, candidate_count: usize, embedding_dim: usize, net: Mlp) -> Result<Self> {
        let model = SelectorModel {
            mode: SelectorMode::Retrieval,
            m,
            candidate_count,
            embedding_dim,
            net: SelectorNet::Concat(net),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_towers(
        m: usize,
        candidate_count: usize,
        embedding_dim: usize,
        towers: TwinTowers,
    ) -> Result<Self> {
        let model = SelectorModel {
            mode: SelectorMode::Generation,
            m,
            candidate_count,
            embedding_dim,
            net: SelectorNet::Towers(towers),
        };
        model.validate()?;
        Ok(model)
    }

    /// Freshly initialised concat scorer `m*dim -> h1 -> h2 -> 2`.
    pub fn init_retrieval(
        m: usize,
        candidate_count: usize,
        embedding_dim: usize,
        hidden: [usize; 2],
        seed: u64,
    ) -> Result<Self> {
        let net = Mlp::init(
            [m * embedding_dim, hidden[0], hidden[1], 2],
            seed::derive(seed, "selector/concat"),
        )?;
        Self::from_concat(m, candidate_count, embedding_dim, net)
    }

    /// Freshly initialised towers `dim -> h1 -> h2 -> out`.
    pub fn init_generation(
        m: usize,
        candidate_count: usize,
        embedding_dim: usize,
        hidden: [usize; 2],
        out: usize,
        seed: u64,
    ) -> Result<Self> {
        let dims = [embedding_dim, hidden[0], hidden[1], out];
        let towers = TwinTowers::new(
            Mlp::init(dims, seed::derive(seed, "selector/frame-tower"))?,
            Mlp::init(dims, seed::derive(seed, "selector/query-tower"))?,
        )?;
        Self::from_towers(m, candidate_count, embedding_dim, towers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.candidate_count == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidArgument(
                "m, candidate_count and embedding_dim must be positive".into(),
            ));
        }
        match (&self.net, self.mode) {
            (SelectorNet::Concat(net), SelectorMode::Retrieval) => {
                if net.input_dim() != self.m * self.embedding_dim {
                    return Err(Error::DimMismatch {
                        expected: self.m * self.embedding_dim,
                        found: net.input_dim(),
                    });
                }
                if net.output_dim() != 2 {
                    return Err(Error::DimMismatch {
                        expected: 2,
                        found: net.output_dim(),
                    });
                }
            }
            (SelectorNet::Towers(t), SelectorMode::Generation) => {
                for tower in [&t.frame, &t.query] {
                    if tower.input_dim() != self.embedding_dim {
                        return Err(Error::DimMismatch {
                            expected: self.embedding_dim,
                            found: tower.input_dim(),
                        });
                    }
                }
                if t.frame.output_dim() != t.query.output_dim() {
                    return Err(Error::DimMismatch {
                        expected: t.frame.output_dim(),
                        found: t.query.output_dim(),
                    });
                }
            }
            (_, mode) => {
                return Err(Error::InvalidArgument(format!(
                    "network kind does not match mode {mode}"
                )))
            }
        }
        Ok(())
    }

    fn expect_mode(&self, expected: SelectorMode) -> Result<()> {
        if self.mode != expected {
            return Err(Error::WrongMode {
                expected,
                found: self.mode,
            });
        }
        Ok(())
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.embedding_dim {
            return Err(Error::DimMismatch {
                expected: self.embedding_dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Positive-class logit of the concat scorer. Frames must arrive in
    /// ascending timestamp order.
    pub fn score_subset_retrieval(&self, frames: &[FrameRef<'_>]) -> Result<f64> {
        self.expect_mode(SelectorMode::Retrieval)?;
        let SelectorNet::Concat(net) = &self.net else {
            unreachable!("validated")
        };
        if frames.len() != self.m {
            return Err(Error::DimMismatch {
                expected: self.m,
                found: frames.len(),
            });
        }
        if frames.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err(Error::UnsortedFrames);
        }
        let mut input = Vec::with_capacity(self.m * self.embedding_dim);
        for f in frames {
            self.check_dim(f.embedding)?;
            input.extend_from_slice(f.embedding);
        }
        Ok(net.forward(&input)?[1])
    }

    /// Dot product of the pooled frame-tower output with the query-tower
    /// output. Independent of frame order.
    pub fn score_subset_generation<R: AsRef<[f64]>>(&self, frames: &[R], query: &[f64]) -> Result<f64> {
        self.expect_mode(SelectorMode::Generation)?;
        let SelectorNet::Towers(towers) = &self.net else {
            unreachable!("validated")
        };
        for f in frames {
            self.check_dim(f.as_ref())?;
        }
        self.check_dim(query)?;
        towers.score(frames, query)
    }

    /// Best-scoring `m`-subset among `n_subsets` sampled from the candidates.
    /// Generation mode needs a query; retrieval mode rejects one.
    pub fn select_frames(
        &self,
        candidates: &CandidateFrames,
        query: Option<&[f64]>,
        n_subsets: usize,
        seed: u64,
    ) -> Result<SubsetCandidate> {
        match (self.mode, query) {
            (SelectorMode::Generation, None) => return Err(Error::MissingQuery),
            (SelectorMode::Retrieval, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "the retrieval scorer does not take a query".into(),
                ))
            }
            _ => {}
        }
        match &self.net {
            SelectorNet::Concat(_) => select_by(
                |s| self.score_subset_retrieval(&candidates.frame_refs(s)),
                candidates.len(),
                self.m,
                n_subsets,
                seed,
            ),
            SelectorNet::Towers(towers) => {
                let query = query.expect("checked above");
                self.check_dim(query)?;
                let q_out = towers.query.forward(query)?;
                // each candidate passes through the frame tower once
                let outs = candidates
                    .rows
                    .iter()
                    .map(|r| {
                        self.check_dim(r)?;
                        towers.frame.forward(r)
                    })
                    .collect::<Result<Vec<_>>>()?;
                select_by(
                    |s| {
                        let picked: Vec<Vec<f64>> = s.iter().map(|&i| outs[i].clone()).collect();
                        Ok(dot(&mean_rows(&picked), &q_out))
                    },
                    candidates.len(),
                    self.m,
                    n_subsets,
                    seed,
                )
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "mode": self.mode,
            "m": self.m,
            "candidate_count": self.candidate_count,
            "embedding_dim": self.embedding_dim,
        });
        let mode = self.mode.to_string();
        match &self.net {
            SelectorNet::Concat(net) => v["net"] = net.to_json(Some(&mode)),
            SelectorNet::Towers(t) => {
                v["frame_tower"] = t.frame.to_json(Some(&mode));
                v["query_tower"] = t.query.to_json(Some(&mode));
            }
        }
        v
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let mode: SelectorMode = serde_json::from_value(v["mode"].clone())
            .map_err(|e| Error::schema("mode", e.to_string()))?;
        let positive = |field: &str| -> Result<usize> {
            v[field]
                .as_u64()
                .filter(|&n| n > 0)
                .map(|n| n as usize)
                .ok_or_else(|| Error::schema(field, "expected a positive integer"))
        };
        let (m, candidate_count, embedding_dim) =
            (positive("m")?, positive("candidate_count")?, positive("embedding_dim")?);
        let net = match mode {
            SelectorMode::Retrieval => SelectorNet::Concat(Mlp::from_json(&v["net"])?.0),
            SelectorMode::Generation => SelectorNet::Towers(TwinTowers::new(
                Mlp::from_json(&v["frame_tower"])?.0,
                Mlp::from_json(&v["query_tower"])?.0,
            )?),
        };
        let model = SelectorModel {
            mode,
            m,
            candidate_count,
            embedding_dim,
            net,
        };
        model
            .validate()
            .map_err(|e| Error::schema("net", e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(&self.to_json()).expect("model serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::schema("selector", e.to_string()))?;
        Self::from_json(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::brute_force_select;

    fn candidates(rows: Vec<Vec<f64>>) -> CandidateFrames {
        CandidateFrames {
            frame_indices: (0..rows.len()).collect(),
            timestamps: (0..rows.len()).map(|i| i as f64).collect(),
            rows,
        }
    }

    #[test]
    fn zero_nets_score_zero() {
        let model = SelectorModel::from_concat(2, 4, 3, Mlp::zeros([6, 4, 4, 2]).unwrap()).unwrap();
        let c = candidates(vec![vec![1.0, 2.0, 3.0]; 4]);
        assert_eq!(model.score_subset_retrieval(&c.frame_refs(&[0, 3])).unwrap(), 0.0);

        let towers = TwinTowers::new(Mlp::zeros([3, 4, 4, 2]).unwrap(), Mlp::zeros([3, 4, 4, 2]).unwrap())
            .unwrap();
        let model = SelectorModel::from_towers(2, 4, 3, towers).unwrap();
        assert_eq!(
            model.score_subset_generation(&c.subset_rows(&[0, 1]), &[1.0, 0.0, 0.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn mode_and_order_checks() {
        let model = SelectorModel::init_retrieval(2, 4, 3, [4, 4], 0).unwrap();
        let c = candidates(vec![vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.5], vec![2.0, 0.0, 1.0]]);
        let mut refs = c.frame_refs(&[0, 2]);
        refs.reverse();
        assert!(matches!(model.score_subset_retrieval(&refs), Err(Error::UnsortedFrames)));
        assert!(matches!(
            model.score_subset_generation(&c.subset_rows(&[0, 1]), &[0.0; 3]),
            Err(Error::WrongMode { .. })
        ));
        assert!(model.select_frames(&c, Some(&[0.0; 3]), 5, 0).is_err());

        let gen = SelectorModel::init_generation(2, 4, 3, [4, 4], 3, 0).unwrap();
        assert!(matches!(gen.select_frames(&c, None, 5, 0), Err(Error::MissingQuery)));
        assert!(matches!(
            gen.score_subset_generation(&c.subset_rows(&[0]), &[0.0; 2]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn generation_score_ignores_frame_order() {
        let model = SelectorModel::init_generation(3, 5, 4, [6, 6], 3, 11).unwrap();
        let frames = vec![
            vec![0.1, 0.5, -0.3, 0.2],
            vec![0.9, -0.1, 0.0, 0.4],
            vec![-0.2, 0.3, 0.8, -0.6],
        ];
        let q = [0.3, -0.2, 0.5, 0.1];
        let a = model.score_subset_generation(&frames, &q).unwrap();
        let rev: Vec<_> = frames.iter().rev().cloned().collect();
        let b = model.score_subset_generation(&rev, &q).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn select_matches_brute_force_for_both_modes() {
        let mut rng = seed::rng(3);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let c = candidates(rows);
        let q = [0.4, -0.1, 0.7];

        let r = SelectorModel::init_retrieval(3, 7, 3, [5, 5], 1).unwrap();
        let picked = r.select_frames(&c, None, 1000, 0).unwrap();
        let oracle = brute_force_select(|s| r.score_subset_retrieval(&c.frame_refs(s)), 7, 3).unwrap();
        assert_eq!(picked, oracle);

        let g = SelectorModel::init_generation(3, 7, 3, [5, 5], 4, 1).unwrap();
        let picked = g.select_frames(&c, Some(&q), 1000, 0).unwrap();
        let oracle =
            brute_force_select(|s| g.score_subset_generation(&c.subset_rows(s), &q), 7, 3).unwrap();
        assert_eq!(picked.frame_indices, oracle.frame_indices);
        assert!((picked.score.unwrap() - oracle.score.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        for model in [
            SelectorModel::init_retrieval(2, 8, 3, [4, 5], 9).unwrap(),
            SelectorModel::init_generation(4, 16, 3, [4, 5], 6, 9).unwrap(),
        ] {
            let back = SelectorModel::from_json(&model.to_json()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn json_rejects_inconsistent_dims() {
        let model = SelectorModel::init_retrieval(2, 8, 3, [4, 5], 9).unwrap();
        let mut v = model.to_json();
        v["m"] = json!(3);
        assert!(matches!(SelectorModel::from_json(&v), Err(Error::SchemaViolation { .. })));
    }

    #[test]
    fn tower_gradients_match_finite_differences() {
        let towers = TwinTowers::new(
            Mlp::init([3, 4, 4, 3], 5).unwrap(),
            Mlp::init([3, 4, 4, 3], 6).unwrap(),
        )
        .unwrap();
        let ex = GenerationExample {
            frames: vec![vec![0.2, -0.4, 0.9], vec![0.5, 0.1, -0.3]],
            query: vec![0.7, 0.2, -0.5],
            label: 1,
        };
        let (_, grads) = towers.loss_and_grad(&ex).unwrap();
        let h = 1e-6;
        for (group, g) in grads.iter().enumerate() {
            for (i, &analytic) in g.iter().enumerate() {
                let mut plus = towers.clone();
                let mut minus = towers.clone();
                plus.param_groups_mut()[group][i] += h;
                minus.param_groups_mut()[group][i] -= h;
                let numeric = (plus.loss(&ex).unwrap() - minus.loss(&ex).unwrap()) / (2.0 * h);
                assert!(
                    (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "group {group} param {i}: {numeric} vs {analytic}"
                );
            }
        }
    }
}
