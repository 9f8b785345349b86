use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Three dense layers `d_in -> h1 -> h2 -> d_out`, ReLU on the hidden layers,
/// linear output.
///
/// Parameters live in one flat buffer: for each layer the row-major weight
/// matrix (`out x in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: [usize; 4],
    activation: Activation,
    params: Vec<f64>,
}

/// Gradients with the same layout as [`Mlp`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    dims: [usize; 4],
    pub values: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `x`, `relu(z1)`, `relu(z2)`.
    inputs: [Vec<f64>; 3],
    /// Pre-activations of the two hidden layers.
    hidden_pre: [Vec<f64>; 2],
    pub output: Vec<f64>,
}

fn layer_offsets(dims: &[usize; 4]) -> [(usize, usize); 3] {
    let mut offsets = [(0, 0); 3];
    let mut at = 0;
    for (l, slot) in offsets.iter_mut().enumerate() {
        let w = dims[l] * dims[l + 1];
        *slot = (at, at + w);
        at += w + dims[l + 1];
    }
    offsets
}

fn param_count(dims: &[usize; 4]) -> usize {
    (0..3).map(|l| dims[l] * dims[l + 1] + dims[l + 1]).sum()
}

impl Mlp {
    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer dims {dims:?} must be positive")));
        }
        Ok(Mlp {
            dims,
            activation: Activation::Relu,
            params: vec![0.0; param_count(&dims)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: [usize; 4], seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        let mut rng = seed::rng(seed);
        for (l, (w_start, w_end)) in layer_offsets(&dims).into_iter().enumerate() {
            let limit = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            for w in &mut mlp.params[w_start..w_end] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(mlp)
    }

    /// Builds a network from nested `weights[layer][row][col]` and `biases[layer][row]`.
    pub fn from_layers(weights: Vec<Vec<Vec<f64>>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != 3 || biases.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 3 layers, found {} weight and {} bias layers",
                weights.len(),
                biases.len()
            )));
        }
        let d_in = weights[0].first().map_or(0, Vec::len);
        let dims = [d_in, weights[0].len(), weights[1].len(), weights[2].len()];
        let mut mlp = Self::zeros(dims)?;
        for l in 0..3 {
            if biases[l].len() != dims[l + 1] {
                return Err(Error::DimMismatch {
                    expected: dims[l + 1],
                    found: biases[l].len(),
                });
            }
            for (r, row) in weights[l].iter().enumerate() {
                if row.len() != dims[l] {
                    return Err(Error::DimMismatch {
                        expected: dims[l],
                        found: row.len(),
                    });
                }
                for (c, &w) in row.iter().enumerate() {
                    mlp.set_weight(l, r, c, w);
                }
            }
            for (r, &b) in biases[l].iter().enumerate() {
                mlp.set_bias(l, r, b);
            }
        }
        if mlp.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(mlp)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[3]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weight_index(&self, layer: usize, row: usize, col: usize) -> usize {
        layer_offsets(&self.dims)[layer].0 + row * self.dims[layer] + col
    }

    fn bias_index(&self, layer: usize, row: usize) -> usize {
        layer_offsets(&self.dims)[layer].1 + row
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> f64 {
        self.params[self.weight_index(layer, row, col)]
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) {
        let i = self.weight_index(layer, row, col);
        self.params[i] = value;
    }

    pub fn bias(&self, layer: usize, row: usize) -> f64 {
        self.params[self.bias_index(layer, row)]
    }

    pub fn set_bias(&mut self, layer: usize, row: usize, value: f64) {
        let i = self.bias_index(layer, row);
        self.params[i] = value;
    }

    pub fn weights_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..3)
            .map(|l| {
                (0..self.dims[l + 1])
                    .map(|r| (0..self.dims[l]).map(|c| self.weight(l, r, c)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn biases_nested(&self) -> Vec<Vec<f64>> {
        (0..3)
            .map(|l| (0..self.dims[l + 1]).map(|r| self.bias(l, r)).collect())
            .collect()
    }

    fn affine(&self, layer: usize, x: &[f64]) -> Vec<f64> {
        let (w_start, b_start) = layer_offsets(&self.dims)[layer];
        let (d_in, d_out) = (self.dims[layer], self.dims[layer + 1]);
        let weights = &self.params[w_start..w_start + d_in * d_out];
        let biases = &self.params[b_start..b_start + d_out];
        weights
            .chunks_exact(d_in)
            .zip(biases)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims[0] {
            return Err(Error::DimMismatch {
                expected: self.dims[0],
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let z1 = self.affine(0, x);
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let z2 = self.affine(1, &a1);
        let a2: Vec<f64> = z2.iter().map(|v| v.max(0.0)).collect();
        let output = self.affine(2, &a2);
        Ok(ForwardCache {
            inputs: [x.to_vec(), a1, a2],
            hidden_pre: [z1, z2],
            output,
        })
    }

    /// Backpropagates `d loss / d output` into parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients> {
        if grad_output.len() != self.dims[3] {
            return Err(Error::DimMismatch {
                expected: self.dims[3],
                found: grad_output.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let offsets = layer_offsets(&self.dims);
        let mut delta = grad_output.to_vec();
        for l in (0..3).rev() {
            let (w_start, b_start) = offsets[l];
            let d_in = self.dims[l];
            let input = &cache.inputs[l];
            for (r, &d) in delta.iter().enumerate() {
                grads[b_start + r] += d;
                if d != 0.0 {
                    let row = &mut grads[w_start + r * d_in..w_start + (r + 1) * d_in];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let mut upstream = vec![0.0; d_in];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.params[w_start + r * d_in..w_start + (r + 1) * d_in];
                    for (u, &w) in upstream.iter_mut().zip(row) {
                        *u += d * w;
                    }
                }
                for (u, &z) in upstream.iter_mut().zip(&cache.hidden_pre[l - 1]) {
                    if z <= 0.0 {
                        *u = 0.0;
                    }
                }
                delta = upstream;
            }
        }
        Ok(Gradients {
            dims: self.dims,
            values: grads,
        })
    }

    /// Cross-entropy loss of the logits for `label`, with its gradients.
    pub fn loss_and_gradients(&self, x: &[f64], label: usize) -> Result<(f64, Gradients)> {
        let cache = self.forward_cached(x)?;
        let loss = cross_entropy_loss(&cache.output, label)?;
        let mut grad = softmax(&cache.output);
        grad[label] -= 1.0;
        Ok((loss, self.backward(&cache, &grad)?))
    }
}

impl Gradients {
    pub fn weight(&self, layer: usize, row: usize, col: usize) -> f64 {
        self.values[layer_offsets(&self.dims)[layer].0 + row * self.dims[layer] + col]
    }

    pub fn bias(&self, layer: usize, row: usize) -> f64 {
        self.values[layer_offsets(&self.dims)[layer].1 + row]
    }
}

/// Analytic gradients of `cross_entropy_loss(mlp_forward(x), label)`.
pub fn mlp_backward(p: &Mlp, x: &[f64], label: usize) -> Result<Gradients> {
    Ok(p.loss_and_gradients(x, label)?.1)
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]`, computed as `logsumexp - logit`.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok((lse - logits[label]).max(0.0))
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
}

impl Mlp {
    /// JSON object `{layer_dims, weights, biases, activation, mode}`.
    pub fn to_json(&self, mode: Option<&str>) -> serde_json::Value {
        serde_json::to_value(MlpRepr {
            layer_dims: self.dims.to_vec(),
            weights: self.weights_nested(),
            biases: self.biases_nested(),
            activation: self.activation,
            mode: mode.map(str::to_string),
        })
        .expect("mlp serializes")
    }

    /// Inverse of [`Mlp::to_json`]; returns the network and its mode tag.
    pub fn from_json(value: &serde_json::Value) -> Result<(Self, Option<String>)> {
        let repr: MlpRepr = serde_json::from_value(value.clone())
            .map_err(|e| Error::schema("net", e.to_string()))?;
        let mlp = Mlp::from_layers(repr.weights, repr.biases)
            .map_err(|e| Error::schema("net", e.to_string()))?;
        if repr.layer_dims != mlp.dims {
            return Err(Error::schema(
                "net.layer_dims",
                format!("{:?} disagrees with weight shapes {:?}", repr.layer_dims, mlp.dims),
            ));
        }
        Ok((mlp, repr.mode))
    }
}
