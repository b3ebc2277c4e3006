//! Shallow dense autoencoder trained with Adam on flattened landscapes.
//!
//! Layer stack (weights stored `fan_in x fan_out`, so a batch `X` of row
//! vectors maps to `X W + b`):
//!
//! ```text
//! L1 input -> N_h   tanh
//! L2 N_h   -> f_h   tanh     (features)
//! L3 f_h   -> N_h   tanh
//! L4 N_h   -> input linear   (reconstruction)
//! ```
//!
//! The loss is the mean squared reconstruction error over batch and pixels
//! plus `alpha * sum(w^2)` over the weight matrices of L1..L3 (biases and
//! the linear output layer excluded by default; see [`L2Scope`]).

mod adam;
mod file;
mod train;

pub use adam::AdamHyper;
pub use adam::AdamState;
pub use file::{load_network, read_network, save_network, write_network, NetworkFile, NETWORK_MAGIC, NETWORK_VERSION};
pub use train::{train, train_from, TrainConfig, TrainReport};

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, MctError, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    pub n_hidden: usize,
    pub n_features: usize,
}

impl ArchitectureSpec {
    pub fn new(input_dim: usize, n_hidden: usize, n_features: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            n_hidden,
            n_features,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.input_dim > self.n_hidden && self.n_hidden > self.n_features && self.n_features >= 1) {
            return Err(MctError::param(format!(
                "architecture needs input_dim > n_hidden > n_features >= 1, got {}",
                self
            )));
        }
        Ok(())
    }

    /// `"<N_h>x<f_h>"`, e.g. `190x40`.
    pub fn label(&self) -> String {
        format!("{}x{}", self.n_hidden, self.n_features)
    }

    fn layer_shapes(&self) -> [(usize, usize); 4] {
        [
            (self.input_dim, self.n_hidden),
            (self.n_hidden, self.n_features),
            (self.n_features, self.n_hidden),
            (self.n_hidden, self.input_dim),
        ]
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}->{}", self.input_dim, self.n_hidden, self.n_features)
    }
}

/// Hidden widths 190, 180, ..., 100 (outer) times feature widths 40, 30,
/// 20, 10 (inner): 40 architectures, widest first.
pub fn ensemble_specs(input_dim: usize) -> Vec<ArchitectureSpec> {
    let mut out = Vec::with_capacity(40);
    for n_hidden in (100..=190).rev().step_by(10) {
        for n_features in (10..=40).rev().step_by(10) {
            out.push(ArchitectureSpec {
                input_dim,
                n_hidden,
                n_features,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        z
    }
}

/// Weights and biases of L1..L4. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: ArchitectureSpec,
    pub layers: [DenseLayer; 4],
}

impl NetworkParams {
    pub fn zeros(spec: ArchitectureSpec) -> Self {
        let s = spec.layer_shapes();
        Self {
            spec,
            layers: s.map(|(i, o)| DenseLayer::zeros(i, o)),
        }
    }

    /// Tensors in file order: L1w, L1b, L2w, L2b, L3w, L3b, L4w, L4b.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Sum of squared weights over all four layers, biases excluded.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// First-layer weights (`input_dim x N_h`).
    pub fn input_weights(&self) -> &Array2<f64> {
        &self.layers[0].weights
    }
}

/// Weight matrices covered by the L2 term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Scope {
    /// L1..L3, the tanh layers; the linear output layer is unpenalized.
    #[default]
    Hidden,
    /// All four weight matrices.
    All,
}

impl L2Scope {
    pub fn covers(self, layer: usize) -> bool {
        layer < 3 || self == L2Scope::All
    }
}

/// `alpha * sum(w^2)` over the layers in `scope`. A bare `f64` converts
/// with the default scope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Penalty {
    pub alpha: f64,
    pub scope: L2Scope,
}

impl L2Penalty {
    pub fn new(alpha: f64, scope: L2Scope) -> Self {
        Self { alpha, scope }
    }

    pub fn value(&self, params: &NetworkParams) -> f64 {
        if self.alpha == 0.0 {
            return 0.0;
        }
        let sq: f64 = params
            .layers
            .iter()
            .enumerate()
            .filter(|(k, _)| self.scope.covers(*k))
            .map(|(_, l)| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum();
        self.alpha * sq
    }
}

impl From<f64> for L2Penalty {
    fn from(alpha: f64) -> Self {
        Self::new(alpha, L2Scope::default())
    }
}

/// Glorot-uniform weights on `±sqrt(6 / (fan_in + fan_out))`, zero biases.
/// Draws are taken layer by layer in row-major order from one generator.
pub fn init_network(spec: ArchitectureSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut params = NetworkParams::zeros(spec);
    for layer in params.layers.iter_mut() {
        let (fan_in, fan_out) = layer.weights.dim();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in layer.weights.iter_mut() {
            *w = rng.uniform(-limit, limit);
        }
    }
    Ok(params)
}

/// Activations retained for backpropagation. Rows are batch samples.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden_in: Array2<f64>,
    pub features: Array2<f64>,
    pub hidden_out: Array2<f64>,
    pub reconstruction: Array2<f64>,
}

fn tanh_inplace(mut z: Array2<f64>) -> Array2<f64> {
    z.mapv_inplace(f64::tanh);
    z
}

fn check_batch(params: &NetworkParams, batch: &ArrayView2<f64>) -> Result<()> {
    check_len("autoencoder input", params.spec.input_dim, batch.ncols())
}

/// Encoder half on a batch: returns (`tanh(L1 x)`, features).
fn encode_batch(params: &NetworkParams, batch: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let h1 = tanh_inplace(params.layers[0].apply(batch));
    let f = tanh_inplace(params.layers[1].apply(&h1.view()));
    (h1, f)
}

pub fn forward_batch(params: &NetworkParams, batch: ArrayView2<f64>) -> Result<ForwardCache> {
    check_batch(params, &batch)?;
    let (hidden_in, features) = encode_batch(params, &batch);
    let hidden_out = tanh_inplace(params.layers[2].apply(&features.view()));
    let reconstruction = params.layers[3].apply(&hidden_out.view());
    Ok(ForwardCache {
        hidden_in,
        features,
        hidden_out,
        reconstruction,
    })
}

/// Single-sample forward pass: `(reconstruction, features, cache)`.
pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, ForwardCache)> {
    check_len("autoencoder input", params.spec.input_dim, x.len())?;
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let cache = forward_batch(params, view)?;
    let recon = cache.reconstruction.row(0).to_vec();
    let feats = cache.features.row(0).to_vec();
    Ok((recon, feats, cache))
}

/// Encoder output for one landscape.
pub fn extract_features(params: &NetworkParams, pixels: &[f64]) -> Result<Vec<f64>> {
    check_len("autoencoder input", params.spec.input_dim, pixels.len())?;
    let view = ArrayView2::from_shape((1, pixels.len()), pixels).expect("row vector");
    Ok(encode_batch(params, &view).1.row(0).to_vec())
}

/// Encoder output for each sample, computed one sample at a time
/// so every row matches [`extract_features`] exactly.
pub fn extract_features_many<'a>(
    params: &NetworkParams,
    samples: impl IntoIterator<Item = &'a [f64]>,
) -> Result<Vec<Vec<f64>>> {
    samples.into_iter().map(|x| extract_features(params, x)).collect()
}

/// Mean of `(x - reconstruction)^2` over batch rows and pixels.
pub fn reconstruction_mse(params: &NetworkParams, batch: ArrayView2<f64>) -> Result<f64> {
    let cache = forward_batch(params, batch)?;
    Ok(mse(&batch, &cache.reconstruction))
}

fn mse(x: &ArrayView2<f64>, recon: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(x).and(recon).for_each(|&a, &b| acc += (a - b) * (a - b));
    acc / x.len() as f64
}

/// Reconstruction MSE plus the L2 penalty.
pub fn loss(params: &NetworkParams, batch: ArrayView2<f64>, penalty: impl Into<L2Penalty>) -> Result<f64> {
    if batch.nrows() == 0 {
        return Err(MctError::param("loss of an empty batch"));
    }
    Ok(reconstruction_mse(params, batch)? + penalty.into().value(params))
}

/// Exact gradient of [`loss`] by backpropagation; returns `(loss, grads)`.
pub fn loss_and_gradient(
    params: &NetworkParams,
    batch: ArrayView2<f64>,
    penalty: impl Into<L2Penalty>,
) -> Result<(f64, NetworkParams)> {
    if batch.nrows() == 0 {
        return Err(MctError::param("gradient of an empty batch"));
    }
    let penalty = penalty.into();
    let cache = forward_batch(params, batch)?;
    let loss = mse(&batch, &cache.reconstruction) + penalty.value(params);
    let scale = 2.0 / batch.len() as f64;
    let mut grads = NetworkParams::zeros(params.spec);

    // dL/d(reconstruction)
    let mut delta = cache.reconstruction.clone();
    Zip::from(&mut delta)
        .and(&batch)
        .for_each(|d, &x| *d = scale * (*d - x));

    let inputs = [
        batch,
        cache.hidden_in.view(),
        cache.features.view(),
        cache.hidden_out.view(),
    ];
    let outputs = [&cache.hidden_in, &cache.features, &cache.hidden_out];
    for k in (0..4).rev() {
        grads.layers[k].weights.assign(&inputs[k].t().dot(&delta));
        grads.layers[k].bias.assign(&delta.sum_axis(Axis(0)));
        if k > 0 {
            // Back through the weights, then through tanh of layer k-1.
            let mut upstream = delta.dot(&params.layers[k].weights.t());
            Zip::from(&mut upstream)
                .and(outputs[k - 1])
                .for_each(|g, &a| *g *= 1.0 - a * a);
            delta = upstream;
        }
    }
    if penalty.alpha != 0.0 {
        for (k, (g, p)) in grads.layers.iter_mut().zip(&params.layers).enumerate() {
            if penalty.scope.covers(k) {
                g.weights.scaled_add(2.0 * penalty.alpha, &p.weights);
            }
        }
    }
    Ok((loss, grads))
}

pub fn gradient(
    params: &NetworkParams,
    batch: ArrayView2<f64>,
    penalty: impl Into<L2Penalty>,
) -> Result<NetworkParams> {
    loss_and_gradient(params, batch, penalty).map(|(_, g)| g)
}

/// Largest relative disagreement between [`gradient`] and central finite
/// differences with step `h`, over every parameter. Each entry is scored
/// as `|g - g_fd| / max(|g|, |g_fd|, 1e-5)`.
pub fn gradient_check(
    params: &NetworkParams,
    batch: ArrayView2<f64>,
    penalty: impl Into<L2Penalty>,
    h: f64,
) -> Result<f64> {
    let penalty = penalty.into();
    let analytic = gradient(params, batch, penalty)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (t, g) in analytic.tensors().iter().enumerate() {
        for (i, &gi) in g.iter().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = loss(&probe, batch, penalty)?;
            probe.tensors_mut()[t][i] = orig - h;
            let down = loss(&probe, batch, penalty)?;
            probe.tensors_mut()[t][i] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-5);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Stacks the given pixel vectors into a `rows x input_dim` matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        check_len("stacked row", dim, r.len())?;
        data.extend_from_slice(r);
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, dim), data).expect("shape matches data"))
}
