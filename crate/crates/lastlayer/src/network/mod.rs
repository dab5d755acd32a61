//! Dense feed-forward classification networks.
//!
//! The stage-one representation network is a plain MLP: ReLU hidden layers,
//! softmax output, cross-entropy loss, everything in f64. The same machinery
//! also drives the single-layer (multinomial logistic regression) networks
//! that posterior samplers build over extracted features — a "last layer" is
//! just a [`NetworkParams`] with no hidden layers.

mod gradient;
mod serialize;
mod train;

pub use gradient::loss_and_gradient;
pub use serialize::{load_params, save_params, ParamsMeta, PARAMS_FILE_VERSION};
pub(crate) use serialize::{read_params_block, write_params_block};
pub(crate) use train::{train_with_dropout, DropoutPlan};
pub use train::{train, train_from, OptimizerKind, TrainConfig, TrainOutcome, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Layer widths from input to output: `[d, h_1, ..., h_m, K]`.
///
/// Two entries (no hidden layer) describe a bare softmax regression — legal
/// for sampler-built last layers. Stage-one feature extraction needs at least
/// one hidden layer so a penultimate activation exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    sizes: Vec<usize>,
}

impl Architecture {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "architecture needs input and output widths, got {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("zero-width layer in {sizes:?}")));
        }
        if *sizes.last().expect("non-empty") < 2 {
            return Err(Error::Config(
                "output layer needs at least 2 classes".into(),
            ));
        }
        Ok(Architecture { sizes })
    }

    /// Convenience: input width, hidden widths, class count.
    pub fn from_dims(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Architecture::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    /// Width of the layer feeding the output — the feature dimension for
    /// extraction. Equals the input width when there are no hidden layers.
    pub fn penultimate_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 2]
    }

    /// Number of dense (weight) layers.
    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn has_hidden(&self) -> bool {
        self.sizes.len() > 2
    }
}

/// One dense layer: `weights` is out×in, `bias` is out.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Full parameter set of a dense network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<DenseLayer>,
}

impl NetworkParams {
    /// Symmetric uniform init scaled by fan-in: `U(-1/√in, 1/√in)` per layer,
    /// drawn from a ChaCha8 stream seeded with `seed` (weights row-major,
    /// then bias, layer by layer — the draw order is part of the contract).
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.num_layers());
        for w in arch.sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound);
            let weights =
                Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
            let bias = Array1::from_shape_simple_fn(fan_out, || dist.sample(&mut rng));
            layers.push(DenseLayer { weights, bias });
        }
        NetworkParams { layers }
    }

    /// All-zero parameters (uniform 1/K outputs regardless of input).
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch
            .sizes()
            .windows(2)
            .map(|w| DenseLayer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        NetworkParams { layers }
    }

    pub(crate) fn from_layers(layers: Vec<DenseLayer>) -> Self {
        NetworkParams { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn architecture(&self) -> Architecture {
        let mut sizes = Vec::with_capacity(self.layers.len() + 1);
        sizes.push(self.layers[0].weights.ncols());
        sizes.extend(self.layers.iter().map(|l| l.weights.nrows()));
        Architecture { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.nrows()
    }

    /// The output layer alone, as a standalone single-layer network over the
    /// penultimate activation space. For a single-layer network this is a
    /// copy of the network itself.
    pub fn detach_last_layer(&self) -> NetworkParams {
        NetworkParams { layers: vec![self.layers.last().expect("at least one layer").clone()] }
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flatten into a single vector (layer by layer, weights row-major, then
    /// bias) — the coordinate system sampling chains operate in.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    /// [`to_flat`] into a caller-provided buffer of exactly `num_params`
    /// values (chains call this every step; no allocation).
    ///
    /// [`to_flat`]: NetworkParams::to_flat
    pub fn flatten_into(&self, out: &mut [f64]) -> Result<()> {
        if out.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "buffer has {} slots, network has {} parameters",
                out.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for layer in &self.layers {
            for &w in layer.weights.iter() {
                out[offset] = w;
                offset += 1;
            }
            for &b in layer.bias.iter() {
                out[offset] = b;
                offset += 1;
            }
        }
        Ok(())
    }

    /// Inverse of [`to_flat`]: overwrite this parameter set from a flat
    /// vector of exactly `num_params` values.
    ///
    /// [`to_flat`]: NetworkParams::to_flat
    pub fn unflatten_from(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "flat vector has {} values, network has {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute coordinate-wise difference to another parameter set
    /// of the same shape.
    pub fn max_abs_diff(&self, other: &NetworkParams) -> f64 {
        assert_eq!(
            self.architecture(),
            other.architecture(),
            "max_abs_diff needs identical architectures"
        );
        let mut max = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                max = max.max((x - y).abs());
            }
            for (x, y) in a.bias.iter().zip(b.bias.iter()) {
                max = max.max((x - y).abs());
            }
        }
        max
    }

    /// Content hash over architecture and parameter bits; the provenance
    /// identity of a trained network.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for &s in self.architecture().sizes() {
            hasher.update((s as u64).to_le_bytes());
        }
        for layer in &self.layers {
            for &w in layer.weights.iter() {
                hasher.update(w.to_le_bytes());
            }
            for &b in layer.bias.iter() {
                hasher.update(b.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Forward pass for a single example.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<ForwardPass> {
        let batch = self.forward_batch(x.insert_axis(Axis(0)))?;
        Ok(ForwardPass {
            hidden: batch.hidden.into_iter().map(|h| h.index_axis_move(Axis(0), 0)).collect(),
            probs: batch.probs.index_axis_move(Axis(0), 0),
        })
    }

    /// Forward pass for a batch of examples (rows).
    pub fn forward_batch(&self, xs: ArrayView2<f64>) -> Result<BatchForward> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                xs.ncols(),
                self.input_dim()
            )));
        }
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut activation = xs.to_owned();
        for layer in &self.layers[..self.layers.len() - 1] {
            let z = activation.dot(&layer.weights.t()) + &layer.bias;
            let a = z.mapv(relu);
            hidden.push(a.clone());
            activation = a;
        }
        let last = self.layers.last().expect("at least one layer");
        let mut logits = activation.dot(&last.weights.t()) + &last.bias;
        softmax_rows_inplace(&mut logits);
        Ok(BatchForward { hidden, probs: logits })
    }
}

/// Activations of one example: post-ReLU hidden vectors in order, then the
/// softmax output.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hidden: Vec<Array1<f64>>,
    pub probs: Array1<f64>,
}

impl ForwardPass {
    /// The learned feature vector: the activation feeding the output layer.
    /// `None` when the network has no hidden layer.
    pub fn features(&self) -> Option<&Array1<f64>> {
        self.hidden.last()
    }
}

/// Batch counterpart of [`ForwardPass`]; one row per example.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub hidden: Vec<Array2<f64>>,
    pub probs: Array2<f64>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Numerically stable softmax of a logit vector.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let mut out = logits.to_owned().insert_axis(Axis(0));
    softmax_rows_inplace(&mut out);
    out.index_axis_move(Axis(0), 0)
}

/// Row-wise in-place softmax with max subtraction.
pub(crate) fn softmax_rows_inplace(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax_lowest(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Anything that yields predictive class probabilities: a plain network
/// (softmax of one forward pass) or a posterior ensemble (mean over member
/// predictions). `example_index` identifies the example within its dataset so
/// stochastic predictors (MC-dropout) can derive deterministic per-example
/// mask streams; deterministic predictors ignore it.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn class_probabilities(&self, x: ArrayView1<f64>, example_index: usize) -> Array1<f64>;

    /// Batch version; `start_index` is the dataset index of the first row.
    /// The default delegates row by row; implementations override it with
    /// batched matrix products where that pays off.
    fn class_probabilities_batch(&self, xs: ArrayView2<f64>, start_index: usize) -> Array2<f64> {
        let mut out = Array2::zeros((xs.nrows(), self.num_classes()));
        for (i, row) in xs.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.class_probabilities(row, start_index + i));
        }
        out
    }
}

impl Classifier for NetworkParams {
    fn input_dim(&self) -> usize {
        NetworkParams::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        self.output_dim()
    }

    fn class_probabilities(&self, x: ArrayView1<f64>, _example_index: usize) -> Array1<f64> {
        self.forward(x).expect("dimension checked by caller").probs
    }

    fn class_probabilities_batch(&self, xs: ArrayView2<f64>, _start_index: usize) -> Array2<f64> {
        self.forward_batch(xs).expect("dimension checked by caller").probs
    }
}

/// Examples per chunk for batched dataset traversals; bounds peak memory
/// while keeping the matmuls large enough to be efficient.
pub(crate) const PREDICT_CHUNK: usize = 512;

/// Fraction of examples whose argmax prediction matches the label.
pub fn accuracy<C: Classifier + ?Sized>(clf: &C, ds: &Dataset) -> Result<f64> {
    if clf.input_dim() != ds.feature_dim() {
        return Err(Error::Dimension(format!(
            "classifier expects {} inputs, dataset has {}",
            clf.input_dim(),
            ds.feature_dim()
        )));
    }
    let feats = ds.features();
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < ds.len() {
        let end = (start + PREDICT_CHUNK).min(ds.len());
        let chunk = feats.slice(ndarray::s![start..end, ..]);
        let probs = clf.class_probabilities_batch(chunk, start);
        for (i, row) in probs.rows().into_iter().enumerate() {
            if argmax_lowest(row) == ds.labels()[start + i] {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Run the dataset through the network and keep the penultimate activations:
/// the learned-feature dataset posterior samplers train on. Labels and class
/// count carry over unchanged.
pub fn extract_features(params: &NetworkParams, ds: &Dataset) -> Result<Dataset> {
    if params.layers.len() < 2 {
        return Err(Error::Config(
            "network has no hidden layer to extract features from".into(),
        ));
    }
    if params.input_dim() != ds.feature_dim() {
        return Err(Error::Dimension(format!(
            "network expects {} inputs, dataset has {}",
            params.input_dim(),
            ds.feature_dim()
        )));
    }
    let d = params.architecture().penultimate_dim();
    let feats = ds.features();
    let mut features = Array2::zeros((ds.len(), d));
    let mut start = 0usize;
    while start < ds.len() {
        let end = (start + PREDICT_CHUNK).min(ds.len());
        let chunk = feats.slice(ndarray::s![start..end, ..]);
        let pass = params.forward_batch(chunk)?;
        let z = pass.hidden.last().expect("has hidden layers");
        features.slice_mut(ndarray::s![start..end, ..]).assign(z);
        start = end;
    }
    Dataset::new(features, ds.labels().to_vec(), ds.num_classes())
}
