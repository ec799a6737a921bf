//! Multi-layer perceptron with ReLU hidden activations and identity output.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("need at least two layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive")]
    ZeroLayer,
    #[error("input has dimension {got}, network expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("non-finite gradient in batch {batch}")]
    NonFiniteGradient { batch: usize },
    #[error("validation objective became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("training mode {mode} requires {what}")]
    BadConfig { mode: &'static str, what: &'static str },
    #[error("checkpoint version {0} is not supported")]
    BadVersion(u32),
    #[error("checkpoint decode error: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fully connected network. `weights[l]` has shape `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Cached intermediate values of a batched forward pass.
pub struct ForwardCache {
    /// `activations[0]` is the input batch; `activations[l]` the output of
    /// layer `l` after its nonlinearity.
    pub activations: Vec<Array2<f64>>,
    /// Pre-activation values of every layer.
    pub pre_activations: Vec<Array2<f64>>,
}

/// Per-parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn scaled_add(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(factor, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(factor, b);
        }
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MlpCheckpoint {
    version: u32,
    model: Mlp,
}

impl Mlp {
    /// Glorot-uniform initialization: weights uniform on
    /// `±√(6/(fan_in + fan_out))`, biases zero. Deterministic given the seed.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers(layer_sizes.len()));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(NnError::ZeroLayer);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut values = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in * fan_out {
                values.push(rng.gen_range(-limit..limit));
            }
            weights.push(Array2::from_shape_vec((fan_in, fan_out), values).expect("shape"));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Batched forward pass returning scalar outputs and the cache needed for
    /// backpropagation.
    pub fn forward_batch(&self, x: &ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch { got: x.ncols(), expected: self.input_dim() });
        }
        let layers = self.weights.len();
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
        let mut pre_activations: Vec<Array2<f64>> = Vec::with_capacity(layers);
        activations.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].dot(w);
            z += b;
            let a = if l + 1 < layers { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre_activations.push(z);
            activations.push(a);
        }
        let out = activations[layers].index_axis(Axis(1), 0).to_owned();
        Ok((out, ForwardCache { activations, pre_activations }))
    }

    /// Forward pass without caching.
    pub fn output_batch(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch { got: x.ncols(), expected: self.input_dim() });
        }
        let layers = self.weights.len();
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            a = if l + 1 < layers { z.mapv(|v| v.max(0.0)) } else { z };
        }
        Ok(a.index_axis(Axis(1), 0).to_owned())
    }

    /// Scalar prediction for a single input.
    pub fn predict(&self, x: &[f64]) -> Result<f64, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|_| NnError::DimensionMismatch { got: x.len(), expected: self.input_dim() })?;
        Ok(self.output_batch(&view)?[0])
    }

    /// Backpropagate `d(objective)/d(output_i)` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, dout: &ArrayView1<f64>) -> Gradients {
        let layers = self.weights.len();
        let batch = dout.len();
        let mut grads = Gradients::zeros_like(self);
        let mut g: Array2<f64> = dout.to_owned().into_shape_with_order((batch, 1)).expect("shape");
        for l in (0..layers).rev() {
            grads.weights[l] = cache.activations[l].t().dot(&g);
            grads.biases[l] = g.sum_axis(Axis(0));
            if l > 0 {
                let back = g.dot(&self.weights[l].t());
                g = back * cache.pre_activations[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            }
        }
        grads
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MlpCheckpoint { version: CHECKPOINT_VERSION, model: self.clone() })
            .expect("mlp serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ck: MlpCheckpoint =
            serde_json::from_str(text).map_err(|e| NnError::Decode(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NnError::BadVersion(ck.version));
        }
        Ok(ck.model)
    }
}
