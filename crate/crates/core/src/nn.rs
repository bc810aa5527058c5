// SPDX-License-Identifier: Apache-2.0

//! Small deterministic dense-network kernel with hand-written backprop and
//! Adam. Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sigmoid outputs are kept inside [CLAMP, 1 - CLAMP].
pub const CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cache does not match this network")]
    StaleCache,
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z).clamp(CLAMP, 1.0 - CLAMP),
        }
    }

    /// Derivative at pre-activation `z`. ReLU'(0) = 0; the sigmoid clamp is
    /// passed straight through.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    /// `input → hidden_layers × width → output`, ReLU hidden, linear output.
    pub fn generator(input: usize, hidden_layers: usize, width: usize) -> Self {
        let mut layer_dims = vec![input];
        layer_dims.extend(std::iter::repeat(width).take(hidden_layers));
        layer_dims.push(input);
        Self {
            layer_dims,
            hidden: Activation::Relu,
            output: Activation::Linear,
        }
    }

    /// Same trunk as a generator, single sigmoid output.
    pub fn discriminator(input: usize, hidden_layers: usize, width: usize) -> Self {
        let mut layer_dims = vec![input];
        layer_dims.extend(std::iter::repeat(width).take(hidden_layers));
        layer_dims.push(1);
        Self {
            layer_dims,
            hidden: Activation::Relu,
            output: Activation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_dims.len() < 2 {
            return Err(NnError::InvalidSpec("need at least input and output dims".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(NnError::InvalidSpec("layer dims must be >= 1".into()));
        }
        if self.output == Activation::Sigmoid && self.output_dim() != 1 {
            return Err(NnError::InvalidSpec("discriminator output dim must be 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_dims.len() {
            self.output
        } else {
            self.hidden
        }
    }
}

/// One affine layer; `w` is out × in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }
}

/// Network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

/// Gradients, shaped like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w *= k;
            l.b *= k;
        }
    }
}

/// Activations saved by a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Xavier-uniform weights from a seeded ChaCha stream, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_dims
            .windows(2)
            .map(|d| {
                let (inp, out) = (d[0], d[1]);
                let bound = (6.0 / (inp + out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                Dense {
                    w: Array2::from_shape_simple_fn((out, inp), || dist.sample(&mut rng)),
                    b: Array1::zeros(out),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Cache), NnError> {
        if x.ncols() != self.spec.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.spec.input_dim(),
                found: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.w.t()) + &layer.b;
            let act = self.spec.activation(k);
            let next = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((a, Cache { inputs, pre }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward_batch(x)?.0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache), NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let (y, cache) = self.forward_batch(view)?;
        Ok((y.into_raw_vec_and_offset().0, cache))
    }

    /// Reverse pass. Parameter gradients are summed over the batch rows.
    pub fn backward(&self, cache: &Cache, dy: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>), NnError> {
        if cache.pre.len() != self.layers.len()
            || cache.pre.last().map(|z| z.dim()) != Some(dy.dim())
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(a, l)| a.ncols() != l.w.ncols())
        {
            return Err(NnError::StaleCache);
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dy.to_owned();
        for k in (0..self.layers.len()).rev() {
            let act = self.spec.activation(k);
            Zip::from(&mut delta)
                .and(&cache.pre[k])
                .for_each(|d, &z| *d *= act.derivative(z));
            let gw = delta.t().dot(&cache.inputs[k]);
            let gb = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[k].w);
            grads.push(Dense { w: gw, b: gb });
            delta = next;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    /// SHA-256 over the little-endian bytes of every parameter.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            for x in l.w.iter().chain(l.b.iter()) {
                h.update(x.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Dense>,
    pub v: Vec<Dense>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros = MlpGrads::zeros_like(net).layers;
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= alpha * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, m), v), g) in net.layers.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(&grads.layers) {
            Zip::from(&mut layer.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .and(&g.w)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .and(&g.b)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}
