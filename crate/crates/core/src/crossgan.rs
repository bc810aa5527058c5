// SPDX-License-Identifier: Apache-2.0

//! Cross-domain GAN with reconstruction (cycle) losses.
//!
//! One [`GanModel`] holds two generators and two discriminators over a pair of
//! domains X and Y:
//!
//! * `g_xy` maps X to Y and `g_yx` maps Y to X;
//! * `d_y` separates real Y from `g_xy(x)`, `d_x` separates real X from
//!   `g_yx(y)`.
//!
//! The first step runs it on (AH, BH); the second on the feature-transferred
//! (AHBg, BHAg) domains with the geometric constraint terms switched on.
//!
//! Generator loss, with `λ = hp.lambdas`:
//!
//! ```text
//! L_G = λ1·GAN_y + λ2·R_x + λ3·GAN_x + λ4·R_y (+ λ5·geo1 + λ6·geo2 in step 2)
//! L_D = D_x + D_y
//! ```
//!
//! All network-side quantities live in normalized space; the geometric terms
//! are evaluated on denormalized samples and their gradients scaled back.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    DomainDataset, EncodedSample, Normalizer, A_BLOCK, B_BLOCK, H_BLOCK, N_BLOCKS, SAMPLE_DIM,
};
use crate::geometry::{self, GeoConfig, GeoMode};
use crate::nn::{AdamConfig, AdamState, Mlp, MlpGrads, MlpSpec, NnError};

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite loss at epoch {epoch}: {terms}")]
    NonFiniteLoss { epoch: usize, terms: String },
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model is a {found:?} model, expected {expected:?}")]
    WrongStep { expected: StepTag, found: StepTag },
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L1,
    #[default]
    L2Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// λ1..λ6.
    pub lambdas: [f64; 6],
    pub metric: Metric,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub d1: f64,
    pub d2: f64,
    pub cutoff: f64,
    pub geo_mode: GeoMode,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Row threshold for reading generated samples.
    pub threshold: f64,
    /// Fit a per-block affine map on the training data.
    pub normalize: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambdas: [1.0; 6],
            metric: Metric::L2Squared,
            adam: AdamConfig::default(),
            epochs: 1000,
            batch_size: 35,
            seed: 0,
            d1: 1.8,
            d2: 3.0,
            cutoff: 8.0,
            geo_mode: GeoMode::Paper,
            hidden_layers: 5,
            hidden_width: 100,
            threshold: crate::encoding::DEFAULT_THRESHOLD,
            normalize: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::InvalidHyperParams(m));
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad(format!("lambdas must be finite and >= 0: {:?}", self.lambdas));
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if self.hidden_width < 1 && self.hidden_layers > 0 {
            return bad("hidden_width must be >= 1".into());
        }
        if !(self.adam.alpha > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if !(self.threshold >= 0.0) {
            return bad("threshold must be >= 0".into());
        }
        self.geo_config("A", "B")
            .check()
            .map_err(|e| GanError::InvalidHyperParams(e.to_string()))
    }

    /// Constraint config for an A–H–B system.
    pub fn geo_config(&self, metal_a: &str, metal_b: &str) -> GeoConfig {
        GeoConfig {
            d1: self.d1,
            d2: self.d2,
            cutoff: self.cutoff,
            ..GeoConfig::hydride(metal_a, metal_b)
        }
    }

    /// λ5 = λ6 = 0.
    pub fn without_constraints(&self) -> Self {
        let mut hp = self.clone();
        hp.lambdas[4] = 0.0;
        hp.lambdas[5] = 0.0;
        hp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTag {
    Step1,
    Step2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub step: StepTag,
    pub g_xy: Mlp,
    pub g_yx: Mlp,
    pub d_x: Mlp,
    pub d_y: Mlp,
    pub opt_g_xy: AdamState,
    pub opt_g_yx: AdamState,
    pub opt_d_x: AdamState,
    pub opt_d_y: AdamState,
    pub normalizer: Normalizer,
    pub element_a: String,
    pub element_b: String,
    pub epochs_trained: usize,
}

/// Independent seeds for the networks and the batch stream of one run.
fn sub_seeds(seed: u64, step: StepTag) -> [u64; 5] {
    let salt = match step {
        StepTag::Step1 => 0x5157_4550_0001,
        StepTag::Step2 => 0x5157_4550_0002,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    [0; 5].map(|_| rng.gen())
}

impl GanModel {
    pub fn new(
        step: StepTag,
        hp: &HyperParams,
        normalizer: Normalizer,
        element_a: &str,
        element_b: &str,
    ) -> Result<Self, GanError> {
        let seeds = sub_seeds(hp.seed, step);
        let g = MlpSpec::generator(SAMPLE_DIM, hp.hidden_layers, hp.hidden_width);
        let d = MlpSpec::discriminator(SAMPLE_DIM, hp.hidden_layers, hp.hidden_width);
        Self::from_parts(
            step,
            Mlp::init(g.clone(), seeds[0])?,
            Mlp::init(g, seeds[1])?,
            Mlp::init(d.clone(), seeds[2])?,
            Mlp::init(d, seeds[3])?,
            hp.adam,
            normalizer,
            element_a,
            element_b,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        step: StepTag,
        g_xy: Mlp,
        g_yx: Mlp,
        d_x: Mlp,
        d_y: Mlp,
        adam: AdamConfig,
        normalizer: Normalizer,
        element_a: &str,
        element_b: &str,
    ) -> Result<Self, GanError> {
        for g in [&g_xy, &g_yx] {
            if g.spec.input_dim() != SAMPLE_DIM || g.spec.output_dim() != SAMPLE_DIM {
                return Err(GanError::DimensionMismatch(g.spec.output_dim(), SAMPLE_DIM));
            }
        }
        for d in [&d_x, &d_y] {
            if d.spec.input_dim() != SAMPLE_DIM || d.spec.output_dim() != 1 {
                return Err(GanError::DimensionMismatch(d.spec.output_dim(), 1));
            }
        }
        Ok(Self {
            step,
            opt_g_xy: AdamState::new(&g_xy, adam),
            opt_g_yx: AdamState::new(&g_yx, adam),
            opt_d_x: AdamState::new(&d_x, adam),
            opt_d_y: AdamState::new(&d_y, adam),
            g_xy,
            g_yx,
            d_x,
            d_y,
            normalizer,
            element_a: element_a.into(),
            element_b: element_b.into(),
            epochs_trained: 0,
        })
    }

    /// Slot labels carried by every generated sample: H, A, B.
    pub fn labels(&self) -> [Option<String>; N_BLOCKS] {
        let mut l: [Option<String>; N_BLOCKS] = Default::default();
        l[H_BLOCK] = Some("H".into());
        l[A_BLOCK] = Some(self.element_a.clone());
        l[B_BLOCK] = Some(self.element_b.clone());
        l
    }

    /// Checksum over all four networks.
    pub fn checksum(&self) -> String {
        let joined = [&self.g_xy, &self.g_yx, &self.d_x, &self.d_y]
            .iter()
            .map(|m| m.checksum())
            .collect::<Vec<_>>()
            .join("");
        crate::nn::hex(&sha2_digest(joined.as_bytes()))
    }

    pub fn to_network(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        apply_rows(raw, |r| self.normalizer.normalize(r))
    }

    pub fn to_raw(&self, net: ArrayView2<f64>) -> Array2<f64> {
        apply_rows(net, |r| self.normalizer.denormalize(r))
    }
}

fn apply_rows(m: ArrayView2<f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for (mut dst, src) in out.rows_mut().into_iter().zip(m.rows()) {
        let mapped = f(&src.to_vec());
        dst.iter_mut().zip(mapped).for_each(|(d, v)| *d = v);
    }
    out
}

fn sha2_digest(bytes: &[u8]) -> Vec<u8> {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).to_vec()
}

/// Mean absolute (L1) or mean squared (L2²) difference over every entry.
pub fn reconstruction_loss(x: &[f64], x_rec: &[f64], metric: Metric) -> Result<f64, GanError> {
    if x.len() != x_rec.len() {
        return Err(GanError::DimensionMismatch(x.len(), x_rec.len()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x
        .iter()
        .zip(x_rec)
        .map(|(a, b)| match metric {
            Metric::L1 => (b - a).abs(),
            Metric::L2Squared => (b - a) * (b - a),
        })
        .sum();
    Ok(sum / x.len() as f64)
}

/// Gradient of [`reconstruction_loss`] with respect to `x_rec`.
fn reconstruction_grad(x: &Array2<f64>, x_rec: &Array2<f64>, metric: Metric) -> Array2<f64> {
    let n = x.len() as f64;
    let mut g = x_rec - x;
    g.mapv_inplace(|d| match metric {
        Metric::L1 => {
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        }
        Metric::L2Squared => 2.0 * d / n,
    });
    g
}

fn matrix_loss(x: &Array2<f64>, x_rec: &Array2<f64>, metric: Metric) -> f64 {
    reconstruction_loss(
        x.as_slice().expect("standard layout"),
        x_rec.as_slice().expect("standard layout"),
        metric,
    )
    .expect("equal shapes")
}

/// `-mean log D(fake)`.
pub fn adversarial_gen_loss(d: &Mlp, fake: ArrayView2<f64>) -> Result<f64, GanError> {
    let out = d.predict(fake)?;
    Ok(out.iter().map(|p| -p.ln()).sum::<f64>() / out.len() as f64)
}

/// `-mean log D(real) - mean log(1 - D(fake))`.
pub fn adversarial_disc_loss(d: &Mlp, real: ArrayView2<f64>, fake: ArrayView2<f64>) -> Result<f64, GanError> {
    let r = d.predict(real)?;
    let f = d.predict(fake)?;
    let real_term = r.iter().map(|p| -p.ln()).sum::<f64>() / r.len() as f64;
    let fake_term = f.iter().map(|p| -(1.0 - p).ln()).sum::<f64>() / f.len() as f64;
    Ok(real_term + fake_term)
}

/// Every term of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    /// `-E log d_y(g_xy(x))` (L_GAN_BH in step 1).
    pub gan_y: f64,
    /// `d(g_yx(g_xy(x)), x)` (L_R_AH in step 1).
    pub rec_x: f64,
    /// `-E log d_x(g_yx(y))` (L_GAN_AH in step 1).
    pub gan_x: f64,
    /// `d(g_xy(g_yx(y)), y)` (L_R_BH in step 1).
    pub rec_y: f64,
    pub geo1: f64,
    pub geo2: f64,
    pub loss_g: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub loss_d: f64,
    /// Generated samples whose constraint set was empty or undecodable.
    pub geo_warnings: usize,
}

impl LossTerms {
    pub fn weighted_g(&self, l: &[f64; 6]) -> f64 {
        l[0] * self.gan_y
            + l[1] * self.rec_x
            + l[2] * self.gan_x
            + l[3] * self.rec_y
            + l[4] * self.geo1
            + l[5] * self.geo2
    }

    fn values(&self) -> [f64; 10] {
        [
            self.gan_y,
            self.rec_x,
            self.gan_x,
            self.rec_y,
            self.geo1,
            self.geo2,
            self.loss_g,
            self.d_x,
            self.d_y,
            self.loss_d,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn accumulate(&mut self, o: &LossTerms) {
        self.gan_y += o.gan_y;
        self.rec_x += o.rec_x;
        self.gan_x += o.gan_x;
        self.rec_y += o.rec_y;
        self.geo1 += o.geo1;
        self.geo2 += o.geo2;
        self.loss_g += o.loss_g;
        self.d_x += o.d_x;
        self.d_y += o.d_y;
        self.loss_d += o.loss_d;
        self.geo_warnings += o.geo_warnings;
    }

    fn divide(&mut self, n: f64) {
        self.gan_y /= n;
        self.rec_x /= n;
        self.gan_x /= n;
        self.rec_y /= n;
        self.geo1 /= n;
        self.geo2 /= n;
        self.loss_g /= n;
        self.d_x /= n;
        self.d_y /= n;
        self.loss_d /= n;
    }
}

struct GeoBatch {
    geo1: f64,
    geo2: f64,
    /// λ-weighted gradient with respect to the network-space batch.
    grad: Array2<f64>,
    warnings: usize,
}

/// Mean constraint terms over the rows of `fake` (network space). `pooled`
/// is the number of samples the mean runs over across both directions.
fn geo_batch(
    model: &GanModel,
    fake: &Array2<f64>,
    hp: &HyperParams,
    pooled: usize,
) -> GeoBatch {
    let cfg = hp.geo_config(&model.element_a, &model.element_b);
    let raw = model.to_raw(fake.view());
    let labels = model.labels();
    let mut out = GeoBatch {
        geo1: 0.0,
        geo2: 0.0,
        grad: Array2::zeros(fake.dim()),
        warnings: 0,
    };
    let n = pooled as f64;
    for (r, row) in raw.rows().into_iter().enumerate() {
        let sample = EncodedSample::from_flat(row.as_slice().expect("row"), labels.clone());
        let g = geometry::geo_losses(&sample, &cfg, hp.geo_mode, hp.threshold);
        out.geo1 += g.geo1 / n;
        out.geo2 += g.geo2 / n;
        out.warnings += usize::from(g.warning.is_some());
        let g1 = g.grad1.iter().flatten().flatten();
        let g2 = g.grad2.iter().flatten().flatten();
        for (i, (a, b)) in g1.zip(g2).enumerate() {
            // raw = net * factor
            out.grad[[r, i]] =
                (hp.lambdas[4] * a + hp.lambdas[5] * b) * model.normalizer.factor(i) / n;
        }
    }
    out
}

fn uses_geo(model: &GanModel, hp: &HyperParams) -> bool {
    model.step == StepTag::Step2 && hp.geo_mode != GeoMode::Off
}

/// Generator loss and the gradients of both generators. Inputs are in
/// network space.
pub fn generator_gradients(
    model: &GanModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    hp: &HyperParams,
) -> Result<(LossTerms, MlpGrads, MlpGrads), GanError> {
    let l = &hp.lambdas;
    let (fake_y, c_fy) = model.g_xy.forward_batch(x)?;
    let (rec_x, c_rx) = model.g_yx.forward_batch(fake_y.view())?;
    let (fake_x, c_fx) = model.g_yx.forward_batch(y)?;
    let (rec_y, c_ry) = model.g_xy.forward_batch(fake_x.view())?;
    let (p_y, c_py) = model.d_y.forward_batch(fake_y.view())?;
    let (p_x, c_px) = model.d_x.forward_batch(fake_x.view())?;

    let x = x.to_owned();
    let y = y.to_owned();
    let mut t = LossTerms {
        gan_y: p_y.iter().map(|p| -p.ln()).sum::<f64>() / p_y.len() as f64,
        gan_x: p_x.iter().map(|p| -p.ln()).sum::<f64>() / p_x.len() as f64,
        rec_x: matrix_loss(&x, &rec_x, hp.metric),
        rec_y: matrix_loss(&y, &rec_y, hp.metric),
        ..LossTerms::default()
    };

    let mut g_xy = MlpGrads::zeros_like(&model.g_xy);
    let mut g_yx = MlpGrads::zeros_like(&model.g_yx);

    // X -> Y -> X
    let dp_y = p_y.mapv(|p| -l[0] / (p * p_y.len() as f64));
    let (_, mut d_fake_y) = model.d_y.backward(&c_py, dp_y.view())?;
    let (gr, d_from_rec) = model
        .g_yx
        .backward(&c_rx, (reconstruction_grad(&x, &rec_x, hp.metric) * l[1]).view())?;
    g_yx.add_assign(&gr);
    d_fake_y += &d_from_rec;

    // Y -> X -> Y
    let dp_x = p_x.mapv(|p| -l[2] / (p * p_x.len() as f64));
    let (_, mut d_fake_x) = model.d_x.backward(&c_px, dp_x.view())?;
    let (gr, d_from_rec) = model
        .g_xy
        .backward(&c_ry, (reconstruction_grad(&y, &rec_y, hp.metric) * l[3]).view())?;
    g_xy.add_assign(&gr);
    d_fake_x += &d_from_rec;

    if uses_geo(model, hp) {
        let pooled = fake_y.nrows() + fake_x.nrows();
        let gy = geo_batch(model, &fake_y, hp, pooled);
        let gx = geo_batch(model, &fake_x, hp, pooled);
        t.geo1 = gy.geo1 + gx.geo1;
        t.geo2 = gy.geo2 + gx.geo2;
        t.geo_warnings = gy.warnings + gx.warnings;
        d_fake_y += &gy.grad;
        d_fake_x += &gx.grad;
    }

    let (gr, _) = model.g_xy.backward(&c_fy, d_fake_y.view())?;
    g_xy.add_assign(&gr);
    let (gr, _) = model.g_yx.backward(&c_fx, d_fake_x.view())?;
    g_yx.add_assign(&gr);

    t.loss_g = t.weighted_g(l);
    Ok((t, g_xy, g_yx))
}

/// Loss of one discriminator on stacked real and fake rows, with its gradient.
fn disc_terms(d: &Mlp, real: ArrayView2<f64>, fake: ArrayView2<f64>) -> Result<(f64, MlpGrads), GanError> {
    let (nr, nf) = (real.nrows() as f64, fake.nrows() as f64);
    let stacked = concatenate(Axis(0), &[real.view(), fake.view()]).expect("same width");
    let (p, cache) = d.forward_batch(stacked.view())?;
    let mut loss = 0.0;
    let mut dp = Array2::zeros(p.dim());
    for (k, &pk) in p.iter().enumerate() {
        if k < real.nrows() {
            loss -= pk.ln() / nr;
            dp[[k, 0]] = -1.0 / (pk * nr);
        } else {
            loss -= (1.0 - pk).ln() / nf;
            dp[[k, 0]] = 1.0 / ((1.0 - pk) * nf);
        }
    }
    let (grads, _) = d.backward(&cache, dp.view())?;
    Ok((loss, grads))
}

/// Discriminator loss and gradients of both discriminators.
pub fn discriminator_gradients(
    model: &GanModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(LossTerms, MlpGrads, MlpGrads), GanError> {
    let fake_y = model.g_xy.predict(x)?;
    let fake_x = model.g_yx.predict(y)?;
    let (d_x, g_dx) = disc_terms(&model.d_x, x, fake_x.view())?;
    let (d_y, g_dy) = disc_terms(&model.d_y, y, fake_y.view())?;
    let t = LossTerms {
        d_x,
        d_y,
        loss_d: d_x + d_y,
        ..LossTerms::default()
    };
    Ok((t, g_dx, g_dy))
}

/// All loss terms for raw-unit batches, without updating anything.
pub fn step_losses(
    model: &GanModel,
    batch_x: &DomainDataset,
    batch_y: &DomainDataset,
    hp: &HyperParams,
) -> Result<LossTerms, GanError> {
    let x = model.to_network(batch_x.to_matrix().view());
    let y = model.to_network(batch_y.to_matrix().view());
    let (mut t, _, _) = generator_gradients(model, x.view(), y.view(), hp)?;
    let (d, _, _) = discriminator_gradients(model, x.view(), y.view())?;
    t.d_x = d.d_x;
    t.d_y = d.d_y;
    t.loss_d = d.loss_d;
    Ok(t)
}

fn expect_step(model: &GanModel, step: StepTag) -> Result<(), GanError> {
    if model.step != step {
        return Err(GanError::WrongStep {
            expected: step,
            found: model.step,
        });
    }
    Ok(())
}

/// `(L_G1, L_D1, terms)` on AH and BH batches.
pub fn step1_losses(
    model: &GanModel,
    batch_ah: &DomainDataset,
    batch_bh: &DomainDataset,
    hp: &HyperParams,
) -> Result<(f64, f64, LossTerms), GanError> {
    expect_step(model, StepTag::Step1)?;
    let t = step_losses(model, batch_ah, batch_bh, hp)?;
    Ok((t.loss_g, t.loss_d, t))
}

/// `(L_G2, L_D2, terms)` on AHBg and BHAg batches.
pub fn step2_losses(
    model: &GanModel,
    batch_ahbg: &DomainDataset,
    batch_bhag: &DomainDataset,
    hp: &HyperParams,
) -> Result<(f64, f64, LossTerms), GanError> {
    expect_step(model, StepTag::Step2)?;
    let t = step_losses(model, batch_ahbg, batch_bhag, hp)?;
    Ok((t.loss_g, t.loss_d, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub terms: LossTerms,
}

/// Per-epoch means of every loss term.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub entries: Vec<LogEntry>,
    /// Not part of the CSV so that logs stay byte-identical across runs.
    pub wall_clock_secs: f64,
}

pub const TRAINLOG_HEADER: &str =
    "epoch,gan_y,rec_x,gan_x,rec_y,geo1,geo2,loss_g,d_x,d_y,loss_d,geo_warnings";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRAINLOG_HEADER}\n");
        for e in &self.entries {
            let t = &e.terms;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                e.epoch,
                t.gan_y,
                t.rec_x,
                t.gan_x,
                t.rec_y,
                t.geo1,
                t.geo2,
                t.loss_g,
                t.d_x,
                t.d_y,
                t.loss_d,
                t.geo_warnings
            )
            .unwrap();
        }
        out
    }

    pub fn generator_losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.terms.loss_g).collect()
    }

    /// Median generator loss over the first and the last `fraction` of the
    /// epochs (at least one epoch each).
    pub fn generator_trend(&self, fraction: f64) -> Option<(f64, f64)> {
        let g = self.generator_losses();
        if g.is_empty() {
            return None;
        }
        let k = ((g.len() as f64 * fraction).floor() as usize).clamp(1, g.len());
        Some((median(&g[..k]), median(&g[g.len() - k..])))
    }
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Index lists of one epoch: both domains shuffled, cycled to equal batch
/// counts.
fn epoch_batches(rng: &mut ChaCha8Rng, nx: usize, ny: usize, bs: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut px: Vec<usize> = (0..nx).collect();
    let mut py: Vec<usize> = (0..ny).collect();
    px.shuffle(rng);
    py.shuffle(rng);
    let n_batches = nx.max(ny).div_ceil(bs);
    (0..n_batches)
        .map(|k| {
            let take = |p: &[usize]| -> Vec<usize> {
                let n = bs.min(p.len());
                (0..n).map(|i| p[(k * bs + i) % p.len()]).collect()
            };
            (take(&px), take(&py))
        })
        .collect()
}

fn select_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Alternating training: per mini-batch one discriminator update, then one
/// generator update.
pub fn train(
    model: &mut GanModel,
    data_x: &DomainDataset,
    data_y: &DomainDataset,
    hp: &HyperParams,
) -> Result<TrainLog, GanError> {
    train_with(model, data_x, data_y, hp, |_, _| Ok(()))
}

/// [`train`] with a hook called after every epoch (for checkpoints).
pub fn train_with(
    model: &mut GanModel,
    data_x: &DomainDataset,
    data_y: &DomainDataset,
    hp: &HyperParams,
    mut on_epoch: impl FnMut(&GanModel, usize) -> Result<(), GanError>,
) -> Result<TrainLog, GanError> {
    hp.validate()?;
    if data_x.is_empty() || data_y.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let start = Instant::now();
    let x_all = model.to_network(data_x.to_matrix().view());
    let y_all = model.to_network(data_y.to_matrix().view());
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seeds(hp.seed, model.step)[4]);
    let mut log = TrainLog {
        seed: hp.seed,
        ..TrainLog::default()
    };
    for epoch in 0..hp.epochs {
        let batches = epoch_batches(&mut rng, x_all.nrows(), y_all.nrows(), hp.batch_size);
        let mut acc = LossTerms::default();
        for (ix, iy) in &batches {
            let x = select_rows(&x_all, ix);
            let y = select_rows(&y_all, iy);

            let (dt, g_dx, g_dy) = discriminator_gradients(model, x.view(), y.view())?;
            model.opt_d_x.step(&mut model.d_x, &g_dx);
            model.opt_d_y.step(&mut model.d_y, &g_dy);

            let (mut gt, g_xy, g_yx) = generator_gradients(model, x.view(), y.view(), hp)?;
            model.opt_g_xy.step(&mut model.g_xy, &g_xy);
            model.opt_g_yx.step(&mut model.g_yx, &g_yx);

            gt.d_x = dt.d_x;
            gt.d_y = dt.d_y;
            gt.loss_d = dt.loss_d;
            if !gt.all_finite() {
                return Err(GanError::NonFiniteLoss {
                    epoch,
                    terms: format!("{gt:?}"),
                });
            }
            acc.accumulate(&gt);
        }
        acc.divide(batches.len() as f64);
        model.epochs_trained += 1;
        log.entries.push(LogEntry { epoch, terms: acc });
        on_epoch(model, epoch)?;
    }
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `g_xy` applied to X-domain samples.
    Forward,
    /// `g_yx` applied to Y-domain samples.
    Backward,
}

/// A generated sample and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub id: String,
    pub source: String,
    pub model_checksum: String,
    /// Step-1 outputs: metal blocks not separated by feature transfer.
    pub pseudo_binary: bool,
    pub sample: EncodedSample,
}

/// Applies one generator to `count` samples of `data`, cycling through it.
/// Output is in raw units with unknown occupancy.
pub fn generate(
    model: &GanModel,
    data: &DomainDataset,
    count: usize,
    direction: Direction,
) -> Result<Vec<Generated>, GanError> {
    if data.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let net = match direction {
        Direction::Forward => &model.g_xy,
        Direction::Backward => &model.g_yx,
    };
    let idx: Vec<usize> = (0..count).map(|k| k % data.len()).collect();
    let input = model.to_network(select_rows(&data.to_matrix(), &idx).view());
    let raw = model.to_raw(net.predict(input.view())?.view());
    let checksum = model.checksum();
    let tag = match direction {
        Direction::Forward => "fwd",
        Direction::Backward => "bwd",
    };
    Ok(raw
        .rows()
        .into_iter()
        .zip(&idx)
        .enumerate()
        .map(|(k, (row, &i))| Generated {
            id: format!("{tag}_{k:04}"),
            source: data.names[i].clone(),
            model_checksum: checksum.clone(),
            pseudo_binary: model.step == StepTag::Step1,
            sample: EncodedSample::from_flat(row.as_slice().expect("row"), model.labels()),
        })
        .collect())
}

/// Versioned model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub version: u32,
    pub seed: u64,
    pub epoch: usize,
    pub model: M,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint<M: Serialize>(path: &Path, seed: u64, epoch: usize, model: &M) -> Result<(), GanError> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        seed,
        epoch,
        model,
    };
    fs::write(path, serde_json::to_string(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint<M: for<'de> Deserialize<'de>>(path: &Path) -> Result<Checkpoint<M>, GanError> {
    let ck: Checkpoint<M> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(GanError::CheckpointVersion(ck.version));
    }
    Ok(ck)
}

/// Noise-driven baseline: one generator from standard-normal noise and one
/// discriminator on pooled real samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicGan {
    pub g: Mlp,
    pub d: Mlp,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
    pub normalizer: Normalizer,
    pub element_a: String,
    pub element_b: String,
    pub seed: u64,
}

/// `n × 216` standard-normal matrix from a seeded stream.
pub fn noise_matrix(seed: u64, n: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, SAMPLE_DIM), || rng.sample(StandardNormal))
}

impl ClassicGan {
    pub fn new(hp: &HyperParams, normalizer: Normalizer, element_a: &str, element_b: &str) -> Result<Self, GanError> {
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x4741_4e00);
        let g = Mlp::init(
            MlpSpec::generator(SAMPLE_DIM, hp.hidden_layers, hp.hidden_width),
            rng.gen(),
        )?;
        let d = Mlp::init(
            MlpSpec::discriminator(SAMPLE_DIM, hp.hidden_layers, hp.hidden_width),
            rng.gen(),
        )?;
        Ok(Self {
            opt_g: AdamState::new(&g, hp.adam),
            opt_d: AdamState::new(&d, hp.adam),
            g,
            d,
            normalizer,
            element_a: element_a.into(),
            element_b: element_b.into(),
            seed: rng.gen(),
        })
    }

    fn labels(&self) -> [Option<String>; N_BLOCKS] {
        let mut l: [Option<String>; N_BLOCKS] = Default::default();
        l[H_BLOCK] = Some("H".into());
        l[A_BLOCK] = Some(self.element_a.clone());
        l[B_BLOCK] = Some(self.element_b.clone());
        l
    }


    /// Trains against the union of `pools` with the usual minimax losses.
    /// Logged as `gan_y` (generator) and `d_y` (discriminator).
    pub fn train(&mut self, pools: &[&DomainDataset], hp: &HyperParams) -> Result<TrainLog, GanError> {
        hp.validate()?;
        let start = Instant::now();
        let real_all = concatenate(
            Axis(0),
            &pools.iter().map(|d| d.to_matrix()).collect::<Vec<_>>().iter().map(|m| m.view()).collect::<Vec<_>>(),
        )
        .map_err(|_| GanError::EmptyDataset)?;
        if real_all.nrows() == 0 {
            return Err(GanError::EmptyDataset);
        }
        let real_all = apply_rows(real_all.view(), |r| self.normalizer.normalize(r));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut log = TrainLog {
            seed: hp.seed,
            ..TrainLog::default()
        };
        let n = real_all.nrows();
        let bs = hp.batch_size.min(n);
        for epoch in 0..hp.epochs {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut acc = LossTerms::default();
            let n_batches = n.div_ceil(bs);
            for k in 0..n_batches {
                let idx: Vec<usize> = (0..bs).map(|i| perm[(k * bs + i) % n]).collect();
                let real = select_rows(&real_all, &idx);
                let z = noise_matrix(rng.gen(), bs);

                let fake = self.g.predict(z.view())?;
                let (loss_d, gd) = disc_terms(&self.d, real.view(), fake.view())?;
                self.opt_d.step(&mut self.d, &gd);

                let (fake, cg) = self.g.forward_batch(z.view())?;
                let (p, cp) = self.d.forward_batch(fake.view())?;
                let loss_g = p.iter().map(|p| -p.ln()).sum::<f64>() / p.len() as f64;
                let dp = p.mapv(|q| -1.0 / (q * p.len() as f64));
                let (_, dfake) = self.d.backward(&cp, dp.view())?;
                let (gg, _) = self.g.backward(&cg, dfake.view())?;
                self.opt_g.step(&mut self.g, &gg);

                let t = LossTerms {
                    gan_y: loss_g,
                    loss_g,
                    d_y: loss_d,
                    loss_d,
                    ..LossTerms::default()
                };
                if !t.all_finite() {
                    return Err(GanError::NonFiniteLoss {
                        epoch,
                        terms: format!("{t:?}"),
                    });
                }
                acc.accumulate(&t);
            }
            acc.divide(n_batches as f64);
            log.entries.push(LogEntry { epoch, terms: acc });
        }
        log.wall_clock_secs = start.elapsed().as_secs_f64();
        Ok(log)
    }

    /// `count` samples from fresh noise drawn with `seed`.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<Generated>, GanError> {
        let z = noise_matrix(seed, count);
        let raw = apply_rows(self.g.predict(z.view())?.view(), |r| self.normalizer.denormalize(r));
        let checksum = crate::nn::hex(&sha2_digest(
            (self.g.checksum() + &self.d.checksum()).as_bytes(),
        ));
        Ok(raw
            .rows()
            .into_iter()
            .enumerate()
            .map(|(k, row)| Generated {
                id: format!("noise_{k:04}"),
                source: format!("noise:{seed}:{k}"),
                model_checksum: checksum.clone(),
                pseudo_binary: false,
                sample: EncodedSample::from_flat(row.as_slice().expect("row"), self.labels()),
            })
            .collect())
    }
}
