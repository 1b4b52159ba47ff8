//! A small differentiable classifier with hand-written reverse-mode
//! gradients, plus the optimizer and learning-rate schedule.
//!
//! Architecture: per-patch linear embedding with a learned position vector
//! and tanh nonlinearity, mean pooling over patches, then a two-layer tanh
//! head producing two logits. The position vectors keep patch identity
//! through the pooled representation, so a CutMix box landing on different
//! patches produces genuinely different features. Everything runs in double
//! precision so gradients can be checked against central finite differences
//! at tight tolerances.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::stream::{self, tag};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("image shape {got:?} does not match configured {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("cache does not belong to these parameters")]
    StaleCache,
    #[error("gradient component {0} is not finite")]
    NonFiniteGradient(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed checkpoint {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

fn default_patch_size() -> usize {
    8
}
fn default_embed_dim() -> usize {
    64
}
fn default_hidden_dim() -> usize {
    128
}
fn default_init_scale() -> f64 {
    1.0
}
fn default_image_size() -> (usize, usize) {
    (32, 32)
}

/// Model shape and initialization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    #[serde(default = "default_image_size")]
    pub image_size: (usize, usize),
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            image_size: default_image_size(),
            patch_size: default_patch_size(),
            embed_dim: default_embed_dim(),
            hidden_dim: default_hidden_dim(),
            init_scale: default_init_scale(),
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let err = |msg: String| Err(PredictorError::InvalidConfig(msg));
        if self.patch_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return err("dimensions must be positive".into());
        }
        let (h, w) = self.image_size;
        if h == 0 || w == 0 || h % self.patch_size != 0 || w % self.patch_size != 0 {
            return err(format!(
                "image size {h}x{w} must be divisible by patch size {}",
                self.patch_size
            ));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return err("init_scale must be non-negative".into());
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout::new(self)
    }

    /// Number of parameters; a pure function of the config.
    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

/// Flat parameter layout: embedding weights, embedding bias, position
/// vectors, then the two head layers.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    patch_len: usize,
    n_patches: usize,
    embed_dim: usize,
    hidden_dim: usize,
    w_embed: usize,
    b_embed: usize,
    pos: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

impl Layout {
    fn new(config: &PredictorConfig) -> Self {
        let patch_len = config.patch_size * config.patch_size;
        let n_patches =
            (config.image_size.0 / config.patch_size) * (config.image_size.1 / config.patch_size);
        let (d, h) = (config.embed_dim, config.hidden_dim);
        let w_embed = 0;
        let b_embed = w_embed + d * patch_len;
        let pos = b_embed + d;
        let w1 = pos + n_patches * d;
        let b1 = w1 + h * d;
        let w2 = b1 + h;
        let b2 = w2 + 2 * h;
        Layout {
            patch_len,
            n_patches,
            embed_dim: d,
            hidden_dim: h,
            w_embed,
            b_embed,
            pos,
            w1,
            b1,
            w2,
            b2,
            total: b2 + 2,
        }
    }
}

/// Model parameters in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    config: PredictorConfig,
    data: Vec<f64>,
}

impl Params {
    /// All-zero parameters; useful as a null model.
    pub fn zeros(config: PredictorConfig) -> Result<Self, PredictorError> {
        config.validate()?;
        let total = config.param_count();
        Ok(Params {
            config,
            data: vec![0.0; total],
        })
    }

    /// Scaled-Gaussian initialization from the config's recorded seed:
    /// fan-in scaled weights, small position vectors, zero biases.
    pub fn init(config: PredictorConfig) -> Result<Self, PredictorError> {
        let mut params = Self::zeros(config)?;
        let layout = config.layout();
        let mut rng = stream::rng_for(config.seed, &[tag::INIT]);
        let mut fill = |range: std::ops::Range<usize>, std: f64, data: &mut Vec<f64>| {
            if std > 0.0 {
                let normal = Normal::new(0.0, std).expect("positive std");
                for v in &mut data[range] {
                    *v = normal.sample(&mut rng);
                }
            }
        };
        let scale = config.init_scale;
        fill(
            layout.w_embed..layout.b_embed,
            scale * (2.0 / layout.patch_len as f64).sqrt(),
            &mut params.data,
        );
        // Position vectors at O(1) scale shift each patch's tanh operating
        // point, making patch-specific responses first-order rather than a
        // curvature effect; pooled models need this for spatial contrasts.
        fill(layout.pos..layout.w1, scale * 0.5, &mut params.data);
        fill(
            layout.w1..layout.b1,
            scale * (2.0 / layout.embed_dim as f64).sqrt(),
            &mut params.data,
        );
        fill(
            layout.w2..layout.b2,
            scale * (2.0 / layout.hidden_dim as f64).sqrt(),
            &mut params.data,
        );
        Ok(params)
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Gradient buffer in the same layout as [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<f64>,
}

impl Grads {
    pub fn zeros(params: &Params) -> Self {
        Grads {
            data: vec![0.0; params.len()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }
}

/// Activations saved by [`forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    config: PredictorConfig,
    patches: Vec<f64>,
    embeddings: Vec<f64>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
}

/// Runs the model on one image, returning logits and the cache needed for
/// the backward pass. Deterministic and finite for finite inputs.
pub fn forward(params: &Params, image: &Image) -> Result<([f64; 2], Cache), PredictorError> {
    let config = &params.config;
    if image.shape() != config.image_size {
        return Err(PredictorError::ShapeMismatch {
            expected: config.image_size,
            got: image.shape(),
        });
    }
    let layout = config.layout();
    let p = config.patch_size;
    let cols = config.image_size.1 / p;
    let (d, hidden) = (layout.embed_dim, layout.hidden_dim);
    let data = &params.data;

    // Row-major patch extraction.
    let mut patches = vec![0.0; layout.n_patches * layout.patch_len];
    for k in 0..layout.n_patches {
        let (pr, pc) = (k / cols, k % cols);
        for r in 0..p {
            for c in 0..p {
                patches[k * layout.patch_len + r * p + c] = image.get(pr * p + r, pc * p + c);
            }
        }
    }

    let mut embeddings = vec![0.0; layout.n_patches * d];
    let mut pooled = vec![0.0; d];
    for k in 0..layout.n_patches {
        let patch = &patches[k * layout.patch_len..(k + 1) * layout.patch_len];
        for i in 0..d {
            let row = &data[layout.w_embed + i * layout.patch_len..][..layout.patch_len];
            let mut pre = data[layout.b_embed + i] + data[layout.pos + k * d + i];
            for (w, x) in row.iter().zip(patch) {
                pre += w * x;
            }
            let e = pre.tanh();
            embeddings[k * d + i] = e;
            pooled[i] += e;
        }
    }
    for v in &mut pooled {
        *v /= layout.n_patches as f64;
    }

    let mut hidden_act = vec![0.0; hidden];
    for j in 0..hidden {
        let row = &data[layout.w1 + j * d..][..d];
        let mut pre = data[layout.b1 + j];
        for (w, m) in row.iter().zip(&pooled) {
            pre += w * m;
        }
        hidden_act[j] = pre.tanh();
    }

    let mut logits = [0.0; 2];
    for c in 0..2 {
        let row = &data[layout.w2 + c * hidden..][..hidden];
        let mut acc = 0.0;
        for (w, h) in row.iter().zip(&hidden_act) {
            acc += w * h;
        }
        // Bias added last so a bias delta shifts the logit by exactly that
        // delta.
        logits[c] = acc + data[layout.b2 + c];
    }

    Ok((
        logits,
        Cache {
            config: *config,
            patches,
            embeddings,
            pooled,
            hidden: hidden_act,
        },
    ))
}

/// Accumulates parameter gradients for one sample into `grads`, given the
/// loss gradient with respect to the logits.
pub fn backward(
    params: &Params,
    cache: &Cache,
    dlogits: [f64; 2],
    grads: &mut Grads,
) -> Result<(), PredictorError> {
    if cache.config != params.config {
        return Err(PredictorError::StaleCache);
    }
    let layout = params.config.layout();
    let (d, hidden) = (layout.embed_dim, layout.hidden_dim);
    let data = &params.data;
    let g = &mut grads.data;

    let mut dh = vec![0.0; hidden];
    for c in 0..2 {
        g[layout.b2 + c] += dlogits[c];
        for j in 0..hidden {
            g[layout.w2 + c * hidden + j] += dlogits[c] * cache.hidden[j];
            dh[j] += dlogits[c] * data[layout.w2 + c * hidden + j];
        }
    }

    let mut dpooled = vec![0.0; d];
    for j in 0..hidden {
        let dpre = dh[j] * (1.0 - cache.hidden[j] * cache.hidden[j]);
        g[layout.b1 + j] += dpre;
        for i in 0..d {
            g[layout.w1 + j * d + i] += dpre * cache.pooled[i];
            dpooled[i] += dpre * data[layout.w1 + j * d + i];
        }
    }

    let inv_k = 1.0 / layout.n_patches as f64;
    for k in 0..layout.n_patches {
        let patch = &cache.patches[k * layout.patch_len..(k + 1) * layout.patch_len];
        for i in 0..d {
            let e = cache.embeddings[k * d + i];
            let dpre = dpooled[i] * inv_k * (1.0 - e * e);
            g[layout.pos + k * d + i] += dpre;
            g[layout.b_embed + i] += dpre;
            let row = &mut g[layout.w_embed + i * layout.patch_len..][..layout.patch_len];
            for (gw, x) in row.iter_mut().zip(patch) {
                *gw += dpre * x;
            }
        }
    }
    Ok(())
}

fn default_learning_rate() -> f64 {
    2e-4
}
fn default_batch_size() -> usize {
    64
}
fn default_epochs() -> usize {
    100
}
fn default_weight_decay() -> f64 {
    0.05
}
fn default_warmup_epochs() -> usize {
    5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps_adaptive() -> f64 {
    1e-8
}

/// Optimizer and schedule hyperparameters. The learning rate follows a
/// linear warmup and then cosine decay to zero at the final step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_warmup_epochs")]
    pub warmup_epochs: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps_adaptive")]
    pub eps_adaptive: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            weight_decay: default_weight_decay(),
            warmup_epochs: default_warmup_epochs(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps_adaptive: default_eps_adaptive(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let err = |msg: &str| Err(PredictorError::InvalidConfig(msg.to_string()));
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return err("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch_size must be positive");
        }
        if self.weight_decay < 0.0 {
            return err("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return err("betas must lie in [0, 1)");
        }
        if !self.eps_adaptive.is_finite() || self.eps_adaptive <= 0.0 {
            return err("eps_adaptive must be positive");
        }
        Ok(())
    }
}

/// Warmup-then-cosine step schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn from_config(config: &TrainConfig, steps_per_epoch: usize) -> Self {
        LrSchedule {
            warmup_steps: config.warmup_epochs * steps_per_epoch,
            total_steps: config.epochs * steps_per_epoch,
        }
    }

    /// Learning rate at `step` (0-based): linear ramp over the warmup,
    /// then cosine decay reaching exactly zero at the final step.
    pub fn lr_at(&self, base_lr: f64, step: usize) -> f64 {
        let last = self.total_steps.saturating_sub(1);
        let warmup = self.warmup_steps.min(last);
        if step < warmup {
            return base_lr * (step + 1) as f64 / warmup as f64;
        }
        let span = last - warmup;
        let progress = if span == 0 {
            1.0
        } else {
            (step - warmup) as f64 / span as f64
        };
        base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
    }
}

/// First/second moment state of the adaptive optimizer.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(params: &Params) -> Self {
        AdamState {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
        }
    }
}

/// One optimizer step: bias-corrected adaptive moments with weight decay
/// applied decoupled from the gradient, at the scheduled learning rate.
/// Returns the learning rate that was applied.
pub fn train_step(
    params: &mut Params,
    state: &mut AdamState,
    grads: &Grads,
    step: usize,
    config: &TrainConfig,
    schedule: &LrSchedule,
) -> Result<f64, PredictorError> {
    config.validate()?;
    if let Some(i) = grads.data.iter().position(|v| !v.is_finite()) {
        return Err(PredictorError::NonFiniteGradient(i));
    }
    let lr = schedule.lr_at(config.learning_rate, step);
    let t = (step + 1) as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.data.len() {
        let g = grads.data[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params.data[i] -= lr * (m_hat / (v_hat.sqrt() + config.eps_adaptive)
            + config.weight_decay * params.data[i]);
    }
    Ok(lr)
}

// ---------------------------------------------------------------------------
// Checkpoints: one file holding a compact JSON header line (caller-supplied
// header, the predictor config, and the parameter count) followed by the
// parameter blob as little-endian f64.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointMeta<H> {
    header: H,
    predictor: PredictorConfig,
    param_count: usize,
}

pub fn save_checkpoint<H: Serialize>(
    path: &Path,
    header: &H,
    params: &Params,
) -> Result<(), PredictorError> {
    let io_err = |source| PredictorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = CheckpointMeta {
        header,
        predictor: params.config,
        param_count: params.len(),
    };
    let mut json = serde_json::to_vec(&meta).expect("checkpoint header serializes");
    json.push(b'\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&json).map_err(io_err)?;
    let mut blob = Vec::with_capacity(params.len() * 8);
    for &v in &params.data {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&blob).map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint<H: DeserializeOwned>(path: &Path) -> Result<(H, Params), PredictorError> {
    let io_err = |source| PredictorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let malformed = |reason: String| PredictorError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = BufReader::new(std::fs::File::open(path).map_err(io_err)?);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(io_err)?;
    let meta: CheckpointMeta<H> =
        serde_json::from_str(&line).map_err(|e| malformed(format!("invalid header: {e}")))?;
    let mut blob = Vec::new();
    reader.read_to_end(&mut blob).map_err(io_err)?;
    if blob.len() != meta.param_count * 8 {
        return Err(malformed(format!(
            "expected {} parameter bytes, found {}",
            meta.param_count * 8,
            blob.len()
        )));
    }
    let mut params = Params::zeros(meta.predictor)?;
    if params.len() != meta.param_count {
        return Err(malformed(format!(
            "param_count {} inconsistent with config ({})",
            meta.param_count,
            params.len()
        )));
    }
    for (v, chunk) in params.data.iter_mut().zip(blob.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((meta.header, params))
}
