//! Conditional noise predictors.
//!
//! The toy model is a multi-resolution stack: each level average-pools the
//! latent, modulates it with a feature-wise affine transform computed from
//! that level's group embedding (pooled over tokens) plus a timestep
//! encoding, mixes channels, and adds the upsampled result to a skip path.
//! High-resolution levels are tagged appearance, low-resolution levels
//! structure, so the two embedding groups condition disjoint blocks.
//!
//! Gradients with respect to the embedding cells are computed analytically;
//! the same backward pass drives the training loop.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, LayerGroup, PromptGrid};
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::optimizer::AdamW;
use crate::prompt::{component_seed, embed_prompt};
use crate::scheduler::{add_noise, SchedulerParams};

const TIME_FEATS: usize = 4;

/// Per-group conditioning for one prediction: the embeddings the appearance
/// and structure blocks read.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub appearance: &'a Embedding,
    pub structure: &'a Embedding,
}

impl<'a> Conditioning<'a> {
    pub fn uniform(e: &'a Embedding) -> Self {
        Conditioning {
            appearance: e,
            structure: e,
        }
    }

    pub fn from_grid(grid: &'a PromptGrid, t: usize) -> Self {
        Conditioning {
            appearance: grid.cell(t, LayerGroup::Appearance),
            structure: grid.cell(t, LayerGroup::Structure),
        }
    }

    pub fn group(&self, g: LayerGroup) -> &'a Embedding {
        match g {
            LayerGroup::Appearance => self.appearance,
            LayerGroup::Structure => self.structure,
        }
    }
}

/// Gradient of a scalar loss with respect to the two conditioning embeddings.
#[derive(Debug, Clone)]
pub struct GroupGrads {
    pub appearance: Embedding,
    pub structure: Embedding,
}

impl GroupGrads {
    pub fn zeros(tokens: usize, dim: usize) -> Self {
        GroupGrads {
            appearance: Embedding::zeros(tokens, dim),
            structure: Embedding::zeros(tokens, dim),
        }
    }

    pub fn group(&self, g: LayerGroup) -> &Embedding {
        match g {
            LayerGroup::Appearance => &self.appearance,
            LayerGroup::Structure => &self.structure,
        }
    }
}

/// A conditional noise predictor. Deterministic given identical inputs and
/// weights; exposes analytic gradients with respect to the conditioning
/// embeddings. Implement this to adapt an external diffusion backbone.
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, z: &Latent, cond: &Conditioning, t_train: usize) -> Result<Latent>;

    /// Backpropagate `upstream` (dLoss/dOutput) to the embedding inputs.
    fn embedding_grad(
        &self,
        z: &Latent,
        cond: &Conditioning,
        t_train: usize,
        upstream: &Latent,
    ) -> Result<GroupGrads>;

    /// (tokens, dim) the predictor expects for conditioning embeddings.
    fn embedding_shape(&self) -> (usize, usize);

    fn layer_tags(&self) -> Vec<LayerGroup>;

    fn param_count(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyArch {
    pub channels: usize,
    pub levels: usize,
    pub tokens: usize,
    pub dim: usize,
    pub num_train_steps: usize,
}

impl Default for ToyArch {
    fn default() -> Self {
        ToyArch {
            channels: 4,
            levels: 4,
            tokens: crate::prompt::DEFAULT_TOKENS,
            dim: crate::prompt::DEFAULT_DIM,
            num_train_steps: 1000,
        }
    }
}

impl ToyArch {
    fn level_param_len(&self) -> usize {
        let (c, d) = (self.channels, self.dim);
        2 * c * d + c * c + c * TIME_FEATS + c
    }

    pub fn param_len(&self) -> usize {
        self.channels * self.channels + self.levels * self.level_param_len()
    }
}

// Flat parameter layout: w_skip (C*C), then per level u (C*D), v (C*D),
// w (C*C), time_w (C*TIME_FEATS), bias (C).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub arch: ToyArch,
    pub params: Vec<f64>,
    pub null_embedding: Embedding,
    pub layer_tags: Vec<LayerGroup>,
    /// Diagnostic switch: disable conditioning per group ([appearance, structure]).
    pub cond_enabled: [bool; 2],
}

struct LevelCache {
    h: usize,
    w: usize,
    pooled: Vec<f64>,  // C * cells
    m: Vec<f64>,       // C * cells
    e: Vec<f64>,       // dim (pooled embedding, zeros if conditioning off)
    enabled: bool,
}

struct ForwardCache {
    tfeat: [f64; TIME_FEATS],
    levels: Vec<LevelCache>,
}

impl ToyDenoiser {
    pub fn zeroed(arch: ToyArch) -> Self {
        let layer_tags = Self::default_tags(arch.levels);
        ToyDenoiser {
            arch,
            params: vec![0.0; arch.param_len()],
            null_embedding: Embedding::zeros(arch.tokens, arch.dim),
            layer_tags,
            cond_enabled: [true, true],
        }
    }

    pub fn init(arch: ToyArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..arch.param_len())
            .map(|_| 0.05 * normal(&mut rng))
            .collect();
        let mut null_rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "null-embedding"));
        let null_embedding = Embedding {
            tokens: arch.tokens,
            dim: arch.dim,
            data: (0..arch.tokens * arch.dim)
                .map(|_| 0.25 * normal(&mut null_rng))
                .collect(),
        };
        ToyDenoiser {
            arch,
            params,
            null_embedding,
            layer_tags: Self::default_tags(arch.levels),
            cond_enabled: [true, true],
        }
    }

    fn default_tags(levels: usize) -> Vec<LayerGroup> {
        // finer half appearance, coarser half structure
        (0..levels)
            .map(|l| {
                if l < levels / 2 {
                    LayerGroup::Appearance
                } else {
                    LayerGroup::Structure
                }
            })
            .collect()
    }

    pub fn with_group_ablated(mut self, g: LayerGroup) -> Self {
        self.cond_enabled[g.index()] = false;
        self
    }

    fn off_skip(&self) -> usize {
        0
    }

    fn off_level(&self, l: usize) -> usize {
        self.arch.channels * self.arch.channels + l * self.arch.level_param_len()
    }

    fn off_u(&self, l: usize) -> usize {
        self.off_level(l)
    }

    fn off_v(&self, l: usize) -> usize {
        self.off_level(l) + self.arch.channels * self.arch.dim
    }

    fn off_w(&self, l: usize) -> usize {
        self.off_level(l) + 2 * self.arch.channels * self.arch.dim
    }

    fn off_time(&self, l: usize) -> usize {
        self.off_w(l) + self.arch.channels * self.arch.channels
    }

    fn off_bias(&self, l: usize) -> usize {
        self.off_time(l) + self.arch.channels * TIME_FEATS
    }

    fn time_features(&self, t_train: usize) -> [f64; TIME_FEATS] {
        let x = t_train as f64 / self.arch.num_train_steps as f64;
        let tau = std::f64::consts::TAU;
        [
            (tau * x).sin(),
            (tau * x).cos(),
            (2.0 * tau * x).sin(),
            (2.0 * tau * x).cos(),
        ]
    }

    fn forward(&self, z: &Latent, cond: &Conditioning, t_train: usize) -> Result<(Latent, ForwardCache)> {
        let (c_ch, h, w) = z.shape;
        if c_ch != self.arch.channels {
            return Err(Error::ShapeMismatch {
                expected: (self.arch.channels, h, w),
                got: z.shape,
            });
        }
        for g in LayerGroup::ALL {
            let e = cond.group(g);
            if e.tokens != self.arch.tokens || e.dim != self.arch.dim {
                return Err(Error::Config(format!(
                    "conditioning shape {}x{} does not match model {}x{}",
                    e.tokens, e.dim, self.arch.tokens, self.arch.dim
                )));
            }
        }
        if t_train >= self.arch.num_train_steps {
            return Err(Error::Config(format!(
                "train step {} outside model range {}",
                t_train, self.arch.num_train_steps
            )));
        }

        let tfeat = self.time_features(t_train);
        let mut out = vec![0.0; z.data.len()];
        // skip path: channel mix per pixel
        let skip = &self.params[self.off_skip()..self.off_skip() + c_ch * c_ch];
        let pixels = h * w;
        for c in 0..c_ch {
            for c2 in 0..c_ch {
                let wgt = skip[c * c_ch + c2];
                if wgt == 0.0 {
                    continue;
                }
                for p in 0..pixels {
                    out[c * pixels + p] += wgt * z.data[c2 * pixels + p];
                }
            }
        }

        let mut levels = Vec::with_capacity(self.arch.levels);
        for l in 0..self.arch.levels {
            let f = 1usize << l;
            let lh = h.div_ceil(f);
            let lw = w.div_ceil(f);
            let cells = lh * lw;
            // average pool
            let mut pooled = vec![0.0; c_ch * cells];
            let mut counts = vec![0.0; cells];
            for y in 0..h {
                for x in 0..w {
                    counts[(y / f) * lw + x / f] += 1.0;
                }
            }
            for c in 0..c_ch {
                for y in 0..h {
                    for x in 0..w {
                        pooled[c * cells + (y / f) * lw + x / f] += z.data[c * pixels + y * w + x];
                    }
                }
                for cell in 0..cells {
                    pooled[c * cells + cell] /= counts[cell];
                }
            }

            let group = self.layer_tags[l];
            let enabled = self.cond_enabled[group.index()];
            let e = if enabled {
                cond.group(group).pooled()
            } else {
                vec![0.0; self.arch.dim]
            };

            let u = &self.params[self.off_u(l)..self.off_u(l) + c_ch * self.arch.dim];
            let v = &self.params[self.off_v(l)..self.off_v(l) + c_ch * self.arch.dim];
            let tw = &self.params[self.off_time(l)..self.off_time(l) + c_ch * TIME_FEATS];
            let bias = &self.params[self.off_bias(l)..self.off_bias(l) + c_ch];

            let mut gamma = vec![1.0; c_ch];
            let mut beta = vec![0.0; c_ch];
            for c in 0..c_ch {
                if enabled {
                    let mut gd = 0.0;
                    let mut bd = 0.0;
                    for d in 0..self.arch.dim {
                        gd += u[c * self.arch.dim + d] * e[d];
                        bd += v[c * self.arch.dim + d] * e[d];
                    }
                    gamma[c] += gd;
                    beta[c] += bd;
                }
                beta[c] += bias[c];
                for k in 0..TIME_FEATS {
                    beta[c] += tw[c * TIME_FEATS + k] * tfeat[k];
                }
            }

            let mut m = vec![0.0; c_ch * cells];
            for c in 0..c_ch {
                for cell in 0..cells {
                    m[c * cells + cell] = gamma[c] * pooled[c * cells + cell] + beta[c];
                }
            }

            // channel mix then nearest upsample back to full resolution
            let wmat = &self.params[self.off_w(l)..self.off_w(l) + c_ch * c_ch];
            for c in 0..c_ch {
                for y in 0..h {
                    for x in 0..w {
                        let cell = (y / f) * lw + x / f;
                        let mut acc = 0.0;
                        for c2 in 0..c_ch {
                            acc += wmat[c * c_ch + c2] * m[c2 * cells + cell];
                        }
                        out[c * pixels + y * w + x] += acc;
                    }
                }
            }

            levels.push(LevelCache {
                h: lh,
                w: lw,
                pooled,
                m,
                e,
                enabled,
            });
        }

        let out = Latent {
            shape: z.shape,
            data: out,
            timestep_tag: Some(t_train),
        };
        if !out.all_finite() {
            return Err(Error::Numeric {
                step: t_train,
                reason: "non-finite prediction".into(),
            });
        }
        Ok((out, ForwardCache { tfeat, levels }))
    }

    /// Gradient of a scalar loss with respect to every weight, given
    /// dLoss/dOutput. Used by the training loop.
    fn weight_grad(
        &self,
        z: &Latent,
        cache: &ForwardCache,
        upstream: &Latent,
    ) -> Vec<f64> {
        let (c_ch, h, w) = z.shape;
        let pixels = h * w;
        let mut grad = vec![0.0; self.params.len()];

        // skip path
        for c in 0..c_ch {
            for c2 in 0..c_ch {
                let mut acc = 0.0;
                for p in 0..pixels {
                    acc += upstream.data[c * pixels + p] * z.data[c2 * pixels + p];
                }
                grad[self.off_skip() + c * c_ch + c2] = acc;
            }
        }

        for l in 0..self.arch.levels {
            let lc = &cache.levels[l];
            let f = 1usize << l;
            let cells = lc.h * lc.w;
            // upsample adjoint
            let mut s = vec![0.0; c_ch * cells];
            for c in 0..c_ch {
                for y in 0..h {
                    for x in 0..w {
                        s[c * cells + (y / f) * lc.w + x / f] +=
                            upstream.data[c * pixels + y * w + x];
                    }
                }
            }
            let wmat = &self.params[self.off_w(l)..self.off_w(l) + c_ch * c_ch];
            // g_w[c][c2] = sum_cell s[c,cell] * m[c2,cell]
            for c in 0..c_ch {
                for c2 in 0..c_ch {
                    let mut acc = 0.0;
                    for cell in 0..cells {
                        acc += s[c * cells + cell] * lc.m[c2 * cells + cell];
                    }
                    grad[self.off_w(l) + c * c_ch + c2] = acc;
                }
            }
            // g_m, then gamma/beta
            let mut g_gamma = vec![0.0; c_ch];
            let mut g_beta = vec![0.0; c_ch];
            for c2 in 0..c_ch {
                for cell in 0..cells {
                    let mut gm = 0.0;
                    for c in 0..c_ch {
                        gm += wmat[c * c_ch + c2] * s[c * cells + cell];
                    }
                    g_gamma[c2] += gm * lc.pooled[c2 * cells + cell];
                    g_beta[c2] += gm;
                }
            }
            for c in 0..c_ch {
                if lc.enabled {
                    for d in 0..self.arch.dim {
                        grad[self.off_u(l) + c * self.arch.dim + d] = g_gamma[c] * lc.e[d];
                        grad[self.off_v(l) + c * self.arch.dim + d] = g_beta[c] * lc.e[d];
                    }
                }
                for k in 0..TIME_FEATS {
                    grad[self.off_time(l) + c * TIME_FEATS + k] = g_beta[c] * cache.tfeat[k];
                }
                grad[self.off_bias(l) + c] = g_beta[c];
            }
        }
        grad
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl NoisePredictor for ToyDenoiser {
    fn predict(&self, z: &Latent, cond: &Conditioning, t_train: usize) -> Result<Latent> {
        self.forward(z, cond, t_train).map(|(out, _)| out)
    }

    fn embedding_grad(
        &self,
        z: &Latent,
        cond: &Conditioning,
        t_train: usize,
        upstream: &Latent,
    ) -> Result<GroupGrads> {
        let (_, cache) = self.forward(z, cond, t_train)?;
        let (c_ch, h, w) = z.shape;
        let pixels = h * w;
        let mut grads = GroupGrads::zeros(self.arch.tokens, self.arch.dim);
        for l in 0..self.arch.levels {
            let lc = &cache.levels[l];
            if !lc.enabled {
                continue;
            }
            let f = 1usize << l;
            let cells = lc.h * lc.w;
            let mut s = vec![0.0; c_ch * cells];
            for c in 0..c_ch {
                for y in 0..h {
                    for x in 0..w {
                        s[c * cells + (y / f) * lc.w + x / f] +=
                            upstream.data[c * pixels + y * w + x];
                    }
                }
            }
            let wmat = &self.params[self.off_w(l)..self.off_w(l) + c_ch * c_ch];
            let u = &self.params[self.off_u(l)..self.off_u(l) + c_ch * self.arch.dim];
            let v = &self.params[self.off_v(l)..self.off_v(l) + c_ch * self.arch.dim];
            let mut g_gamma = vec![0.0; c_ch];
            let mut g_beta = vec![0.0; c_ch];
            for c2 in 0..c_ch {
                for cell in 0..cells {
                    let mut gm = 0.0;
                    for c in 0..c_ch {
                        gm += wmat[c * c_ch + c2] * s[c * cells + cell];
                    }
                    g_gamma[c2] += gm * lc.pooled[c2 * cells + cell];
                    g_beta[c2] += gm;
                }
            }
            let mut g_e = vec![0.0; self.arch.dim];
            for c in 0..c_ch {
                for d in 0..self.arch.dim {
                    g_e[d] += u[c * self.arch.dim + d] * g_gamma[c]
                        + v[c * self.arch.dim + d] * g_beta[c];
                }
            }
            let group = self.layer_tags[l];
            let target = match group {
                LayerGroup::Appearance => &mut grads.appearance,
                LayerGroup::Structure => &mut grads.structure,
            };
            let inv_tokens = 1.0 / self.arch.tokens as f64;
            for tok in 0..self.arch.tokens {
                for d in 0..self.arch.dim {
                    target.data[tok * self.arch.dim + d] += g_e[d] * inv_tokens;
                }
            }
        }
        Ok(grads)
    }

    fn embedding_shape(&self) -> (usize, usize) {
        (self.arch.tokens, self.arch.dim)
    }

    fn layer_tags(&self) -> Vec<LayerGroup> {
        self.layer_tags.clone()
    }

    fn param_count(&self) -> usize {
        self.params.len()
    }
}

pub fn layer_group_of(handle: &dyn NoisePredictor, block_index: usize) -> Result<LayerGroup> {
    let tags = handle.layer_tags();
    tags.get(block_index).copied().ok_or_else(|| {
        Error::Config(format!(
            "block index {} out of range ({} blocks)",
            block_index,
            tags.len()
        ))
    })
}

/// Classifier-free guidance settings.
#[derive(Debug, Clone)]
pub struct CfgConfig {
    pub scale: f64,
    pub uncond_embedding: Embedding,
}

impl CfgConfig {
    pub fn new(scale: f64, uncond_embedding: Embedding) -> Self {
        CfgConfig {
            scale,
            uncond_embedding,
        }
    }

    pub fn unguided(uncond_embedding: Embedding) -> Self {
        CfgConfig {
            scale: 1.0,
            uncond_embedding,
        }
    }
}

/// Conditional prediction at schedule step `t` of the grid.
pub fn predict_noise(
    handle: &dyn NoisePredictor,
    z_t: &Latent,
    grid: &PromptGrid,
    t: usize,
    params: &SchedulerParams,
) -> Result<Latent> {
    let cond = Conditioning::from_grid(grid, t);
    handle.predict(z_t, &cond, params.inference_timesteps[t])
}

/// CFG-combined prediction: uncond + scale * (cond - uncond). At scale 1 the
/// unconditional pass is skipped so the result equals the conditional
/// prediction exactly.
pub fn predict_noise_cfg(
    handle: &dyn NoisePredictor,
    z_t: &Latent,
    grid: &PromptGrid,
    t: usize,
    params: &SchedulerParams,
    cfg: &CfgConfig,
) -> Result<Latent> {
    let cond_pred = predict_noise(handle, z_t, grid, t, params)?;
    if cfg.scale == 1.0 {
        return Ok(cond_pred);
    }
    let uncond = Conditioning::uniform(&cfg.uncond_embedding);
    let uncond_pred = handle.predict(z_t, &uncond, params.inference_timesteps[t])?;
    let data = uncond_pred
        .data
        .iter()
        .zip(&cond_pred.data)
        .map(|(u, c)| u + cfg.scale * (c - u))
        .collect();
    Ok(Latent {
        shape: z_t.shape,
        data,
        timestep_tag: cond_pred.timestep_tag,
    })
}

/// CFG combine for raw conditioning (used inside optimization loops where
/// the conditioning is not a plain grid cell).
pub fn predict_cfg_with_cond(
    handle: &dyn NoisePredictor,
    z_t: &Latent,
    cond: &Conditioning,
    t_train: usize,
    cfg: &CfgConfig,
) -> Result<Latent> {
    let cond_pred = handle.predict(z_t, cond, t_train)?;
    if cfg.scale == 1.0 {
        return Ok(cond_pred);
    }
    let uncond = Conditioning::uniform(&cfg.uncond_embedding);
    let uncond_pred = handle.predict(z_t, &uncond, t_train)?;
    let data = uncond_pred
        .data
        .iter()
        .zip(&cond_pred.data)
        .map(|(u, c)| u + cfg.scale * (c - u))
        .collect();
    Ok(Latent {
        shape: z_t.shape,
        data,
        timestep_tag: Some(t_train),
    })
}

/// Exact posterior-mean noise predictor for scalar Gaussian data z0 ~ N(0, sigma^2).
/// Ignores conditioning; used as a closed-form diagnostic backend.
pub struct GaussianPredictor {
    pub sigma2: f64,
    alpha_bar: Vec<f64>,
    tokens: usize,
    dim: usize,
}

impl GaussianPredictor {
    pub fn new(sigma2: f64, params: &SchedulerParams, tokens: usize, dim: usize) -> Self {
        GaussianPredictor {
            sigma2,
            alpha_bar: params.alpha_bar.clone(),
            tokens,
            dim,
        }
    }

    pub fn coefficient(&self, t_train: usize) -> f64 {
        let abar = self.alpha_bar[t_train];
        (1.0 - abar).sqrt() / (self.sigma2 * abar + 1.0 - abar)
    }
}

impl NoisePredictor for GaussianPredictor {
    fn predict(&self, z: &Latent, _cond: &Conditioning, t_train: usize) -> Result<Latent> {
        let c = self.coefficient(t_train);
        Ok(Latent {
            shape: z.shape,
            data: z.data.iter().map(|v| c * v).collect(),
            timestep_tag: Some(t_train),
        })
    }

    fn embedding_grad(
        &self,
        _z: &Latent,
        _cond: &Conditioning,
        _t_train: usize,
        _upstream: &Latent,
    ) -> Result<GroupGrads> {
        Ok(GroupGrads::zeros(self.tokens, self.dim))
    }

    fn embedding_shape(&self) -> (usize, usize) {
        (self.tokens, self.dim)
    }

    fn layer_tags(&self) -> Vec<LayerGroup> {
        vec![LayerGroup::Appearance, LayerGroup::Structure]
    }

    fn param_count(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub holdout_initial: f64,
    pub holdout_final: f64,
}

/// Mean training-objective loss over a sample set with a fixed draw of
/// (timestep, noise) pairs per sample.
pub fn eval_loss(
    handle: &ToyDenoiser,
    samples: &[(Latent, String)],
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sched = crate::scheduler::build_schedule(handle.arch.num_train_steps, 1e-4, 2e-2, 1)?;
    let mut total = 0.0;
    for (z0, prompt) in samples {
        let t = rng.gen_range(0..handle.arch.num_train_steps);
        let eps = Latent {
            shape: z0.shape,
            data: (0..z0.len()).map(|_| normal(&mut rng)).collect(),
            timestep_tag: None,
        };
        let z_t = add_noise(z0, &eps, t, &sched)?;
        let emb = embed_prompt(prompt, handle.arch.tokens, handle.arch.dim);
        let pred = handle.predict(&z_t, &Conditioning::uniform(&emb), t)?;
        total += crate::latent::mean_sq_diff(&pred, &eps);
    }
    Ok(total / samples.len() as f64)
}

/// Train the toy denoiser on (latent, prompt) pairs. The last fifth of the
/// dataset is held out for the before/after loss comparison.
pub fn train_toy(
    dataset: &[(Latent, String)],
    epochs: usize,
    seed: u64,
) -> Result<(ToyDenoiser, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Config("empty training dataset".into()));
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }
    let holdout_len = (dataset.len() / 5).max(1).min(dataset.len() - 1).max(0);
    let split = dataset.len() - holdout_len;
    let (train, holdout) = dataset.split_at(split.max(1));

    let arch = ToyArch::default();
    let mut model = ToyDenoiser::init(arch, component_seed(seed, "toy-init"));
    let sched = crate::scheduler::build_schedule(arch.num_train_steps, 1e-4, 2e-2, 1)?;
    let holdout_seed = component_seed(seed, "toy-holdout");
    let holdout_initial = eval_loss(&model, holdout, holdout_seed)?;

    let mut opt = AdamW::new(model.params.len(), 0.01, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "toy-train"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);

    // prompt embeddings are deterministic, cache them
    let embs: Vec<Embedding> = train
        .iter()
        .map(|(_, p)| embed_prompt(p, arch.tokens, arch.dim))
        .collect();

    for _epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &idx in &order {
            let (z0, _) = &train[idx];
            let t = rng.gen_range(0..arch.num_train_steps);
            let eps = Latent {
                shape: z0.shape,
                data: (0..z0.len()).map(|_| normal(&mut rng)).collect(),
                timestep_tag: None,
            };
            let z_t = add_noise(z0, &eps, t, &sched)?;
            let cond = Conditioning::uniform(&embs[idx]);
            let (pred, cache) = model.forward(&z_t, &cond, t)?;
            let n = pred.len() as f64;
            epoch_loss += crate::latent::mean_sq_diff(&pred, &eps);
            let upstream = Latent {
                shape: pred.shape,
                data: pred
                    .data
                    .iter()
                    .zip(&eps.data)
                    .map(|(p, e)| 2.0 * (p - e) / n)
                    .collect(),
                timestep_tag: None,
            };
            let grad = model.weight_grad(&z_t, &cache, &upstream);
            opt.step(&mut model.params, &grad);
        }
        epoch_losses.push(epoch_loss / train.len() as f64);
    }

    let holdout_final = eval_loss(&model, holdout, holdout_seed)?;
    Ok((
        model,
        TrainReport {
            epoch_losses,
            holdout_initial,
            holdout_final,
        },
    ))
}
