//! Reconstruction and editing from an inversion result: DDIM sampling with
//! the optimized grid, target-prompt renewal, and a pluggable edit-method
//! hook that chooses the conditioning at every sampling step.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::denoiser::{predict_cfg_with_cond, CfgConfig, Conditioning, NoisePredictor};
use crate::embedding::{classify_edit, renew_target, EditClass, Embedding, PromptGrid};
use crate::error::{Error, Result};
use crate::latent::{Latent, Precision};
use crate::prompt::embed_prompt;
use crate::scheduler::{ddim_step, SchedulerParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditTask {
    pub id: String,
    /// Path or identifier of the source image latent.
    #[serde(rename = "image")]
    pub image_ref: String,
    pub source_prompt: String,
    pub target_prompt: String,
    pub edit_type: String,
    #[serde(default)]
    pub multi_edit: bool,
    /// Optional path to the edited-region mask (1 = editable, 0 = preserved).
    #[serde(default, rename = "mask")]
    pub mask_ref: Option<String>,
}

impl EditTask {
    pub fn edit_class(&self) -> Result<EditClass> {
        classify_edit(&self.edit_type, self.multi_edit)
    }
}

/// Per-step context handed to an edit method.
pub struct EditStepContext<'a> {
    /// Schedule index of the step being sampled.
    pub step: usize,
    pub t_train: usize,
    /// Grid after target-prompt renewal.
    pub renewed_grid: &'a PromptGrid,
    /// The optimized source grid, for methods that also consume it.
    pub source_grid: &'a PromptGrid,
    /// Raw target prompt embedding, before renewal.
    pub target_embedding: &'a Embedding,
}

/// A text-guided editing method: picks the conditioning used at each
/// sampling step. Attention-injection style controllers plug in here.
pub trait EditMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn conditioning<'a>(&self, ctx: &EditStepContext<'a>) -> Conditioning<'a>;
}

/// Samples with the renewed grid unchanged.
pub struct IdentityHook;

impl EditMethod for IdentityHook {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn conditioning<'a>(&self, ctx: &EditStepContext<'a>) -> Conditioning<'a> {
        Conditioning::from_grid(ctx.renewed_grid, ctx.step)
    }
}

/// Drops the renewal delta and samples with the raw target embedding, the
/// direct word-replacement baseline.
pub struct WordReplaceHook;

impl EditMethod for WordReplaceHook {
    fn name(&self) -> &'static str {
        "word-replace"
    }
    fn conditioning<'a>(&self, ctx: &EditStepContext<'a>) -> Conditioning<'a> {
        Conditioning::uniform(ctx.target_embedding)
    }
}

#[derive(Clone)]
pub struct HookRegistry {
    hooks: BTreeMap<String, Arc<dyn EditMethod>>,
}

impl Default for HookRegistry {
    fn default() -> Self {
        let mut r = HookRegistry {
            hooks: BTreeMap::new(),
        };
        r.register("identity", Arc::new(IdentityHook)).unwrap();
        r.register("word-replace", Arc::new(WordReplaceHook)).unwrap();
        r
    }
}

impl HookRegistry {
    pub fn register(&mut self, name: &str, hook: Arc<dyn EditMethod>) -> Result<()> {
        if self.hooks.contains_key(name) {
            return Err(Error::DuplicateHook(name.to_string()));
        }
        self.hooks.insert(name.to_string(), hook);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn EditMethod>> {
        self.hooks
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownHook(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.hooks.keys().cloned().collect()
    }
}

/// DDIM sampling from the terminal latent, conditioning chosen by the hook
/// at every step. Returns the full trajectory, ending at the clean latent.
pub fn sample_with_hook(
    z_terminal: &Latent,
    hook: &dyn EditMethod,
    renewed_grid: &PromptGrid,
    source_grid: &PromptGrid,
    target_embedding: &Embedding,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
    precision: Precision,
) -> Result<Vec<Latent>> {
    let t_steps = params.num_inference_steps();
    if renewed_grid.t_steps != t_steps {
        return Err(Error::ScheduleMismatch(format!(
            "grid has {} timesteps, schedule has {}",
            renewed_grid.t_steps, t_steps
        )));
    }
    let mut z = z_terminal.clone();
    z.quantize(precision);
    let mut trajectory = vec![z.clone()];
    for step in 0..t_steps {
        let ctx = EditStepContext {
            step,
            t_train: params.inference_timesteps[step],
            renewed_grid,
            source_grid,
            target_embedding,
        };
        let cond = hook.conditioning(&ctx);
        let eps = predict_cfg_with_cond(handle, &z, &cond, ctx.t_train, cfg)?;
        z = ddim_step(&z, &eps, step, params)?;
        z.quantize(precision);
        if !z.all_finite() {
            return Err(Error::Numeric {
                step,
                reason: "non-finite latent during sampling".into(),
            });
        }
        trajectory.push(z.clone());
    }
    Ok(trajectory)
}

/// Plain DDIM sampling conditioned on the optimized grid.
pub fn reconstruct(
    z_terminal: &Latent,
    grid_opt: &PromptGrid,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
    precision: Precision,
) -> Result<Latent> {
    let dummy_target = grid_opt.snapshot_cell(0, crate::embedding::LayerGroup::Appearance).clone();
    let traj = sample_with_hook(
        z_terminal,
        &IdentityHook,
        grid_opt,
        grid_opt,
        &dummy_target,
        params,
        handle,
        cfg,
        precision,
    )?;
    Ok(traj.into_iter().next_back().unwrap())
}

/// Renew the target prompt onto the optimized grid, then sample through the
/// hook. Returns (edited latent, full trajectory).
pub fn edit(
    z_terminal: &Latent,
    grid_opt: &PromptGrid,
    target_prompt: &str,
    hook: &dyn EditMethod,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
    precision: Precision,
) -> Result<(Latent, Vec<Latent>)> {
    let (tokens, dim) = handle.embedding_shape();
    let target = embed_prompt(target_prompt, tokens, dim);
    let renewed = renew_target(grid_opt, &target)?;
    let traj = sample_with_hook(
        z_terminal,
        hook,
        &renewed,
        grid_opt,
        &target,
        params,
        handle,
        cfg,
        precision,
    )?;
    let last = traj.last().unwrap().clone();
    Ok((last, traj))
}

/// Map the first three channels of a latent to an 8-bit RGB image,
/// clamping to [0, 1].
pub fn render_rgb(latent: &Latent) -> image::RgbImage {
    let (_, h, w) = latent.shape;
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let v = latent.data[ch * h * w + y * w + x].clamp(0.0, 1.0);
                px[ch] = (v * 255.0).round() as u8;
            }
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img
}
