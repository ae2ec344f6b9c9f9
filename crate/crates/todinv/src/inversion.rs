//! DDIM inversion with per-timestep task-oriented optimization of the
//! prompt grid, plus the plain (one-shot) inversion baseline.
//!
//! The outer loop walks schedule indices from T-1 down to 0 (clean to
//! noisy). Each step first advances the latent with the approximate inverse
//! step, then minimizes the fixed-point residual of that step by optimizing
//! only the grid cells the edit-class mask selects at this timestep. The
//! latent is treated as a constant inside the optimization; gradients flow
//! only through the prediction's embedding inputs.

use serde::{Deserialize, Serialize};

use crate::denoiser::{predict_noise_cfg, CfgConfig, Conditioning, NoisePredictor};
use crate::embedding::{
    selection_mask_with, EditClass, MaskOverride, PromptGrid, SelectionMask, SharingMode,
};
use crate::error::{Error, Result};
use crate::latent::{mean_sq_diff, sum_sq_diff, Latent, Precision};
use crate::optimizer::AdamW;
use crate::scheduler::{ddim_inverse_step, SchedulerParams};

/// How the fixed-point residual reduces over elements. Mean keeps the stop
/// threshold resolution-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualNorm {
    #[default]
    Mean,
    Sum,
}

impl ResidualNorm {
    pub fn apply(self, a: &Latent, b: &Latent) -> f64 {
        match self {
            ResidualNorm::Mean => mean_sq_diff(a, b),
            ResidualNorm::Sum => sum_sq_diff(a, b),
        }
    }
}

pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_DELTA: f64 = 5e-6;
pub const DEFAULT_LR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodinvConfig {
    /// Max optimization steps per timestep.
    pub k_max: usize,
    /// Early-stop threshold on the residual.
    pub delta: f64,
    pub lr: f64,
    pub edit_class: EditClass,
    pub mask_override: MaskOverride,
    pub sharing_mode: SharingMode,
    pub residual_norm: ResidualNorm,
    pub precision: Precision,
    /// Keep the full latent trajectory in the result.
    pub record_trajectory: bool,
}

impl Default for TodinvConfig {
    fn default() -> Self {
        TodinvConfig {
            k_max: DEFAULT_K_MAX,
            delta: DEFAULT_DELTA,
            lr: DEFAULT_LR,
            edit_class: EditClass::GlobalEdit,
            mask_override: MaskOverride::None,
            sharing_mode: SharingMode::PStar,
            residual_norm: ResidualNorm::Mean,
            precision: Precision::F64,
            record_trajectory: true,
        }
    }
}

impl TodinvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta <= 0.0 {
            return Err(Error::Config("delta must be > 0".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    /// Terminal noise latent.
    pub z_terminal: Latent,
    pub grid: PromptGrid,
    /// Per schedule index: residual after each optimizer update.
    pub residual_trace: Vec<Vec<f64>>,
    /// Residual before any update at each schedule index.
    pub initial_residual: Vec<f64>,
    /// Lowest residual observed at each schedule index.
    pub final_residual: Vec<f64>,
    pub steps_used: Vec<usize>,
    /// Latents in inversion order, starting at z0 and ending at the terminal.
    pub trajectory: Vec<Latent>,
    /// Schedule indices where optimization hit a non-finite prediction and
    /// reverted to the best iterate.
    pub aborted_steps: Vec<usize>,
}

impl InversionResult {
    pub fn mean_final_residual(&self) -> f64 {
        self.final_residual.iter().sum::<f64>() / self.final_residual.len() as f64
    }

    pub fn mean_initial_residual(&self) -> f64 {
        self.initial_residual.iter().sum::<f64>() / self.initial_residual.len() as f64
    }

    pub fn total_steps(&self) -> usize {
        self.steps_used.iter().sum()
    }
}

/// One fixed-point evaluation: re-derive the noisy latent from `z_prev`
/// using a prediction evaluated at `z_t`, and measure the discrepancy.
pub fn fixed_point_residual(
    z_prev: &Latent,
    z_t: &Latent,
    grid: &PromptGrid,
    t: usize,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
    norm: ResidualNorm,
) -> Result<(Latent, f64)> {
    z_prev.same_shape(z_t)?;
    let eps = predict_noise_cfg(handle, z_t, grid, t, params, cfg)?;
    if !eps.all_finite() {
        return Err(Error::Numeric {
            step: t,
            reason: "non-finite prediction".into(),
        });
    }
    let z_t_prime = ddim_inverse_step(z_prev, &eps, t, params)?;
    let residual = norm.apply(z_t, &z_t_prime);
    Ok((z_t_prime, residual))
}

fn residual_only(
    z_prev: &Latent,
    z_t: &Latent,
    grid: &PromptGrid,
    t: usize,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
    norm: ResidualNorm,
) -> Result<f64> {
    fixed_point_residual(z_prev, z_t, grid, t, params, handle, cfg, norm).map(|(_, r)| r)
}

/// Gradient of the residual with respect to the grid cells at step `t`,
/// returned per layer group.
pub fn residual_embedding_grad(
    z_prev: &Latent,
    z_t: &Latent,
    grid: &PromptGrid,
    t: usize,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
    norm: ResidualNorm,
) -> Result<crate::denoiser::GroupGrads> {
    let (z_t_prime, _) = fixed_point_residual(z_prev, z_t, grid, t, params, handle, cfg, norm)?;
    let n = z_t.len() as f64;
    let scale = match norm {
        ResidualNorm::Mean => 2.0 / n,
        ResidualNorm::Sum => 2.0,
    };
    let (phi, psi) = (params.phi[t], params.psi[t]);
    // dResidual/dPrediction = (-psi/phi) * scale * (z' - z_t), times the CFG
    // scale for the conditional branch (the unconditional branch is fixed).
    let upstream = Latent {
        shape: z_t.shape,
        data: z_t_prime
            .data
            .iter()
            .zip(&z_t.data)
            .map(|(zp, zt)| scale * (zp - zt) * (-psi / phi) * cfg.scale)
            .collect(),
        timestep_tag: None,
    };
    let cond = Conditioning::from_grid(grid, t);
    handle.embedding_grad(z_t, &cond, params.inference_timesteps[t], &upstream)
}

pub struct TimestepOutcome {
    pub steps_used: usize,
    pub trace: Vec<f64>,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub aborted: bool,
}

/// Optimize the masked grid cells at schedule index `t` until the residual
/// drops below delta or the step budget runs out. The grid keeps the iterate
/// with the lowest observed residual.
pub fn optimize_timestep(
    z_prev: &Latent,
    z_t: &Latent,
    grid: &mut PromptGrid,
    mask: &SelectionMask,
    t: usize,
    config: &TodinvConfig,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
) -> Result<TimestepOutcome> {
    config.validate()?;
    let groups = mask.groups_at(t);
    let r0 = residual_only(z_prev, z_t, grid, t, params, handle, cfg, config.residual_norm)?;
    if groups.is_empty() {
        return Ok(TimestepOutcome {
            steps_used: 0,
            trace: Vec::new(),
            initial_residual: r0,
            final_residual: r0,
            aborted: false,
        });
    }
    if r0 < config.delta || config.k_max == 0 {
        return Ok(TimestepOutcome {
            steps_used: 0,
            trace: Vec::new(),
            initial_residual: r0,
            final_residual: r0,
            aborted: false,
        });
    }

    // distinct storage slots backing the selected cells at this timestep
    let mut slots: Vec<usize> = groups.iter().map(|&g| grid.slot_index(t, g)).collect();
    slots.sort_unstable();
    slots.dedup();
    let cell_len = grid.tokens * grid.dim;
    let flat_len = slots.len() * cell_len;

    let read_flat = |grid: &PromptGrid| -> Vec<f64> {
        slots
            .iter()
            .flat_map(|&s| grid.slot(s).data.iter().copied())
            .collect()
    };
    let write_flat = |grid: &mut PromptGrid, flat: &[f64]| {
        for (k, &s) in slots.iter().enumerate() {
            grid.slot_mut(s)
                .data
                .copy_from_slice(&flat[k * cell_len..(k + 1) * cell_len]);
        }
    };

    let mut best = r0;
    let mut best_flat = read_flat(grid);
    let mut opt = AdamW::new(flat_len, config.lr, 0.0);
    let mut trace = Vec::new();
    let mut aborted = false;

    for _k in 0..config.k_max {
        let grads = match residual_embedding_grad(
            z_prev,
            z_t,
            grid,
            t,
            params,
            handle,
            cfg,
            config.residual_norm,
        ) {
            Ok(g) => g,
            Err(Error::Numeric { .. }) => {
                aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        // gradient per slot: sum of group gradients over the groups the slot backs
        let mut flat_grad = vec![0.0; flat_len];
        for (k, &s) in slots.iter().enumerate() {
            for &g in &groups {
                if grid.slot_index(t, g) == s {
                    for (dst, src) in flat_grad[k * cell_len..(k + 1) * cell_len]
                        .iter_mut()
                        .zip(&grads.group(g).data)
                    {
                        *dst += src;
                    }
                }
            }
        }
        let mut flat = read_flat(grid);
        opt.step(&mut flat, &flat_grad);
        write_flat(grid, &flat);

        let r = match residual_only(z_prev, z_t, grid, t, params, handle, cfg, config.residual_norm)
        {
            Ok(r) if r.is_finite() => r,
            Ok(_) | Err(Error::Numeric { .. }) => {
                aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.push(r);
        if r < best {
            best = r;
            best_flat = flat;
        }
        if r < config.delta {
            break;
        }
    }

    write_flat(grid, &best_flat);
    Ok(TimestepOutcome {
        steps_used: trace.len(),
        trace,
        initial_residual: r0,
        final_residual: best,
        aborted,
    })
}

fn invert_loop(
    z0: &Latent,
    mut grid: PromptGrid,
    mask: Option<&SelectionMask>,
    config: &TodinvConfig,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
) -> Result<InversionResult> {
    config.validate()?;
    if !z0.all_finite() {
        return Err(Error::Config("input latent has non-finite values".into()));
    }
    let t_steps = params.num_inference_steps();
    let mut z = z0.clone();
    z.quantize(config.precision);
    let mut trajectory = vec![z.clone()];
    let mut residual_trace = vec![Vec::new(); t_steps];
    let mut initial_residual = vec![0.0; t_steps];
    let mut final_residual = vec![0.0; t_steps];
    let mut steps_used = vec![0usize; t_steps];
    let mut aborted_steps = Vec::new();

    for t in (0..t_steps).rev() {
        // approximate inverse step: prediction evaluated at the less-noisy latent
        let eps = predict_noise_cfg(handle, &z, &grid, t, params, cfg)?;
        let mut z_next = ddim_inverse_step(&z, &eps, t, params)?;
        z_next.quantize(config.precision);
        if !z_next.all_finite() {
            return Err(Error::Numeric {
                step: t,
                reason: "non-finite latent during inversion".into(),
            });
        }

        match mask {
            Some(mask) => {
                let outcome =
                    optimize_timestep(&z, &z_next, &mut grid, mask, t, config, params, handle, cfg)?;
                residual_trace[t] = outcome.trace;
                initial_residual[t] = outcome.initial_residual;
                final_residual[t] = outcome.final_residual;
                steps_used[t] = outcome.steps_used;
                if outcome.aborted {
                    aborted_steps.push(t);
                }
            }
            None => {
                // diagnostic one-shot residual, no optimization
                let r = residual_only(
                    &z,
                    &z_next,
                    &grid,
                    t,
                    params,
                    handle,
                    cfg,
                    config.residual_norm,
                )?;
                residual_trace[t] = vec![r];
                initial_residual[t] = r;
                final_residual[t] = r;
            }
        }

        z = z_next;
        trajectory.push(z.clone());
    }

    if !config.record_trajectory {
        trajectory = vec![trajectory[0].clone(), trajectory[trajectory.len() - 1].clone()];
    }
    Ok(InversionResult {
        z_terminal: z,
        grid,
        residual_trace,
        initial_residual,
        final_residual,
        steps_used,
        trajectory,
        aborted_steps,
    })
}

/// Plain DDIM inversion: no optimization, one-shot residual recorded per
/// step for diagnostics. The grid is returned unchanged.
pub fn naive_ddim_invert(
    z0: &Latent,
    grid: &PromptGrid,
    config: &TodinvConfig,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
) -> Result<InversionResult> {
    invert_loop(z0, grid.clone(), None, config, params, handle, cfg)
}

/// Full task-oriented inversion from a prebuilt grid. The selection mask
/// comes from the configured edit class and override.
pub fn todinv_invert_grid(
    z0: &Latent,
    grid: PromptGrid,
    config: &TodinvConfig,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
) -> Result<InversionResult> {
    let mask = selection_mask_with(
        config.edit_class,
        params.num_inference_steps(),
        config.mask_override,
    );
    invert_loop(z0, grid, Some(&mask), config, params, handle, cfg)
}

/// Convenience entry: build the grid from a source prompt, then invert.
pub fn todinv_invert(
    z0: &Latent,
    source_prompt: &str,
    config: &TodinvConfig,
    params: &SchedulerParams,
    handle: &dyn NoisePredictor,
    cfg: &CfgConfig,
) -> Result<InversionResult> {
    let (tokens, dim) = handle.embedding_shape();
    let source = crate::prompt::embed_prompt(source_prompt, tokens, dim);
    let grid = crate::embedding::init_grid(&source, params.num_inference_steps(), config.sharing_mode)?;
    todinv_invert_grid(z0, grid, config, params, handle, cfg)
}
