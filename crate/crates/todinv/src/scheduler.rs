//! Closed-form DDIM arithmetic: the noising forward process, the
//! deterministic sampler step, its algebraic inverse, and the coefficient
//! tables shared by inversion and sampling.
//!
//! Schedule indexing convention: `inference_timesteps` is stored descending
//! (sampling order). Step index `i` maps the state at train step
//! `inference_timesteps[i]` to the next less-noisy state, which is
//! `inference_timesteps[i+1]` or the clean image (cumulative alpha 1) for the
//! final step. Inversion walks the same indices in reverse, `i = T-1 .. 0`.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::Latent;

/// Minimum |phi| before a schedule is considered degenerate for inversion.
pub const PHI_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    pub num_train_steps: usize,
    /// Train-step indices for the inference steps, descending.
    pub inference_timesteps: Vec<usize>,
    /// Cumulative product of (1 - beta) per train step.
    pub alpha_bar: Vec<f64>,
    /// Rescaling coefficient per inference step.
    pub phi: Vec<f64>,
    /// Noise coefficient per inference step.
    pub psi: Vec<f64>,
}

impl SchedulerParams {
    pub fn num_inference_steps(&self) -> usize {
        self.inference_timesteps.len()
    }

    /// Cumulative alpha at the less-noisy side of step `i` (1.0 past the end).
    pub fn alpha_bar_prev(&self, i: usize) -> f64 {
        if i + 1 < self.inference_timesteps.len() {
            self.alpha_bar[self.inference_timesteps[i + 1]]
        } else {
            1.0
        }
    }

    /// Cumulative alpha at the noisy side of step `i`.
    pub fn alpha_bar_cur(&self, i: usize) -> f64 {
        self.alpha_bar[self.inference_timesteps[i]]
    }

    fn check_step(&self, i: usize) -> Result<()> {
        if i >= self.inference_timesteps.len() {
            return Err(Error::Config(format!(
                "schedule step {} out of range (T={})",
                i,
                self.inference_timesteps.len()
            )));
        }
        Ok(())
    }
}

/// phi = sqrt(abar_prev / abar_cur), psi per the DDIM sampler coefficients.
fn coefficients(abar_prev: f64, abar_cur: f64) -> (f64, f64) {
    let phi = abar_prev.sqrt() / abar_cur.sqrt();
    let psi = abar_prev.sqrt() * ((1.0 / abar_prev - 1.0).sqrt() - (1.0 / abar_cur - 1.0).sqrt());
    (phi, psi)
}

/// Build a linear-beta schedule with `T` evenly strided (leading-spaced)
/// inference steps.
pub fn build_schedule(
    num_train_steps: usize,
    beta_start: f64,
    beta_end: f64,
    t_inference: usize,
) -> Result<SchedulerParams> {
    if num_train_steps == 0 {
        return Err(Error::Config("num_train_steps must be positive".into()));
    }
    if t_inference == 0 || t_inference > num_train_steps {
        return Err(Error::Config(format!(
            "T={} must satisfy 1 <= T <= num_train_steps={}",
            t_inference, num_train_steps
        )));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "beta range ({}, {}) must satisfy 0 < beta_start <= beta_end < 1",
            beta_start, beta_end
        )));
    }

    let n = num_train_steps;
    let mut alpha_bar = Vec::with_capacity(n);
    let mut prod = 1.0f64;
    for k in 0..n {
        let beta = if n == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * k as f64 / (n - 1) as f64
        };
        prod *= 1.0 - beta;
        alpha_bar.push(prod);
    }

    // Leading spacing: ascending [0, stride, 2*stride, ...], stored descending.
    let stride = n / t_inference;
    let mut inference_timesteps: Vec<usize> = (0..t_inference).map(|s| s * stride).collect();
    inference_timesteps.reverse();

    let mut phi = Vec::with_capacity(t_inference);
    let mut psi = Vec::with_capacity(t_inference);
    for i in 0..t_inference {
        let abar_cur = alpha_bar[inference_timesteps[i]];
        let abar_prev = if i + 1 < t_inference {
            alpha_bar[inference_timesteps[i + 1]]
        } else {
            1.0
        };
        let (p, q) = coefficients(abar_prev, abar_cur);
        phi.push(p);
        psi.push(q);
    }

    Ok(SchedulerParams {
        num_train_steps,
        inference_timesteps,
        alpha_bar,
        phi,
        psi,
    })
}

/// Forward noising at train step `t`.
pub fn add_noise(z0: &Latent, eps: &Latent, t: usize, params: &SchedulerParams) -> Result<Latent> {
    z0.same_shape(eps)?;
    if t >= params.num_train_steps {
        return Err(Error::Config(format!(
            "train step {} out of range ({})",
            t, params.num_train_steps
        )));
    }
    let abar = params.alpha_bar[t];
    let a = abar.sqrt();
    let b = (1.0 - abar).sqrt();
    let data = z0
        .data
        .iter()
        .zip(&eps.data)
        .map(|(z, e)| a * z + b * e)
        .collect();
    Ok(Latent {
        shape: z0.shape,
        data,
        timestep_tag: Some(t),
    })
}

/// One deterministic sampler step at schedule index `i`: noisy -> less noisy.
pub fn ddim_step(
    z_t: &Latent,
    noise_pred: &Latent,
    i: usize,
    params: &SchedulerParams,
) -> Result<Latent> {
    params.check_step(i)?;
    z_t.same_shape(noise_pred)?;
    let (phi, psi) = (params.phi[i], params.psi[i]);
    let data = z_t
        .data
        .iter()
        .zip(&noise_pred.data)
        .map(|(z, e)| phi * z + psi * e)
        .collect();
    Ok(Latent {
        shape: z_t.shape,
        data,
        timestep_tag: z_t.timestep_tag,
    })
}

/// Algebraic inverse of [`ddim_step`] for the supplied prediction:
/// (z_prev - psi * noise_pred) / phi.
pub fn ddim_inverse_step(
    z_prev: &Latent,
    noise_pred: &Latent,
    i: usize,
    params: &SchedulerParams,
) -> Result<Latent> {
    params.check_step(i)?;
    z_prev.same_shape(noise_pred)?;
    let (phi, psi) = (params.phi[i], params.psi[i]);
    if phi.abs() < PHI_EPSILON {
        return Err(Error::Numeric {
            step: i,
            reason: format!("degenerate schedule: |phi|={} below epsilon", phi.abs()),
        });
    }
    let data = z_prev
        .data
        .iter()
        .zip(&noise_pred.data)
        .map(|(z, e)| (z - psi * e) / phi)
        .collect();
    Ok(Latent {
        shape: z_prev.shape,
        data,
        timestep_tag: Some(params.inference_timesteps[i]),
    })
}

/// Generic scalar form of the sampler step, usable at f32 or f64.
pub fn ddim_step_scalar<F: Float>(z: F, eps: F, phi: F, psi: F) -> F {
    phi * z + psi * eps
}

/// Generic scalar form of the inverse step.
pub fn ddim_inverse_step_scalar<F: Float>(z_prev: F, eps: F, phi: F, psi: F) -> F {
    (z_prev - psi * eps) / phi
}
