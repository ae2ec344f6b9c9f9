//! Background-preservation metrics. Masks use 1 for the editable region;
//! metrics are computed over the preserved pixels (mask < 0.5). With no
//! mask, every pixel counts.

use crate::error::{Error, Result};
use crate::latent::Latent;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_pair(a: &Latent, b: &Latent, mask: Option<&Latent>) -> Result<()> {
    a.same_shape(b)?;
    if let Some(m) = mask {
        if (m.shape.1, m.shape.2) != (a.shape.1, a.shape.2) {
            return Err(Error::ShapeMismatch {
                expected: (1, a.shape.1, a.shape.2),
                got: m.shape,
            });
        }
    }
    Ok(())
}

fn included(mask: Option<&Latent>, p: usize) -> bool {
    mask.map_or(true, |m| m.data[p] < 0.5)
}

/// Mean squared error over preserved pixels, averaged across channels.
pub fn mse(a: &Latent, b: &Latent, mask: Option<&Latent>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let (c, h, w) = a.shape;
    let pixels = h * w;
    let mut acc = 0.0;
    let mut n = 0usize;
    for p in 0..pixels {
        if !included(mask, p) {
            continue;
        }
        for ch in 0..c {
            let d = a.data[ch * pixels + p] - b.data[ch * pixels + p];
            acc += d * d;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config("empty preserved region".into()));
    }
    Ok(acc / (n * c) as f64)
}

/// Peak signal-to-noise ratio in dB over the declared value range.
/// Identical inputs give positive infinity (reported as "exact").
pub fn psnr(a: &Latent, b: &Latent, mask: Option<&Latent>, max_value: f64) -> Result<f64> {
    let m = mse(a, b, mask)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / m).log10())
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as isize;
    let mut k = Vec::with_capacity(window * window);
    for dy in -half..=half {
        for dx in -half..=half {
            k.push((-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Structural similarity with a Gaussian window, averaged over channels and
/// over valid window centers in the preserved region.
pub fn ssim(a: &Latent, b: &Latent, mask: Option<&Latent>, max_value: f64) -> Result<f64> {
    ssim_with(a, b, mask, max_value, SSIM_WINDOW, SSIM_SIGMA)
}

pub fn ssim_with(
    a: &Latent,
    b: &Latent,
    mask: Option<&Latent>,
    max_value: f64,
    window: usize,
    sigma: f64,
) -> Result<f64> {
    check_pair(a, b, mask)?;
    let (c, h, w) = a.shape;
    if h < window || w < window {
        return Err(Error::Config(format!(
            "image {}x{} smaller than ssim window {}",
            h, w, window
        )));
    }
    let half = window / 2;
    let kernel = gaussian_kernel(window, sigma);
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let pixels = h * w;

    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let xa = &a.data[ch * pixels..(ch + 1) * pixels];
        let xb = &b.data[ch * pixels..(ch + 1) * pixels];
        for cy in 0..h {
            for cx in 0..w {
                if !included(mask, cy * w + cx) {
                    continue;
                }
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                let mut ki = 0;
                for dy in 0..window {
                    for dx in 0..window {
                        // window samples clamp at the borders so every pixel
                        // is a valid center, keeping masked SSIM defined for
                        // thin preserved regions
                        let sy = (cy + dy).saturating_sub(half).min(h - 1);
                        let sx = (cx + dx).saturating_sub(half).min(w - 1);
                        let p = sy * w + sx;
                        let kw = kernel[ki];
                        ki += 1;
                        mu_a += kw * xa[p];
                        mu_b += kw * xb[p];
                        aa += kw * xa[p] * xa[p];
                        bb += kw * xb[p] * xb[p];
                        ab += kw * xa[p] * xb[p];
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let v = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Config("empty preserved region".into()));
    }
    Ok(total / count as f64)
}
