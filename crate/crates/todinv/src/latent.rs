//! Dense real-valued latent arrays with shape (channels, height, width).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision for latents along a trajectory. Coefficient tables are
/// always computed in f64; this controls rounding applied to latent data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub shape: (usize, usize, usize),
    pub data: Vec<f64>,
    pub timestep_tag: Option<usize>,
}

impl Latent {
    pub fn zeros(shape: (usize, usize, usize)) -> Self {
        Latent {
            shape,
            data: vec![0.0; shape.0 * shape.1 * shape.2],
            timestep_tag: None,
        }
    }

    pub fn from_data(shape: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.0 * shape.1 * shape.2 {
            return Err(Error::Config(format!(
                "latent data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Latent {
            shape,
            data,
            timestep_tag: None,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Latent) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: other.shape,
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Round every element to the given storage precision.
    pub fn quantize(&mut self, precision: Precision) {
        if precision == Precision::F32 {
            for v in &mut self.data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn tagged(mut self, t: usize) -> Self {
        self.timestep_tag = Some(t);
        self
    }
}

/// Mean of squared elementwise differences.
pub fn mean_sq_diff(a: &Latent, b: &Latent) -> f64 {
    debug_assert_eq!(a.shape, b.shape);
    let n = a.data.len() as f64;
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// Sum of squared elementwise differences.
pub fn sum_sq_diff(a: &Latent, b: &Latent) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}
