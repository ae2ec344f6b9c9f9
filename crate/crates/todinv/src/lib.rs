//! Task-oriented DDIM inversion on an extended prompt-embedding space.
//!
//! The library inverts an image latent through a deterministic DDIM
//! schedule while minimizing the per-timestep fixed-point residual of the
//! inversion approximation. The minimization variables are prompt
//! embeddings laid out on a timestep-by-layer-group grid whose sharing
//! structure and edit-class masking are configurable. On top of the
//! inversion sit reconstruction and editing pipelines, a trainable toy
//! denoiser for desk-scale experiments, masked background-preservation
//! metrics, and an ablation harness.

pub mod config;
pub mod denoiser;
pub mod editing;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod inversion;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod optimizer;
pub mod prompt;
pub mod scheduler;
pub mod toyset;

pub use config::{ResolvedRun, RunConfig};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use latent::{Latent, Precision};
