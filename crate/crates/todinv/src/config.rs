//! Run configuration: user-facing knobs plus the fully resolved record
//! written into every output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{MaskOverride, SharingMode};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::inversion::{ResidualNorm, TodinvConfig};
use crate::latent::Precision;
use crate::scheduler::{build_schedule, SchedulerParams};

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 2e-2;
pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_CFG_SCALE: f64 = 7.5;

fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_k_max() -> usize {
    crate::inversion::DEFAULT_K_MAX
}
fn default_delta() -> f64 {
    crate::inversion::DEFAULT_DELTA
}
fn default_lr() -> f64 {
    crate::inversion::DEFAULT_LR
}
fn default_cfg_scale() -> f64 {
    DEFAULT_CFG_SCALE
}
fn default_sharing() -> SharingMode {
    SharingMode::PStar
}
fn default_train_steps() -> usize {
    DEFAULT_TRAIN_STEPS
}
fn default_beta_start() -> f64 {
    DEFAULT_BETA_START
}
fn default_beta_end() -> f64 {
    DEFAULT_BETA_END
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_k_max")]
    pub opt_steps: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_cfg_scale")]
    pub cfg_scale: f64,
    #[serde(default = "default_sharing")]
    pub sharing_mode: SharingMode,
    #[serde(default)]
    pub mask_override: MaskOverride,
    #[serde(default)]
    pub residual_norm: ResidualNorm,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exec_mode: ExecMode,
    #[serde(default = "default_train_steps")]
    pub num_train_steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: DEFAULT_STEPS,
            opt_steps: crate::inversion::DEFAULT_K_MAX,
            delta: crate::inversion::DEFAULT_DELTA,
            lr: crate::inversion::DEFAULT_LR,
            cfg_scale: DEFAULT_CFG_SCALE,
            sharing_mode: SharingMode::PStar,
            mask_override: MaskOverride::None,
            residual_norm: ResidualNorm::Mean,
            precision: Precision::F64,
            seed: 0,
            exec_mode: ExecMode::default(),
            num_train_steps: DEFAULT_TRAIN_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            weights: None,
            manifest: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        Ok(cfg)
    }

    pub fn todinv_config(&self) -> TodinvConfig {
        TodinvConfig {
            k_max: self.opt_steps,
            delta: self.delta,
            lr: self.lr,
            mask_override: self.mask_override,
            sharing_mode: self.sharing_mode,
            residual_norm: self.residual_norm,
            precision: self.precision,
            ..TodinvConfig::default()
        }
    }

    pub fn schedule(&self) -> Result<SchedulerParams> {
        build_schedule(self.num_train_steps, self.beta_start, self.beta_end, self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cfg_scale <= 0.0 || !self.cfg_scale.is_finite() {
            return Err(Error::Config(format!(
                "cfg_scale must be positive and finite, got {}",
                self.cfg_scale
            )));
        }
        self.todinv_config().validate()?;
        self.schedule().map(|_| ())
    }
}

/// The record persisted as `run.json` in every output directory: the input
/// config plus the derived schedule arrays, so a reader can verify
/// compatibility without recomputing.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub inference_timesteps: Vec<usize>,
    pub alpha_bar: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ResolvedRun {
    pub fn new(config: RunConfig) -> Result<Self> {
        let sched = config.schedule()?;
        Ok(ResolvedRun {
            config,
            inference_timesteps: sched.inference_timesteps.clone(),
            alpha_bar: sched.alpha_bar.clone(),
            phi: sched.phi.clone(),
            psi: sched.psi.clone(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("run.json"), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("run.json");
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
    }

    /// Human-readable description of schedule differences, empty when
    /// compatible. Used to refuse mixing artifacts across schedules.
    pub fn schedule_diff(&self, other: &ResolvedRun) -> String {
        let mut diffs = Vec::new();
        if self.inference_timesteps != other.inference_timesteps {
            diffs.push(format!(
                "timesteps: {:?} vs {:?}",
                self.inference_timesteps, other.inference_timesteps
            ));
        }
        if self.config.num_train_steps != other.config.num_train_steps {
            diffs.push(format!(
                "train steps: {} vs {}",
                self.config.num_train_steps, other.config.num_train_steps
            ));
        }
        if self.config.beta_start != other.config.beta_start
            || self.config.beta_end != other.config.beta_end
        {
            diffs.push(format!(
                "beta range: [{}, {}] vs [{}, {}]",
                self.config.beta_start,
                self.config.beta_end,
                other.config.beta_start,
                other.config.beta_end
            ));
        }
        diffs.join("; ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn defaults_match_contract() {
        let c = RunConfig::default();
        assert_eq!(c.steps, 50);
        assert_eq!(c.opt_steps, 10);
        assert_eq!(c.delta, 5e-6);
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.cfg_scale, 7.5);
        assert_eq!(c.sharing_mode, SharingMode::PStar);
        c.validate().unwrap();
    }

    #[test]
    fn empty_json_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn resolved_round_trip() {
        let dir = tempdir().unwrap();
        let run = ResolvedRun::new(RunConfig {
            steps: 4,
            ..RunConfig::default()
        })
        .unwrap();
        run.write(dir.path()).unwrap();
        let back = ResolvedRun::read(dir.path()).unwrap();
        assert_eq!(back, run);
        assert!(run.schedule_diff(&back).is_empty());
        let other = ResolvedRun::new(RunConfig::default()).unwrap();
        assert!(run.schedule_diff(&other).contains("timesteps"));
    }

    #[test]
    fn bad_values_rejected() {
        let c = RunConfig {
            cfg_scale: -1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            steps: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
