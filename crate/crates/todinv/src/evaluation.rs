//! Benchmark manifest loading, the end-to-end per-task pipeline, masked
//! background-preservation reports, and the ablation harness.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::denoiser::{CfgConfig, NoisePredictor};
use crate::editing::{edit, reconstruct, EditTask, IdentityHook};
use crate::embedding::{EditClass, MaskOverride, SharingMode, EDIT_TYPE_LABELS};
use crate::error::{Error, Result};
use crate::exec::map_items;
use crate::inversion::{naive_ddim_invert, todinv_invert_grid, InversionResult};
use crate::latent::Latent;
use crate::metrics::{mse, psnr, ssim_with, SSIM_SIGMA, SSIM_WINDOW};
use crate::prompt::component_seed;
use crate::toyset::ToyTask;

pub const MANIFEST_VERSION: &str = "1";
pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub version: String,
    /// Declared pixel value range, used as PSNR's MAX.
    pub value_range: [f64; 2],
    pub entries: Vec<EditTask>,
}

/// A manifest entry with its referenced data resolved into memory.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub task: EditTask,
    pub latent: Latent,
    pub mask: Option<Latent>,
}

impl EvalTask {
    pub fn edit_class(&self) -> EditClass {
        // validated at construction
        self.task.edit_class().expect("validated edit type")
    }
}

fn manifest_err(entry: &str, reason: impl Into<String>) -> Error {
    Error::Manifest {
        entry: entry.to_string(),
        reason: reason.into(),
    }
}

/// Parses a manifest file and eagerly validates every entry: the edit type
/// must classify, and referenced latent and mask files must exist and agree
/// on spatial shape.
pub fn load_manifest(path: &Path) -> Result<(BenchmarkManifest, Vec<EvalTask>)> {
    let text = std::fs::read_to_string(path)?;
    let manifest: BenchmarkManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("unsupported manifest version {:?}", manifest.version),
        });
    }
    if manifest.value_range[1] <= manifest.value_range[0] {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: "value_range must be increasing".into(),
        });
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tasks = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        entry
            .edit_class()
            .map_err(|e| manifest_err(&entry.id, e.to_string()))?;
        let latent = crate::io::read_latent(&base.join(&entry.image_ref))
            .map_err(|e| manifest_err(&entry.id, format!("image: {}", e)))?;
        let mask = match &entry.mask_ref {
            Some(m) => {
                let mask = crate::io::read_latent(&base.join(m))
                    .map_err(|e| manifest_err(&entry.id, format!("mask: {}", e)))?;
                if (mask.shape.1, mask.shape.2) != (latent.shape.1, latent.shape.2) {
                    return Err(manifest_err(
                        &entry.id,
                        format!(
                            "mask shape {:?} does not match image shape {:?}",
                            mask.shape, latent.shape
                        ),
                    ));
                }
                Some(mask)
            }
            None => None,
        };
        tasks.push(EvalTask {
            task: entry.clone(),
            latent,
            mask,
        });
    }
    Ok((manifest, tasks))
}

pub fn manifest_valid_types() -> String {
    EDIT_TYPE_LABELS
        .iter()
        .map(|l| format!("{:?}", l))
        .collect::<Vec<_>>()
        .join(", ")
}

impl From<&ToyTask> for EvalTask {
    fn from(t: &ToyTask) -> Self {
        EvalTask {
            task: EditTask {
                id: t.id.clone(),
                image_ref: format!("{}.lat", t.id),
                source_prompt: t.source_prompt.clone(),
                target_prompt: t.target_prompt.clone(),
                edit_type: t.edit_type.clone(),
                multi_edit: t.multi_edit,
                mask_ref: Some(format!("{}.mask.lat", t.id)),
            },
            latent: t.latent.clone(),
            mask: Some(t.mask.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub edit_class: EditClass,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
    pub mean_initial_residual: f64,
    pub mean_final_residual: f64,
    pub max_final_residual: f64,
    pub steps_used_total: usize,
    /// Placeholder columns kept for structural parity with external reports;
    /// always absent at desk scale.
    pub clip_similarity: Option<f64>,
    pub lpips: Option<f64>,
    pub structure_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub count: usize,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_mse: f64,
    pub mean_final_residual: f64,
}

fn aggregate(rows: &[&MetricRow]) -> Aggregate {
    let n = rows.len() as f64;
    Aggregate {
        count: rows.len(),
        mean_psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        mean_mse: rows.iter().map(|r| r.mse).sum::<f64>() / n,
        mean_final_residual: rows.iter().map(|r| r.mean_final_residual).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub version: String,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub value_range: [f64; 2],
    pub rows: Vec<MetricRow>,
    pub per_class: BTreeMap<EditClass, Aggregate>,
    pub overall: Aggregate,
}

/// Largest usable SSIM window for the resolution: the default 7 when the
/// image comfortably fits it, otherwise 3 so masked windows still exist on
/// small latents.
pub fn ssim_window_for(h: usize, w: usize) -> usize {
    if h.min(w) >= 2 * SSIM_WINDOW {
        SSIM_WINDOW
    } else {
        3
    }
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>, value_range: [f64; 2]) -> Self {
        Self::from_rows_with(rows, value_range, SSIM_WINDOW)
    }

    pub fn from_rows_with(rows: Vec<MetricRow>, value_range: [f64; 2], ssim_window: usize) -> Self {
        let mut per_class = BTreeMap::new();
        for class in [
            EditClass::StructureEdit,
            EditClass::AppearanceEdit,
            EditClass::GlobalEdit,
        ] {
            let subset: Vec<&MetricRow> =
                rows.iter().filter(|r| r.edit_class == class).collect();
            if !subset.is_empty() {
                per_class.insert(class, aggregate(&subset));
            }
        }
        let overall = aggregate(&rows.iter().collect::<Vec<_>>());
        MetricReport {
            version: REPORT_VERSION.to_string(),
            ssim_window,
            ssim_sigma: SSIM_SIGMA,
            value_range,
            rows,
            per_class,
            overall,
        }
    }

    /// Recomputes the aggregates from the rows and checks they match what the
    /// report stores. Used by report-integrity tests and `eval --check`.
    pub fn verify_aggregates(&self) -> Result<()> {
        let recomputed =
            MetricReport::from_rows_with(self.rows.clone(), self.value_range, self.ssim_window);
        if recomputed.overall != self.overall || recomputed.per_class != self.per_class {
            return Err(Error::Config(
                "report aggregates do not match rows".into(),
            ));
        }
        Ok(())
    }
}

/// Pipeline artifacts for one task: inversion, reconstruction, edit, and the
/// naive-inversion baseline for comparison columns.
pub struct TaskOutcome {
    pub row: MetricRow,
    pub inversion: InversionResult,
    pub reconstruction: Latent,
    pub edited: Latent,
    pub naive_mean_residual: f64,
    pub naive_recon_mse: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.6}", x),
        None => "not computed".to_string(),
    }
}

/// Runs invert + reconstruct + edit for a single task and computes
/// preserved-region metrics of the reconstruction against the source.
pub fn run_task(
    task: &EvalTask,
    z0: &Latent,
    config: &RunConfig,
    handle: &dyn NoisePredictor,
) -> Result<TaskOutcome> {
    let params = config.schedule()?;
    let (tokens, dim) = handle.embedding_shape();
    let uncond = crate::prompt::embed_prompt("", tokens, dim);
    let cfg = CfgConfig::new(config.cfg_scale, uncond);
    let mut inv_cfg = config.todinv_config();
    inv_cfg.edit_class = task.edit_class();

    let source = crate::prompt::embed_prompt(&task.task.source_prompt, tokens, dim);
    let grid = crate::embedding::init_grid(&source, params.num_inference_steps(), inv_cfg.sharing_mode)?;
    let inversion = todinv_invert_grid(z0, grid.clone(), &inv_cfg, &params, handle, &cfg)?;
    let naive = naive_ddim_invert(z0, &grid, &inv_cfg, &params, handle, &cfg)?;

    let reconstruction = reconstruct(
        &inversion.z_terminal,
        &inversion.grid,
        &params,
        handle,
        &cfg,
        inv_cfg.precision,
    )?;
    let naive_recon = reconstruct(
        &naive.z_terminal,
        &naive.grid,
        &params,
        handle,
        &cfg,
        inv_cfg.precision,
    )?;
    let (edited, _) = edit(
        &inversion.z_terminal,
        &inversion.grid,
        &task.task.target_prompt,
        &IdentityHook,
        &params,
        handle,
        &cfg,
        inv_cfg.precision,
    )?;

    let mask = task.mask.as_ref();
    let max_value = 1.0;
    let row = MetricRow {
        id: task.task.id.clone(),
        edit_class: task.edit_class(),
        psnr_db: psnr(z0, &reconstruction, mask, max_value)?,
        ssim: ssim_with(
            z0,
            &reconstruction,
            mask,
            max_value,
            ssim_window_for(z0.shape.1, z0.shape.2),
            SSIM_SIGMA,
        )?,
        mse: mse(z0, &reconstruction, mask)?,
        mean_initial_residual: inversion.mean_initial_residual(),
        mean_final_residual: inversion.mean_final_residual(),
        max_final_residual: inversion
            .final_residual
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max),
        steps_used_total: inversion.steps_used.iter().sum(),
        clip_similarity: None,
        lpips: None,
        structure_distance: None,
    };
    Ok(TaskOutcome {
        row,
        naive_mean_residual: naive.mean_final_residual(),
        naive_recon_mse: mse(z0, &naive_recon, mask)?,
        inversion,
        reconstruction,
        edited,
    })
}

/// Adds seed-dependent noise to a task latent so ablation seeds actually vary
/// the otherwise deterministic pipeline.
pub fn jitter_latent(latent: &Latent, seed: u64, task_id: &str, std: f64) -> Latent {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(component_seed(
        component_seed(seed, "ablation-jitter"),
        task_id,
    ));
    let mut out = latent.clone();
    for v in &mut out.data {
        // Box-Muller from two uniforms
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        *v += std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    #[serde(default)]
    pub sharing_mode: Option<SharingMode>,
    #[serde(default)]
    pub mask_override: Option<MaskOverride>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub opt_steps: Option<usize>,
}

impl VariantSpec {
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        if let Some(m) = self.sharing_mode {
            c.sharing_mode = m;
        }
        if let Some(m) = self.mask_override {
            c.mask_override = m;
        }
        if let Some(t) = self.steps {
            c.steps = t;
        }
        if let Some(k) = self.opt_steps {
            c.opt_steps = k;
        }
        c
    }
}

/// Standard sharing-mode sweep used by the ablation command.
pub fn sharing_mode_variants() -> Vec<VariantSpec> {
    [SharingMode::P, SharingMode::PT, SharingMode::PPlus, SharingMode::PStar]
        .into_iter()
        .map(|m| VariantSpec {
            name: m.as_str().to_string(),
            sharing_mode: Some(m),
            mask_override: None,
            steps: None,
            opt_steps: None,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: String,
    pub seed: u64,
    pub report: MetricReport,
}

/// Runs every (variant, seed) combination over the task list, tasks in
/// parallel under the chosen execution mode. Each seed perturbs the source
/// latents slightly so repeated seeds explore distinct inversion problems.
pub fn run_ablation(
    tasks: &[EvalTask],
    variants: &[VariantSpec],
    seeds: &[u64],
    base: &RunConfig,
    handle: &dyn NoisePredictor,
    value_range: [f64; 2],
) -> Result<Vec<VariantReport>> {
    for v in variants {
        v.apply(base).validate().map_err(|e| {
            Error::Config(format!("variant {:?}: {}", v.name, e))
        })?;
    }
    let mut reports = Vec::with_capacity(variants.len() * seeds.len());
    for variant in variants {
        let config = variant.apply(base);
        for &seed in seeds {
            let outcomes: Vec<Result<MetricRow>> = map_items(base.exec_mode, tasks, |task| {
                let z0 = jitter_latent(&task.latent, seed, &task.task.id, 0.005);
                run_task(task, &z0, &config, handle).map(|o| o.row)
            });
            let rows = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
            let window = tasks
                .first()
                .map(|t| ssim_window_for(t.latent.shape.1, t.latent.shape.2))
                .unwrap_or(SSIM_WINDOW);
            reports.push(VariantReport {
                variant: variant.name.clone(),
                seed,
                report: MetricReport::from_rows_with(rows, value_range, window),
            });
        }
    }
    Ok(reports)
}

/// Tab-separated table of the per-task rows followed by the aggregates.
pub fn report_csv(report: &MetricReport) -> String {
    let mut out = format!(
        "# report v{} ssim_window={} ssim_sigma={} value_range=[{},{}]\n",
        report.version,
        report.ssim_window,
        report.ssim_sigma,
        report.value_range[0],
        report.value_range[1]
    );
    out.push_str(
        "id\tedit_class\tpsnr_db\tssim\tmse\tmean_initial_residual\tmean_final_residual\tmax_final_residual\tsteps_used\tclip_similarity\tlpips\tstructure_distance\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{}\t{:?}\t{:.6}\t{:.6}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\t{}\t{}\t{}\n",
            r.id,
            r.edit_class,
            r.psnr_db,
            r.ssim,
            r.mse,
            r.mean_initial_residual,
            r.mean_final_residual,
            r.max_final_residual,
            r.steps_used_total,
            fmt_opt(r.clip_similarity),
            fmt_opt(r.lpips),
            fmt_opt(r.structure_distance),
        ));
    }
    for (class, agg) in &report.per_class {
        out.push_str(&format!(
            "mean[{:?}]\t-\t{:.6}\t{:.6}\t{:.6e}\t-\t{:.6e}\t-\t-\t-\t-\t-\n",
            class, agg.mean_psnr_db, agg.mean_ssim, agg.mean_mse, agg.mean_final_residual
        ));
    }
    out.push_str(&format!(
        "mean[overall]\t-\t{:.6}\t{:.6}\t{:.6e}\t-\t{:.6e}\t-\t-\t-\t-\t-\n",
        report.overall.mean_psnr_db,
        report.overall.mean_ssim,
        report.overall.mean_mse,
        report.overall.mean_final_residual
    ));
    out
}

pub fn write_report(dir: &Path, name: &str, report: &MetricReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join(format!("{}.json", name)),
        serde_json::to_string_pretty(report)?,
    )?;
    std::fs::write(dir.join(format!("{}.tsv", name)), report_csv(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyset::toy_benchmark;
    use tempfile::tempdir;

    fn sample_rows() -> Vec<MetricRow> {
        vec![
            MetricRow {
                id: "a".into(),
                edit_class: EditClass::StructureEdit,
                psnr_db: 30.0,
                ssim: 0.9,
                mse: 1e-3,
                mean_initial_residual: 1e-4,
                mean_final_residual: 5e-5,
                max_final_residual: 9e-5,
                steps_used_total: 40,
                clip_similarity: None,
                lpips: None,
                structure_distance: None,
            },
            MetricRow {
                id: "b".into(),
                edit_class: EditClass::GlobalEdit,
                psnr_db: 20.0,
                ssim: 0.7,
                mse: 1e-2,
                mean_initial_residual: 2e-4,
                mean_final_residual: 6e-5,
                max_final_residual: 1e-4,
                steps_used_total: 50,
                clip_similarity: None,
                lpips: None,
                structure_distance: None,
            },
        ]
    }

    #[test]
    fn aggregates_recompute() {
        let report = MetricReport::from_rows(sample_rows(), [0.0, 1.0]);
        assert_eq!(report.overall.count, 2);
        assert!((report.overall.mean_psnr_db - 25.0).abs() < 1e-12);
        report.verify_aggregates().unwrap();

        let mut tampered = report.clone();
        tampered.overall.mean_psnr_db += 1.0;
        assert!(tampered.verify_aggregates().is_err());
    }

    #[test]
    fn psnr_recomputable_from_mse() {
        let report = MetricReport::from_rows(sample_rows(), [0.0, 1.0]);
        for r in &report.rows {
            if r.mse > 0.0 {
                // rows above were constructed with matching pairs
                let recomputed = 10.0 * (1.0 / r.mse).log10();
                assert!((recomputed - r.psnr_db).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempdir().unwrap();
        let tasks = toy_benchmark(7);
        let mut entries = Vec::new();
        for t in &tasks[..3] {
            let ev: EvalTask = t.into();
            crate::io::write_latent(&dir.path().join(&ev.task.image_ref), &ev.latent).unwrap();
            crate::io::write_latent(
                &dir.path().join(ev.task.mask_ref.as_ref().unwrap()),
                ev.mask.as_ref().unwrap(),
            )
            .unwrap();
            entries.push(ev.task);
        }
        let manifest = BenchmarkManifest {
            version: MANIFEST_VERSION.into(),
            value_range: [0.0, 1.0],
            entries,
        };
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        let (back, loaded) = load_manifest(&mpath).unwrap();
        assert_eq!(back.entries.len(), 3);
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded[0].latent, tasks[0].latent);
    }

    #[test]
    fn manifest_rejects_unknown_edit_type() {
        let dir = tempdir().unwrap();
        let manifest = serde_json::json!({
            "version": "1",
            "value_range": [0.0, 1.0],
            "entries": [{
                "id": "bad1",
                "image": "x.lat",
                "source_prompt": "a",
                "target_prompt": "b",
                "edit_type": "teleport"
            }]
        });
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, manifest.to_string()).unwrap();
        let err = load_manifest(&mpath).unwrap_err().to_string();
        assert!(err.contains("bad1"), "{}", err);
        assert!(err.contains("change color"), "{}", err);
    }

    #[test]
    fn manifest_rejects_missing_mask() {
        let dir = tempdir().unwrap();
        let task = &toy_benchmark(7)[0];
        let ev: EvalTask = task.into();
        crate::io::write_latent(&dir.path().join(&ev.task.image_ref), &ev.latent).unwrap();
        let manifest = BenchmarkManifest {
            version: MANIFEST_VERSION.into(),
            value_range: [0.0, 1.0],
            entries: vec![ev.task.clone()],
        };
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        let err = load_manifest(&mpath).unwrap_err().to_string();
        assert!(err.contains("mask"), "{}", err);
    }

    #[test]
    fn jitter_is_deterministic_and_seed_dependent() {
        let l = Latent::zeros((1, 2, 2));
        let a = jitter_latent(&l, 1, "t01", 0.01);
        let b = jitter_latent(&l, 1, "t01", 0.01);
        let c = jitter_latent(&l, 2, "t01", 0.01);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data.iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn variant_apply_overrides() {
        let base = RunConfig::default();
        let v = VariantSpec {
            name: "few-step".into(),
            sharing_mode: Some(SharingMode::PT),
            mask_override: None,
            steps: Some(4),
            opt_steps: Some(25),
        };
        let c = v.apply(&base);
        assert_eq!(c.steps, 4);
        assert_eq!(c.opt_steps, 25);
        assert_eq!(c.sharing_mode, SharingMode::PT);
        assert_eq!(c.delta, base.delta);
    }

    #[test]
    fn csv_contains_placeholders_and_rows() {
        let report = MetricReport::from_rows(sample_rows(), [0.0, 1.0]);
        let csv = report_csv(&report);
        assert!(csv.contains("not computed"));
        assert!(csv.contains("mean[overall]"));
        assert!(csv.lines().count() >= 5);
    }
}
