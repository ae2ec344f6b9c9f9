//! Command-line entry points: toy-model training, inversion, reconstruction,
//! editing, evaluation, ablations, and toy-fixture generation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use todinv::config::{ResolvedRun, RunConfig};
use todinv::denoiser::{train_toy, CfgConfig, NoisePredictor, ToyDenoiser};
use todinv::editing::{edit, reconstruct, render_rgb, HookRegistry};
use todinv::embedding::{init_grid, MaskOverride, SharingMode};
use todinv::error::Error;
use todinv::evaluation::{
    load_manifest, run_ablation, run_task, sharing_mode_variants, write_report, BenchmarkManifest,
    EvalTask, MetricReport, VariantSpec, MANIFEST_VERSION,
};
use todinv::exec::ExecMode;
use todinv::inversion::todinv_invert_grid;
use todinv::latent::Precision;
use todinv::prompt::{component_seed, embed_prompt};
use todinv::toyset::{shapes_dataset, toy_benchmark};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "todinv", about = "Task-oriented DDIM inversion toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inference steps T.
    #[arg(long)]
    steps: Option<usize>,
    /// Optimization steps per timestep K.
    #[arg(long)]
    opt_steps: Option<usize>,
    /// Early-stop residual threshold.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    cfg_scale: Option<f64>,
    /// p, p_t, p_plus, or p_star.
    #[arg(long)]
    sharing_mode: Option<String>,
    /// none, no_topo, or reverse.
    #[arg(long)]
    mask_override: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// f32 or f64.
    #[arg(long)]
    precision: Option<String>,
    /// sequential or parallel.
    #[arg(long)]
    exec: Option<String>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output directory; defaults under $TODINV_OUT_ROOT or ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy denoiser on generated shape data.
    TrainToy {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
    },
    /// Invert a source latent, optimizing the prompt grid per timestep.
    Invert {
        #[command(flatten)]
        common: CommonFlags,
        /// Latent file to invert.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        source_prompt: String,
        /// Edit type label used for cell masking.
        #[arg(long, default_value = "change background")]
        edit_type: String,
        #[arg(long, default_value_t = false)]
        multi_edit: bool,
    },
    /// Sample back from a persisted inversion with its optimized grid.
    Reconstruct {
        #[command(flatten)]
        common: CommonFlags,
        /// Directory produced by `invert`.
        #[arg(long)]
        inversion: PathBuf,
    },
    /// Apply a target prompt to a persisted inversion.
    Edit {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        inversion: PathBuf,
        #[arg(long)]
        target_prompt: String,
        #[arg(long, default_value = "identity")]
        hook: String,
    },
    /// Run the full pipeline over a benchmark manifest and emit reports.
    Eval {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Sweep sharing modes (or a variants file) across seeds.
    Ablate {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        manifest: PathBuf,
        /// JSON list of variant specs; defaults to the sharing-mode sweep.
        #[arg(long)]
        variants: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Write the deterministic 12-task toy benchmark as manifest + latents.
    GenToy {
        #[command(flatten)]
        common: CommonFlags,
    },
}

fn out_root() -> PathBuf {
    std::env::var_os("TODINV_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn resolve_config(common: &CommonFlags) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = common.steps {
        cfg.steps = v;
    }
    if let Some(v) = common.opt_steps {
        cfg.opt_steps = v;
    }
    if let Some(v) = common.delta {
        cfg.delta = v;
    }
    if let Some(v) = common.lr {
        cfg.lr = v;
    }
    if let Some(v) = common.cfg_scale {
        cfg.cfg_scale = v;
    }
    if let Some(v) = &common.sharing_mode {
        cfg.sharing_mode = SharingMode::parse(v)?;
    }
    if let Some(v) = &common.mask_override {
        cfg.mask_override = match v.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => MaskOverride::None,
            "no_topo" | "notopo" => MaskOverride::NoTopo,
            "reverse" => MaskOverride::Reverse,
            other => {
                return Err(Error::Config(format!(
                    "unknown mask override {:?}; expected none, no_topo, or reverse",
                    other
                )))
            }
        };
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.precision {
        cfg.precision = match v.to_ascii_lowercase().as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => {
                return Err(Error::Config(format!(
                    "unknown precision {:?}; expected f32 or f64",
                    other
                )))
            }
        };
    }
    if let Some(v) = &common.exec {
        cfg.exec_mode = ExecMode::parse(v)
            .ok_or_else(|| Error::Config(format!("unknown exec mode {:?}", v)))?;
    }
    if let Some(v) = &common.weights {
        cfg.weights = Some(v.clone());
    }
    if let Some(v) = &common.out {
        cfg.output_dir = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, default_name: &str) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| out_root().join(default_name))
}

fn load_model(cfg: &RunConfig) -> Result<ToyDenoiser, Error> {
    let path = cfg
        .weights
        .as_ref()
        .ok_or_else(|| Error::Config("missing --weights (train with `todinv train-toy`)".into()))?;
    if !path.exists() {
        return Err(Error::Config(format!(
            "weights file {} does not exist",
            path.display()
        )));
    }
    todinv::io::read_weights(path)
}

fn cfg_config(cfg: &RunConfig, model: &ToyDenoiser) -> CfgConfig {
    let (tokens, dim) = model.embedding_shape();
    CfgConfig::new(cfg.cfg_scale, embed_prompt("", tokens, dim))
}

fn check_schedule(run: &ResolvedRun, stored: &ResolvedRun) -> Result<(), Error> {
    let diff = stored.schedule_diff(run);
    if !diff.is_empty() {
        return Err(Error::ScheduleMismatch(diff));
    }
    Ok(())
}

fn cmd_train_toy(common: &CommonFlags, samples: usize, epochs: usize) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let dir = out_dir(&cfg, "train-toy");
    std::fs::create_dir_all(&dir)?;
    ResolvedRun::new(cfg.clone())?.write(&dir)?;

    let data = shapes_dataset(samples, component_seed(cfg.seed, "toy-data"));
    let (model, report) = train_toy(&data, epochs, cfg.seed)?;

    todinv::io::write_weights(&dir.join("weights.bin"), &model)?;
    let mut log = String::from("epoch\tloss\n");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{}\t{:.8e}\n", i, l));
    }
    log.push_str(&format!(
        "# holdout initial {:.8e} final {:.8e}\n",
        report.holdout_initial, report.holdout_final
    ));
    std::fs::write(dir.join("train-loss.tsv"), log)?;
    println!(
        "trained {} epochs; holdout loss {:.4e} -> {:.4e}; weights at {}",
        epochs,
        report.holdout_initial,
        report.holdout_final,
        dir.join("weights.bin").display()
    );
    Ok(())
}

fn cmd_invert(
    common: &CommonFlags,
    image: &Path,
    source_prompt: &str,
    edit_type: &str,
    multi_edit: bool,
) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let model = load_model(&cfg)?;
    let params = cfg.schedule()?;
    let z0 = todinv::io::read_latent(image)?;
    let dir = out_dir(&cfg, "invert");
    std::fs::create_dir_all(&dir)?;
    ResolvedRun::new(cfg.clone())?.write(&dir)?;

    let mut inv_cfg = cfg.todinv_config();
    inv_cfg.edit_class = todinv::embedding::classify_edit(edit_type, multi_edit)?;
    let (tokens, dim) = model.embedding_shape();
    let source = embed_prompt(source_prompt, tokens, dim);
    let grid = init_grid(&source, params.num_inference_steps(), inv_cfg.sharing_mode)?;
    let guidance = cfg_config(&cfg, &model);
    let result = todinv_invert_grid(&z0, grid, &inv_cfg, &params, &model, &guidance)?;

    todinv::io::write_latent(&dir.join("z_terminal.lat"), &result.z_terminal)?;
    todinv::io::write_grid(&dir.join("grid.bin"), &result.grid)?;
    todinv::io::write_trajectory(&dir.join("trajectory.bin"), &result.trajectory)?;
    todinv::io::write_trace(
        &dir.join("residual-trace.tsv"),
        &result.initial_residual,
        &result.residual_trace,
    )?;
    std::fs::write(dir.join("source-prompt.txt"), source_prompt)?;
    println!(
        "inverted {}: mean residual {:.4e} -> {:.4e}, {} optimizer steps, artifacts in {}",
        image.display(),
        result.mean_initial_residual(),
        result.mean_final_residual(),
        result.steps_used.iter().sum::<usize>(),
        dir.display()
    );
    Ok(())
}

fn load_inversion(
    dir: &Path,
    cfg: &RunConfig,
) -> Result<(todinv::latent::Latent, todinv::embedding::PromptGrid, ResolvedRun), Error> {
    let stored = ResolvedRun::read(dir)?;
    check_schedule(&ResolvedRun::new(cfg.clone())?, &stored)?;
    let z = todinv::io::read_latent(&dir.join("z_terminal.lat"))?;
    let grid = todinv::io::read_grid(&dir.join("grid.bin"))?;
    Ok((z, grid, stored))
}

fn cmd_reconstruct(common: &CommonFlags, inversion: &Path) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let model = load_model(&cfg)?;
    let params = cfg.schedule()?;
    let (z_terminal, grid, _) = load_inversion(inversion, &cfg)?;
    let dir = out_dir(&cfg, "reconstruct");
    std::fs::create_dir_all(&dir)?;
    ResolvedRun::new(cfg.clone())?.write(&dir)?;

    let guidance = cfg_config(&cfg, &model);
    let recon = reconstruct(&z_terminal, &grid, &params, &model, &guidance, cfg.precision)?;
    todinv::io::write_latent(&dir.join("reconstruction.lat"), &recon)?;
    render_rgb(&recon)
        .save(dir.join("reconstruction.png"))
        .map_err(|e| Error::Config(format!("png write failed: {}", e)))?;
    println!("reconstruction written to {}", dir.display());
    Ok(())
}

fn cmd_edit(
    common: &CommonFlags,
    inversion: &Path,
    target_prompt: &str,
    hook_name: &str,
) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let model = load_model(&cfg)?;
    let params = cfg.schedule()?;
    let (z_terminal, grid, _) = load_inversion(inversion, &cfg)?;
    let registry = HookRegistry::default();
    let hook = registry.get(hook_name)?;
    let dir = out_dir(&cfg, "edit");
    std::fs::create_dir_all(&dir)?;
    ResolvedRun::new(cfg.clone())?.write(&dir)?;

    let guidance = cfg_config(&cfg, &model);
    let recon = reconstruct(&z_terminal, &grid, &params, &model, &guidance, cfg.precision)?;
    let (edited, _) = edit(
        &z_terminal,
        &grid,
        target_prompt,
        hook.as_ref(),
        &params,
        &model,
        &guidance,
        cfg.precision,
    )?;
    todinv::io::write_latent(&dir.join("reconstruction.lat"), &recon)?;
    todinv::io::write_latent(&dir.join("edited.lat"), &edited)?;
    for (name, latent) in [("reconstruction", &recon), ("edited", &edited)] {
        render_rgb(latent)
            .save(dir.join(format!("{}.png", name)))
            .map_err(|e| Error::Config(format!("png write failed: {}", e)))?;
    }
    std::fs::write(dir.join("target-prompt.txt"), target_prompt)?;
    println!("edit ({} hook) written to {}", hook_name, dir.display());
    Ok(())
}

fn cmd_eval(common: &CommonFlags, manifest_path: &Path) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let model = load_model(&cfg)?;
    let (manifest, tasks) = load_manifest(manifest_path)?;
    let dir = out_dir(&cfg, "eval");
    std::fs::create_dir_all(&dir)?;
    ResolvedRun::new(cfg.clone())?.write(&dir)?;

    let rows: Vec<Result<_, Error>> = todinv::exec::map_items(cfg.exec_mode, &tasks, |task| {
        run_task(task, &task.latent, &cfg, &model)
            .map(|o| o.row)
            .map_err(|e| Error::Manifest {
                entry: task.task.id.clone(),
                reason: e.to_string(),
            })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let value_range = manifest.value_range;
    let window = tasks
        .first()
        .map(|t| todinv::evaluation::ssim_window_for(t.latent.shape.1, t.latent.shape.2))
        .unwrap_or(todinv::metrics::SSIM_WINDOW);
    let report = MetricReport::from_rows_with(rows, value_range, window);
    report.verify_aggregates()?;
    write_report(&dir, "report", &report)?;
    println!(
        "evaluated {} tasks: mean PSNR {:.2} dB, mean residual {:.4e}; report in {}",
        report.overall.count,
        report.overall.mean_psnr_db,
        report.overall.mean_final_residual,
        dir.display()
    );
    Ok(())
}

fn cmd_ablate(
    common: &CommonFlags,
    manifest_path: &Path,
    variants_path: Option<&Path>,
    seeds: &[u64],
) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let model = load_model(&cfg)?;
    let (manifest, tasks) = load_manifest(manifest_path)?;
    let variants: Vec<VariantSpec> = match variants_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {}", p.display(), e)))?
        }
        None => sharing_mode_variants(),
    };
    let dir = out_dir(&cfg, "ablate");
    std::fs::create_dir_all(&dir)?;
    ResolvedRun::new(cfg.clone())?.write(&dir)?;

    let reports = run_ablation(&tasks, &variants, seeds, &cfg, &model, manifest.value_range)?;
    for vr in &reports {
        write_report(&dir, &format!("{}-seed{}", vr.variant, vr.seed), &vr.report)?;
        println!(
            "{} seed {}: mean residual {:.4e}, mean PSNR {:.2} dB",
            vr.variant, vr.seed, vr.report.overall.mean_final_residual, vr.report.overall.mean_psnr_db
        );
    }
    println!("{} reports written to {}", reports.len(), dir.display());
    Ok(())
}

fn cmd_gen_toy(common: &CommonFlags) -> Result<(), Error> {
    let cfg = resolve_config(common)?;
    let dir = out_dir(&cfg, "toy");
    std::fs::create_dir_all(&dir)?;

    let tasks = toy_benchmark(cfg.seed);
    let mut entries = Vec::new();
    for t in &tasks {
        let ev: EvalTask = t.into();
        todinv::io::write_latent(&dir.join(&ev.task.image_ref), &ev.latent)?;
        todinv::io::write_latent(
            &dir.join(ev.task.mask_ref.as_ref().unwrap()),
            ev.mask.as_ref().unwrap(),
        )?;
        entries.push(ev.task);
    }
    let manifest = BenchmarkManifest {
        version: MANIFEST_VERSION.to_string(),
        value_range: [0.0, 1.0],
        entries,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("{} toy tasks written to {}", tasks.len(), dir.display());
    Ok(())
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::TrainToy {
            common,
            samples,
            epochs,
        } => cmd_train_toy(&common, samples, epochs),
        Command::Invert {
            common,
            image,
            source_prompt,
            edit_type,
            multi_edit,
        } => cmd_invert(&common, &image, &source_prompt, &edit_type, multi_edit),
        Command::Reconstruct { common, inversion } => cmd_reconstruct(&common, &inversion),
        Command::Edit {
            common,
            inversion,
            target_prompt,
            hook,
        } => cmd_edit(&common, &inversion, &target_prompt, &hook),
        Command::Eval { common, manifest } => cmd_eval(&common, &manifest),
        Command::Ablate {
            common,
            manifest,
            variants,
            seeds,
        } => cmd_ablate(&common, &manifest, variants.as_deref(), &seeds),
        Command::GenToy { common } => cmd_gen_toy(&common),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Numeric { .. }) => {
            eprintln!("error: {}", e);
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
