//! End-to-end acceptance gate. Each numbered criterion prints one pass/fail
//! line; the test fails if any criterion fails or the suite runs too long.

use std::time::Instant;

use sha2::{Digest, Sha256};

use todinv::config::RunConfig;
use todinv::denoiser::{train_toy, CfgConfig, GaussianPredictor, NoisePredictor, ToyDenoiser};
use todinv::editing::{edit, reconstruct, IdentityHook};
use todinv::embedding::{
    init_grid, selection_mask, EditClass, LayerGroup, SharingMode, NUM_GROUPS,
};
use todinv::evaluation::{jitter_latent, run_task, EvalTask};
use todinv::exec::{map_items, ExecMode};
use todinv::inversion::{
    fixed_point_residual, naive_ddim_invert, residual_embedding_grad, todinv_invert_grid,
    ResidualNorm, TodinvConfig,
};
use todinv::latent::Latent;
use todinv::prompt::{component_seed, embed_prompt};
use todinv::scheduler::{
    build_schedule, ddim_inverse_step_scalar, ddim_step_scalar, SchedulerParams,
};
use todinv::toyset::{shapes_dataset, toy_benchmark};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXEC: ExecMode = ExecMode::Parallel;

fn schedule(t: usize) -> SchedulerParams {
    build_schedule(1000, 1e-4, 2e-2, t).unwrap()
}

fn trained_model() -> ToyDenoiser {
    let data = shapes_dataset(120, component_seed(0, "toy-data"));
    let (model, report) = train_toy(&data, 50, 0).unwrap();
    assert!(
        report.holdout_final < 0.5 * report.holdout_initial,
        "toy training did not converge: {} -> {}",
        report.holdout_initial,
        report.holdout_final
    );
    model
}

fn guidance(model: &dyn NoisePredictor, scale: f64) -> CfgConfig {
    let (tokens, dim) = model.embedding_shape();
    CfgConfig::new(scale, embed_prompt("", tokens, dim))
}

fn base_config(t: usize) -> RunConfig {
    RunConfig {
        steps: t,
        ..RunConfig::default()
    }
}

// 1. ddim_inverse_step(ddim_step(z)) == z for the same prediction, at f32
// and f64 precision.
fn criterion_round_trip(t_steps: usize) -> Result<String, String> {
    let params = schedule(t_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst32 = 0.0f64;
    let mut worst64 = 0.0f64;
    for _ in 0..1000 {
        let i = rng.gen_range(0..t_steps);
        let z: f64 = rng.gen_range(-2.0..2.0);
        let e: f64 = rng.gen_range(-2.0..2.0);
        let (phi, psi) = (params.phi[i], params.psi[i]);

        // the round trip cancels psi*e, so rounding error scales with the
        // largest operand in the cancellation, not with |z| alone
        let scale = z.abs().max((psi * e / phi).abs()).max(1e-3);

        let back64 = ddim_inverse_step_scalar(ddim_step_scalar(z, e, phi, psi), e, phi, psi);
        worst64 = worst64.max(((back64 - z) / scale).abs());

        let (zf, ef, phif, psif) = (z as f32, e as f32, phi as f32, psi as f32);
        let back32 = ddim_inverse_step_scalar(ddim_step_scalar(zf, ef, phif, psif), ef, phif, psif);
        worst32 = worst32.max(((back32 - zf) as f64 / scale).abs());
    }
    if worst64 >= 1e-12 {
        return Err(format!("f64 round-trip error {:.3e} >= 1e-12", worst64));
    }
    if worst32 >= 1e-6 {
        return Err(format!("f32 round-trip error {:.3e} >= 1e-6", worst32));
    }
    Ok(format!(
        "1000 triples, worst rel err f64 {:.1e}, f32 {:.1e}",
        worst64, worst32
    ))
}

// 2. Per-step inversion residuals with the closed-form optimal Gaussian
// predictor match the analytic recurrence.
fn criterion_gaussian_oracle(t_steps: usize) -> Result<String, String> {
    let params = schedule(t_steps);
    let sigma2 = 1.0;
    let oracle = GaussianPredictor::new(sigma2, &params, 8, 64);
    let cfg = guidance(&oracle, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data: Vec<f64> = (0..4 * 8 * 8)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    let z0 = Latent::from_data((4, 8, 8), data).unwrap();

    let config = TodinvConfig {
        sharing_mode: SharingMode::P,
        ..TodinvConfig::default()
    };
    let grid = init_grid(&embed_prompt("anything", 8, 64), t_steps, SharingMode::P).unwrap();
    let result = naive_ddim_invert(&z0, &grid, &config, &params, &oracle, &cfg)
        .map_err(|e| e.to_string())?;

    // independent closed form: the predictor is linear, so the latent scales
    // by m_i = (1 - psi_i c_i) / phi_i per inversion step and the residual is
    // ((psi_i c_i / phi_i)(m_i - 1) prod_{j>i} m_j)^2 * mean(z0^2)
    let mean_sq0 = z0.data.iter().map(|v| v * v).sum::<f64>() / z0.data.len() as f64;
    let mut worst = 0.0f64;
    let mut carry = 1.0; // prod of m_j for already-performed steps (j > i)
    for i in (0..t_steps).rev() {
        let c = oracle.coefficient(params.inference_timesteps[i]);
        let (phi, psi) = (params.phi[i], params.psi[i]);
        let m = (1.0 - psi * c) / phi;
        let analytic = ((psi * c / phi) * (m - 1.0) * carry).powi(2) * mean_sq0;
        carry *= m;
        let measured = result.initial_residual[i];
        let rel = (measured - analytic).abs() / analytic.abs().max(1e-12);
        worst = worst.max(rel);
    }
    if worst >= 1e-6 {
        return Err(format!("worst residual mismatch {:.3e} >= 1e-6", worst));
    }
    Ok(format!("T={}, worst rel mismatch {:.1e}", t_steps, worst))
}

// 3. Analytic embedding gradient of the fixed-point residual vs central
// finite differences, >= 20 random configurations per layer group.
fn criterion_gradient_check(model: &ToyDenoiser, t_steps: usize) -> Result<String, String> {
    let params = schedule(t_steps);
    let cfg = guidance(model, 7.5);
    let (tokens, dim) = model.embedding_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut checked = 0usize;

    for group in LayerGroup::ALL {
        for c in 0..20 {
            let t = rng.gen_range(0..t_steps);
            let mk = |rng: &mut ChaCha8Rng| {
                Latent::from_data(
                    (4, 8, 8),
                    (0..4 * 8 * 8).map(|_| rng.gen_range(-0.8..0.8)).collect(),
                )
                .unwrap()
            };
            let z_prev = mk(&mut rng);
            let z_t = mk(&mut rng);
            let prompt = format!("probe {} {}", c, rng.gen_range(0..1000));
            let mut grid = init_grid(
                &embed_prompt(&prompt, tokens, dim),
                t_steps,
                SharingMode::PStar,
            )
            .unwrap();

            let grads = residual_embedding_grad(
                &z_prev,
                &z_t,
                &grid,
                t,
                &params,
                model,
                &cfg,
                ResidualNorm::Mean,
            )
            .map_err(|e| e.to_string())?;
            let analytic = grads.group(group).data.clone();

            for _ in 0..3 {
                let idx = rng.gen_range(0..tokens * dim);
                let h = 1e-4;
                let orig = grid.cell(t, group).data[idx];
                let eval = |v: f64, grid: &mut todinv::embedding::PromptGrid| {
                    grid.cell_mut(t, group).data[idx] = v;
                    fixed_point_residual(
                        &z_prev,
                        &z_t,
                        grid,
                        t,
                        &params,
                        model,
                        &cfg,
                        ResidualNorm::Mean,
                    )
                    .map(|(_, r)| r)
                };
                let rp = eval(orig + h, &mut grid).map_err(|e| e.to_string())?;
                let rm = eval(orig - h, &mut grid).map_err(|e| e.to_string())?;
                grid.cell_mut(t, group).data[idx] = orig;
                let fd = (rp - rm) / (2.0 * h);
                let scale = fd.abs().max(analytic[idx].abs()).max(1e-7);
                let rel = (fd - analytic[idx]).abs() / scale;
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    if worst >= 1e-3 {
        return Err(format!("worst gradient rel err {:.3e} >= 1e-3", worst));
    }
    Ok(format!(
        "{} directional checks over {} configs/group, worst rel err {:.1e}",
        checked,
        20,
        worst
    ))
}

struct DominanceOutcome {
    residual_ok: usize,
    mse_better: usize,
    total: usize,
}

// 4. TODInv residual <= naive one-shot residual per task, reconstruction MSE
// strictly lower on all but at most one task.
fn dominance(model: &ToyDenoiser, t_steps: usize) -> Result<DominanceOutcome, String> {
    let tasks: Vec<EvalTask> = toy_benchmark(0).iter().map(EvalTask::from).collect();
    let config = base_config(t_steps);
    let outcomes: Vec<_> = map_items(EXEC, &tasks, |task| {
        run_task(task, &task.latent, &config, model)
    });
    let mut residual_ok = 0;
    let mut mse_better = 0;
    let total = tasks.len();
    for (task, outcome) in tasks.iter().zip(outcomes) {
        let o = outcome.map_err(|e| format!("{}: {}", task.task.id, e))?;
        if o.row.mean_final_residual <= o.naive_mean_residual {
            residual_ok += 1;
        }
        if o.row.mse < o.naive_recon_mse {
            mse_better += 1;
        }
    }
    Ok(DominanceOutcome {
        residual_ok,
        mse_better,
        total,
    })
}

fn criterion_dominance(model: &ToyDenoiser, t_steps: usize) -> Result<String, String> {
    let d = dominance(model, t_steps)?;
    if d.residual_ok != d.total {
        return Err(format!(
            "residual dominance on {}/{} tasks",
            d.residual_ok, d.total
        ));
    }
    if d.mse_better + 1 < d.total {
        return Err(format!(
            "reconstruction MSE lower on only {}/{} tasks",
            d.mse_better, d.total
        ));
    }
    Ok(format!(
        "residual {}/{}, recon MSE lower {}/{}",
        d.residual_ok, d.total, d.mse_better, d.total
    ))
}

// 5. Mean final residual ordering across sharing modes over 3 seeds x 12
// tasks: P_STAR <= P_T and P_PLUS <= P.
fn criterion_sharing_order(model: &ToyDenoiser, t_steps: usize) -> Result<String, String> {
    let tasks: Vec<EvalTask> = toy_benchmark(0).iter().map(EvalTask::from).collect();
    let params = schedule(t_steps);
    let cfg = guidance(model, 7.5);
    let (tokens, dim) = model.embedding_shape();
    let seeds = [0u64, 1, 2];

    let mut mode_mean = std::collections::BTreeMap::new();
    for mode in [
        SharingMode::P,
        SharingMode::PT,
        SharingMode::PPlus,
        SharingMode::PStar,
    ] {
        let jobs: Vec<(u64, &EvalTask)> = seeds
            .iter()
            .flat_map(|&s| tasks.iter().map(move |t| (s, t)))
            .collect();
        let residuals: Vec<_> = map_items(EXEC, &jobs, |(seed, task)| {
            let z0 = jitter_latent(&task.latent, *seed, &task.task.id, 0.005);
            let config = TodinvConfig {
                sharing_mode: mode,
                edit_class: task.edit_class(),
                record_trajectory: false,
                ..TodinvConfig::default()
            };
            let grid = init_grid(
                &embed_prompt(&task.task.source_prompt, tokens, dim),
                t_steps,
                mode,
            )
            .unwrap();
            todinv_invert_grid(&z0, grid, &config, &params, model, &cfg)
                .map(|r| r.mean_final_residual())
        });
        let mut sum = 0.0;
        for r in residuals {
            sum += r.map_err(|e| e.to_string())?;
        }
        mode_mean.insert(format!("{:?}", mode), sum / jobs.len() as f64);
    }

    let get = |m: &str| mode_mean[m];
    if get("PStar") > get("PT") {
        return Err(format!(
            "P_STAR {:.4e} > P_T {:.4e}",
            get("PStar"),
            get("PT")
        ));
    }
    if get("PPlus") > get("P") {
        return Err(format!(
            "P_PLUS {:.4e} > P {:.4e}",
            get("PPlus"),
            get("P")
        ));
    }
    Ok(format!(
        "P* {:.3e} <= P_T {:.3e}; P+ {:.3e} <= P {:.3e}",
        get("PStar"),
        get("PT"),
        get("PPlus"),
        get("P")
    ))
}

// 6. Cells outside the edit-class selection stay byte-identical to their
// initialization; GLOBAL selects every cell.
fn criterion_mask_confinement(model: &ToyDenoiser, t_steps: usize) -> Result<String, String> {
    let params = schedule(t_steps);
    let cfg = guidance(model, 7.5);
    let (tokens, dim) = model.embedding_shape();
    let task = &toy_benchmark(0)[0];
    let source = embed_prompt(&task.source_prompt, tokens, dim);

    for (class, frozen_group) in [
        (EditClass::AppearanceEdit, LayerGroup::Appearance),
        (EditClass::StructureEdit, LayerGroup::Structure),
    ] {
        let config = TodinvConfig {
            edit_class: class,
            record_trajectory: false,
            ..TodinvConfig::default()
        };
        let grid = init_grid(&source, t_steps, SharingMode::PStar).unwrap();
        let result = todinv_invert_grid(&task.latent, grid, &config, &params, model, &cfg)
            .map_err(|e| e.to_string())?;
        for t in 0..t_steps {
            let cell = result.grid.cell(t, frozen_group);
            let same = cell
                .data
                .iter()
                .zip(&source.data)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(format!(
                    "{:?}: {:?} cell at step {} was modified",
                    class, frozen_group, t
                ));
            }
        }
    }

    let global = selection_mask(EditClass::GlobalEdit, t_steps);
    for t in 0..t_steps {
        if global.groups_at(t).len() != NUM_GROUPS {
            return Err(format!("GLOBAL mask misses cells at step {}", t));
        }
    }
    Ok("0 violations, GLOBAL selects all cells".into())
}

// 7. target == source with the identity hook reproduces the reconstruction
// bit for bit on every task.
fn criterion_renewal_identity(model: &ToyDenoiser, t_steps: usize) -> Result<String, String> {
    let tasks: Vec<EvalTask> = toy_benchmark(0).iter().map(EvalTask::from).collect();
    let params = schedule(t_steps);
    let cfg = guidance(model, 7.5);
    let config = base_config(t_steps);

    let checks: Vec<_> = map_items(EXEC, &tasks, |task| -> Result<bool, String> {
        let mut inv_cfg = config.todinv_config();
        inv_cfg.edit_class = task.edit_class();
        let (tokens, dim) = model.embedding_shape();
        let grid = init_grid(
            &embed_prompt(&task.task.source_prompt, tokens, dim),
            t_steps,
            inv_cfg.sharing_mode,
        )
        .unwrap();
        let inv = todinv_invert_grid(&task.latent, grid, &inv_cfg, &params, model, &cfg)
            .map_err(|e| e.to_string())?;
        let recon = reconstruct(
            &inv.z_terminal,
            &inv.grid,
            &params,
            model,
            &cfg,
            inv_cfg.precision,
        )
        .map_err(|e| e.to_string())?;
        let (edited, _) = edit(
            &inv.z_terminal,
            &inv.grid,
            &task.task.source_prompt,
            &IdentityHook,
            &params,
            model,
            &cfg,
            inv_cfg.precision,
        )
        .map_err(|e| e.to_string())?;
        Ok(edited
            .data
            .iter()
            .zip(&recon.data)
            .all(|(a, b)| a.to_bits() == b.to_bits()))
    });
    for (task, check) in tasks.iter().zip(checks) {
        if !check.map_err(|e| format!("{}: {}", task.task.id, e))? {
            return Err(format!("{}: edit differs from reconstruction", task.task.id));
        }
    }
    Ok(format!("bit-identical on {}/{} tasks", tasks.len(), tasks.len()))
}

// 8. Final residual non-increasing in the optimization budget K on every task.
fn criterion_budget_monotonicity(model: &ToyDenoiser) -> Result<String, String> {
    let t_steps = 50;
    let tasks: Vec<EvalTask> = toy_benchmark(0).iter().map(EvalTask::from).collect();
    let params = schedule(t_steps);
    let cfg = guidance(model, 7.5);
    let (tokens, dim) = model.embedding_shape();
    let ks = [10usize, 25, 50];

    let jobs: Vec<(usize, &EvalTask)> = ks
        .iter()
        .flat_map(|&k| tasks.iter().map(move |t| (k, t)))
        .collect();
    let results: Vec<_> = map_items(EXEC, &jobs, |(k, task)| {
        let config = TodinvConfig {
            k_max: *k,
            edit_class: task.edit_class(),
            record_trajectory: false,
            ..TodinvConfig::default()
        };
        let grid = init_grid(
            &embed_prompt(&task.task.source_prompt, tokens, dim),
            t_steps,
            config.sharing_mode,
        )
        .unwrap();
        todinv_invert_grid(&task.latent, grid, &config, &params, model, &cfg)
            .map(|r| r.mean_final_residual())
    });
    let mut per_task = std::collections::BTreeMap::new();
    for ((k, task), result) in jobs.iter().zip(results) {
        let r = result.map_err(|e| format!("{}: {}", task.task.id, e))?;
        per_task
            .entry(task.task.id.clone())
            .or_insert_with(Vec::new)
            .push((*k, r));
    }
    for (id, mut rs) in per_task {
        rs.sort_by_key(|(k, _)| *k);
        for pair in rs.windows(2) {
            if pair[1].1 > pair[0].1 {
                return Err(format!(
                    "{}: residual increased from K={} ({:.4e}) to K={} ({:.4e})",
                    id, pair[0].0, pair[0].1, pair[1].0, pair[1].1
                ));
            }
        }
    }
    Ok(format!("non-increasing over K in {:?} on all tasks", ks))
}

// 9. T=4 few-step mode: invariants 1-7 hold end to end.
fn criterion_few_step(model: &ToyDenoiser) -> Result<String, String> {
    let t = 4;
    criterion_round_trip(t).map_err(|e| format!("round trip: {}", e))?;
    criterion_gaussian_oracle(t).map_err(|e| format!("oracle: {}", e))?;
    criterion_gradient_check(model, t).map_err(|e| format!("gradient: {}", e))?;
    let d = dominance(model, t).map_err(|e| format!("dominance: {}", e))?;
    if d.residual_ok != d.total {
        return Err(format!(
            "dominance: residual on {}/{} tasks",
            d.residual_ok, d.total
        ));
    }
    if d.mse_better + 1 < d.total {
        return Err(format!(
            "dominance: recon MSE lower on only {}/{}",
            d.mse_better, d.total
        ));
    }
    criterion_sharing_order(model, t).map_err(|e| format!("sharing order: {}", e))?;
    criterion_mask_confinement(model, t).map_err(|e| format!("mask: {}", e))?;
    criterion_renewal_identity(model, t).map_err(|e| format!("renewal: {}", e))?;
    Ok("invariants 1-7 hold at T=4".into())
}

// 10. Two identical-seed pipeline runs hash to the same artifact bytes.
fn criterion_determinism() -> Result<String, String> {
    fn pipeline_hash() -> Result<String, String> {
        let t_steps = 10;
        let data = shapes_dataset(40, component_seed(3, "toy-data"));
        let (model, _) = train_toy(&data, 15, 3).map_err(|e| e.to_string())?;
        let params = schedule(t_steps);
        let cfg = guidance(&model, 7.5);
        let (tokens, dim) = model.embedding_shape();
        let tasks: Vec<EvalTask> = toy_benchmark(3).iter().take(3).map(EvalTask::from).collect();

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut hasher = Sha256::new();
        for task in &tasks {
            let mut inv_cfg = TodinvConfig {
                edit_class: task.edit_class(),
                ..TodinvConfig::default()
            };
            inv_cfg.k_max = 5;
            let grid = init_grid(
                &embed_prompt(&task.task.source_prompt, tokens, dim),
                t_steps,
                inv_cfg.sharing_mode,
            )
            .unwrap();
            let inv = todinv_invert_grid(&task.latent, grid, &inv_cfg, &params, &model, &cfg)
                .map_err(|e| e.to_string())?;
            let recon = reconstruct(
                &inv.z_terminal,
                &inv.grid,
                &params,
                &model,
                &cfg,
                inv_cfg.precision,
            )
            .map_err(|e| e.to_string())?;
            let (edited, _) = edit(
                &inv.z_terminal,
                &inv.grid,
                &task.task.target_prompt,
                &IdentityHook,
                &params,
                &model,
                &cfg,
                inv_cfg.precision,
            )
            .map_err(|e| e.to_string())?;

            let base = dir.path().join(&task.task.id);
            std::fs::create_dir_all(&base).map_err(|e| e.to_string())?;
            todinv::io::write_latent(&base.join("z.lat"), &inv.z_terminal)
                .map_err(|e| e.to_string())?;
            todinv::io::write_grid(&base.join("grid.bin"), &inv.grid)
                .map_err(|e| e.to_string())?;
            todinv::io::write_latent(&base.join("recon.lat"), &recon)
                .map_err(|e| e.to_string())?;
            todinv::io::write_latent(&base.join("edit.lat"), &edited)
                .map_err(|e| e.to_string())?;
            for name in ["z.lat", "grid.bin", "recon.lat", "edit.lat"] {
                hasher.update(std::fs::read(base.join(name)).map_err(|e| e.to_string())?);
            }
        }
        // weights are artifacts too
        let wpath = dir.path().join("weights.bin");
        todinv::io::write_weights(&wpath, &model).map_err(|e| e.to_string())?;
        hasher.update(std::fs::read(&wpath).map_err(|e| e.to_string())?);
        Ok(format!("{:x}", hasher.finalize()))
    }

    let a = pipeline_hash()?;
    let b = pipeline_hash()?;
    if a != b {
        return Err(format!("hashes differ: {} vs {}", a, b));
    }
    Ok(format!("sha256 {} on both runs", &a[..16]))
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let model = trained_model();

    let criteria: Vec<(&str, Box<dyn Fn() -> Result<String, String>>)> = vec![
        ("1 algebraic round-trip", Box::new(|| criterion_round_trip(50))),
        ("2 gaussian oracle", Box::new(|| criterion_gaussian_oracle(50))),
        ("3 gradient check", {
            let m = model.clone();
            Box::new(move || criterion_gradient_check(&m, 50))
        }),
        ("4 residual dominance", {
            let m = model.clone();
            Box::new(move || criterion_dominance(&m, 50))
        }),
        ("5 sharing-mode ordering", {
            let m = model.clone();
            Box::new(move || criterion_sharing_order(&m, 50))
        }),
        ("6 mask confinement", {
            let m = model.clone();
            Box::new(move || criterion_mask_confinement(&m, 50))
        }),
        ("7 renewal identity", {
            let m = model.clone();
            Box::new(move || criterion_renewal_identity(&m, 50))
        }),
        ("8 budget monotonicity", {
            let m = model.clone();
            Box::new(move || criterion_budget_monotonicity(&m))
        }),
        ("9 few-step mode", {
            let m = model.clone();
            Box::new(move || criterion_few_step(&m))
        }),
        ("10 determinism", Box::new(criterion_determinism)),
    ];

    let mut failures = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {}: PASS ({})", name, detail),
            Err(reason) => {
                println!("criterion {}: FAIL ({})", name, reason);
                failures.push(format!("{}: {}", name, reason));
            }
        }
    }

    let elapsed = started.elapsed();
    if elapsed.as_secs() < 600 {
        println!(
            "criterion 11 desk-suite budget: PASS ({:.1}s < 600s)",
            elapsed.as_secs_f64()
        );
    } else {
        println!(
            "criterion 11 desk-suite budget: FAIL ({:.1}s >= 600s)",
            elapsed.as_secs_f64()
        );
        failures.push(format!("11: suite took {:.1}s", elapsed.as_secs_f64()));
    }

    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
