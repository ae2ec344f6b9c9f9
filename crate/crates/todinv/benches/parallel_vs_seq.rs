//! Compares sequential and rayon execution of the batch inversion pipeline
//! and batch metric computation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use todinv::config::RunConfig;
use todinv::denoiser::train_toy;
use todinv::evaluation::{run_task, EvalTask};
use todinv::exec::{map_items, ExecMode};
use todinv::metrics::mse;
use todinv::prompt::component_seed;
use todinv::toyset::{shapes_dataset, toy_benchmark};

fn bench_inversion(c: &mut Criterion) {
    let data = shapes_dataset(40, component_seed(0, "toy-data"));
    let (model, _) = train_toy(&data, 20, 0).unwrap();
    let tasks: Vec<EvalTask> = toy_benchmark(0).iter().map(EvalTask::from).collect();
    let config = RunConfig {
        steps: 8,
        opt_steps: 3,
        ..RunConfig::default()
    };

    let mut group = c.benchmark_group("batch_inversion");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(
            BenchmarkId::new("exec", format!("{:?}", mode)),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    map_items(mode, &tasks, |task| {
                        run_task(task, &task.latent, &config, &model)
                            .unwrap()
                            .row
                            .mean_final_residual
                    })
                })
            },
        );
    }
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let tasks: Vec<EvalTask> = toy_benchmark(1).iter().map(EvalTask::from).collect();
    let pairs: Vec<(EvalTask, EvalTask)> = tasks
        .iter()
        .zip(tasks.iter().rev())
        .map(|(a, b)| (a.clone(), b.clone()))
        .collect();

    let mut group = c.benchmark_group("batch_mse");
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(
            BenchmarkId::new("exec", format!("{:?}", mode)),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    map_items(mode, &pairs, |(a, bt)| {
                        mse(&a.latent, &bt.latent, None).unwrap()
                    })
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_inversion, bench_metrics);
criterion_main!(benches);
