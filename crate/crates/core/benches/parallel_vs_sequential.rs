//! Batch workloads under both execution modes. Without the `parallel`
//! feature the two rows measure the same sequential code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jmm_core::desk::{desk_chain, desk_routing};
use jmm_core::plant::SettleConfig;
use jmm_core::routing::generate_grid_dataset;
use jmm_core::{par, smoothed_jacobian, Activation, ControllerGains, Execution, GridSpec, JacobianConfig, JointMuscleMapping, Plant};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn grid(c: &mut Criterion) {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let spec = GridSpec::new(vec![9; 4]).unwrap();
    let mut group = c.benchmark_group("grid_dataset_9x9x9x9");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_grid_dataset(black_box(&routing), &chain, &spec, exec).unwrap())
        });
    }
    group.finish();
}

fn validation_rmse(c: &mut Criterion) {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let data = generate_grid_dataset(&routing, &chain, &GridSpec::new(vec![7; 4]).unwrap(), Execution::Sequential).unwrap();
    let net = JointMuscleMapping::new(4, 8, 256, Activation::Sigmoid, 1).unwrap();
    let mut group = c.benchmark_group("mapping_rmse_2401_samples");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| net.rmse(black_box(&data.samples), exec)));
    }
    group.finish();
}

fn jacobian_sweep(c: &mut Criterion) {
    let chain = desk_chain().unwrap();
    let net = JointMuscleMapping::new(4, 8, 256, Activation::Sigmoid, 2).unwrap();
    let limits = chain.limits();
    let (lo, hi) = limits[3];
    let postures: Vec<Vec<f64>> = (0..100).map(|k| vec![0.35, 0.17, 0.0, lo + (hi - lo) * k as f64 / 99.0]).collect();
    let cfg = JacobianConfig::default();
    let mut group = c.benchmark_group("smoothed_jacobian_sweep_100");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, &postures, |theta| smoothed_jacobian(&net, theta, &limits, &cfg).unwrap()))
        });
    }
    group.finish();
}

fn settles(c: &mut Criterion) {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let targets: Vec<Vec<f64>> = (0..32)
        .map(|k| {
            let t = k as f64 / 31.0;
            routing
                .muscle_lengths(&chain, &[0.2 + t, 0.1 + 0.5 * t, -0.3 + 0.6 * t, 0.3 + 1.2 * t])
                .unwrap()
        })
        .collect();
    let plant = Plant::new(chain, routing, ControllerGains::uniform(8, 20.0, 20.0).unwrap(), SettleConfig::default()).unwrap();
    let mut group = c.benchmark_group("plant_settle_32_commands");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, &targets, |t| plant.settle(&[0.0; 4], t).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, grid, validation_rmse, jacobian_sweep, settles);
criterion_main!(benches);
