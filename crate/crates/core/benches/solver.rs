//! Sequential vs data-parallel execution of the two hot paths: one lattice
//! pseudo-step and a seed ensemble of discounted solves.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hjhomog_core::environment::{sample_field, EnvironmentSpec, Family, TrigParams};
use hjhomog_core::homog::{vanishing_discount, ModelSpec};
use hjhomog_core::models::{DiffusionModel, HamiltonianKind, HamiltonianModel};
use hjhomog_core::par::Exec;
use hjhomog_core::scheme::{Operator, SchemeConfig};
use hjhomog_core::GridSpec;
use std::hint::black_box;

fn env() -> EnvironmentSpec {
    EnvironmentSpec::new(
        Family::RandomPhaseTrig(TrigParams {
            base: 2.0,
            amplitudes: vec![0.5, 0.5],
            frequencies: vec![1.0, 1.0],
            angles: vec![],
        }),
        1,
    )
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn pseudo_step(c: &mut Criterion) {
    let grid = GridSpec::new(2, 4.0, 1.0 / 64.0).unwrap();
    let ham = HamiltonianModel::new(HamiltonianKind::Eikonal, sample_field(&env(), &grid).unwrap())
        .unwrap();
    let diff = DiffusionModel::zero(2);
    let p = [1.0, 0.5];
    let params = SchemeConfig::default().resolve(&ham, &diff, p, 0.1, &grid).unwrap();
    let op = Operator::new(&ham, &diff, p, &params);
    let v: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 1e-3).sin()).collect();
    let mut out = vec![0.0; grid.len()];
    let mut g = c.benchmark_group("pseudo_step_256x256");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| op.pseudo_step(exec, black_box(&v), 0.1, params.tau, &mut out))
        });
    }
    g.finish();
}

fn seed_ensemble(c: &mut Criterion) {
    let grid = GridSpec::new(1, 8.0, 1.0 / 128.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::Eikonal, env());
    let seeds: Vec<u64> = (1..=8).collect();
    let deltas = [0.2, 0.1, 0.05];
    let mut g = c.benchmark_group("vanishing_discount_8_seeds");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                vanishing_discount(
                    &model,
                    [1.0, 0.0],
                    &deltas,
                    &seeds,
                    &grid,
                    &SchemeConfig::default(),
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, pseudo_step, seed_ensemble);
criterion_main!(benches);
