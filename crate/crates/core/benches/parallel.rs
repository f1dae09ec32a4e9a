//! Sequential vs rayon execution of the data-parallel loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hwrel_core::dramfault::{bitpos_campaign, BitposConfig};
use hwrel_core::exec::Exec;
use hwrel_core::macfault::{run_array, seed_fault_map, ArrayConfig, CarryMode, MacFormat, SignatureSpec};
use hwrel_core::netcore::{synthetic, Model, SyntheticSpec};
use hwrel_core::neurorel::{pso_map, MappingProblem, AgingModel, PsoConfig, TileSpec};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn faulty_array_inference(c: &mut Criterion) {
    let model = Model::mlp(&[784, 128, 64, 10], 1).unwrap();
    let data = synthetic(&SyntheticSpec::new(2000, 2));
    let state = seed_fault_map(ArrayConfig { rows: 32, cols: 32, format: MacFormat::Int8 }, 7.5, &SignatureSpec::non_critical(2), 3).unwrap();
    let mut g = c.benchmark_group("run_array");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_array(&model, &state, &data, CarryMode::Simulation, exec).unwrap())
        });
    }
    g.finish();
}

fn dram_campaign(c: &mut Criterion) {
    let model = Model::mlp(&[784, 64, 10], 1).unwrap();
    let data = synthetic(&SyntheticSpec::new(500, 2));
    let cfg = BitposConfig { bit_positions: vec![7, 6], counts: vec![10, 50], run_seeds: (1..=4).collect() };
    let mut g = c.benchmark_group("bitpos_campaign");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| bitpos_campaign(&model, &data, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn swarm(c: &mut Criterion) {
    let tiles: Vec<TileSpec> = (0..8).map(|i| TileSpec { t_ambient: 298.0 + 3.0 * i as f64, ..TileSpec::default() }).collect();
    let loads: Vec<f64> = (1..=24).map(|i| i as f64 / 300.0).collect();
    let k = loads.len();
    let p = MappingProblem::from_loads(loads, vec![vec![0.0; k]; k], tiles, AgingModel::default()).unwrap();
    let cfg = PsoConfig { particles: 64, iterations: 40, ..PsoConfig::default() };
    let mut g = c.benchmark_group("pso_map");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| pso_map(p.clusters(), &p.capacities(), |a| p.fitness(a), &cfg, 5, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, faulty_array_inference, dram_campaign, swarm);
criterion_main!(benches);
