use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use packed_surrogate::data::{generate_cylinder_flow, CylinderFlowConfig, ScalerPair};
use packed_surrogate::exec::Exec;
use packed_surrogate::packed_net::{init_params, Mode, PackedMlp, PackedSpec};
use packed_surrogate::training::{train_pooled, PooledData, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODEL_15: [usize; 9] = [64, 64, 8, 64, 64, 64, 8, 64, 64];
const ROWS: usize = 4096;

fn batch(rows: usize, width: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * width).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn paths() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn forward(c: &mut Criterion) {
    let spec = PackedSpec::new(8, 4, 1, &MODEL_15);
    let x = batch(ROWS, 7, 1);
    let mut group = c.benchmark_group("forward");
    group.throughput(Throughput::Elements(ROWS as u64));
    for (name, exec) in paths() {
        let net = PackedMlp::new(&spec).unwrap().with_exec(exec);
        let params = init_params(net.plans(), 0);
        group.bench_function(name, |b| {
            b.iter(|| net.predict(black_box(&params), black_box(&x)).unwrap())
        });
    }
    group.finish();
}

fn loss_and_grad(c: &mut Criterion) {
    let spec = PackedSpec::new(8, 4, 1, &MODEL_15).with_dropout(true);
    let (x, t) = (batch(ROWS, 7, 2), batch(ROWS, 4, 3));
    let mut group = c.benchmark_group("loss_and_grad");
    group.throughput(Throughput::Elements(ROWS as u64));
    for (name, exec) in paths() {
        let net = PackedMlp::new(&spec).unwrap().with_exec(exec);
        let params = init_params(net.plans(), 0);
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(4);
                net.loss_and_grad(black_box(&params), &x, &t, Mode::Train(&mut rng))
                    .unwrap()
            })
        });
    }
    group.finish();
}

/// One training epoch of the packed model against its deep-ensemble
/// equivalent, on both execution paths.
fn training_epoch(c: &mut Criterion) {
    let ds = generate_cylinder_flow(&CylinderFlowConfig {
        num_sims: 8,
        surface_points: 64,
        field_points: 192,
        ..CylinderFlowConfig::default()
    })
    .unwrap();
    let scaler = ScalerPair::fit(&ds).unwrap();
    let data = PooledData::new(&ds, &scaler);
    let mut group = c.benchmark_group("training_epoch");
    group.sample_size(10);
    for alpha in [4, 8] {
        let spec = PackedSpec::new(8, alpha, 1, &MODEL_15);
        for (name, exec) in paths() {
            let cfg = TrainConfig {
                max_epochs: 1,
                batch_points: 1024,
                exec,
                ..TrainConfig::default()
            };
            group.bench_with_input(BenchmarkId::new(spec.label(), name), &cfg, |b, cfg| {
                b.iter(|| train_pooled(&spec, &data, None, cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, forward, loss_and_grad, training_epoch);
criterion_main!(benches);
