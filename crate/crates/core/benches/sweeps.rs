use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use riskscape::datagen::{generate, GenConfig, PopulationLaw, Theta0Spec};
use riskscape::landscape::{certify_strong_morse, run_from_inits, GridSpec, InitLaw, Region};
use riskscape::models::{Family, ModelSpec};
use riskscape::optim::{IterateStorage, OptConfig};
use riskscape::oracle::{PopulationGrid, PopulationOracle};
use riskscape::par::Execution;
use riskscape::ParamVec;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn basin_sweep(c: &mut Criterion) {
    let d = 10;
    let (data, _) =
        generate(&GenConfig::new(Family::Classification, 20 * d, d, 1).with_theta0(Theta0Spec::Norm { norm: 3.0 })).unwrap();
    let spec = ModelSpec::classification(9.0);
    let opt = OptConfig::gd(1.0, 300).with_storage(IterateStorage::FinalOnly);
    let law = InitLaw::default();
    let mut group = c.benchmark_group("basin_sweep");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_from_inits(&spec, &data, &opt, &law, 16, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn morse_grid(c: &mut Criterion) {
    let law: PopulationLaw = GenConfig::new(Family::Gmm2, 0, 1, 3).with_separation(1.5).law().unwrap();
    let oracle = PopulationOracle::quadrature(ModelSpec::gmm2(10.0), law).unwrap();
    let region = Region::origin_ball(2, 4.0);
    let grid = GridSpec {
        per_axis: 61,
        boundary: 200,
        ..GridSpec::default()
    };
    let mut group = c.benchmark_group("morse_grid");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| certify_strong_morse(&oracle, &region, &grid, 0.05, 0.0, exec).unwrap())
        });
    }
    group.finish();
}

fn gap_grid(c: &mut Criterion) {
    let d = 5;
    let gen = GenConfig::new(Family::Classification, 4000, d, 4).with_theta0(Theta0Spec::Norm { norm: 1.0 });
    let (data, _) = generate(&gen).unwrap();
    let spec = ModelSpec::classification(3.0);
    let oracle = PopulationOracle::quadrature(spec.clone(), gen.law().unwrap()).unwrap();
    let thetas = (0..32).map(|i| ParamVec::from_element(d, 0.05 * i as f64)).collect();
    let grid = PopulationGrid::new(&oracle, thetas).unwrap();
    let mut group = c.benchmark_group("gap_grid");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| grid.gap(&spec, &data, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, basin_sweep, morse_grid, gap_grid);
criterion_main!(benches);
