use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use graphon_logit::dynamics::{self, FixedPointConfig};
use graphon_logit::hjb::{self, SolverConfig};
use graphon_logit::mc::{self, McConfig, Sampler};
use graphon_logit::{Execution, FisheryParams, GraphonKernel, Grid, RateProfiles, Scenario};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn scenario(n: usize) -> Scenario {
    let g = Grid::new(n, n).unwrap();
    let rates = RateProfiles::constant(0.5, 20.0, &g).unwrap();
    let k = GraphonKernel::gaussian(0.5, &g).unwrap();
    Scenario::fishery(g, rates, FisheryParams::default(), k).unwrap()
}

fn hjb_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("hjb_50_sweeps");
    for n in [64, 256] {
        let sc = scenario(n);
        for (name, execution) in MODES {
            let cfg = SolverConfig {
                max_iter: 50,
                eps: 1e-300,
                execution,
                ..SolverConfig::picard(sc.rates(), 1e-300)
            };
            group.bench_with_input(BenchmarkId::new(name, n), &cfg, |b, cfg| {
                b.iter(|| hjb::solve(&sc, cfg).unwrap_err());
            });
        }
    }
    group.finish();
}

fn discounted_logit(c: &mut Criterion) {
    let mut group = c.benchmark_group("discounted_logit");
    let sc = scenario(128);
    for (name, execution) in MODES {
        let cfg = FixedPointConfig { execution, ..Default::default() };
        group.bench_function(name, |b| b.iter(|| dynamics::discounted_logit_solve(&sc, &cfg).unwrap()));
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_100k");
    let g = Grid::new(64, 1).unwrap();
    let mu0 = vec![1.0; 64];
    let pstar: Vec<f64> = g.x_centers().iter().map(|x| 2.0 * x).collect();
    for (name, execution) in MODES {
        let cfg = McConfig { execution, ..McConfig::new(100_000, 1, vec![0]) };
        group.bench_function(name, |b| {
            b.iter(|| mc::simulate_discounted(&pstar, &mu0, 1.0, &cfg, 0, Sampler::EventLoop, &g).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = hjb_sweeps, discounted_logit, monte_carlo
}
criterion_main!(benches);
