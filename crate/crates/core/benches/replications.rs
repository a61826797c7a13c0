//! Sequential vs parallel replication fan-out.
//!
//! Build with `--no-default-features` to get the sequential fallback for
//! both arms (the `Parallel` arm then runs in order on one thread).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use qedsim::arrivals::{make_source, ArrivalFamily};
use qedsim::exec::Execution;
use qedsim::finite_sim::EmbeddedChain;
use qedsim::limit_chain::oracle::{reflected_walk_oracle, GridSpec};
use qedsim::limit_chain::LimitChain;
use qedsim::model::{qed_scaling, ServiceDistribution};
use qedsim::rng::{Purpose, SeedStream};

const REPS: usize = 8;
const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn two_point() -> ServiceDistribution {
    ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap()
}

fn limit_replications(c: &mut Criterion) {
    let dist = two_point();
    let steps = 50_000u64;
    let mut g = c.benchmark_group("limit_chain");
    g.throughput(Throughput::Elements(steps * REPS as u64));
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, REPS), |b| {
            b.iter(|| {
                let seeds = SeedStream::new(1);
                let means = exec.map(REPS, |r| {
                    let mut chain = LimitChain::new(&dist, 1.0, 1.0, seeds.rng(r as u64, Purpose::LimitChain));
                    let q = chain.sample_q_hat(steps as usize, 1);
                    q.iter().sum::<f64>() / q.len() as f64
                });
                black_box(means)
            })
        });
    }
    g.finish();
}

fn finite_replications(c: &mut Criterion) {
    let dist = two_point();
    let mut g = c.benchmark_group("embedded_chain");
    for n in [100u64, 400] {
        let sc = qed_scaling(n, 1.0, &dist).unwrap();
        let slots = 20_000usize;
        g.throughput(Throughput::Elements((slots * REPS) as u64));
        for (name, exec) in MODES {
            g.bench_function(BenchmarkId::new(name, n), |b| {
                b.iter(|| {
                    let seeds = SeedStream::new(2);
                    let totals = exec.map(REPS, |r| {
                        let src = make_source(ArrivalFamily::Exponential, sc.lambda_n, seeds.seed(r as u64, Purpose::Arrivals)).unwrap();
                        let mut chain = EmbeddedChain::new(sc, dist.clone(), src, seeds.rng(r as u64, Purpose::Service));
                        chain.sample_states(slots, 1).unwrap().iter().map(|s| s.q).sum::<u64>()
                    });
                    black_box(totals)
                })
            });
        }
    }
    g.finish();
}

fn oracle_rows(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    let grid = GridSpec { tolerance: 1e-8, ..GridSpec::for_walk(1.0, 1.0) };
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| black_box(reflected_walk_oracle(1.0, 1.0, grid, exec).unwrap().iterations)));
    }
    g.finish();
}

criterion_group!(benches, limit_replications, finite_replications, oracle_rows);
criterion_main!(benches);
