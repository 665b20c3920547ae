//! Sequential against rayon-parallel replicate execution.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gossip_clt::gossip::{GossipState, SeedLineage};
use gossip_clt::par::map_sequential;
use gossip_clt::rng::{stage, stream};
use gossip_clt::torus::TorusSpec;
use gossip_clt::Result;

fn replicate(d: usize, size: f64, r: usize) -> Result<f64> {
    let spec = TorusSpec::for_system_size(d, 1.0, size)?;
    let lineage = SeedLineage {
        master_seed: 11,
        replicate: r as u64,
        stage: stage::FULL_RUN,
    };
    let mut state = GossipState::new(spec, 1.0, stream(11, r as u64, stage::FULL_RUN), lineage)?;
    let t = size.ln();
    state.run_until(t)?;
    state
        .coverage_fraction(t, 2_000, &mut stream(11, r as u64, stage::PROBES))
        .map(|c| c.0)
}

fn bench_replicates(c: &mut Criterion) {
    let mut group = c.benchmark_group("gossip_replicates");
    group.sample_size(10);
    for (d, size) in [(1, 2_000.0), (2, 2_000.0)] {
        let n = 32;
        group.bench_with_input(BenchmarkId::new("sequential", d), &size, |b, &size| {
            b.iter(|| map_sequential(n, |r| replicate(d, size, r)).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", d), &size, |b, &size| {
            b.iter(|| gossip_clt::par::map_parallel(n, |r| replicate(d, size, r)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_replicates);
criterion_main!(benches);
