use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mzfringe::campaign::{run_campaign, CampaignConfig, NoiseConfig};
use mzfringe::extraction::fit_batch_median_k;
use mzfringe::physics::{InterferometerConfig, SequenceTiming};
use mzfringe::synthesis::{simulate_shot, NoiseModel, ShotSettings};
use mzfringe::Execution;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn batch_fit(c: &mut Criterion) {
    let cfg = InterferometerConfig::new(SequenceTiming::with_total_tof(0.218, 1e-3, 350e-6, 0.2).unwrap());
    let settings = ShotSettings {
        samples: 512,
        ..Default::default()
    };
    let noise = NoiseModel {
        laser_phase_sigma: 0.1,
        ..Default::default()
    };
    let profiles: Vec<_> = (0..32)
        .map(|i| simulate_shot(&cfg, &settings, 0.3, &noise.with_seed(i)).unwrap())
        .collect();
    let mut group = c.benchmark_group("median_k_batch");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_batch_median_k(&profiles, exec).unwrap())
        });
    }
    group.finish();
}

fn campaign(c: &mut Criterion) {
    let config = CampaignConfig {
        runs_per_point: 40,
        samples: 512,
        noise: NoiseConfig {
            laser_phase_rad: 0.1,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut group = c.benchmark_group("campaign_40_runs");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_campaign(&config, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_fit, campaign);
criterion_main!(benches);
