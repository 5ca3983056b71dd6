use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use qvi_geometry::jsr::{certify, product_stats, CertifyOptions, FamilyLabel};
use qvi_geometry::mdp::{enumerate_policies, MdpSpec, ValidatedMdp};
use qvi_geometry::solver::solve_qstar;
use qvi_geometry::switching::ProjectedFamily;
use qvi_geometry::trajectory::{run_qlearning_batch, QLearnConfig, SolveOptions, SolvedMdp};
use qvi_geometry::{toy, Execution};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn random_mdp(num_states: usize, num_actions: usize, seed: u64) -> ValidatedMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |rng: &mut ChaCha8Rng| {
        let w: Vec<f64> = (0..num_states)
            .map(|_| rng.random::<f64>() + 0.01)
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let transitions = (0..num_actions)
        .map(|_| (0..num_states).map(|_| row(&mut rng)).collect())
        .collect();
    let rewards = (0..num_states)
        .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    MdpSpec {
        name: "bench".into(),
        gamma: 0.9,
        num_states,
        num_actions,
        transitions,
        rewards,
    }
    .validate()
    .expect("valid")
}

fn bench_products(c: &mut Criterion) {
    let mdp = random_mdp(4, 3, 1);
    let pols = enumerate_policies(&mdp, 1 << 20).unwrap();
    let fam = ProjectedFamily::new(&mdp, pols);
    let mut g = c.benchmark_group("product_stats_81x_depth2");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| product_stats(black_box(&fam.members), 2, 1 << 20, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_certify(c: &mut Criterion) {
    let mdp = random_mdp(3, 3, 2);
    let rep = solve_qstar(&mdp, 1e-10, 1_000_000).unwrap();
    let mut g = c.benchmark_group("certify_full_3x3");
    g.sample_size(20);
    for (name, exec) in MODES {
        let opts = CertifyOptions {
            exec,
            cap: 1 << 16,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| certify(&mdp, &rep, FamilyLabel::Full, opts).unwrap())
        });
    }
    g.finish();
}

fn bench_qlearning(c: &mut Criterion) {
    let problem = SolvedMdp::new(toy::mdp(), SolveOptions::default()).unwrap();
    let init = problem
        .basis
        .circle_initials(problem.q_star(), 2.0, 12)
        .unwrap();
    let cfg = QLearnConfig {
        steps: 20_000,
        ..Default::default()
    };
    let mut g = c.benchmark_group("qlearning_12x20k");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_qlearning_batch(&problem, &init, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_products, bench_certify, bench_qlearning);
criterion_main!(benches);
