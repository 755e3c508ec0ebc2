use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mtp_core::learners::{default_library, LearnerSpec};
use mtp_core::sim::{generate, replicate, true_value, DgpSpec, ReplicationSetup};
use mtp_core::super_learner::{fit_super_learner, SuperLearnerConfig};
use mtp_core::tmle::TmleConfig;
use mtp_core::{Execution, ShiftPolicy, Task};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn super_learner(c: &mut Criterion) {
    let frame = generate(&DgpSpec::default(), 1000, 1).unwrap();
    let x = frame.features_with(frame.exposure());
    let lib = default_library();
    let mut g = c.benchmark_group("super_learner_fit");
    g.sample_size(10);
    for (label, exec) in MODES {
        let mut cfg = SuperLearnerConfig::new(Task::Regression, 5, 7);
        cfg.execution = exec;
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| fit_super_learner(x.view(), frame.outcome(), None, &lib, &cfg, None).unwrap())
        });
    }
    g.finish();
}

fn replication(c: &mut Criterion) {
    let dgp = DgpSpec::default();
    let policy = ShiftPolicy::additive(1.0).unwrap();
    let lib = vec![LearnerSpec::mean(), LearnerSpec::glm()];
    let est = TmleConfig::new(lib.clone(), lib, 5, 0);
    let mut g = c.benchmark_group("replicate_r16_n500");
    g.sample_size(10);
    for (label, exec) in MODES {
        let setup = ReplicationSetup {
            cell: "bench",
            dgp: &dgp,
            policy: &policy,
            estimator: &est,
            replications: 16,
            n: 500,
            seed: 3,
            truth: 2.0,
            execution: exec,
        };
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| replicate(&setup).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo_truth(c: &mut Criterion) {
    let dgp = DgpSpec::default();
    let policy = ShiftPolicy::additive(1.0).unwrap();
    let mut g = c.benchmark_group("true_value_1m");
    g.sample_size(10);
    for (label, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| true_value(&dgp, &policy, 1_000_000, 5, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, super_learner, replication, monte_carlo_truth);
criterion_main!(benches);
