//! Sequential versus parallel execution of the data-parallel kernels.

use std::f64::consts::PI;
use std::hint::black_box;

use bidomain_core::domain::{StripGeometry, Tensor2};
use bidomain_core::galerkin::{forcing_coefficients, SeparableForcing, TimeProfile};
use bidomain_core::ionic::{IonicModel, NonlinearProjector};
use bidomain_core::operator::BidomainOperator;
use bidomain_core::periodic::{PeriodicProblem, PeriodicSolver};
use bidomain_core::spectral::FractionalParams;
use bidomain_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn geometry(n: usize) -> StripGeometry {
    StripGeometry {
        nx_heart: n,
        nx_torso: n,
        ny: n,
        ..Default::default()
    }
}

fn operator(n: usize, exec: Execution) -> BidomainOperator {
    BidomainOperator::uniform(
        &geometry(n),
        Tensor2::isotropic(1.0),
        Tensor2::isotropic(2.0),
        Tensor2::isotropic(1.5),
        exec,
    )
    .unwrap()
}

fn bench_operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new(name, 16), &16, |b, &n| b.iter(|| black_box(operator(n, exec))));
    }
    group.finish();
}

fn bench_projection(c: &mut Criterion) {
    let op = operator(16, Execution::Parallel);
    let basis = op.compute_eigenbasis(32).unwrap();
    let projector = NonlinearProjector::new(IonicModel::fhn_default(1.0).unwrap(), &basis, &op.mesh, 4).unwrap();
    let mut z = bidomain_core::spectral::SpectralPair::zeros(32);
    for i in 0..=32 {
        z.u[i] = 0.5 / (1.0 + i as f64);
        z.w[i] = 0.1 / (1.0 + i as f64);
    }
    let mut group = c.benchmark_group("projection");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| black_box(projector.project(&z, exec).unwrap())));
    }
    group.finish();
}

fn bench_kp_apply(c: &mut Criterion) {
    let op = operator(12, Execution::Parallel);
    let basis = op.compute_eigenbasis(16).unwrap();
    let s_vals = op.mesh.sample_endo(|y| (2.0 * PI * y).cos());
    let forcing = SeparableForcing::new(
        forcing_coefficients(&op, &basis, &s_vals).unwrap(),
        TimeProfile::Cosine { period: 1.0 },
        0.01,
    );
    let params = FractionalParams::new(1.0, 0.8, 1.0).unwrap();
    let problem = PeriodicProblem::new(params, IonicModel::fhn_default(1.0).unwrap(), 1.0, &forcing).unwrap();
    let mut group = c.benchmark_group("kp_apply");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let solver = PeriodicSolver::new(&problem, &basis, &op.mesh, 16, exec).unwrap();
        let z = solver.linear_periodic_solution().unwrap();
        group.bench_function(name, |b| b.iter(|| black_box(solver.kp_apply(&z).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, bench_operator, bench_projection, bench_kp_apply);
criterion_main!(benches);
