use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use miml_bench::{dataset, labelled_points};
use miml_core::bagdist::{k_medoids, DistanceMatrix};
use miml_core::kernels::{build_gram, point_gram, KernelSpec};
use miml_core::solvers::{lstsq_svd, smo_solve, solve_lp, solve_qp, LpProblem, QpProblem};
use nalgebra::DMatrix;

fn smo(c: &mut Criterion) {
    let mut group = c.benchmark_group("smo");
    for n in [50, 100, 200] {
        let (points, labels) = labelled_points(n, 1);
        let gram = point_gram(&KernelSpec::rbf(0.2).unwrap(), &points);
        let caps = vec![1.0; n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| smo_solve(black_box(&gram), &labels, &caps, 1e-6).unwrap())
        });
    }
    group.finish();
}

fn dense_qp(c: &mut Criterion) {
    // The SVM dual again, through the general active-set solver.
    let n = 40;
    let (points, labels) = labelled_points(n, 2);
    let gram = point_gram(&KernelSpec::rbf(0.2).unwrap(), &points);
    let q = DMatrix::from_fn(n, n, |i, j| labels[i] * labels[j] * gram[(i, j)]);
    let problem = QpProblem::new(q, vec![-1.0; n])
        .with_equalities(DMatrix::from_row_slice(1, n, &labels), vec![0.0])
        .with_bounds(vec![0.0; n], vec![1.0; n]);
    c.bench_function("qp/svm-dual-40", |b| {
        b.iter(|| solve_qp(black_box(&problem)).unwrap())
    });
}

fn lp(c: &mut Criterion) {
    let n = 30;
    let cost: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let a = DMatrix::from_fn(10, n, |r, k| (((r + 1) * (k + 3)) % 5) as f64);
    let problem = LpProblem::new(cost)
        .with_inequalities(a, vec![10.0; 10])
        .with_bounds(vec![-1.0; n], vec![1.0; n]);
    c.bench_function("lp/30x10", |b| {
        b.iter(|| solve_lp(black_box(&problem)).unwrap())
    });
}

fn least_squares(c: &mut Criterion) {
    let design = DMatrix::from_fn(200, 40, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0);
    let targets = DMatrix::from_fn(200, 5, |i, l| if (i + l) % 3 == 0 { 1.0 } else { -1.0 });
    c.bench_function("lstsq/200x40", |b| {
        b.iter(|| lstsq_svd(black_box(&design), &targets))
    });
}

fn bag_distances(c: &mut Criterion) {
    let ds = dataset(100, 3);
    let bags: Vec<_> = ds.bags().cloned().collect();
    c.bench_function("hausdorff/matrix-100", |b| {
        b.iter(|| DistanceMatrix::hausdorff(black_box(&bags)).unwrap())
    });
    c.bench_function("k-medoids/100-into-20", |b| {
        b.iter(|| k_medoids(black_box(&bags), 20, 0).unwrap())
    });
    c.bench_function("gram/100-bags", |b| {
        b.iter(|| build_gram(&KernelSpec::rbf(0.2).unwrap(), black_box(&ds)))
    });
}

criterion_group!(benches, smo, dense_qp, lp, least_squares, bag_distances);
criterion_main!(benches);
