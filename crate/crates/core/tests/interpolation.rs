use std::time::Instant;

use cgmot::oracles::dense_expm;
use cgmot::{
    build_grid_rate_matrix, expm_action, interpolate_all_k, interpolate_path, interpolate_path_loopy,
    kernel_power_apply, CsrMatrix, CtmcModel, Histogram, InterpolationResult, Kernel, PathInterpolationProblem,
    PathKernel, SolverOptions,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> SolverOptions {
    SolverOptions::default().with_tolerance(1e-12).with_max_iterations(100_000)
}

fn line_endpoints() -> (Histogram, Histogram) {
    (Histogram::point_mass(10, 0, 100.0).unwrap(), Histogram::point_mass(10, 9, 100.0).unwrap())
}

fn ctmc_problem(a: &Histogram, b: &Histogram, q: &CtmcModel, t: f64) -> PathInterpolationProblem {
    PathInterpolationProblem::new(a.clone(), b.clone(), PathKernel::Ctmc { q: q.clone(), t }, opts()).unwrap()
}

fn random_histogram(rng: &mut impl Rng, n: usize, mass: f64) -> Histogram {
    let v: Array1<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s = v.sum();
    Histogram::new(v * (mass / s)).unwrap()
}

/// Random rates on top of a directed ring, so the chain is irreducible.
fn random_rates(rng: &mut impl Rng, n: usize, density: f64) -> CtmcModel {
    let mut off: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, rng.random_range(0.1..1.0))).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && (i + 1) % n != j && rng.random_bool(density) {
                off.push((i, j, rng.random_range(0.0..2.0)));
            }
        }
    }
    CtmcModel::from_off_diagonal(n, &off).unwrap()
}

fn max_gap(x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn is_unimodal(v: ndarray::ArrayView1<f64>) -> bool {
    let peak = v.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
    (0..peak).all(|i| v[i] <= v[i + 1]) && (peak..v.len() - 1).all(|i| v[i] >= v[i + 1])
}

#[test]
fn ctmc_interpolant_hits_endpoints() {
    let (a, b) = line_endpoints();
    let q = build_grid_rate_matrix(1, 10, 1.0).unwrap();
    let c0 = interpolate_path(&ctmc_problem(&a, &b, &q, 0.0)).unwrap().c;
    let c1 = interpolate_path(&ctmc_problem(&a, &b, &q, 1.0)).unwrap().c;
    assert!(max_gap(c0.values(), a.values()) <= 1e-7);
    assert!(max_gap(c1.values(), b.values()) <= 1e-7);
    let l0 = interpolate_path_loopy(&ctmc_problem(&a, &b, &q, 0.0)).unwrap().c;
    assert!(max_gap(l0.values(), a.values()) <= 1e-7);
}

#[test]
fn flock_moves_along_the_line() {
    let (a, b) = line_endpoints();
    let q = build_grid_rate_matrix(1, 10, 1.0).unwrap();
    let mut modes = Vec::new();
    for t in [0.25, 0.5, 0.75] {
        let r = interpolate_path(&ctmc_problem(&a, &b, &q, t)).unwrap();
        assert!(r.report.converged);
        assert!((r.c.mass() - 100.0).abs() <= 1e-7);
        assert!(is_unimodal(r.c.values()), "t = {t}: {:?}", r.c.values());
        modes.push(r.c.argmax());
    }
    assert!(modes[0] < modes[1] && modes[1] < modes[2], "{modes:?}");
    assert!(modes[1] == 4 || modes[1] == 5);
    assert!(modes[0] > 0);
}

#[test]
fn loopy_and_simplified_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..50 {
        let n = rng.random_range(2..=20);
        let a = random_histogram(&mut rng, n, 50.0);
        let b = random_histogram(&mut rng, n, 50.0);
        let kernel = if case % 2 == 0 {
            let psi = Kernel::dense(Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..1.0))).unwrap();
            let nodes = rng.random_range(3..=7);
            let k = rng.random_range(2..nodes);
            PathKernel::Undirected { psi, nodes, k }
        } else {
            PathKernel::Ctmc { q: random_rates(&mut rng, n, 0.6), t: rng.random_range(0.0..=1.0) }
        };
        let problem = PathInterpolationProblem::new(a, b, kernel, opts()).unwrap();
        let fast = interpolate_path(&problem).unwrap();
        let loopy = interpolate_path_loopy(&problem).unwrap();
        assert!(fast.report.converged && loopy.report.converged, "case {case}");
        assert!(max_gap(fast.c.values(), loopy.c.values()) <= 1e-8, "case {case}");
    }
}

#[test]
fn all_interior_nodes_from_one_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for nodes in [3, 5, 8] {
        let n = 4;
        let a = random_histogram(&mut rng, n, 10.0);
        let b = random_histogram(&mut rng, n, 10.0);
        let psi = Kernel::dense(Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..1.0))).unwrap();
        let (all, report) = interpolate_all_k(&a, &b, &psi, nodes, &opts()).unwrap();
        assert!(report.converged);
        assert_eq!(all.len(), nodes - 2);
        for (idx, c) in all.iter().enumerate() {
            let k = idx + 2;
            let p = PathInterpolationProblem::new(
                a.clone(),
                b.clone(),
                PathKernel::Undirected { psi: psi.clone(), nodes, k },
                opts(),
            )
            .unwrap();
            let single = interpolate_path(&p).unwrap();
            assert!(max_gap(c.values(), single.c.values()) <= 1e-8, "N = {nodes}, k = {k}");
        }
    }
}

#[test]
fn path_power_and_ctmc_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let n = 6;
    let q = random_rates(&mut rng, n, 1.0);
    let a = random_histogram(&mut rng, n, 5.0);
    let b = random_histogram(&mut rng, n, 5.0);
    let nodes = 5;
    let psi = Kernel::dense(dense_expm(&(q.to_dense() / (nodes - 1) as f64))).unwrap();
    for k in 2..nodes {
        let t = (k - 1) as f64 / (nodes - 1) as f64;
        let path = PathInterpolationProblem::new(
            a.clone(),
            b.clone(),
            PathKernel::Undirected { psi: psi.clone(), nodes, k },
            opts(),
        )
        .unwrap();
        let c_path = interpolate_path(&path).unwrap().c;
        let c_ctmc = interpolate_path(&ctmc_problem(&a, &b, &q, t)).unwrap().c;
        assert!(max_gap(c_path.values(), c_ctmc.values()) <= 1e-7, "k = {k}");
    }
}

#[test]
fn time_reversal_with_symmetric_rates() {
    let q = build_grid_rate_matrix(3, 4, 0.7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let a = random_histogram(&mut rng, 12, 30.0);
    let b = random_histogram(&mut rng, 12, 30.0);
    for t in [0.1, 0.5, 0.8] {
        let fwd = interpolate_path(&ctmc_problem(&a, &b, &q, t)).unwrap().c;
        let back = interpolate_path(&ctmc_problem(&b, &a, &q, 1.0 - t)).unwrap().c;
        assert!(max_gap(fwd.values(), back.values()) <= 1e-9);
    }
}

#[test]
fn symmetric_instance_gives_palindrome() {
    let n = 7;
    let psi = Kernel::dense(Array2::from_shape_fn((n, n), |(i, j)| (-((i as f64 - j as f64).abs())).exp())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let a = random_histogram(&mut rng, n, 20.0);
    let b = a.reversed();
    let p = PathInterpolationProblem::new(a, b, PathKernel::Undirected { psi, nodes: 5, k: 3 }, opts()).unwrap();
    let c = interpolate_path_loopy(&p).unwrap().c;
    assert!(max_gap(c.values(), c.reversed().values()) <= 1e-9);
}

#[test]
fn solution_satisfies_first_order_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 5;
    let a = random_histogram(&mut rng, n, 40.0);
    let b = random_histogram(&mut rng, n, 40.0);
    let psi = Kernel::dense(Array2::from_shape_fn((n, n), |_| rng.random_range(0.2..1.0))).unwrap();
    let p = PathInterpolationProblem::new(a.clone(), b.clone(), PathKernel::Undirected { psi, nodes: 6, k: 3 }, opts())
        .unwrap();
    let r: InterpolationResult = interpolate_path(&p).unwrap();
    let (t1, t2) = r.plans(&p).unwrap();
    let (phi1, phi2) = InterpolationResult::potentials(&p);
    let mass = a.mass();
    assert!(t1.marginal_violation(a.values(), r.c.values()) <= 1e-8 * mass);
    assert!(t2.marginal_violation(r.c.values(), b.values()) <= 1e-8 * mass);
    // log T₁ - log φ₁ and log T₂ - log φ₂ are rank-one sums
    for (t, phi) in [(t1.entries(), &phi1), (t2.entries(), &phi2)] {
        let g = Array2::from_shape_fn((n, n), |(i, j)| t[[i, j]].ln() - phi[[i, j]].ln());
        for i in 0..n {
            for j in 0..n {
                let rank_one = g[[i, 0]] + g[[0, j]] - g[[0, 0]];
                assert!((g[[i, j]] - rank_one).abs() <= 1e-8);
            }
        }
    }
    // the column dual of T₁ plus the row dual of T₂ equals log c
    for i in 0..n {
        let lhs = (r.c.values()[i]).ln();
        let rhs = r.x[i].ln() + r.z[i].ln();
        assert!((lhs - rhs).abs() <= 1e-8);
    }
}

#[test]
fn expm_action_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for case in 0..50 {
        let n = rng.random_range(2..=50);
        let q = random_rates(&mut rng, n, 0.3);
        let s = rng.random_range(0.0..3.0);
        let x: Array1<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let e = dense_expm(&(q.to_dense() * s));
        for transpose in [false, true] {
            let got = expm_action(&q, s, x.view(), transpose).unwrap();
            let want = if transpose { e.t().dot(&x) } else { e.dot(&x) };
            let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_gap(got.view(), want.view()) <= 1e-10 * scale, "case {case}");
            assert!(got.iter().all(|&v| v >= 0.0));
            if transpose {
                assert!((got.sum() - x.sum()).abs() <= 1e-11 * x.sum());
            }
        }
    }
}

#[test]
fn markov_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let q = random_rates(&mut rng, 15, 0.4);
    let x: Array1<f64> = (0..15).map(|_| rng.random_range(0.0..1.0)).collect();
    let (s, r) = (0.7, 1.9);
    let once = expm_action(&q, s + r, x.view(), true).unwrap();
    let twice = expm_action(&q, r, expm_action(&q, s, x.view(), true).unwrap().view(), true).unwrap();
    assert!(max_gap(once.view(), twice.view()) <= 1e-10 * x.sum());
}

#[test]
fn sparse_power_matches_dense_block() {
    let n = 1000;
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, 0.5));
        if i + 1 < n {
            trip.push((i, i + 1, 0.3));
            trip.push((i + 1, i, 0.2));
        }
    }
    let psi = Kernel::sparse(CsrMatrix::from_triplets(n, n, &trip).unwrap()).unwrap();
    let m = 50;
    let mut x = Array1::zeros(n);
    for i in 490..510 {
        x[i] = (i - 489) as f64;
    }
    let got = kernel_power_apply(&psi, m, x.view(), false).unwrap();
    // the support grows by one cell per application: a block of 20 + 2m cells
    // around it sees no boundary
    let (lo, hi) = (490 - m, 510 + m);
    let block = Array2::from_shape_fn((hi - lo, hi - lo), |(i, j)| psi.get(lo + i, lo + j));
    let mut dense = x.slice(ndarray::s![lo..hi]).to_owned();
    for _ in 0..m {
        dense = block.dot(&dense);
    }
    let scale = dense.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        let want = if (lo..hi).contains(&i) { dense[i - lo] } else { 0.0 };
        assert!((got[i] - want).abs() <= 1e-10 * scale);
    }
}

#[test]
fn all_k_reuses_the_scaling_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let n = 500;
    let nodes = 8;
    let a = random_histogram(&mut rng, n, 1000.0);
    let b = random_histogram(&mut rng, n, 1000.0);
    let psi = Kernel::dense(Array2::from_shape_fn((n, n), |(i, j)| {
        (-((i as f64 - j as f64) / 40.0).powi(2)).exp() + 1e-3
    }))
    .unwrap();
    let o = SolverOptions::default().with_tolerance(1e-10);
    let best_of = |f: &dyn Fn()| {
        (0..3)
            .map(|_| {
                let start = Instant::now();
                f();
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let single = best_of(&|| {
        let p = PathInterpolationProblem::new(
            a.clone(),
            b.clone(),
            PathKernel::Undirected { psi: psi.clone(), nodes, k: 4 },
            o,
        )
        .unwrap();
        interpolate_path(&p).unwrap();
    });
    let apply = best_of(&|| {
        for _ in 0..nodes - 2 {
            kernel_power_apply(&psi, nodes - 1, a.values(), false).unwrap();
        }
    });
    let all = best_of(&|| {
        interpolate_all_k(&a, &b, &psi, nodes, &o).unwrap();
    });
    assert!(all < 1.5 * single + apply, "all-k {all}s, single {single}s, applications {apply}s");
}
