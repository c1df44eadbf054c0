use cgmot::oracles::{
    analytic_wb_line, brute_force_plan, enumerate_tables, exact_cgm_log_joint, prox_oracle_1d, BruteForcePlan,
    ExactCgmInstance, WbLineSolution,
};
use cgmot::noisy_ot::prox_scalar;
use cgmot::{CostMatrix, Histogram, Kernel, NoiseModel};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_distribution_is_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    for n in 1..=3 {
        let psi = Kernel::dense(Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..3.0))).unwrap();
        for mass in 1..=3u64 {
            let total: f64 = enumerate_tables(n, mass)
                .into_iter()
                .map(|table| exact_cgm_log_joint(&ExactCgmInstance { psi: psi.clone(), mass, table }).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() <= 1e-10, "n = {n}, F = {mass}: {total}");
        }
    }
}

#[test]
fn line_barycenter_has_full_mass() {
    for t in [0.0, 0.1, 0.3, 0.5, 0.7, 1.0] {
        for eps in [0.1, 1.0, 5.0] {
            let WbLineSolution::Unique(c) = analytic_wb_line(10, 100.0, t, eps).unwrap() else { panic!() };
            assert!((c.values().sum() - 100.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn hard_line_barycenter_switches_sides() {
    let a = Histogram::point_mass(10, 0, 100.0).unwrap();
    let b = Histogram::point_mass(10, 9, 100.0).unwrap();
    for t in [0.1, 0.25, 0.49] {
        assert_eq!(analytic_wb_line(10, 100.0, t, 0.0).unwrap(), WbLineSolution::Unique(a.clone()));
    }
    for t in [0.51, 0.75] {
        assert_eq!(analytic_wb_line(10, 100.0, t, 0.0).unwrap(), WbLineSolution::Unique(b.clone()));
    }
    assert_eq!(analytic_wb_line(10, 100.0, 0.5, 0.0).unwrap(), WbLineSolution::NonUnique);
}

#[test]
fn lp_vertices_of_a_tied_instance() {
    // both permutations cost 1, so both are optimal
    let a = Histogram::new(array![1.0, 1.0]).unwrap();
    let cost = CostMatrix::new(array![[0.0, 0.5], [0.5, 1.0]]).unwrap();
    let BruteForcePlan::Lp { optimal_vertices, value } = brute_force_plan(&a, &a, &cost, 0.0).unwrap() else {
        panic!()
    };
    assert_eq!(value, 1.0);
    let expected = [array![[1.0, 0.0], [0.0, 1.0]], array![[0.0, 1.0], [1.0, 0.0]]];
    assert_eq!(optimal_vertices.len(), 2);
    for v in &optimal_vertices {
        assert!(expected.iter().any(|e| e == v.entries()));
    }
}

#[test]
fn newton_prox_and_bisection_oracle_agree_on_the_worked_example() {
    let model = NoiseModel::Gaussian { sigma: 1.0 };
    let x = prox_oracle_1d(model, 1.0, 2.0);
    assert!((prox_scalar(model, 1.0, 2.0).unwrap() - x).abs() <= 1e-10);
    assert!((x - 1.374_822_528_183_623).abs() <= 1e-12);
}
