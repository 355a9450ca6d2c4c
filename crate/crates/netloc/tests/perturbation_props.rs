mod common;

use netloc::graph::build_laplacian;
use netloc::perturbation::{
    first_order_sensitivity, perturbed_eigenvalues, perturbed_laplacian, scenario_sensitivity, scenario_vectors,
    sensitivity_profile, Scenario,
};
use netloc::spectral::eig_sym;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn delta_strategy() -> impl Strategy<Value = Complex64> {
    (0.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_and_column_sums(seed in any::<u64>(), n in 3usize..30, delta in delta_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected(&mut rng, n, n);
        let l = build_laplacian(&g);
        for s in common::scenarios_for(&mut rng, &g) {
            let m = perturbed_laplacian(&l, &s, delta).unwrap();
            let scale = 1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for i in 0..n {
                let row: Complex64 = m.row(i).iter().sum();
                prop_assert!(row.norm() <= 1e-12 * scale, "{s}: row {i} sums to {row}");
            }
            let cols_zero = (0..n).all(|j| m.column(j).iter().sum::<Complex64>().norm() <= 1e-12 * scale);
            match s {
                Scenario::Edge { .. } | Scenario::LocalReciprocal { .. } => prop_assert!(cols_zero, "{s}"),
                _ => {}
            }
        }
    }

    #[test]
    fn zero_mode_survives(seed in any::<u64>(), n in 3usize..25, delta in delta_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected(&mut rng, n, n / 2);
        let l = build_laplacian(&g);
        let lmax = eig_sym(&l).unwrap().lambda_max();
        for s in common::scenarios_for(&mut rng, &g) {
            let ev = perturbed_eigenvalues(&l, &s, delta).unwrap();
            let m = ev.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(m <= 1e-10 * lmax, "{s}: {m}");
        }
    }

    #[test]
    fn closed_form_matches_raw(seed in any::<u64>(), n in 3usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected(&mut rng, n, n);
        let l = build_laplacian(&g);
        let sp = eig_sym(&l).unwrap();
        let tol = 1e-10 * sp.lambda_max();
        for s in common::scenarios_for(&mut rng, &g) {
            let pv = scenario_vectors(&s, &l).unwrap();
            for i in (0..n).filter(|&i| sp.values[i] > tol) {
                let v: Vec<f64> = sp.vector(i).iter().copied().collect();
                let raw = first_order_sensitivity(&v, &pv).unwrap();
                let closed = scenario_sensitivity(sp.values[i], &v, &s);
                // Absolute floor for values that vanish by symmetry.
                let floor = 1e-12 * sp.lambda_max().powi(2);
                prop_assert!((raw - closed).abs() <= 1e-12 * raw.abs().max(closed.abs()) + floor,
                    "{s} mode {i}: raw {raw} closed {closed}");
            }
        }
    }

    #[test]
    fn edge_orientation_is_irrelevant(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected(&mut rng, n, n);
        let l = build_laplacian(&g);
        let sp = eig_sym(&l).unwrap();
        prop_assume!(sp.check_simple(netloc::perturbation::DEGENERATE_GAP).is_ok());
        let e = g.edges()[seed as usize % g.edges().len()];
        let a = sensitivity_profile(&sp, &l, &Scenario::Edge { k: e.i, l: e.j }).unwrap();
        let b = sensitivity_profile(&sp, &l, &Scenario::Edge { k: e.j, l: e.i }).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn global_node_is_zero_on_constant_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = common::random_connected(&mut rng, 12, 6);
    let l = build_laplacian(&g);
    let sp = eig_sym(&l).unwrap();
    let pv = scenario_vectors(&Scenario::GlobalNode { k: 4 }, &l).unwrap();
    let v0: Vec<f64> = sp.vector(0).iter().copied().collect();
    assert!(first_order_sensitivity(&v0, &pv).unwrap().abs() < 1e-14);
    assert_eq!(scenario_sensitivity(0.0, &v0, &Scenario::GlobalNode { k: 4 }), 0.0);
}
