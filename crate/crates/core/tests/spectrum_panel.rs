mod common;

use common::{jacobi_eigenvalues, random_panel};
use kfactor::estimators::covariance_gram;
use kfactor::spectrum::reconstruction_error;
use kfactor::{build_spectrum, double_demean, eigenvalues_sym, impute_column_mean, DataPanel, RngStream};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = RngStream::new(seed, 0);
    let g = rng.lane(kfactor::elliptical::Lane::Auxiliary);
    let a = DMatrix::from_fn(n, n, |_, _| g.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

#[test]
fn eigenvalues_match_jacobi_reference() {
    for seed in 0..10 {
        let m = random_symmetric(10, seed);
        let ours = eigenvalues_sym(&m, None).unwrap();
        let reference = jacobi_eigenvalues(&m);
        for (a, b) in ours.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
        assert!(reconstruction_error(&m).unwrap() < 1e-8);
        assert_eq!(eigenvalues_sym(&m, Some(3)).unwrap(), ours[..3].to_vec());
    }
}

#[test]
fn gram_sides_share_nonzero_spectrum() {
    let p = double_demean(&random_panel(12, 30, 2, 0)).unwrap();
    let y = p.values();
    let scale = 1.0 / (p.n() * p.t()) as f64;
    let small = covariance_gram(&p);
    assert_eq!(small.nrows(), 12);
    let big = y.transpose() * y * scale;
    let big = (&big + big.transpose()) * 0.5;
    let a = eigenvalues_sym(&small, None).unwrap();
    let b = eigenvalues_sym(&big, Some(12)).unwrap();
    for (x, z) in a.iter().zip(&b) {
        if x.abs() > 1e-12 * a[0] {
            assert!((x - z).abs() <= 1e-9 * x.abs(), "{x} vs {z}");
        }
    }
}

#[test]
fn telescoping_tail_sums() {
    let raw: Vec<f64> = (0..40).map(|i| 1.0 / (1.0 + i as f64).powi(2)).collect();
    let s = build_spectrum(&raw, 40, 60, 0.05, 40).unwrap();
    for j in 1..=40isize {
        let lhs = s.tail_sum(j - 1);
        let rhs = s.tail_sum(j) + s.lambda_hat(j as usize);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }
    assert!(s.regularized().iter().all(|v| *v > 0.0));
}

#[test]
fn demean_matches_four_term_formula() {
    let p = random_panel(4, 3, 11, 0);
    let y = p.values();
    let out = double_demean(&p).unwrap();
    let grand = y.iter().sum::<f64>() / 12.0;
    for t in 0..4 {
        for i in 0..3 {
            let row = (0..3).map(|k| y[(t, k)]).sum::<f64>() / 3.0;
            let col = (0..4).map(|k| y[(k, i)]).sum::<f64>() / 4.0;
            let expected = y[(t, i)] - row - col + grand;
            assert!((out.values()[(t, i)] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn imputing_a_complete_panel_changes_nothing() {
    let p = random_panel(9, 5, 3, 0);
    assert_eq!(double_demean(&impute_column_mean(&p).unwrap()).unwrap(), double_demean(&p).unwrap());
}

fn panel_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..12, 2usize..12).prop_flat_map(|(t, n)| (Just(t), Just(n), prop::collection::vec(-1e3..1e3f64, t * n)))
}

proptest! {
    #[test]
    fn demean_is_idempotent_with_zero_margins((t, n, cells) in panel_strategy()) {
        let p = DataPanel::new(DMatrix::from_vec(t, n, cells)).unwrap();
        let once = double_demean(&p).unwrap();
        let twice = double_demean(&once).unwrap();
        let scale = p.values().amax().max(1.0);
        prop_assert!((once.values() - twice.values()).amax() <= 1e-12 * scale);
        let bound = 1e-9 * scale * t.max(n) as f64;
        for r in 0..t {
            prop_assert!(once.values().row(r).sum().abs() <= bound);
        }
        for c in 0..n {
            prop_assert!(once.values().column(c).sum().abs() <= bound);
        }
    }

    #[test]
    fn demean_ignores_additive_effects(
        (t, n, cells) in panel_strategy(),
        a in prop::collection::vec(-50.0..50.0f64, 12),
        b in prop::collection::vec(-50.0..50.0f64, 12),
    ) {
        let y = DMatrix::from_vec(t, n, cells);
        let shifted = DMatrix::from_fn(t, n, |r, c| y[(r, c)] + a[c] + b[r]);
        let d1 = double_demean(&DataPanel::new(y.clone()).unwrap()).unwrap();
        let d2 = double_demean(&DataPanel::new(shifted).unwrap()).unwrap();
        prop_assert!((d1.values() - d2.values()).amax() <= 1e-9 * (y.amax() + 100.0));
    }
}
