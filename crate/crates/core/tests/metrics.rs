use bir_core::{r2_direction, r2_subspace};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn eye(p: usize) -> DMatrix<f64> {
    DMatrix::identity(p, p)
}

fn basis(p: usize, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(p, cols.len(), |i, j| if i == cols[j] { 1.0 } else { 0.0 })
}

fn spd(p: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(p, p, &entries[..p * p]);
    &a * a.transpose() + eye(p) * 0.5
}

#[test]
fn table_examples() {
    let b = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
    assert!((r2_direction(&b, &basis(2, &[0]), &eye(2)).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(r2_subspace(&basis(4, &[2, 3]), &basis(4, &[0, 1]), &eye(4)).unwrap(), 0.0);
    assert!((r2_subspace(&basis(4, &[0, 2]), &basis(4, &[0, 1]), &eye(4)).unwrap() - 0.5).abs() < 1e-15);
    assert!((r2_subspace(&basis(4, &[0, 1]), &basis(4, &[0, 1]), &eye(4)).unwrap() - 1.0).abs() < 1e-15);
}

fn vec_strategy(p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn containment_gives_one(coef in vec_strategy(2), cov in vec_strategy(16), b in vec_strategy(8)) {
        prop_assume!(coef.iter().any(|c| c.abs() > 0.1));
        let sigma = spd(4, &cov);
        let truth = DMatrix::from_column_slice(4, 2, &b);
        prop_assume!(truth.clone().svd(false, false).singular_values.min() > 0.1);
        let inside = &truth * DVector::from_vec(coef);
        let r = r2_direction(&inside, &truth, &sigma).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-10, "r2 = {}", r);
    }

    #[test]
    fn orthogonal_gives_zero(v in vec_strategy(3)) {
        let mut b = DVector::zeros(5);
        b.rows_mut(2, 3).copy_from(&DVector::from_vec(v.clone()));
        prop_assume!(b.norm() > 1e-3);
        let r = r2_direction(&b, &basis(5, &[0, 1]), &eye(5)).unwrap();
        prop_assert_eq!(r, 0.0);
    }

    #[test]
    fn sign_and_scale_invariance(b in vec_strategy(4), t in vec_strategy(8), cov in vec_strategy(16), c in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64]) {
        let b = DVector::from_vec(b);
        prop_assume!(b.norm() > 0.1);
        let truth = DMatrix::from_column_slice(4, 2, &t);
        prop_assume!(truth.clone().svd(false, false).singular_values.min() > 0.1);
        let sigma = spd(4, &cov);
        let r1 = r2_direction(&b, &truth, &sigma).unwrap();
        let r2 = r2_direction(&(&b * c), &truth, &sigma).unwrap();
        prop_assert!((r1 - r2).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r1));
    }

    #[test]
    fn basis_invariance(h in vec_strategy(10), t in vec_strategy(10), mix in vec_strategy(4), cov in vec_strategy(25)) {
        let hat = DMatrix::from_column_slice(5, 2, &h);
        let truth = DMatrix::from_column_slice(5, 2, &t);
        let m = DMatrix::from_column_slice(2, 2, &mix);
        prop_assume!(m.determinant().abs() > 0.2);
        prop_assume!(hat.clone().svd(false, false).singular_values.min() > 0.1);
        prop_assume!(truth.clone().svd(false, false).singular_values.min() > 0.1);
        let sigma = spd(5, &cov);
        let base = r2_subspace(&hat, &truth, &sigma).unwrap();
        prop_assert!((base - r2_subspace(&(&hat * &m), &truth, &sigma).unwrap()).abs() < 1e-10);
        prop_assert!((base - r2_subspace(&hat, &(&truth * &m), &sigma).unwrap()).abs() < 1e-10);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&base));
    }
}
