//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Column means of a row-major observation matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Sample covariance with divisor `n - 1`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mean = column_means(x);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.tr_mul(&centered);
    cov /= (n - 1) as f64;
    symmetrize(&mut cov);
    cov
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<SortedEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigen iteration did not converge".into()))?;
    let p = m.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SortedEigen { values, vectors })
}

/// Rebuilds `V f(Λ) Vᵀ` from an eigendecomposition.
pub fn spectral_map(eig: &SortedEigen, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let p = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for j in 0..p {
        let s = f(eig.values[j]);
        scaled.column_mut(j).scale_mut(s);
    }
    let mut out = scaled * eig.vectors.transpose();
    symmetrize(&mut out);
    out
}

/// Lower Cholesky factor of a symmetric positive semidefinite matrix, adding
/// diagonal jitter on an escalating ladder until the factorization succeeds.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, rel_start: f64, rel_max: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    if let Some(c) = m.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = rel_start;
    while rel <= rel_max * (1.0 + 1e-12) {
        let jitter = rel * scale;
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = jittered.cholesky() {
            return Ok((c.l(), jitter));
        }
        rel *= 10.0;
    }
    let diag_max = (0..n).map(|i| m[(i, i)]).fold(f64::MIN, f64::max);
    let diag_min = (0..n).map(|i| m[(i, i)]).fold(f64::MAX, f64::min);
    Err(Error::FactorizationFailure { jitter: rel_max * scale, condition: diag_max / diag_min.max(f64::MIN_POSITIVE) })
}

/// Inverse of a lower-triangular matrix.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::EigenFailure("singular triangular factor".into()))
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn to_columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::ShapeMismatch { expected: format!("rows of length {p}"), found: "ragged rows".into() });
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_of_two_points() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 0.0]);
        let cov = sample_covariance(&x);
        assert_relative_eq!(cov[(0, 0)], 2.0);
        assert_relative_eq!(cov[(1, 1)], 0.0);
        assert_eq!(column_means(&x).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let eig = sorted_symmetric_eigen(&m).unwrap();
        assert_eq!(eig.values.as_slice(), &[3.0, 2.0, 1.0]);
        assert_relative_eq!(eig.vectors[(0, 0)].abs(), 1.0);
        assert_relative_eq!(eig.vectors[(2, 1)].abs(), 1.0);
        assert_relative_eq!(eig.vectors[(1, 2)].abs(), 1.0);
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let (l, jitter) = cholesky_with_jitter(&m, 1e-10, 1e-4).unwrap();
        assert!(jitter > 0.0);
        let rebuilt = &l * l.transpose();
        assert!((rebuilt - m).abs().max() < 1e-6);
    }

    #[test]
    fn jitter_ladder_gives_up() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(cholesky_with_jitter(&m, 1e-10, 1e-4), Err(Error::FactorizationFailure { .. })));
    }
}
