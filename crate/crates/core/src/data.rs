//! Datasets, CSV ingestion, whitening, and the synthetic generators used by
//! the R² studies.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_means, sample_covariance, sorted_symmetric_eigen, spectral_map};
use crate::rng;

/// Predictor matrix (rows are observations) paired with a response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} responses", x.nrows()),
                found: format!("{} responses", y.len()),
            });
        }
        if x.nrows() < 2 {
            return Err(Error::TooFewRows { needed: 2, found: x.nrows() });
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidArgument("dataset needs at least one predictor".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        if let Some(names) = &column_names {
            if names.len() != x.ncols() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} column names", x.ncols()),
                    found: format!("{} column names", names.len()),
                });
            }
        }
        Ok(Self { x, y, column_names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset::new(x, y, self.column_names.clone())
    }
}

/// How the response column of a CSV file is identified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    /// Zero-based column position.
    Index(usize),
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "NaN" | "nan" | "?")
}

/// Reads a comma-separated file with one header row. The response column
/// becomes `y`; every other column must be numeric and becomes a predictor.
pub fn load_csv(path: impl AsRef<Path>, response: &ColumnRef, drop_rows_with_missing: bool) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let response_idx = match response {
        ColumnRef::Name(name) => {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::ColumnNotFound(name.clone()))?
        }
        ColumnRef::Index(i) if *i < headers.len() => *i,
        ColumnRef::Index(i) => return Err(Error::ColumnNotFound(format!("index {i}"))),
    };

    let ncol = headers.len();
    let mut non_numeric = vec![false; ncol];
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != ncol {
            return Err(Error::ShapeMismatch {
                expected: format!("{ncol} fields"),
                found: format!("{} fields on data row {}", record.len(), rows.len() + 1),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                if is_missing(field) {
                    None
                } else {
                    match field.parse::<f64>() {
                        Ok(v) if v.is_finite() => Some(v),
                        Ok(_) => None,
                        Err(_) => {
                            non_numeric[c] = true;
                            None
                        }
                    }
                }
            })
            .collect();
        rows.push(row);
    }
    let bad: Vec<String> = (0..ncol).filter(|&c| non_numeric[c]).map(|c| headers[c].clone()).collect();
    if !bad.is_empty() {
        return Err(Error::NonNumericColumn(bad));
    }

    let mut kept = Vec::with_capacity(rows.len());
    for (r, row) in rows.into_iter().enumerate() {
        match row.iter().position(Option::is_none) {
            None => kept.push(row.into_iter().map(Option::unwrap).collect::<Vec<f64>>()),
            Some(_) if drop_rows_with_missing => {}
            Some(c) => {
                return Err(Error::InvalidArgument(format!(
                    "missing value in column '{}' on data row {}",
                    headers[c],
                    r + 1
                )))
            }
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewRows { needed: 2, found: kept.len() });
    }
    let predictors: Vec<usize> = (0..ncol).filter(|&c| c != response_idx).collect();
    if predictors.is_empty() {
        return Err(Error::InvalidArgument("no predictor columns besides the response".into()));
    }
    let x = DMatrix::from_fn(kept.len(), predictors.len(), |i, j| kept[i][predictors[j]]);
    let y = DVector::from_iterator(kept.len(), kept.iter().map(|row| row[response_idx]));
    let names = predictors.iter().map(|&c| headers[c].clone()).collect();
    Dataset::new(x, y, Some(names))
}

/// Affine standardization `z = W (x - mean)` with `W` the symmetric inverse
/// square root of the sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub mean: DVector<f64>,
    pub transform: DMatrix<f64>,
    pub inverse_transform: DMatrix<f64>,
    pub eigen_floor: f64,
    /// Number of covariance eigenvalues raised to `eigen_floor`.
    pub clamped: usize,
}

/// Relative eigenvalue floor applied when no explicit floor is given.
pub const DEFAULT_RELATIVE_EIGEN_FLOOR: f64 = 1e-10;

impl Whitener {
    pub fn identity(p: usize) -> Self {
        Self {
            mean: DVector::zeros(p),
            transform: DMatrix::identity(p, p),
            inverse_transform: DMatrix::identity(p, p),
            eigen_floor: f64::MIN_POSITIVE,
            clamped: 0,
        }
    }

    /// Builds the whitener from known first and second moments.
    pub fn from_moments(mean: DVector<f64>, cov: &DMatrix<f64>, eigen_floor: Option<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::ShapeMismatch {
                expected: format!("{p}x{p} covariance"),
                found: format!("{}x{}", cov.nrows(), cov.ncols()),
            });
        }
        let eig = sorted_symmetric_eigen(cov)?;
        let largest = eig.values[0];
        if largest <= 0.0 {
            return Err(Error::DegenerateData("covariance is identically zero".into()));
        }
        let floor = eigen_floor.unwrap_or(DEFAULT_RELATIVE_EIGEN_FLOOR * largest);
        if floor <= 0.0 || !floor.is_finite() {
            return Err(Error::InvalidArgument(format!("eigen floor must be positive, got {floor}")));
        }
        let clamped = eig.values.iter().filter(|&&v| v < floor).count();
        let transform = spectral_map(&eig, |v| 1.0 / v.max(floor).sqrt());
        let inverse_transform = spectral_map(&eig, |v| v.max(floor).sqrt());
        Ok(Self { mean, transform, inverse_transform, eigen_floor: floor, clamped })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn whiten(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} columns", self.dim()),
                found: format!("{} columns", x.ncols()),
            });
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        // transform is symmetric, so rows map as (W (x - mu))ᵀ = (x - mu)ᵀ W
        Ok(centered * &self.transform)
    }

    /// Maps a point back from whitened to original coordinates.
    pub fn unwhiten_point(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.inverse_transform * z + &self.mean
    }

    /// Direction `b = W η / |W η|` in original coordinates, so that `bᵀx` is a
    /// positive multiple of `ηᵀ W (x - mean)` plus a constant.
    pub fn unwhiten_direction(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        if eta.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("direction of length {}", self.dim()),
                found: format!("length {}", eta.len()),
            });
        }
        let b = &self.transform * eta;
        let norm = b.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument("direction maps to the zero vector".into()));
        }
        Ok(b / norm)
    }
}

pub fn fit_whitener(x: &DMatrix<f64>, eigen_floor: Option<f64>) -> Result<Whitener> {
    if x.nrows() < 2 {
        return Err(Error::TooFewRows { needed: 2, found: x.nrows() });
    }
    let first = x.row(0);
    if x.row_iter().all(|r| r == first) {
        return Err(Error::DegenerateData("all rows are identical".into()));
    }
    Whitener::from_moments(column_means(x), &sample_covariance(x), eigen_floor)
}

pub fn whiten(w: &Whitener, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    w.whiten(x)
}

pub fn unwhiten_direction(w: &Whitener, eta: &DVector<f64>) -> Result<DVector<f64>> {
    w.unwhiten_direction(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFunction {
    /// `x1 (x2 + x3) + 0.5 ε`
    Fun1,
    /// `(x1 + x2 + x3) / (0.5 + (x4 + x5)²) + 0.1 ε`
    Fun2,
    /// `u1 / (0.5 + (u2 + 1.5)²) + 0.5 ε` on banana-distributed predictors
    #[serde(alias = "fun3")]
    Fun3Banana,
    /// `sin(5π u1) + u2² + 0.1 ε` on banana-distributed predictors
    #[serde(alias = "fun4")]
    Fun4Banana,
    /// `x1² + 0.1 ε`
    Quad,
}

impl SyntheticFunction {
    pub fn min_dimension(self) -> usize {
        match self {
            Self::Fun1 | Self::Fun2 => 5,
            Self::Fun3Banana | Self::Fun4Banana => 2,
            Self::Quad => 1,
        }
    }

    pub fn default_noise_sd(self) -> f64 {
        match self {
            Self::Fun1 | Self::Fun3Banana => 0.5,
            Self::Fun2 | Self::Fun4Banana | Self::Quad => 0.1,
        }
    }

    /// Number of true reduction directions.
    pub fn true_rank(self) -> usize {
        match self {
            Self::Quad => 1,
            _ => 2,
        }
    }

    pub fn is_banana(self) -> bool {
        matches!(self, Self::Fun3Banana | Self::Fun4Banana)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fun1" => Some(Self::Fun1),
            "fun2" => Some(Self::Fun2),
            "fun3" | "fun3_banana" | "banana3" => Some(Self::Fun3Banana),
            "fun4" | "fun4_banana" | "banana4" => Some(Self::Fun4Banana),
            "quad" => Some(Self::Quad),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub function: SyntheticFunction,
    pub dimension: usize,
    /// Curvature of the banana transform; ignored by the Gaussian designs.
    pub banana_b: f64,
    pub noise_sd: f64,
    /// Use `x2 = u1 - b u1²` exactly as printed instead of `x2 = u2 - b u1²`.
    pub banana_literal: bool,
}

impl SyntheticSpec {
    pub fn new(function: SyntheticFunction, dimension: usize) -> Self {
        Self { function, dimension, banana_b: 0.0, noise_sd: function.default_noise_sd(), banana_literal: false }
    }

    pub fn with_banana_b(mut self, b: f64) -> Self {
        self.banana_b = b;
        self
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let min = self.function.min_dimension();
        if self.dimension < min {
            return Err(Error::InvalidSpec(format!(
                "{:?} needs dimension >= {min}, got {}",
                self.function, self.dimension
            )));
        }
        if !(self.banana_b >= 0.0 && self.banana_b.is_finite()) {
            return Err(Error::InvalidSpec(format!("banana_b must be a nonnegative real, got {}", self.banana_b)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise_sd must be nonnegative, got {}", self.noise_sd)));
        }
        Ok(())
    }

    /// Orthonormal basis (p × K) of the ground-truth reduction subspace.
    pub fn true_directions(&self) -> DMatrix<f64> {
        let p = self.dimension;
        match self.function {
            SyntheticFunction::Fun1 => {
                let mut b = DMatrix::zeros(p, 2);
                b[(0, 0)] = 1.0;
                b[(1, 1)] = FRAC_1_SQRT_2;
                b[(2, 1)] = FRAC_1_SQRT_2;
                b
            }
            SyntheticFunction::Fun2 => {
                let mut b = DMatrix::zeros(p, 2);
                let s3 = 1.0 / 3f64.sqrt();
                for i in 0..3 {
                    b[(i, 0)] = s3;
                }
                b[(3, 1)] = FRAC_1_SQRT_2;
                b[(4, 1)] = FRAC_1_SQRT_2;
                b
            }
            SyntheticFunction::Fun3Banana | SyntheticFunction::Fun4Banana => {
                let mut b = DMatrix::zeros(p, 2);
                b[(0, 0)] = 1.0;
                b[(1, 1)] = 1.0;
                b
            }
            SyntheticFunction::Quad => {
                let mut b = DMatrix::zeros(p, 1);
                b[(0, 0)] = 1.0;
                b
            }
        }
    }

    /// Maps latent standard-normal draws to predictor coordinates. Identity
    /// except for the banana designs.
    pub fn latent_to_x(&self, latent: &[f64]) -> Vec<f64> {
        let mut x = latent.to_vec();
        if self.function.is_banana() {
            let u1 = latent[0];
            let base = if self.banana_literal { u1 } else { latent[1] };
            x[1] = base - self.banana_b * u1 * u1;
        }
        x
    }

    /// Noise-free part of the response plus `noise_sd · eps`, evaluated on the
    /// latent draws (which equal `x` for the Gaussian designs).
    pub fn response(&self, latent: &[f64], eps: f64) -> f64 {
        let l = latent;
        let signal = match self.function {
            SyntheticFunction::Fun1 => l[0] * (l[1] + l[2]),
            SyntheticFunction::Fun2 => (l[0] + l[1] + l[2]) / (0.5 + (l[3] + l[4]).powi(2)),
            SyntheticFunction::Fun3Banana => l[0] / (0.5 + (l[1] + 1.5).powi(2)),
            SyntheticFunction::Fun4Banana => (5.0 * PI * l[0]).sin() + l[1] * l[1],
            SyntheticFunction::Quad => l[0] * l[0],
        };
        signal + self.noise_sd * eps
    }
}

/// Draws `n` observations. Per row the stream yields the `d` latent
/// coordinates followed by the noise draw, so a fixed seed fixes everything.
pub fn gen_synthetic(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<(Dataset, DMatrix<f64>)> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let d = spec.dimension;
    let mut rng = rng::stream(seed);
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    let mut latent = vec![0.0; d];
    for i in 0..n {
        for v in latent.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let xi = spec.latent_to_x(&latent);
        for (j, v) in xi.into_iter().enumerate() {
            x[(i, j)] = v;
        }
        y[i] = spec.response(&latent, eps);
    }
    Ok((Dataset::new(x, y, None)?, spec.true_directions()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_csv() {
        let f = write_csv("a,b\n1,2\n3,4\n");
        let ds = load_csv(f.path(), &ColumnRef::Index(1), false).unwrap();
        assert_eq!((ds.n(), ds.p()), (2, 1));
        assert_eq!(ds.y.as_slice(), &[2.0, 4.0]);
        assert_eq!(ds.column_names.as_deref(), Some(&["a".to_string()][..]));
    }

    #[test]
    fn csv_rejects_text_predictors() {
        let f = write_csv("make,len,price\nalfa,1.0,10\nbmw,2.0,20\n");
        match load_csv(f.path(), &ColumnRef::Name("price".into()), true) {
            Err(Error::NonNumericColumn(cols)) => assert_eq!(cols, vec!["make".to_string()]),
            other => panic!("expected NonNumericColumn, got {other:?}"),
        }
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            load_csv("/definitely/not/here.csv", &ColumnRef::Index(0), true),
            Err(Error::FileNotFound(_))
        ));
        let f = write_csv("a,b\n1,2\n3,4\n");
        assert!(matches!(load_csv(f.path(), &ColumnRef::Name("price".into()), true), Err(Error::ColumnNotFound(_))));
        let f = write_csv("a,b\n1,2\n,4\n");
        assert!(matches!(
            load_csv(f.path(), &ColumnRef::Index(1), true),
            Err(Error::TooFewRows { needed: 2, found: 1 })
        ));
        assert!(matches!(load_csv(f.path(), &ColumnRef::Index(1), false), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn whitener_identity_case() {
        // mean 0 and covariance exactly I
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]) * (3f64 / 4.0).sqrt();
        let w = fit_whitener(&x, None).unwrap();
        assert!((&w.transform - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
        assert!(w.mean.abs().max() < 1e-15);
    }

    #[test]
    fn whitener_two_point() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let w = fit_whitener(&x, None).unwrap();
        assert_relative_eq!(w.mean[0], 1.0);
        assert_relative_eq!(w.transform[(0, 0)], 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(w.inverse_transform[(0, 0)], 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn whitener_rejects_identical_rows() {
        let x = DMatrix::from_element(5, 3, 2.5);
        assert!(matches!(fit_whitener(&x, None), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn unwhiten_examples() {
        let w = Whitener::identity(3);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(w.unwhiten_direction(&e1).unwrap(), e1);

        let x = DMatrix::from_row_slice(3, 2, &[-1.0, -2.0, 0.0, 0.0, 1.0, 2.0]);
        let mut w = fit_whitener(&x, Some(1e-3)).unwrap();
        w.transform = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        let b = w.unwhiten_direction(&DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_relative_eq!(b[0], 0.0);
        assert_relative_eq!(b[1], 1.0);
        assert!(w.unwhiten_direction(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn fun1_and_quad_formulas() {
        let fun1 = SyntheticSpec::new(SyntheticFunction::Fun1, 10).with_noise_sd(0.0);
        let mut x = vec![0.0; 10];
        x[..3].copy_from_slice(&[1.0, 1.0, 1.0]);
        assert_eq!(fun1.response(&x, 0.7), 2.0);

        let quad = SyntheticSpec::new(SyntheticFunction::Quad, 20).with_noise_sd(0.0);
        let mut x = vec![0.0; 20];
        x[0] = 3.0;
        assert_eq!(quad.response(&x, -1.3), 9.0);
    }

    #[test]
    fn generator_shapes_and_validation() {
        let spec = SyntheticSpec::new(SyntheticFunction::Fun2, 10);
        let (ds, b) = gen_synthetic(&spec, 50, 3).unwrap();
        assert_eq!((ds.n(), ds.p()), (50, 10));
        assert_eq!(b.shape(), (10, 2));
        assert!(matches!(
            gen_synthetic(&SyntheticSpec::new(SyntheticFunction::Fun1, 4), 10, 0),
            Err(Error::InvalidSpec(_))
        ));
        assert!(gen_synthetic(&SyntheticSpec::new(SyntheticFunction::Fun3Banana, 2), 10, 0).is_ok());
        assert!(gen_synthetic(&SyntheticSpec::new(SyntheticFunction::Quad, 1), 10, 0).is_ok());
    }

    #[test]
    fn banana_transform_variants() {
        let spec = SyntheticSpec::new(SyntheticFunction::Fun3Banana, 3).with_banana_b(2.0);
        assert_eq!(spec.latent_to_x(&[1.0, 0.5, 7.0]), vec![1.0, 0.5 - 2.0, 7.0]);
        let literal = SyntheticSpec { banana_literal: true, ..spec };
        assert_eq!(literal.latent_to_x(&[1.0, 0.5, 7.0]), vec![1.0, 1.0 - 2.0, 7.0]);
    }

    #[test]
    fn true_directions_orthonormal() {
        for f in [
            SyntheticFunction::Fun1,
            SyntheticFunction::Fun2,
            SyntheticFunction::Fun3Banana,
            SyntheticFunction::Fun4Banana,
            SyntheticFunction::Quad,
        ] {
            let b = SyntheticSpec::new(f, 6).true_directions();
            let gram = b.transpose() * &b;
            let id = DMatrix::<f64>::identity(b.ncols(), b.ncols());
            assert!((gram - id).abs().max() < 1e-12, "{f:?}");
        }
    }
}
