//! Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! The fitted model supplies the likelihood `π(y | x)` used by the Bayesian
//! estimators: a Gaussian with the GP posterior mean at `x` and the posterior
//! variance, optionally inflated by the observation noise.
//!
//! Hyperparameters are fitted by maximizing the log marginal likelihood in
//! log space, with responses centered and scaled to unit variance first. The
//! returned model reports hyperparameters in the original response units and
//! stores the response mean as its constant prior mean.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, from_rows, lower_triangular_inverse, to_rows};
use crate::optim::{self, Bounds};
use crate::rng;

/// Jitter ladder: relative to trace(K)/n, escalated ×10 up to the maximum.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub signal_sd: f64,
    pub lengthscales: Vec<f64>,
    pub noise_sd: f64,
}

impl GpHyperparams {
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[log σ₀, log λ₁ … log λ_p, log σ_n]`
    pub fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.signal_sd.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .chain(std::iter::once(self.noise_sd.ln()))
            .collect()
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let p = theta.len() - 2;
        Self {
            signal_sd: theta[0].exp(),
            lengthscales: theta[1..=p].iter().map(|v| v.exp()).collect(),
            noise_sd: theta[p + 1].exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.signal_sd) || !ok(self.noise_sd) || !self.lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::InvalidArgument(format!("hyperparameters must be positive and finite: {self:?}")));
        }
        Ok(())
    }
}

/// `σ₀² exp(-½ Σ (xᵢ - x'ᵢ)² / λᵢ²)`
pub fn kernel_eval(hp: &GpHyperparams, x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != hp.dim() || x2.len() != hp.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("points of dimension {}", hp.dim()),
            found: format!("{} and {}", x.len(), x2.len()),
        });
    }
    let r2: f64 = x.iter().zip(x2).zip(&hp.lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
    Ok(hp.signal_sd * hp.signal_sd * (-0.5 * r2).exp())
}

fn kernel_matrix(hp: &GpHyperparams, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let scaled = scale_rows(x, &hp.lengthscales);
    let s2 = hp.signal_sd * hp.signal_sd;
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        k[(a, a)] = s2;
        for b in 0..a {
            let r2: f64 = (0..x.ncols()).map(|i| (scaled[(a, i)] - scaled[(b, i)]).powi(2)).sum();
            let v = s2 * (-0.5 * r2).exp();
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

fn scale_rows(x: &DMatrix<f64>, lengthscales: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] / lengthscales[j])
}

fn check_training_shapes(hp: &GpHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.ncols() != hp.dim() || x.nrows() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("n x {} inputs with n responses", hp.dim()),
            found: format!("{}x{} inputs with {} responses", x.nrows(), x.ncols(), y.len()),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::TooFewRows { needed: 1, found: 0 });
    }
    Ok(())
}

/// Log marginal likelihood with zero prior mean and its gradient with
/// respect to `[log σ₀, log λ₁ … log λ_p, log σ_n]`.
pub fn log_marginal_likelihood(hp: &GpHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
    lml_with_jitter(hp, x, y, JITTER_START)
}

fn lml_with_jitter(hp: &GpHyperparams, x: &DMatrix<f64>, y: &DVector<f64>, jitter: f64) -> Result<(f64, Vec<f64>)> {
    hp.validate()?;
    check_training_shapes(hp, x, y)?;
    let n = x.nrows();
    let p = x.ncols();
    let kf = kernel_matrix(hp, x);
    let mut ky = kf.clone();
    let noise_var = hp.noise_sd * hp.noise_sd;
    for i in 0..n {
        ky[(i, i)] += noise_var;
    }
    let (l, _) = cholesky_with_jitter(&ky, jitter, JITTER_MAX)?;
    let alpha = {
        let tmp =
            l.solve_lower_triangular(y).ok_or(Error::FactorizationFailure { jitter: 0.0, condition: f64::INFINITY })?;
        l.tr_solve_lower_triangular(&tmp)
            .ok_or(Error::FactorizationFailure { jitter: 0.0, condition: f64::INFINITY })?
    };
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();

    let linv = lower_triangular_inverse(&l)?;
    let ky_inv = linv.tr_mul(&linv);
    // W = α αᵀ − K⁻¹; dL/dθ = ½ Σ_ab W_ab ∂K_ab/∂θ
    let mut w = &alpha * alpha.transpose();
    w -= &ky_inv;

    let mut grad = vec![0.0; p + 2];
    grad[0] = w.component_mul(&kf).sum();
    for i in 0..p {
        let inv_l2 = 1.0 / (hp.lengthscales[i] * hp.lengthscales[i]);
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..a {
                let d = x[(a, i)] - x[(b, i)];
                acc += w[(a, b)] * kf[(a, b)] * d * d;
            }
        }
        // off-diagonal pairs counted twice by symmetry, halved by the ½
        grad[i + 1] = acc * inv_l2;
    }
    grad[p + 1] = noise_var * w.trace();
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFitOptions {
    /// Random restarts in addition to the documented initial point.
    pub n_restarts: usize,
    pub max_iters: usize,
    /// Starting rung of the jitter ladder, relative to trace(K)/n.
    pub jitter: f64,
    /// Scale responses to unit variance before fitting (they are always centered).
    pub standardize_y: bool,
    pub seed: u64,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self { n_restarts: 10, max_iters: 200, jitter: JITTER_START, standardize_y: true, seed: 0 }
    }
}

/// Optimizer trace for one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartRecord {
    pub initial_log_params: Vec<f64>,
    pub initial_value: Option<f64>,
    pub final_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    /// Hyperparameters in the units of the training responses.
    pub hyperparams: GpHyperparams,
    pub train_x: DMatrix<f64>,
    pub train_y: DVector<f64>,
    pub prior_mean_constant: f64,
    /// Lower Cholesky factor of K(X,X) + σ_n² I (+ jitter).
    pub chol_factor: DMatrix<f64>,
    /// (K(X,X) + σ_n² I)⁻¹ (Y − μ)
    pub alpha: DVector<f64>,
    pub jitter: f64,
    /// Objective values per optimizer start, in standardized units. Empty for
    /// models built directly from hyperparameters.
    pub fit_log: Vec<StartRecord>,
    chol_inverse: DMatrix<f64>,
    scaled_train: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GpDocument {
    hyperparams: GpHyperparams,
    prior_mean_constant: f64,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
}

impl GpModel {
    /// Builds the predictive model for fixed hyperparameters.
    pub fn from_parts(
        hyperparams: GpHyperparams,
        train_x: DMatrix<f64>,
        train_y: DVector<f64>,
        prior_mean_constant: f64,
    ) -> Result<Self> {
        hyperparams.validate()?;
        check_training_shapes(&hyperparams, &train_x, &train_y)?;
        let n = train_x.nrows();
        let mut ky = kernel_matrix(&hyperparams, &train_x);
        let noise_var = hyperparams.noise_sd.powi(2);
        for i in 0..n {
            ky[(i, i)] += noise_var;
        }
        let (chol_factor, jitter) = cholesky_with_jitter(&ky, JITTER_START, JITTER_MAX)?;
        let centered = train_y.map(|v| v - prior_mean_constant);
        let chol_inverse = lower_triangular_inverse(&chol_factor)?;
        let alpha = chol_inverse.tr_mul(&(&chol_inverse * centered));
        let scaled = scale_rows(&train_x, &hyperparams.lengthscales);
        let scaled_train = scaled.transpose().as_slice().to_vec();
        Ok(Self {
            hyperparams,
            train_x,
            train_y,
            prior_mean_constant,
            chol_factor,
            alpha,
            jitter,
            fit_log: Vec::new(),
            chol_inverse,
            scaled_train,
        })
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.dim()
    }

    pub fn n_train(&self) -> usize {
        self.train_x.nrows()
    }

    fn cross_kernel(&self, x: &[f64]) -> DVector<f64> {
        let p = self.dim();
        let s2 = self.hyperparams.signal_sd.powi(2);
        let xs: Vec<f64> = x.iter().zip(&self.hyperparams.lengthscales).map(|(v, l)| v / l).collect();
        DVector::from_iterator(
            self.n_train(),
            self.scaled_train.chunks_exact(p).map(|row| {
                let r2: f64 = row.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum();
                s2 * (-0.5 * r2).exp()
            }),
        )
    }

    /// Posterior mean and (nonnegative) variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("point of dimension {}", self.dim()),
                found: format!("dimension {}", x.len()),
            });
        }
        let k = self.cross_kernel(x);
        let mean = self.prior_mean_constant + k.dot(&self.alpha);
        let v = &self.chol_inverse * &k;
        let var = (self.hyperparams.signal_sd.powi(2) - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }

    /// `log N(y; μ_pos(x), σ²_pos(x) [+ σ_n²])`
    pub fn log_likelihood_y(&self, x: &[f64], y: f64, include_noise: bool) -> Result<f64> {
        let (mean, var) = self.predict(x)?;
        let v = if include_noise { var + self.hyperparams.noise_sd.powi(2) } else { var };
        if v.is_nan() || v <= f64::MIN_POSITIVE {
            return Err(Error::ZeroVariance);
        }
        Ok(-0.5 * (2.0 * PI * v).ln() - 0.5 * (y - mean).powi(2) / v)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GpDocument {
            hyperparams: self.hyperparams.clone(),
            prior_mean_constant: self.prior_mean_constant,
            train_x: to_rows(&self.train_x),
            train_y: self.train_y.iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses a model document; the factorization is recomputed.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GpDocument = serde_json::from_str(text).map_err(|e| Error::ModelParse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        let x = from_rows(&doc.train_x)?;
        let y = DVector::from_vec(doc.train_y);
        Self::from_parts(doc.hyperparams, x, y, doc.prior_mean_constant)
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn column_sd(x: &DMatrix<f64>, j: usize) -> f64 {
    let n = x.nrows() as f64;
    let col = x.column(j);
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    var.sqrt()
}

/// Maximum-likelihood fit with multiple starts. The first start uses
/// lengthscales equal to the per-coordinate standard deviations, σ₀ = 1 and
/// σ_n = 0.1 on the standardized responses; restarts perturb every log
/// parameter by an independent standard normal draw.
pub fn fit_gp(x: &DMatrix<f64>, y: &DVector<f64>, opts: &GpFitOptions) -> Result<GpModel> {
    let n = x.nrows();
    let p = x.ncols();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    if y.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} responses"),
            found: format!("{} responses", y.len()),
        });
    }
    let y_mean = y.mean();
    let y_sd = {
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    };
    let scale = if y_sd > 0.0 && opts.standardize_y {
        y_sd
    } else {
        if y_sd == 0.0 {
            log::warn!("NoiseOnlyWarning: constant responses, fitted GP is degenerate");
        }
        1.0
    };
    let y_std = y.map(|v| (v - y_mean) / scale);
    let sd_std = if y_sd > 0.0 { y_sd / scale } else { 1.0 };

    let col_sd: Vec<f64> = (0..p)
        .map(|j| match column_sd(x, j) {
            s if s > 0.0 && s.is_finite() => s,
            _ => 1.0,
        })
        .collect();
    let initial = GpHyperparams { signal_sd: sd_std, lengthscales: col_sd.clone(), noise_sd: 0.1 * sd_std }.to_log();
    let mut lower = vec![(1e-2 * sd_std).ln()];
    let mut upper = vec![(1e2 * sd_std).ln()];
    for s in &col_sd {
        lower.push((1e-2 * s).ln());
        upper.push((1e3 * s).ln());
    }
    lower.push((1e-4 * sd_std).ln());
    upper.push((10.0 * sd_std).ln());
    let bounds = Bounds { lower, upper };

    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let hp = GpHyperparams::from_log(theta);
        lml_with_jitter(&hp, x, &y_std, opts.jitter).ok().map(|(v, g)| (-v, g.into_iter().map(|d| -d).collect()))
    };

    let mut rng = rng::stream(opts.seed);
    let mut starts = vec![initial.clone()];
    for _ in 0..opts.n_restarts {
        starts.push(
            initial
                .iter()
                .enumerate()
                .map(|(i, v)| (v + rng.sample::<f64, _>(StandardNormal)).clamp(bounds.lower[i], bounds.upper[i]))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut log = Vec::with_capacity(starts.len());
    let mut first_failure = None;
    for (s, start) in starts.into_iter().enumerate() {
        let initial_value = objective(&start).map(|(v, _)| -v).filter(|v| v.is_finite());
        let outcome = initial_value.and_then(|_| optim::minimize(objective, &start, &bounds, opts.max_iters));
        let final_value = outcome.as_ref().map(|o| -o.value);
        if let Some(o) = outcome {
            if best.as_ref().is_none_or(|(_, v)| -o.value > *v) {
                best = Some((o.x, -o.value));
            }
        } else if first_failure.is_none() {
            first_failure = Some(s);
        }
        log.push(StartRecord { initial_log_params: start, initial_value, final_value });
    }
    let Some((theta, _)) = best else {
        return Err(Error::NonFiniteObjective { start: first_failure.unwrap_or(0) });
    };

    let mut hp = GpHyperparams::from_log(&theta);
    hp.signal_sd *= scale;
    hp.noise_sd *= scale;
    let mut model = GpModel::from_parts(hp, x.clone(), y.clone(), y_mean)?;
    model.fit_log = log;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hp(signal: f64, ls: &[f64], noise: f64) -> GpHyperparams {
        GpHyperparams { signal_sd: signal, lengthscales: ls.to_vec(), noise_sd: noise }
    }

    #[test]
    fn kernel_examples() {
        let h = hp(1.0, &[1.0], 0.1);
        assert_relative_eq!(kernel_eval(&h, &[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(kernel_eval(&h, &[0.0], &[2.0]).unwrap(), (-2f64).exp(), epsilon = 1e-15);
        let h = hp(2.0, &[1.0, 2.0], 0.1);
        let v = kernel_eval(&h, &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_relative_eq!(v, 4.0 * (-1f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(v, 1.471518, epsilon = 1e-6);
        assert!(matches!(kernel_eval(&h, &[0.0], &[1.0, 2.0]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn lml_single_point() {
        let x = DMatrix::from_element(1, 1, 0.0);
        let y = DVector::from_element(1, 0.0);
        let (v, _) = log_marginal_likelihood(&hp(1.0, &[1.0], 1.0), &x, &y).unwrap();
        assert_relative_eq!(v, -0.5 * (2.0 * PI * 2.0).ln(), epsilon = 1e-14);
        assert_relative_eq!(v, -1.265512, epsilon = 1e-6);
    }

    #[test]
    fn lml_zero_response_is_logdet_only() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.5, -0.3, 2.0]);
        let y = DVector::zeros(3);
        let h = hp(1.3, &[0.7, 1.1], 0.2);
        let (v, _) = log_marginal_likelihood(&h, &x, &y).unwrap();
        let mut ky = kernel_matrix(&h, &x);
        for i in 0..3 {
            ky[(i, i)] += 0.04;
        }
        let det = ky.determinant();
        assert_relative_eq!(v, -0.5 * det.ln() - 1.5 * (2.0 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn predict_single_training_point_closed_form() {
        let h = hp(1.5, &[0.8, 1.7], 0.3);
        let x0 = [0.2, -0.4];
        let y0 = 1.7;
        let model =
            GpModel::from_parts(h.clone(), DMatrix::from_row_slice(1, 2, &x0), DVector::from_element(1, y0), 0.0)
                .unwrap();
        let mut r = rng::stream(11);
        for _ in 0..50 {
            let x = [r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)];
            let k = kernel_eval(&h, &x, &x0).unwrap();
            let denom = h.signal_sd.powi(2) + h.noise_sd.powi(2);
            let (mean, var) = model.predict(&x).unwrap();
            assert_relative_eq!(mean, k * y0 / denom, epsilon = 1e-10);
            assert_relative_eq!(var, h.signal_sd.powi(2) - k * k / denom, epsilon = 1e-10);
        }
    }

    #[test]
    fn predict_limits() {
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.5]);
        let y = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        let model = GpModel::from_parts(hp(1.0, &[1.0], 1e-8), x, y, 0.0).unwrap();
        let (m, v) = model.predict(&[0.0]).unwrap();
        assert!((m + 0.2).abs() < 1e-4, "{m}");
        assert!(v < 1e-4);
        let (m, v) = model.predict(&[40.0]).unwrap();
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-6);
        assert!(matches!(model.predict(&[0.0, 1.0]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn likelihood_mode_and_noise_flag() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let model = GpModel::from_parts(hp(1.0, &[0.7], 0.3), x, y, 0.0).unwrap();
        let (mean, var) = model.predict(&[0.0]).unwrap();
        let with = model.log_likelihood_y(&[0.0], mean, true).unwrap();
        let without = model.log_likelihood_y(&[0.0], mean, false).unwrap();
        assert_relative_eq!(with, -0.5 * (2.0 * PI * (var + 0.09)).ln(), epsilon = 1e-12);
        assert_relative_eq!(without, -0.5 * (2.0 * PI * var).ln(), epsilon = 1e-12);
        // both modes are Gaussian densities in y; the variances differ by exactly σ_n²
        let v_with = (-2.0 * with).exp() / (2.0 * PI);
        let v_without = (-2.0 * without).exp() / (2.0 * PI);
        assert_relative_eq!(v_with - v_without, 0.09, epsilon = 1e-10);
    }

    #[test]
    fn likelihood_integrates_to_one() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.1, 1.0, -0.5, -0.7, 0.4]);
        let y = DVector::from_vec(vec![0.5, 1.5, -0.2]);
        let model = GpModel::from_parts(hp(1.2, &[0.9, 1.4], 0.25), x, y, 0.3).unwrap();
        let q = [0.3, 0.2];
        let (mean, var) = model.predict(&q).unwrap();
        let sd = (var + 0.0625).sqrt();
        // composite Simpson over ±12 sd with 1000 intervals
        let (a, b, m) = (mean - 12.0 * sd, mean + 12.0 * sd, 1000);
        let h = (b - a) / m as f64;
        let mut total = 0.0;
        for i in 0..=m {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            total += w * model.log_likelihood_y(&q, a + i as f64 * h, true).unwrap().exp();
        }
        total *= h / 3.0;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn zero_variance_is_reported() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let mut model = GpModel::from_parts(hp(1.0, &[0.7], 1e-6), x, y, 0.0).unwrap();
        // force an exactly interpolating, noise-free model
        model.hyperparams.noise_sd = 1e-300;
        model.hyperparams.signal_sd = 0.0;
        assert!(matches!(model.log_likelihood_y(&[0.0], 1.0, false), Err(Error::ZeroVariance)));
    }

    #[test]
    fn fit_minimal_dataset() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        let model = fit_gp(&x, &y, &GpFitOptions::default()).unwrap();
        assert_eq!(model.chol_factor.shape(), (2, 2));
        assert_eq!(model.chol_factor[(0, 1)], 0.0);
        assert_eq!(model.fit_log.len(), 11);
    }

    #[test]
    fn fit_never_below_any_start() {
        let mut r = rng::stream(5);
        let x = DMatrix::from_fn(25, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(25, |i, _| (2.0 * x[(i, 0)]).sin() + 0.1 * r.sample::<f64, _>(StandardNormal));
        let model = fit_gp(&x, &y, &GpFitOptions { seed: 3, ..Default::default() }).unwrap();
        let best = model.fit_log.iter().filter_map(|s| s.final_value).fold(f64::MIN, f64::max);
        for s in &model.fit_log {
            if let (Some(i), Some(f)) = (s.initial_value, s.final_value) {
                assert!(f >= i - 1e-9);
                assert!(best >= i);
            }
        }
    }

    #[test]
    fn zero_restarts_uses_documented_start() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 3.0, 2.0, 5.0, 3.0, 7.5]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.5, 2.0]);
        let opts = GpFitOptions { n_restarts: 0, ..Default::default() };
        let model = fit_gp(&x, &y, &opts).unwrap();
        assert_eq!(model.fit_log.len(), 1);
        let start = GpHyperparams::from_log(&model.fit_log[0].initial_log_params);
        assert_relative_eq!(start.signal_sd, 1.0, epsilon = 1e-12);
        assert_relative_eq!(start.noise_sd, 0.1, epsilon = 1e-12);
        assert_relative_eq!(start.lengthscales[0], column_sd(&x, 0), epsilon = 1e-12);
        assert_relative_eq!(start.lengthscales[1], column_sd(&x, 1), epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip_and_parse_error() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let model = fit_gp(&x, &y, &GpFitOptions { n_restarts: 2, ..Default::default() }).unwrap();
        let text = model.to_json().unwrap();
        let back = GpModel::from_json(&text).unwrap();
        for q in [[0.0], [1.0], [0.37]] {
            let (m1, v1) = model.predict(&q).unwrap();
            let (m2, v2) = back.predict(&q).unwrap();
            assert!((m1 - m2).abs() < 1e-10 && (v1 - v2).abs() < 1e-10);
        }
        let broken = "{\n  \"hyperparams\": {\n    \"signal_sd\": oops";
        match GpModel::from_json(broken) {
            Err(Error::ModelParse { offset, .. }) => assert_eq!(&broken[offset..offset + 1], "o"),
            other => panic!("expected ModelParse, got {other:?}"),
        }
    }
}
