//! Priors over `x`, samplers for `π(x | y) ∝ π(y | x) π(x)`, and conditional
//! moments of the resulting weighted sample sets.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_RELATIVE_EIGEN_FLOOR;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::linalg::{cholesky_with_jitter, column_means, sample_covariance, sorted_symmetric_eigen, spectral_map};
use crate::rng::{self, StreamRng};

/// Smallest Monte Carlo sample count accepted by the samplers.
pub const MIN_SAMPLES: usize = 100;
pub const DEFAULT_N_MC: usize = 10_000;

/// Source of `log π(y | x)`.
pub trait Likelihood: Sync {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, x: &[f64], y: f64) -> Result<f64>;
}

/// The GP posterior predictive used as the likelihood.
#[derive(Debug, Clone, Copy)]
pub struct GpLikelihood<'a> {
    pub model: &'a GpModel,
    pub include_noise: bool,
}

impl<'a> GpLikelihood<'a> {
    pub fn new(model: &'a GpModel, include_noise: bool) -> Self {
        Self { model, include_noise }
    }
}

impl Likelihood for GpLikelihood<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_likelihood(&self, x: &[f64], y: f64) -> Result<f64> {
        self.model.log_likelihood_y(x, y, self.include_noise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.shape() != (p, p) {
            return Err(Error::ShapeMismatch {
                expected: format!("{p}x{p} covariance"),
                found: format!("{}x{}", cov.nrows(), cov.ncols()),
            });
        }
        let (chol, _) = cholesky_with_jitter(&cov, 1e-12, 1e-6)?;
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (p as f64 * (2.0 * PI).ln() + log_det);
        Ok(Self { mean, cov, chol, log_norm })
    }

    fn logpdf(&self, x: &[f64]) -> f64 {
        let centered = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        let white = self.chol.solve_lower_triangular(&centered).expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * white.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// Known standard normal `N(0, I_p)`.
    StandardNormal { dim: usize },
    /// Gaussian fitted to the data (or supplied directly).
    Gaussian(GaussianPrior),
    /// The observed points themselves; sampling only.
    Empirical { points: DMatrix<f64> },
    /// Known banana law: `x₁ = u₁`, `x₂ = u₂ - b u₁²`, remaining coordinates
    /// standard normal, with `u` standard normal.
    Banana { dim: usize, curvature: f64 },
}

fn log_std_normal(v: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - 0.5 * v * v
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::StandardNormal { dim } | Prior::Banana { dim, .. } => *dim,
            Prior::Gaussian(g) => g.mean.len(),
            Prior::Empirical { points } => points.ncols(),
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, Prior::Empirical { .. })
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("point of dimension {}", self.dim()),
                found: format!("dimension {}", x.len()),
            });
        }
        match self {
            Prior::StandardNormal { .. } => Ok(x.iter().map(|&v| log_std_normal(v)).sum()),
            Prior::Gaussian(g) => Ok(g.logpdf(x)),
            Prior::Empirical { .. } => Err(Error::UnsupportedOperation("an empirical prior has no density".into())),
            Prior::Banana { curvature, .. } => {
                // unit Jacobian: u₂ = x₂ + b x₁²
                let u2 = x[1] + curvature * x[0] * x[0];
                Ok(log_std_normal(x[0]) + log_std_normal(u2) + x[2..].iter().map(|&v| log_std_normal(v)).sum::<f64>())
            }
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> DVector<f64> {
        let p = self.dim();
        match self {
            Prior::StandardNormal { .. } => DVector::from_fn(p, |_, _| rng.sample(StandardNormal)),
            Prior::Gaussian(g) => {
                let z = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
                &g.mean + &g.chol * z
            }
            Prior::Empirical { points } => {
                let i = rng.random_range(0..points.nrows());
                points.row(i).transpose()
            }
            Prior::Banana { curvature, .. } => {
                let mut x = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
                x[1] -= curvature * x[0] * x[0];
                x
            }
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            Prior::StandardNormal { dim } => DVector::zeros(*dim),
            Prior::Gaussian(g) => g.mean.clone(),
            Prior::Empirical { points } => column_means(points),
            Prior::Banana { dim, curvature } => {
                let mut m = DVector::zeros(*dim);
                m[1] = -curvature;
                m
            }
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Prior::StandardNormal { dim } => DMatrix::identity(*dim, *dim),
            Prior::Gaussian(g) => g.cov.clone(),
            Prior::Empirical { points } => sample_covariance(points),
            Prior::Banana { dim, curvature } => {
                // Var(u₂ - b u₁²) = 1 + 2b²; Cov(u₁, u₂ - b u₁²) = 0
                let mut c = DMatrix::identity(*dim, *dim);
                c[(1, 1)] = 1.0 + 2.0 * curvature * curvature;
                c
            }
        }
    }
}

/// Crude density estimate: a single Gaussian with the sample mean and the
/// sample covariance, eigenvalues clamped below at `1e-10 × λ_max`.
pub fn fit_gaussian_prior(x: &DMatrix<f64>) -> Result<Prior> {
    if x.nrows() < 2 {
        return Err(Error::TooFewRows { needed: 2, found: x.nrows() });
    }
    let first = x.row(0);
    if x.row_iter().all(|r| r == first) {
        return Err(Error::DegenerateData("all rows are identical".into()));
    }
    let cov = sample_covariance(x);
    let eig = sorted_symmetric_eigen(&cov)?;
    let floor = DEFAULT_RELATIVE_EIGEN_FLOOR * eig.values[0];
    let clamped = spectral_map(&eig, |v| v.max(floor));
    Ok(Prior::Gaussian(GaussianPrior::new(column_means(x), clamped)?))
}

pub fn prior_logpdf(prior: &Prior, x: &[f64]) -> Result<f64> {
    prior.logpdf(x)
}

pub fn prior_sample(prior: &Prior, rng: &mut StreamRng) -> DVector<f64> {
    prior.sample(rng)
}

/// Weighted posterior draws of `x` for one conditioning value.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// m × p, one draw per row.
    pub samples: DMatrix<f64>,
    /// Nonnegative, summing to one.
    pub weights: DVector<f64>,
    /// `(Σw)² / Σw²`
    pub ess: f64,
    pub acceptance_rate: Option<f64>,
    pub target_y: f64,
}

impl SampleSet {
    pub fn equal_weights(samples: DMatrix<f64>, acceptance_rate: Option<f64>, target_y: f64) -> Result<Self> {
        let m = samples.nrows();
        if m == 0 {
            return Err(Error::TooFewSamples { needed: 1, found: 0 });
        }
        Ok(Self {
            weights: DVector::from_element(m, 1.0 / m as f64),
            ess: m as f64,
            samples,
            acceptance_rate,
            target_y,
        })
    }

    /// Normalizes `exp(log_weights)` with the max-shift trick.
    pub fn from_log_weights(samples: DMatrix<f64>, log_weights: &[f64], target_y: f64) -> Result<Self> {
        let m = samples.nrows();
        if log_weights.len() != m {
            return Err(Error::ShapeMismatch {
                expected: format!("{m} weights"),
                found: format!("{} weights", log_weights.len()),
            });
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::AllWeightsZero { max_log_likelihood: max });
        }
        let raw: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights = DVector::from_iterator(m, raw.iter().map(|w| w / total));
        let ess = 1.0 / weights.norm_squared();
        Ok(Self { samples, weights, ess, acceptance_rate: None, target_y })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// CSV with one column per coordinate followed by `weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (row, weight) in self.samples.row_iter().zip(self.weights.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(weight.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainInit {
    PriorMean,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    /// Burn-in iterations as a fraction of the kept draws.
    pub burn_in_frac: f64,
    pub target_accept: f64,
    pub init: ChainInit,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self { burn_in_frac: 0.2, target_accept: 0.234, init: ChainInit::PriorMean }
    }
}

fn check_sampler_args(lik: &impl Likelihood, prior: &Prior, n_mc: usize) -> Result<()> {
    if n_mc < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("n_mc must be at least {MIN_SAMPLES}, got {n_mc}")));
    }
    if lik.dim() != prior.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("prior of dimension {}", lik.dim()),
            found: format!("dimension {}", prior.dim()),
        });
    }
    Ok(())
}

/// Adaptive random-walk Metropolis on `log π(y|x) + log π(x)`.
///
/// The proposal is `N(x, s² · (2.38²/p) · Cov_prior)`. During burn-in `log s`
/// follows a Robbins–Monro recursion toward the target acceptance rate; the
/// scale is frozen afterwards and the next `n_mc` states are kept.
///
/// A banana prior is the unit-Jacobian image of a standard normal, so its
/// chain runs on the latent coordinates (standard normal prior, likelihood
/// evaluated at the mapped point) and the kept states are mapped back. The
/// target distribution is the same; the random walk no longer has to follow
/// the curved ridge.
pub fn mcmc_sample_posterior<L: Likelihood>(
    lik: &L,
    prior: &Prior,
    y: f64,
    n_mc: usize,
    seed: u64,
    opts: &McmcOptions,
) -> Result<SampleSet> {
    check_sampler_args(lik, prior, n_mc)?;
    if !prior.has_density() {
        return Err(Error::UnsupportedOperation(
            "MCMC needs a prior density; use importance sampling with an empirical prior".into(),
        ));
    }
    if !(opts.target_accept > 0.0 && opts.target_accept < 1.0) {
        return Err(Error::InvalidArgument(format!("target_accept must lie in (0, 1), got {}", opts.target_accept)));
    }
    if !(opts.burn_in_frac >= 0.0 && opts.burn_in_frac.is_finite()) {
        return Err(Error::InvalidArgument(format!("burn_in_frac must be nonnegative, got {}", opts.burn_in_frac)));
    }
    let p = prior.dim();
    let init: DVector<f64> = match &opts.init {
        ChainInit::PriorMean => prior.mean(),
        ChainInit::Point(v) if v.len() == p => DVector::from_column_slice(v),
        ChainInit::Point(v) => {
            return Err(Error::ShapeMismatch {
                expected: format!("initial point of dimension {p}"),
                found: format!("dimension {}", v.len()),
            })
        }
    };
    match prior {
        Prior::Banana { curvature, .. } => {
            let b = *curvature;
            let latent_prior = Prior::StandardNormal { dim: p };
            let start = match opts.init {
                ChainInit::PriorMean => DVector::zeros(p),
                ChainInit::Point(_) => banana_to_latent(&init, b),
            };
            let latent_lik = |u: &DVector<f64>| lik.log_likelihood(banana_from_latent(u, b).as_slice(), y);
            let (mut kept, rate) = random_walk(&latent_prior, latent_lik, start, n_mc, seed, opts)?;
            for mut row in kept.row_iter_mut() {
                row[1] -= b * row[0] * row[0];
            }
            SampleSet::equal_weights(kept, Some(rate), y)
        }
        _ => {
            let (kept, rate) = random_walk(prior, |x| lik.log_likelihood(x.as_slice(), y), init, n_mc, seed, opts)?;
            SampleSet::equal_weights(kept, Some(rate), y)
        }
    }
}

fn banana_to_latent(x: &DVector<f64>, b: f64) -> DVector<f64> {
    let mut u = x.clone();
    u[1] += b * x[0] * x[0];
    u
}

fn banana_from_latent(u: &DVector<f64>, b: f64) -> DVector<f64> {
    let mut x = u.clone();
    x[1] -= b * u[0] * u[0];
    x
}

/// The chain itself; returns the kept states and their acceptance rate.
fn random_walk(
    prior: &Prior,
    log_lik: impl Fn(&DVector<f64>) -> Result<f64>,
    init: DVector<f64>,
    n_mc: usize,
    seed: u64,
    opts: &McmcOptions,
) -> Result<(DMatrix<f64>, f64)> {
    let p = prior.dim();
    let mut proposal_cov = prior.covariance();
    proposal_cov *= 2.38 * 2.38 / p as f64;
    let (proposal_chol, _) = cholesky_with_jitter(&proposal_cov, 1e-12, 1e-6)?;

    let log_target = |x: &DVector<f64>| -> Result<f64> {
        let lp = prior.logpdf(x.as_slice())?;
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + log_lik(x)?)
    };

    let mut current = init;
    let mut current_lp = log_target(&current)?;
    if !current_lp.is_finite() {
        return Err(Error::NonFiniteTarget);
    }

    let burn_in = (opts.burn_in_frac * n_mc as f64).ceil() as usize;
    let mut rng = rng::stream(seed);
    let mut log_scale = 0.0f64;
    let mut kept = DMatrix::zeros(n_mc, p);
    let mut accepted = 0usize;
    let mut z = DVector::zeros(p);
    for t in 0..burn_in + n_mc {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let proposal = &current + (&proposal_chol * &z) * log_scale.exp();
        let proposal_lp = log_target(&proposal)?;
        let log_ratio = proposal_lp - current_lp;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.random();
        let accept = u < accept_prob;
        if accept {
            current = proposal;
            current_lp = proposal_lp;
        }
        if t < burn_in {
            let gain = (t as f64 + 1.0).powf(-0.6);
            log_scale += gain * (accept_prob - opts.target_accept);
        } else {
            if accept {
                accepted += 1;
            }
            kept.set_row(t - burn_in, &current.transpose());
        }
    }
    Ok((kept, accepted as f64 / n_mc as f64))
}

/// Effective sample size below which importance sampling logs a warning.
pub const LOW_ESS_FRACTION: f64 = 0.01;

/// Importance sampling with the prior as proposal: `w_i ∝ π(y | x_i)`.
pub fn is_sample_posterior<L: Likelihood>(lik: &L, prior: &Prior, y: f64, n_mc: usize, seed: u64) -> Result<SampleSet> {
    check_sampler_args(lik, prior, n_mc)?;
    let p = prior.dim();
    let mut rng = rng::stream(seed);
    let mut samples = DMatrix::zeros(n_mc, p);
    let mut log_w = Vec::with_capacity(n_mc);
    for i in 0..n_mc {
        let x = prior.sample(&mut rng);
        log_w.push(lik.log_likelihood(x.as_slice(), y)?);
        samples.set_row(i, &x.transpose());
    }
    let set = SampleSet::from_log_weights(samples, &log_w, y)?;
    if set.ess < LOW_ESS_FRACTION * n_mc as f64 {
        log::warn!("low effective sample size {:.1} of {n_mc} at y = {y}", set.ess);
    }
    Ok(set)
}

/// Weighs every point of an empirical prior exactly once by `π(y | xᵢ)`
/// instead of resampling them.
pub fn weigh_points<L: Likelihood>(lik: &L, points: &DMatrix<f64>, y: f64) -> Result<SampleSet> {
    if lik.dim() != points.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("points of dimension {}", lik.dim()),
            found: format!("dimension {}", points.ncols()),
        });
    }
    let log_w = points
        .row_iter()
        .map(|r| {
            let x: Vec<f64> = r.iter().copied().collect();
            lik.log_likelihood(&x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    SampleSet::from_log_weights(points.clone(), &log_w, y)
}

/// `Σ wᵢ xᵢ`
pub fn conditional_mean(s: &SampleSet) -> DVector<f64> {
    let mut mean = DVector::zeros(s.dim());
    for (row, &w) in s.samples.row_iter().zip(s.weights.iter()) {
        if w != 0.0 {
            mean.axpy(w, &row.transpose(), 1.0);
        }
    }
    mean
}

/// `Σ wᵢ (xᵢ − x̂)(xᵢ − x̂)ᵀ / (1 − Σ wᵢ²)`, which is the usual `1/(m−1)`
/// covariance for equal weights.
pub fn conditional_cov(s: &SampleSet) -> Result<DMatrix<f64>> {
    if s.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: s.len() });
    }
    let denom = 1.0 - s.weights.norm_squared();
    if denom <= 0.0 {
        return Err(Error::TooFewSamples { needed: 2, found: 1 });
    }
    let mean = conditional_mean(s);
    let p = s.dim();
    let mut cov = DMatrix::zeros(p, p);
    let mut d = DVector::zeros(p);
    for (row, &w) in s.samples.row_iter().zip(s.weights.iter()) {
        if w == 0.0 {
            continue;
        }
        for j in 0..p {
            d[j] = row[j] - mean[j];
        }
        cov.ger(w, &d, &d, 1.0);
    }
    cov /= denom;
    Ok(cov)
}

/// Per-coordinate Monte Carlo standard error of `conditional_mean`: batch
/// means (√m batches) for Markov chains, the delta-method estimate
/// `sqrt(Σ wᵢ² (xᵢ − x̂)²)` for importance samples.
pub fn mean_standard_error(s: &SampleSet) -> DVector<f64> {
    let p = s.dim();
    let mean = conditional_mean(s);
    if s.acceptance_rate.is_some() {
        let m = s.len();
        let batches = (m as f64).sqrt().floor().max(2.0) as usize;
        let size = m / batches;
        let mut var = DVector::zeros(p);
        for b in 0..batches {
            let block = s.samples.rows(b * size, size);
            for j in 0..p {
                let bm = block.column(j).mean();
                var[j] += (bm - mean[j]).powi(2);
            }
        }
        var /= (batches - 1) as f64;
        var.map(|v| (v / batches as f64).sqrt())
    } else {
        DVector::from_fn(p, |j, _| {
            s.samples
                .column(j)
                .iter()
                .zip(s.weights.iter())
                .map(|(x, w)| (w * (x - mean[j])).powi(2))
                .sum::<f64>()
                .sqrt()
        })
    }
}
