//! The four estimators (SIR, SAVE, BIR, BAVE), slicing, eigendecomposition of
//! candidate matrices, and subspace-accuracy metrics.
//!
//! Estimators work in whitened coordinates and return directions in that
//! frame; [`reduce`] runs the whole pipeline and maps directions back.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fit_whitener, Dataset, Whitener};
use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpFitOptions, GpModel};
use crate::inference::{
    conditional_cov, conditional_mean, fit_gaussian_prior, is_sample_posterior, mcmc_sample_posterior, weigh_points,
    GpLikelihood, Likelihood, McmcOptions, Prior, SampleSet, DEFAULT_N_MC,
};
use crate::linalg::{sample_covariance, sorted_symmetric_eigen, symmetrize};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Sir,
    Save,
    Bir,
    Bave,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sir, Method::Save, Method::Bir, Method::Bave];

    pub fn is_bayesian(self) -> bool {
        matches!(self, Method::Bir | Method::Bave)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Some(Method::Sir),
            "save" => Some(Method::Save),
            "bir" => Some(Method::Bir),
            "bave" => Some(Method::Bave),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sir => "SIR",
            Method::Save => "SAVE",
            Method::Bir => "BIR",
            Method::Bave => "BAVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Mcmc,
    Is,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceStats {
    pub h: usize,
    /// Slice index of every observation.
    pub assignments: Vec<usize>,
    pub counts: Vec<usize>,
    pub proportions: DVector<f64>,
    /// H × p, filled by [`slice_moments`].
    pub slice_means: Option<DMatrix<f64>>,
    pub slice_covs: Option<Vec<DMatrix<f64>>>,
}

/// Equal-count slicing: stable sort on `y`, contiguous groups of size
/// `⌊n/H⌋` or `⌈n/H⌉` with the larger groups first.
pub fn slice_partition(y: &DVector<f64>, h: usize) -> Result<SliceStats> {
    let n = y.len();
    if h < 2 || h > n {
        return Err(Error::TooManySlices { slices: h, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let (base, extra) = (n / h, n % h);
    let counts: Vec<usize> = (0..h).map(|s| base + usize::from(s < extra)).collect();
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for (s, &c) in counts.iter().enumerate() {
        for &i in &order[pos..pos + c] {
            assignments[i] = s;
        }
        pos += c;
    }
    let proportions = DVector::from_iterator(h, counts.iter().map(|&c| c as f64 / n as f64));
    Ok(SliceStats { h, assignments, counts, proportions, slice_means: None, slice_covs: None })
}

/// Fills slice means and, if requested, within-slice covariances (divisor
/// `n_h − 1`).
pub fn slice_moments(z: &DMatrix<f64>, stats: &mut SliceStats, with_covs: bool) -> Result<()> {
    let p = z.ncols();
    let mut means = DMatrix::zeros(stats.h, p);
    for (i, &s) in stats.assignments.iter().enumerate() {
        let mut row = means.row_mut(s);
        row += z.row(i);
    }
    for (s, &c) in stats.counts.iter().enumerate() {
        let mut row = means.row_mut(s);
        row /= c as f64;
    }
    if with_covs {
        if let Some(&smallest) = stats.counts.iter().min() {
            if smallest < 2 {
                return Err(Error::SliceTooSmall { slices: stats.h, n: z.nrows() });
            }
        }
        let mut covs = vec![DMatrix::zeros(p, p); stats.h];
        let mut d = DVector::zeros(p);
        for (i, &s) in stats.assignments.iter().enumerate() {
            for j in 0..p {
                d[j] = z[(i, j)] - means[(s, j)];
            }
            covs[s].ger(1.0, &d, &d, 1.0);
        }
        for (cov, &c) in covs.iter_mut().zip(&stats.counts) {
            *cov /= (c - 1) as f64;
        }
        stats.slice_covs = Some(covs);
    }
    stats.slice_means = Some(means);
    Ok(())
}

pub fn default_slices(method: Method, n: usize) -> usize {
    match method {
        Method::Save => 5.min(n / 4),
        _ => 10.min(n / 2),
    }
}

/// Per-observation sampler diagnostics for the Bayesian estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub j: usize,
    pub y: f64,
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_point: Vec<PointDiagnostics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrResult {
    pub method: Method,
    /// p × K, unit columns.
    pub directions: DMatrix<f64>,
    /// Full spectrum of the candidate matrix, descending.
    pub eigenvalues: DVector<f64>,
    /// The decomposed Ĉ, in whitened coordinates.
    pub candidate_matrix: DMatrix<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct DrResultDoc<'a> {
    method: Method,
    k: usize,
    p: usize,
    directions: Vec<Vec<f64>>,
    eigenvalues: &'a [f64],
    candidate_matrix: Vec<Vec<f64>>,
    diagnostics: &'a Diagnostics,
}

impl DrResult {
    pub fn k(&self) -> usize {
        self.directions.ncols()
    }

    /// Directions as a list of columns.
    pub fn to_json(&self) -> Result<String> {
        let doc = DrResultDoc {
            method: self.method,
            k: self.k(),
            p: self.directions.nrows(),
            directions: crate::linalg::to_columns(&self.directions),
            eigenvalues: self.eigenvalues.as_slice(),
            candidate_matrix: crate::linalg::to_rows(&self.candidate_matrix),
            diagnostics: &self.diagnostics,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

const DEGENERATE_GAP_REL: f64 = 1e-10;

/// Fixes the sign of an eigenvector: largest-magnitude component positive;
/// on a magnitude tie the first nonzero component is made positive.
fn canonical_sign(v: &mut DVector<f64>) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let tol = 1e-12 * max;
    let leaders: Vec<f64> = v.iter().copied().filter(|x| (x.abs() - max).abs() <= tol).collect();
    let sign = if leaders.iter().all(|&x| x > 0.0) || leaders.iter().all(|&x| x < 0.0) {
        leaders[0].signum()
    } else {
        v.iter().copied().find(|&x| x != 0.0).map_or(1.0, f64::signum)
    };
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Leading `k` eigenvectors (as columns) and the full descending spectrum of
/// the symmetrized `c`. The third element holds a warning when `λ_K` and
/// `λ_{K+1}` coincide, so the K-th direction is not identified.
pub fn top_k_eigvectors(c: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DVector<f64>, Option<String>)> {
    let p = c.nrows();
    if c.ncols() != p {
        return Err(Error::ShapeMismatch { expected: "square matrix".into(), found: format!("{}x{}", p, c.ncols()) });
    }
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!("K must lie in 1..={p}, got {k}")));
    }
    let mut sym = c.clone();
    symmetrize(&mut sym);
    let eig = sorted_symmetric_eigen(&sym).map_err(|e| match e {
        Error::EigenFailure(_) => e,
        other => Error::EigenFailure(other.to_string()),
    })?;
    let mut vectors = DMatrix::zeros(p, k);
    for i in 0..k {
        let mut v = eig.vectors.column(i).into_owned();
        canonical_sign(&mut v);
        vectors.set_column(i, &v);
    }
    let warning = (k < p)
        .then(|| {
            let (a, b) = (eig.values[k - 1], eig.values[k]);
            let scale = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            ((a - b).abs() <= DEGENERATE_GAP_REL * scale)
                .then(|| format!("DegenerateGap: eigenvalues {k} and {} coincide ({a:e} vs {b:e})", k + 1))
        })
        .flatten();
    Ok((vectors, eig.values, warning))
}

fn check_k(k: usize, p: usize) -> Result<()> {
    if k == 0 || k >= p {
        return Err(Error::InvalidArgument(format!("K must satisfy 1 <= K < p = {p}, got {k}")));
    }
    Ok(())
}

fn finish(method: Method, candidate: DMatrix<f64>, k: usize, mut diagnostics: Diagnostics) -> Result<DrResult> {
    let (directions, eigenvalues, warning) = top_k_eigvectors(&candidate, k)?;
    if let Some(w) = warning {
        log::warn!("{method}: {w}");
        diagnostics.warnings.push(w);
    }
    let mut candidate_matrix = candidate;
    symmetrize(&mut candidate_matrix);
    Ok(DrResult { method, directions, eigenvalues, candidate_matrix, diagnostics })
}

/// `Ĉ = Σ_h p̂_h x̂_h x̂_hᵀ` from the slice means of whitened data.
pub fn sir_candidate(z: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> Result<DMatrix<f64>> {
    let mut stats = slice_partition(y, h)?;
    slice_moments(z, &mut stats, false)?;
    let means = stats.slice_means.as_ref().expect("filled above");
    let p = z.ncols();
    let mut c = DMatrix::zeros(p, p);
    for s in 0..h {
        let m = means.row(s).transpose();
        c.ger(stats.proportions[s], &m, &m, 1.0);
    }
    Ok(c)
}

pub fn sir(z: &DMatrix<f64>, y: &DVector<f64>, h: usize, k: usize) -> Result<DrResult> {
    check_shapes(z, y)?;
    check_k(k, z.ncols())?;
    let c = sir_candidate(z, y, h)?;
    finish(Method::Sir, c, k, Diagnostics { slices: Some(h), ..Default::default() })
}

fn check_shapes(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} responses", z.nrows()),
            found: format!("{} responses", y.len()),
        });
    }
    Ok(())
}

/// `Σ_h p̂_h (I − M̂_h)²`. Reduces `h` to `⌊n/2⌋` when a slice would hold a
/// single point; the reduction is reported in the returned warning.
pub fn save_candidate(z: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> Result<(DMatrix<f64>, usize, Option<String>)> {
    let n = z.nrows();
    let mut used = h;
    let mut warning = None;
    if h >= 2 && n / h < 2 {
        used = n / 2;
        if used < 2 {
            return Err(Error::SliceTooSmall { slices: h, n });
        }
        let w = format!("SAVE needs two points per slice; reduced H from {h} to {used}");
        log::warn!("{w}");
        warning = Some(w);
    }
    let mut stats = slice_partition(y, used)?;
    slice_moments(z, &mut stats, true)?;
    let p = z.ncols();
    let eye = DMatrix::<f64>::identity(p, p);
    let mut c = DMatrix::zeros(p, p);
    for (s, m) in stats.slice_covs.as_ref().expect("filled above").iter().enumerate() {
        let d = &eye - m;
        c += (&d * &d) * stats.proportions[s];
    }
    Ok((c, used, warning))
}

pub fn save(z: &DMatrix<f64>, y: &DVector<f64>, h: usize, k: usize) -> Result<DrResult> {
    check_shapes(z, y)?;
    check_k(k, z.ncols())?;
    let (c, used, warning) = save_candidate(z, y, h)?;
    let diagnostics = Diagnostics { slices: Some(used), warnings: warning.into_iter().collect(), ..Default::default() };
    finish(Method::Save, c, k, diagnostics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesOptions {
    pub n_mc: usize,
    pub sampler: Sampler,
    pub mcmc: McmcOptions,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self { n_mc: DEFAULT_N_MC, sampler: Sampler::Mcmc, mcmc: McmcOptions::default() }
    }
}

/// Posterior moments of `x` for every observed response.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummaries {
    /// n × p, row j holds `x̂_j`.
    pub means: DMatrix<f64>,
    pub covs: Option<Vec<DMatrix<f64>>>,
    pub diagnostics: Vec<PointDiagnostics>,
}

impl PosteriorSummaries {
    /// Re-expresses the moments in the whitened frame of `w`.
    pub fn whitened(&self, w: &Whitener) -> Result<Self> {
        let means = w.whiten(&self.means)?;
        let covs = self.covs.as_ref().map(|cs| cs.iter().map(|m| w.transform.transpose() * m * &w.transform).collect());
        Ok(Self { means, covs, diagnostics: self.diagnostics.clone() })
    }
}

fn draw(lik: &impl Likelihood, prior: &Prior, y: f64, opts: &BayesOptions, seed: u64) -> Result<SampleSet> {
    match (prior, opts.sampler) {
        (Prior::Empirical { points }, _) => weigh_points(lik, points, y),
        (_, Sampler::Is) => is_sample_posterior(lik, prior, y, opts.n_mc, seed),
        (_, Sampler::Mcmc) => mcmc_sample_posterior(lik, prior, y, opts.n_mc, seed, &opts.mcmc),
    }
}

/// Samples `π(x | y_j)` for every `j` in parallel (stream seed derived from
/// `seed` and `j`) and summarizes each sample set.
pub fn posterior_summaries<L: Likelihood>(
    y: &DVector<f64>,
    lik: &L,
    prior: &Prior,
    opts: &BayesOptions,
    seed: u64,
    with_covs: bool,
) -> Result<PosteriorSummaries> {
    let per_point: Vec<(DVector<f64>, Option<DMatrix<f64>>, PointDiagnostics)> = (0..y.len())
        .into_par_iter()
        .map(|j| {
            let yj = y[j];
            let run = || -> Result<_> {
                let set = draw(lik, prior, yj, opts, derive_seed(seed, &[j as u64]))?;
                let mean = conditional_mean(&set);
                let cov = if with_covs { Some(conditional_cov(&set)?) } else { None };
                let diag = PointDiagnostics { j, y: yj, ess: set.ess, acceptance_rate: set.acceptance_rate };
                Ok((mean, cov, diag))
            };
            run().map_err(|e| e.context(format!("posterior sampling for observation j = {j} (y = {yj})")))
        })
        .collect::<Result<_>>()?;
    let p = prior.dim();
    let mut means = DMatrix::zeros(y.len(), p);
    let mut covs = with_covs.then(|| Vec::with_capacity(y.len()));
    let mut diagnostics = Vec::with_capacity(y.len());
    for (j, (mean, cov, diag)) in per_point.into_iter().enumerate() {
        means.set_row(j, &mean.transpose());
        if let (Some(cs), Some(c)) = (covs.as_mut(), cov) {
            cs.push(c);
        }
        diagnostics.push(diag);
    }
    Ok(PosteriorSummaries { means, covs, diagnostics })
}

/// Sample covariance (divisor n − 1) of the posterior means.
pub fn bir_candidate(s: &PosteriorSummaries) -> DMatrix<f64> {
    sample_covariance(&s.means)
}

/// `(1/n) Σ_j (I − M̂_j)²`
pub fn bave_candidate(s: &PosteriorSummaries) -> Result<DMatrix<f64>> {
    let covs = s.covs.as_ref().ok_or_else(|| Error::InvalidArgument("BAVE needs posterior covariances".into()))?;
    let p = s.means.ncols();
    let eye = DMatrix::<f64>::identity(p, p);
    let mut c = DMatrix::zeros(p, p);
    for m in covs {
        let d = &eye - m;
        c += &d * &d;
    }
    Ok(c / covs.len() as f64)
}

fn low_ess_warning(diags: &[PointDiagnostics], n_mc: usize) -> Option<String> {
    let low = diags.iter().filter(|d| d.acceptance_rate.is_none() && d.ess < 0.01 * n_mc as f64).count();
    (low > 0).then(|| format!("{low} of {} importance-sampling sets have ESS below 1% of n_mc", diags.len()))
}

/// Shared body of [`bir`] and [`bave`]. `frame` maps sampler coordinates
/// into the whitened frame when the posterior was sampled in the original
/// predictor coordinates.
#[allow(clippy::too_many_arguments)]
fn bayes<L: Likelihood>(
    method: Method,
    y: &DVector<f64>,
    lik: &L,
    prior: &Prior,
    frame: Option<&Whitener>,
    k: usize,
    opts: &BayesOptions,
    seed: u64,
) -> Result<DrResult> {
    check_k(k, prior.dim())?;
    let with_covs = method == Method::Bave;
    let mut summaries = posterior_summaries(y, lik, prior, opts, seed, with_covs)?;
    if let Some(w) = frame {
        summaries = summaries.whitened(w)?;
    }
    let candidate = match method {
        Method::Bir => bir_candidate(&summaries),
        _ => bave_candidate(&summaries)?,
    };
    let mut diagnostics = Diagnostics::default();
    diagnostics.warnings.extend(low_ess_warning(&summaries.diagnostics, opts.n_mc));
    diagnostics.per_point = summaries.diagnostics;
    finish(method, candidate, k, diagnostics)
}

/// Bayesian inverse regression: eigenvectors of the covariance of the
/// posterior means `E[x | y_j]`.
pub fn bir<L: Likelihood>(
    y: &DVector<f64>,
    lik: &L,
    prior: &Prior,
    frame: Option<&Whitener>,
    k: usize,
    opts: &BayesOptions,
    seed: u64,
) -> Result<DrResult> {
    bayes(Method::Bir, y, lik, prior, frame, k, opts, seed)
}

/// Bayesian average variance estimation from the posterior covariances.
pub fn bave<L: Likelihood>(
    y: &DVector<f64>,
    lik: &L,
    prior: &Prior,
    frame: Option<&Whitener>,
    k: usize,
    opts: &BayesOptions,
    seed: u64,
) -> Result<DrResult> {
    bayes(Method::Bave, y, lik, prior, frame, k, opts, seed)
}

/// Upper Cholesky-style factor `R` with `Σ = RᵀR`, via the lower factor.
fn sigma_root(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("cov_x must be symmetric positive definite".into()))?;
    Ok(chol.l().transpose())
}

/// Squared multiple correlation of `b̂ᵀx` with `Bᵀx` under `cov_x`.
pub fn r2_direction(b_hat: &DVector<f64>, b_true: &DMatrix<f64>, cov_x: &DMatrix<f64>) -> Result<f64> {
    let p = b_hat.len();
    if b_true.nrows() != p || cov_x.shape() != (p, p) {
        return Err(Error::ShapeMismatch {
            expected: format!("length-{p} direction, {p}-row basis and {p}x{p} covariance"),
            found: format!("{}-row basis, {}x{} covariance", b_true.nrows(), cov_x.nrows(), cov_x.ncols()),
        });
    }
    let r = sigma_root(cov_x)?;
    let u = &r * b_hat;
    let denom = u.norm_squared();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("b_hat must be nonzero".into()));
    }
    let ut = &r * b_true;
    let cross = ut.transpose() * &u;
    let explained = (cross.transpose() * gram_inverse(&ut)? * &cross)[(0, 0)];
    Ok((explained / denom).clamp(0.0, 1.0))
}

/// `(UᵀU)⁻¹`, or `SingularBasis` when the columns are (numerically)
/// dependent. Projections are formed from Gram matrices rather than an
/// orthonormalization so that exactly orthogonal or nested coordinate bases
/// give exactly 0 or 1.
fn gram_inverse(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = u.transpose() * u;
    let scale = g.diagonal().max();
    if u.ncols() == 0 || scale <= 0.0 || !scale.is_finite() {
        return Err(Error::SingularBasis);
    }
    let chol = g.cholesky().ok_or(Error::SingularBasis)?;
    if chol.l_dirty().diagonal().iter().any(|d| d * d <= 1e-12 * scale) {
        return Err(Error::SingularBasis);
    }
    Ok(chol.inverse())
}

/// Mean squared canonical correlation between `B̂ᵀx` and `Bᵀx` under `cov_x`.
pub fn r2_subspace(b_hat: &DMatrix<f64>, b_true: &DMatrix<f64>, cov_x: &DMatrix<f64>) -> Result<f64> {
    let p = b_hat.nrows();
    if b_true.nrows() != p || cov_x.shape() != (p, p) {
        return Err(Error::ShapeMismatch {
            expected: format!("bases with {p} rows and a {p}x{p} covariance"),
            found: format!("{}-row basis, {}x{} covariance", b_true.nrows(), cov_x.nrows(), cov_x.ncols()),
        });
    }
    let r = sigma_root(cov_x)?;
    let uh = &r * b_hat;
    let ut = &r * b_true;
    let cross = uh.transpose() * &ut;
    let trace = (gram_inverse(&uh)? * &cross * gram_inverse(&ut)? * cross.transpose()).trace();
    let k = b_hat.ncols().min(b_true.ncols());
    Ok((trace / k as f64).clamp(0.0, 1.0))
}

/// Which prior the Bayesian estimators use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PriorChoice {
    /// Gaussian fitted to the whitened data.
    GaussianFit,
    /// The whitened data points themselves.
    Empirical,
    /// Known `N(0, I)` law of the original predictors.
    StandardNormal,
    /// Known banana law of the original predictors.
    Banana { curvature: f64 },
}

impl PriorChoice {
    fn is_analytic(self) -> bool {
        matches!(self, PriorChoice::StandardNormal | PriorChoice::Banana { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceOptions {
    pub method: Method,
    pub k: usize,
    /// Slice count for SIR/SAVE; `None` picks the method default.
    pub slices: Option<usize>,
    pub prior: PriorChoice,
    pub bayes: BayesOptions,
    pub gp: GpFitOptions,
    /// Add the GP noise variance to the predictive variance in `π(y | x)`.
    pub include_noise: bool,
}

impl ReduceOptions {
    pub fn new(method: Method, k: usize) -> Self {
        Self {
            method,
            k,
            slices: None,
            prior: PriorChoice::GaussianFit,
            bayes: BayesOptions::default(),
            gp: GpFitOptions::default(),
            include_noise: true,
        }
    }
}

/// Full pipeline: whiten, run the estimator (fitting the GP and prior for
/// the Bayesian methods), and map the directions back to the original
/// coordinates. The candidate matrix stays in whitened coordinates.
///
/// With a Gaussian-fit or empirical prior the GP is fitted to the whitened
/// data and sampling happens there; with an analytic prior (a known law of
/// the original predictors) the GP is fitted to the raw data and the
/// posterior moments are whitened afterwards.
pub fn reduce(ds: &Dataset, opts: &ReduceOptions, seed: u64) -> Result<DrResult> {
    reduce_many(ds, &[opts.method], opts, seed)?.pop().expect("one method requested")
}

struct BayesContext {
    model: GpModel,
    prior: Prior,
    analytic: bool,
}

/// Runs several methods on the same data, sharing the whitening and the GP
/// fit. `opts.method` is ignored. The outer error covers the shared
/// whitening step; per-method failures are returned in place.
pub fn reduce_many(ds: &Dataset, methods: &[Method], opts: &ReduceOptions, seed: u64) -> Result<Vec<Result<DrResult>>> {
    let whitener = fit_whitener(&ds.x, None)?;
    let z = whitener.whiten(&ds.x)?;
    let mut context: Option<BayesContext> = None;
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut run = || -> Result<DrResult> {
            let result = match method {
                Method::Sir | Method::Save => classical(method, &z, &ds.y, opts)?,
                Method::Bir | Method::Bave => {
                    if context.is_none() {
                        context = Some(bayes_context(ds, &z, opts, seed)?);
                    }
                    let ctx = context.as_ref().expect("set above");
                    let lik = GpLikelihood::new(&ctx.model, opts.include_noise);
                    let frame = ctx.analytic.then_some(&whitener);
                    bayes(method, &ds.y, &lik, &ctx.prior, frame, opts.k, &opts.bayes, derive_seed(seed, &[2]))?
                }
            };
            to_original(result, &whitener)
        };
        results.push(run());
    }
    Ok(results)
}

fn classical(method: Method, z: &DMatrix<f64>, y: &DVector<f64>, opts: &ReduceOptions) -> Result<DrResult> {
    let n = z.nrows();
    let h = match opts.slices {
        Some(h) => {
            if method == Method::Save && h >= 2 && n / h < 2 {
                return Err(Error::SliceTooSmall { slices: h, n });
            }
            h
        }
        None => default_slices(method, n),
    };
    if method == Method::Sir {
        sir(z, y, h, opts.k)
    } else {
        save(z, y, h, opts.k)
    }
}

fn bayes_context(ds: &Dataset, z: &DMatrix<f64>, opts: &ReduceOptions, seed: u64) -> Result<BayesContext> {
    let (train, prior) = match opts.prior {
        PriorChoice::GaussianFit => (z, fit_gaussian_prior(z)?),
        PriorChoice::Empirical => (z, Prior::Empirical { points: z.clone() }),
        PriorChoice::StandardNormal => (&ds.x, Prior::StandardNormal { dim: ds.p() }),
        PriorChoice::Banana { curvature } => {
            if ds.p() < 2 {
                return Err(Error::InvalidArgument("the banana prior needs p >= 2".into()));
            }
            (&ds.x, Prior::Banana { dim: ds.p(), curvature })
        }
    };
    let gp_opts = GpFitOptions { seed: derive_seed(seed, &[1]), ..opts.gp.clone() };
    let model = fit_gp(train, &ds.y, &gp_opts).map_err(|e| e.context("fitting the GP likelihood"))?;
    Ok(BayesContext { model, prior, analytic: opts.prior.is_analytic() })
}

fn to_original(mut result: DrResult, whitener: &Whitener) -> Result<DrResult> {
    let mut back = DMatrix::zeros(whitener.dim(), result.k());
    for i in 0..result.k() {
        let mut v = whitener.unwhiten_direction(&result.directions.column(i).into_owned())?;
        canonical_sign(&mut v);
        back.set_column(i, &v);
    }
    if whitener.clamped > 0 {
        result
            .diagnostics
            .warnings
            .push(format!("whitening clamped {} near-zero covariance eigenvalues", whitener.clamped));
    }
    result.directions = back;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn seq(n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (1..=n).map(|v| v as f64))
    }

    #[test]
    fn slicing_examples() {
        let s = slice_partition(&seq(10), 2).unwrap();
        assert_eq!(s.assignments, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(s.proportions.as_slice(), &[0.5, 0.5]);
        let s = slice_partition(&seq(10), 3).unwrap();
        assert_eq!(s.counts, vec![4, 3, 3]);
        assert_eq!(s.proportions.as_slice(), &[0.4, 0.3, 0.3]);
        let s = slice_partition(&DVector::from_element(10, 1.0), 2).unwrap();
        assert_eq!(s.assignments, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert!(matches!(slice_partition(&seq(3), 4), Err(Error::TooManySlices { .. })));
        assert!(matches!(slice_partition(&seq(3), 1), Err(Error::TooManySlices { .. })));
    }

    #[test]
    fn slicing_follows_sorted_order() {
        let y = DVector::from_vec(vec![5.0, 1.0, 4.0, 2.0, 3.0]);
        let s = slice_partition(&y, 2).unwrap();
        assert_eq!(s.assignments, vec![1, 0, 1, 0, 0]);
    }

    #[test]
    fn top_k_diagonal() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let (v, vals, warn) = top_k_eigvectors(&c, 3).unwrap();
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        assert_eq!(v.column(0).as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(v.column(1).as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(v.column(2).as_slice(), &[0.0, 1.0, 0.0]);
        assert!(warn.is_none());
    }

    #[test]
    fn top_k_identity_is_orthonormal_and_flags_gap() {
        let (v, vals, warn) = top_k_eigvectors(&DMatrix::identity(4, 4), 2).unwrap();
        assert!(vals.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        assert_relative_eq!(v.transpose() * &v, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert!(warn.unwrap().starts_with("DegenerateGap"));
    }

    #[test]
    fn sign_convention() {
        let mut v = DVector::from_vec(vec![0.1, -0.9, 0.2]);
        canonical_sign(&mut v);
        assert_eq!(v.as_slice(), &[-0.1, 0.9, -0.2]);
        let mut v = DVector::from_vec(vec![0.0, -0.5, 0.5]);
        canonical_sign(&mut v);
        assert_eq!(v.as_slice(), &[0.0, 0.5, -0.5]);
    }

    #[test]
    fn metric_examples() {
        let eye = DMatrix::identity(2, 2);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        assert_relative_eq!(r2_direction(&b, &e1, &eye).unwrap(), 0.5, epsilon = 1e-15);
        let e2 = DVector::from_vec(vec![0.0, 3.0]);
        assert_eq!(r2_direction(&e2, &e1, &eye).unwrap(), 0.0);

        let eye4 = DMatrix::identity(4, 4);
        let basis = |a: usize, b: usize| {
            let mut m = DMatrix::zeros(4, 2);
            m[(a, 0)] = 1.0;
            m[(b, 1)] = 1.0;
            m
        };
        assert_relative_eq!(r2_subspace(&basis(0, 1), &basis(0, 1), &eye4).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(r2_subspace(&basis(2, 3), &basis(0, 1), &eye4).unwrap(), 0.0);
        assert_relative_eq!(r2_subspace(&basis(0, 2), &basis(0, 1), &eye4).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn singular_basis_rejected() {
        let eye = DMatrix::identity(3, 3);
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(r2_subspace(&b, &b, &eye), Err(Error::SingularBasis)));
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(r2_direction(&v, &b, &eye), Err(Error::SingularBasis)));
    }

    #[test]
    fn save_reduces_slices() {
        let z = DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = seq(12);
        let r = save(&z, &y, 10, 1).unwrap();
        assert_eq!(r.diagnostics.slices, Some(6));
        assert_eq!(r.diagnostics.warnings.len(), 1);
    }

    #[test]
    fn save_unit_slice_covariance_vanishes() {
        // two slices whose points are ±e_i: per-slice covariance is I·(2/(n_h-1))
        // scaled to exactly I by choosing the amplitude
        let p = 2;
        let a = (1.5f64).sqrt();
        let pts = [[a, 0.0], [-a, 0.0], [0.0, a], [0.0, -a]];
        let mut z = DMatrix::zeros(8, p);
        for (i, row) in pts.iter().chain(pts.iter()).enumerate() {
            z[(i, 0)] = row[0];
            z[(i, 1)] = row[1];
        }
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let (c, _, _) = save_candidate(&z, &y, 2).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-14), "{c}");
    }

    #[test]
    fn bave_identity_covariances_vanish() {
        let s = PosteriorSummaries {
            means: DMatrix::zeros(3, 2),
            covs: Some(vec![DMatrix::identity(2, 2); 3]),
            diagnostics: Vec::new(),
        };
        assert!(bave_candidate(&s).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn result_json_shape() {
        let z = DMatrix::from_fn(20, 3, |i, j| ((i * 13 + j * 5) % 7) as f64);
        let y = DVector::from_fn(20, |i, _| z[(i, 0)] + 0.01 * i as f64);
        let r = sir(&z, &y, 4, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["method"], "SIR");
        assert_eq!(v["directions"].as_array().unwrap().len(), 1);
        assert_eq!(v["directions"][0].as_array().unwrap().len(), 3);
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 3);
    }
}
