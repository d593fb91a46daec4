//! Experiment orchestration: seeded repetition of the R² studies on
//! synthetic data and the train/test MRRE studies on real datasets.
//!
//! Every (setting, trial) cell is an independent task seeded from
//! `(base_seed, setting, trial)` alone, so reports do not depend on the
//! execution order or the size of the worker pool.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, load_csv, ColumnRef, Dataset, SyntheticFunction, SyntheticSpec};
use crate::dr::{r2_direction, r2_subspace, reduce_many, BayesOptions, Method, PriorChoice, ReduceOptions, Sampler};
use crate::error::{Error, Result};
use crate::gp::GpFitOptions;
use crate::inference::{McmcOptions, DEFAULT_N_MC};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    R2Synthetic,
    MrreDataset,
}

/// A reduction method, or `None` for regression on all predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StudyMethod {
    Sir,
    Save,
    Bir,
    Bave,
    None,
}

impl StudyMethod {
    pub fn method(self) -> Option<Method> {
        match self {
            StudyMethod::Sir => Some(Method::Sir),
            StudyMethod::Save => Some(Method::Save),
            StudyMethod::Bir => Some(Method::Bir),
            StudyMethod::Bave => Some(Method::Bave),
            StudyMethod::None => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StudyMethod::Sir => "SIR",
            StudyMethod::Save => "SAVE",
            StudyMethod::Bir => "BIR",
            StudyMethod::Bave => "BAVE",
            StudyMethod::None => "NONE",
        }
    }
}

/// Synthetic design. Exactly one of `dimensions`, `sample_sizes` and
/// `banana_b` is the swept axis (the only one with more than one entry, or
/// the one given when all have a single entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticStudy {
    pub function: SyntheticFunction,
    #[serde(default)]
    pub dimensions: Vec<usize>,
    /// Fixed sample size; ignored when `sample_sizes` or `n_per_dim` is set.
    #[serde(default)]
    pub n: Option<usize>,
    /// Sample size as a multiple of the dimension (`n = 5d` in the dimension sweeps).
    #[serde(default)]
    pub n_per_dim: Option<usize>,
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
    #[serde(default)]
    pub banana_b: Vec<f64>,
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub banana_literal: bool,
    /// Use the known predictor law as prior instead of a Gaussian fit.
    #[serde(default)]
    pub analytic_prior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSetting {
    pub label: String,
    pub dimension: usize,
    pub n: usize,
    pub banana_b: f64,
}

impl SyntheticStudy {
    pub fn settings(&self) -> Result<Vec<SyntheticSetting>> {
        let single_dim = || -> Result<usize> {
            match self.dimensions.as_slice() {
                [d] => Ok(*d),
                _ => Err(Error::InvalidSpec("exactly one dimension is needed unless dimensions are swept".into())),
            }
        };
        let fixed_n = |d: usize| -> Result<usize> {
            match (self.n, self.n_per_dim) {
                (_, Some(k)) => Ok(k * d),
                (Some(n), None) => Ok(n),
                (None, None) => Err(Error::InvalidSpec("synthetic study needs n or n_per_dim".into())),
            }
        };
        let b_single = match self.banana_b.as_slice() {
            [] => 0.0,
            [b] => *b,
            _ => f64::NAN,
        };
        let swept = [self.dimensions.len() > 1, self.sample_sizes.len() > 1, self.banana_b.len() > 1];
        if swept.iter().filter(|&&s| s).count() > 1 {
            return Err(Error::InvalidSpec("only one of dimensions, sample_sizes, banana_b may be swept".into()));
        }
        // a single b still labels the setting, unless something else is swept
        let by_b = self.banana_b.len() > 1 || (self.banana_b.len() == 1 && !swept[0] && !swept[1]);
        let settings = if by_b {
            let d = single_dim()?;
            let n = fixed_n(d)?;
            self.banana_b
                .iter()
                .map(|&b| SyntheticSetting { label: format!("b={b}"), dimension: d, n, banana_b: b })
                .collect()
        } else if !self.sample_sizes.is_empty() {
            let d = single_dim()?;
            self.sample_sizes
                .iter()
                .map(|&n| SyntheticSetting { label: format!("n={n}"), dimension: d, n, banana_b: b_single })
                .collect()
        } else if !self.dimensions.is_empty() {
            self.dimensions
                .iter()
                .map(|&d| {
                    Ok(SyntheticSetting { label: format!("d={d}"), dimension: d, n: fixed_n(d)?, banana_b: b_single })
                })
                .collect::<Result<_>>()?
        } else {
            return Err(Error::InvalidSpec("synthetic study needs at least one dimension".into()));
        };
        Ok(settings)
    }

    pub fn spec(&self, setting: &SyntheticSetting) -> SyntheticSpec {
        let mut spec = SyntheticSpec::new(self.function, setting.dimension).with_banana_b(setting.banana_b);
        if let Some(sd) = self.noise_sd {
            spec = spec.with_noise_sd(sd);
        }
        spec.banana_literal = self.banana_literal;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetStudy {
    pub path: PathBuf,
    /// Response column name.
    pub response: String,
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_true")]
    pub drop_missing: bool,
}

fn default_test_size() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: StudyKind,
    #[serde(default)]
    pub synthetic: Option<SyntheticStudy>,
    #[serde(default)]
    pub dataset: Option<DatasetStudy>,
    pub methods: Vec<StudyMethod>,
    pub k: usize,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    /// Slice count for SIR/SAVE; the method default when absent.
    #[serde(default)]
    pub slices: Option<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in_frac: f64,
    #[serde(default = "default_restarts")]
    pub gp_restarts: usize,
    #[serde(default = "default_true")]
    pub include_noise: bool,
}

fn default_sampler() -> Sampler {
    Sampler::Mcmc
}

fn default_n_mc() -> usize {
    DEFAULT_N_MC
}

fn default_burn_in() -> f64 {
    McmcOptions::default().burn_in_frac
}

fn default_restarts() -> usize {
    GpFitOptions::default().n_restarts
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidSpec("at least one method is required".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidSpec("k must be at least 1".into()));
        }
        match self.kind {
            StudyKind::R2Synthetic => {
                let syn = self
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("an r2_synthetic study needs a [synthetic] section".into()))?;
                if self.dataset.is_some() {
                    return Err(Error::InvalidSpec("an r2_synthetic study must not have a [dataset] section".into()));
                }
                if self.methods.contains(&StudyMethod::None) {
                    return Err(Error::InvalidSpec("method NONE is only meaningful in MRRE studies".into()));
                }
                for s in syn.settings()? {
                    syn.spec(&s).validate()?;
                }
            }
            StudyKind::MrreDataset => {
                let ds = self
                    .dataset
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("an mrre_dataset study needs a [dataset] section".into()))?;
                if self.synthetic.is_some() {
                    return Err(Error::InvalidSpec("an mrre_dataset study must not have a [synthetic] section".into()));
                }
                if ds.train_sizes.is_empty() || ds.test_size == 0 {
                    return Err(Error::InvalidSpec("train_sizes and test_size must be nonempty/positive".into()));
                }
            }
        }
        Ok(())
    }

    fn reduce_options(&self, prior: PriorChoice) -> ReduceOptions {
        ReduceOptions {
            method: Method::Sir,
            k: self.k,
            slices: self.slices,
            prior,
            bayes: BayesOptions {
                n_mc: self.n_mc,
                sampler: self.sampler,
                mcmc: McmcOptions { burn_in_frac: self.burn_in_frac, ..McmcOptions::default() },
            },
            gp: GpFitOptions { n_restarts: self.gp_restarts, ..GpFitOptions::default() },
            include_noise: self.include_noise,
        }
    }

    fn reduction_methods(&self) -> Vec<Method> {
        self.methods.iter().filter_map(|m| m.method()).collect()
    }
}

/// Aggregate of one (method, setting, metric) cell over the successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: String,
    pub setting: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation (divisor trials − 1; zero for one trial).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub method: String,
    pub setting: String,
    pub metric: String,
    pub trial: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: String,
    pub setting: String,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub study: String,
    pub trials_requested: usize,
    pub records: Vec<CellRecord>,
    pub failures: Vec<FailureRecord>,
    pub raw: Vec<RawRecord>,
}

impl CellRecord {
    /// Summary statistics of `values`; `None` when empty.
    pub fn summarize(method: &str, setting: &str, metric: &str, values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Self {
            method: method.into(),
            setting: setting.into(),
            metric: metric.into(),
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            trials: n,
        })
    }
}

pub const REPORT_CSV_HEADER: [&str; 8] = ["method", "setting", "metric", "mean", "std", "min", "max", "trials"];

impl MetricReport {
    /// Aggregates raw per-trial values. Cells keep the order in which their
    /// (setting, method, metric) key first appears in `raw`.
    fn from_raw(study: &str, trials_requested: usize, raw: Vec<RawRecord>, failures: Vec<FailureRecord>) -> Self {
        let mut order: Vec<(String, String, String)> = Vec::new();
        let mut cells: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
        for r in &raw {
            let key = (r.setting.clone(), r.method.clone(), r.metric.clone());
            let entry = cells.entry(key.clone()).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push(r.value);
        }
        let records =
            order.iter().filter_map(|key| CellRecord::summarize(&key.1, &key.0, &key.2, &cells[key])).collect();
        Self { study: study.into(), trials_requested, records, failures, raw }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.method.clone(),
                r.setting.clone(),
                r.metric.clone(),
                r.mean.to_string(),
                r.std.to_string(),
                r.min.to_string(),
                r.max.to_string(),
                r.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-trial values: `method,setting,metric,trial,value`.
    pub fn write_raw_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.raw {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn find(&self, method: &str, setting: &str, metric: &str) -> Option<&CellRecord> {
        self.records.iter().find(|r| r.method == method && r.setting == setting && r.metric == metric)
    }

    /// One block per metric: methods as rows, settings as columns, cells
    /// formatted `mean (std)`.
    pub fn table(&self) -> String {
        let mut metrics: Vec<&str> = Vec::new();
        let mut settings: Vec<&str> = Vec::new();
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.records {
            for (list, v) in [(&mut metrics, &r.metric), (&mut settings, &r.setting), (&mut methods, &r.method)] {
                if !list.contains(&v.as_str()) {
                    list.push(v);
                }
            }
        }
        let mut out = String::new();
        for metric in metrics {
            let _ = writeln!(out, "{} [{metric}]", self.study);
            let _ = write!(out, "{:<8}", "method");
            for s in &settings {
                let _ = write!(out, "{s:>18}");
            }
            out.push('\n');
            for m in &methods {
                let _ = write!(out, "{m:<8}");
                for s in &settings {
                    match self.find(m, s, metric) {
                        Some(r) => {
                            let _ = write!(out, "{:>18}", format!("{:.4} ({:.4})", r.mean, r.std));
                        }
                        None => {
                            let _ = write!(out, "{:>18}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if !self.failures.is_empty() {
            let _ = writeln!(out, "{} failed trial(s)", self.failures.len());
        }
        out
    }
}

/// Seed of trial `t` in setting `s`.
pub fn trial_seed(base_seed: u64, setting: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[setting as u64, trial as u64])
}

struct TrialOutcome {
    raw: Vec<RawRecord>,
    failures: Vec<FailureRecord>,
}

fn run_cells<F>(settings: &[String], trials: usize, cell: F) -> (Vec<RawRecord>, Vec<FailureRecord>)
where
    F: Fn(usize, usize) -> TrialOutcome + Sync,
{
    let tasks: Vec<(usize, usize)> = (0..settings.len()).flat_map(|s| (0..trials).map(move |t| (s, t))).collect();
    let outcomes: Vec<TrialOutcome> = tasks.par_iter().map(|&(s, t)| cell(s, t)).collect();
    let mut raw = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        raw.extend(o.raw);
        failures.extend(o.failures);
    }
    (raw, failures)
}

fn failure(method: &str, setting: &str, trial: usize, err: &Error) -> FailureRecord {
    log::warn!("{method} failed at {setting}, trial {trial}: {err}");
    FailureRecord { method: method.into(), setting: setting.into(), trial, error: err.to_string() }
}

/// R² study on synthetic data: subspace R² and per-direction R² of every
/// method against the true directions, with `Σ = I`.
pub fn run_r2_study(config: &ExperimentConfig) -> Result<MetricReport> {
    config.validate()?;
    if config.kind != StudyKind::R2Synthetic {
        return Err(Error::InvalidSpec("run_r2_study needs kind = r2_synthetic".into()));
    }
    let syn = config.synthetic.as_ref().expect("validated");
    let settings = syn.settings()?;
    let labels: Vec<String> = settings.iter().map(|s| s.label.clone()).collect();
    let methods = config.reduction_methods();

    let (raw, failures) = run_cells(&labels, config.trials, |s, t| {
        let setting = &settings[s];
        let label = setting.label.as_str();
        let seed = trial_seed(config.base_seed, s, t);
        let spec = syn.spec(setting);
        let prior = match (syn.analytic_prior, spec.function.is_banana()) {
            (false, _) => PriorChoice::GaussianFit,
            (true, true) => PriorChoice::Banana { curvature: setting.banana_b },
            (true, false) => PriorChoice::StandardNormal,
        };
        let opts = config.reduce_options(prior);
        let mut outcome = TrialOutcome { raw: Vec::new(), failures: Vec::new() };
        let all_fail = |outcome: &mut TrialOutcome, e: &Error| {
            for m in &methods {
                outcome.failures.push(failure(&m.to_string(), label, t, e));
            }
        };
        let (ds, truth) = match gen_synthetic(&spec, setting.n, derive_seed(seed, &[0])) {
            Ok(v) => v,
            Err(e) => {
                all_fail(&mut outcome, &e);
                return outcome;
            }
        };
        let results = match reduce_many(&ds, &methods, &opts, derive_seed(seed, &[1])) {
            Ok(r) => r,
            Err(e) => {
                all_fail(&mut outcome, &e);
                return outcome;
            }
        };
        let eye = DMatrix::identity(ds.p(), ds.p());
        for (m, result) in methods.iter().zip(results) {
            let name = m.to_string();
            let scored = result.and_then(|r| {
                let mut values = vec![("r2_subspace".to_string(), r2_subspace(&r.directions, &truth, &eye)?)];
                for i in 0..r.k() {
                    let b = r.directions.column(i).into_owned();
                    values.push((format!("r2_direction_{}", i + 1), r2_direction(&b, &truth, &eye)?));
                }
                Ok(values)
            });
            match scored {
                Ok(values) => outcome.raw.extend(values.into_iter().map(|(metric, value)| RawRecord {
                    method: name.clone(),
                    setting: label.into(),
                    metric,
                    trial: t,
                    value,
                })),
                Err(e) => outcome.failures.push(failure(&name, label, t, &e)),
            }
        }
        outcome
    });
    Ok(MetricReport::from_raw(&config.name, config.trials, raw, failures))
}

/// Least squares with intercept. Returns `[slopes…, intercept]`. Falls back
/// to a ridge penalty of 1e-8 when the design is rank deficient.
pub fn ols_fit(features: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = features.shape();
    if y.len() != n {
        return Err(Error::ShapeMismatch { expected: format!("{n} responses"), found: format!("{}", y.len()) });
    }
    if n <= k + 1 {
        return Err(Error::InsufficientData { needed: k + 2, available: n });
    }
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j < k { features[(i, j)] } else { 1.0 });
    let scale = design.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let qr = design.clone().qr();
    let r = qr.r();
    let full_rank = (0..=k).all(|i| r[(i, i)].abs() > 1e-10 * scale * (n as f64).sqrt());
    if full_rank {
        let qty = qr.q().transpose() * y;
        if let Some(beta) = r.solve_upper_triangular(&qty) {
            if beta.iter().all(|b| b.is_finite()) {
                return Ok(beta);
            }
        }
    }
    log::warn!("rank-deficient regression design; using a 1e-8 ridge penalty");
    let mut gram = design.transpose() * &design;
    for i in 0..=k {
        gram[(i, i)] += 1e-8;
    }
    let rhs = design.transpose() * y;
    gram.cholesky().map(|c| c.solve(&rhs)).filter(|b| b.iter().all(|v| v.is_finite())).ok_or(Error::RankDeficient)
}

pub fn ols_predict(coefficients: &DVector<f64>, features: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = features.ncols();
    if coefficients.len() != k + 1 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} coefficients", k + 1),
            found: format!("{}", coefficients.len()),
        });
    }
    Ok(features * coefficients.rows(0, k) + DVector::from_element(features.nrows(), coefficients[k]))
}

/// `(1/n) Σ |yᵢ − ŷᵢ| / yᵢ`
pub fn mrre(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} nonempty predictions", y_true.len()),
            found: format!("{}", y_pred.len()),
        });
    }
    if let Some(i) = y_true.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroResponse(i));
    }
    Ok(y_true.iter().zip(y_pred.iter()).map(|(y, p)| (y - p).abs() / y).sum::<f64>() / y_true.len() as f64)
}

/// Disjoint random train/test index sets.
pub fn train_test_split(n: usize, train: usize, test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if train + test > n {
        return Err(Error::InsufficientData { needed: train + test, available: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed));
    let test_idx = idx[train..train + test].to_vec();
    idx.truncate(train);
    Ok((idx, test_idx))
}

fn mrre_trial(
    ds: &Dataset,
    method: StudyMethod,
    opts: &ReduceOptions,
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<f64> {
    let train_ds = ds.subset(train)?;
    let test_ds = ds.subset(test)?;
    let (train_f, test_f) = match method.method() {
        None => (train_ds.x.clone(), test_ds.x.clone()),
        Some(m) => {
            let r = reduce_many(&train_ds, &[m], opts, seed)?.pop().expect("one method")?;
            (&train_ds.x * &r.directions, &test_ds.x * &r.directions)
        }
    };
    let beta = ols_fit(&train_f, &train_ds.y)?;
    mrre(&test_ds.y, &ols_predict(&beta, &test_f)?)
}

/// MRRE study: for every training size and trial, reduce the training
/// subset to K features (or keep all), fit OLS, and score the disjoint test
/// subset.
pub fn run_mrre_study(config: &ExperimentConfig) -> Result<MetricReport> {
    config.validate()?;
    if config.kind != StudyKind::MrreDataset {
        return Err(Error::InvalidSpec("run_mrre_study needs kind = mrre_dataset".into()));
    }
    let study = config.dataset.as_ref().expect("validated");
    let ds = load_csv(&study.path, &ColumnRef::Name(study.response.clone()), study.drop_missing)?;
    run_mrre_on(config, &ds)
}

/// [`run_mrre_study`] on an already loaded dataset.
pub fn run_mrre_on(config: &ExperimentConfig, ds: &Dataset) -> Result<MetricReport> {
    let study = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("an mrre_dataset study needs a [dataset] section".into()))?;
    if let Some(i) = ds.y.iter().position(|&v| v <= 0.0) {
        return Err(Error::NonPositiveResponse(i));
    }
    let largest = study.train_sizes.iter().copied().max().unwrap_or(0);
    if ds.n() < largest + study.test_size {
        return Err(Error::InsufficientData { needed: largest + study.test_size, available: ds.n() });
    }
    let labels: Vec<String> = study.train_sizes.iter().map(|n| format!("n={n}")).collect();
    let opts = config.reduce_options(PriorChoice::GaussianFit);

    let (raw, failures) = run_cells(&labels, config.trials, |s, t| {
        let label = labels[s].as_str();
        let seed = trial_seed(config.base_seed, s, t);
        let mut outcome = TrialOutcome { raw: Vec::new(), failures: Vec::new() };
        let (train, test) =
            match train_test_split(ds.n(), study.train_sizes[s], study.test_size, derive_seed(seed, &[0])) {
                Ok(v) => v,
                Err(e) => {
                    for m in &config.methods {
                        outcome.failures.push(failure(m.label(), label, t, &e));
                    }
                    return outcome;
                }
            };
        debug_assert!(train.iter().all(|i| !test.contains(i)));
        for &m in &config.methods {
            match mrre_trial(ds, m, &opts, &train, &test, derive_seed(seed, &[1])) {
                Ok(value) => outcome.raw.push(RawRecord {
                    method: m.label().into(),
                    setting: label.into(),
                    metric: "mrre".into(),
                    trial: t,
                    value,
                }),
                Err(e) => outcome.failures.push(failure(m.label(), label, t, &e)),
            }
        }
        outcome
    });
    Ok(MetricReport::from_raw(&config.name, config.trials, raw, failures))
}

/// Dispatches on the study kind.
pub fn run_study(config: &ExperimentConfig) -> Result<MetricReport> {
    match config.kind {
        StudyKind::R2Synthetic => run_r2_study(config),
        StudyKind::MrreDataset => run_mrre_study(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ols_exact_recovery() {
        let f = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let beta = ols_fit(&f, &y).unwrap();
        assert_relative_eq!(beta[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(beta[1], 1.0, epsilon = 1e-12);
        let y = DVector::from_element(4, 2.5);
        let beta = ols_fit(&f, &y).unwrap();
        assert!(beta[0].abs() < 1e-12);
        assert_relative_eq!(beta[1], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn ols_rank_deficient_falls_back() {
        let f = DMatrix::from_column_slice(4, 2, &[0.0, 1.0, 2.0, 3.0, 0.0, 2.0, 4.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let beta = ols_fit(&f, &y).unwrap();
        let pred = ols_predict(&beta, &f).unwrap();
        assert!((pred - y).norm() < 1e-6);
    }

    #[test]
    fn mrre_examples() {
        let y = DVector::from_vec(vec![2.0, 4.0]);
        assert_eq!(mrre(&y, &y).unwrap(), 0.0);
        assert_eq!(mrre(&y, &DVector::from_vec(vec![1.0, 2.0])).unwrap(), 0.5);
        let z = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(mrre(&z, &z), Err(Error::ZeroResponse(1))));
    }

    #[test]
    fn split_is_disjoint() {
        let (train, test) = train_test_split(50, 20, 20, 3).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.len(), 20);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert!(matches!(train_test_split(30, 20, 20, 3), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn summary_statistics() {
        let r = CellRecord::summarize("SIR", "d=10", "r2", &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mean, r.std, r.min, r.max, r.trials), (2.0, 1.0, 1.0, 3.0, 3));
        assert_eq!(CellRecord::summarize("SIR", "d=10", "r2", &[0.4]).unwrap().std, 0.0);
    }

    #[test]
    fn settings_resolution() {
        let study = SyntheticStudy {
            function: SyntheticFunction::Fun1,
            dimensions: vec![10, 20],
            n: None,
            n_per_dim: Some(5),
            sample_sizes: vec![],
            banana_b: vec![],
            noise_sd: None,
            banana_literal: false,
            analytic_prior: false,
        };
        let s = study.settings().unwrap();
        assert_eq!(s.iter().map(|s| (s.dimension, s.n)).collect::<Vec<_>>(), vec![(10, 50), (20, 100)]);
        assert_eq!(s[1].label, "d=20");

        let banana = SyntheticStudy {
            function: SyntheticFunction::Fun3Banana,
            dimensions: vec![10],
            n: Some(100),
            n_per_dim: None,
            banana_b: vec![0.0, 5.0],
            ..study.clone()
        };
        let s = banana.settings().unwrap();
        assert_eq!(s[1].label, "b=5");
        assert_eq!((s[1].dimension, s[1].n, s[1].banana_b), (10, 100, 5.0));

        let bad = SyntheticStudy { sample_sizes: vec![30, 40], ..study };
        assert!(bad.settings().is_err());
    }
}
