//! The TOML study configuration. Keys are checked against [`KEYS`] before
//! deserialization so an unknown key is reported with its full path and the
//! closest valid spelling.

use std::fmt;
use std::path::{Path, PathBuf};

use bir_core::bench::{DatasetStudy, ExperimentConfig, StudyKind, StudyMethod, SyntheticStudy};
use bir_core::dr::Sampler;
use bir_core::SyntheticFunction;
use serde::Deserialize;

/// `(section, key, default, description)`; an empty section is the top level.
pub const KEYS: &[(&str, &str, &str, &str)] = &[
    ("", "log_level", "\"warn\"", "stderr verbosity: error, warn, info, debug, trace"),
    ("study", "name", "required", "report name, also the output file stem"),
    ("study", "kind", "required", "\"r2_synthetic\" or \"mrre_dataset\""),
    ("study", "methods", "required", "any of \"SIR\", \"SAVE\", \"BIR\", \"BAVE\", \"NONE\" (NONE: MRRE only)"),
    ("study", "k", "required", "number of reduced directions"),
    ("study", "trials", "20", "repetitions per setting"),
    ("study", "full_trials", "100", "repetitions under --full"),
    ("study", "base_seed", "0", "base of all derived seeds; --seed overrides"),
    ("synthetic", "function", "required", "fun1, fun2, fun3, fun4 or quad"),
    ("synthetic", "dimensions", "required", "predictor dimensions (one entry unless swept)"),
    ("synthetic", "n", "none", "fixed sample size"),
    ("synthetic", "n_per_dim", "none", "sample size as a multiple of the dimension"),
    ("synthetic", "sample_sizes", "[]", "swept sample sizes"),
    ("synthetic", "banana_b", "[]", "banana curvature values (swept when more than one)"),
    ("synthetic", "noise_sd", "per function", "noise standard deviation"),
    ("synthetic", "banana_literal", "false", "use x2 = u1 - b u1^2 as printed instead of u2 - b u1^2"),
    ("synthetic", "analytic_prior", "false", "use the known predictor law as prior"),
    ("dataset", "path", "required", "CSV file, relative to the config file"),
    ("dataset", "response", "required", "response column name"),
    ("dataset", "train_sizes", "required", "training subset sizes"),
    ("dataset", "test_size", "20", "test subset size"),
    ("dataset", "drop_missing", "true", "drop rows with missing values"),
    ("gp", "restarts", "10", "random restarts of the marginal-likelihood fit"),
    ("gp", "include_noise", "true", "add the noise variance to the likelihood variance"),
    ("inference", "sampler", "\"mcmc\"", "\"mcmc\" or \"is\""),
    ("inference", "n_mc", "10000", "posterior samples per observation"),
    ("inference", "full_n_mc", "n_mc", "posterior samples under --full"),
    ("inference", "burn_in_frac", "0.2", "MCMC burn-in as a fraction of n_mc"),
    ("dr", "slices", "method default", "slice count for SIR/SAVE"),
    ("output", "dir", "\"results\"", "output directory, relative to the working directory"),
    ("output", "raw", "true", "also write per-trial values to <name>_raw.csv"),
];

/// The `--help` listing of every key.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (TOML; section.key = default):\n");
    for (section, key, default, doc) in KEYS {
        let path = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        out.push_str(&format!("  {path:<26} {default:<16} {doc}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key path, empty for document-level problems.
    pub key: String,
    pub message: String,
    pub suggestion: Option<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)?;
        } else {
            write!(f, "`{}`: {}", self.key, self.message)?;
        }
        if let Some(s) = &self.suggestion {
            write!(f, " (did you mean `{s}`?)")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn config_error(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), message: message.into(), suggestion: None }
}

fn closest<'a>(name: &str, candidates: impl Iterator<Item = &'a str>) -> Option<String> {
    candidates
        .map(|c| (strsim::normalized_damerau_levenshtein(name, c), c))
        .filter(|(score, _)| *score >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

fn check_keys(doc: &toml::Table) -> Result<(), ConfigError> {
    let sections: Vec<&str> = KEYS.iter().map(|k| k.0).filter(|s| !s.is_empty()).collect();
    for (name, value) in doc {
        let top_level_key = KEYS.iter().any(|k| k.0.is_empty() && k.1 == name);
        if top_level_key {
            continue;
        }
        if !sections.contains(&name.as_str()) {
            let top = KEYS.iter().filter(|k| k.0.is_empty()).map(|k| k.1);
            return Err(ConfigError {
                key: name.clone(),
                message: "unknown key".into(),
                suggestion: closest(name, sections.iter().copied().chain(top)),
            });
        }
        let table = value.as_table().ok_or_else(|| config_error(name.clone(), "expected a [section] table"))?;
        for key in table.keys() {
            if !KEYS.iter().any(|k| k.0 == name && k.1 == key) {
                let in_section = KEYS.iter().filter(|k| k.0 == name).map(|k| k.1);
                return Err(ConfigError {
                    key: format!("{name}.{key}"),
                    message: "unknown key".into(),
                    suggestion: closest(key, in_section),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    log_level: Option<String>,
    study: RawStudy,
    synthetic: Option<RawSynthetic>,
    dataset: Option<RawDataset>,
    #[serde(default)]
    gp: RawGp,
    #[serde(default)]
    inference: RawInference,
    #[serde(default)]
    dr: RawDr,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    name: String,
    kind: StudyKind,
    methods: Vec<StudyMethod>,
    k: usize,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_full_trials")]
    full_trials: usize,
    #[serde(default)]
    base_seed: u64,
}

fn default_trials() -> usize {
    20
}

fn default_full_trials() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    function: String,
    dimensions: Vec<usize>,
    n: Option<usize>,
    n_per_dim: Option<usize>,
    #[serde(default)]
    sample_sizes: Vec<usize>,
    #[serde(default)]
    banana_b: Vec<f64>,
    noise_sd: Option<f64>,
    #[serde(default)]
    banana_literal: bool,
    #[serde(default)]
    analytic_prior: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    path: PathBuf,
    response: String,
    train_sizes: Vec<usize>,
    #[serde(default = "default_test_size")]
    test_size: usize,
    #[serde(default = "default_true")]
    drop_missing: bool,
}

fn default_test_size() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGp {
    #[serde(default = "default_restarts")]
    restarts: usize,
    #[serde(default = "default_true")]
    include_noise: bool,
}

fn default_restarts() -> usize {
    10
}

impl Default for RawGp {
    fn default() -> Self {
        Self { restarts: default_restarts(), include_noise: true }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInference {
    #[serde(default = "default_sampler")]
    sampler: Sampler,
    #[serde(default = "default_n_mc")]
    n_mc: usize,
    full_n_mc: Option<usize>,
    #[serde(default = "default_burn_in")]
    burn_in_frac: f64,
}

fn default_sampler() -> Sampler {
    Sampler::Mcmc
}

fn default_n_mc() -> usize {
    10_000
}

fn default_burn_in() -> f64 {
    0.2
}

impl Default for RawInference {
    fn default() -> Self {
        Self { sampler: default_sampler(), n_mc: default_n_mc(), full_n_mc: None, burn_in_frac: default_burn_in() }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDr {
    slices: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default = "default_dir")]
    dir: PathBuf,
    #[serde(default = "default_true")]
    raw: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for RawOutput {
    fn default() -> Self {
        Self { dir: default_dir(), raw: true }
    }
}

/// A parsed study document.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub experiment: ExperimentConfig,
    pub full_trials: usize,
    pub full_n_mc: usize,
    pub log_level: Option<String>,
    pub output_dir: PathBuf,
    pub write_raw: bool,
}

/// Command-line overrides applied on top of the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub full: bool,
    pub trials: Option<usize>,
    pub n_mc: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl CliConfig {
    /// Parses `text`; relative dataset paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error("", e.message().to_string()))?;
        check_keys(&doc)?;
        let raw: RawConfig = RawConfig::deserialize(doc).map_err(|e| config_error("", e.message().to_string()))?;

        let synthetic = raw
            .synthetic
            .map(|s| -> Result<SyntheticStudy, ConfigError> {
                let function = SyntheticFunction::parse(&s.function)
                    .ok_or_else(|| config_error("synthetic.function", format!("unknown function {:?}", s.function)))?;
                Ok(SyntheticStudy {
                    function,
                    dimensions: s.dimensions,
                    n: s.n,
                    n_per_dim: s.n_per_dim,
                    sample_sizes: s.sample_sizes,
                    banana_b: s.banana_b,
                    noise_sd: s.noise_sd,
                    banana_literal: s.banana_literal,
                    analytic_prior: s.analytic_prior,
                })
            })
            .transpose()?;
        let dataset = raw.dataset.map(|d| DatasetStudy {
            path: if d.path.is_absolute() { d.path } else { base_dir.join(d.path) },
            response: d.response,
            train_sizes: d.train_sizes,
            test_size: d.test_size,
            drop_missing: d.drop_missing,
        });
        let experiment = ExperimentConfig {
            name: raw.study.name,
            kind: raw.study.kind,
            synthetic,
            dataset,
            methods: raw.study.methods,
            k: raw.study.k,
            trials: raw.study.trials,
            base_seed: raw.study.base_seed,
            sampler: raw.inference.sampler,
            n_mc: raw.inference.n_mc,
            slices: raw.dr.slices,
            burn_in_frac: raw.inference.burn_in_frac,
            gp_restarts: raw.gp.restarts,
            include_noise: raw.gp.include_noise,
        };
        experiment.validate().map_err(|e| config_error("study", e.to_string()))?;
        Ok(Self {
            full_trials: raw.study.full_trials,
            full_n_mc: raw.inference.full_n_mc.unwrap_or(experiment.n_mc),
            experiment,
            log_level: raw.log_level,
            output_dir: raw.output.dir,
            write_raw: raw.output.raw,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.full {
            self.experiment.trials = self.full_trials;
            self.experiment.n_mc = self.full_n_mc;
        }
        if let Some(t) = o.trials {
            self.experiment.trials = t;
        }
        if let Some(n) = o.n_mc {
            self.experiment.n_mc = n;
        }
        if let Some(s) = o.seed {
            self.experiment.base_seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }
}
