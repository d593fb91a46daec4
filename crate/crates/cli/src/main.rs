mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bir_core::bench::run_study;
use bir_core::dr::{reduce, BayesOptions, Method, PriorChoice, ReduceOptions, Sampler};
use bir_core::gp::{fit_gp, GpFitOptions, GpModel};
use bir_core::inference::McmcOptions;
use bir_core::rng::derive_seed;
use bir_core::{gen_synthetic, load_csv, ColumnRef, ErrorCategory, SyntheticFunction, SyntheticSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{keys_help, CliConfig, ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "bir", version, about = "Supervised dimension reduction with SIR, SAVE, BIR and BAVE")]
struct Cli {
    /// Seed for every random stream (overrides `study.base_seed` for bench)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, env = "BIR_JOBS")]
    jobs: Option<usize>,
    /// Diagnostics on stderr: error, warn, info, debug, trace [default: warn]
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate reduction directions for one dataset
    Dr(DrArgs),
    /// Run a study described by a TOML config
    #[command(after_long_help = keys_help())]
    Bench(BenchArgs),
    /// Fit the GP regression model and write it as JSON
    FitGp(FitGpArgs),
    /// Predict with a saved GP model
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sir,
    Save,
    Bir,
    Bave,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sir => Method::Sir,
            MethodArg::Save => Method::Save,
            MethodArg::Bir => Method::Bir,
            MethodArg::Bave => Method::Bave,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Mcmc,
    Is,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Gaussian,
    Empirical,
    StandardNormal,
    Banana,
}

#[derive(Args)]
struct DrArgs {
    /// CSV dataset (otherwise a synthetic design is generated)
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Response column name
    #[arg(long, requires = "data")]
    response: Option<String>,
    /// Keep rows with missing values (they are dropped by default)
    #[arg(long)]
    keep_missing: bool,
    /// Synthetic design: fun1, fun2, fun3, fun4, quad
    #[arg(long, default_value = "quad")]
    synthetic: String,
    /// Synthetic dimension
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Synthetic sample size
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Banana curvature for fun3/fun4
    #[arg(long, default_value_t = 0.0)]
    banana_b: f64,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Number of directions
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Slices for SIR/SAVE [default: min(10, n/2) for SIR, min(5, n/4) for SAVE]
    #[arg(long)]
    h: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    prior: PriorArg,
    #[arg(long, value_enum, default_value = "mcmc")]
    sampler: SamplerArg,
    /// Posterior samples per observation
    #[arg(long, default_value_t = 10_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0.2)]
    burn_in_frac: f64,
    /// GP marginal-likelihood restarts
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Leave the noise variance out of the likelihood variance
    #[arg(long)]
    no_noise: bool,
    /// Write the result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    config: PathBuf,
    /// Use the full trial count (and full_n_mc)
    #[arg(long)]
    full: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n_mc: Option<usize>,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitGpArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long)]
    keep_missing: bool,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Write the model here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated input point
    #[arg(long, allow_hyphen_values = true)]
    x: String,
}

enum AppError {
    Config(ConfigError),
    Core(bir_core::Error),
    Usage(String),
}

impl From<bir_core::Error> for AppError {
    fn from(e: bir_core::Error) -> Self {
        AppError::Core(e)
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::Usage(_) => 2,
            AppError::Core(e) => match e.category() {
                ErrorCategory::Usage => 2,
                ErrorCategory::Numerical => 3,
                ErrorCategory::Io => 4,
            },
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let body = match self {
            AppError::Config(e) => json!({
                "kind": "ConfigError",
                "category": "usage",
                "key": e.key,
                "suggestion": e.suggestion,
                "message": e.to_string(),
            }),
            AppError::Usage(m) => json!({ "kind": "UsageError", "category": "usage", "message": m }),
            AppError::Core(e) => json!({
                "kind": e.kind(),
                "category": match e.category() {
                    ErrorCategory::Usage => "usage",
                    ErrorCategory::Numerical => "numerical",
                    ErrorCategory::Io => "io",
                },
                "message": e.root().to_string(),
                "context": e.context_chain(),
            }),
        };
        json!({ "error": body })
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new().parse_filters(level).format_timestamp(None).try_init();
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), AppError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| AppError::Core(e.into())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_dr(args: &DrArgs, seed: u64) -> Result<(), AppError> {
    let ds = match &args.data {
        Some(path) => {
            let response = args.response.as_ref().ok_or_else(|| AppError::Usage("--data needs --response".into()))?;
            load_csv(path, &ColumnRef::Name(response.clone()), !args.keep_missing)?
        }
        None => {
            let function = SyntheticFunction::parse(&args.synthetic)
                .ok_or_else(|| AppError::Usage(format!("unknown synthetic design {:?}", args.synthetic)))?;
            let spec = SyntheticSpec::new(function, args.d).with_banana_b(args.banana_b);
            gen_synthetic(&spec, args.n, derive_seed(seed, &[0]))?.0
        }
    };
    let prior = match args.prior {
        PriorArg::Gaussian => PriorChoice::GaussianFit,
        PriorArg::Empirical => PriorChoice::Empirical,
        PriorArg::StandardNormal => PriorChoice::StandardNormal,
        PriorArg::Banana => PriorChoice::Banana { curvature: args.banana_b },
    };
    let opts = ReduceOptions {
        method: args.method.into(),
        k: args.k,
        slices: args.h,
        prior,
        bayes: BayesOptions {
            n_mc: args.n_mc,
            sampler: match args.sampler {
                SamplerArg::Mcmc => Sampler::Mcmc,
                SamplerArg::Is => Sampler::Is,
            },
            mcmc: McmcOptions { burn_in_frac: args.burn_in_frac, ..McmcOptions::default() },
        },
        gp: GpFitOptions { n_restarts: args.restarts, ..GpFitOptions::default() },
        include_noise: !args.no_noise,
    };
    let result = reduce(&ds, &opts, derive_seed(seed, &[1]))?;
    write_output(args.out.as_deref(), &result.to_json()?)
}

fn cmd_bench(args: &BenchArgs, cli: &Cli) -> Result<(), AppError> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            AppError::Core(bir_core::Error::FileNotFound(args.config.clone()))
        } else {
            AppError::Core(e.into())
        }
    })?;
    let base_dir = args.config.parent().unwrap_or(Path::new("."));
    let mut cfg = CliConfig::parse(&text, base_dir).map_err(AppError::Config)?;
    if cli.log_level.is_none() {
        init_logging(cfg.log_level.as_deref().unwrap_or("warn"));
    }
    cfg.apply(&Overrides {
        full: args.full,
        trials: args.trials,
        n_mc: args.n_mc,
        seed: cli.seed,
        output_dir: args.out_dir.clone(),
    });
    cfg.experiment.validate()?;
    let report = run_study(&cfg.experiment)?;

    let stem = &cfg.experiment.name;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| AppError::Core(e.into()))?;
    let json_path = cfg.output_dir.join(format!("{stem}.json"));
    fs::write(&json_path, report.to_json()?).map_err(|e| AppError::Core(e.into()))?;
    let csv_file =
        fs::File::create(cfg.output_dir.join(format!("{stem}.csv"))).map_err(|e| AppError::Core(e.into()))?;
    report.write_csv(csv_file)?;
    if cfg.write_raw {
        let raw =
            fs::File::create(cfg.output_dir.join(format!("{stem}_raw.csv"))).map_err(|e| AppError::Core(e.into()))?;
        report.write_raw_csv(raw)?;
    }
    print!("{}", report.table());
    log::info!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_fit_gp(args: &FitGpArgs, seed: u64) -> Result<(), AppError> {
    let ds = load_csv(&args.data, &ColumnRef::Name(args.response.clone()), !args.keep_missing)?;
    let opts = GpFitOptions { n_restarts: args.restarts, max_iters: args.max_iters, seed, ..GpFitOptions::default() };
    let model = fit_gp(&ds.x, &ds.y, &opts)?;
    write_output(args.out.as_deref(), &model.to_json()?)
}

fn cmd_predict(args: &PredictArgs) -> Result<(), AppError> {
    let text = fs::read_to_string(&args.model).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            AppError::Core(bir_core::Error::FileNotFound(args.model.clone()))
        } else {
            AppError::Core(e.into())
        }
    })?;
    let model = GpModel::from_json(&text)?;
    let x: Vec<f64> = args
        .x
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| AppError::Usage(format!("not a number: {v:?}"))))
        .collect::<Result<_, _>>()?;
    let (mean, variance) = model.predict(&x)?;
    println!("{}", json!({ "mean": mean, "variance": variance }));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), AppError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(AppError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| AppError::Usage(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Dr(args) => cmd_dr(args, seed),
        Command::Bench(args) => cmd_bench(args, cli),
        Command::FitGp(args) => cmd_fit_gp(args, seed),
        Command::Predict(args) => cmd_predict(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(level) = &cli.log_level {
        init_logging(level);
    } else if !matches!(cli.command, Command::Bench(_)) {
        init_logging("warn");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
