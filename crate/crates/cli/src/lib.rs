//! Command-line surface: `fit-predict`, `simulate` and `barycenter`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rem::baseline::{fit_two_step, BandwidthRule, KdeConfig};
use rem::io::{
    self, Diagnostics, LongFormatDataset, MethodTag, OutputRecord, Warning, WarningCode,
};
use rem::measures::{self, default_density_bandwidth, quantile_to_density, QuantileGrid};
use rem::regression::default_bandwidth;
use rem::simulation::{run_study, Setting, SimulationScenario, StudyReport};
use rem::{CovariateSample, Kernel, Prediction, RemConfig, RemError, RemModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Rem(#[from] RemError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Rem(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Rem(_) => 1,
        }
    }

    /// Single-line JSON error for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } })
            .to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "rem",
    version,
    about = "Wasserstein regression with empirical measures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a regression model and predict distributions at query points.
    FitPredict(FitPredictArgs),
    /// Run the Monte Carlo comparison study.
    Simulate(SimulateArgs),
    /// Equal-weight Wasserstein barycenter of all units.
    Barycenter(BarycenterArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Global,
    Local,
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Epanechnikov,
    Triangular,
    Quartic,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
            KernelArg::Triangular => Kernel::Triangular,
            KernelArg::Quartic => Kernel::Quartic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Observations CSV with header `unit_id,y`.
    #[arg(long)]
    pub observations: PathBuf,
    /// Units CSV with header `unit_id,z1[,z2,...]`.
    #[arg(long)]
    pub units: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Attach a density curve to every record.
    #[arg(long, overrides_with = "no_density")]
    pub density: bool,
    #[arg(long = "no-density", overrides_with = "density")]
    pub no_density: bool,
    /// Density smoothing bandwidth (default: Silverman rule on the quantile grid).
    #[arg(long)]
    pub density_bandwidth: Option<f64>,
    #[arg(long, default_value_t = 512)]
    pub density_points: usize,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct FitPredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Global)]
    pub method: MethodArg,
    /// Regression used after presmoothing with `--method two-step`.
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub two_step_mode: ModeArg,
    /// Local bandwidth (default: n^(-1/5)).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = rem::DEFAULT_GRID_CAP)]
    pub grid_cap: usize,
    /// Response domain `lo,hi`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Query file, or inline list (`3,5` for scalar z; `1,2;3,4` for vectors).
    #[arg(long)]
    pub queries: String,
    /// Fixed presmoothing bandwidth for two-step (default: Silverman per unit).
    #[arg(long)]
    pub kde_bandwidth: Option<f64>,
    /// Quantile grid size of the presmoothed units.
    #[arg(long, default_value_t = 1000)]
    pub two_step_grid: usize,
    /// Accepted for interface uniformity; fitting and prediction are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub setting: String,
    #[arg(long, default_value = "50,100,200")]
    pub n_ladder: String,
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.25)]
    pub lambda_rate: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value_t = 100)]
    pub query_points: usize,
    #[arg(long, default_value_t = rem::DEFAULT_GRID_CAP)]
    pub grid_cap: usize,
    #[arg(long, default_value_t = 1000)]
    pub two_step_grid: usize,
    /// Skip the two-step baseline.
    #[arg(long)]
    pub no_two_step: bool,
    /// In settings II/IV also fit global REM for reference.
    #[arg(long)]
    pub global_reference: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BarycenterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = rem::DEFAULT_GRID_CAP)]
    pub grid_cap: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitPredict(args) => {
            let records = cmd_fit_predict(&args)?;
            emit(&records, &args.output)
        }
        Command::Simulate(args) => {
            let report = cmd_simulate(&args)?;
            print!("{}", summary_table(&report));
            Ok(())
        }
        Command::Barycenter(args) => {
            let record = cmd_barycenter(&args)?;
            emit(std::slice::from_ref(&record), &args.output)
        }
    }
}

fn emit(records: &[OutputRecord], out: &OutputArgs) -> Result<()> {
    let text = match out.format {
        Format::Json => io::records_to_json(records)?,
        Format::Csv => io::records_to_csv(records),
    };
    match &out.out {
        Some(path) => std::fs::write(path, text).map_err(RemError::from)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load(data: &DataArgs) -> Result<LongFormatDataset> {
    Ok(io::ingest_paths(&data.observations, &data.units)?)
}

fn load_queries(spec: &str, p: usize) -> Result<Vec<Vec<f64>>> {
    let path = Path::new(spec);
    let queries = if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(RemError::from)?;
        io::parse_query_table(&text, p)?
    } else {
        io::parse_queries(spec, p).map_err(|e| CliError::Usage(e.to_string()))?
    };
    if queries.is_empty() {
        return Err(CliError::Usage("no queries given".into()));
    }
    Ok(queries)
}

fn density_for(q: &QuantileGrid, out: &OutputArgs) -> Result<Option<measures::DensityCurve>> {
    if !out.density || out.no_density {
        return Ok(None);
    }
    let h = out
        .density_bandwidth
        .unwrap_or_else(|| default_density_bandwidth(q));
    Ok(Some(quantile_to_density(q, h, out.density_points)?))
}

fn cap_warning(ds: &LongFormatDataset, cap: usize) -> Option<Warning> {
    let largest = ds.measures.iter().map(|m| m.size()).max()?;
    (cap < largest).then(|| {
        Warning::new(
            WarningCode::GridCapBelowUnitSize,
            format!("grid cap {cap} is below the largest unit size {largest}"),
        )
    })
}

/// Fits the requested model and returns one record per query.
pub fn cmd_fit_predict(args: &FitPredictArgs) -> Result<Vec<OutputRecord>> {
    let ds = load(&args.data)?;
    let p = ds.dim();
    let local_requested = args.method == MethodArg::Local
        || (args.method == MethodArg::TwoStep && args.two_step_mode == ModeArg::Local);
    if local_requested && p != 1 {
        return Err(CliError::Usage(format!(
            "local regression needs a single covariate, the units file has {p}"
        )));
    }
    if ds.n() < 2 {
        return Err(RemError::DegenerateDesign(format!(
            "need at least two units with observations, got {}",
            ds.n()
        ))
        .into());
    }
    let domain = args
        .domain
        .as_deref()
        .map(io::parse_domain)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(d) = &domain {
        ds.check_domain(d)?;
    }
    let queries = load_queries(&args.queries, p)?;

    let bandwidth = args.bandwidth.unwrap_or_else(|| default_bandwidth(ds.n()));
    let mut config = if local_requested {
        RemConfig::local(bandwidth, args.kernel.into())
    } else {
        RemConfig::global()
    };
    config.grid_cap = args.grid_cap;
    config.domain = domain;

    let covariates = CovariateSample::new(ds.covariates.clone())?;
    let mut warnings = ds.warnings.clone();
    let mut excluded_ids = ds.excluded_units.clone();
    let (model, method) = match args.method {
        MethodArg::Global | MethodArg::Local => {
            warnings.extend(cap_warning(&ds, args.grid_cap));
            let tag = if local_requested {
                MethodTag::RemLocal
            } else {
                MethodTag::RemGlobal
            };
            (RemModel::fit(config, covariates, &ds.measures)?, tag)
        }
        MethodArg::TwoStep => {
            let kde = KdeConfig {
                bandwidth: match args.kde_bandwidth {
                    Some(value) => BandwidthRule::Fixed { value },
                    None => BandwidthRule::Silverman,
                },
                ..KdeConfig::default()
            };
            let fit = fit_two_step(&covariates, &ds.measures, &kde, config, args.two_step_grid)?;
            if !fit.excluded.is_empty() {
                let ids: Vec<String> = fit
                    .excluded
                    .iter()
                    .map(|&i| ds.unit_ids[i].clone())
                    .collect();
                warnings.push(Warning::new(
                    WarningCode::TwoStepExcluded,
                    format!(
                        "{} unit(s) with fewer than two observations excluded from presmoothing: {}",
                        ids.len(),
                        ids.join(", ")
                    ),
                ));
                excluded_ids.extend(ids);
            }
            (fit.model, MethodTag::TwoStep)
        }
    };

    queries
        .iter()
        .map(|z| {
            let pred = model.predict(z)?;
            record_for(
                &pred,
                &model,
                method,
                &warnings,
                &excluded_ids,
                &args.output,
            )
        })
        .collect()
}

fn record_for(
    pred: &Prediction,
    model: &RemModel,
    method: MethodTag,
    base_warnings: &[Warning],
    excluded_ids: &[String],
    out: &OutputArgs,
) -> Result<OutputRecord> {
    let mut warnings = base_warnings.to_vec();
    if pred.is_extrapolation() {
        warnings.push(Warning::new(
            WarningCode::Extrapolation,
            format!(
                "query {:?} has a regression weight of magnitude {:.3} (> {})",
                pred.z,
                pred.max_abs_weight(),
                rem::regression::EXTRAPOLATION_WEIGHT
            ),
        ));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64| pred.weights.iter().cloned().fold(init, f);
    Ok(OutputRecord {
        query: pred.z.clone(),
        method,
        grid_size: pred.quantiles.grid_size(),
        quantiles: pred.quantiles.values().to_vec(),
        density: density_for(&pred.quantiles, out)?,
        diagnostics: Diagnostics {
            units: model.covariates().n(),
            weight_min: Some(fold(f64::min, f64::INFINITY)),
            weight_max: Some(fold(f64::max, f64::NEG_INFINITY)),
            excluded_units: excluded_ids.len(),
            excluded_unit_ids: excluded_ids.to_vec(),
            warnings,
        },
    })
}

/// Equal-weight barycenter of every ingested unit.
pub fn cmd_barycenter(args: &BarycenterArgs) -> Result<OutputRecord> {
    let ds = load(&args.data)?;
    if ds.measures.is_empty() {
        return Err(
            RemError::InvalidArgument("dataset has no units with observations".into()).into(),
        );
    }
    let mut warnings = ds.warnings.clone();
    warnings.extend(cap_warning(&ds, args.grid_cap));
    let q = measures::barycenter(&ds.measures, args.grid_cap)?;
    Ok(OutputRecord {
        query: Vec::new(),
        method: MethodTag::Barycenter,
        grid_size: q.grid_size(),
        density: density_for(&q, &args.output)?,
        quantiles: q.into_values(),
        diagnostics: Diagnostics {
            units: ds.n(),
            weight_min: Some(1.0),
            weight_max: Some(1.0),
            excluded_units: ds.excluded_units.len(),
            excluded_unit_ids: ds.excluded_units.clone(),
            warnings,
        },
    })
}

/// Runs the study and writes `runs.jsonl`, `summary.json`, `summary.csv`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<StudyReport> {
    let setting: Setting = args
        .setting
        .parse()
        .map_err(|e: RemError| CliError::Usage(e.to_string()))?;
    let mut scenario = SimulationScenario::new(setting);
    scenario.n_ladder =
        io::parse_usize_list(&args.n_ladder).map_err(|e| CliError::Usage(e.to_string()))?;
    scenario.runs = args.runs;
    scenario.master_seed = args.seed;
    scenario.lambda_rate = args.lambda_rate;
    scenario.query_points = args.query_points;
    scenario.grid_cap = args.grid_cap;
    scenario.two_step = !args.no_two_step;
    scenario.two_step_grid = args.two_step_grid;
    scenario.global_reference = args.global_reference;
    let report = run_study(&scenario, args.workers)?;
    io::write_study(&args.out_dir, &report)?;
    Ok(report)
}

/// Human-readable summary of a study.
pub fn summary_table(report: &StudyReport) -> String {
    let mut out = format!(
        "setting {}  runs {}  seed {}\n{:>6}  {:<11} {:>5} {:>12} {:>12} {:>12}\n",
        report.scenario.setting,
        report.scenario.runs,
        report.scenario.master_seed,
        "n",
        "method",
        "runs",
        "q1",
        "median",
        "q3"
    );
    for r in &report.summary {
        out.push_str(&format!(
            "{:>6}  {:<11} {:>5} {:>12.6} {:>12.6} {:>12.6}\n",
            r.n,
            r.method.as_str(),
            r.runs,
            r.q1,
            r.median,
            r.q3
        ));
    }
    for s in &report.rate_slopes {
        out.push_str(&format!(
            "log-log slope of mean ISE ({}): {:.4}\n",
            s.method, s.slope
        ));
    }
    out
}
