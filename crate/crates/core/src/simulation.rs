//! Generative settings I–IV, integrated squared error, and a Monte Carlo
//! harness comparing REM with the two-step baseline.
//!
//! # Reproducibility
//!
//! Run `q` at ladder size `n` draws from a ChaCha8 generator keyed by
//! `splitmix64(master_seed ^ splitmix64(n))` and positioned on stream `q`
//! (see [`run_rng`]), so every run is independent of execution order and of
//! the number of worker threads. Within a run the draws happen unit by unit
//! in this order: `Z ~ U(-1, 1)`, `eta ~ N(., tau^2)` (ziggurat),
//! `sigma ~ Gamma` (Marsaglia–Tsang), `N ~ Poisson` (rand_distr: Knuth's
//! multiplication method below rate 12, Ahrens–Dieter rejection above), the
//! transport index `k` (settings III/IV), then `N` open-interval uniforms
//! pushed through the Gaussian quantile function and, for III/IV, the
//! transport map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Open01, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_two_step, KdeConfig};
use crate::error::{invalid, RemError, Result};
use crate::io::MethodTag;
use crate::measures::{squared_distance, EmpiricalMeasure, QuantileGrid};
use crate::regression::{default_bandwidth, CovariateSample, Kernel, RemConfig, RemModel};
use crate::stats::{self, normal_quantile, standard_normal_grid};
use crate::DEFAULT_GRID_CAP;

/// Share of failed runs above which a study is aborted.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    I,
    II,
    III,
    IV,
}

impl Setting {
    /// Settings II and IV have a nonlinear (sinusoidal) regression function.
    pub fn is_nonlinear(self) -> bool {
        matches!(self, Setting::II | Setting::IV)
    }

    pub fn is_transported(self) -> bool {
        matches!(self, Setting::III | Setting::IV)
    }

    /// Predictor transform entering the mean and scale: `z` or `sin(pi z)`.
    pub fn link(self, z: f64) -> f64 {
        if self.is_nonlinear() {
            (std::f64::consts::PI * z).sin()
        } else {
            z
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = RemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Setting::I),
            "II" | "2" => Ok(Setting::II),
            "III" | "3" => Ok(Setting::III),
            "IV" | "4" => Ok(Setting::IV),
            other => Err(invalid(format!("unknown setting {other:?}"))),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Setting::I => "I",
            Setting::II => "II",
            Setting::III => "III",
            Setting::IV => "IV",
        };
        f.write_str(s)
    }
}

/// Distribution parameters shared by all four settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingParams {
    pub eta0: f64,
    pub sigma0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub kappa: f64,
}

impl Default for SettingParams {
    fn default() -> Self {
        Self {
            eta0: 0.0,
            sigma0: 3.0,
            alpha: 3.0,
            beta: 0.5,
            tau: 0.5,
            kappa: 1.0,
        }
    }
}

impl SettingParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.eta0,
            self.sigma0,
            self.alpha,
            self.beta,
            self.tau,
            self.kappa,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(RemError::InvalidParameter(
                "parameters must be finite".into(),
            ));
        }
        // the link ranges over [-1, 1] for z in [-1, 1]
        if self.sigma0 - self.beta.abs() <= 0.0 {
            return Err(RemError::InvalidParameter(format!(
                "sigma0 + beta * g(z) must stay positive on [-1, 1] (sigma0 = {}, beta = {})",
                self.sigma0, self.beta
            )));
        }
        if self.tau < 0.0 {
            return Err(RemError::InvalidParameter("tau must be nonnegative".into()));
        }
        if self.kappa <= 0.0 {
            return Err(RemError::InvalidParameter("kappa must be positive".into()));
        }
        Ok(())
    }
}

/// Conditional mean of the location and of the scale given `Z = z`.
pub fn true_moments(setting: Setting, params: &SettingParams, z: f64) -> (f64, f64) {
    let g = setting.link(z);
    (
        params.eta0 + params.alpha * g,
        params.sigma0 + params.beta * g,
    )
}

/// Quantile function of the true regression `m(z)` at the midpoints of
/// `grid_size` cells.
///
/// Settings III/IV share the regression function of I/II: the four transport
/// maps average to the identity.
pub fn true_quantile(
    setting: Setting,
    params: &SettingParams,
    z: f64,
    grid_size: usize,
) -> Result<QuantileGrid> {
    if grid_size == 0 {
        return Err(invalid("grid size must be at least 1"));
    }
    true_quantile_on(setting, params, z, &standard_normal_grid(grid_size))
}

/// [`true_quantile`] with precomputed standard normal quantiles.
pub fn true_quantile_on(
    setting: Setting,
    params: &SettingParams,
    z: f64,
    standard: &[f64],
) -> Result<QuantileGrid> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(invalid(format!("query {z} outside [-1, 1]")));
    }
    let (mean, sd) = true_moments(setting, params, z);
    if !(sd > 0.0) {
        return Err(RemError::InvalidParameter(format!(
            "true sd {sd} at z = {z} is not positive"
        )));
    }
    QuantileGrid::new(standard.iter().map(|s| mean + sd * s).collect())
}

/// `T_k(x) = x - sin(k x) / |k|` for `k` in `{-2, -1, 1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportMap {
    k: i8,
}

impl TransportMap {
    pub const ALL: [TransportMap; 4] = [
        TransportMap { k: -2 },
        TransportMap { k: -1 },
        TransportMap { k: 1 },
        TransportMap { k: 2 },
    ];

    pub fn new(k: i8) -> Result<Self> {
        if matches!(k, -2 | -1 | 1 | 2) {
            Ok(Self { k })
        } else {
            Err(invalid(format!(
                "transport index must be one of -2, -1, 1, 2; got {k}"
            )))
        }
    }

    pub fn k(self) -> i8 {
        self.k
    }

    /// `sin(kx)/|k|`, so that `T_k(x) = x - correction(x)`.
    pub fn correction(self, x: f64) -> f64 {
        let k = f64::from(self.k);
        (k * x).sin() / k.abs()
    }

    pub fn apply(self, x: f64) -> f64 {
        x - self.correction(x)
    }

    /// `(1/4) sum_k T_k(x)`, summed as `x` minus the mean correction so the
    /// opposite-`k` sines cancel exactly.
    pub fn mean_transport(x: f64) -> f64 {
        x - Self::ALL.iter().map(|t| t.correction(x)).sum::<f64>() / 4.0
    }
}

/// One simulated unit before exclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledUnit {
    /// `None` when the unit drew zero observations.
    pub measure: Option<EmpiricalMeasure>,
    pub eta: f64,
    pub sigma: f64,
    pub size: usize,
    pub transport: Option<TransportMap>,
}

/// Draws one unit's latent distribution and its observations at `z`.
pub fn sample_unit<R: Rng + ?Sized>(
    setting: Setting,
    params: &SettingParams,
    z: f64,
    expected_size: f64,
    rng: &mut R,
) -> Result<SampledUnit> {
    params.validate()?;
    if !(expected_size > 0.0) || !expected_size.is_finite() {
        return Err(RemError::InvalidParameter(format!(
            "expected unit size must be positive, got {expected_size}"
        )));
    }
    let (mean, scale_mean) = true_moments(setting, params, z);
    let eta = if params.tau > 0.0 {
        Normal::new(mean, params.tau)
            .map_err(|e| RemError::InvalidParameter(e.to_string()))?
            .sample(rng)
    } else {
        mean
    };
    let shape = scale_mean * scale_mean / params.kappa;
    let scale = params.kappa / scale_mean;
    let sigma = Gamma::new(shape, scale)
        .map_err(|e| RemError::InvalidParameter(e.to_string()))?
        .sample(rng);
    let size = Poisson::new(expected_size)
        .map_err(|e| RemError::InvalidParameter(e.to_string()))?
        .sample(rng) as usize;
    let transport = if setting.is_transported() {
        Some(TransportMap::ALL[rng.random_range(0..4)])
    } else {
        None
    };
    let uniforms: Vec<f64> = (0..size).map(|_| rng.sample(Open01)).collect();
    let values = transported_draws(eta, sigma, transport, &uniforms);
    let measure = if values.is_empty() {
        None
    } else {
        Some(EmpiricalMeasure::new(values)?)
    };
    Ok(SampledUnit {
        measure,
        eta,
        sigma,
        size,
        transport,
    })
}

/// Maps uniforms to observations `T(eta + sigma Phi^-1(u))`.
pub fn transported_draws(
    eta: f64,
    sigma: f64,
    transport: Option<TransportMap>,
    uniforms: &[f64],
) -> Vec<f64> {
    uniforms
        .iter()
        .map(|&u| {
            let x = eta + sigma * normal_quantile(u);
            transport.map_or(x, |t| t.apply(x))
        })
        .collect()
}

/// Uniform midpoint quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGrid {
    points: Vec<f64>,
    spacing: f64,
}

impl QueryGrid {
    /// `count` cell midpoints of `[lo, hi]`.
    pub fn midpoints(count: usize, lo: f64, hi: f64) -> Result<Self> {
        if count == 0 || !(lo < hi) {
            return Err(invalid("query grid needs count >= 1 and lo < hi"));
        }
        let spacing = (hi - lo) / count as f64;
        Ok(Self {
            points: (0..count)
                .map(|i| lo + (i as f64 + 0.5) * spacing)
                .collect(),
            spacing,
        })
    }

    /// The default ISE grid: 100 midpoints on `[-1, 1]`.
    pub fn standard() -> Self {
        Self::midpoints(100, -1.0, 1.0).expect("valid constant grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Midpoint-rule approximation of `int d_W^2(fitted(z), truth(z)) dz`.
pub fn ise<F, T>(grid: &QueryGrid, mut fitted: F, mut truth: T) -> Result<f64>
where
    F: FnMut(f64) -> Result<QuantileGrid>,
    T: FnMut(f64) -> Result<QuantileGrid>,
{
    let mut total = 0.0;
    for &z in &grid.points {
        total += squared_distance(&fitted(z)?, &truth(z)?)?;
    }
    Ok(total * grid.spacing)
}

/// Full parameterization of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub setting: Setting,
    pub n_ladder: Vec<usize>,
    /// Unit sizes are Poisson with mean `lambda_rate * n`.
    pub lambda_rate: f64,
    pub params: SettingParams,
    pub runs: usize,
    pub master_seed: u64,
    pub query_points: usize,
    pub grid_cap: usize,
    /// Fit the two-step baseline alongside REM.
    pub two_step: bool,
    /// Presmoothed quantile grid size for the two-step baseline.
    pub two_step_grid: usize,
    pub kde: KdeConfig,
    /// In settings II/IV, also fit global REM to the same data.
    pub global_reference: bool,
}

impl SimulationScenario {
    /// Desk-scale defaults for a setting: 200 runs over `n = 50, 100, 200`.
    pub fn new(setting: Setting) -> Self {
        Self {
            setting,
            n_ladder: vec![50, 100, 200],
            lambda_rate: 0.25,
            params: SettingParams::default(),
            runs: 200,
            master_seed: 0,
            query_points: 100,
            grid_cap: DEFAULT_GRID_CAP,
            two_step: true,
            two_step_grid: 1000,
            kde: KdeConfig::default(),
            global_reference: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_ladder.is_empty() || self.n_ladder.iter().any(|&n| n < 2) {
            return Err(RemError::InvalidParameter(
                "every ladder size must be at least 2".into(),
            ));
        }
        if self.runs == 0 {
            return Err(RemError::InvalidParameter("need at least one run".into()));
        }
        if !(self.lambda_rate > 0.0) || !self.lambda_rate.is_finite() {
            return Err(RemError::InvalidParameter(
                "lambda rate must be positive".into(),
            ));
        }
        if self.query_points == 0 || self.grid_cap == 0 || self.two_step_grid == 0 {
            return Err(RemError::InvalidParameter(
                "query points and grid sizes must be positive".into(),
            ));
        }
        self.kde.validate()
    }

    /// The REM variant fitted in this setting.
    pub fn rem_method(&self) -> MethodTag {
        if self.setting.is_nonlinear() {
            MethodTag::RemLocal
        } else {
            MethodTag::RemGlobal
        }
    }

    fn methods(&self) -> Vec<MethodTag> {
        let mut m = vec![self.rem_method()];
        if self.two_step {
            m.push(MethodTag::TwoStep);
        }
        if self.global_reference && self.setting.is_nonlinear() {
            m.push(MethodTag::RemGlobal);
        }
        m
    }
}

/// Outcome of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub setting: Setting,
    pub n: usize,
    pub run_index: usize,
    pub units_used: usize,
    pub empty_units: usize,
    pub ise_rem: Option<f64>,
    /// `None` when the baseline was skipped or could not be fitted.
    pub ise_two_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_step_excluded: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ise_rem_global: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunResult {
    pub fn ise(&self, method: MethodTag, primary: MethodTag) -> Option<f64> {
        match method {
            m if m == primary => self.ise_rem,
            MethodTag::TwoStep => self.ise_two_step,
            MethodTag::RemGlobal => self.ise_rem_global,
            MethodTag::RemLocal | MethodTag::Barycenter => None,
        }
    }
}

/// Derives the generator for run `run_index` at ladder size `n`.
pub fn run_rng(master_seed: u64, n: usize, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(n as u64)));
    rng.set_stream(run_index as u64);
    rng
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulated data set for one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub z: Vec<f64>,
    pub measures: Vec<EmpiricalMeasure>,
    pub empty_units: usize,
}

/// Draws the `n` units of one run, dropping those with no observations.
pub fn simulate_data<R: Rng + ?Sized>(
    setting: Setting,
    params: &SettingParams,
    n: usize,
    lambda_rate: f64,
    rng: &mut R,
) -> Result<RunData> {
    let uniform = Uniform::new(-1.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let expected = lambda_rate * n as f64;
    let mut z = Vec::with_capacity(n);
    let mut measures = Vec::with_capacity(n);
    let mut empty_units = 0;
    for _ in 0..n {
        let zi = uniform.sample(rng);
        let unit = sample_unit(setting, params, zi, expected, rng)?;
        match unit.measure {
            Some(m) => {
                z.push(zi);
                measures.push(m);
            }
            None => empty_units += 1,
        }
    }
    Ok(RunData {
        z,
        measures,
        empty_units,
    })
}

struct TruthCache<'a> {
    setting: Setting,
    params: &'a SettingParams,
    grids: Vec<(usize, Vec<f64>)>,
}

impl TruthCache<'_> {
    fn at(&mut self, z: f64, grid_size: usize) -> Result<QuantileGrid> {
        let idx = match self.grids.iter().position(|(m, _)| *m == grid_size) {
            Some(i) => i,
            None => {
                self.grids
                    .push((grid_size, standard_normal_grid(grid_size)));
                self.grids.len() - 1
            }
        };
        true_quantile_on(self.setting, self.params, z, &self.grids[idx].1)
    }
}

fn model_ise(model: &RemModel, queries: &QueryGrid, truth: &mut TruthCache) -> Result<f64> {
    let m = model.grid_size();
    ise(
        queries,
        |z| model.predict(&[z]).map(|p| p.quantiles),
        |z| truth.at(z, m),
    )
}

/// Executes one run of the study at ladder size `n`.
pub fn simulate_run(scenario: &SimulationScenario, n: usize, run_index: usize) -> RunResult {
    let mut result = RunResult {
        setting: scenario.setting,
        n,
        run_index,
        units_used: 0,
        empty_units: 0,
        ise_rem: None,
        ise_two_step: None,
        two_step_excluded: None,
        ise_rem_global: None,
        failure: None,
    };
    if let Err(e) = run_into(scenario, n, run_index, &mut result) {
        result.failure = Some(e.to_string());
    }
    result
}

fn run_into(
    scenario: &SimulationScenario,
    n: usize,
    run_index: usize,
    result: &mut RunResult,
) -> Result<()> {
    let mut rng = run_rng(scenario.master_seed, n, run_index);
    let data = simulate_data(
        scenario.setting,
        &scenario.params,
        n,
        scenario.lambda_rate,
        &mut rng,
    )?;
    result.units_used = data.measures.len();
    result.empty_units = data.empty_units;

    let covariates = CovariateSample::from_scalars(&data.z)?;
    let queries = QueryGrid::midpoints(scenario.query_points, -1.0, 1.0)?;
    let mut truth = TruthCache {
        setting: scenario.setting,
        params: &scenario.params,
        grids: Vec::new(),
    };
    let mut config = if scenario.setting.is_nonlinear() {
        RemConfig::local(default_bandwidth(n), Kernel::Epanechnikov)
    } else {
        RemConfig::global()
    };
    config.grid_cap = scenario.grid_cap;

    let rem = RemModel::fit(config.clone(), covariates.clone(), &data.measures)?;
    result.ise_rem = Some(model_ise(&rem, &queries, &mut truth)?);

    if scenario.global_reference && scenario.setting.is_nonlinear() {
        let global = RemConfig {
            mode: crate::regression::Mode::Global,
            ..config.clone()
        };
        let g = RemModel::fit(global, covariates.clone(), &data.measures)?;
        result.ise_rem_global = Some(model_ise(&g, &queries, &mut truth)?);
    }

    if scenario.two_step {
        // The baseline failing is an outcome of the comparison, not of the run.
        match fit_two_step(
            &covariates,
            &data.measures,
            &scenario.kde,
            config,
            scenario.two_step_grid,
        )
        .and_then(|fit| {
            Ok((
                fit.excluded.len(),
                model_ise(&fit.model, &queries, &mut truth)?,
            ))
        }) {
            Ok((excluded, v)) => {
                result.two_step_excluded = Some(excluded);
                result.ise_two_step = Some(v);
            }
            Err(e) => log::info!("two-step baseline failed in run {run_index} (n = {n}): {e}"),
        }
    }
    Ok(())
}

/// Distribution of ISE for one method at one ladder size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub method: MethodTag,
    pub runs: usize,
    pub missing: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Log–log slope of mean ISE against `n` over the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSlope {
    pub method: MethodTag,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: SimulationScenario,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
    pub rate_slopes: Vec<RateSlope>,
}

impl StudyReport {
    pub fn row(&self, n: usize, method: MethodTag) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.n == n && r.method == method)
    }

    pub fn slope(&self, method: MethodTag) -> Option<f64> {
        self.rate_slopes
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.slope)
    }
}

/// Runs the whole study on `workers` threads (`0` = rayon's default).
///
/// Results are ordered by ladder position then run index and do not depend
/// on `workers`. Individual failed runs are recorded; more than
/// [`MAX_FAILURE_FRACTION`] of them aborts the study.
pub fn run_study(scenario: &SimulationScenario, workers: usize) -> Result<StudyReport> {
    scenario.validate()?;
    let jobs: Vec<(usize, usize)> = scenario
        .n_ladder
        .iter()
        .flat_map(|&n| (0..scenario.runs).map(move |q| (n, q)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, q)| simulate_run(scenario, n, q))
            .collect()
    });

    let failed: Vec<&RunResult> = runs.iter().filter(|r| r.failure.is_some()).collect();
    if failed.len() as f64 > MAX_FAILURE_FRACTION * runs.len() as f64 {
        return Err(RemError::TooManyFailures {
            failed: failed.len(),
            total: runs.len(),
            first: failed[0].failure.clone().unwrap_or_default(),
        });
    }

    let primary = scenario.rem_method();
    let mut summary = Vec::new();
    let mut rate_slopes = Vec::new();
    for method in scenario.methods() {
        let mut log_n = Vec::new();
        let mut log_mean = Vec::new();
        for &n in &scenario.n_ladder {
            let mut values: Vec<f64> = runs
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| r.ise(method, primary))
                .collect();
            let total = runs.iter().filter(|r| r.n == n).count();
            if values.is_empty() {
                continue;
            }
            values.sort_by(f64::total_cmp);
            let row = SummaryRow {
                n,
                method,
                runs: values.len(),
                missing: total - values.len(),
                mean: stats::mean(&values),
                q1: stats::quantile_sorted(&values, 0.25),
                median: stats::quantile_sorted(&values, 0.5),
                q3: stats::quantile_sorted(&values, 0.75),
            };
            if row.mean > 0.0 {
                log_n.push((n as f64).ln());
                log_mean.push(row.mean.ln());
            }
            summary.push(row);
        }
        if log_n.len() >= 2 {
            rate_slopes.push(RateSlope {
                method,
                slope: stats::ols_slope(&log_n, &log_mean),
            });
        }
    }
    Ok(StudyReport {
        scenario: scenario.clone(),
        runs,
        summary,
        rate_slopes,
    })
}
