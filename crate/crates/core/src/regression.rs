//! Global and local Fréchet regression on empirical measures.
//!
//! Each unit's sample is stretched onto the shared grid once at fit time.
//! A prediction weights those grids by the Fréchet regression weights at the
//! query, averages them element-wise and projects the result onto the
//! nondecreasing (and optionally bounded) sequences.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, RemError, Result};
use crate::measures::{
    empirical_quantile, lcm_grid, project_to_wasserstein, weighted_quantile_mean, DomainInterval,
    EmpiricalMeasure, QuantileGrid,
};
use crate::DEFAULT_GRID_CAP;

/// Smallest eigenvalue of the covariate covariance accepted at fit time.
pub const MIN_COVARIANCE_EIGENVALUE: f64 = 1e-10;
/// Local designs with `u0 * u2 - u1^2` at or below this are rejected.
pub const MIN_LOCAL_SIGMA0_SQ: f64 = 1e-12;
/// Weights beyond this magnitude mark the query as an extrapolation.
pub const EXTRAPOLATION_WEIGHT: f64 = 10.0;

/// Predictor matrix with cached mean and maximum-likelihood covariance.
#[derive(Debug, Clone)]
pub struct CovariateSample {
    rows: Vec<Vec<f64>>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl CovariateSample {
    /// Builds the sample from `n` rows of `p` predictors each.
    ///
    /// Rejects `n < 2`, ragged or non-finite rows, and covariances whose
    /// smallest eigenvalue is at most [`MIN_COVARIANCE_EIGENVALUE`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(RemError::DegenerateDesign(format!(
                "need at least two units, got {n}"
            )));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(invalid("covariate rows must have at least one column"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(invalid(format!(
                    "covariate row {i} has {} columns, expected {p}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("covariate row {i} has non-finite values")));
            }
        }
        let nf = n as f64;
        let mean = DVector::from_fn(p, |k, _| rows.iter().map(|r| r[k]).sum::<f64>() / nf);
        let mut covariance = DMatrix::zeros(p, p);
        for r in &rows {
            let d = DVector::from_fn(p, |k, _| r[k] - mean[k]);
            covariance += &d * d.transpose();
        }
        covariance /= nf;

        let eig = covariance.clone().symmetric_eigen();
        let smallest = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(smallest > MIN_COVARIANCE_EIGENVALUE) {
            return Err(RemError::DegenerateDesign(format!(
                "covariate covariance is singular (smallest eigenvalue {smallest:e})"
            )));
        }
        let chol = Cholesky::new(covariance.clone()).ok_or_else(|| {
            RemError::DegenerateDesign("covariate covariance is not positive definite".into())
        })?;
        Ok(Self {
            rows,
            mean,
            covariance,
            chol,
        })
    }

    /// Scalar-predictor convenience constructor.
    pub fn from_scalars(z: &[f64]) -> Result<Self> {
        Self::new(z.iter().map(|&v| vec![v]).collect())
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Sample restricted to the given unit indices.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        Self::new(keep.iter().map(|&i| self.rows[i].clone()).collect())
    }
}

/// Global Fréchet regression weights `s_i = 1 + (Z_i - Zbar)' Sigma^-1 (z - Zbar)`.
pub fn global_weights(c: &CovariateSample, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != c.dim() {
        return Err(RemError::DimensionMismatch {
            expected: c.dim(),
            found: z.len(),
        });
    }
    let centered = DVector::from_fn(c.dim(), |k, _| z[k] - c.mean[k]);
    let a = c.chol.solve(&centered);
    Ok(c.rows
        .iter()
        .map(|r| {
            let dot: f64 = r
                .iter()
                .zip(c.mean.iter())
                .zip(a.iter())
                .map(|((x, m), ak)| (x - m) * ak)
                .sum();
            1.0 + dot
        })
        .collect())
}

/// Symmetric kernel density on `[-1, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Triangular,
    Quartic,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::Triangular => 1.0 - u.abs(),
            Kernel::Quartic => {
                let t = 1.0 - u * u;
                15.0 / 16.0 * t * t
            }
        }
    }

    /// Scaled kernel `K_h(u) = K(u / h) / h`.
    pub fn scaled(self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }
}

impl std::str::FromStr for Kernel {
    type Err = RemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "triangular" => Ok(Kernel::Triangular),
            "quartic" | "biweight" => Ok(Kernel::Quartic),
            other => Err(invalid(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Local linear Fréchet regression weights at scalar `z`.
pub fn local_weights(c: &CovariateSample, z: f64, h: f64, kernel: Kernel) -> Result<Vec<f64>> {
    if c.dim() != 1 {
        return Err(invalid(format!(
            "local regression needs a scalar predictor, got p = {}",
            c.dim()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    if !z.is_finite() {
        return Err(invalid("query must be finite"));
    }
    let n = c.n() as f64;
    let (mut u0, mut u1, mut u2) = (0.0, 0.0, 0.0);
    let kd: Vec<(f64, f64)> = c
        .rows
        .iter()
        .map(|r| {
            let d = r[0] - z;
            let k = kernel.scaled(d, h);
            u0 += k;
            u1 += k * d;
            u2 += k * d * d;
            (k, d)
        })
        .collect();
    let (u0, u1, u2) = (u0 / n, u1 / n, u2 / n);
    let sigma0_sq = u0 * u2 - u1 * u1;
    if !(sigma0_sq > MIN_LOCAL_SIGMA0_SQ) {
        return Err(RemError::InsufficientLocalData { z, sigma0_sq });
    }
    Ok(kd
        .into_iter()
        .map(|(k, d)| k * (u2 - u1 * d) / sigma0_sq)
        .collect())
}

/// Default local bandwidth `n^(-1/5)`.
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-0.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Mode {
    Global,
    Local { bandwidth: f64, kernel: Kernel },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemConfig {
    pub mode: Mode,
    pub grid_cap: usize,
    pub domain: Option<DomainInterval>,
}

impl Default for RemConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Global,
            grid_cap: DEFAULT_GRID_CAP,
            domain: None,
        }
    }
}

impl RemConfig {
    pub fn global() -> Self {
        Self::default()
    }

    pub fn local(bandwidth: f64, kernel: Kernel) -> Self {
        Self {
            mode: Mode::Local { bandwidth, kernel },
            ..Self::default()
        }
    }
}

/// Predicted distribution at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub z: Vec<f64>,
    pub quantiles: QuantileGrid,
    pub weights: Vec<f64>,
}

impl Prediction {
    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |a, w| a.max(w.abs()))
    }

    pub fn is_extrapolation(&self) -> bool {
        self.max_abs_weight() > EXTRAPOLATION_WEIGHT
    }
}

/// Fitted Fréchet regression over quantile-grid responses.
#[derive(Debug, Clone)]
pub struct RemModel {
    config: RemConfig,
    covariates: CovariateSample,
    sizes: Vec<usize>,
    grids: Vec<QuantileGrid>,
}

impl RemModel {
    /// Fits REM on raw empirical measures, one per covariate row.
    pub fn fit(
        config: RemConfig,
        covariates: CovariateSample,
        measures: &[EmpiricalMeasure],
    ) -> Result<Self> {
        if measures.len() != covariates.n() {
            return Err(RemError::LengthMismatch {
                expected: covariates.n(),
                found: measures.len(),
            });
        }
        if let Some(d) = &config.domain {
            for m in measures {
                m.check_domain(d)?;
            }
        }
        let sizes: Vec<usize> = measures.iter().map(EmpiricalMeasure::size).collect();
        let grid = lcm_grid(&sizes, config.grid_cap)?;
        let grids = measures
            .iter()
            .map(|m| empirical_quantile(m, grid))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(config, covariates, sizes, grids)
    }

    /// Fits on already-estimated quantile grids sharing one grid size.
    pub fn fit_quantiles(
        config: RemConfig,
        covariates: CovariateSample,
        grids: Vec<QuantileGrid>,
    ) -> Result<Self> {
        if grids.len() != covariates.n() {
            return Err(RemError::LengthMismatch {
                expected: covariates.n(),
                found: grids.len(),
            });
        }
        let size = grids.first().map_or(0, QuantileGrid::grid_size);
        if let Some(g) = grids.iter().find(|g| g.grid_size() != size) {
            return Err(RemError::GridMismatch {
                left: size,
                right: g.grid_size(),
            });
        }
        let sizes = vec![size; grids.len()];
        Self::assemble(config, covariates, sizes, grids)
    }

    fn assemble(
        config: RemConfig,
        covariates: CovariateSample,
        sizes: Vec<usize>,
        grids: Vec<QuantileGrid>,
    ) -> Result<Self> {
        match config.mode {
            Mode::Global => {}
            Mode::Local { bandwidth, .. } => {
                if covariates.dim() != 1 {
                    return Err(invalid(format!(
                        "local regression needs a scalar predictor, got p = {}",
                        covariates.dim()
                    )));
                }
                if !(bandwidth > 0.0) || !bandwidth.is_finite() {
                    return Err(invalid(format!(
                        "bandwidth must be positive, got {bandwidth}"
                    )));
                }
            }
        }
        Ok(Self {
            config,
            covariates,
            sizes,
            grids,
        })
    }

    pub fn config(&self) -> &RemConfig {
        &self.config
    }

    pub fn covariates(&self) -> &CovariateSample {
        &self.covariates
    }

    /// Per-unit sample sizes (for presmoothed fits, the grid size).
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn grid_size(&self) -> usize {
        self.grids[0].grid_size()
    }

    /// Stretched response grids, in unit order.
    pub fn grids(&self) -> &[QuantileGrid] {
        &self.grids
    }

    pub fn weights(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self.config.mode {
            Mode::Global => global_weights(&self.covariates, z),
            Mode::Local { bandwidth, kernel } => {
                if z.len() != 1 {
                    return Err(RemError::DimensionMismatch {
                        expected: 1,
                        found: z.len(),
                    });
                }
                local_weights(&self.covariates, z[0], bandwidth, kernel)
            }
        }
    }

    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        let weights = self.weights(z)?;
        let averaged = weighted_quantile_mean(&self.grids, &weights)?;
        let quantiles = project_to_wasserstein(&averaged, self.config.domain.as_ref())?;
        let pred = Prediction {
            z: z.to_vec(),
            quantiles,
            weights,
        };
        if pred.is_extrapolation() {
            log::warn!(
                "query {:?} is an extrapolation (max |weight| = {:.3})",
                pred.z,
                pred.max_abs_weight()
            );
        }
        Ok(pred)
    }

    /// Predicts every query; failures are reported per query.
    pub fn predict_batch(&self, zs: &[Vec<f64>]) -> Vec<Result<Prediction>> {
        zs.par_iter().map(|z| self.predict(z)).collect()
    }
}
