//! Two-step comparison method: Gaussian kernel density presmoothing of each
//! unit, then Fréchet regression on the smoothed quantile functions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, RemError, Result};
use crate::measures::{EmpiricalMeasure, QuantileGrid};
use crate::regression::{CovariateSample, RemConfig, RemModel};
use crate::stats::{normal_cdf, silverman_bandwidth};

/// Units smaller than this cannot be presmoothed.
pub const MIN_UNIT_SIZE: usize = 2;

/// Beyond this many bandwidths the Gaussian CDF is 0 or 1 to double precision.
const KERNEL_TAIL: f64 = 8.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum BandwidthRule {
    /// `0.9 min(sd, IQR/1.34) N^(-1/5)` per unit.
    Silverman,
    Fixed {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub bandwidth: BandwidthRule,
    /// Points on which the KDE distribution function is tabulated before inversion.
    pub cdf_grid_size: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthRule::Silverman,
            cdf_grid_size: 1000,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if let BandwidthRule::Fixed { value } = self.bandwidth {
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(format!(
                    "fixed KDE bandwidth must be positive, got {value}"
                )));
            }
        }
        if self.cdf_grid_size < 2 {
            return Err(invalid("KDE CDF grid needs at least two points"));
        }
        Ok(())
    }

    fn bandwidth_for(&self, sorted: &[f64]) -> f64 {
        match self.bandwidth {
            BandwidthRule::Silverman => silverman_bandwidth(sorted),
            BandwidthRule::Fixed { value } => value,
        }
    }
}

/// Quantile function of the Gaussian KDE of `m`, sampled at the cell
/// midpoints of a `grid_size`-cell grid.
///
/// The KDE distribution function is tabulated on `cdf_grid_size` equally
/// spaced points spanning the data range widened by four bandwidths, and
/// inverted by monotone linear interpolation.
pub fn kde_quantile(
    m: &EmpiricalMeasure,
    cfg: &KdeConfig,
    grid_size: usize,
) -> Result<QuantileGrid> {
    cfg.validate()?;
    if m.size() < MIN_UNIT_SIZE {
        return Err(RemError::InfeasibleUnit { size: m.size() });
    }
    if grid_size == 0 {
        return Err(invalid("grid size must be at least 1"));
    }
    let data = m.values();
    let h = cfg.bandwidth_for(data);
    let lo = data[0] - 4.0 * h;
    let hi = data[data.len() - 1] + 4.0 * h;
    let k = cfg.cdf_grid_size;
    let step = (hi - lo) / (k - 1) as f64;
    let xs: Vec<f64> = (0..k)
        .map(|i| if i == k - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let cdf = kde_cdf(data, h, &xs);

    let big_m = grid_size as f64;
    let mut seg = 0;
    let values = (0..grid_size)
        .map(|j| {
            let p = (j as f64 + 0.5) / big_m;
            if p <= cdf[0] {
                return xs[0];
            }
            if p >= cdf[k - 1] {
                return xs[k - 1];
            }
            // p is increasing in j, so the bracketing segment only moves right
            while cdf[seg + 1] < p {
                seg += 1;
            }
            let (c0, c1) = (cdf[seg], cdf[seg + 1]);
            if c1 > c0 {
                xs[seg] + (p - c0) / (c1 - c0) * (xs[seg + 1] - xs[seg])
            } else {
                xs[seg + 1]
            }
        })
        .collect();
    QuantileGrid::new(values)
}

/// `F(x) = (1/N) sum_j Phi((x - y_j) / h)` for sorted data and sorted `xs`.
fn kde_cdf(sorted: &[f64], h: f64, xs: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    let (mut below, mut above) = (0, 0);
    xs.iter()
        .map(|&x| {
            // [0, below) sits more than KERNEL_TAIL bandwidths left of x: contributes 1.
            while below < n && sorted[below] < x - KERNEL_TAIL * h {
                below += 1;
            }
            // [above, n) sits more than KERNEL_TAIL bandwidths right of x: contributes 0.
            while above < n && sorted[above] <= x + KERNEL_TAIL * h {
                above += 1;
            }
            let mid: f64 = sorted[below..above.max(below)]
                .iter()
                .map(|y| normal_cdf((x - y) / h))
                .sum();
            (below as f64 + mid) / n as f64
        })
        .collect()
}

/// Two-step fit with the indices of units dropped as infeasible.
#[derive(Debug, Clone)]
pub struct TwoStepModel {
    pub model: RemModel,
    /// Indices (into the input) of units too small to presmooth.
    pub excluded: Vec<usize>,
}

/// Presmooths every feasible unit onto a `grid_size`-cell grid and fits the
/// same Fréchet regression as REM on the results.
pub fn fit_two_step(
    covariates: &CovariateSample,
    measures: &[EmpiricalMeasure],
    kde: &KdeConfig,
    config: RemConfig,
    grid_size: usize,
) -> Result<TwoStepModel> {
    if measures.len() != covariates.n() {
        return Err(RemError::LengthMismatch {
            expected: covariates.n(),
            found: measures.len(),
        });
    }
    kde.validate()?;
    let (keep, excluded): (Vec<usize>, Vec<usize>) =
        (0..measures.len()).partition(|&i| measures[i].size() >= MIN_UNIT_SIZE);
    if keep.is_empty() {
        return Err(RemError::AllUnitsInfeasible);
    }
    if !excluded.is_empty() {
        log::warn!(
            "two-step fit excluded {} unit(s) with fewer than {MIN_UNIT_SIZE} observations",
            excluded.len()
        );
    }
    let grids = keep
        .iter()
        .map(|&i| kde_quantile(&measures[i], kde, grid_size))
        .collect::<Result<Vec<_>>>()?;
    let cov = if excluded.is_empty() {
        covariates.clone()
    } else {
        covariates.subset(&keep)?
    };
    let model = RemModel::fit_quantiles(config, cov, grids)?;
    Ok(TwoStepModel { model, excluded })
}
