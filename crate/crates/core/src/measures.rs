//! One-dimensional Wasserstein geometry.
//!
//! All arithmetic happens on quantile functions. A [`QuantileGrid`] is a step
//! quantile function on `M` equal-probability cells, cell `m` covering
//! `((m - 1) / M, m / M]`. On a shared grid the 2-Wasserstein distance is the
//! exact L2 distance of the steps, and Fréchet means are element-wise means.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, RemError, Result};
use crate::stats;

/// Closed interval `[lower, upper]` that all responses live in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainInterval {
    lower: f64,
    upper: f64,
}

impl DomainInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(invalid(format!(
                "domain must satisfy finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lower).min(self.upper)
    }
}

/// Uniform discrete measure on a unit's raw observations, stored sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    values: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Sorts the observations (stable, so ties keep input order).
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("empirical measure needs at least one observation"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite observation {bad}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn with_domain(values: Vec<f64>, domain: &DomainInterval) -> Result<Self> {
        let m = Self::new(values)?;
        m.check_domain(domain)?;
        Ok(m)
    }

    pub fn check_domain(&self, domain: &DomainInterval) -> Result<()> {
        let (lo, hi) = (self.values[0], self.values[self.values.len() - 1]);
        if !domain.contains(lo) || !domain.contains(hi) {
            return Err(invalid(format!(
                "observations span [{lo}, {hi}], outside domain [{}, {}]",
                domain.lower, domain.upper
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }
}

/// Step quantile function on `grid_size` equal-probability cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("quantile grid needs at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("quantile grid has non-finite entries"));
        }
        if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(invalid(format!(
                "quantile grid decreases at cell {}: {} > {}",
                i + 1,
                values[i],
                values[i + 1]
            )));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_sorted(values: Vec<f64>) -> Self {
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Probability at the midpoint of each cell.
    pub fn cell_midpoints(&self) -> Vec<f64> {
        let m = self.values.len() as f64;
        (0..self.values.len())
            .map(|i| (i as f64 + 0.5) / m)
            .collect()
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = RemError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(q: QuantileGrid) -> Self {
        q.values
    }
}

/// Density estimate evaluated on an increasing abscissa grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    /// Set when the quantile function was constant and the curve is a spike.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl DensityCurve {
    /// Trapezoidal integral of the density.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.x, &self.f)
    }
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]))
        .sum()
}

/// Discretizes the empirical quantile function of `m` onto `grid_size` cells.
///
/// Cell `j` (1-based) takes the left-continuous quantile at `j / M`, i.e. the
/// order statistic `ceil(N j / M)`. When `N` divides `M` this is exactly each
/// observation repeated `M / N` times.
pub fn empirical_quantile(m: &EmpiricalMeasure, grid_size: usize) -> Result<QuantileGrid> {
    if grid_size == 0 {
        return Err(invalid("grid size must be at least 1"));
    }
    let n = m.size() as u128;
    let big_m = grid_size as u128;
    let values = (1..=big_m)
        .map(|j| {
            let idx = (n * j).div_ceil(big_m) - 1;
            m.values[idx as usize]
        })
        .collect();
    Ok(QuantileGrid::from_sorted(values))
}

/// Exact 2-Wasserstein distance between two step quantile functions on the
/// same grid.
pub fn wasserstein_distance(a: &QuantileGrid, b: &QuantileGrid) -> Result<f64> {
    Ok(squared_distance(a, b)?.sqrt())
}

/// Squared 2-Wasserstein distance on a shared grid.
pub fn squared_distance(a: &QuantileGrid, b: &QuantileGrid) -> Result<f64> {
    if a.grid_size() != b.grid_size() {
        return Err(RemError::GridMismatch {
            left: a.grid_size(),
            right: b.grid_size(),
        });
    }
    let ss: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(ss / a.grid_size() as f64)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Common grid size `min(lcm(sizes), cap)`.
///
/// The running lcm stops as soon as it passes `cap`, so it never overflows.
pub fn lcm_grid(sizes: &[usize], cap: usize) -> Result<usize> {
    if sizes.is_empty() {
        return Err(invalid("lcm_grid needs at least one size"));
    }
    if cap == 0 {
        return Err(invalid("grid cap must be positive"));
    }
    if sizes.contains(&0) {
        return Err(invalid("sample sizes must be positive"));
    }
    let largest = *sizes.iter().max().unwrap_or(&1);
    if cap < largest {
        log::warn!(
            "grid cap {cap} is below the largest sample size {largest}; \
             quantiles fall back to non-divisible stretching"
        );
    }
    let cap64 = cap as u64;
    let mut acc: u64 = 1;
    for &s in sizes {
        let s = s as u64;
        let g = gcd(acc, s);
        // acc / g * s > cap  <=>  acc / g > cap / s (integer-safe form)
        let step = acc / g;
        if step > cap64 / s || step * s > cap64 {
            return Ok(cap);
        }
        acc = step * s;
    }
    Ok(acc as usize)
}

/// Element-wise `(1/n) sum_i w_i grid_i`. The result need not be monotone.
///
/// Weights must average to one (to within `1e-10` relative to their scale),
/// as Fréchet regression weights do by construction.
pub fn weighted_quantile_mean(grids: &[QuantileGrid], weights: &[f64]) -> Result<Vec<f64>> {
    if grids.is_empty() {
        return Err(invalid("weighted mean of zero grids"));
    }
    if grids.len() != weights.len() {
        return Err(RemError::LengthMismatch {
            expected: grids.len(),
            found: weights.len(),
        });
    }
    let size = grids[0].grid_size();
    if let Some(g) = grids.iter().find(|g| g.grid_size() != size) {
        return Err(RemError::GridMismatch {
            left: size,
            right: g.grid_size(),
        });
    }
    let n = grids.len() as f64;
    let scale = weights.iter().fold(1.0_f64, |a, w| a.max(w.abs()));
    let avg = weights.iter().sum::<f64>() / n;
    if !avg.is_finite() || (avg - 1.0).abs() > 1e-10 * scale {
        return Err(invalid(format!("weights average to {avg}, expected 1")));
    }
    // With mean weight one, sum_i w_i g_i / n = g_1 + sum_i w_i (g_i - g_1) / n.
    // The centered form is exact when all grids coincide.
    let reference = &grids[0].values;
    let mut acc = vec![0.0; size];
    for (g, &w) in grids.iter().zip(weights).skip(1) {
        for ((a, v), r) in acc.iter_mut().zip(&g.values).zip(reference) {
            *a += w * (v - r);
        }
    }
    let out = reference.iter().zip(acc).map(|(r, a)| r + a / n).collect();
    Ok(out)
}

/// Least-squares projection onto nondecreasing sequences inside `domain`.
///
/// Pool-adjacent-violators with unit weights, then clipping to the domain;
/// for a box constraint shared by all coordinates that composition is the
/// exact minimizer.
pub fn project_to_wasserstein(v: &[f64], domain: Option<&DomainInterval>) -> Result<QuantileGrid> {
    if v.is_empty() {
        return Err(invalid("cannot project an empty sequence"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("cannot project a sequence with non-finite entries"));
    }
    let mut out = pava(v);
    if let Some(d) = domain {
        for x in &mut out {
            *x = d.clamp(*x);
        }
    }
    Ok(QuantileGrid::from_sorted(out))
}

/// Isotonic (nondecreasing) least-squares fit with equal weights.
fn pava(v: &[f64]) -> Vec<f64> {
    // (block sum, block length)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(v.len());
    for (s, c) in blocks {
        // a singleton keeps its exact value; a pooled block gets its mean
        let level = if c == 1 { s } else { s / c as f64 };
        out.extend(std::iter::repeat_n(level, c));
    }
    out
}

/// Equal-weight Wasserstein barycenter of empirical measures on the capped
/// lcm grid.
pub fn barycenter(measures: &[EmpiricalMeasure], cap: usize) -> Result<QuantileGrid> {
    if measures.is_empty() {
        return Err(invalid("barycenter of zero measures"));
    }
    let sizes: Vec<usize> = measures.iter().map(EmpiricalMeasure::size).collect();
    let grid = lcm_grid(&sizes, cap)?;
    let grids = measures
        .iter()
        .map(|m| empirical_quantile(m, grid))
        .collect::<Result<Vec<_>>>()?;
    let mean = weighted_quantile_mean(&grids, &vec![1.0; grids.len()])?;
    project_to_wasserstein(&mean, None)
}

/// Silverman-style bandwidth for the pseudo-sample carried by a quantile grid.
pub fn default_density_bandwidth(q: &QuantileGrid) -> f64 {
    stats::silverman_bandwidth(q.values())
}

/// Converts a quantile function into a density curve on `n_points` abscissae
/// spanning `[q_1, q_M]`.
///
/// The grid implies CDF points `(q_m, (m - 1/2) / M)`. At each abscissa the
/// density is the slope of an Epanechnikov-weighted local linear fit to those
/// points within `bandwidth`, clamped at zero; the curve is then rescaled to
/// unit trapezoidal mass. A constant quantile function yields a spike flagged
/// `degenerate`.
pub fn quantile_to_density(
    q: &QuantileGrid,
    bandwidth: f64,
    n_points: usize,
) -> Result<DensityCurve> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(invalid(format!(
            "density bandwidth must be positive, got {bandwidth}"
        )));
    }
    if n_points < 2 {
        return Err(invalid("density curve needs at least two points"));
    }
    let values = q.values();
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if lo == hi {
        let w = (bandwidth * 1e-3)
            .max(lo.abs() * 1e-9)
            .max(f64::MIN_POSITIVE);
        return Ok(DensityCurve {
            x: vec![lo - w, lo, lo + w],
            f: vec![0.0, 1.0 / w, 0.0],
            degenerate: true,
        });
    }
    let big_m = values.len() as f64;
    let step = (hi - lo) / (n_points - 1) as f64;
    let x: Vec<f64> = (0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect();
    let f: Vec<f64> = x
        .iter()
        .map(|&x0| {
            let start = values.partition_point(|&v| v <= x0 - bandwidth);
            let end = values.partition_point(|&v| v < x0 + bandwidth);
            let (mut sw, mut sx, mut sp) = (0.0, 0.0, 0.0);
            for (i, &v) in values.iter().enumerate().take(end).skip(start) {
                let u = (v - x0) / bandwidth;
                let w = 1.0 - u * u;
                sw += w;
                sx += w * v;
                sp += w * (i as f64 + 0.5) / big_m;
            }
            if sw <= 0.0 {
                return 0.0;
            }
            let (xb, pb) = (sx / sw, sp / sw);
            let (mut sxx, mut sxp) = (0.0, 0.0);
            for (i, &v) in values.iter().enumerate().take(end).skip(start) {
                let u = (v - x0) / bandwidth;
                let w = 1.0 - u * u;
                sxx += w * (v - xb) * (v - xb);
                sxp += w * (v - xb) * ((i as f64 + 0.5) / big_m - pb);
            }
            if sxx <= f64::EPSILON * sw * (hi - lo) * (hi - lo) {
                0.0
            } else {
                (sxp / sxx).max(0.0)
            }
        })
        .collect();
    let mass = trapezoid(&x, &f);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(invalid(format!(
            "bandwidth {bandwidth} is too small to estimate a density from this grid"
        )));
    }
    Ok(DensityCurve {
        x,
        f: f.into_iter().map(|v| v / mass).collect(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::oracle;

    fn measure(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(v.to_vec()).unwrap()
    }

    fn grid(v: &[f64]) -> QuantileGrid {
        QuantileGrid::new(v.to_vec()).unwrap()
    }

    #[test]
    fn empirical_measure_sorts_and_rejects_empty() {
        assert_eq!(measure(&[3.0, 1.0, 2.0]).values(), &[1.0, 2.0, 3.0]);
        assert!(EmpiricalMeasure::new(vec![]).is_err());
        assert!(EmpiricalMeasure::new(vec![f64::NAN]).is_err());
        let d = DomainInterval::new(0.0, 1.0).unwrap();
        assert!(EmpiricalMeasure::with_domain(vec![0.5, 1.5], &d).is_err());
        assert!(EmpiricalMeasure::with_domain(vec![0.0, 1.0], &d).is_ok());
    }

    #[test]
    fn domain_validation() {
        assert!(DomainInterval::new(1.0, 1.0).is_err());
        assert!(DomainInterval::new(0.0, f64::INFINITY).is_err());
        assert!(DomainInterval::new(2.0, 1.0).is_err());
    }

    #[test]
    fn quantile_grid_rejects_decreasing() {
        assert!(QuantileGrid::new(vec![1.0, 0.0]).is_err());
        assert!(QuantileGrid::new(vec![]).is_err());
        let q: QuantileGrid = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(q.values(), &[1.0, 2.0]);
        assert!(serde_json::from_str::<QuantileGrid>("[2.0, 1.0]").is_err());
    }

    #[test]
    fn stretching_examples() {
        let q = empirical_quantile(&measure(&[7.5]), 4).unwrap();
        assert_eq!(q.values(), &[7.5; 4]);
        let q = empirical_quantile(&measure(&[3.0, 1.0]), 6).unwrap();
        assert_eq!(q.values(), &[1.0, 1.0, 1.0, 3.0, 3.0, 3.0]);
        let q = empirical_quantile(&measure(&[6.0, 2.0, 4.0]), 6).unwrap();
        assert_eq!(q.values(), &[2.0, 2.0, 4.0, 4.0, 6.0, 6.0]);
        assert!(empirical_quantile(&measure(&[1.0]), 0).is_err());
    }

    #[test]
    fn non_divisible_stretching_uses_left_continuous_quantile() {
        // N = 3, M = 4: cells end at 1/4, 1/2, 3/4, 1 -> order stats 1, 2, 3, 3
        let q = empirical_quantile(&measure(&[10.0, 20.0, 30.0]), 4).unwrap();
        assert_eq!(q.values(), &[10.0, 20.0, 30.0, 30.0]);
        // N = 4, M = 3: ceil(4/3) = 2, ceil(8/3) = 3, 4
        let q = empirical_quantile(&measure(&[1.0, 2.0, 3.0, 4.0]), 3).unwrap();
        assert_eq!(q.values(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn distance_examples() {
        let a = grid(&[1.0, 2.0, 3.0]);
        assert_eq!(wasserstein_distance(&a, &a).unwrap(), 0.0);
        for m in [1, 3, 7] {
            let d0 = empirical_quantile(&measure(&[0.0]), m).unwrap();
            let d2 = empirical_quantile(&measure(&[2.0]), m).unwrap();
            assert_eq!(wasserstein_distance(&d0, &d2).unwrap(), 2.0);
        }
        let a = measure(&[1.0, 3.0]);
        let b = measure(&[2.0, 4.0, 6.0]);
        let expected = oracle::exact_step_distance_sq(a.values(), b.values()).sqrt();
        // stretched grids (1,1,1,3,3,3) and (2,2,4,4,6,6) differ by (1,1,3,1,3,3)
        assert!((expected - 5.0f64.sqrt()).abs() < 1e-15);
        let d = wasserstein_distance(
            &empirical_quantile(&a, 6).unwrap(),
            &empirical_quantile(&b, 6).unwrap(),
        )
        .unwrap();
        assert!((d - expected).abs() < 1e-14);
    }

    #[test]
    fn distance_refuses_mismatched_grids() {
        let err = wasserstein_distance(&grid(&[1.0]), &grid(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, RemError::GridMismatch { left: 1, right: 2 }));
    }

    #[test]
    fn lcm_examples() {
        assert_eq!(lcm_grid(&[1, 2, 5, 10], 5000).unwrap(), 10);
        assert_eq!(lcm_grid(&[7, 11, 13], 500).unwrap(), 500);
        assert_eq!(lcm_grid(&[4], 5000).unwrap(), 4);
        assert_eq!(lcm_grid(&[7, 11, 13], 1001).unwrap(), 1001);
        assert_eq!(lcm_grid(&[6, 4], 5000).unwrap(), 12);
        assert!(lcm_grid(&[], 10).is_err());
        assert!(lcm_grid(&[0, 3], 10).is_err());
        // cap below the largest size still returns the cap
        assert_eq!(lcm_grid(&[20], 10).unwrap(), 10);
        // would overflow u64 without the early exit
        let primes = [
            1_000_003usize,
            1_000_033,
            1_000_037,
            1_000_039,
            1_000_081,
            1_000_099,
        ];
        assert_eq!(lcm_grid(&primes, usize::MAX / 2).unwrap(), usize::MAX / 2);
    }

    #[test]
    fn weighted_mean_examples() {
        let d0 = grid(&[0.0, 0.0]);
        let d2 = grid(&[2.0, 2.0]);
        assert_eq!(
            weighted_quantile_mean(&[d0.clone(), d2], &[1.0, 1.0]).unwrap(),
            vec![1.0, 1.0]
        );
        let g = grid(&[1.0, 4.0, 9.0]);
        assert_eq!(
            weighted_quantile_mean(std::slice::from_ref(&g), &[1.0]).unwrap(),
            g.values()
        );
        assert!(weighted_quantile_mean(std::slice::from_ref(&d0), &[2.0]).is_err());
        assert!(weighted_quantile_mean(&[d0.clone(), g], &[1.0, 1.0]).is_err());
        assert!(weighted_quantile_mean(&[d0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn negative_weights_can_break_monotonicity() {
        // Units with sizes 1, 2, 5, 10 and weights (11, 7, 3, -1) / 5.
        let ms = [
            measure(&[0.3]),
            measure(&[-1.0, 2.0]),
            measure(&[-4.0, -1.0, 0.5, 2.5, 6.0]),
            measure(&[-9.0, -5.0, -3.0, -1.0, 0.0, 1.0, 2.0, 3.0, 5.0, 100.0]),
        ];
        let grids: Vec<_> = ms
            .iter()
            .map(|m| empirical_quantile(m, 10).unwrap())
            .collect();
        let b = weighted_quantile_mean(&grids, &[2.2, 1.4, 0.6, -0.2]).unwrap();
        assert!(b.windows(2).any(|w| w[0] > w[1]));
        let q = project_to_wasserstein(&b, None).unwrap();
        assert!(q.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn projection_examples() {
        let d = DomainInterval::new(0.0, 10.0).unwrap();
        assert_eq!(
            project_to_wasserstein(&[1.0, 2.0, 3.0], Some(&d))
                .unwrap()
                .values(),
            &[1.0, 2.0, 3.0]
        );
        let p = project_to_wasserstein(&[3.0, 1.0, 2.0], Some(&d)).unwrap();
        assert_eq!(p.values(), &[2.0, 2.0, 2.0]);
        assert_eq!(
            oracle::brute_force_projection(&[3.0, 1.0, 2.0], Some((0.0, 10.0))),
            vec![2.0; 3]
        );
        let d = DomainInterval::new(0.0, 4.0).unwrap();
        let p = project_to_wasserstein(&[-1.0, 5.0], Some(&d)).unwrap();
        assert_eq!(p.values(), &[0.0, 4.0]);
        assert_eq!(
            oracle::brute_force_projection(&[-1.0, 5.0], Some((0.0, 4.0))),
            vec![0.0, 4.0]
        );
        assert!(project_to_wasserstein(&[], None).is_err());
        assert!(project_to_wasserstein(&[f64::NAN], None).is_err());
    }

    #[test]
    fn barycenter_examples() {
        let a = measure(&[1.0, 3.0]);
        assert_eq!(
            barycenter(std::slice::from_ref(&a), 5000).unwrap(),
            empirical_quantile(&a, 2).unwrap()
        );
        let b = barycenter(&[measure(&[0.0]), measure(&[2.0])], 5000).unwrap();
        assert_eq!(b.values(), &[1.0]);
        let b = barycenter(&[a, measure(&[2.0, 4.0, 6.0])], 5000).unwrap();
        let stretched = [
            [1.0, 1.0, 1.0, 3.0, 3.0, 3.0],
            [2.0, 2.0, 4.0, 4.0, 6.0, 6.0],
        ];
        let mean: Vec<f64> = (0..6)
            .map(|j| 0.5 * (stretched[0][j] + stretched[1][j]))
            .collect();
        assert_eq!(b.values(), &mean[..]);
        assert_eq!(b.values(), &[1.5, 1.5, 2.5, 3.5, 4.5, 4.5]);
        assert!(barycenter(&[], 10).is_err());
    }

    #[test]
    fn density_of_normal_quantiles() {
        let m = 1000;
        let q = grid(&stats::standard_normal_grid(m));
        let c = quantile_to_density(&q, 0.3, 401).unwrap();
        let peak = c.f.iter().cloned().fold(0.0, f64::max);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((peak - phi0).abs() < 0.05, "peak {peak}");
        assert!((c.integral() - 1.0).abs() < 1e-3);
        // pointwise agreement with the analytic density in the bulk
        for (x, f) in c.x.iter().zip(&c.f) {
            if x.abs() < 2.0 {
                let exact = phi0 * (-0.5 * x * x).exp();
                assert!((f - exact).abs() < 0.02, "x {x}: {f} vs {exact}");
            }
        }
    }

    #[test]
    fn density_of_uniform_quantiles() {
        let m = 1000;
        let q = grid(
            &(0..m)
                .map(|i| (i as f64 + 0.5) / m as f64)
                .collect::<Vec<_>>(),
        );
        let c = quantile_to_density(&q, 0.05, 201).unwrap();
        for (x, f) in c.x.iter().zip(&c.f) {
            if *x > 0.1 && *x < 0.9 {
                assert!((f - 1.0).abs() < 0.1, "x {x}: {f}");
            }
        }
        assert!((c.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn density_of_point_mass_is_degenerate() {
        let c = quantile_to_density(&grid(&[2.0; 10]), 0.5, 100).unwrap();
        assert!(c.degenerate);
        assert!((c.integral() - 1.0).abs() < 1e-9);
        assert!(quantile_to_density(&grid(&[0.0, 1.0]), 0.0, 10).is_err());
        assert!(quantile_to_density(&grid(&[0.0, 1.0]), 1.0, 1).is_err());
    }

    #[test]
    fn density_default_bandwidth_is_positive() {
        let q = grid(&[0.0, 1.0, 2.0, 3.0]);
        let h = default_density_bandwidth(&q);
        assert!(h > 0.0);
        let c = quantile_to_density(&q, h, 50).unwrap();
        assert!((c.integral() - 1.0).abs() < 1e-3);
    }

    fn sorted_vec(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, len).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in sorted_vec(1..=20), b in sorted_vec(1..=20), c in sorted_vec(1..=20),
        ) {
            let ms = [measure(&a), measure(&b), measure(&c)];
            let grid = lcm_grid(&[a.len(), b.len(), c.len()], 5000).unwrap();
            let g: Vec<_> = ms.iter().map(|m| empirical_quantile(m, grid).unwrap()).collect();
            let dab = wasserstein_distance(&g[0], &g[1]).unwrap();
            prop_assert_eq!(dab, wasserstein_distance(&g[1], &g[0]).unwrap());
            prop_assert_eq!(wasserstein_distance(&g[0], &g[0]).unwrap(), 0.0);
            let dbc = wasserstein_distance(&g[1], &g[2]).unwrap();
            let dac = wasserstein_distance(&g[0], &g[2]).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-12);
        }

        #[test]
        fn refinement_repeats_cells(a in sorted_vec(1..=12), k in 1usize..6) {
            let m = measure(&a);
            let base = empirical_quantile(&m, m.size()).unwrap();
            let fine = empirical_quantile(&m, k * m.size()).unwrap();
            let repeated = QuantileGrid::new(
                base.values().iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect(),
            ).unwrap();
            prop_assert_eq!(wasserstein_distance(&fine, &repeated).unwrap(), 0.0);
            prop_assert_eq!(base.values(), m.values());
        }

        #[test]
        fn distance_matches_exact_integral(a in sorted_vec(1..=9), b in sorted_vec(1..=9)) {
            let grid = lcm_grid(&[a.len(), b.len()], 5000).unwrap();
            let ga = empirical_quantile(&measure(&a), grid).unwrap();
            let gb = empirical_quantile(&measure(&b), grid).unwrap();
            let d2 = squared_distance(&ga, &gb).unwrap();
            let exact = oracle::exact_step_distance_sq(&a, &b);
            prop_assert!((d2 - exact).abs() <= 1e-9 * (1.0 + exact));
        }

        #[test]
        fn projection_is_idempotent_and_optimal(
            v in prop::collection::vec(-5.0f64..5.0, 1..=8),
            bounds in prop::option::of((-5.0f64..0.0, 0.0f64..5.0)),
        ) {
            let dom = bounds.map(|(lo, hi)| DomainInterval::new(lo, hi + 1e-3).unwrap());
            let p = project_to_wasserstein(&v, dom.as_ref()).unwrap();
            let pp = project_to_wasserstein(p.values(), dom.as_ref()).unwrap();
            prop_assert_eq!(&p, &pp);
            let want = oracle::brute_force_projection(&v, dom.map(|d| (d.lower(), d.upper())));
            for (x, y) in p.values().iter().zip(&want) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }

        #[test]
        fn barycenter_of_identical_measures(a in sorted_vec(1..=15), copies in 1usize..5) {
            let m = measure(&a);
            let ms = vec![m.clone(); copies];
            let b = barycenter(&ms, 5000).unwrap();
            prop_assert_eq!(b, empirical_quantile(&m, m.size()).unwrap());
        }
    }
}
