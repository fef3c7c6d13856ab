//! Static partitioning for known speed models.
//!
//! The central routine is [`optimal_partition_continuous`]: given one speed
//! function per processor it finds the common execution time `t` at which
//! the units each processor can finish sum to `n`. Geometrically, the points
//! `(x_i, s_i(x_i))` then lie on one line through the origin with slope
//! `1 / t`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpeedFunction;

/// Every processor receives at least this many units.
pub const DEFAULT_MIN_UNITS: u64 = 1;
/// Relative bisection tolerance on the common time.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;

/// Integer allocation of computation units to processors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(Vec<u64>);

impl Distribution {
    pub fn new(d: Vec<u64>) -> Self {
        Self(d)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.0
    }
}

impl Deref for Distribution {
    type Target = [u64];
    fn deref(&self) -> &[u64] {
        &self.0
    }
}

impl From<Vec<u64>> for Distribution {
    fn from(d: Vec<u64>) -> Self {
        Self(d)
    }
}

/// Real-valued equal-time allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAllocation {
    pub x: Vec<f64>,
    pub t_common: f64,
}

fn demand<M: SpeedFunction>(models: &[M], t: f64, out: &mut [f64]) -> Result<f64> {
    let mut total = 0.0;
    for (slot, model) in out.iter_mut().zip(models) {
        *slot = model.max_units_within(t)?;
        total += *slot;
    }
    Ok(total)
}

/// Equal-time partition of `n` units over the given speed functions.
///
/// Bisects on the common time `t` over the non-decreasing total demand
/// `X(t) = sum_i sup { x : x / s_i(x) <= t }` until the bracket is within
/// `tol` relative. If `X` jumps across `n` (non-monotone time curves), the
/// allocation is blended linearly between the two bracket ends so that it
/// still sums to `n`.
pub fn optimal_partition_continuous<M: SpeedFunction>(
    models: &[M],
    n: u64,
    tol: f64,
) -> Result<ContinuousAllocation> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no processors".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("nothing to partition".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let nf = n as f64;

    let mut hi = f64::INFINITY;
    for (i, model) in models.iter().enumerate() {
        let s = model.eval_speed(nf)?;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidModel(format!("processor {i} has speed {s} at x = {n}")));
        }
        // processor i alone can finish all n units within n / s_i(n)
        hi = hi.min(nf / s);
    }

    let p = models.len();
    let mut x_hi = vec![0.0; p];
    let mut x_lo = vec![0.0; p];
    let mut bracketed = false;
    for _ in 0..MAX_BISECTION_STEPS {
        if demand(models, hi, &mut x_hi)? >= nf {
            bracketed = true;
            break;
        }
        hi *= 2.0;
    }
    if !bracketed {
        return Err(Error::SolverDivergence(format!("no upper bracket for n = {n}")));
    }

    let mut lo = 0.0;
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if demand(models, mid, &mut x_lo)? >= nf {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let total_hi = demand(models, hi, &mut x_hi)?;
    let total_lo = demand(models, lo, &mut x_lo)?;
    let w = if total_hi > total_lo { ((nf - total_lo) / (total_hi - total_lo)).clamp(0.0, 1.0) } else { 1.0 };
    let x: Vec<f64> = x_lo.iter().zip(&x_hi).map(|(l, h)| l + w * (h - l)).collect();
    Ok(ContinuousAllocation { x, t_common: lo + w * (hi - lo) })
}

/// Largest-remainder rounding of a real allocation to integers summing to
/// `n`, followed by minimum enforcement.
///
/// Equal remainders go to the lower processor index. A processor left below
/// `min_units` takes units one at a time from the current largest allocation.
pub fn apportion(x: &[f64], n: u64, min_units: u64) -> Result<Distribution> {
    let p = x.len();
    if p == 0 {
        return Err(Error::InvalidArgument("no processors".into()));
    }
    if n < p as u64 * min_units {
        return Err(Error::InfeasibleMinimums { n, p, min_units });
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!("allocation {x:?} has negative or non-finite shares")));
    }
    let sum: f64 = x.iter().sum();
    let scaled: Vec<f64> = if sum > 0.0 {
        x.iter().map(|v| v * n as f64 / sum).collect()
    } else {
        vec![n as f64 / p as f64; p]
    };

    let mut d: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let rem: Vec<f64> = scaled.iter().zip(&d).map(|(v, f)| v - *f as f64).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));

    let assigned: u64 = d.iter().sum();
    if assigned < n {
        for k in 0..(n - assigned) as usize {
            d[order[k % p]] += 1;
        }
    } else if assigned > n {
        let mut excess = assigned - n;
        for &i in order.iter().rev().cycle() {
            if excess == 0 {
                break;
            }
            if d[i] > 0 {
                d[i] -= 1;
                excess -= 1;
            }
        }
    }

    for i in 0..p {
        while d[i] < min_units {
            let donor = (0..p)
                .filter(|&j| j != i)
                .max_by(|&a, &b| d[a].cmp(&d[b]).then(b.cmp(&a)))
                .filter(|&j| d[j] > min_units)
                .ok_or(Error::InfeasibleMinimums { n, p, min_units })?;
            d[donor] -= 1;
            d[i] += 1;
        }
    }
    Ok(Distribution(d))
}

/// Rounds a continuous allocation with [`apportion`].
pub fn round_distribution(alloc: &ContinuousAllocation, n: u64, min_units: u64) -> Result<Distribution> {
    apportion(&alloc.x, n, min_units)
}

/// Relative imbalance `max_{i,j} |t_i - t_j| / t_i`, which equals
/// `(t_max - t_min) / t_min`.
pub fn imbalance(times: &[f64]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &t in times {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidTime(t));
        }
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if times.len() <= 1 {
        return Ok(0.0);
    }
    Ok((hi - lo) / lo)
}

/// Ratio of the fastest to the slowest speed.
pub fn heterogeneity(speeds: &[f64]) -> Result<f64> {
    if speeds.is_empty() {
        return Err(Error::InvalidArgument("no speeds".into()));
    }
    if let Some(s) = speeds.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidModel(format!("speed {s} is not positive")));
    }
    let hi = speeds.iter().copied().fold(0.0, f64::max);
    let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(hi / lo)
}

/// Distribution proportional to constant speeds.
pub fn cpm_partition(speeds: &[f64], n: u64) -> Result<Distribution> {
    if let Some(s) = speeds.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidModel(format!("constant speed {s} is not positive")));
    }
    apportion(speeds, n, DEFAULT_MIN_UNITS)
}

/// Two-dimensional partition of an `m x n` matrix over a `p x q` grid.
///
/// Column `j` has width `widths[j]`; processor `i` of that column owns
/// `heights[j][i]` rows of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    pub m: u64,
    pub n: u64,
    pub widths: Vec<u64>,
    pub heights: Vec<Vec<u64>>,
    /// Observed cell times, `times[j][i]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<Vec<f64>>>,
    /// Observed cell speeds in cells per second, `speeds[j][i]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<Vec<f64>>>,
}

impl GridPartition {
    /// Even grid: widths `n / q`, heights `m / p`, remainders to the lowest indices.
    pub fn even(m: u64, n: u64, p: usize, q: usize) -> Result<Self> {
        check_grid(m, n, p, q)?;
        let col = even_split(m, p);
        Ok(Self { m, n, widths: even_split(n, q), heights: vec![col; q], times: None, speeds: None })
    }

    pub fn p(&self) -> usize {
        self.heights.first().map_or(0, Vec::len)
    }

    pub fn q(&self) -> usize {
        self.widths.len()
    }

    /// Cells (units) owned by processor `i` of column `j`.
    pub fn area(&self, i: usize, j: usize) -> u64 {
        self.heights[j][i] * self.widths[j]
    }
}

pub(crate) fn check_grid(m: u64, n: u64, p: usize, q: usize) -> Result<()> {
    if p == 0 || q == 0 || m < p as u64 || n < q as u64 {
        return Err(Error::GridInfeasible(format!("{m} x {n} matrix on a {p} x {q} grid")));
    }
    Ok(())
}

pub(crate) fn even_split(n: u64, p: usize) -> Vec<u64> {
    let base = n / p as u64;
    let extra = (n % p as u64) as usize;
    (0..p).map(|i| base + u64::from(i < extra)).collect()
}

/// Two-step constant-model distribution: column widths proportional to the
/// column sums of `rel_speeds`, then rows of each column proportional to that
/// column's speeds. `rel_speeds[i][j]` is the speed of grid processor `(i, j)`.
pub fn cpm_partition_2d(rel_speeds: &[Vec<f64>], m: u64, n: u64) -> Result<GridPartition> {
    let p = rel_speeds.len();
    let q = rel_speeds.first().map_or(0, Vec::len);
    if rel_speeds.iter().any(|row| row.len() != q) {
        return Err(Error::GridInfeasible("ragged speed matrix".into()));
    }
    check_grid(m, n, p, q)?;
    let column = |j: usize| rel_speeds.iter().map(|row| row[j]).collect::<Vec<f64>>();
    let sums: Vec<f64> = (0..q).map(|j| column(j).iter().sum()).collect();
    let widths = cpm_partition(&sums, n)?.into_vec();
    let heights = (0..q)
        .map(|j| cpm_partition(&column(j), m).map(Distribution::into_vec))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridPartition { m, n, widths, heights, times: None, speeds: None })
}
