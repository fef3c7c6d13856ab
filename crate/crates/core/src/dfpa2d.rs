//! Nested two-dimensional partitioning of an `m x n` matrix over a `p x q`
//! processor grid.
//!
//! The outer loop owns the column widths. For fixed widths, each column runs
//! an independent [`dfpa`](crate::dfpa) over its row heights, measuring the
//! 1D projection of every processor's speed at that column width. When the
//! times of all `p * q` cells agree within `epsilon` the run stops; otherwise
//! each column's new width is made proportional to the summed cell speeds of
//! the column.
//!
//! Optional economies: measurements are cached per `(processor, rows, width)`
//! and reseed the column models whenever a width repeats; widths whose change
//! would be small are frozen; the inner loop starts from the previous row
//! heights instead of an even split.

use std::collections::HashMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dfpa::{dfpa_from, BalanceTrace, DfpaConfig, Executor, Status, Timing};
use crate::error::{Error, Result};
use crate::model::PiecewiseLinearModel;
use crate::partition::{apportion, check_grid, even_split, imbalance, Distribution, GridPartition};

/// One kernel run: processor `(row, col)` updates a `rows x width` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellTask {
    pub row: usize,
    pub col: usize,
    pub rows: u64,
    pub width: u64,
}

impl CellTask {
    pub fn units(&self) -> u64 {
        self.rows * self.width
    }
}

/// Runs kernels on grid processors. The tasks of one call are logically
/// parallel and all timings are returned together, in task order.
pub trait GridExecutor {
    /// Grid shape `(p, q)`: `p` processors per column, `q` columns.
    fn shape(&self) -> (usize, usize);

    fn run_cells(&mut self, tasks: &[CellTask], round: u32) -> Result<Vec<Timing>>;

    fn round_latency(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizations {
    /// Reuse earlier kernel results at the same `(rows, width)` and reseed
    /// column models from every earlier benchmark at the same width.
    pub reuse_measurements: bool,
    /// Keep a column's width when the proposed change is within
    /// `max(1, width_freeze_rel * width)`; `0` disables freezing.
    pub width_freeze_rel: f64,
    /// Start each inner run from the previous row heights.
    pub warm_start: bool,
}

impl Optimizations {
    pub fn enabled() -> Self {
        Self { reuse_measurements: true, width_freeze_rel: 0.05, warm_start: true }
    }

    pub fn disabled() -> Self {
        Self { reuse_measurements: false, width_freeze_rel: 0.0, warm_start: false }
    }
}

impl Default for Optimizations {
    fn default() -> Self {
        Self::enabled()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub epsilon: f64,
    pub max_outer_rounds: u32,
    pub max_inner_rounds: u32,
    pub optimizations: Optimizations,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { epsilon: 0.025, max_outer_rounds: 30, max_inner_rounds: 50, optimizations: Optimizations::enabled() }
    }
}

impl GridConfig {
    fn inner(&self) -> DfpaConfig {
        DfpaConfig { epsilon: self.epsilon, max_rounds: self.max_inner_rounds, ..DfpaConfig::default() }
    }
}

/// State and measurements at the end of one outer round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRound {
    pub outer_round: u32,
    pub widths: Vec<u64>,
    /// Inner traces per column, in row units.
    pub columns: Vec<BalanceTrace>,
    /// `heights[j][i]`
    pub heights: Vec<Vec<u64>>,
    /// `times[j][i]`
    pub times: Vec<Vec<f64>>,
    /// Cell speeds in cells per second, `speeds[j][i]`.
    pub speeds: Vec<Vec<f64>>,
    pub censored: Vec<Vec<bool>>,
    pub global_imbalance: f64,
    /// Accuracy the columns were balanced to in this round.
    pub inner_epsilon: f64,
    pub kernel_invocations: u64,
    /// Virtual seconds of this round; columns run in parallel.
    pub seconds: f64,
}

impl OuterRound {
    fn partition(&self, m: u64, n: u64) -> GridPartition {
        GridPartition {
            m,
            n,
            widths: self.widths.clone(),
            heights: self.heights.clone(),
            times: Some(self.times.clone()),
            speeds: Some(self.speeds.clone()),
        }
    }

    fn is_censored(&self) -> bool {
        self.censored.iter().flatten().any(|c| *c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrace {
    pub m: u64,
    pub n: u64,
    pub p: usize,
    pub q: usize,
    pub epsilon: f64,
    pub outer_rounds: Vec<OuterRound>,
    pub status: Status,
    pub kernel_invocation_count: u64,
    /// Inner rounds summed over all columns and outer rounds.
    pub inner_iterations: u64,
    pub final_partition: GridPartition,
}

impl GridTrace {
    pub fn outer_iterations(&self) -> usize {
        self.outer_rounds.len()
    }

    pub fn final_global_imbalance(&self) -> Option<f64> {
        let times = self.final_partition.times.as_ref()?;
        imbalance(&times.concat()).ok()
    }

    pub fn virtual_seconds(&self) -> f64 {
        self.outer_rounds.iter().map(|r| r.seconds).sum()
    }
}

/// Column widths proportional to the column sums of measured cell speeds.
/// `speeds[i][j]` is the speed of grid processor `(i, j)`.
pub fn column_rebalance(speeds: &[Vec<f64>], n: u64) -> Result<Vec<u64>> {
    let q = speeds.first().map_or(0, Vec::len);
    if q == 0 || speeds.iter().any(|row| row.len() != q) {
        return Err(Error::InvalidMeasurement("empty or ragged speed matrix".into()));
    }
    if let Some(s) = speeds.iter().flatten().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidMeasurement(format!("cell speed {s} is not positive")));
    }
    if n < q as u64 {
        return Err(Error::GridInfeasible(format!("{n} columns of units for {q} grid columns")));
    }
    let sums: Vec<f64> = (0..q).map(|j| speeds.iter().map(|row| row[j]).sum()).collect();
    Ok(apportion(&sums, n, 1)?.into_vec())
}

/// Best unvisited width vector one unit away from `widths`, judged by the
/// global imbalance predicted from `times[j][i]` with each cell's time scaled
/// linearly with its column's width.
pub fn nudge_widths(times: &[Vec<f64>], widths: &[u64], visited: impl Fn(&[u64]) -> bool) -> Option<(Vec<u64>, f64)> {
    let q = widths.len();
    let mut best: Option<(Vec<u64>, f64)> = None;
    for from in 0..q {
        for to in 0..q {
            if from == to || widths[from] <= 1 {
                continue;
            }
            let mut w = widths.to_vec();
            w[from] -= 1;
            w[to] += 1;
            if visited(&w) {
                continue;
            }
            let predicted: Vec<f64> = times
                .iter()
                .zip(widths.iter().zip(&w))
                .flat_map(|(col, (&old, &new))| col.iter().map(move |t| t * new as f64 / old as f64))
                .collect();
            let Ok(imb) = imbalance(&predicted) else { continue };
            if best.as_ref().is_none_or(|(_, b)| imb < *b) {
                best = Some((w, imb));
            }
        }
    }
    best
}

/// [`column_rebalance`] with small changes suppressed.
///
/// Columns whose proposed change is within `max(1, freeze_rel * old)` keep
/// their old width and the remaining width is reapportioned over the other
/// columns. If freezing would leave every width unchanged while the proposal
/// differs, the proposal is used as is, so the outer loop cannot stall.
pub fn rebalance_with_freeze(speeds: &[Vec<f64>], old: &[u64], n: u64, freeze_rel: f64) -> Result<Vec<u64>> {
    let proposed = column_rebalance(speeds, n)?;
    if freeze_rel <= 0.0 || old.len() != proposed.len() {
        return Ok(proposed);
    }
    let frozen: Vec<bool> = proposed
        .iter()
        .zip(old)
        .map(|(&new, &old)| (new.abs_diff(old) as f64) <= (freeze_rel * old as f64).max(1.0))
        .collect();
    let free: Vec<usize> = (0..old.len()).filter(|&j| !frozen[j]).collect();
    if free.is_empty() {
        return Ok(proposed);
    }
    let kept: u64 = (0..old.len()).filter(|&j| frozen[j]).map(|j| old[j]).sum();
    let remaining = n.saturating_sub(kept);
    if remaining < free.len() as u64 {
        return Ok(proposed);
    }
    let shares: Vec<f64> = free.iter().map(|&j| proposed[j] as f64).collect();
    let parts = apportion(&shares, remaining, 1)?;
    let mut widths = old.to_vec();
    for (&j, &w) in free.iter().zip(parts.iter()) {
        widths[j] = w;
    }
    if widths == old && proposed != old {
        return Ok(proposed);
    }
    Ok(widths)
}

type CellKey = (usize, usize, u64, u64);

/// Presents one column at a fixed width as a 1D executor over row heights.
struct ColumnRunner<'a, G: ?Sized> {
    grid: &'a mut G,
    p: usize,
    col: usize,
    width: u64,
    cache: &'a mut HashMap<CellKey, Timing>,
    reuse: bool,
    round_base: u32,
    invocations: u64,
    seconds: f64,
}

impl<G: GridExecutor + ?Sized> Executor for ColumnRunner<'_, G> {
    fn processors(&self) -> usize {
        self.p
    }

    fn run_round(&mut self, d: &Distribution, round: u32) -> Result<Vec<Timing>> {
        let mut out: Vec<Option<Timing>> = vec![None; self.p];
        let mut tasks = Vec::new();
        for (i, &rows) in d.iter().enumerate() {
            let key = (i, self.col, rows, self.width);
            match self.cache.get(&key) {
                Some(t) if self.reuse => out[i] = Some(*t),
                _ => tasks.push(CellTask { row: i, col: self.col, rows, width: self.width }),
            }
        }
        if !tasks.is_empty() {
            let timings = self.grid.run_cells(&tasks, self.round_base + round)?;
            if timings.len() != tasks.len() {
                return Err(Error::Executor {
                    round,
                    message: format!("expected {} cell times, got {}", tasks.len(), timings.len()),
                });
            }
            self.invocations += tasks.len() as u64;
            self.seconds += timings.iter().map(|t| t.seconds).fold(0.0, f64::max) + self.grid.round_latency();
            for (task, timing) in tasks.iter().zip(timings) {
                self.cache.insert((task.row, task.col, task.rows, task.width), timing);
                out[task.row] = Some(timing);
            }
        }
        Ok(out.into_iter().map(|t| t.expect("every processor measured")).collect())
    }
}

/// Smallest inner accuracy, as a fraction of the global one.
const MAX_INNER_TIGHTENING: f64 = 64.0;

/// Runs the nested 2D balancing loop.
///
/// Columns are balanced at the global accuracy. When an unbalanced outer
/// round proposes widths already tried, the outer loop would cycle. It then
/// moves to the unvisited neighbour of the current widths with the lowest
/// predicted imbalance if that beats the measured one, and otherwise halves
/// the inner accuracy (down to `epsilon / 64`).
pub fn dfpa_2d<G: GridExecutor + ?Sized>(grid: &mut G, m: u64, n: u64, config: &GridConfig) -> Result<GridTrace> {
    let (p, q) = grid.shape();
    check_grid(m, n, p, q)?;
    let mut inner = config.inner();
    inner.validate()?;
    if config.max_outer_rounds == 0 {
        return Err(Error::InvalidArgument("max_outer_rounds must be at least 1".into()));
    }
    let opts = &config.optimizations;

    let even_rows = even_split(m, p);
    let mut widths = even_split(n, q);
    let mut heights = vec![even_rows.clone(); q];
    let mut cache: HashMap<CellKey, Timing> = HashMap::new();
    let mut seeds: HashMap<(usize, u64), Vec<PiecewiseLinearModel>> = HashMap::new();
    let mut outer_rounds: Vec<OuterRound> = Vec::new();
    let mut status = Status::MaxIterations;
    let mut invocations = 0u64;
    let mut inner_iterations = 0u64;

    for outer in 1..=config.max_outer_rounds {
        let mut columns = Vec::with_capacity(q);
        let mut round_invocations = 0u64;
        let mut round_seconds = 0.0f64;
        for j in 0..q {
            let start = if opts.warm_start && outer > 1 { heights[j].clone() } else { even_rows.clone() };
            let models = match seeds.get(&(j, widths[j])) {
                Some(models) if opts.reuse_measurements => models.clone(),
                _ => vec![PiecewiseLinearModel::new(); p],
            };
            let mut runner = ColumnRunner {
                grid: &mut *grid,
                p,
                col: j,
                width: widths[j],
                cache: &mut cache,
                reuse: opts.reuse_measurements,
                round_base: (outer - 1) * (config.max_inner_rounds + 1),
                invocations: 0,
                seconds: 0.0,
            };
            let (trace, models) = dfpa_from(&mut runner, Distribution::new(start), models, &inner)?;
            round_invocations += runner.invocations;
            round_seconds = round_seconds.max(runner.seconds);
            inner_iterations += trace.iterations() as u64;
            seeds.insert((j, widths[j]), models);
            heights[j] = trace.final_d.to_vec();
            columns.push(trace);
        }
        invocations += round_invocations;

        let times: Vec<Vec<f64>> = columns.iter().map(|c| c.final_times.clone()).collect();
        let censored: Vec<Vec<bool>> = columns
            .iter()
            .map(|c| {
                c.final_measurement()
                    .map(|r| if r.censored.is_empty() { vec![false; p] } else { r.censored.clone() })
                    .unwrap_or_else(|| vec![false; p])
            })
            .collect();
        let speeds: Vec<Vec<f64>> = (0..q)
            .map(|j| (0..p).map(|i| (heights[j][i] * widths[j]) as f64 / times[j][i]).collect())
            .collect();
        let global = imbalance(&times.concat())?;
        debug!("outer round {outer}: widths {widths:?}, global imbalance {global:.6}");

        let record = OuterRound {
            outer_round: outer,
            widths: widths.clone(),
            columns,
            heights: heights.clone(),
            times,
            speeds,
            censored,
            global_imbalance: global,
            inner_epsilon: inner.epsilon,
            kernel_invocations: round_invocations,
            seconds: round_seconds,
        };
        let balanced = global <= config.epsilon && !record.is_censored();
        let row_major: Vec<Vec<f64>> = (0..p).map(|i| (0..q).map(|j| record.speeds[j][i]).collect()).collect();
        outer_rounds.push(record);
        if balanced {
            status = Status::Converged;
            break;
        }
        if outer == config.max_outer_rounds {
            break;
        }
        let mut next = rebalance_with_freeze(&row_major, &widths, n, opts.width_freeze_rel)?;
        let visited = |w: &[u64]| outer_rounds.iter().any(|r| r.widths == w);
        if visited(&next) {
            let last = outer_rounds.last().expect("just pushed");
            match nudge_widths(&last.times, &widths, visited) {
                Some((nudged, predicted)) if predicted < global => {
                    debug!("widths revisited; nudging to {nudged:?}, predicted imbalance {predicted:.6}");
                    next = nudged;
                }
                _ => {
                    let tighter = (inner.epsilon / 2.0).max(config.epsilon / MAX_INNER_TIGHTENING);
                    if tighter < inner.epsilon {
                        debug!("widths revisited; inner accuracy {} -> {tighter}", inner.epsilon);
                        inner.epsilon = tighter;
                    }
                }
            }
        }
        widths = next;
    }

    let chosen = match status {
        Status::Converged => outer_rounds.len() - 1,
        Status::MaxIterations => outer_rounds
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1.is_censored(), a.1.global_imbalance)
                    .partial_cmp(&(b.1.is_censored(), b.1.global_imbalance))
                    .expect("finite imbalance")
                    .then(a.0.cmp(&b.0))
            })
            .map(|(k, _)| k)
            .expect("at least one outer round"),
    };
    let final_partition = outer_rounds[chosen].partition(m, n);
    Ok(GridTrace {
        m,
        n,
        p,
        q,
        epsilon: config.epsilon,
        outer_rounds,
        status,
        kernel_invocation_count: invocations,
        inner_iterations,
        final_partition,
    })
}
