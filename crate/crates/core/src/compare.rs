//! Side-by-side evaluation of three partitioning strategies on one simulated
//! platform:
//!
//! * `cpm`: constant speeds from a single benchmark at the even split;
//! * `ffmpa`: equal-time partition on the full ground-truth speed functions,
//!   with no benchmarking at all;
//! * `dfpa`: iterative partial estimation.
//!
//! Makespans are evaluated on the noise-free ground truth.

use serde::{Deserialize, Serialize};

use crate::dfpa::{dfpa, even_distribution, DfpaConfig, Executor};
use crate::dfpa2d::{column_rebalance, dfpa_2d, CellTask, GridConfig, GridExecutor};
use crate::error::{Error, Result};
use crate::model::{SpeedFunction, SyntheticProfile};
use crate::partition::{
    cpm_partition, cpm_partition_2d, imbalance, optimal_partition_continuous, round_distribution, GridPartition,
    DEFAULT_TOLERANCE,
};
use crate::sim::{ffmpa_distribution, makespan, SimCluster, SimGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub distribution: Vec<u64>,
    pub makespan: f64,
    /// Virtual seconds spent benchmarking to find the distribution.
    pub balancing_seconds: f64,
    pub overhead_ratio: f64,
    pub kernel_invocations: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: u64,
    pub strategies: Vec<StrategyReport>,
}

impl Comparison {
    pub fn get(&self, strategy: &str) -> Option<&StrategyReport> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }
}

fn require_noise_free<'a>(profiles: impl IntoIterator<Item = &'a SyntheticProfile>) -> Result<()> {
    if profiles.into_iter().any(|p| p.noise_rel != 0.0) {
        return Err(Error::InvalidArgument("comparison needs noise-free profiles".into()));
    }
    Ok(())
}

fn ratio(balancing: f64, app: f64) -> f64 {
    if balancing + app > 0.0 {
        balancing / (balancing + app)
    } else {
        0.0
    }
}

/// Compares the three strategies on a 1D cluster.
pub fn compare_1d(profiles: &[SyntheticProfile], n: u64, config: &DfpaConfig, latency: f64) -> Result<Comparison> {
    require_noise_free(profiles)?;
    let p = profiles.len();
    let mut strategies = Vec::with_capacity(3);

    let mut bench = SimCluster::new(profiles.to_vec())?.with_latency(latency);
    let even = even_distribution(n, p)?;
    let times = bench.run_round(&even, 1)?;
    let speeds: Vec<f64> = even.iter().zip(&times).map(|(&d, t)| d as f64 / t.seconds).collect();
    let d = cpm_partition(&speeds, n)?;
    let span = makespan(profiles, &d)?;
    strategies.push(StrategyReport {
        strategy: "cpm".into(),
        distribution: d.into_vec(),
        makespan: span,
        balancing_seconds: bench.clock(),
        overhead_ratio: ratio(bench.clock(), span),
        kernel_invocations: bench.invocations(),
        iterations: 1,
    });

    let d = ffmpa_distribution(profiles, n)?;
    let span = makespan(profiles, &d)?;
    strategies.push(StrategyReport {
        strategy: "ffmpa".into(),
        distribution: d.into_vec(),
        makespan: span,
        balancing_seconds: 0.0,
        overhead_ratio: 0.0,
        kernel_invocations: 0,
        iterations: 0,
    });

    let mut cluster = SimCluster::new(profiles.to_vec())?.with_latency(latency);
    let trace = dfpa(&mut cluster, n, config)?;
    let span = makespan(profiles, &trace.final_d)?;
    strategies.push(StrategyReport {
        strategy: "dfpa".into(),
        distribution: trace.final_d.to_vec(),
        makespan: span,
        balancing_seconds: trace.virtual_seconds(),
        overhead_ratio: ratio(trace.virtual_seconds(), span),
        kernel_invocations: cluster.invocations(),
        iterations: trace.iterations(),
    });

    Ok(Comparison { n, strategies })
}

/// Speed of a grid processor in rows per second when its column width is
/// fixed: the 1D projection of its area speed function.
#[derive(Debug, Clone, Copy)]
pub struct ColumnProjection<'a> {
    pub profile: &'a SyntheticProfile,
    pub width: u64,
}

impl SpeedFunction for ColumnProjection<'_> {
    fn eval_speed(&self, rows: f64) -> Result<f64> {
        let w = self.width as f64;
        Ok(self.profile.true_speed(rows * w) / w)
    }

    fn max_units_within(&self, t: f64) -> Result<f64> {
        Ok(self.profile.max_units_within(t)? / self.width as f64)
    }
}

/// Largest ground-truth cell time of a grid partition.
pub fn grid_makespan(profiles: &[Vec<SyntheticProfile>], part: &GridPartition) -> f64 {
    let mut worst = 0.0f64;
    for (j, col) in part.heights.iter().enumerate() {
        for (i, _) in col.iter().enumerate() {
            worst = worst.max(profiles[i][j].true_time(part.area(i, j) as f64));
        }
    }
    worst
}

fn ground_truth_times(profiles: &[Vec<SyntheticProfile>], part: &GridPartition) -> Vec<Vec<f64>> {
    (0..part.q())
        .map(|j| (0..part.p()).map(|i| profiles[i][j].true_time(part.area(i, j) as f64)).collect())
        .collect()
}

/// Nested 2D partitioning on full ground-truth models: optimal rows per
/// column, then widths proportional to column speed sums, until the widths
/// repeat or the cells balance.
pub fn ffmpa_2d(profiles: &[Vec<SyntheticProfile>], m: u64, n: u64, config: &GridConfig) -> Result<(GridPartition, usize)> {
    let p = profiles.len();
    let q = profiles.first().map_or(0, Vec::len);
    let mut part = GridPartition::even(m, n, p, q)?;
    let mut rounds = 0;
    for _ in 0..config.max_outer_rounds.max(1) {
        rounds += 1;
        #[allow(clippy::needless_range_loop)]
        for j in 0..q {
            let proj: Vec<ColumnProjection<'_>> =
                (0..p).map(|i| ColumnProjection { profile: &profiles[i][j], width: part.widths[j] }).collect();
            let alloc = optimal_partition_continuous(&proj, m, DEFAULT_TOLERANCE)?;
            part.heights[j] = round_distribution(&alloc, m, 1)?.into_vec();
        }
        let times = ground_truth_times(profiles, &part);
        let speeds: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..q).map(|j| part.area(i, j) as f64 / times[j][i]).collect())
            .collect();
        part.times = Some(times.clone());
        if imbalance(&times.concat())? <= config.epsilon {
            break;
        }
        let widths = column_rebalance(&speeds, n)?;
        if widths == part.widths {
            break;
        }
        part.widths = widths;
    }
    Ok((part, rounds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStrategyReport {
    pub strategy: String,
    pub widths: Vec<u64>,
    pub heights: Vec<Vec<u64>>,
    pub makespan: f64,
    pub balancing_seconds: f64,
    pub overhead_ratio: f64,
    pub kernel_invocations: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub m: u64,
    pub n: u64,
    pub strategies: Vec<GridStrategyReport>,
}

impl GridComparison {
    pub fn get(&self, strategy: &str) -> Option<&GridStrategyReport> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }
}

/// Compares the three strategies on a 2D grid.
pub fn compare_2d(
    profiles: &[Vec<SyntheticProfile>],
    m: u64,
    n: u64,
    config: &GridConfig,
    latency: f64,
) -> Result<GridComparison> {
    require_noise_free(profiles.iter().flatten())?;
    let mut grid = SimGrid::new(profiles.to_vec())?.with_latency(latency);
    let (p, q) = grid.shape();
    let even = GridPartition::even(m, n, p, q)?;
    let mut strategies = Vec::with_capacity(3);

    let tasks: Vec<CellTask> = (0..q)
        .flat_map(|j| {
            let even = &even;
            (0..p).map(move |i| CellTask { row: i, col: j, rows: even.heights[j][i], width: even.widths[j] })
        })
        .collect();
    let timings = grid.run_cells(&tasks, 1)?;
    let bench_seconds = timings.iter().map(|t| t.seconds).fold(0.0, f64::max) + latency;
    let mut speeds = vec![vec![0.0; q]; p];
    for (task, t) in tasks.iter().zip(&timings) {
        speeds[task.row][task.col] = task.units() as f64 / t.seconds;
    }
    let cpm = cpm_partition_2d(&speeds, m, n)?;
    let span = grid_makespan(profiles, &cpm);
    strategies.push(GridStrategyReport {
        strategy: "cpm".into(),
        widths: cpm.widths,
        heights: cpm.heights,
        makespan: span,
        balancing_seconds: bench_seconds,
        overhead_ratio: ratio(bench_seconds, span),
        kernel_invocations: tasks.len() as u64,
        iterations: 1,
    });

    let (ff, rounds) = ffmpa_2d(profiles, m, n, config)?;
    let span = grid_makespan(profiles, &ff);
    strategies.push(GridStrategyReport {
        strategy: "ffmpa".into(),
        widths: ff.widths,
        heights: ff.heights,
        makespan: span,
        balancing_seconds: 0.0,
        overhead_ratio: 0.0,
        kernel_invocations: 0,
        iterations: rounds,
    });

    let mut grid = SimGrid::new(profiles.to_vec())?.with_latency(latency);
    let trace = dfpa_2d(&mut grid, m, n, config)?;
    let span = grid_makespan(profiles, &trace.final_partition);
    strategies.push(GridStrategyReport {
        strategy: "dfpa".into(),
        widths: trace.final_partition.widths.clone(),
        heights: trace.final_partition.heights.clone(),
        makespan: span,
        balancing_seconds: trace.virtual_seconds(),
        overhead_ratio: ratio(trace.virtual_seconds(), span),
        kernel_invocations: trace.kernel_invocation_count,
        iterations: trace.outer_iterations(),
    });

    Ok(GridComparison { m, n, strategies })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speeds_agree_across_strategies() {
        let profiles: Vec<SyntheticProfile> = [3.0, 1.0, 2.0, 2.0].iter().map(|&s| SyntheticProfile::flat(s * 1e4)).collect();
        let cmp = compare_1d(&profiles, 8000, &DfpaConfig::default(), 0.0).unwrap();
        let d = &cmp.get("ffmpa").unwrap().distribution;
        assert_eq!(d, &vec![3000, 1000, 2000, 2000]);
        assert_eq!(&cmp.get("cpm").unwrap().distribution, d);
        assert_eq!(&cmp.get("dfpa").unwrap().distribution, d);
        assert_eq!(cmp.get("ffmpa").unwrap().kernel_invocations, 0);
        assert_eq!(cmp.get("cpm").unwrap().kernel_invocations, 4);
    }

    #[test]
    fn paging_penalizes_constant_model() {
        let mut profiles = vec![SyntheticProfile::flat(1e4); 4];
        profiles[2] = profiles[2].clone().with_paging(2_000.0, 0.01);
        profiles[3] = profiles[3].clone().with_paging(2_000.0, 0.01);
        let cmp = compare_1d(&profiles, 10_000, &DfpaConfig::default(), 0.0).unwrap();
        let cpm = cmp.get("cpm").unwrap();
        let dfpa = cmp.get("dfpa").unwrap();
        assert!(cpm.makespan > 1.2 * dfpa.makespan, "{} vs {}", cpm.makespan, dfpa.makespan);
        // paging nodes get the small slices
        assert!(cpm.distribution[2] < cpm.distribution[0]);
    }

    #[test]
    fn noisy_profiles_are_rejected() {
        let profiles = vec![SyntheticProfile::flat(1.0).with_noise(0.1, 1); 2];
        assert!(compare_1d(&profiles, 10, &DfpaConfig::default(), 0.0).is_err());
    }

    #[test]
    fn projection_inverts_row_time() {
        let prof = SyntheticProfile::flat(100.0).with_paging(1000.0, 0.01);
        let proj = ColumnProjection { profile: &prof, width: 10 };
        for rows in [5.0, 99.0, 150.0] {
            let t = rows / proj.eval_speed(rows).unwrap();
            assert!((proj.max_units_within(t).unwrap() - rows).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_grid_strategies() {
        let speeds = [[0.11, 0.25, 0.05], [0.17, 0.09, 0.08], [0.05, 0.17, 0.03]];
        let profiles: Vec<Vec<SyntheticProfile>> =
            speeds.iter().map(|r| r.iter().map(|&s| SyntheticProfile::flat(s * 1e4)).collect()).collect();
        let cmp = compare_2d(&profiles, 600, 600, &GridConfig::default(), 0.0).unwrap();
        let cpm = cmp.get("cpm").unwrap();
        let ff = cmp.get("ffmpa").unwrap();
        let dfpa = cmp.get("dfpa").unwrap();
        assert_eq!(cpm.widths, ff.widths);
        assert_eq!(cpm.heights, ff.heights);
        assert!((dfpa.makespan - ff.makespan).abs() / ff.makespan < 0.025);
    }
}
