//! Deterministic simulated clusters.
//!
//! [`SimCluster`] and [`SimGrid`] execute rounds against
//! [`SyntheticProfile`] ground truth and account for elapsed time on a
//! virtual clock with barrier semantics: a round costs its slowest
//! processor plus an optional fixed latency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dfpa::{BalanceTrace, Executor, Timing};
use crate::dfpa2d::{CellTask, GridExecutor};
use crate::error::{Error, Result};
use crate::model::{SpeedFunction, SyntheticProfile};
use crate::partition::{optimal_partition_continuous, round_distribution, Distribution, DEFAULT_TOLERANCE};

/// Largest number of compositions [`brute_force_optimum`] will enumerate.
pub const ORACLE_LIMIT: f64 = 1e7;

fn capped(time: f64, cap: Option<f64>) -> Timing {
    match cap {
        Some(cap) if time > cap => Timing::capped(cap),
        _ => Timing::new(time),
    }
}

/// One-dimensional simulated cluster; processor `i` follows `profiles[i]`.
#[derive(Debug, Clone)]
pub struct SimCluster {
    pub profiles: Vec<SyntheticProfile>,
    pub per_round_latency: f64,
    /// Benchmarks running longer than this are stopped and reported as censored.
    pub time_cap: Option<f64>,
    clock: f64,
    invocations: u64,
}

impl SimCluster {
    pub fn new(profiles: Vec<SyntheticProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::InvalidArgument("cluster has no processors".into()));
        }
        for p in &profiles {
            p.validate()?;
        }
        Ok(Self { profiles, per_round_latency: 0.0, time_cap: None, clock: 0.0, invocations: 0 })
    }

    pub fn with_latency(mut self, latency: f64) -> Self {
        self.per_round_latency = latency;
        self
    }

    pub fn with_time_cap(mut self, cap: Option<f64>) -> Self {
        self.time_cap = cap;
        self
    }

    /// Accumulated virtual seconds.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn invocations(&self) -> u64 {
        self.invocations
    }

    /// Noise-free execution times of a distribution.
    pub fn true_times(&self, d: &[u64]) -> Vec<f64> {
        d.iter().zip(&self.profiles).map(|(&x, p)| p.true_time(x as f64)).collect()
    }
}

impl Executor for SimCluster {
    fn processors(&self) -> usize {
        self.profiles.len()
    }

    fn run_round(&mut self, d: &Distribution, round: u32) -> Result<Vec<Timing>> {
        if d.len() != self.profiles.len() {
            return Err(Error::InvalidArgument(format!(
                "{} allocations for {} processors",
                d.len(),
                self.profiles.len()
            )));
        }
        let timings: Vec<Timing> = d
            .iter()
            .zip(&self.profiles)
            .map(|(&x, prof)| capped(prof.synth_time(x, u64::from(round)), self.time_cap))
            .collect();
        self.invocations += timings.len() as u64;
        self.clock += timings.iter().map(|t| t.seconds).fold(0.0, f64::max) + self.per_round_latency;
        Ok(timings)
    }

    fn round_latency(&self) -> f64 {
        self.per_round_latency
    }
}

/// Simulated `p x q` processor grid; `profiles[i][j]` gives the speed of
/// processor `(i, j)` as a function of its block area in cells.
#[derive(Debug, Clone)]
pub struct SimGrid {
    pub profiles: Vec<Vec<SyntheticProfile>>,
    pub per_round_latency: f64,
    pub time_cap: Option<f64>,
    invocations: u64,
}

impl SimGrid {
    pub fn new(profiles: Vec<Vec<SyntheticProfile>>) -> Result<Self> {
        let q = profiles.first().map_or(0, Vec::len);
        if q == 0 || profiles.iter().any(|row| row.len() != q) {
            return Err(Error::GridInfeasible("profile grid is empty or ragged".into()));
        }
        for p in profiles.iter().flatten() {
            p.validate()?;
        }
        Ok(Self { profiles, per_round_latency: 0.0, time_cap: None, invocations: 0 })
    }

    pub fn with_latency(mut self, latency: f64) -> Self {
        self.per_round_latency = latency;
        self
    }

    pub fn with_time_cap(mut self, cap: Option<f64>) -> Self {
        self.time_cap = cap;
        self
    }

    pub fn invocations(&self) -> u64 {
        self.invocations
    }
}

impl GridExecutor for SimGrid {
    fn shape(&self) -> (usize, usize) {
        (self.profiles.len(), self.profiles[0].len())
    }

    fn run_cells(&mut self, tasks: &[CellTask], round: u32) -> Result<Vec<Timing>> {
        let (p, q) = self.shape();
        let mut out = Vec::with_capacity(tasks.len());
        for task in tasks {
            if task.row >= p || task.col >= q {
                return Err(Error::InvalidArgument(format!("cell ({}, {}) outside grid", task.row, task.col)));
            }
            let prof = &self.profiles[task.row][task.col];
            out.push(capped(prof.synth_time(task.units(), u64::from(round)), self.time_cap));
        }
        self.invocations += tasks.len() as u64;
        Ok(out)
    }

    fn round_latency(&self) -> f64 {
        self.per_round_latency
    }
}

/// Execution time of `d` under noise-free speed functions: `max_i d_i / s_i(d_i)`.
pub fn makespan<M: SpeedFunction>(models: &[M], d: &[u64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (m, &x) in models.iter().zip(d) {
        worst = worst.max(x as f64 / m.eval_speed(x as f64)?);
    }
    Ok(worst)
}

fn compositions(n: u64, p: usize) -> f64 {
    // C(n - 1, p - 1)
    let (top, k) = (n as f64 - 1.0, p as f64 - 1.0);
    (0..p.saturating_sub(1)).fold(1.0, |acc, i| acc * (top - i as f64) / (k - i as f64))
}

/// Exhaustive minimum-makespan distribution with every `d_i >= 1`.
///
/// Ties are broken toward the lexicographically smallest distribution.
pub fn brute_force_optimum<M: SpeedFunction>(models: &[M], n: u64) -> Result<(Distribution, f64)> {
    let p = models.len();
    if p == 0 || n < p as u64 {
        return Err(Error::TooFewUnits { n, p });
    }
    let count = compositions(n, p);
    if count > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge(count));
    }
    let max_part = n - (p as u64 - 1);
    let table = models
        .iter()
        .map(|m| {
            (1..=max_part)
                .map(|k| m.eval_speed(k as f64).map(|s| k as f64 / s))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    struct Search<'a> {
        table: &'a [Vec<f64>],
        current: Vec<u64>,
        best: Vec<u64>,
        best_time: f64,
    }

    impl Search<'_> {
        fn go(&mut self, i: usize, left: u64, acc: f64) {
            let p = self.table.len();
            if acc >= self.best_time {
                return;
            }
            if i == p - 1 {
                let total = acc.max(self.table[i][left as usize - 1]);
                if total < self.best_time {
                    self.best_time = total;
                    self.current[i] = left;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            let rest = (p - 1 - i) as u64;
            for k in 1..=left - rest {
                self.current[i] = k;
                let t = acc.max(self.table[i][k as usize - 1]);
                self.go(i + 1, left - k, t);
            }
        }
    }

    let mut search = Search { table: &table, current: vec![0; p], best: vec![0; p], best_time: f64::INFINITY };
    search.go(0, n, 0.0);
    Ok((Distribution::new(search.best), search.best_time))
}

/// Share of total time spent balancing: `dfpa / (dfpa + app)`.
pub fn overhead_ratio(dfpa_seconds: f64, app_seconds: f64) -> Result<f64> {
    if !(app_seconds > 0.0) {
        return Err(Error::InvalidTime(app_seconds));
    }
    if !(dfpa_seconds >= 0.0) {
        return Err(Error::InvalidTime(dfpa_seconds));
    }
    Ok(dfpa_seconds / (dfpa_seconds + app_seconds))
}

/// [`overhead_ratio`] with the balancing time taken from a trace's virtual clock.
pub fn overhead_report(trace: &BalanceTrace, app_seconds: f64) -> Result<f64> {
    overhead_ratio(trace.virtual_seconds(), app_seconds)
}

/// Partition computed directly on ground-truth speed functions.
pub fn ffmpa_distribution<M: SpeedFunction>(models: &[M], n: u64) -> Result<Distribution> {
    let alloc = optimal_partition_continuous(models, n, DEFAULT_TOLERANCE)?;
    round_distribution(&alloc, n, 1)
}

/// A randomly generated 1D cluster and problem size.
#[derive(Debug, Clone)]
pub struct SuiteInstance {
    pub seed: u64,
    pub n: u64,
    pub profiles: Vec<SyntheticProfile>,
}

/// Largest relative change of a processor's time per unit near its optimal
/// share accepted by [`standard_instance`].
///
/// With steps of at most 0.625% (a flat profile at 160 units), rounding the
/// optimal shares keeps every time within 0.625% of the common time, so
/// integer distributions within 2.5% imbalance always exist.
pub const SUITE_MAX_UNIT_STEP: f64 = 1.0 / 160.0;

/// Largest relative time step over the units around `x`.
pub fn unit_step(profile: &SyntheticProfile, x: f64) -> f64 {
    let base = x.floor().max(1.0);
    (-1..=1)
        .map(|k| {
            let a = base + k as f64;
            if a < 1.0 {
                return 0.0;
            }
            profile.true_time(a + 1.0) / profile.true_time(a) - 1.0
        })
        .fold(0.0, f64::max)
}

/// Random noise-free cluster for convergence suites.
///
/// `p` in `[2, 16]`, `n` log-uniform in `[1e3, 1e6]`, peak speeds within a
/// factor of at most 10 of each other, small boosted cache regions, and
/// roughly a third of the processors paging near the even share. Instances
/// where one unit more or less near some processor's optimal share changes
/// its time by more than [`SUITE_MAX_UNIT_STEP`] are redrawn, because integer
/// rounding alone could then exceed 2.5% imbalance.
pub fn standard_instance(seed: u64) -> SuiteInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p: usize = rng.gen_range(2..=16);
        let n = 10f64.powf(rng.gen_range(3.0..=6.0)).round() as u64;
        let heterogeneity: f64 = rng.gen_range(1.0..=10.0);
        let base = 1e5 * rng.gen_range(1.0..10.0);
        let fast = rng.gen_range(0..p);
        let slow = (fast + rng.gen_range(1..p)) % p;
        let share = n as f64 / p as f64;
        let profiles: Vec<SyntheticProfile> = (0..p)
            .map(|i| {
                let factor = if i == fast {
                    heterogeneity
                } else if i == slow {
                    1.0
                } else {
                    rng.gen_range(1.0..=heterogeneity)
                };
                let cache = rng.gen_range(0.0..64.0);
                let mut prof = SyntheticProfile::flat(base * factor).with_cache(cache, rng.gen_range(1.0..2.0));
                if rng.gen_bool(0.35) {
                    let ram = (rng.gen_range(0.3..1.5) * share).max(2.0 * cache);
                    prof = prof.with_paging(ram, rng.gen_range(0.5..20.0) / ram);
                }
                prof
            })
            .collect();
        let alloc = optimal_partition_continuous(&profiles, n, DEFAULT_TOLERANCE).expect("valid profiles");
        if alloc.x.iter().zip(&profiles).all(|(&x, prof)| unit_step(prof, x) <= SUITE_MAX_UNIT_STEP) {
            return SuiteInstance { seed, n, profiles };
        }
    }
}
