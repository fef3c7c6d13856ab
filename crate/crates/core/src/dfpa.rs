//! Iterative functional partitioning.
//!
//! The coordinator runs the current distribution on all processors, checks
//! the relative imbalance of the observed times, and if it exceeds `epsilon`
//! adds each processor's observed `(d_i, d_i / t_i)` point to its partial
//! piecewise-linear speed model and repartitions against the refined models.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{speed_from_time, PiecewiseLinearModel, SpeedPoint};
use crate::partition::{
    even_split, imbalance, optimal_partition_continuous, round_distribution, Distribution,
    DEFAULT_MIN_UNITS, DEFAULT_TOLERANCE,
};

/// One processor's observed execution time for a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    /// The run was stopped at a time cap; the true time is at least `seconds`.
    #[serde(default)]
    pub censored: bool,
}

impl Timing {
    pub fn new(seconds: f64) -> Self {
        Self { seconds, censored: false }
    }

    pub fn capped(seconds: f64) -> Self {
        Self { seconds, censored: true }
    }
}

impl From<f64> for Timing {
    fn from(seconds: f64) -> Self {
        Self::new(seconds)
    }
}

/// Runs one round of work on every processor.
///
/// Processor `i`'s time may depend only on `d[i]` (and its own noise); the
/// `p` runs are logically parallel and all results are returned together.
pub trait Executor {
    fn processors(&self) -> usize;

    fn run_round(&mut self, d: &Distribution, round: u32) -> Result<Vec<Timing>>;

    /// Fixed coordination cost charged per round, in seconds.
    fn round_latency(&self) -> f64 {
        0.0
    }
}

impl<E: Executor + ?Sized> Executor for &mut E {
    fn processors(&self) -> usize {
        (**self).processors()
    }
    fn run_round(&mut self, d: &Distribution, round: u32) -> Result<Vec<Timing>> {
        (**self).run_round(d, round)
    }
    fn round_latency(&self) -> f64 {
        (**self).round_latency()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfpaConfig {
    pub epsilon: f64,
    pub max_rounds: u32,
    pub min_units: u64,
    pub tolerance: f64,
}

impl Default for DfpaConfig {
    fn default() -> Self {
        Self { epsilon: 0.025, max_rounds: 50, min_units: DEFAULT_MIN_UNITS, tolerance: DEFAULT_TOLERANCE }
    }
}

impl DfpaConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
        }
    }
}

/// Everything observed in one execute-and-measure round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRound {
    pub round: u32,
    pub d: Distribution,
    pub times: Vec<f64>,
    pub speeds: Vec<f64>,
    pub imbalance: f64,
    /// Predicted common time of the partition that produced `d`; absent for
    /// the initial round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_common: Option<f64>,
    /// Per-processor censoring flags; empty when no timing was censored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub censored: Vec<bool>,
    #[serde(default)]
    pub latency: f64,
}

fn no_censored(c: &[bool]) -> bool {
    c.iter().all(|c| !c)
}

impl MeasurementRound {
    pub fn is_censored(&self) -> bool {
        !no_censored(&self.censored)
    }

    /// Barrier time of the round: the slowest processor plus latency.
    pub fn wall_seconds(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max) + self.latency
    }
}

/// Audit trail of one balancing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTrace {
    pub n: u64,
    pub epsilon: f64,
    pub rounds: Vec<MeasurementRound>,
    pub status: Status,
    /// Index into `rounds` of the reported round.
    #[serde(default)]
    pub final_round: Option<usize>,
    pub final_d: Distribution,
    pub final_times: Vec<f64>,
}

impl BalanceTrace {
    pub fn final_measurement(&self) -> Option<&MeasurementRound> {
        self.final_round.and_then(|i| self.rounds.get(i))
    }

    pub fn final_imbalance(&self) -> Option<f64> {
        self.final_measurement().map(|r| r.imbalance)
    }

    pub fn final_makespan(&self) -> f64 {
        self.final_times.iter().copied().fold(0.0, f64::max)
    }

    /// Number of execute-and-measure rounds, the initial one included.
    pub fn iterations(&self) -> usize {
        self.rounds.len()
    }

    /// Virtual time spent balancing: the sum of per-round barrier times.
    pub fn virtual_seconds(&self) -> f64 {
        self.rounds.iter().map(MeasurementRound::wall_seconds).sum()
    }

    /// Best imbalance observed up to and including each round.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.imbalance);
                Some(*best)
            })
            .collect()
    }
}

/// `n / p` units each; the first `n mod p` processors get one extra.
pub fn even_distribution(n: u64, p: usize) -> Result<Distribution> {
    if p == 0 || n < p as u64 {
        return Err(Error::TooFewUnits { n, p });
    }
    Ok(Distribution::new(even_split(n, p)))
}

/// Balances `n` units over the executor's processors starting from the even
/// distribution.
pub fn dfpa<E: Executor + ?Sized>(exec: &mut E, n: u64, config: &DfpaConfig) -> Result<BalanceTrace> {
    let p = exec.processors();
    let initial = even_distribution(n, p)?;
    let models = vec![PiecewiseLinearModel::new(); p];
    dfpa_from(exec, initial, models, config).map(|(trace, _)| trace)
}

/// Balancing loop with an explicit first distribution and pre-seeded models.
///
/// Returns the trace and the final speed-model estimates.
pub fn dfpa_from<E: Executor + ?Sized>(
    exec: &mut E,
    initial: Distribution,
    mut models: Vec<PiecewiseLinearModel>,
    config: &DfpaConfig,
) -> Result<(BalanceTrace, Vec<PiecewiseLinearModel>)> {
    config.validate()?;
    let p = exec.processors();
    let n = initial.total();
    if p == 0 || n < p as u64 {
        return Err(Error::TooFewUnits { n, p });
    }
    if initial.len() != p || models.len() != p {
        return Err(Error::InvalidArgument(format!(
            "{} allocations and {} models for {p} processors",
            initial.len(),
            models.len()
        )));
    }

    let mut rounds: Vec<MeasurementRound> = Vec::new();
    let mut d = initial;
    let mut t_common = None;
    let mut status = Status::MaxIterations;

    for round in 1..=config.max_rounds {
        let timings = exec.run_round(&d, round).map_err(|e| match e {
            e @ Error::Executor { .. } => e,
            e => Error::Executor { round, message: e.to_string() },
        })?;
        if timings.len() != p {
            return Err(Error::Executor {
                round,
                message: format!("expected {p} times, got {}", timings.len()),
            });
        }
        let times: Vec<f64> = timings.iter().map(|t| t.seconds).collect();
        let mut censored: Vec<bool> = timings.iter().map(|t| t.censored).collect();
        if no_censored(&censored) {
            censored.clear();
        }
        let speeds = d
            .iter()
            .zip(&times)
            .map(|(&units, &time)| speed_from_time(units, time))
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| Error::Executor { round, message: e.to_string() })?;
        let imb = imbalance(&times).map_err(|e| Error::Executor { round, message: e.to_string() })?;
        debug!("round {round}: d = {:?}, imbalance = {imb:.6}", &*d);

        let record = MeasurementRound {
            round,
            d: d.clone(),
            times,
            speeds,
            imbalance: imb,
            t_common,
            censored,
            latency: exec.round_latency(),
        };
        let balanced = imb <= config.epsilon && !record.is_censored();
        for (i, model) in models.iter_mut().enumerate() {
            let point = if record.censored.get(i).copied().unwrap_or(false) {
                SpeedPoint::censored(record.d[i], record.speeds[i])
            } else {
                SpeedPoint::new(record.d[i], record.speeds[i])
            };
            model.insert_point(point)?;
        }
        rounds.push(record);
        if balanced {
            status = Status::Converged;
            break;
        }
        if round == config.max_rounds {
            break;
        }
        let alloc = optimal_partition_continuous(&models, n, config.tolerance)?;
        d = round_distribution(&alloc, n, config.min_units)?;
        t_common = Some(alloc.t_common);
    }

    let final_round = match status {
        Status::Converged => rounds.len() - 1,
        Status::MaxIterations => best_round(&rounds),
    };
    let chosen = &rounds[final_round];
    let trace = BalanceTrace {
        n,
        epsilon: config.epsilon,
        final_d: chosen.d.clone(),
        final_times: chosen.times.clone(),
        final_round: Some(final_round),
        rounds,
        status,
    };
    Ok((trace, models))
}

/// Lowest-imbalance round, preferring rounds without censored timings.
fn best_round(rounds: &[MeasurementRound]) -> usize {
    let pick = |allow_censored: bool| {
        rounds
            .iter()
            .enumerate()
            .filter(|(_, r)| allow_censored || !r.is_censored())
            .min_by(|a, b| a.1.imbalance.total_cmp(&b.1.imbalance).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    };
    pick(false).or_else(|| pick(true)).unwrap_or(0)
}
