//! CSV and JSON serialization of traces.
//!
//! Column orders:
//!
//! * trace: `round, processor, d, time_s, speed, imbalance, status`
//! * grid trace: `outer_round, column, processor, m_ij, n_j, time_s, speed, censored, global_imbalance`
//! * plot data: `processor, round, d, speed, t_common, slope`
//!
//! Floats are written with 9 significant digits so that diffs between runs
//! stay readable. The `status` column reads `unbalanced` on every round
//! except the last, which carries the run's final status.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dfpa::{BalanceTrace, MeasurementRound, Status};
use crate::dfpa2d::GridTrace;
use crate::error::{Error, Result};
use crate::partition::{imbalance, Distribution};

pub const TRACE_HEADER: [&str; 7] = ["round", "processor", "d", "time_s", "speed", "imbalance", "status"];
pub const GRID_HEADER: [&str; 9] =
    ["outer_round", "column", "processor", "m_ij", "n_j", "time_s", "speed", "censored", "global_imbalance"];
pub const PLOT_HEADER: [&str; 6] = ["processor", "round", "d", "speed", "t_common", "slope"];

/// Formats `v` rounded to 9 significant digits, in the shortest form that
/// reads back to the rounded value.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    rounded.to_string()
}

pub fn write_trace_csv<W: Write>(trace: &BalanceTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let last = trace.rounds.len().saturating_sub(1);
    for (k, r) in trace.rounds.iter().enumerate() {
        let status = if k == last { trace.status.as_str() } else { "unbalanced" };
        for (i, &d) in r.d.iter().enumerate() {
            w.write_record([
                r.round.to_string(),
                i.to_string(),
                d.to_string(),
                sig9(r.times[i]),
                sig9(r.speeds[i]),
                sig9(r.imbalance),
                status.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<T> {
    rec.get(idx)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("line {line}: bad or missing `{name}`")))
}

/// Reads a trace CSV back. Information the CSV does not carry (epsilon,
/// predicted common times, latency) comes back empty.
pub fn read_trace_csv<R: Read>(input: R) -> Result<BalanceTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Format(format!("unexpected trace header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rounds: Vec<MeasurementRound> = Vec::new();
    let mut status = Status::MaxIterations;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let round: u32 = field(&rec, 0, "round", line)?;
        let processor: usize = field(&rec, 1, "processor", line)?;
        let d: u64 = field(&rec, 2, "d", line)?;
        let time: f64 = field(&rec, 3, "time_s", line)?;
        let speed: f64 = field(&rec, 4, "speed", line)?;
        let imb: f64 = field(&rec, 5, "imbalance", line)?;
        status = match rec.get(6) {
            Some("converged") => Status::Converged,
            Some("max_iterations") | Some("unbalanced") => Status::MaxIterations,
            other => return Err(Error::Format(format!("line {line}: unknown status {other:?}"))),
        };
        if rounds.last().is_none_or(|r| r.round != round) {
            rounds.push(MeasurementRound {
                round,
                d: Distribution::new(Vec::new()),
                times: Vec::new(),
                speeds: Vec::new(),
                imbalance: imb,
                t_common: None,
                censored: Vec::new(),
                latency: 0.0,
            });
        }
        let r = rounds.last_mut().expect("round pushed above");
        if processor != r.times.len() {
            return Err(Error::Format(format!("line {line}: processor {processor} out of order")));
        }
        let mut dv = std::mem::take(&mut r.d).into_vec();
        dv.push(d);
        r.d = Distribution::new(dv);
        r.times.push(time);
        r.speeds.push(speed);
    }
    let final_round = if rounds.is_empty() {
        None
    } else if status == Status::Converged {
        Some(rounds.len() - 1)
    } else {
        rounds
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.imbalance.total_cmp(&b.1.imbalance))
            .map(|(k, _)| k)
    };
    let (final_d, final_times) = final_round
        .map(|k| (rounds[k].d.clone(), rounds[k].times.clone()))
        .unwrap_or_else(|| (Distribution::new(Vec::new()), Vec::new()));
    Ok(BalanceTrace {
        n: rounds.first().map_or(0, |r| r.d.total()),
        epsilon: 0.0,
        rounds,
        status,
        final_round,
        final_d,
        final_times,
    })
}

pub fn write_grid_csv<W: Write>(trace: &GridTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_HEADER)?;
    for r in &trace.outer_rounds {
        for (j, col) in r.heights.iter().enumerate() {
            for (i, &rows) in col.iter().enumerate() {
                w.write_record([
                    r.outer_round.to_string(),
                    j.to_string(),
                    i.to_string(),
                    rows.to_string(),
                    r.widths[j].to_string(),
                    sig9(r.times[j][i]),
                    sig9(r.speeds[j][i]),
                    r.censored[j][i].to_string(),
                    sig9(r.global_imbalance),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(input: R) -> Result<T> {
    Ok(serde_json::from_reader(input)?)
}

/// Reads a 1D trace written either as JSON or as CSV.
pub fn read_trace(text: &str) -> Result<BalanceTrace> {
    if text.trim_start().starts_with('{') {
        read_json(text.as_bytes())
    } else {
        read_trace_csv(text.as_bytes())
    }
}

/// One row of plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub processor: usize,
    pub round: u32,
    pub d: u64,
    pub speed: f64,
    pub t_common: Option<f64>,
}

impl PlotPoint {
    /// Slope `1 / t_common` of the line through the origin on which all
    /// processors of a balanced round lie in the (size, speed) plane.
    pub fn slope(&self) -> Option<f64> {
        self.t_common.map(|t| 1.0 / t)
    }
}

/// Per-processor series of `(round, d, speed)`, grouped by processor.
pub fn plot_points(trace: &BalanceTrace) -> Vec<PlotPoint> {
    let p = trace.rounds.iter().map(|r| r.d.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(p * trace.rounds.len());
    for i in 0..p {
        for r in trace.rounds.iter().filter(|r| i < r.d.len()) {
            out.push(PlotPoint { processor: i, round: r.round, d: r.d[i], speed: r.speeds[i], t_common: r.t_common });
        }
    }
    out
}

pub fn write_plot_csv<W: Write>(trace: &BalanceTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for pt in plot_points(trace) {
        w.write_record([
            pt.processor.to_string(),
            pt.round.to_string(),
            pt.d.to_string(),
            sig9(pt.speed),
            pt.t_common.map(sig9).unwrap_or_default(),
            pt.slope().map(sig9).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Global imbalance recomputed from the per-cell times of a grid round.
pub fn grid_round_imbalance(times: &[Vec<f64>]) -> Result<f64> {
    imbalance(&times.concat())
}
