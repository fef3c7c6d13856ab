//! Acceptance gate: one line per criterion, non-zero exit if any fails.
//!
//! Runtime limits are checked against wall time of the current build
//! profile.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fpm_balance::compare::compare_1d;
use fpm_balance::dfpa2d::{dfpa_2d, GridConfig, GridExecutor, Optimizations};
use fpm_balance::kernels::{block_update, rank1_update};
use fpm_balance::sim::{ffmpa_distribution, makespan, standard_instance, SimGrid};
use fpm_balance::{
    brute_force_optimum, cpm_partition_2d, dfpa, heterogeneity, overhead_ratio, DfpaConfig, SimCluster, Status,
    SyntheticProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid_golden() -> Outcome {
    let s = [0.11, 0.25, 0.05, 0.17, 0.09, 0.08, 0.05, 0.17, 0.03];
    let speeds: Vec<Vec<f64>> = s.chunks(3).map(<[f64]>::to_vec).collect();
    let part = cpm_partition_2d(&speeds, 6, 6).map_err(|e| e.to_string())?;
    ensure(part.widths == vec![2, 3, 1], || format!("widths {:?}", part.widths))?;
    let want = vec![vec![2, 3, 1], vec![3, 1, 2], vec![2, 3, 1]];
    ensure(part.heights == want, || format!("heights {:?}", part.heights))?;
    Ok(format!("widths {:?}, heights {:?}", part.widths, part.heights))
}

fn heterogeneity_golden() -> Outcome {
    let mflops = [
        658.0, 667.0, 648.0, 644.0, 570.0, 503.0, 583.0, 581.0, 611.0, 628.0, 567.0, 601.0, 338.0, 651.0, 554.0, 695.0,
    ];
    let h = heterogeneity(&mflops).map_err(|e| e.to_string())?;
    ensure((h - 695.0 / 338.0).abs() < 1e-3 && (h - 2.056).abs() < 1e-3, || format!("ratio {h}"))?;
    ensure(h.round() == 2.0, || format!("ratio {h} does not round to 2"))?;
    Ok(format!("695/338 = {h:.4}"))
}

fn hand_trace() -> Outcome {
    let mut c = SimCluster::new(vec![SyntheticProfile::flat(2.0), SyntheticProfile::flat(1.0)]).map_err(|e| e.to_string())?;
    let trace = dfpa(&mut c, 30, &DfpaConfig::with_epsilon(0.05)).map_err(|e| e.to_string())?;
    ensure(trace.status == Status::Converged, || format!("status {:?}", trace.status))?;
    ensure(trace.iterations() == 2, || format!("{} rounds", trace.iterations()))?;
    ensure(*trace.final_d == [20, 10], || format!("d = {:?}", trace.final_d))?;
    ensure(trace.final_imbalance() == Some(0.0), || format!("imbalance {:?}", trace.final_imbalance()))?;
    Ok("(15,15) -> (20,10) in 2 rounds, imbalance 0".into())
}

const SUITE_SIZE: u64 = 200;

fn convergence_suite() -> Outcome {
    let config = DfpaConfig::default();
    let mut worst_rounds = 0;
    let mut worst_imb = 0.0f64;
    for seed in 0..SUITE_SIZE {
        let inst = standard_instance(seed);
        let p = inst.profiles.len();
        ensure((2..=16).contains(&p) && (1_000..=1_000_000).contains(&inst.n), || format!("seed {seed} out of range"))?;
        let peaks: Vec<f64> = inst.profiles.iter().map(|p| p.peak_speed).collect();
        let h = heterogeneity(&peaks).map_err(|e| e.to_string())?;
        ensure(h <= 10.0 + 1e-9, || format!("seed {seed}: heterogeneity {h}"))?;
        let mut c = SimCluster::new(inst.profiles).map_err(|e| e.to_string())?;
        let trace = dfpa(&mut c, inst.n, &config).map_err(|e| format!("seed {seed}: {e}"))?;
        let imb = trace.final_imbalance().unwrap_or(f64::INFINITY);
        ensure(trace.status == Status::Converged && imb <= 0.025, || {
            format!("seed {seed} (p = {p}, n = {}): {:?} with imbalance {imb}", inst.n, trace.status)
        })?;
        worst_rounds = worst_rounds.max(trace.iterations());
        worst_imb = worst_imb.max(imb);
    }
    Ok(format!("{SUITE_SIZE}/{SUITE_SIZE} converged, at most {worst_rounds} rounds, worst imbalance {worst_imb:.4}"))
}

fn small_instance(rng: &mut ChaCha8Rng) -> (Vec<SyntheticProfile>, u64) {
    let p = rng.gen_range(2..=3);
    let n = rng.gen_range(10..=60);
    let profiles = (0..p)
        .map(|_| {
            let mut prof = SyntheticProfile::flat(rng.gen_range(1.0..10.0));
            if rng.gen_bool(0.3) {
                prof = prof.with_cache(rng.gen_range(1.0..8.0), rng.gen_range(1.0..1.5));
            }
            if rng.gen_bool(0.4) {
                let ram = rng.gen_range(8.0..30.0);
                prof = prof.with_paging(ram, rng.gen_range(0.01..0.2));
            }
            prof
        })
        .collect();
    (profiles, n)
}

fn oracle_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dfa);
    let config = DfpaConfig::default();
    let mut worst = 0.0f64;
    for k in 0..50 {
        let (profiles, n) = small_instance(&mut rng);
        let (_, best) = brute_force_optimum(&profiles, n).map_err(|e| e.to_string())?;
        let mut c = SimCluster::new(profiles.clone()).map_err(|e| e.to_string())?;
        let trace = dfpa(&mut c, n, &config).map_err(|e| e.to_string())?;
        let got = makespan(&profiles, &trace.final_d).map_err(|e| e.to_string())?;
        let slack = trace.final_d.iter().map(|&d| 1.0 / d as f64).fold(0.0, f64::max);
        let bound = (1.0 + config.epsilon + slack) * best;
        ensure(got <= bound * (1.0 + 1e-12), || {
            format!("instance {k}: n = {n}, d = {:?}, makespan {got} > bound {bound} (optimum {best})", trace.final_d)
        })?;
        worst = worst.max(got / best);
    }
    Ok(format!("50 instances within bound, worst makespan/optimum {worst:.4}"))
}

fn ffmpa_agreement() -> Outcome {
    let config = DfpaConfig::default();
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for seed in 0..SUITE_SIZE {
        let inst = standard_instance(seed);
        let p = inst.profiles.len();
        let ff = ffmpa_distribution(&inst.profiles, inst.n).map_err(|e| e.to_string())?;
        let mut c = SimCluster::new(inst.profiles).map_err(|e| e.to_string())?;
        let trace = dfpa(&mut c, inst.n, &config).map_err(|e| e.to_string())?;
        let tol = 2f64.max(0.02 * inst.n as f64 / p as f64);
        for (i, (&a, &b)) in trace.final_d.iter().zip(ff.iter()).enumerate() {
            let diff = a.abs_diff(b) as f64;
            if diff > tol {
                misses.push(format!("seed {seed} processor {i}: dfpa {a} vs ffmpa {b}, tolerance {tol:.1}"));
            }
            worst = worst.max(diff / tol);
        }
    }
    ensure(misses.is_empty(), || format!("{} processors out of tolerance: {}", misses.len(), misses.join("; ")))?;
    Ok(format!("all processors within tolerance, worst |diff|/tolerance {worst:.3}"))
}

fn cpm_gap() -> Outcome {
    let n = 10_000;
    let mut profiles = vec![SyntheticProfile::flat(1e4); 4];
    profiles[3] = SyntheticProfile::flat(1e4).with_paging(2_000.0, 0.05);
    let cmp = compare_1d(&profiles, n, &DfpaConfig::default(), 0.0).map_err(|e| e.to_string())?;
    let cpm = cmp.get("cpm").ok_or("no cpm result")?.makespan;
    let dfpa = cmp.get("dfpa").ok_or("no dfpa result")?.makespan;
    let gap = (cpm - dfpa) / dfpa;
    ensure(gap >= 0.20, || format!("cpm {cpm} vs dfpa {dfpa}: gap {gap:.3}"))?;
    Ok(format!("cpm {cpm:.4} s vs dfpa {dfpa:.4} s, cpm {:.1}% slower", 100.0 * gap))
}

fn overhead_accounting() -> Outcome {
    let mut parts = Vec::new();
    for (dfpa_s, app_s, want) in [(0.22, 3.21, 6.4), (28.84, 280.04, 9.3)] {
        let pct = 100.0 * overhead_ratio(dfpa_s, app_s).map_err(|e| e.to_string())?;
        ensure((pct - want).abs() <= 0.1 && pct <= 10.0, || format!("({dfpa_s}, {app_s}) -> {pct:.3}%"))?;
        parts.push(format!("{pct:.2}%"));
    }
    Ok(parts.join(", "))
}

fn grid_convergence() -> Outcome {
    let peaks = [[3.0, 5.0, 2.0], [4.0, 2.5, 1.5], [2.0, 4.5, 1.0]];
    let mut profiles: Vec<Vec<SyntheticProfile>> =
        peaks.iter().map(|r| r.iter().map(|&s| SyntheticProfile::flat(s * 1e3)).collect()).collect();
    profiles[0][1] = profiles[0][1].clone().with_paging(8_000.0, 1e-3);
    let (m, n) = (300, 300);
    let config = GridConfig::default();
    let mut grid = SimGrid::new(profiles).map_err(|e| e.to_string())?;
    let trace = dfpa_2d(&mut grid, m, n, &config).map_err(|e| e.to_string())?;
    let global = trace.final_global_imbalance().unwrap_or(f64::INFINITY);
    ensure(trace.status == Status::Converged && trace.outer_iterations() <= 30 && global <= config.epsilon, || {
        format!("{:?} after {} outer rounds, imbalance {global}", trace.status, trace.outer_iterations())
    })?;

    let reference = [[0.11, 0.25, 0.05], [0.17, 0.09, 0.08], [0.05, 0.17, 0.03]];
    let constant: Vec<Vec<SyntheticProfile>> =
        reference.iter().map(|r| r.iter().map(|&s| SyntheticProfile::flat(s * 1e3)).collect()).collect();
    let count = |opt: Optimizations| -> Result<u64, String> {
        let mut g = SimGrid::new(constant.clone()).map_err(|e| e.to_string())?;
        let cfg = GridConfig { optimizations: opt, ..GridConfig::default() };
        let t = dfpa_2d(&mut g, 600, 600, &cfg).map_err(|e| e.to_string())?;
        ensure(t.kernel_invocation_count == g.invocations(), || "invocation count disagrees with executor".into())?;
        Ok(t.kernel_invocation_count)
    };
    let on = count(Optimizations::enabled())?;
    let off = count(Optimizations::disabled())?;
    ensure(on < off, || format!("optimizations {on} invocations vs {off} without"))?;
    let (p, q) = grid.shape();
    Ok(format!(
        "{p}x{q} grid converged in {} outer rounds, imbalance {global:.4}; invocations {on} vs {off}",
        trace.outer_iterations()
    ))
}

fn kernel_reference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let int = |rng: &mut ChaCha8Rng| rng.gen_range(-9i32..=9) as f64;
    let mut cases = 0;
    for n_b in 1..=8 {
        for n in 1..=8 {
            let a: Vec<f64> = (0..n_b).map(|_| int(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| int(&mut rng)).collect();
            let c0: Vec<f64> = (0..n_b * n).map(|_| int(&mut rng)).collect();
            let mut c = c0.clone();
            rank1_update(&mut c, &a, &b);
            for i in 0..n_b {
                for j in 0..n {
                    let mut want = c0[i * n + j];
                    for k in 0..1 {
                        want += a[i + k] * b[k * n + j];
                    }
                    ensure(c[i * n + j] == want, || format!("1D n_b={n_b} n={n} at ({i},{j})"))?;
                }
            }
            cases += 1;
        }
    }
    for m_b in 1..=8 {
        for n_b in 1..=8 {
            for bs in 1..=8 {
                let rows = m_b * bs;
                let cols = n_b * bs;
                // dense operands: A is rows x bs, B is bs x cols, C is rows x cols
                let a_dense: Vec<f64> = (0..rows * bs).map(|_| int(&mut rng)).collect();
                let b_dense: Vec<f64> = (0..bs * cols).map(|_| int(&mut rng)).collect();
                let c_dense: Vec<f64> = (0..rows * cols).map(|_| int(&mut rng)).collect();
                let mut want = c_dense.clone();
                for r in 0..rows {
                    for col in 0..cols {
                        for k in 0..bs {
                            want[r * cols + col] += a_dense[r * bs + k] * b_dense[k * cols + col];
                        }
                    }
                }
                let blk = bs * bs;
                let mut a = vec![0.0; m_b * blk];
                let mut b = vec![0.0; n_b * blk];
                let mut c = vec![0.0; m_b * n_b * blk];
                for r in 0..rows {
                    for k in 0..bs {
                        a[(r / bs) * blk + (r % bs) * bs + k] = a_dense[r * bs + k];
                    }
                }
                for k in 0..bs {
                    for col in 0..cols {
                        b[(col / bs) * blk + k * bs + col % bs] = b_dense[k * cols + col];
                    }
                }
                let cell = |r: usize, col: usize| ((r / bs) * n_b + col / bs) * blk + (r % bs) * bs + col % bs;
                for r in 0..rows {
                    for col in 0..cols {
                        c[cell(r, col)] = c_dense[r * cols + col];
                    }
                }
                block_update(&mut c, &a, &b, m_b, n_b, bs);
                for r in 0..rows {
                    for col in 0..cols {
                        ensure(c[cell(r, col)] == want[r * cols + col], || {
                            format!("2D m_b={m_b} n_b={n_b} b={bs} at ({r},{col})")
                        })?;
                    }
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} operand shapes match exactly"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let ms = Duration::from_millis;
    let criteria = [
        Criterion { id: 1, name: "2D constant-model golden partition", limit: Some(ms(1)), check: grid_golden },
        Criterion { id: 2, name: "heterogeneity of the reference speed list", limit: None, check: heterogeneity_golden },
        Criterion { id: 3, name: "hand-traced two-processor run", limit: Some(ms(1)), check: hand_trace },
        Criterion { id: 4, name: "convergence suite", limit: Some(ms(30_000)), check: convergence_suite },
        Criterion { id: 5, name: "oracle near-optimality", limit: Some(ms(60_000)), check: oracle_bound },
        Criterion { id: 6, name: "agreement with full-model partition", limit: Some(ms(30_000)), check: ffmpa_agreement },
        Criterion { id: 7, name: "constant-model gap on paging cliff", limit: Some(ms(5_000)), check: cpm_gap },
        Criterion { id: 8, name: "overhead accounting", limit: None, check: overhead_accounting },
        Criterion { id: 9, name: "2D convergence and economy", limit: Some(ms(10_000)), check: grid_convergence },
        Criterion { id: 10, name: "kernel reference", limit: Some(ms(1_000)), check: kernel_reference },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:>2}  {}: {detail} ({elapsed:.2?})", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}  {}: {why} ({elapsed:.2?})", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
