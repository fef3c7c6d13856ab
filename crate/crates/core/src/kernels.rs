//! Matrix-update kernels for live measurement.
//!
//! The 1D kernel is the rank-1 panel update `C_b += A_b x B_b` with `A_b`
//! of size `n_b x 1` and `B_b` of size `1 x n`. The 2D kernel applies the
//! same update to a grid of `b x b` blocks. Both are plain loops; any faster
//! implementation can stand in behind the same functions.

use std::thread;
use std::time::Instant;

use crate::dfpa::{Executor, Timing};
use crate::dfpa2d::{CellTask, GridExecutor};
use crate::error::{Error, Result};
use crate::partition::Distribution;

/// Shortest time a kernel can report, so speeds stay finite.
const MIN_SECONDS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec1D {
    /// Matrix order.
    pub n: usize,
    /// Panel height, the processor's share of rows.
    pub n_b: usize,
}

impl KernelSpec1D {
    pub fn units(&self) -> u64 {
        (self.n_b * self.n) as u64
    }

    /// Elements held by one processor: its slices of A and C plus all of B.
    pub fn footprint(&self) -> usize {
        2 * self.n_b * self.n + self.n * self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec2D {
    pub m_b: usize,
    pub n_b: usize,
    /// Block size.
    pub b: usize,
}

impl KernelSpec2D {
    /// One unit is one `b x b` block multiply-accumulate.
    pub fn units(&self) -> u64 {
        (self.m_b * self.n_b) as u64
    }
}

fn alloc(len: usize, fill: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::InsufficientMemory(len))?;
    v.extend((0..len).map(fill));
    Ok(v)
}

/// `c[i][j] += a[i] * b[j]` for row-major `c` of shape `a.len() x b.len()`.
pub fn rank1_update(c: &mut [f64], a: &[f64], b: &[f64]) {
    let n = b.len();
    assert_eq!(c.len(), a.len() * n, "panel shape mismatch");
    for (row, &ai) in c.chunks_exact_mut(n).zip(a) {
        for (cij, &bj) in row.iter_mut().zip(b) {
            *cij += ai * bj;
        }
    }
}

/// Block rank-1 update `c_ij += a_i x b_j` over `m_b x n_b` blocks of size
/// `bs x bs`.
///
/// `a` holds `m_b` row-major blocks back to back, `b` holds `n_b`, and block
/// `(i, j)` of `c` starts at `(i * n_b + j) * bs * bs`.
pub fn block_update(c: &mut [f64], a: &[f64], b: &[f64], m_b: usize, n_b: usize, bs: usize) {
    let blk = bs * bs;
    assert_eq!(a.len(), m_b * blk, "A panel shape mismatch");
    assert_eq!(b.len(), n_b * blk, "B panel shape mismatch");
    assert_eq!(c.len(), m_b * n_b * blk, "C shape mismatch");
    for i in 0..m_b {
        let ab = &a[i * blk..(i + 1) * blk];
        for j in 0..n_b {
            let bb = &b[j * blk..(j + 1) * blk];
            let cb = &mut c[(i * n_b + j) * blk..(i * n_b + j + 1) * blk];
            for r in 0..bs {
                for k in 0..bs {
                    let ark = ab[r * bs + k];
                    for col in 0..bs {
                        cb[r * bs + col] += ark * bb[k * bs + col];
                    }
                }
            }
        }
    }
}

/// Runs the 1D panel update `repeats` times on fresh operands and returns
/// the wall-clock seconds of the updates alone.
pub fn run_kernel_1d(spec: KernelSpec1D, repeats: u32) -> Result<f64> {
    if spec.n == 0 || spec.n_b == 0 {
        return Err(Error::InvalidArgument(format!("empty kernel {spec:?}")));
    }
    let (n, n_b) = (spec.n, spec.n_b);
    let a_slice = alloc(n_b * n, |k| 1.0 + (k % 7) as f64)?;
    let b_full = alloc(n * n, |k| 1.0 - (k % 5) as f64 * 0.25)?;
    let mut c = alloc(n_b * n, |_| 0.0)?;
    let a_col: Vec<f64> = (0..n_b).map(|i| a_slice[i * n]).collect();
    let b_row = &b_full[..n];

    let start = Instant::now();
    for _ in 0..repeats.max(1) {
        rank1_update(&mut c, &a_col, b_row);
    }
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(&c);
    Ok(secs.max(MIN_SECONDS))
}

/// Runs the 2D block update `repeats` times and returns wall-clock seconds.
pub fn run_kernel_2d(spec: KernelSpec2D, repeats: u32) -> Result<f64> {
    if spec.m_b == 0 || spec.n_b == 0 || spec.b == 0 {
        return Err(Error::InvalidArgument(format!("empty kernel {spec:?}")));
    }
    let blk = spec.b * spec.b;
    let a = alloc(spec.m_b * blk, |k| 1.0 + (k % 3) as f64)?;
    let b = alloc(spec.n_b * blk, |k| 0.5 + (k % 4) as f64)?;
    let mut c = alloc(spec.m_b * spec.n_b * blk, |_| 0.0)?;

    let start = Instant::now();
    for _ in 0..repeats.max(1) {
        block_update(&mut c, &a, &b, spec.m_b, spec.n_b, spec.b);
    }
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(&c);
    Ok(secs.max(MIN_SECONDS))
}

/// Runs 1D kernels on local threads, one per processor, with `n_b = d_i`.
#[derive(Debug, Clone)]
pub struct RealExecutor {
    pub processors: usize,
    pub matrix_order: usize,
    pub repeats: u32,
}

impl RealExecutor {
    pub fn new(processors: usize, matrix_order: usize) -> Self {
        Self { processors, matrix_order, repeats: 1 }
    }
}

impl Executor for RealExecutor {
    fn processors(&self) -> usize {
        self.processors
    }

    fn run_round(&mut self, d: &Distribution, round: u32) -> Result<Vec<Timing>> {
        if d.len() != self.processors {
            return Err(Error::InvalidArgument(format!("{} allocations for {} workers", d.len(), self.processors)));
        }
        let n = self.matrix_order;
        let repeats = self.repeats;
        let results: Vec<Result<f64>> = thread::scope(|s| {
            let handles: Vec<_> = d
                .iter()
                .map(|&rows| s.spawn(move || run_kernel_1d(KernelSpec1D { n, n_b: rows as usize }, repeats)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| Err(Error::Executor { round, message: "worker panicked".into() }))
                })
                .collect()
        });
        results.into_iter().map(|r| r.map(Timing::new)).collect()
    }
}

/// Runs 2D block kernels on local threads, one per requested cell.
#[derive(Debug, Clone)]
pub struct RealGridExecutor {
    pub p: usize,
    pub q: usize,
    pub block: usize,
    pub repeats: u32,
}

impl RealGridExecutor {
    pub fn new(p: usize, q: usize, block: usize) -> Self {
        Self { p, q, block, repeats: 1 }
    }
}

impl GridExecutor for RealGridExecutor {
    fn shape(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    fn run_cells(&mut self, tasks: &[CellTask], round: u32) -> Result<Vec<Timing>> {
        let b = self.block;
        let repeats = self.repeats;
        let results: Vec<Result<f64>> = thread::scope(|s| {
            let handles: Vec<_> = tasks
                .iter()
                .map(|t| {
                    let spec = KernelSpec2D { m_b: t.rows as usize, n_b: t.width as usize, b };
                    s.spawn(move || run_kernel_2d(spec, repeats))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| Err(Error::Executor { round, message: "worker panicked".into() }))
                })
                .collect()
        });
        results.into_iter().map(|r| r.map(Timing::new)).collect()
    }
}
