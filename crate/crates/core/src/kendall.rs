//! Sample multivariate Kendall's tau matrix
//!
//! ```text
//! K̂ = 2/(T(T−1)) Σ_{s<t} (y_s − y_t)(y_s − y_t)ᵀ / ‖y_s − y_t‖²
//! ```
//!
//! plus a Monte Carlo evaluator of the population eigenvalues of `K` given
//! the eigenvalues of the scatter matrix, and the classical lower bound on
//! those eigenvalues.
//!
//! The pair sum is evaluated over a fixed partition of the pair index space
//! into blocks of [`PAIR_BLOCK`] consecutive pairs (lexicographic `(s, t)`
//! order). Each block yields a packed lower-triangular partial sum; partials
//! are always added in ascending block order. The serial and parallel paths
//! share this arithmetic, so the result is bit-identical for any worker
//! count.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::elliptical::{Lane, RngStream};
use crate::error::{Error, Result};
use crate::panel::DataPanel;

/// Number of pairs per accumulation block.
pub const PAIR_BLOCK: usize = 512;

/// Blocks computed concurrently before their partials are merged.
const BLOCK_BATCH: usize = 64;

/// Version tag written into binary dumps.
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KendallTauMatrix {
    matrix: DMatrix<f64>,
    n_pairs: usize,
    degenerate_pairs_dropped: usize,
}

impl KendallTauMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Total number of unordered pairs, `T(T−1)/2`.
    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn degenerate_pairs_dropped(&self) -> usize {
        self.degenerate_pairs_dropped
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Largest absolute difference between `K̂` and its transpose.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    /// Flips one off-diagonal entry. Fault injection for self-checks only.
    #[doc(hidden)]
    pub fn corrupt_symmetry(&mut self) {
        if self.dim() > 1 {
            self.matrix[(1, 0)] += 1e-3;
        }
    }

    /// Writes the matrix as a little-endian dump: `u32` dimension, `u32`
    /// version, then `N²` row-major `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim();
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                w.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a dump written by [`KendallTauMatrix::write_binary`]; returns the
/// square matrix.
pub fn read_binary<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let io = |source| Error::Io {
        path: Default::default(),
        source,
    };
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io)?;
    let n = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != DUMP_VERSION {
        return Err(Error::invalid(format!("unsupported dump version {version}")));
    }
    let mut buf = [0u8; 8];
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        r.read_exact(&mut buf).map_err(io)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(DMatrix::from_row_slice(n, n, &data))
}

/// Serial sample Kendall's tau matrix of the rows of `panel`.
pub fn sample_kendall_tau(panel: &DataPanel) -> Result<KendallTauMatrix> {
    compute(panel, None)
}

/// Same value as [`sample_kendall_tau`], computed with `workers` threads.
pub fn sample_kendall_tau_parallel(panel: &DataPanel, workers: usize) -> Result<KendallTauMatrix> {
    if workers == 0 {
        return Err(Error::invalid("workers must be at least 1"));
    }
    if workers == 1 {
        return compute(panel, None);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    pool.install(|| compute(panel, Some(workers)))
}

struct PairKernel {
    rows: Vec<f64>,
    t: usize,
    n: usize,
    n_pairs: usize,
}

impl PairKernel {
    fn new(panel: &DataPanel) -> Self {
        let (t, n) = (panel.t(), panel.n());
        let v = panel.values();
        let mut rows = Vec::with_capacity(t * n);
        for s in 0..t {
            rows.extend(v.row(s).iter().copied());
        }
        Self {
            rows,
            t,
            n,
            n_pairs: t * (t - 1) / 2,
        }
    }

    fn n_blocks(&self) -> usize {
        self.n_pairs.div_ceil(PAIR_BLOCK)
    }

    /// First pair `(s, t)` of pair index `p` in lexicographic order.
    fn unrank(&self, p: usize) -> (usize, usize) {
        let mut s = 0;
        let mut start = 0;
        loop {
            let len = self.t - 1 - s;
            if p < start + len {
                return (s, s + 1 + (p - start));
            }
            start += len;
            s += 1;
        }
    }

    /// Packed lower-triangular partial sum of one block and the number of
    /// degenerate pairs in it.
    fn block(&self, b: usize) -> (Vec<f64>, usize) {
        let n = self.n;
        let first = b * PAIR_BLOCK;
        let len = PAIR_BLOCK.min(self.n_pairs - first);
        // Feature-major: buf[k * len + q] is coordinate k of pair q.
        let mut buf = vec![0.0; n * len];
        let mut dropped = 0;
        let mut diff = vec![0.0; n];
        let (mut s, mut t) = self.unrank(first);
        for q in 0..len {
            let ys = &self.rows[s * n..(s + 1) * n];
            let yt = &self.rows[t * n..(t + 1) * n];
            let mut sq = 0.0;
            for ((d, a), b) in diff.iter_mut().zip(ys).zip(yt) {
                *d = a - b;
                sq += *d * *d;
            }
            if sq > 0.0 {
                let scale = 1.0 / sq.sqrt();
                for (k, d) in diff.iter().enumerate() {
                    buf[k * len + q] = d * scale;
                }
            } else {
                dropped += 1;
            }
            t += 1;
            if t == self.t {
                s += 1;
                t = s + 1;
            }
        }

        let mut packed = vec![0.0; n * (n + 1) / 2];
        let mut idx = 0;
        for k in 0..n {
            let col_k = &buf[k * len..(k + 1) * len];
            for l in 0..=k {
                packed[idx] = dot(col_k, &buf[l * len..(l + 1) * len]);
                idx += 1;
            }
        }
        (packed, dropped)
    }
}

/// Fixed-order dot product with four partial accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn compute(panel: &DataPanel, workers: Option<usize>) -> Result<KendallTauMatrix> {
    if panel.has_missing() {
        return Err(Error::MissingValues(
            "Kendall's tau requires a complete panel".into(),
        ));
    }
    if panel.t() < 2 {
        return Err(Error::invalid("Kendall's tau needs at least 2 observations"));
    }
    let kernel = PairKernel::new(panel);
    let n = kernel.n;
    let mut total = vec![0.0; n * (n + 1) / 2];
    let mut dropped = 0usize;
    let n_blocks = kernel.n_blocks();

    let mut merge = |(partial, d): (Vec<f64>, usize)| {
        for (acc, v) in total.iter_mut().zip(&partial) {
            *acc += v;
        }
        dropped += d;
    };

    match workers {
        None => (0..n_blocks).map(|b| kernel.block(b)).for_each(&mut merge),
        Some(_) => {
            for start in (0..n_blocks).step_by(BLOCK_BATCH) {
                let end = (start + BLOCK_BATCH).min(n_blocks);
                let partials: Vec<_> = (start..end)
                    .into_par_iter()
                    .map(|b| kernel.block(b))
                    .collect();
                partials.into_iter().for_each(&mut merge);
            }
        }
    }

    let retained = kernel.n_pairs - dropped;
    if retained == 0 {
        return Err(Error::invalid(
            "every pair of observations is identical; Kendall's tau is undefined",
        ));
    }
    let scale = 1.0 / retained as f64;
    let mut matrix = DMatrix::zeros(n, n);
    let mut idx = 0;
    for k in 0..n {
        for l in 0..=k {
            let v = total[idx] * scale;
            matrix[(k, l)] = v;
            matrix[(l, k)] = v;
            idx += 1;
        }
    }
    Ok(KendallTauMatrix {
        matrix,
        n_pairs: kernel.n_pairs,
        degenerate_pairs_dropped: dropped,
    })
}

/// Monte Carlo estimate of the population Kendall's tau eigenvalues, with
/// per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// `λ_j(K) = E[λ_j g_j² / Σ_i λ_i g_i²]`, `g ~ N(0, I_q)`, averaged over
/// `mc_draws` draws from the direction lane of `rng`.
pub fn population_kendall_eigenvalues_oracle(
    sigma_eigenvalues: &[f64],
    mc_draws: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    Ok(population_kendall_eigenvalues_with_errors(sigma_eigenvalues, mc_draws, rng)?.mean)
}

pub fn population_kendall_eigenvalues_with_errors(
    sigma_eigenvalues: &[f64],
    mc_draws: usize,
    rng: &mut RngStream,
) -> Result<OracleEstimate> {
    if mc_draws == 0 {
        return Err(Error::invalid("mc_draws must be at least 1"));
    }
    if sigma_eigenvalues.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("scatter eigenvalues must be finite and nonnegative"));
    }
    if !sigma_eigenvalues.iter().any(|l| *l > 0.0) {
        return Err(Error::invalid("at least one scatter eigenvalue must be positive"));
    }
    let q = sigma_eigenvalues.len();
    let mut sum = vec![0.0; q];
    let mut sum_sq = vec![0.0; q];
    let mut term = vec![0.0; q];
    for _ in 0..mc_draws {
        let mut denom = 0.0;
        for (t, l) in term.iter_mut().zip(sigma_eigenvalues) {
            let g = rng.standard_normal(Lane::Direction);
            *t = l * g * g;
            denom += *t;
        }
        for j in 0..q {
            let ratio = term[j] / denom;
            sum[j] += ratio;
            sum_sq[j] += ratio * ratio;
        }
    }
    let m = mc_draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let std_error = sum_sq
        .iter()
        .zip(&mean)
        .map(|(ss, mu)| {
            if mc_draws < 2 {
                return f64::INFINITY;
            }
            let var = ((ss / m) - mu * mu).max(0.0) * m / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();
    Ok(OracleEstimate { mean, std_error })
}

/// Lower bound on `λ_j(K)`:
///
/// ```text
/// λ_j(Σ) / (Tr Σ + 4‖Σ‖_F √(log N) + 8‖Σ‖₂ log N) · (1 − √3 / N²)
/// ```
///
/// `j` is 1-based.
pub fn han_lower_bound(sigma_eigenvalues: &[f64], j: usize, n: usize) -> Result<f64> {
    if j == 0 || j > sigma_eigenvalues.len() {
        return Err(Error::invalid(format!(
            "index {j} outside 1..={}",
            sigma_eigenvalues.len()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("dimension N must be at least 2"));
    }
    let trace: f64 = sigma_eigenvalues.iter().sum();
    let frob = sigma_eigenvalues.iter().map(|l| l * l).sum::<f64>().sqrt();
    let spec = sigma_eigenvalues.iter().fold(0.0f64, |m, l| m.max(*l));
    let log_n = (n as f64).ln();
    let denom = trace + 4.0 * frob * log_n.sqrt() + 8.0 * spec * log_n;
    let correction = 1.0 - 3f64.sqrt() / (n as f64).powi(2);
    Ok(sigma_eigenvalues[j - 1] / denom * correction)
}
