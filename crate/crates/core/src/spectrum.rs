//! Symmetric eigenvalues and the regularized spectrum shared by every
//! criterion: `λ̂_j = λ_j + c·δ`, `δ = 1/√m`, `m = min(N, T)`, tail sums
//! `V_j = Σ_{i>j} λ̂_i` and the mock eigenvalue `λ̂_0 = −1/ln δ`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

/// Eigenvalues of a symmetric matrix in descending order; the `top_k`
/// largest when given.
pub fn eigenvalues_sym(matrix: &DMatrix<f64>, top_k: Option<usize>) -> Result<Vec<f64>> {
    check_symmetric(matrix)?;
    let eig = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    if let Some(k) = top_k {
        values.truncate(k);
    }
    Ok(values)
}

/// Full decomposition with the reconstruction residual
/// `‖QΛQᵀ − A‖_F / ‖A‖_F`, for debugging and self-checks.
pub fn reconstruction_error(matrix: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(matrix)?;
    let eig = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let rebuilt = eig.recompose();
    let scale = matrix.norm().max(f64::MIN_POSITIVE);
    Ok((rebuilt - matrix).norm() / scale)
}

fn check_symmetric(matrix: &DMatrix<f64>) -> Result<()> {
    if !matrix.is_square() {
        return Err(Error::invalid(format!(
            "matrix is {} x {}, expected square",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = matrix.nrows();
    let scale = matrix.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Regularized spectrum. Indices in accessors are 1-based as in the
/// criteria formulas; index 0 of [`EigenSpectrum::lambda_hat`] is the mock
/// eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    raw: Vec<f64>,
    regularized: Vec<f64>,
    delta: f64,
    c: f64,
    mock_zero: f64,
    tail_sums: Vec<f64>,
    clamped: usize,
}

impl EigenSpectrum {
    /// Retained raw eigenvalues `λ_1 ≥ … ≥ λ_L`.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn regularized(&self) -> &[f64] {
        &self.regularized
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn mock_zero(&self) -> f64 {
        self.mock_zero
    }

    /// `V_j` for `j = 0..L−1`.
    pub fn tail_sums(&self) -> &[f64] {
        &self.tail_sums
    }

    /// Retained length `L`.
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Number of slightly negative raw eigenvalues clamped to zero.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `λ̂_j` for `j = 0..=L`, `λ̂_0` being the mock eigenvalue.
    pub fn lambda_hat(&self, j: usize) -> f64 {
        if j == 0 {
            self.mock_zero
        } else {
            self.regularized[j - 1]
        }
    }

    /// `V_j` for `j = −1..=L`: `V_{−1} = λ̂_0 + V_0` and `V_L = 0`.
    pub fn tail_sum(&self, j: isize) -> f64 {
        match j {
            -1 => self.mock_zero + self.tail_sums[0],
            j if j as usize >= self.len() => 0.0,
            j => self.tail_sums[j as usize],
        }
    }
}

/// Builds the regularized spectrum from descending raw eigenvalues, keeping
/// the first `retain` of them. `N` and `T` fix `m = min(N, T)` and hence `δ`.
pub fn build_spectrum(raw_eigenvalues: &[f64], n: usize, t: usize, c: f64, retain: usize) -> Result<EigenSpectrum> {
    if retain == 0 {
        return Err(Error::invalid("must retain at least one eigenvalue"));
    }
    if retain > raw_eigenvalues.len() {
        return Err(Error::SpectrumTooShort {
            needed: retain,
            available: raw_eigenvalues.len(),
        });
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("regularizer c must be positive, got {c}")));
    }
    if raw_eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("eigenvalues must be finite"));
    }
    if raw_eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("eigenvalues must be in descending order"));
    }
    let m = n.min(t);
    if m < 2 {
        return Err(Error::invalid("min(N, T) must be at least 2"));
    }
    let floor = -PSD_TOL * raw_eigenvalues[0].abs().max(1.0);
    let mut clamped = 0;
    let mut raw = Vec::with_capacity(retain);
    for &v in &raw_eigenvalues[..retain] {
        if v < floor {
            return Err(Error::Numerical(format!(
                "matrix is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        if v < 0.0 {
            clamped += 1;
            raw.push(0.0);
        } else {
            raw.push(v);
        }
    }

    let delta = 1.0 / (m as f64).sqrt();
    let shift = c * delta;
    let regularized: Vec<f64> = raw.iter().map(|v| v + shift).collect();
    let mock_zero = -1.0 / delta.ln();

    // V_j = Σ_{i=j+1}^{L} λ̂_i is the suffix sum starting at 0-based index j.
    let mut tail_sums = regularized.clone();
    for j in (0..retain - 1).rev() {
        tail_sums[j] = tail_sums[j + 1] + regularized[j];
    }

    Ok(EigenSpectrum {
        raw,
        regularized,
        delta,
        c,
        mock_zero,
        tail_sums,
        clamped,
    })
}
