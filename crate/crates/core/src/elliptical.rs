//! Seeded samplers for elliptical laws `X = μ + ξ·A·U`.
//!
//! Randomness comes from [`RngStream`], a ChaCha20 generator keyed by a
//! master seed and selected by a 64-bit stream index, so replication `k` of
//! a Monte Carlo run always sees the same numbers no matter which thread
//! runs it or in what order.
//!
//! Each stream is split into independent lanes. Directional draws (the
//! standard normal vector `g`) always come from [`Lane::Direction`] and
//! radial draws (chi-squared mixing variables, user `ξ`) from
//! [`Lane::Radial`]. A Gaussian and a Student-t sample driven by equal
//! streams therefore share the same directions `g/‖g‖` exactly.
//!
//! Standard normals are produced by the ziggurat sampler of `rand_distr`
//! (`StandardNormal`); chi-squared variables by `rand_distr::ChiSquared`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Independent sub-generators of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Direction,
    Radial,
    Auxiliary,
}

/// A reproducible random stream identified by `(master_seed, stream_index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    direction: ChaCha20Rng,
    radial: ChaCha20Rng,
    auxiliary: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let lane = |k: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(
                master_seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            rng.set_stream(stream_index);
            rng
        };
        Self {
            master_seed,
            stream_index,
            direction: lane(0),
            radial: lane(1),
            auxiliary: lane(2),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn lane(&mut self, lane: Lane) -> &mut ChaCha20Rng {
        match lane {
            Lane::Direction => &mut self.direction,
            Lane::Radial => &mut self.radial,
            Lane::Auxiliary => &mut self.auxiliary,
        }
    }

    pub(crate) fn standard_normal(&mut self, lane: Lane) -> f64 {
        self.lane(lane).sample(StandardNormal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    StudentT { nu: f64 },
}

impl Family {
    pub fn cauchy() -> Self {
        Family::StudentT { nu: 1.0 }
    }
}

/// Scatter factor `A` with `AAᵀ = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScatterFactor {
    /// `A = diag(a)`, i.e. `Σ = diag(a²)`.
    Diagonal(Vec<f64>),
    /// A general `d × q` factor.
    Dense(DMatrix<f64>),
}

impl ScatterFactor {
    /// Diagonal factor from the diagonal of `Σ`.
    pub fn from_diagonal_scatter(sigma_diag: &[f64]) -> Self {
        ScatterFactor::Diagonal(sigma_diag.iter().map(|s| s.sqrt()).collect())
    }

    pub fn identity(d: usize) -> Self {
        ScatterFactor::Diagonal(vec![1.0; d])
    }

    pub fn rows(&self) -> usize {
        match self {
            ScatterFactor::Diagonal(a) => a.len(),
            ScatterFactor::Dense(a) => a.nrows(),
        }
    }

    /// Dimension `q` of the latent direction.
    pub fn latent_dim(&self) -> usize {
        match self {
            ScatterFactor::Diagonal(a) => a.len(),
            ScatterFactor::Dense(a) => a.ncols(),
        }
    }

    fn apply(&self, g: &[f64], out: &mut [f64]) {
        match self {
            ScatterFactor::Diagonal(a) => {
                for ((o, a), g) in out.iter_mut().zip(a).zip(g) {
                    *o = a * g;
                }
            }
            ScatterFactor::Dense(a) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = g.iter().enumerate().map(|(c, g)| a[(r, c)] * g).sum();
                }
            }
        }
    }

    /// Spectral norm bound used for tolerance checks.
    pub fn norm_bound(&self) -> f64 {
        match self {
            ScatterFactor::Diagonal(a) => a.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            ScatterFactor::Dense(a) => a.norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalSpec {
    pub family: Family,
    pub mu: Vec<f64>,
    pub scatter: ScatterFactor,
}

impl EllipticalSpec {
    pub fn new(family: Family, mu: Vec<f64>, scatter: ScatterFactor) -> Result<Self> {
        let spec = Self { family, mu, scatter };
        spec.validate()?;
        Ok(spec)
    }

    /// Centered law with `Σ = I_d`.
    pub fn standard(family: Family, d: usize) -> Result<Self> {
        Self::new(family, vec![0.0; d], ScatterFactor::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn validate(&self) -> Result<()> {
        if let Family::StudentT { nu } = self.family {
            if !(nu > 0.0) {
                return Err(Error::invalid(format!(
                    "degrees of freedom must be positive, got {nu}"
                )));
            }
        }
        if self.scatter.rows() != self.mu.len() {
            return Err(Error::invalid(format!(
                "scatter factor has {} rows but location has dimension {}",
                self.scatter.rows(),
                self.mu.len()
            )));
        }
        if self.scatter.latent_dim() == 0 {
            return Err(Error::invalid("scatter factor has no columns"));
        }
        Ok(())
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Ok(())
}

/// Draws `n` rows of `μ + A·g·s`, where `s` is produced per row by `radial`
/// after `g` has been drawn from the direction lane.
fn sample_mixture<F>(
    spec: &EllipticalSpec,
    n: usize,
    rng: &mut RngStream,
    mut radial: F,
) -> Result<DMatrix<f64>>
where
    F: FnMut(&mut RngStream, &[f64]) -> Result<f64>,
{
    check_count(n)?;
    let d = spec.dim();
    let q = spec.scatter.latent_dim();
    let mut g = vec![0.0; q];
    let mut row = vec![0.0; d];
    let mut out = DMatrix::zeros(n, d);
    for r in 0..n {
        for gi in g.iter_mut() {
            *gi = rng.standard_normal(Lane::Direction);
        }
        let s = radial(rng, &g)?;
        spec.scatter.apply(&g, &mut row);
        for (c, v) in row.iter().enumerate() {
            out[(r, c)] = spec.mu[c] + s * v;
        }
    }
    Ok(out)
}

/// Multivariate normal rows `μ + A·g`.
pub fn sample_gaussian(spec: &EllipticalSpec, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if spec.family != Family::Gaussian {
        return Err(Error::invalid("sample_gaussian needs a Gaussian spec"));
    }
    sample_mixture(spec, n, rng, |_, _| Ok(1.0))
}

/// Multivariate t rows `μ + A·g·√(ν/w)` with `w ~ χ²_ν`; `ν = 1` is the
/// multivariate Cauchy law.
pub fn sample_student_t(spec: &EllipticalSpec, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let Family::StudentT { nu } = spec.family else {
        return Err(Error::invalid("sample_student_t needs a Student-t spec"));
    };
    if !(nu > 0.0) {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {nu}")));
    }
    let chi = ChiSquared::new(nu).map_err(|e| Error::invalid(e.to_string()))?;
    sample_mixture(spec, n, rng, |rng, _| {
        let w: f64 = chi.sample(rng.lane(Lane::Radial));
        Ok((nu / w).sqrt())
    })
}

/// Dispatches on the family of `spec`.
pub fn sample(spec: &EllipticalSpec, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    match spec.family {
        Family::Gaussian => sample_gaussian(spec, n, rng),
        Family::StudentT { .. } => sample_student_t(spec, n, rng),
    }
}

/// Generic stochastic representation `μ + ξ·A·u`, `u = g/‖g‖` uniform on the
/// unit sphere of `R^q`, `ξ` drawn by `xi_sampler` from the radial lane.
pub fn sample_elliptical_generic<F>(
    mu: &DVector<f64>,
    a: &DMatrix<f64>,
    mut xi_sampler: F,
    n: usize,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>>
where
    F: FnMut(&mut ChaCha20Rng) -> f64,
{
    if a.ncols() == 0 {
        return Err(Error::invalid("scatter factor must have q >= 1 columns"));
    }
    let spec = EllipticalSpec::new(
        Family::Gaussian,
        mu.iter().copied().collect(),
        ScatterFactor::Dense(a.clone()),
    )?;
    sample_mixture(&spec, n, rng, |rng, g| {
        let xi = xi_sampler(rng.lane(Lane::Radial));
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::invalid(format!("radial sampler returned {xi}")));
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(xi / norm)
    })
}
