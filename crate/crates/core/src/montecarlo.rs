//! Simulation design, replication runner and `x(y|z)` report tables.
//!
//! The data-generating process is
//!
//! ```text
//! y_it = Σ_j λ_ij F_jt + √θ u_it,   u_it = √((1−ρ²)/(1+2Jβ²)) e_it,
//! e_it = ρ e_{i,t−1} + (1−β) v_it + β Σ_{l=max(i−J,1)}^{min(i+J,N)} v_lt,
//! ```
//!
//! with `(F_tᵀ, v_tᵀ)` jointly elliptical with diagonal scatter `D`,
//! `λ_ij ~ N(0, 1)` redrawn per replication and `e_{i,0} = 0`. The
//! neighbour sum includes `l = i`, which makes `u_it` unit-variance away
//! from the cross-sectional boundary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptical::{sample, EllipticalSpec, Family, Lane, RngStream, ScatterFactor};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Method, PanelSpectra};
use crate::panel::DataPanel;

pub const DEFAULT_BURN_IN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub r: usize,
    pub theta: f64,
    pub rho: f64,
    pub beta: f64,
    /// Neighbourhood half-width `J`.
    pub neighbors: usize,
    pub family: Family,
    /// Diagonal of the joint scatter of `(F_t, v_t)`, length `N + r`.
    pub scatter_diag: Vec<f64>,
    pub n: usize,
    pub t: usize,
    pub k_max: usize,
    pub reps: usize,
    pub burn_in: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("scenario {}: {m}", self.name)));
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if self.n < 2 || self.t < 2 {
            return bad(format!("need N, T >= 2, got N = {}, T = {}", self.n, self.t));
        }
        if self.scatter_diag.len() != self.n + self.r {
            return bad(format!(
                "scatter diagonal has length {}, expected N + r = {}",
                self.scatter_diag.len(),
                self.n + self.r
            ));
        }
        if self.scatter_diag.iter().any(|d| !(*d > 0.0)) {
            return bad("scatter diagonal must be positive".into());
        }
        if let Family::StudentT { nu } = self.family {
            if !(nu > 0.0) {
                return bad(format!("degrees of freedom must be positive, got {nu}"));
            }
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_dims(mut self, n: usize, t: usize) -> Self {
        let factor_part: Vec<f64> = self.scatter_diag.iter().take(self.r).copied().collect();
        self.n = n;
        self.t = t;
        self.scatter_diag = factor_part;
        self.scatter_diag.resize(n + self.r, 1.0);
        if let Some(rule) = neighbor_rule(&self.name) {
            self.neighbors = rule(n);
        }
        self
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Sets the SNR knob of the weak-factor (3/3) or dominant-factor (5/5)
    /// scenarios.
    pub fn with_snr(mut self, snr: f64) -> Result<Self> {
        let idx = snr_index(&self.name).ok_or_else(|| {
            Error::invalid(format!("scenario {} has no SNR parameter", self.name))
        })?;
        if !(snr > 0.0) {
            return Err(Error::invalid(format!("SNR must be positive, got {snr}")));
        }
        self.scatter_diag[idx] = snr;
        Ok(self)
    }

    pub fn snr(&self) -> Option<f64> {
        snr_index(&self.name).map(|i| self.scatter_diag[i])
    }

    /// Human-readable distribution name.
    pub fn family_name(&self) -> String {
        family_name(self.family)
    }

    fn noise_scale(&self) -> f64 {
        let j = self.neighbors as f64;
        ((1.0 - self.rho * self.rho) / (1.0 + 2.0 * j * self.beta * self.beta)).sqrt()
    }
}

pub fn family_name(family: Family) -> String {
    match family {
        Family::Gaussian => "gaussian".into(),
        Family::StudentT { nu: 1.0 } => "cauchy".into(),
        Family::StudentT { nu } => format!("t{nu}"),
    }
}

/// `gaussian`, `cauchy`, or `t<ν>` (e.g. `t3`).
pub fn parse_family(s: &str) -> Result<Family> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" | "normal" => Ok(Family::Gaussian),
        "cauchy" => Ok(Family::cauchy()),
        other => other
            .strip_prefix('t')
            .and_then(|nu| nu.parse::<f64>().ok())
            .filter(|nu| *nu > 0.0)
            .map(|nu| Family::StudentT { nu })
            .ok_or_else(|| Error::invalid(format!("unknown distribution {other:?}"))),
    }
}

fn base_id(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

fn snr_index(name: &str) -> Option<usize> {
    match base_id(name) {
        "B3" | "C3" => Some(2),
        "B5" | "C5" => Some(0),
        _ => None,
    }
}

fn neighbor_rule(name: &str) -> Option<fn(usize) -> usize> {
    match base_id(name) {
        "A" => None,
        _ => Some(|n| 10.max(n / 20)),
    }
}

/// Parameter sweeps attached to a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Dims(Vec<usize>),
    Snr(Vec<f64>),
    KMax(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTemplate {
    pub id: &'static str,
    pub description: &'static str,
    pub default_dim: usize,
    pub sweep: Sweep,
}

impl ScenarioTemplate {
    /// Concrete scenario at the default size. `family` only applies to A.
    pub fn build(&self, family: Option<Family>) -> Result<ScenarioSpec> {
        build_scenario(self.id, family)
    }
}

const DIMS_25_200: [usize; 8] = [25, 50, 75, 100, 125, 150, 175, 200];
const SNR_WEAK: [f64; 7] = [0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4];
const SNR_DOMINANT: [f64; 6] = [1.0, 3.0, 7.0, 10.0, 15.0, 20.0];
const KMAX_SWEEP: [usize; 6] = [8, 12, 16, 20, 25, 30];

/// All simulation scenarios with their default size and sweep.
pub fn scenario_catalog() -> Vec<ScenarioTemplate> {
    let dims = Sweep::Dims(DIMS_25_200.to_vec());
    vec![
        ScenarioTemplate { id: "A", description: "i.i.d. elliptical factors and errors", default_dim: 100, sweep: dims.clone() },
        ScenarioTemplate { id: "B1", description: "serially and cross-sectionally correlated errors, Gaussian", default_dim: 100, sweep: dims.clone() },
        ScenarioTemplate { id: "B2", description: "weak factors (theta = 6), Gaussian", default_dim: 100, sweep: dims.clone() },
        ScenarioTemplate { id: "B3", description: "strong and weak factors, Gaussian", default_dim: 100, sweep: Sweep::Snr(SNR_WEAK.to_vec()) },
        ScenarioTemplate { id: "B4", description: "choice of k_max, Gaussian", default_dim: 100, sweep: Sweep::KMax(KMAX_SWEEP.to_vec()) },
        ScenarioTemplate { id: "B5", description: "dominant factor with two factors, Gaussian", default_dim: 100, sweep: Sweep::Snr(SNR_DOMINANT.to_vec()) },
        ScenarioTemplate { id: "C1", description: "serially and cross-sectionally correlated errors, t3", default_dim: 150, sweep: dims },
        ScenarioTemplate { id: "C2", description: "weak factors (theta = 6), t3", default_dim: 150, sweep: Sweep::Dims((4..=12).map(|k| 25 * k).collect()) },
        ScenarioTemplate { id: "C3", description: "strong and weak factors, t3", default_dim: 150, sweep: Sweep::Snr(SNR_WEAK.to_vec()) },
        ScenarioTemplate { id: "C4", description: "choice of k_max, t3", default_dim: 150, sweep: Sweep::KMax(KMAX_SWEEP.to_vec()) },
        ScenarioTemplate { id: "C5", description: "dominant factor with two factors, t3", default_dim: 150, sweep: Sweep::Snr(SNR_DOMINANT.to_vec()) },
    ]
}

/// Named scenario at its default size. `family` is required to be `None`
/// for the B and C scenarios, whose distribution is fixed.
pub fn build_scenario(id: &str, family: Option<Family>) -> Result<ScenarioSpec> {
    let id = id.trim().to_ascii_uppercase();
    let template = scenario_catalog()
        .into_iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Error::invalid(format!("unknown scenario {id:?}")))?;
    let n = template.default_dim;
    let t3 = Family::StudentT { nu: 3.0 };

    let (r, theta, rho, beta, fam) = match id.as_str() {
        "A" => (3, 1.0, 0.0, 0.0, family.unwrap_or(Family::Gaussian)),
        _ if family.is_some() => {
            return Err(Error::invalid(format!(
                "scenario {id} fixes its distribution; a distribution applies to scenario A only"
            )))
        }
        "B1" | "B3" | "B4" => (3, 1.0, 0.5, 0.2, Family::Gaussian),
        "B2" => (3, 6.0, 0.5, 0.2, Family::Gaussian),
        "B5" => (2, 1.0, 0.5, 0.2, Family::Gaussian),
        "C1" | "C3" | "C4" => (3, 1.0, 0.5, 0.2, t3),
        "C2" => (3, 6.0, 0.5, 0.2, t3),
        "C5" => (2, 1.0, 0.5, 0.2, t3),
        _ => unreachable!("catalog ids are exhaustive"),
    };
    let mut spec = ScenarioSpec {
        name: id.clone(),
        r,
        theta,
        rho,
        beta,
        neighbors: 0,
        family: fam,
        scatter_diag: vec![1.0; n + r],
        n,
        t: n,
        k_max: 8,
        reps: 1000,
        burn_in: DEFAULT_BURN_IN,
    }
    .with_dims(n, n);
    if let Sweep::Snr(values) = &template.sweep {
        spec = spec.with_snr(values[0])?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Draws one `T × N` panel from the scenario's design.
pub fn generate_panel(spec: &ScenarioSpec, rng: &mut RngStream) -> Result<DataPanel> {
    spec.validate()?;
    let (n, t, r) = (spec.n, spec.t, spec.r);
    let total = t + spec.burn_in;

    let loadings = DMatrix::from_fn(n, r, |_, _| rng.standard_normal(Lane::Auxiliary));
    let joint = EllipticalSpec::new(
        spec.family,
        vec![0.0; n + r],
        ScatterFactor::from_diagonal_scatter(&spec.scatter_diag),
    )?;
    let draws = sample(&joint, total, rng)?;

    let j = spec.neighbors;
    let (rho, beta) = (spec.rho, spec.beta);
    let noise = spec.theta.sqrt() * spec.noise_scale();
    let mut e = vec![0.0; n];
    let mut y = DMatrix::zeros(t, n);
    for step in 0..total {
        let v = |i: usize| draws[(step, r + i)];
        for (i, e_i) in e.iter_mut().enumerate() {
            let lo = i.saturating_sub(j);
            let hi = (i + j).min(n - 1);
            let neighbours: f64 = (lo..=hi).map(v).sum();
            *e_i = rho * *e_i + (1.0 - beta) * v(i) + beta * neighbours;
        }
        if step >= spec.burn_in {
            let row = step - spec.burn_in;
            for i in 0..n {
                let common: f64 = (0..r).map(|f| loadings[(i, f)] * draws[(step, f)]).sum();
                y[(row, i)] = common + noise * e[i];
            }
        }
    }
    DataPanel::new(y)
}

/// `x(y|z)` statistics of one estimator over all replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCell {
    pub label: String,
    pub method: Method,
    pub k_max: usize,
    pub c: f64,
    pub estimates: Vec<usize>,
    pub mean: f64,
    pub under: usize,
    pub over: usize,
    pub exact: usize,
}

impl MethodCell {
    fn from_estimates(config: &EstimatorConfig, estimates: Vec<usize>, r: usize) -> Self {
        let under = estimates.iter().filter(|e| **e < r).count();
        let over = estimates.iter().filter(|e| **e > r).count();
        let exact = estimates.len() - under - over;
        let mean = estimates.iter().sum::<usize>() as f64 / estimates.len() as f64;
        Self {
            label: config.label(),
            method: config.method,
            k_max: config.k_max,
            c: config.c,
            estimates,
            mean,
            under,
            over,
            exact,
        }
    }

    pub fn reps(&self) -> usize {
        self.estimates.len()
    }

    pub fn exact_rate(&self) -> f64 {
        self.exact as f64 / self.reps() as f64
    }

    pub fn under_rate(&self) -> f64 {
        self.under as f64 / self.reps() as f64
    }

    pub fn over_rate(&self) -> f64 {
        self.over as f64 / self.reps() as f64
    }

    /// Replication counts per estimated value.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for e in &self.estimates {
            *h.entry(*e).or_insert(0) += 1;
        }
        h
    }

    /// The paper-style cell, e.g. `2.965(55|61)`.
    pub fn cell(&self) -> String {
        format!("{:.3}({}|{})", self.mean, self.under, self.over)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub scenario: ScenarioSpec,
    pub seed: u64,
    pub reps: usize,
    pub cells: Vec<MethodCell>,
}

impl MonteCarloReport {
    pub fn cell(&self, label: &str) -> Option<&MethodCell> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn method(&self, method: Method) -> Option<&MethodCell> {
        self.cells.iter().find(|c| c.method == method)
    }
}

/// Runs `spec.reps` replications; replication `k` draws from
/// `RngStream::new(master_seed, k)`. Every configuration is evaluated on the
/// same panels. The report does not depend on `workers`.
pub fn run_scenario(
    spec: &ScenarioSpec,
    methods: &[EstimatorConfig],
    master_seed: u64,
    workers: usize,
) -> Result<MonteCarloReport> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::invalid("no estimators selected"));
    }
    if workers == 0 {
        return Err(Error::invalid("workers must be at least 1"));
    }
    let retain = spec.n.min(spec.t);
    for cfg in methods {
        let needed = cfg.method.required_len(cfg.k_max);
        if retain < needed {
            return Err(Error::SpectrumTooShort {
                needed,
                available: retain,
            });
        }
    }

    let replicate = |k: usize| -> Result<Vec<usize>> {
        let mut rng = RngStream::new(master_seed, k as u64);
        let panel = generate_panel(spec, &mut rng)?;
        let mut spectra = PanelSpectra::new(panel)?;
        methods
            .iter()
            .map(|cfg| spectra.estimate(cfg).map(|res| res.r_hat))
            .collect()
    };

    let per_rep: Vec<Vec<usize>> = if workers == 1 {
        (0..spec.reps).map(replicate).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
        pool.install(|| (0..spec.reps).into_par_iter().map(replicate).collect::<Result<_>>())?
    };

    let cells = methods
        .iter()
        .enumerate()
        .map(|(m, cfg)| {
            let estimates = per_rep.iter().map(|row| row[m]).collect();
            MethodCell::from_estimates(cfg, estimates, spec.r)
        })
        .collect();
    Ok(MonteCarloReport {
        scenario: spec.clone(),
        seed: master_seed,
        reps: spec.reps,
        cells,
    })
}

/// Writes `scenario,method,N,T,mean,under,over,reps,seed` rows for every
/// cell of every report.
pub fn write_report_csv<W: Write>(reports: &[MonteCarloReport], writer: W) -> Result<()> {
    let io_err = |e: csv::Error| Error::Io {
        path: Default::default(),
        source: std::io::Error::other(e),
    };
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["scenario", "method", "N", "T", "mean", "under", "over", "reps", "seed"])
        .map_err(io_err)?;
    for report in reports {
        let sc = &report.scenario;
        let name = scenario_label(sc);
        for cell in &report.cells {
            out.write_record([
                name.clone(),
                cell.label.clone(),
                sc.n.to_string(),
                sc.t.to_string(),
                format!("{:.3}", cell.mean),
                cell.under.to_string(),
                cell.over.to_string(),
                report.reps.to_string(),
                report.seed.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(|source| Error::Io {
        path: Default::default(),
        source,
    })
}

/// Scenario name with the distribution (A) or SNR (3/5 scenarios) attached.
pub fn scenario_label(spec: &ScenarioSpec) -> String {
    if spec.name == "A" {
        format!("A-{}", spec.family_name())
    } else if let Some(snr) = spec.snr() {
        format!("{}-snr{}", spec.name, snr)
    } else {
        spec.name.clone()
    }
}

/// Aligned text table, one row per report, one `x(y|z)` column per
/// estimator label.
pub fn format_table(reports: &[MonteCarloReport]) -> String {
    let mut labels: Vec<String> = Vec::new();
    for report in reports {
        for cell in &report.cells {
            if !labels.contains(&cell.label) {
                labels.push(cell.label.clone());
            }
        }
    }
    let mut header = vec!["scenario".to_string(), "N".into(), "T".into(), "r".into()];
    header.extend(labels.iter().cloned());
    let mut rows = vec![header];
    for report in reports {
        let sc = &report.scenario;
        let mut row = vec![scenario_label(sc), sc.n.to_string(), sc.t.to_string(), sc.r.to_string()];
        for label in &labels {
            row.push(report.cell(label).map_or_else(|| "-".to_string(), MethodCell::cell));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}
