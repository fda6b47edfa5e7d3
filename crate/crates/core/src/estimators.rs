//! Factor-number criteria.
//!
//! MKER and MKTCR act on the spectrum of the sample Kendall's tau matrix;
//! ER, GR and TCR act on the spectrum of the second-moment matrix
//! `ỸᵀỸ/(NT)` of the (demeaned) panel. All five use the regularized
//! eigenvalues `λ̂_j` of [`EigenSpectrum`]; ties in the argmax go to the
//! smallest index.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kendall::sample_kendall_tau;
use crate::panel::{double_demean, DataPanel};
use crate::spectrum::{build_spectrum, eigenvalues_sym, EigenSpectrum};

pub const DEFAULT_K_MAX: usize = 8;
pub const DEFAULT_C: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mker,
    Mktcr,
    Er,
    Gr,
    Tcr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gr, Method::Er, Method::Mker, Method::Tcr, Method::Mktcr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mker => "mker",
            Method::Mktcr => "mktcr",
            Method::Er => "er",
            Method::Gr => "gr",
            Method::Tcr => "tcr",
        }
    }

    /// Whether the method reads the Kendall's tau spectrum (as opposed to the
    /// covariance spectrum).
    pub fn uses_kendall(self) -> bool {
        matches!(self, Method::Mker | Method::Mktcr)
    }

    /// Smallest retained spectrum length usable with `k_max`.
    pub fn required_len(self, k_max: usize) -> usize {
        match self {
            Method::Gr => k_max + 2,
            _ => k_max + 1,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mker" => Ok(Method::Mker),
            "mktcr" => Ok(Method::Mktcr),
            "er" => Ok(Method::Er),
            "gr" => Ok(Method::Gr),
            "tcr" => Ok(Method::Tcr),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected mker, mktcr, er, gr or tcr)"
            ))),
        }
    }
}

/// Parses a comma-separated method list such as `mker,er`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::invalid("empty method list"));
    }
    Ok(methods)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demean {
    None,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub k_max: usize,
    pub c: f64,
    pub allow_zero: bool,
    pub demean: Demean,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::new(Method::Mker)
    }
}

impl EstimatorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            k_max: DEFAULT_K_MAX,
            c: DEFAULT_C,
            allow_zero: false,
            demean: Demean::Double,
        }
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_allow_zero(mut self, allow_zero: bool) -> Self {
        self.allow_zero = allow_zero;
        self
    }

    pub fn with_demean(mut self, demean: Demean) -> Self {
        self.demean = demean;
        self
    }

    /// Short label: the method name, with any non-default settings appended.
    pub fn label(&self) -> String {
        let mut extras = Vec::new();
        if self.k_max != DEFAULT_K_MAX {
            extras.push(format!("kmax={}", self.k_max));
        }
        if self.c != DEFAULT_C {
            extras.push(format!("c={}", self.c));
        }
        if self.allow_zero {
            extras.push("zero".to_string());
        }
        if self.demean == Demean::None {
            extras.push("raw".to_string());
        }
        if extras.is_empty() {
            self.method.name().to_string()
        } else {
            format!("{}[{}]", self.method.name(), extras.join(","))
        }
    }

    fn first_index(&self) -> usize {
        usize::from(!self.allow_zero)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub r_hat: usize,
    /// Criterion values for `j = first..=k_max`, `first` being 0 with
    /// `allow_zero` and 1 otherwise.
    pub ratio_series: Vec<f64>,
    pub spectrum: EigenSpectrum,
    pub method: Method,
    pub first_index: usize,
}

fn check_len(spectrum: &EigenSpectrum, method: Method, k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let needed = method.required_len(k_max);
    if spectrum.len() < needed {
        return Err(Error::SpectrumTooShort {
            needed,
            available: spectrum.len(),
        });
    }
    Ok(())
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn run_criterion<F>(spectrum: &EigenSpectrum, config: &EstimatorConfig, method: Method, criterion: F) -> Result<EstimationResult>
where
    F: Fn(&EigenSpectrum, usize) -> f64,
{
    check_len(spectrum, method, config.k_max)?;
    let first = config.first_index();
    let ratio_series: Vec<f64> = (first..=config.k_max).map(|j| criterion(spectrum, j)).collect();
    if let Some(bad) = ratio_series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "{method} criterion is not finite at j = {}",
            bad + first
        )));
    }
    Ok(EstimationResult {
        r_hat: argmax(&ratio_series) + first,
        ratio_series,
        spectrum: spectrum.clone(),
        method,
        first_index: first,
    })
}

/// `λ̂_j / λ̂_{j+1}`.
fn eigenvalue_ratio(s: &EigenSpectrum, j: usize) -> f64 {
    s.lambda_hat(j) / s.lambda_hat(j + 1)
}

/// `ln(1 + λ̂_j/V_{j−1}) / ln(1 + λ̂_{j+1}/V_j)`.
fn transformed_contribution_ratio(s: &EigenSpectrum, j: usize) -> f64 {
    let j = j as isize;
    let num = (s.lambda_hat(j as usize) / s.tail_sum(j - 1)).ln_1p();
    let den = (s.lambda_hat(j as usize + 1) / s.tail_sum(j)).ln_1p();
    num / den
}

/// `ln(1 + λ̂_j/V_j) / ln(1 + λ̂_{j+1}/V_{j+1})`.
fn growth_ratio(s: &EigenSpectrum, j: usize) -> f64 {
    let j = j as isize;
    let num = (s.lambda_hat(j as usize) / s.tail_sum(j)).ln_1p();
    let den = (s.lambda_hat(j as usize + 1) / s.tail_sum(j + 1)).ln_1p();
    num / den
}

/// Kendall's tau eigenvalue ratio.
pub fn mker(spectrum: &EigenSpectrum, config: &EstimatorConfig) -> Result<EstimationResult> {
    run_criterion(spectrum, config, Method::Mker, eigenvalue_ratio)
}

/// Kendall's tau transformed contribution ratio.
pub fn mktcr(spectrum: &EigenSpectrum, config: &EstimatorConfig) -> Result<EstimationResult> {
    run_criterion(spectrum, config, Method::Mktcr, transformed_contribution_ratio)
}

/// Eigenvalue ratio on the covariance spectrum.
pub fn er_baseline(spectrum: &EigenSpectrum, config: &EstimatorConfig) -> Result<EstimationResult> {
    run_criterion(spectrum, config, Method::Er, eigenvalue_ratio)
}

/// Growth ratio on the covariance spectrum.
pub fn gr_baseline(spectrum: &EigenSpectrum, config: &EstimatorConfig) -> Result<EstimationResult> {
    run_criterion(spectrum, config, Method::Gr, growth_ratio)
}

/// Transformed contribution ratio on the covariance spectrum.
pub fn tcr_baseline(spectrum: &EigenSpectrum, config: &EstimatorConfig) -> Result<EstimationResult> {
    run_criterion(spectrum, config, Method::Tcr, transformed_contribution_ratio)
}

/// Applies the criterion named by `config.method` to `spectrum`.
pub fn apply_criterion(spectrum: &EigenSpectrum, config: &EstimatorConfig) -> Result<EstimationResult> {
    match config.method {
        Method::Mker => mker(spectrum, config),
        Method::Mktcr => mktcr(spectrum, config),
        Method::Er => er_baseline(spectrum, config),
        Method::Gr => gr_baseline(spectrum, config),
        Method::Tcr => tcr_baseline(spectrum, config),
    }
}

/// Second-moment matrix `ỸỸᵀ/(NT)` or `ỸᵀỸ/(NT)`, whichever is smaller.
pub fn covariance_gram(panel: &DataPanel) -> DMatrix<f64> {
    let y = panel.values();
    let scale = 1.0 / (panel.n() * panel.t()) as f64;
    let mut g = if panel.t() <= panel.n() {
        y * y.transpose()
    } else {
        y.transpose() * y
    };
    g *= scale;
    // Exact symmetry for the eigensolver.
    let k = g.nrows();
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Raw (unregularized) spectra of one panel, computed on first use so that
/// several configurations can share one eigendecomposition.
#[derive(Debug, Clone)]
pub struct PanelSpectra {
    panel: DataPanel,
    demeaned: Option<DataPanel>,
    kendall: [Option<Vec<f64>>; 2],
    covariance: [Option<Vec<f64>>; 2],
}

impl PanelSpectra {
    pub fn new(panel: DataPanel) -> Result<Self> {
        if panel.has_missing() {
            return Err(Error::MissingValues(
                "estimation requires an imputed panel".into(),
            ));
        }
        Ok(Self {
            panel,
            demeaned: None,
            kendall: [None, None],
            covariance: [None, None],
        })
    }

    pub fn panel(&self) -> &DataPanel {
        &self.panel
    }

    fn retain(&self) -> usize {
        self.panel.n().min(self.panel.t())
    }

    fn prepared(&mut self, demean: Demean) -> Result<&DataPanel> {
        match demean {
            Demean::None => Ok(&self.panel),
            Demean::Double => {
                if self.demeaned.is_none() {
                    self.demeaned = Some(double_demean(&self.panel)?);
                }
                Ok(self.demeaned.as_ref().expect("set above"))
            }
        }
    }

    /// Descending raw eigenvalues of the matrix `method` reads.
    pub fn raw(&mut self, method: Method, demean: Demean) -> Result<&[f64]> {
        let slot = usize::from(demean == Demean::Double);
        let retain = self.retain();
        let cached = if method.uses_kendall() {
            self.kendall[slot].is_some()
        } else {
            self.covariance[slot].is_some()
        };
        if !cached {
            let panel = self.prepared(demean)?;
            let values = if method.uses_kendall() {
                let k = sample_kendall_tau(panel)?;
                eigenvalues_sym(k.matrix(), Some(retain))?
            } else {
                eigenvalues_sym(&covariance_gram(panel), Some(retain))?
            };
            if method.uses_kendall() {
                self.kendall[slot] = Some(values);
            } else {
                self.covariance[slot] = Some(values);
            }
        }
        let out = if method.uses_kendall() {
            &self.kendall[slot]
        } else {
            &self.covariance[slot]
        };
        Ok(out.as_deref().expect("computed above"))
    }

    pub fn spectrum(&mut self, config: &EstimatorConfig) -> Result<EigenSpectrum> {
        let (n, t) = (self.panel.n(), self.panel.t());
        let retain = self.retain();
        let raw = self.raw(config.method, config.demean)?;
        build_spectrum(raw, n, t, config.c, retain)
    }

    pub fn estimate(&mut self, config: &EstimatorConfig) -> Result<EstimationResult> {
        if config.k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        let needed = config.method.required_len(config.k_max);
        if self.retain() < needed {
            return Err(Error::SpectrumTooShort {
                needed,
                available: self.retain(),
            });
        }
        let spectrum = self.spectrum(config)?;
        apply_criterion(&spectrum, config)
    }
}

/// End-to-end estimate: demean per `config`, build the method's matrix,
/// extract its spectrum and apply the criterion.
pub fn estimate(panel: &DataPanel, config: &EstimatorConfig) -> Result<EstimationResult> {
    PanelSpectra::new(panel.clone())?.estimate(config)
}
