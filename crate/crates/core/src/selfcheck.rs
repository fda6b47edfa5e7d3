//! Fast invariant checks run by `kfactor selfcheck`.

use nalgebra::DMatrix;

use crate::elliptical::{sample, EllipticalSpec, Family, RngStream};
use crate::error::Result;
use crate::estimators::{estimate, EstimatorConfig, Method};
use crate::kendall::{sample_kendall_tau, sample_kendall_tau_parallel, KendallTauMatrix};
use crate::montecarlo::{build_scenario, generate_panel};
use crate::panel::{double_demean, DataPanel};
use crate::spectrum::{eigenvalues_sym, reconstruction_error};

/// Deliberate corruption used to prove the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    Symmetry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckOutcome>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status}  {:<28} {}\n", c.name, c.detail));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

fn gaussian_panel(t: usize, n: usize, seed: u64, stream: u64) -> Result<DataPanel> {
    let spec = EllipticalSpec::standard(Family::StudentT { nu: 2.0 }, n)?;
    DataPanel::new(sample(&spec, t, &mut RngStream::new(seed, stream))?)
}

fn brute_force(panel: &DataPanel) -> DMatrix<f64> {
    let (t, n) = (panel.t(), panel.n());
    let y = panel.values();
    let mut k = DMatrix::zeros(n, n);
    let mut count = 0usize;
    for s in 0..t {
        for u in s + 1..t {
            let d = (y.row(s) - y.row(u)).transpose();
            let sq = d.norm_squared();
            if sq > 0.0 {
                k += &d * d.transpose() / sq;
                count += 1;
            }
        }
    }
    k / count as f64
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Runs every check with data drawn from `seed`.
pub fn run_selfcheck(seed: u64, fault: Fault) -> Result<SelfCheckReport> {
    let mut checks = Vec::new();

    let mut matrices: Vec<(DataPanel, KendallTauMatrix)> = Vec::new();
    for k in 0..20 {
        let p = gaussian_panel(12 + k, 6 + k % 5, seed, k as u64)?;
        let mut m = sample_kendall_tau(&p)?;
        if fault == Fault::Symmetry {
            m.corrupt_symmetry();
        }
        matrices.push((p, m));
    }

    let worst_asym = matrices.iter().map(|(_, m)| m.asymmetry()).fold(0.0, f64::max);
    checks.push(outcome("kendall symmetry", worst_asym <= 1e-12, format!("max |K - K^T| = {worst_asym:.3e}")));

    let worst_trace = matrices.iter().map(|(_, m)| (m.trace() - 1.0).abs()).fold(0.0, f64::max);
    checks.push(outcome("kendall unit trace", worst_trace <= 1e-10, format!("max |tr - 1| = {worst_trace:.3e}")));

    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    for (_, m) in &matrices {
        let sym = (m.matrix() + m.matrix().transpose()) * 0.5;
        let ev = eigenvalues_sym(&sym, None)?;
        min_eig = min_eig.min(*ev.last().expect("nonempty"));
        max_eig = max_eig.max(ev[0]);
    }
    checks.push(outcome(
        "kendall psd and norm",
        min_eig >= -1e-10 && max_eig <= 1.0 + 1e-10,
        format!("eigenvalues within [{min_eig:.3e}, {max_eig:.6}]"),
    ));

    let worst_oracle = matrices
        .iter()
        .map(|(p, m)| (m.matrix() - brute_force(p)).amax())
        .fold(0.0, f64::max);
    checks.push(outcome("kendall pair oracle", worst_oracle <= 1e-12, format!("max deviation {worst_oracle:.3e}")));

    let big = gaussian_panel(120, 40, seed, 99)?;
    let serial = sample_kendall_tau(&big)?;
    let identical = [2, 3, 8].iter().try_fold(true, |ok, w| {
        Ok::<_, crate::Error>(ok && sample_kendall_tau_parallel(&big, *w)? == serial)
    })?;
    checks.push(outcome("kendall parallel determinism", identical, "workers 2, 3, 8 vs serial".into()));

    let worst_rec = matrices
        .iter()
        .take(5)
        .map(|(_, m)| reconstruction_error(&((m.matrix() + m.matrix().transpose()) * 0.5)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(outcome("eigen reconstruction", worst_rec <= 1e-8, format!("relative residual {worst_rec:.3e}")));

    let p = gaussian_panel(30, 9, seed, 7)?;
    let once = double_demean(&p)?;
    let twice = double_demean(&once)?;
    let drift = (once.values() - twice.values()).amax() / once.values().amax().max(1e-300);
    let y = once.values();
    let margin = (0..y.nrows())
        .map(|t| y.row(t).sum().abs())
        .chain((0..y.ncols()).map(|i| y.column(i).sum().abs()))
        .fold(0.0, f64::max);
    let bound = 1e-9 * p.values().amax() * p.t().max(p.n()) as f64;
    checks.push(outcome(
        "double demean",
        drift <= 1e-12 && margin <= bound,
        format!("idempotence drift {drift:.3e}, max margin {margin:.3e}"),
    ));

    let spec = build_scenario("A", Some(Family::cauchy()))?.with_dims(40, 40);
    let panel = generate_panel(&spec, &mut RngStream::new(seed, 0))?;
    let again = generate_panel(&spec, &mut RngStream::new(seed, 0))?;
    checks.push(outcome("sampler determinism", panel == again, "identical panels for equal streams".into()));

    let shift: Vec<f64> = (0..panel.n()).map(|i| i as f64 * 0.37 - 3.0).collect();
    let moved = DataPanel::new(DMatrix::from_fn(panel.t(), panel.n(), |t, i| {
        17.0 * panel.values()[(t, i)] + shift[i]
    }))?;
    let mut invariant = true;
    for method in [Method::Mker, Method::Mktcr] {
        let cfg = EstimatorConfig::new(method);
        let a = estimate(&panel, &cfg)?;
        let b = estimate(&panel, &cfg)?;
        let c = estimate(&moved, &cfg)?;
        invariant &= a == b && a.r_hat == c.r_hat;
    }
    checks.push(outcome("estimator determinism", invariant, "repeat and scale/shift of MKER, MKTCR".into()));

    Ok(SelfCheckReport { checks })
}
