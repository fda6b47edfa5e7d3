//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use kfactor::elliptical::sample;
use kfactor::{DataPanel, EllipticalSpec, Family, RngStream};
use nalgebra::DMatrix;

/// Kendall's tau by a plain double loop over all pairs.
pub fn brute_force_kendall(y: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, n) = (y.nrows(), y.ncols());
    let mut k = DMatrix::zeros(n, n);
    let mut count = 0usize;
    for s in 0..t {
        for u in s + 1..t {
            let d: Vec<f64> = (0..n).map(|i| y[(s, i)] - y[(u, i)]).collect();
            let sq: f64 = d.iter().map(|v| v * v).sum();
            if sq == 0.0 {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    k[(a, b)] += d[a] * d[b] / sq;
                }
            }
            count += 1;
        }
    }
    k / count as f64
}

/// Cyclic Jacobi rotations; eigenvalues in descending order.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// `E[λ_j g_j² / Σ λ_i g_i²]` by quadrature of
/// `∫₀^∞ λ_j (1+2λ_j s)^{-3/2} Π_{i≠j} (1+2λ_i s)^{-1/2} ds`.
pub fn kendall_eigenvalue_quadrature(lambda: &[f64], j: usize) -> f64 {
    let f = |s: f64| {
        let mut v = lambda[j] * (1.0 + 2.0 * lambda[j] * s).powf(-1.5);
        for (i, l) in lambda.iter().enumerate() {
            if i != j {
                v *= (1.0 + 2.0 * l * s).powf(-0.5);
            }
        }
        v
    };
    // s = x / (1 - x) maps (0, 1) onto (0, ∞); composite Simpson in x.
    let g = |x: f64| {
        if x >= 1.0 {
            0.0
        } else {
            let s = x / (1.0 - x);
            f(s) / ((1.0 - x) * (1.0 - x))
        }
    };
    let m = 2_000_000;
    let h = 1.0 / m as f64;
    let mut acc = g(0.0) + g(1.0);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(k as f64 * h);
    }
    acc * h / 3.0
}

/// A `t × n` panel of i.i.d. Student-t(2) rows.
pub fn random_panel(t: usize, n: usize, seed: u64, stream: u64) -> DataPanel {
    let spec = EllipticalSpec::standard(Family::StudentT { nu: 2.0 }, n).unwrap();
    DataPanel::new(sample(&spec, t, &mut RngStream::new(seed, stream)).unwrap()).unwrap()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    jacobi_eigenvalues(&sym).iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
