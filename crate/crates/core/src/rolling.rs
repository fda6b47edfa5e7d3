//! Rolling-window factor-number series: at each `t ≥ W` the estimators run
//! on rows `t−W+1..=t` only, demeaned within the window.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, PanelSpectra};
use crate::panel::DataPanel;

pub const DEFAULT_WINDOW: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct RollingPoint {
    pub time_label: String,
    /// 0-based index of the last row of the window.
    pub end_index: usize,
    /// One estimate per configuration, in configuration order.
    pub r_hat: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingResult {
    pub window: usize,
    /// 0-based index of the first row that closes a full window (`W − 1`).
    pub start_index: usize,
    pub labels: Vec<String>,
    pub points: Vec<RollingPoint>,
}

impl RollingResult {
    /// Flattened `(time_label, method label, r̂)` triples.
    pub fn series(&self) -> Vec<(String, String, usize)> {
        let mut out = Vec::with_capacity(self.points.len() * self.labels.len());
        for p in &self.points {
            for (label, r) in self.labels.iter().zip(&p.r_hat) {
                out.push((p.time_label.clone(), label.clone(), *r));
            }
        }
        out
    }

    /// The estimates of one configuration over time.
    pub fn column(&self, idx: usize) -> Vec<usize> {
        self.points.iter().map(|p| p.r_hat[idx]).collect()
    }

    /// CSV with a `time_label` column and one integer column per estimator.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io_err = |e: csv::Error| Error::Io {
            path: Default::default(),
            source: std::io::Error::other(e),
        };
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["time_label".to_string()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header).map_err(io_err)?;
        for p in &self.points {
            let mut rec = vec![p.time_label.clone()];
            rec.extend(p.r_hat.iter().map(usize::to_string));
            out.write_record(&rec).map_err(io_err)?;
        }
        out.flush().map_err(|source| Error::Io {
            path: Default::default(),
            source,
        })
    }
}

/// Estimates on every full window of `window` consecutive rows. Windows are
/// evaluated on `workers` threads; the output is ordered by time regardless.
pub fn rolling_estimate(
    panel: &DataPanel,
    window: usize,
    configs: &[EstimatorConfig],
    workers: usize,
) -> Result<RollingResult> {
    if configs.is_empty() {
        return Err(Error::invalid("no estimators selected"));
    }
    if panel.has_missing() {
        return Err(Error::MissingValues(
            "rolling estimation requires an imputed panel".into(),
        ));
    }
    if window > panel.t() {
        return Err(Error::invalid(format!(
            "window {window} exceeds the panel length T = {}",
            panel.t()
        )));
    }
    let min_rows = configs.iter().map(|c| c.k_max + 2).max().unwrap_or(0);
    let min_len = configs
        .iter()
        .map(|c| c.method.required_len(c.k_max))
        .max()
        .unwrap_or(0);
    if window < min_rows || window.min(panel.n()) < min_len {
        return Err(Error::invalid(format!(
            "window {window} too small: need at least {min_rows} rows and min(N, window) >= {min_len}"
        )));
    }
    if workers == 0 {
        return Err(Error::invalid("workers must be at least 1"));
    }

    let evaluate = |end: usize| -> Result<RollingPoint> {
        let rows = panel.rows(end + 1 - window..end + 1)?;
        let mut spectra = PanelSpectra::new(rows)?;
        let r_hat = configs
            .iter()
            .map(|cfg| spectra.estimate(cfg).map(|r| r.r_hat))
            .collect::<Result<Vec<_>>>()?;
        Ok(RollingPoint {
            time_label: panel.time_label(end),
            end_index: end,
            r_hat,
        })
    };

    let ends = window - 1..panel.t();
    let points: Vec<RollingPoint> = if workers == 1 {
        ends.map(evaluate).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
        pool.install(|| ends.into_par_iter().map(evaluate).collect::<Result<_>>())?
    };

    Ok(RollingResult {
        window,
        start_index: window - 1,
        labels: configs.iter().map(EstimatorConfig::label).collect(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate, Method};
    use nalgebra::DMatrix;

    fn toy_panel(t: usize, n: usize) -> DataPanel {
        DataPanel::new(DMatrix::from_fn(t, n, |r, c| {
            ((r * 31 + c * 17) % 13) as f64 + 0.1 * ((r * c) % 7) as f64
        }))
        .unwrap()
    }

    #[test]
    fn single_window_equals_full_estimate() {
        let p = toy_panel(20, 12);
        let cfg = EstimatorConfig::new(Method::Mker).with_k_max(4);
        let res = rolling_estimate(&p, 20, &[cfg], 1).unwrap();
        assert_eq!(res.points.len(), 1);
        assert_eq!(res.points[0].r_hat[0], estimate(&p, &cfg).unwrap().r_hat);
        assert_eq!(res.points[0].time_label, "20");
    }

    #[test]
    fn window_bounds_are_checked() {
        let p = toy_panel(20, 12);
        let cfg = EstimatorConfig::new(Method::Er).with_k_max(4);
        assert!(rolling_estimate(&p, 21, &[cfg], 1).is_err());
        assert!(rolling_estimate(&p, 5, &[cfg], 1).is_err());
        assert!(rolling_estimate(&p, 10, &[], 1).is_err());
    }

    #[test]
    fn csv_has_one_row_per_window() {
        let p = toy_panel(25, 10);
        let cfgs = [
            EstimatorConfig::new(Method::Er).with_k_max(3),
            EstimatorConfig::new(Method::Mktcr).with_k_max(3),
        ];
        let res = rolling_estimate(&p, 12, &cfgs, 2).unwrap();
        assert_eq!(res.points.len(), 25 - 12 + 1);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 14);
        assert!(text.starts_with("time_label,er[kmax=3],mktcr[kmax=3]\n12,"));
        assert_eq!(res.series().len(), 28);
    }
}
