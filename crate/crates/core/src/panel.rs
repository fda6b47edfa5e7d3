//! Panel container, CSV ingestion, missing-value imputation and the
//! double-demeaning transform that precedes every estimator.
//!
//! A panel is stored as a `T × N` matrix: rows are time points, columns are
//! series. Missing cells hold `NaN` in `values` and `true` in the mask.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MISSING_TOKENS: [&str; 3] = ["", "NA", "NaN"];

#[derive(Debug, Clone, PartialEq)]
pub struct DataPanel {
    values: DMatrix<f64>,
    missing: DMatrix<bool>,
    time_labels: Option<Vec<String>>,
    series_names: Option<Vec<String>>,
    time_header: Option<String>,
}

impl DataPanel {
    /// Builds a complete panel (no missing cells) from a `T × N` matrix.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_dims(values.nrows(), values.ncols())?;
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (t, i) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                t + 1,
                i + 1
            )));
        }
        let missing = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Ok(Self {
            values,
            missing,
            time_labels: None,
            series_names: None,
            time_header: None,
        })
    }

    /// Builds a panel from row-major data, `rows[t][i]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some((idx, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Ragged {
                row: idx + 1,
                expected: n,
                found: row.len(),
            });
        }
        check_dims(t, n)?;
        Self::new(DMatrix::from_fn(t, n, |r, c| rows[r][c]))
    }

    /// Builds a panel where `NaN` cells are treated as missing.
    pub fn with_missing(values: DMatrix<f64>) -> Result<Self> {
        check_dims(values.nrows(), values.ncols())?;
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("infinite value in panel"));
        }
        let missing = values.map(f64::is_nan);
        Ok(Self {
            values,
            missing,
            time_labels: None,
            series_names: None,
            time_header: None,
        })
    }

    pub fn with_time_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.t() {
            return Err(Error::invalid(format!(
                "{} time labels for {} rows",
                labels.len(),
                self.t()
            )));
        }
        self.time_labels = Some(labels);
        Ok(self)
    }

    pub fn with_series_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n() {
            return Err(Error::invalid(format!(
                "{} series names for {} columns",
                names.len(),
                self.n()
            )));
        }
        self.series_names = Some(names);
        Ok(self)
    }

    /// Number of time points (rows).
    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series (columns).
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing_mask(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|m| *m)
    }

    pub fn time_labels(&self) -> Option<&[String]> {
        self.time_labels.as_deref()
    }

    pub fn series_names(&self) -> Option<&[String]> {
        self.series_names.as_deref()
    }

    /// Label of row `t`: the stored time label, or the 1-based row number.
    pub fn time_label(&self, t: usize) -> String {
        match &self.time_labels {
            Some(labels) => labels[t].clone(),
            None => (t + 1).to_string(),
        }
    }

    /// Rows `range` as a new panel, keeping labels and names.
    pub fn rows(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.t() || range.start >= range.end {
            return Err(Error::invalid(format!(
                "row range {}..{} out of bounds for T = {}",
                range.start,
                range.end,
                self.t()
            )));
        }
        let len = range.end - range.start;
        check_dims(len, self.n())?;
        Ok(Self {
            values: self.values.rows(range.start, len).into_owned(),
            missing: self.missing.rows(range.start, len).into_owned(),
            time_labels: self.time_labels.as_ref().map(|l| l[range].to_vec()),
            series_names: self.series_names.clone(),
            time_header: self.time_header.clone(),
        })
    }

    /// Replaces the values, keeping labels; used by the transforms below.
    fn map_values(&self, values: DMatrix<f64>) -> Self {
        Self {
            missing: DMatrix::from_element(values.nrows(), values.ncols(), false),
            values,
            time_labels: self.time_labels.clone(),
            series_names: self.series_names.clone(),
            time_header: self.time_header.clone(),
        }
    }

    fn ensure_complete(&self, op: &str) -> Result<()> {
        if self.has_missing() {
            return Err(Error::MissingValues(format!(
                "{op} requires a complete panel ({} missing cells)",
                self.missing_count()
            )));
        }
        Ok(())
    }

    /// Writes the panel in the same layout it was read from: optional
    /// header row, optional time-label column. Missing cells are written as
    /// `NA`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv_to(BufWriter::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let io_err = |e: csv::Error| Error::Io {
            path: Default::default(),
            source: std::io::Error::other(e),
        };
        if let Some(names) = &self.series_names {
            let mut header = Vec::with_capacity(names.len() + 1);
            if self.time_labels.is_some() {
                header.push(self.time_header.clone().unwrap_or_default());
            }
            header.extend(names.iter().cloned());
            out.write_record(&header).map_err(io_err)?;
        }
        for t in 0..self.t() {
            let mut record = Vec::with_capacity(self.n() + 1);
            if let Some(labels) = &self.time_labels {
                record.push(labels[t].clone());
            }
            for i in 0..self.n() {
                if self.missing[(t, i)] {
                    record.push("NA".to_string());
                } else {
                    record.push(format!("{:?}", self.values[(t, i)]));
                }
            }
            out.write_record(&record).map_err(io_err)?;
        }
        out.flush().map_err(|source| Error::Io {
            path: Default::default(),
            source,
        })
    }
}

fn check_dims(t: usize, n: usize) -> Result<()> {
    if t < 2 || n < 2 {
        return Err(Error::invalid(format!(
            "panel must have at least 2 rows and 2 columns, got {t} x {n}"
        )));
    }
    Ok(())
}

/// Reads a comma-separated panel from `path`.
///
/// Missing cells may be empty, `NA` or `NaN`. Row and column numbers in
/// parse errors are 1-based and refer to the file as written, header and
/// time column included.
pub fn ingest_csv(path: &Path, has_header: bool, has_time_column: bool) -> Result<DataPanel> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_csv_from(BufReader::new(file), has_header, has_time_column)
}

pub fn ingest_csv_from<R: Read>(
    reader: R,
    has_header: bool,
    has_time_column: bool,
) -> Result<DataPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header: Option<Vec<String>> = None;
    let mut labels = Vec::new();
    let mut cells: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for (line_idx, record) in rdr.records().enumerate() {
        let file_row = line_idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: file_row,
            column: 0,
            message: e.to_string(),
        })?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Ragged {
                row: file_row,
                expected,
                found: record.len(),
            });
        }
        if has_header && line_idx == 0 {
            header = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let mut fields = record.iter().enumerate();
        if has_time_column {
            let (_, label) = fields.next().ok_or_else(|| Error::Parse {
                row: file_row,
                column: 1,
                message: "missing time label".into(),
            })?;
            labels.push(label.to_string());
        }
        for (col_idx, field) in fields {
            cells.push(parse_cell(field).ok_or_else(|| Error::Parse {
                row: file_row,
                column: col_idx + 1,
                message: format!("cannot parse {field:?} as a finite number"),
            })?);
        }
        rows += 1;
    }

    let n = width.unwrap_or(0).saturating_sub(usize::from(has_time_column));
    check_dims(rows, n)?;
    let values = DMatrix::from_row_slice(rows, n, &cells);
    let mut panel = DataPanel::with_missing(values)?;
    if has_time_column {
        panel.time_labels = Some(labels);
    }
    if let Some(mut names) = header {
        if has_time_column {
            panel.time_header = Some(names.remove(0));
        }
        panel.series_names = Some(names);
    }
    Ok(panel)
}

fn parse_cell(field: &str) -> Option<f64> {
    if MISSING_TOKENS.contains(&field) {
        return Some(f64::NAN);
    }
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Replaces each missing cell by the mean of the observed cells in its
/// column.
pub fn impute_column_mean(panel: &DataPanel) -> Result<DataPanel> {
    let mut values = panel.values.clone();
    for i in 0..panel.n() {
        let (sum, count) = (0..panel.t())
            .filter(|&t| !panel.missing[(t, i)])
            .fold((0.0, 0usize), |(s, c), t| (s + values[(t, i)], c + 1));
        if count == 0 {
            return Err(Error::invalid(format!(
                "column {} has no observed values",
                i + 1
            )));
        }
        let mean = sum / count as f64;
        for t in 0..panel.t() {
            if panel.missing[(t, i)] {
                values[(t, i)] = mean;
            }
        }
    }
    Ok(panel.map_values(values))
}

/// Removes series means, time means and adds back the grand mean:
/// `ỹ_ti = y_ti − ȳ_·i − ȳ_t· + ȳ_··`.
pub fn double_demean(panel: &DataPanel) -> Result<DataPanel> {
    panel.ensure_complete("double demeaning")?;
    let (t_len, n_len) = (panel.t(), panel.n());
    let y = &panel.values;

    let col_means: Vec<f64> = (0..n_len)
        .map(|i| y.column(i).iter().sum::<f64>() / t_len as f64)
        .collect();
    let mut row_means = vec![0.0; t_len];
    for i in 0..n_len {
        for (t, acc) in row_means.iter_mut().enumerate() {
            *acc += y[(t, i)];
        }
    }
    for acc in row_means.iter_mut() {
        *acc /= n_len as f64;
    }
    let grand = col_means.iter().sum::<f64>() / n_len as f64;

    let out = DMatrix::from_fn(t_len, n_len, |t, i| {
        y[(t, i)] - col_means[i] - row_means[t] + grand
    });
    Ok(panel.map_values(out))
}
