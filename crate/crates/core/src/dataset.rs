//! Data model, CSV ingestion, standardization, MCAR injection and error metrics.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::stats;

/// An `N×d` table of reals with a missingness mask.
///
/// Missing cells always hold the carrier value `0.0`, so `values` is already
/// the zeroed data block of the imputation design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Matrix,
    mask: Vec<bool>,
    column_names: Vec<String>,
}

/// One filled-in cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Imputation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// True values of cells that were masked by [`inject_missing`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeldOut {
    cells: Vec<Imputation>,
}

/// Per-column location and scale used by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset, zeroing any value under the mask.
    pub fn new(mut values: Matrix, mask: Vec<bool>, column_names: Vec<String>) -> Result<Self> {
        let (n, d) = (values.rows(), values.cols());
        if n == 0 {
            return Err(Error::Empty("no data rows"));
        }
        if d == 0 {
            return Err(Error::Empty("no columns"));
        }
        if mask.len() != n * d {
            return Err(Error::Shape(format!("mask has {} cells, data has {}", mask.len(), n * d)));
        }
        if column_names.len() != d {
            return Err(Error::Shape(format!("{} column names for {d} columns", column_names.len())));
        }
        for (v, &m) in values.as_mut_slice().iter_mut().zip(&mask) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::InvalidDataset(format!("non-finite observed value {v}")));
            }
        }
        Ok(Self {
            values,
            mask,
            column_names,
        })
    }

    /// A dataset with nothing missing and generated column names `x1..xd`.
    pub fn complete(values: Matrix) -> Result<Self> {
        let names = (1..=values.cols()).map(|j| format!("x{j}")).collect();
        let mask = vec![false; values.rows() * values.cols()];
        Self::new(values, mask, names)
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.n_cols() + col]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Missing `(row, col)` positions in row-major order.
    pub fn missing_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.n_cols();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (k / d, k % d))
    }

    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows())
            .filter(|&r| !self.is_missing(r, col))
            .map(|r| self.value(r, col))
            .collect()
    }

    /// Fails with [`Error::TooFewObserved`] if any column has fewer than
    /// `required` observed entries.
    pub fn require_observed(&self, required: usize) -> Result<()> {
        for c in 0..self.n_cols() {
            let observed = (0..self.n_rows()).filter(|&r| !self.is_missing(r, c)).count();
            if observed < required {
                return Err(Error::TooFewObserved {
                    column: self.column_names[c].clone(),
                    observed,
                    required,
                });
            }
        }
        Ok(())
    }

    /// Copy of the values with the given cells filled in.
    pub fn filled(&self, imputations: &[Imputation]) -> Matrix {
        let mut out = self.values.clone();
        for imp in imputations {
            out[(imp.row, imp.col)] = imp.value;
        }
        out
    }
}

impl HeldOut {
    /// Ground truth for an arbitrary set of cells. Duplicates are rejected.
    pub fn new(cells: Vec<Imputation>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(cells.len());
        for c in &cells {
            if !seen.insert((c.row, c.col)) {
                return Err(Error::CellMismatch(format!("duplicate cell ({}, {})", c.row, c.col)));
            }
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> &[Imputation] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl StandardizationParams {
    pub fn to_original(&self, col: usize, value: f64) -> f64 {
        value * self.stds[col] + self.means[col]
    }
}

pub fn load_csv(path: &Path, missing_token: &str) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, missing_token)
}

/// Parses CSV with a header row. A field is missing when it is empty or equals
/// `missing_token` (after trimming surrounding whitespace).
pub fn read_csv<R: Read>(reader: R, missing_token: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let column_names: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let d = column_names.len();
    if d == 0 || (d == 1 && column_names[0].is_empty()) {
        return Err(Error::Empty("no columns"));
    }

    let token = missing_token.trim();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut n = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d {
            return Err(Error::RaggedRow {
                line,
                expected: d,
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() || field == token {
                values.push(0.0);
                mask.push(true);
            } else {
                let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                    Error::NonNumeric {
                        line,
                        column: column_names[j].clone(),
                        field: field.to_string(),
                    }
                })?;
                values.push(v);
                mask.push(false);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no data rows"));
    }
    Dataset::new(Matrix::from_vec(n, d, values)?, mask, column_names)
}

/// Writes `values` under the dataset's header, emitting `missing_token` for
/// any cell still listed as missing in `mask`.
pub fn write_csv<W: Write>(
    writer: W,
    column_names: &[String],
    values: &Matrix,
    mask: Option<&[bool]>,
    missing_token: &str,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(column_names)?;
    let d = values.cols();
    let mut fields = Vec::with_capacity(d);
    for r in 0..values.rows() {
        fields.clear();
        for c in 0..d {
            if mask.is_some_and(|m| m[r * d + c]) {
                fields.push(missing_token.to_string());
            } else {
                fields.push(format!("{}", values[(r, c)]));
            }
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Centers and scales each column to observed mean 0 and population standard
/// deviation 1. Missing cells stay at 0.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    ds.require_observed(2)?;
    let d = ds.n_cols();
    let mut means = Vec::with_capacity(d);
    let mut stds = Vec::with_capacity(d);
    for c in 0..d {
        let obs = ds.observed_column(c);
        let m = stats::mean(&obs);
        let s = stats::population_std(&obs);
        if !(s > 0.0) || obs.iter().all(|&v| v == obs[0]) {
            return Err(Error::ConstantColumn {
                column: ds.column_names[c].clone(),
            });
        }
        means.push(m);
        stds.push(s);
    }
    let mut values = ds.values.clone();
    for r in 0..ds.n_rows() {
        for c in 0..d {
            if !ds.is_missing(r, c) {
                values[(r, c)] = (values[(r, c)] - means[c]) / stds[c];
            }
        }
    }
    let out = Dataset::new(values, ds.mask.clone(), ds.column_names.clone())?;
    Ok((out, StandardizationParams { means, stds }))
}

/// Masks exactly `round(rate·N·d)` cells drawn uniformly without replacement
/// from the whole table, returning their true values.
pub fn inject_missing(ds: &Dataset, rate: f64, seed: u64) -> Result<(Dataset, HeldOut)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("missing rate must be in [0, 1), got {rate}")));
    }
    if ds.n_missing() > 0 {
        return Err(Error::InvalidDataset(
            "missingness can only be injected into a complete dataset".into(),
        ));
    }
    let total = ds.n_rows() * ds.n_cols();
    let k = (rate * total as f64).round() as usize;
    let mut rng = rng::stream(seed, rng::STREAM_MASK);
    let mut picked = index::sample(&mut rng, total, k).into_vec();
    picked.sort_unstable();

    let d = ds.n_cols();
    let mut mask = vec![false; total];
    let mut cells = Vec::with_capacity(k);
    for flat in picked {
        mask[flat] = true;
        let (row, col) = (flat / d, flat % d);
        cells.push(Imputation {
            row,
            col,
            value: ds.value(row, col),
        });
    }
    let out = Dataset::new(ds.values.clone(), mask, ds.column_names.clone())?;
    out.require_observed(2)?;
    Ok((out, HeldOut { cells }))
}

/// Mean squared error of `imputed` against the held-out truth. Both must cover
/// the same set of cells.
pub fn mse(imputed: &[Imputation], truth: &HeldOut) -> Result<f64> {
    if imputed.len() != truth.len() {
        return Err(Error::CellMismatch(format!(
            "{} imputed cells vs {} held-out cells",
            imputed.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::CellMismatch("no held-out cells".into()));
    }
    let lookup: HashMap<(usize, usize), f64> =
        imputed.iter().map(|i| ((i.row, i.col), i.value)).collect();
    if lookup.len() != imputed.len() {
        return Err(Error::CellMismatch("duplicate imputed cell".into()));
    }
    let mut sum = 0.0;
    for cell in &truth.cells {
        let v = lookup.get(&(cell.row, cell.col)).ok_or_else(|| {
            Error::CellMismatch(format!("no imputation for cell ({}, {})", cell.row, cell.col))
        })?;
        sum += (v - cell.value) * (v - cell.value);
    }
    Ok(sum / truth.len() as f64)
}

/// Mean absolute pairwise Pearson correlation between columns, using rows
/// where both columns are observed. Pairs without variance are skipped.
pub fn mean_abs_correlation(ds: &Dataset) -> Option<f64> {
    let d = ds.n_cols();
    let mut acc = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            let (xa, xb): (Vec<f64>, Vec<f64>) = (0..ds.n_rows())
                .filter(|&r| !ds.is_missing(r, a) && !ds.is_missing(r, b))
                .map(|r| (ds.value(r, a), ds.value(r, b)))
                .unzip();
            if let Some(r) = stats::pearson(&xa, &xb) {
                acc.push(r.abs());
            }
        }
    }
    (!acc.is_empty()).then(|| stats::mean(&acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, token: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), token)
    }

    #[test]
    fn csv_empty_field_is_missing() {
        let ds = parse("a,b\n1.0,\n2.0,3.0", "").unwrap();
        assert_eq!((ds.n_rows(), ds.n_cols()), (2, 2));
        assert_eq!(ds.mask(), &[false, true, false, false]);
        assert_eq!(ds.values().as_slice(), &[1.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn csv_custom_token() {
        let ds = parse("a\nNA\n5", "NA").unwrap();
        assert_eq!(ds.mask(), &[true, false]);
        assert_eq!(ds.values().as_slice(), &[0.0, 5.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse("a,b\n1,2\n3", ""), Err(Error::RaggedRow { line: 3, .. })));
        assert!(matches!(parse("a,b\n1,x", ""), Err(Error::NonNumeric { .. })));
        assert!(matches!(parse("a,b\n", ""), Err(Error::Empty(_))));
        assert!(matches!(parse("a\nNA\n5", "?"), Err(Error::NonNumeric { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let text = "a,b,c\n1.5,NA,-3e-7\n0.1,2,NA\n";
        let ds = parse(text, "NA").unwrap();
        let mut out = Vec::new();
        write_csv(&mut out, ds.column_names(), ds.values(), Some(ds.mask()), "NA").unwrap();
        let back = parse(std::str::from_utf8(&out).unwrap(), "NA").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn standardize_three_points() {
        let ds = Dataset::complete(Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap()).unwrap();
        let (z, params) = standardize(&ds).unwrap();
        let expect = 1.5f64.sqrt();
        let got = z.values().as_slice();
        assert!((got[0] + expect).abs() < 1e-12);
        assert!(got[1].abs() < 1e-12);
        assert!((got[2] - expect).abs() < 1e-12);
        assert!((params.to_original(0, got[2]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_ignores_missing_and_is_idempotent() {
        let ds = parse("a,b\n1,10\n,20\n4,\n7,50\n", "").unwrap();
        let (z, _) = standardize(&ds).unwrap();
        assert_eq!(z.mask(), ds.mask());
        assert_eq!(z.value(1, 0), 0.0);
        let obs = z.observed_column(0);
        assert!(stats::mean(&obs).abs() < 1e-12);
        assert!((stats::population_std(&obs) - 1.0).abs() < 1e-12);
        let (zz, _) = standardize(&z).unwrap();
        for (a, b) in zz.values().as_slice().iter().zip(z.values().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_constant_column() {
        let ds = parse("a,b\n5,1\n5,2\n5,3\n", "").unwrap();
        match standardize(&ds) {
            Err(Error::ConstantColumn { column }) => assert_eq!(column, "a"),
            other => panic!("expected constant column error, got {other:?}"),
        }
    }

    fn complete(n: usize, d: usize) -> Dataset {
        Dataset::complete(Matrix::from_fn(n, d, |i, j| (i * d + j) as f64)).unwrap()
    }

    #[test]
    fn inject_zero_rate() {
        let ds = complete(10, 3);
        let (out, held) = inject_missing(&ds, 0.0, 1).unwrap();
        assert_eq!(out, ds);
        assert!(held.is_empty());
    }

    #[test]
    fn inject_exact_count_and_determinism() {
        let ds = complete(100, 5);
        let (a, held) = inject_missing(&ds, 0.05, 7).unwrap();
        assert_eq!(a.n_missing(), 25);
        assert_eq!(held.len(), 25);
        for cell in held.cells() {
            assert!(a.is_missing(cell.row, cell.col));
            assert_eq!(cell.value, ds.value(cell.row, cell.col));
            assert_eq!(a.value(cell.row, cell.col), 0.0);
        }
        let (b, _) = inject_missing(&ds, 0.05, 7).unwrap();
        assert_eq!(a.mask(), b.mask());
        let (c, _) = inject_missing(&ds, 0.05, 8).unwrap();
        assert_ne!(a.mask(), c.mask());
    }

    #[test]
    fn inject_rejects_starved_columns() {
        let ds = complete(3, 2);
        assert!(matches!(inject_missing(&ds, 0.9, 1), Err(Error::TooFewObserved { .. })));
        assert!(inject_missing(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn mse_examples() {
        let truth = HeldOut {
            cells: vec![Imputation { row: 0, col: 0, value: 1.0 }],
        };
        assert_eq!(mse(&truth.cells, &truth).unwrap(), 0.0);
        assert_eq!(mse(&[Imputation { row: 0, col: 0, value: 0.0 }], &truth).unwrap(), 1.0);

        let truth = HeldOut {
            cells: vec![
                Imputation { row: 0, col: 0, value: 0.0 },
                Imputation { row: 1, col: 0, value: 0.0 },
            ],
        };
        let imputed = [
            Imputation { row: 1, col: 0, value: -3.0 },
            Imputation { row: 0, col: 0, value: 1.0 },
        ];
        assert_eq!(mse(&imputed, &truth).unwrap(), 5.0);
        assert!(matches!(mse(&imputed[..1], &truth), Err(Error::CellMismatch(_))));
        let wrong = [imputed[0], Imputation { row: 2, col: 0, value: 1.0 }];
        assert!(matches!(mse(&wrong, &truth), Err(Error::CellMismatch(_))));
    }
}
