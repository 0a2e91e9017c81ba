//! Iterative regression imputation (IRMI), real-valued features only.
//!
//! Starting from median imputation, each sweep visits the features in
//! ascending order, fits an ordinary least-squares regression of the feature
//! on all other (currently imputed) features using the rows where it is
//! observed, and overwrites its missing cells with the predictions. There is
//! no convergence guarantee, so runs are watched for blow-up.

use serde::{Deserialize, Serialize};

use crate::baseline;
use crate::dataset::{Dataset, Imputation};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrmiConfig {
    pub max_iter: usize,
    /// A run diverges once an imputed magnitude exceeds `10^divergence_ratio`
    /// times the column's median absolute observed value.
    pub divergence_ratio: f64,
    /// Largest absolute change of any imputed value across a sweep that still
    /// counts as converged.
    pub tol: f64,
}

impl Default for IrmiConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            divergence_ratio: 6.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrmiStatus {
    Converged,
    IterationCap,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrmiOutcome {
    pub status: IrmiStatus,
    /// `None` exactly when the run diverged.
    pub imputations: Option<Vec<Imputation>>,
    pub iterations: usize,
    /// Max absolute change of the imputed values in each sweep.
    pub change_trace: Vec<f64>,
}

pub fn fit_irmi(ds: &Dataset, cfg: &IrmiConfig) -> Result<IrmiOutcome> {
    if cfg.max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    if !(cfg.divergence_ratio > 0.0) || !(cfg.tol > 0.0) {
        return Err(Error::Config("divergence_ratio and tol must be positive".into()));
    }
    if ds.n_missing() == 0 {
        return Ok(IrmiOutcome {
            status: IrmiStatus::Converged,
            imputations: Some(Vec::new()),
            iterations: 0,
            change_trace: Vec::new(),
        });
    }
    ds.require_observed(2)?;

    let (n, d) = (ds.n_rows(), ds.n_cols());
    let mut filled = ds.filled(&baseline::median_impute(ds)?);
    let limits: Vec<f64> = (0..d)
        .map(|c| 10f64.powf(cfg.divergence_ratio) * magnitude_scale(&ds.observed_column(c)))
        .collect();

    let mut trace = Vec::new();
    for iter in 1..=cfg.max_iter {
        let mut max_change = 0.0f64;
        for i in 0..d {
            let (observed, missing): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&r| !ds.is_missing(r, i));
            if missing.is_empty() {
                continue;
            }
            let mut design = Vec::with_capacity(observed.len() * d);
            for &r in &observed {
                predictors(&filled, r, i, &mut design);
            }
            let x = Matrix::from_vec(observed.len(), d, design)?;
            let y: Vec<f64> = observed.iter().map(|&r| filled[(r, i)]).collect();
            let beta = linalg::least_squares(&x, &y, 0.0, Some(d - 1)).map_err(|e| match e {
                Error::Singular { .. } => Error::SingularRegression { feature: i },
                other => other,
            })?;

            let mut row = Vec::with_capacity(d);
            for &r in &missing {
                row.clear();
                predictors(&filled, r, i, &mut row);
                let v = linalg::dot(&row, &beta);
                max_change = max_change.max((v - filled[(r, i)]).abs());
                filled[(r, i)] = v;
                if !v.is_finite() || v.abs() > limits[i] {
                    trace.push(max_change);
                    return Ok(IrmiOutcome {
                        status: IrmiStatus::Diverged,
                        imputations: None,
                        iterations: iter,
                        change_trace: trace,
                    });
                }
            }
        }
        trace.push(max_change);
        if max_change < cfg.tol {
            return Ok(finish(ds, &filled, IrmiStatus::Converged, iter, trace));
        }
    }
    Ok(finish(ds, &filled, IrmiStatus::IterationCap, cfg.max_iter, trace))
}

/// Row `r` of `filled` without column `skip`, followed by the intercept 1.
fn predictors(filled: &Matrix, r: usize, skip: usize, out: &mut Vec<f64>) {
    let row = filled.row(r);
    out.extend(row.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, v)| *v));
    out.push(1.0);
}

fn finish(
    ds: &Dataset,
    filled: &Matrix,
    status: IrmiStatus,
    iterations: usize,
    change_trace: Vec<f64>,
) -> IrmiOutcome {
    let imputations = ds
        .missing_cells()
        .map(|(row, col)| Imputation {
            row,
            col,
            value: filled[(row, col)],
        })
        .collect();
    IrmiOutcome {
        status,
        imputations: Some(imputations),
        iterations,
        change_trace,
    }
}

/// Median absolute observed value, falling back to the mean absolute value
/// and then to 1 for columns that are mostly or entirely zero.
fn magnitude_scale(observed: &[f64]) -> f64 {
    let abs: Vec<f64> = observed.iter().map(|v| v.abs()).collect();
    let med = stats::median(&abs);
    if med > 0.0 {
        return med;
    }
    let mean = stats::mean(&abs);
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}
