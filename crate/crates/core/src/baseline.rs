//! Column-statistic imputation baselines.

use crate::dataset::{Dataset, Imputation};
use crate::error::Result;
use crate::stats;

/// Fills every missing cell with its column's observed median.
pub fn median_impute(ds: &Dataset) -> Result<Vec<Imputation>> {
    impute_with(ds, stats::median)
}

/// Fills every missing cell with its column's observed mean.
pub fn mean_impute(ds: &Dataset) -> Result<Vec<Imputation>> {
    impute_with(ds, stats::mean)
}

fn impute_with(ds: &Dataset, statistic: fn(&[f64]) -> f64) -> Result<Vec<Imputation>> {
    if ds.n_missing() == 0 {
        return Ok(Vec::new());
    }
    ds.require_observed(1)?;
    let fill: Vec<f64> = (0..ds.n_cols())
        .map(|c| statistic(&ds.observed_column(c)))
        .collect();
    Ok(ds
        .missing_cells()
        .map(|(row, col)| Imputation {
            row,
            col,
            value: fill[col],
        })
        .collect())
}
