//! Equicorrelated Gaussian data and the simulation sweeps built on it.
//!
//! Data are `n` draws from a `d`-variate normal with every mean equal to 1,
//! unit variances and a common correlation `rho`. Samples are produced as
//! `1 + L z` with `L` the Cholesky factor of the covariance and `z` standard
//! normal. Repetition `r` of a sweep uses seed `seed + r` for both the data
//! stream and the missingness stream, so every sweep point sees the same
//! random numbers.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bench::{self, Method, MethodRun, MethodSettings};
use crate::dataset::{self, Dataset, HeldOut, Imputation};
use crate::error::{Error, Result};
use crate::irmi::{self, IrmiStatus};
use crate::linalg::{self, Matrix};
use crate::oli::{self, OutputVariant};
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSpec {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub missing_rate: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl SimSpec {
    /// Small runs for CI: `n = 2000`, 5 repetitions.
    pub fn desk() -> Self {
        Self {
            n: 2000,
            d: 5,
            rho: 0.7,
            missing_rate: 0.05,
            repetitions: 5,
            seed: 0,
        }
    }

    /// The full protocol: `n = 10000`, 20 repetitions.
    pub fn full() -> Self {
        Self {
            n: 10_000,
            repetitions: 20,
            ..Self::desk()
        }
    }

    fn for_repetition(&self, rep: usize) -> Self {
        Self {
            seed: rng::repetition_seed(self.seed, rep),
            ..self.clone()
        }
    }
}

/// `1` on the diagonal, `rho` elsewhere.
pub fn equicorrelated_covariance(d: usize, rho: f64) -> Matrix {
    Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
}

/// Variance of one coordinate given all others:
/// `1 − ρ²(d−1) / (1 + (d−2)ρ)`.
pub fn conditional_variance(d: usize, rho: f64) -> f64 {
    let d = d as f64;
    1.0 - rho * rho * (d - 1.0) / (1.0 + (d - 2.0) * rho)
}

pub fn mvn_equicorrelated(spec: &SimSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::Config("n and d must be positive".into()));
    }
    let l = linalg::cholesky(&equicorrelated_covariance(spec.d, spec.rho))?;
    let mut rng = rng::stream(spec.seed, rng::STREAM_DATA);
    let d = spec.d;
    let mut values = Matrix::zeros(spec.n, d);
    let mut z = vec![0.0; d];
    for r in 0..spec.n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let row = values.row_mut(r);
        for i in 0..d {
            row[i] = 1.0 + linalg::dot(&l.row(i)[..=i], &z[..=i]);
        }
    }
    Dataset::complete(values)
}

/// Generates and masks the data of one repetition.
pub fn masked_sample(spec: &SimSpec) -> Result<(Dataset, HeldOut)> {
    let ds = mvn_equicorrelated(spec)?;
    dataset::inject_missing(&ds, spec.missing_rate, spec.seed)
}

/// One method at one sweep point in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    /// Value of the swept parameter (`rho` or `d`).
    pub sweep: f64,
    pub method: Method,
    pub variant: Option<OutputVariant>,
    pub repetition: usize,
    pub mse: Option<f64>,
    pub returned: bool,
}

fn sweep(
    points: &[(f64, SimSpec)],
    methods: &[Method],
    settings: &MethodSettings,
    jobs: usize,
) -> Result<Vec<SweepRecord>> {
    let jobs_list: Vec<(f64, usize, SimSpec)> = points
        .iter()
        .flat_map(|(v, spec)| (0..spec.repetitions).map(move |r| (*v, r, spec.for_repetition(r))))
        .collect();
    let per_job = bench::run_parallel(jobs, jobs_list.len(), |k| {
        let (_, _, spec) = &jobs_list[k];
        let (masked, truth) = masked_sample(spec)?;
        bench::evaluate_methods(&masked, &truth, methods, settings)
    })?;
    let mut records = Vec::new();
    for ((value, repetition, _), runs) in jobs_list.iter().zip(per_job) {
        records.extend(runs.into_iter().map(|run: MethodRun| SweepRecord {
            sweep: *value,
            method: run.method,
            variant: run.variant,
            repetition: *repetition,
            mse: run.mse,
            returned: run.returned,
        }));
    }
    Ok(records)
}

/// MSE of each method as the dimension varies at fixed `rho`.
pub fn run_dimension_sweep(
    dims: &[usize],
    rho: f64,
    base: &SimSpec,
    methods: &[Method],
    settings: &MethodSettings,
    jobs: usize,
) -> Result<Vec<SweepRecord>> {
    let points: Vec<(f64, SimSpec)> = dims
        .iter()
        .map(|&d| (d as f64, SimSpec { d, rho, ..base.clone() }))
        .collect();
    sweep(&points, methods, settings, jobs)
}

/// MSE of each method as the common correlation varies at fixed `d`.
pub fn run_covariance_sweep(
    rhos: &[f64],
    d: usize,
    base: &SimSpec,
    methods: &[Method],
    settings: &MethodSettings,
    jobs: usize,
) -> Result<Vec<SweepRecord>> {
    let points: Vec<(f64, SimSpec)> = rhos
        .iter()
        .map(|&rho| (rho, SimSpec { d, rho, ..base.clone() }))
        .collect();
    sweep(&points, methods, settings, jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub sweep: f64,
    pub method: Method,
    pub variant: Option<OutputVariant>,
    pub repetitions: usize,
    pub returned: usize,
    pub mean_mse: Option<f64>,
    pub std_mse: Option<f64>,
}

/// Mean and sample standard deviation of the MSE per sweep point and method,
/// over repetitions that returned a result.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepSummary> {
    let mut keys: Vec<(f64, Method, Option<OutputVariant>)> = Vec::new();
    for r in records {
        let key = (r.sweep, r.method, r.variant);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(sweep, method, variant)| {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.sweep == sweep && r.method == method && r.variant == variant)
                .collect();
            let mses: Vec<f64> = group.iter().filter_map(|r| r.mse).collect();
            SweepSummary {
                sweep,
                method,
                variant,
                repetitions: group.len(),
                returned: group.iter().filter(|r| r.returned).count(),
                mean_mse: (!mses.is_empty()).then(|| stats::mean(&mses)),
                std_mse: stats::sample_std(&mses),
            }
        })
        .collect()
}

/// Agreement between two imputations of the same held-out cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseComparison {
    pub cells: usize,
    /// Pearson correlation of the imputed values.
    pub value_r: Option<f64>,
    /// Pearson correlation of the signed errors `truth − imputed`.
    pub error_r: Option<f64>,
    pub mean_abs_deviation: f64,
}

/// Aligns `a` and `b` on the cells of `truth` and correlates them.
pub fn compare_imputations(
    a: &[Imputation],
    b: &[Imputation],
    truth: &HeldOut,
) -> Result<PairwiseComparison> {
    let lookup = |imps: &[Imputation]| -> Result<Vec<f64>> {
        let map: std::collections::HashMap<(usize, usize), f64> =
            imps.iter().map(|i| ((i.row, i.col), i.value)).collect();
        if map.len() != truth.len() || imps.len() != truth.len() {
            return Err(Error::CellMismatch(format!(
                "{} imputations for {} held-out cells",
                imps.len(),
                truth.len()
            )));
        }
        truth
            .cells()
            .iter()
            .map(|c| {
                map.get(&(c.row, c.col)).copied().ok_or_else(|| {
                    Error::CellMismatch(format!("no imputation for ({}, {})", c.row, c.col))
                })
            })
            .collect()
    };
    let va = lookup(a)?;
    let vb = lookup(b)?;
    let ea: Vec<f64> = truth.cells().iter().zip(&va).map(|(t, v)| t.value - v).collect();
    let eb: Vec<f64> = truth.cells().iter().zip(&vb).map(|(t, v)| t.value - v).collect();
    let mad = if va.is_empty() {
        0.0
    } else {
        va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).sum::<f64>() / va.len() as f64
    };
    Ok(PairwiseComparison {
        cells: va.len(),
        value_r: stats::pearson(&va, &vb),
        error_r: stats::pearson(&ea, &eb),
        mean_abs_deviation: mad,
    })
}

/// A comparison with the OLI and IRMI imputations it was computed from.
pub type PairwiseOutcome = (PairwiseComparison, Vec<Imputation>, Vec<Imputation>);

/// Imputes `masked` with OLI and IRMI and compares them. `Ok(None)` when
/// IRMI does not return a result.
pub fn compare_methods_pairwise(
    masked: &Dataset,
    truth: &HeldOut,
    settings: &MethodSettings,
    variant: OutputVariant,
) -> Result<Option<PairwiseOutcome>> {
    let fit = oli::fit(masked, &settings.oli)?;
    let oli_imps = fit.imputations(variant);
    let out = irmi::fit_irmi(masked, &settings.irmi)?;
    if out.status == IrmiStatus::Diverged {
        return Ok(None);
    }
    let irmi_imps = out.imputations.unwrap_or_default();
    let cmp = compare_imputations(&oli_imps, &irmi_imps, truth)?;
    Ok(Some((cmp, oli_imps, irmi_imps)))
}

/// One held-out cell as imputed by both methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub repetition: usize,
    pub row: usize,
    pub col: usize,
    pub truth: f64,
    pub oli: f64,
    pub irmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseRun {
    pub repetition: usize,
    /// `None` when IRMI diverged.
    pub comparison: Option<PairwiseComparison>,
    pub pairs: Vec<PairRecord>,
}

/// OLI against IRMI on every repetition of `spec`.
pub fn run_pairwise(
    spec: &SimSpec,
    settings: &MethodSettings,
    variant: OutputVariant,
    jobs: usize,
) -> Result<Vec<PairwiseRun>> {
    bench::run_parallel(jobs, spec.repetitions, |rep| {
        let (masked, truth) = masked_sample(&spec.for_repetition(rep))?;
        let Some((cmp, o, i)) = compare_methods_pairwise(&masked, &truth, settings, variant)? else {
            return Ok(PairwiseRun {
                repetition: rep,
                comparison: None,
                pairs: Vec::new(),
            });
        };
        // Both imputation lists are in row-major order, as are the held-out cells.
        let pairs = truth
            .cells()
            .iter()
            .zip(o.iter().zip(&i))
            .map(|(t, (o, i))| PairRecord {
                repetition: rep,
                row: t.row,
                col: t.col,
                truth: t.value,
                oli: o.value,
                irmi: i.value,
            })
            .collect();
        Ok(PairwiseRun {
            repetition: rep,
            comparison: Some(cmp),
            pairs,
        })
    })
}
