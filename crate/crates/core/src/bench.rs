//! Benchmark harness: repeated MCAR masking of a complete dataset, imputation
//! by each method, and MSE against the held-out values.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline;
use crate::dataset::{self, Dataset, HeldOut, Imputation};
use crate::error::{Error, Result};
use crate::irmi::{self, IrmiConfig, IrmiStatus};
use crate::oli::{self, OliConfig, OutputVariant};
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oli,
    Irmi,
    /// Median imputation.
    Mi,
    Mean,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Oli, Method::Irmi, Method::Mi, Method::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oli => "oli",
            Method::Irmi => "irmi",
            Method::Mi => "mi",
            Method::Mean => "mean",
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
            "oli" => Ok(Method::Oli),
            "irmi" => Ok(Method::Irmi),
            "mi" | "median" => Ok(Method::Mi),
            "mean" => Ok(Method::Mean),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

pub fn variant_name(variant: Option<OutputVariant>) -> &'static str {
    match variant {
        Some(OutputVariant::Direct) => "direct",
        Some(OutputVariant::Regressed) => "regressed",
        None => "-",
    }
}

/// Solver settings shared by every repetition.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MethodSettings {
    pub oli: OliConfig,
    pub irmi: IrmiConfig,
}

/// One method (and OLI output variant) on one masked dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    pub method: Method,
    pub variant: Option<OutputVariant>,
    /// The method returned imputations (IRMI: did not diverge or fail).
    pub returned: bool,
    /// The method stopped at its iteration cap rather than its tolerance.
    pub hit_cap: bool,
    /// `None` when nothing was returned or there were no held-out cells.
    pub mse: Option<f64>,
    pub imputations: Option<Vec<Imputation>>,
    pub note: Option<String>,
}

impl MethodRun {
    fn failed(method: Method, variant: Option<OutputVariant>, note: String) -> Self {
        Self {
            method,
            variant,
            returned: false,
            hit_cap: false,
            mse: None,
            imputations: None,
            note: Some(note),
        }
    }

    fn ok(
        method: Method,
        variant: Option<OutputVariant>,
        imputations: Vec<Imputation>,
        truth: &HeldOut,
        hit_cap: bool,
    ) -> Result<Self> {
        let mse = if truth.is_empty() {
            None
        } else {
            Some(dataset::mse(&imputations, truth)?)
        };
        Ok(Self {
            method,
            variant,
            returned: true,
            hit_cap,
            mse,
            imputations: Some(imputations),
            note: None,
        })
    }
}

/// Runs every method on `masked` and scores it against `truth`. A method that
/// fails is recorded as not returned; it never stops the others. OLI yields
/// one run per output variant from a single fit.
pub fn evaluate_methods(
    masked: &Dataset,
    truth: &HeldOut,
    methods: &[Method],
    settings: &MethodSettings,
) -> Result<Vec<MethodRun>> {
    let mut runs = Vec::new();
    for &method in methods {
        match method {
            Method::Oli => match oli::fit(masked, &settings.oli) {
                Ok(res) => {
                    let cap = !res.converged;
                    for variant in [OutputVariant::Direct, OutputVariant::Regressed] {
                        runs.push(MethodRun::ok(
                            method,
                            Some(variant),
                            res.imputations(variant),
                            truth,
                            cap,
                        )?);
                    }
                }
                Err(e) => {
                    for variant in [OutputVariant::Direct, OutputVariant::Regressed] {
                        runs.push(MethodRun::failed(method, Some(variant), e.to_string()));
                    }
                }
            },
            Method::Irmi => match irmi::fit_irmi(masked, &settings.irmi) {
                Ok(out) => match out.imputations {
                    Some(imps) => runs.push(MethodRun::ok(
                        method,
                        None,
                        imps,
                        truth,
                        out.status == IrmiStatus::IterationCap,
                    )?),
                    None => runs.push(MethodRun::failed(
                        method,
                        None,
                        format!("diverged after {} sweeps", out.iterations),
                    )),
                },
                Err(e) => runs.push(MethodRun::failed(method, None, e.to_string())),
            },
            Method::Mi | Method::Mean => {
                let result = if method == Method::Mi {
                    baseline::median_impute(masked)
                } else {
                    baseline::mean_impute(masked)
                };
                match result {
                    Ok(imps) => runs.push(MethodRun::ok(method, None, imps, truth, false)?),
                    Err(e) => runs.push(MethodRun::failed(method, None, e.to_string())),
                }
            }
        }
    }
    Ok(runs)
}

/// Maps `f` over `0..n` on a pool of `jobs` threads (0 = all cores), keeping
/// results in index order.
pub fn run_parallel<T, F>(jobs: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSettings {
    pub methods: Vec<Method>,
    pub rate: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub jobs: usize,
    pub solvers: MethodSettings,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            methods: vec![Method::Oli, Method::Irmi, Method::Mi],
            rate: 0.05,
            repetitions: 10,
            seed: 0,
            jobs: 0,
            solvers: MethodSettings::default(),
        }
    }
}

/// Aggregate of one method over all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: Method,
    pub variant: Option<OutputVariant>,
    pub repetitions: usize,
    /// Repetitions in which the method returned imputations.
    pub converged: usize,
    pub cap_hits: usize,
    /// Over returned repetitions only; `None` if there are none or no cells
    /// were held out.
    pub mean_mse: Option<f64>,
    pub std_mse: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<Vec<MethodRun>>,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Mean absolute pairwise Pearson correlation of the input columns.
    pub mean_abs_correlation: Option<f64>,
    pub settings: BenchmarkSettings,
}

/// Summarizes per-repetition runs into one row per (method, variant), in the
/// order the runs appear.
pub fn aggregate(runs: &[Vec<MethodRun>]) -> Vec<ReportRow> {
    let mut keys: Vec<(Method, Option<OutputVariant>)> = Vec::new();
    for run in runs.iter().flatten() {
        if !keys.contains(&(run.method, run.variant)) {
            keys.push((run.method, run.variant));
        }
    }
    keys.into_iter()
        .map(|(method, variant)| {
            let matching: Vec<&MethodRun> = runs
                .iter()
                .flatten()
                .filter(|r| r.method == method && r.variant == variant)
                .collect();
            let mses: Vec<f64> = matching.iter().filter_map(|r| r.mse).collect();
            ReportRow {
                method,
                variant,
                repetitions: matching.len(),
                converged: matching.iter().filter(|r| r.returned).count(),
                cap_hits: matching.iter().filter(|r| r.hit_cap).count(),
                mean_mse: (!mses.is_empty()).then(|| stats::mean(&mses)),
                std_mse: stats::sample_std(&mses),
            }
        })
        .collect()
}

/// Standardizes `ds`, then for each repetition masks `settings.rate` of the
/// cells (seeded by `seed + repetition`), imputes with every method and
/// scores against the held-out values.
pub fn benchmark(ds: &Dataset, settings: &BenchmarkSettings) -> Result<BenchmarkReport> {
    if ds.n_missing() > 0 {
        return Err(Error::InvalidDataset(
            "benchmark input must be complete; its values are the ground truth".into(),
        ));
    }
    if settings.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let (standardized, _) = dataset::standardize(ds)?;
    let runs = run_parallel(settings.jobs, settings.repetitions, |rep| {
        let seed = rng::repetition_seed(settings.seed, rep);
        let (masked, truth) = dataset::inject_missing(&standardized, settings.rate, seed)?;
        evaluate_methods(&masked, &truth, &settings.methods, &settings.solvers)
    })?;
    Ok(BenchmarkReport {
        rows: aggregate(&runs),
        runs,
        n_rows: ds.n_rows(),
        n_cols: ds.n_cols(),
        mean_abs_correlation: dataset::mean_abs_correlation(ds),
        settings: settings.clone(),
    })
}

impl BenchmarkReport {
    pub fn row(&self, method: Method, variant: Option<OutputVariant>) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.variant == variant)
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Writes `# key: value` metadata lines followed by the CSV table. Only the
/// `generated_at` line depends on anything but the inputs.
pub fn write_report_csv<W: Write>(
    mut out: W,
    report: &BenchmarkReport,
    source: &str,
    generated_at: &str,
) -> Result<()> {
    let s = &report.settings;
    let io = |e: std::io::Error| Error::Csv(e.into());
    let meta = [
        ("tool", format!("linimpute {}", crate::VERSION)),
        ("generated_at", generated_at.to_string()),
        ("source", source.to_string()),
        ("rows", report.n_rows.to_string()),
        ("columns", report.n_cols.to_string()),
        ("mean_abs_correlation", fmt_opt(report.mean_abs_correlation)),
        ("rate", s.rate.to_string()),
        ("repetitions", s.repetitions.to_string()),
        ("seed", s.seed.to_string()),
        ("prng", rng::PRNG_ID.to_string()),
        ("standardization", "observed mean 0, population std 1".to_string()),
        ("oli_config", serde_json::to_string(&s.solvers.oli).unwrap_or_default()),
        ("irmi_config", serde_json::to_string(&s.solvers.irmi).unwrap_or_default()),
    ];
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}").map_err(io)?;
    }
    if report.rows.iter().all(|r| r.mean_mse.is_none()) {
        writeln!(out, "# note: no cells were held out, MSE is undefined").map_err(io)?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "method",
        "variant",
        "mean_mse",
        "std_mse",
        "converged",
        "repetitions",
        "cap_hits",
    ])?;
    for r in &report.rows {
        wtr.write_record([
            r.method.name().to_string(),
            variant_name(r.variant).to_string(),
            fmt_opt(r.mean_mse),
            fmt_opt(r.std_mse),
            r.converged.to_string(),
            r.repetitions.to_string(),
            r.cap_hits.to_string(),
        ])?;
    }
    wtr.flush().map_err(io)?;
    Ok(())
}
