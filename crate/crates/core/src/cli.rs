//! Command-line front end.
//!
//! Exit codes: `0` success, `1` input or usage error, `2` solver failure
//! (singular regression or system), `3` IRMI diverged.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::baseline;
use crate::bench::{self, BenchmarkSettings, Method, MethodSettings};
use crate::dataset::{self, Dataset, Imputation};
use crate::error::Error;
use crate::irmi::{self, IrmiConfig, IrmiStatus};
use crate::oli::{self, InitMethod, MSolver, OliConfig, OutputVariant};
use crate::rng;
use crate::synthetic::{self, SimSpec};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "linimpute", version, about = "Linear imputation of missing values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the missing cells of a CSV file.
    Impute(ImputeArgs),
    /// Mask a complete CSV file repeatedly and score each method.
    Benchmark(BenchmarkArgs),
    /// Run one of the synthetic-data experiments and write plot-ready CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Oli,
    Irmi,
    Mi,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Direct,
    Regressed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    ClosedForm,
    Gradient,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Median,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureArg {
    #[value(name = "1")]
    Pairs,
    #[value(name = "2a")]
    Covariance,
    #[value(name = "2b")]
    Dimension,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, clap::Args)]
pub struct SolverOpts {
    /// Ridge weight on the non-intercept regression coefficients.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "closed-form")]
    pub solver: SolverArg,
    #[arg(long, value_enum, default_value = "median")]
    pub init: InitArg,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_outer: f64,
    #[arg(long, default_value_t = 50)]
    pub irmi_max_iter: usize,
}

#[derive(Debug, clap::Args)]
pub struct ImputeArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "oli")]
    pub method: MethodArg,
    /// Field value that marks a missing cell (empty fields are always missing).
    #[arg(long, default_value = "")]
    pub missing_token: String,
    #[arg(long, value_enum, default_value = "direct")]
    pub variant: VariantArg,
    #[command(flatten)]
    pub solver: SolverOpts,
    /// Completed CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics JSON; defaults to the output path with `.json` appended.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct BenchmarkArgs {
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "oli,irmi,mi")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0.05)]
    pub rate: f64,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, env = "LINIMPUTE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, default_value = "")]
    pub missing_token: String,
    #[command(flatten)]
    pub solver: SolverOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub figure: FigureArg,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
    /// Override the number of samples per repetition.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Override the number of repetitions.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, env = "LINIMPUTE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output variant used for OLI in the pairwise comparison.
    #[arg(long, value_enum, default_value = "direct")]
    pub variant: VariantArg,
    #[command(flatten)]
    pub solver: SolverOpts,
    #[arg(long)]
    pub out: PathBuf,
}

impl From<VariantArg> for OutputVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Direct => OutputVariant::Direct,
            VariantArg::Regressed => OutputVariant::Regressed,
        }
    }
}

impl SolverOpts {
    fn settings(&self, variant: OutputVariant) -> MethodSettings {
        MethodSettings {
            oli: OliConfig {
                lambda: self.lambda,
                m_solver: match self.solver {
                    SolverArg::ClosedForm => MSolver::ClosedForm,
                    SolverArg::Gradient => MSolver::Gradient,
                },
                init_method: match self.init {
                    InitArg::Median => InitMethod::Median,
                    InitArg::Mean => InitMethod::Mean,
                },
                max_outer: self.max_outer,
                tol_outer: self.tol_outer,
                output_variant: variant,
                ..OliConfig::default()
            },
            irmi: IrmiConfig {
                max_iter: self.irmi_max_iter,
                ..IrmiConfig::default()
            },
        }
    }
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Singular { .. }
            | Error::SingularRegression { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NonFiniteObjective => EXIT_SOLVER,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn timestamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Impute(args) => cmd_impute(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn cmd_impute(args: &ImputeArgs) -> Result<(), CliError> {
    let ds = dataset::load_csv(&args.input, &args.missing_token)?;
    let variant = OutputVariant::from(args.variant);
    let settings = args.solver.settings(variant);

    let (imputations, details, method_name): (Vec<Imputation>, serde_json::Value, &str) =
        match args.method {
            MethodArg::Oli => {
                let res = oli::fit(&ds, &settings.oli)?;
                let details = json!({
                    "objective_trace": res.objective_trace,
                    "outer_iterations": res.outer_iterations,
                    "converged": res.converged,
                    "fallbacks": res.fallbacks,
                    "gradient_norm": res.gradient_norm(),
                });
                (res.imputations(variant), details, "oli")
            }
            MethodArg::Irmi => {
                let out = irmi::fit_irmi(&ds, &settings.irmi)?;
                if out.status == IrmiStatus::Diverged {
                    return Err(CliError {
                        code: EXIT_DIVERGED,
                        message: format!(
                            "IRMI diverged in sweep {}: an imputed value exceeded 10^{} times its \
                             column's median absolute observed value; no output written",
                            out.iterations, settings.irmi.divergence_ratio
                        ),
                    });
                }
                let details = json!({
                    "status": out.status,
                    "iterations": out.iterations,
                    "change_trace": out.change_trace,
                    "converged": out.status == IrmiStatus::Converged,
                });
                (out.imputations.unwrap_or_default(), details, "irmi")
            }
            MethodArg::Mi => (baseline::median_impute(&ds)?, json!({}), "mi"),
            MethodArg::Mean => (baseline::mean_impute(&ds)?, json!({}), "mean"),
        };

    let filled = ds.filled(&imputations);
    let mut out = create(&args.out)?;
    dataset::write_csv(&mut out, ds.column_names(), &filled, None, &args.missing_token)?;
    out.flush().map_err(|e| io_error(&args.out, e))?;

    let diag_path = args.diagnostics.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".json");
        PathBuf::from(p)
    });
    let diagnostics = json!({
        "tool": "linimpute",
        "version": crate::VERSION,
        "input": args.input.display().to_string(),
        "method": method_name,
        "rows": ds.n_rows(),
        "columns": ds.n_cols(),
        "imputed_cells": imputations.len(),
        "note": if imputations.is_empty() { "no missing cells; nothing imputed" } else { "" },
        "config": {
            "missing_token": args.missing_token,
            "variant": bench::variant_name(Some(variant)),
            "oli": settings.oli,
            "irmi": settings.irmi,
        },
        "details": details,
    });
    let mut diag = create(&diag_path)?;
    serde_json::to_writer_pretty(&mut diag, &diagnostics)
        .map_err(|e| io_error(&diag_path, e.into()))?;
    writeln!(diag).map_err(|e| io_error(&diag_path, e))?;
    Ok(())
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), CliError> {
    let ds = dataset::load_csv(&args.input, &args.missing_token)?;
    let settings = BenchmarkSettings {
        methods: args.methods.clone(),
        rate: args.rate,
        repetitions: args.reps,
        seed: args.seed,
        jobs: args.jobs,
        solvers: args.solver.settings(OutputVariant::Direct),
    };
    let report = bench::benchmark(&ds, &settings)?;
    let source = args
        .input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = create(&args.out)?;
    bench::write_report_csv(&mut out, &report, &source, &timestamp())?;
    out.flush().map_err(|e| io_error(&args.out, e))?;
    Ok(())
}

pub const FIGURE_2A_RHOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const FIGURE_2B_DIMS: std::ops::RangeInclusive<usize> = 3..=20;

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut spec = match args.scale {
        ScaleArg::Desk => SimSpec::desk(),
        ScaleArg::Full => SimSpec::full(),
    };
    spec.seed = args.seed;
    if let Some(n) = args.samples {
        spec.n = n;
    }
    if let Some(r) = args.reps {
        spec.repetitions = r;
    }
    let variant = OutputVariant::from(args.variant);
    let settings = args.solver.settings(variant);
    let methods = [Method::Oli, Method::Irmi, Method::Mi];

    let mut out = create(&args.out)?;
    let io = |e: std::io::Error| io_error(&args.out, e);
    let figure = match args.figure {
        FigureArg::Pairs => "1",
        FigureArg::Covariance => "2a",
        FigureArg::Dimension => "2b",
    };
    let meta = [
        ("tool", format!("linimpute {}", crate::VERSION)),
        ("generated_at", timestamp()),
        ("figure", figure.to_string()),
        ("samples", spec.n.to_string()),
        ("repetitions", spec.repetitions.to_string()),
        ("missing_rate", spec.missing_rate.to_string()),
        ("seed", spec.seed.to_string()),
        ("prng", rng::PRNG_ID.to_string()),
        ("oli_config", serde_json::to_string(&settings.oli).unwrap_or_default()),
        ("irmi_config", serde_json::to_string(&settings.irmi).unwrap_or_default()),
    ];
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}").map_err(io)?;
    }

    if args.figure == FigureArg::Pairs {
        let runs = synthetic::run_pairwise(&spec, &settings, variant, args.jobs)?;
        writeln!(out, "# d: {}", spec.d).map_err(io)?;
        writeln!(out, "# rho: {}", spec.rho).map_err(io)?;
        writeln!(out, "# oli_variant: {}", bench::variant_name(Some(variant))).map_err(io)?;
        for run in &runs {
            match &run.comparison {
                Some(c) => writeln!(
                    out,
                    "# repetition {}: value_r={} error_r={} mean_abs_deviation={:.6}",
                    run.repetition,
                    bench::fmt_opt(c.value_r),
                    bench::fmt_opt(c.error_r),
                    c.mean_abs_deviation
                ),
                None => writeln!(out, "# repetition {}: irmi diverged", run.repetition),
            }
            .map_err(io)?;
        }
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["repetition", "row", "col", "truth", "oli", "irmi"])
            .map_err(Error::from)?;
        for p in runs.iter().flat_map(|r| &r.pairs) {
            wtr.write_record([
                p.repetition.to_string(),
                p.row.to_string(),
                p.col.to_string(),
                p.truth.to_string(),
                p.oli.to_string(),
                p.irmi.to_string(),
            ])
            .map_err(Error::from)?;
        }
        wtr.flush().map_err(io)?;
        return Ok(());
    }

    let (variable, records) = match args.figure {
        FigureArg::Covariance => (
            "rho",
            synthetic::run_covariance_sweep(
                &FIGURE_2A_RHOS,
                spec.d,
                &spec,
                &methods,
                &settings,
                args.jobs,
            )?,
        ),
        _ => {
            let dims: Vec<usize> = FIGURE_2B_DIMS.collect();
            (
                "d",
                synthetic::run_dimension_sweep(&dims, spec.rho, &spec, &methods, &settings, args.jobs)?,
            )
        }
    };
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "figure",
        "sweep_variable",
        "sweep_value",
        "method",
        "variant",
        "repetition",
        "mse",
        "returned",
    ])
    .map_err(Error::from)?;
    for r in &records {
        wtr.write_record([
            figure.to_string(),
            variable.to_string(),
            r.sweep.to_string(),
            r.method.name().to_string(),
            bench::variant_name(r.variant).to_string(),
            r.repetition.to_string(),
            r.mse.map(|m| m.to_string()).unwrap_or_default(),
            r.returned.to_string(),
        ])
        .map_err(Error::from)?;
    }
    wtr.flush().map_err(io)?;
    Ok(())
}

/// Loads a dataset for library users that want the CLI's CSV conventions.
pub fn load(path: &Path, missing_token: &str) -> Result<Dataset, CliError> {
    Ok(dataset::load_csv(path, missing_token)?)
}
