//! Optimized linear imputation.
//!
//! The imputations `M` and the per-feature regression coefficients `A` are the
//! joint minimizers of
//!
//! ```text
//! L(A, M) = ‖(X + M)A − (X + M)‖²_F
//! ```
//!
//! where `X` is the `N×(d+1)` design matrix (missing cells zeroed, constant
//! intercept column appended), `M` is nonzero only at missing cells, and `A`
//! has a zero diagonal and copies the intercept column through unchanged.
//! Column `i` of `A` therefore holds the regression of feature `i` on all other
//! features plus an intercept.
//!
//! [`fit`] minimizes `L` by block coordinate descent: an exact least-squares
//! update of `A` with `M` fixed, then an update of `M` with `A` fixed. Both
//! half-steps never increase `L`, so the recorded objective trace is monotone.
//! The `M` half-step is either solved exactly from its stationarity system
//! ([`update_m_closed_form`]) or by backtracking gradient descent
//! ([`update_m_gradient`]).
//!
//! With a ridge weight `λ > 0` the objective gains `λ Σ_i ‖β_i‖²` over the
//! non-intercept coefficients; the `M` half-step is unaffected.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::baseline;
use crate::dataset::{Dataset, Imputation};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// How the imputations are seeded before the first `A` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    Median,
    Mean,
}

/// Solver for the `M` half-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MSolver {
    ClosedForm,
    Gradient,
}

/// Which values are reported for the missing cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputVariant {
    /// The optimized `M` entries themselves.
    Direct,
    /// The regression predictions `(X + M)A` at the missing cells.
    Regressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OliConfig {
    pub init_method: InitMethod,
    pub m_solver: MSolver,
    /// Initial step of each backtracking line search in the gradient solver.
    pub step_alpha: f64,
    /// Relative objective change `|ΔL| / (1 + L)` that ends the outer loop.
    pub tol_outer: f64,
    /// Max-norm of the restricted gradient that ends the gradient solver.
    pub tol_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Ridge weight on the non-intercept regression coefficients.
    pub lambda: f64,
    pub output_variant: OutputVariant,
}

impl Default for OliConfig {
    fn default() -> Self {
        Self {
            init_method: InitMethod::Median,
            m_solver: MSolver::ClosedForm,
            step_alpha: 0.1,
            tol_outer: 1e-8,
            tol_inner: 1e-10,
            max_outer: 100,
            max_inner: 10_000,
            lambda: 0.0,
            output_variant: OutputVariant::Direct,
        }
    }
}

impl OliConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("step_alpha", self.step_alpha)?;
        positive("tol_outer", self.tol_outer)?;
        positive("tol_inner", self.tol_inner)?;
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `N×(d+1)` design matrix: observed values, zeros at missing cells, and a
/// trailing column of ones. Carries the missingness mask it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: Matrix,
    mask: Vec<bool>,
}

/// `(d+1)×(d+1)` coefficients. `A[i][i] = 0` for features, last column `e_{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Matrix);

/// `N×(d+1)` imputations, zero at observed cells and in the intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationMatrix(Matrix);

impl DesignMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.x
    }

    /// Number of features `d` (the intercept column is not counted).
    pub fn n_features(&self) -> usize {
        self.x.cols() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    /// Whether `(row, col)` is a free variable of `M`. Always false for the
    /// intercept column.
    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        col < self.n_features() && self.mask[row * self.n_features() + col]
    }

    pub fn missing_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.n_features();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (k / d, k % d))
    }

    /// `X + M`.
    pub fn completed(&self, m: &ImputationMatrix) -> Matrix {
        let mut z = self.x.clone();
        for (zv, mv) in z.as_mut_slice().iter_mut().zip(m.0.as_slice()) {
            *zv += mv;
        }
        z
    }
}

impl CoefficientMatrix {
    /// Builds a coefficient matrix, checking the structural constraints.
    pub fn new(a: Matrix) -> Result<Self> {
        let p = a.rows();
        if a.cols() != p || p < 2 {
            return Err(Error::Shape(format!("coefficients must be square, got {}x{}", p, a.cols())));
        }
        for i in 0..p - 1 {
            if a[(i, i)] != 0.0 {
                return Err(Error::Shape(format!("diagonal entry {i} must be zero")));
            }
        }
        for i in 0..p {
            let expect = if i == p - 1 { 1.0 } else { 0.0 };
            if a[(i, p - 1)] != expect {
                return Err(Error::Shape("last column must be the unit vector e_{d+1}".into()));
            }
        }
        Ok(Self(a))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Coefficient of predictor `from` (index `d` = intercept) in the
    /// regression of feature `target`.
    pub fn coefficient(&self, from: usize, target: usize) -> f64 {
        self.0[(from, target)]
    }

    /// `A − I`.
    fn minus_identity(&self) -> Matrix {
        let mut b = self.0.clone();
        for i in 0..b.rows() {
            b[(i, i)] -= 1.0;
        }
        b
    }

    /// Sum of squared non-intercept coefficients.
    fn ridge_norm(&self) -> f64 {
        let d = self.0.rows() - 1;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.0[(j, i)] * self.0[(j, i)];
            }
        }
        s
    }
}

impl ImputationMatrix {
    pub fn zeros(x: &DesignMatrix) -> Self {
        Self(Matrix::zeros(x.n_rows(), x.n_features() + 1))
    }

    /// Places `imputations` into an `M` shaped for `x`. Cells that are not
    /// missing in `x` are rejected.
    pub fn from_imputations(x: &DesignMatrix, imputations: &[Imputation]) -> Result<Self> {
        let mut m = Self::zeros(x);
        for imp in imputations {
            if imp.row >= x.n_rows() || !x.is_missing(imp.row, imp.col) {
                return Err(Error::Shape(format!(
                    "cell ({}, {}) is not a missing cell",
                    imp.row, imp.col
                )));
            }
            m.0[(imp.row, imp.col)] = imp.value;
        }
        Ok(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }
}

pub fn build_design(ds: &Dataset) -> DesignMatrix {
    let (n, d) = (ds.n_rows(), ds.n_cols());
    let x = Matrix::from_fn(n, d + 1, |r, c| {
        if c == d {
            1.0
        } else if ds.is_missing(r, c) {
            0.0
        } else {
            ds.value(r, c)
        }
    });
    DesignMatrix {
        x,
        mask: ds.mask().to_vec(),
    }
}

/// Residual matrix `(X + M)(A − I)`; its last column is identically zero.
fn residuals(x: &DesignMatrix, m: &ImputationMatrix, a: &CoefficientMatrix) -> Matrix {
    let z = x.completed(m);
    z.matmul(&a.minus_identity()).expect("shapes checked by construction")
}

/// `‖(X + M)A − (X + M)‖²_F`.
pub fn objective(x: &DesignMatrix, m: &ImputationMatrix, a: &CoefficientMatrix) -> f64 {
    residuals(x, m, a).as_slice().iter().map(|r| r * r).sum()
}

/// [`objective`] plus `λ` times the squared non-intercept coefficients.
pub fn penalized_objective(
    x: &DesignMatrix,
    m: &ImputationMatrix,
    a: &CoefficientMatrix,
    lambda: f64,
) -> f64 {
    let base = objective(x, m, a);
    if lambda > 0.0 {
        base + lambda * a.ridge_norm()
    } else {
        base
    }
}

/// Exact minimization over `A` with `M` fixed: one (ridge) regression per
/// feature on all other features plus an unpenalized intercept.
pub fn update_a(x: &DesignMatrix, m: &ImputationMatrix, lambda: f64) -> Result<CoefficientMatrix> {
    let d = x.n_features();
    let n = x.n_rows();
    let z = x.completed(m);
    let mut a = Matrix::zeros(d + 1, d + 1);
    a[(d, d)] = 1.0;

    let mut design = Matrix::zeros(n, d);
    let mut target = vec![0.0; n];
    for i in 0..d {
        let others: Vec<usize> = (0..=d).filter(|&j| j != i).collect();
        for r in 0..n {
            let zr = z.row(r);
            let dr = design.row_mut(r);
            for (slot, &j) in dr.iter_mut().zip(&others) {
                *slot = zr[j];
            }
            target[r] = zr[i];
        }
        // The intercept is the last of `others`.
        let beta = linalg::least_squares(&design, &target, lambda, Some(d - 1))
            .map_err(|e| match e {
                Error::Singular { .. } => Error::SingularRegression { feature: i },
                other => other,
            })?;
        for (&j, b) in others.iter().zip(beta) {
            a[(j, i)] = b;
        }
    }
    Ok(CoefficientMatrix(a))
}

/// `∂L/∂M = 2[(X+M)A − (X+M)](A − I)ᵀ`, zeroed everywhere except at the
/// missing cells.
pub fn gradient_m(x: &DesignMatrix, m: &ImputationMatrix, a: &CoefficientMatrix) -> Matrix {
    let r = residuals(x, m, a);
    let b = a.minus_identity();
    let d = x.n_features();
    let mut g = Matrix::zeros(x.n_rows(), d + 1);
    for (row, col) in x.missing_cells() {
        // (R Bᵀ)[row][col] = Σ_k R[row][k] B[col][k]
        g[(row, col)] = 2.0 * linalg::dot(r.row(row), b.row(col));
    }
    g
}

/// Outcome of one gradient-descent `M` half-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Gradient descent on `M` with `A` fixed.
///
/// Each step starts from `cfg.step_alpha` and halves it until the Armijo
/// condition `L(M − αg) ≤ L(M) − 1e-4·α‖g‖²` holds, so every accepted step
/// strictly lowers the objective. `L` is quadratic in `M`, so the change is
/// evaluated exactly as `−α‖g‖² + α²‖g(A − I)‖²` rather than as a difference
/// of two rounded objective values. Stops when the restricted gradient
/// max-norm reaches `cfg.tol_inner`, after `cfg.max_inner` steps, or when no
/// step size makes progress.
pub fn update_m_gradient(
    x: &DesignMatrix,
    m: &ImputationMatrix,
    a: &CoefficientMatrix,
    cfg: &OliConfig,
) -> Result<(ImputationMatrix, InnerReport)> {
    const ARMIJO: f64 = 1e-4;
    const MIN_STEP: f64 = 1e-30;

    let mut m = m.clone();
    if !objective(x, &m, a).is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let b = a.minus_identity();
    let p = b.cols();
    // Rows without missing cells contribute a constant to L.
    let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();
    for (r, c) in x.missing_cells() {
        match rows.last_mut() {
            Some((last, cols)) if *last == r => cols.push(c),
            _ => rows.push((r, vec![c])),
        }
    }
    let n_cells: usize = rows.iter().map(|(_, c)| c.len()).sum();
    let mut g = vec![0.0; n_cells];
    let mut resid = vec![0.0; p];
    let mut gb = vec![0.0; p];

    let mut report = InnerReport {
        iterations: 0,
        gradient_norm: 0.0,
        converged: false,
    };
    while report.iterations < cfg.max_inner {
        let (mut gg, mut curvature, mut gmax) = (0.0, 0.0, 0.0f64);
        let mut k = 0;
        for (r, cols) in &rows {
            let (xr, mr) = (x.x.row(*r), m.0.row(*r));
            resid.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..p {
                let z = xr[j] + mr[j];
                if z != 0.0 {
                    for (rv, bv) in resid.iter_mut().zip(b.row(j)) {
                        *rv += z * bv;
                    }
                }
            }
            gb.iter_mut().for_each(|v| *v = 0.0);
            for &c in cols {
                let gc = 2.0 * linalg::dot(&resid, b.row(c));
                g[k] = gc;
                k += 1;
                gg += gc * gc;
                gmax = gmax.max(gc.abs());
                for (o, bv) in gb.iter_mut().zip(b.row(c)) {
                    *o += gc * bv;
                }
            }
            curvature += gb.iter().map(|v| v * v).sum::<f64>();
        }
        report.gradient_norm = gmax;
        if !(gg.is_finite() && curvature.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        if gmax <= cfg.tol_inner {
            report.converged = true;
            break;
        }
        let mut alpha = cfg.step_alpha;
        while alpha * curvature > (1.0 - ARMIJO) * gg && alpha >= MIN_STEP {
            alpha *= 0.5;
        }
        report.iterations += 1;
        if alpha < MIN_STEP {
            debug!("gradient solver stalled at |g| = {:e}", report.gradient_norm);
            break;
        }
        let mut k = 0;
        for (r, cols) in &rows {
            for &c in cols {
                m.0[(*r, c)] -= alpha * g[k];
                k += 1;
            }
        }
    }
    if !report.converged {
        report.gradient_norm = gradient_m(x, &m, a).max_abs();
        report.converged = report.gradient_norm <= cfg.tol_inner;
    }
    Ok((m, report))
}

/// The stationarity system of `M` with `A` fixed, assembled over all missing
/// cells at once.
///
/// With `P = (A − I)(A − I)ᵀ` and `Q = −XP`, each missing cell `(r, c)`
/// contributes the equation `Σ_{c'} P[c'][c]·M[r][c'] = Q[r][c]`, the sum
/// running over the missing cells `c'` of the same row. Returns the `k×k`
/// matrix, the right-hand side, and the cell of each unknown (row-major order).
pub fn restricted_system(
    x: &DesignMatrix,
    a: &CoefficientMatrix,
) -> (Matrix, Vec<f64>, Vec<(usize, usize)>) {
    let cells: Vec<(usize, usize)> = x.missing_cells().collect();
    let k = cells.len();
    let (p, q) = stationarity_terms(x, a);
    let mut sys = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    let mut start = 0;
    while start < k {
        let row = cells[start].0;
        let end = start + cells[start..].iter().take_while(|c| c.0 == row).count();
        for e in start..end {
            let c = cells[e].1;
            rhs[e] = q[(row, c)];
            for u in start..end {
                sys[(e, u)] = p[(cells[u].1, c)];
            }
        }
        start = end;
    }
    (sys, rhs, cells)
}

fn stationarity_terms(x: &DesignMatrix, a: &CoefficientMatrix) -> (Matrix, Matrix) {
    let b = a.minus_identity();
    let p = b.matmul(&b.transpose()).expect("square");
    let mut q = x.x.matmul(&p).expect("shapes checked by construction");
    for v in q.as_mut_slice() {
        *v = -*v;
    }
    (p, q)
}

/// Exact minimization over `M` with `A` fixed.
///
/// Solves the system of [`restricted_system`]. Rows of `M` do not interact, so
/// the system is block diagonal and each row's block is solved on its own.
pub fn update_m_closed_form(x: &DesignMatrix, a: &CoefficientMatrix) -> Result<ImputationMatrix> {
    let mut m = ImputationMatrix::zeros(x);
    if x.missing_cells().next().is_none() {
        return Ok(m);
    }
    let (p, q) = stationarity_terms(x, a);
    let d = x.n_features();
    let mut cols = Vec::with_capacity(d);
    for row in 0..x.n_rows() {
        cols.clear();
        cols.extend((0..d).filter(|&c| x.is_missing(row, c)));
        if cols.is_empty() {
            continue;
        }
        let block = Matrix::from_fn(cols.len(), cols.len(), |e, u| p[(cols[u], cols[e])]);
        let rhs: Vec<f64> = cols.iter().map(|&c| q[(row, c)]).collect();
        let sol = linalg::solve_linear_system(&block, &rhs)?;
        for (&c, v) in cols.iter().zip(sol) {
            m.0[(row, c)] = v;
        }
    }
    Ok(m)
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub design: DesignMatrix,
    pub a: CoefficientMatrix,
    pub m: ImputationMatrix,
    /// Objective after every half-step: `[L(A₁,M₀), L(A₁,M₁), L(A₂,M₁), …]`.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Closed-form half-steps that hit a singular system and fell back to
    /// gradient descent.
    pub fallbacks: usize,
}

impl FitResult {
    /// Max-norm of the restricted gradient at the returned `(A, M)`.
    pub fn gradient_norm(&self) -> f64 {
        gradient_m(&self.design, &self.m, &self.a).max_abs()
    }

    pub fn imputations(&self, variant: OutputVariant) -> Vec<Imputation> {
        imputations(&self.design, &self.m, &self.a, variant)
    }
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / (1.0 + prev.abs())
}

/// Fits the imputation model by alternating [`update_a`] and the configured
/// `M` update until the relative objective change drops below
/// `cfg.tol_outer`. Reaching `cfg.max_outer` returns the current iterate with
/// `converged = false`.
pub fn fit(ds: &Dataset, cfg: &OliConfig) -> Result<FitResult> {
    cfg.validate()?;
    ds.require_observed(2)?;
    let (n, d) = (ds.n_rows(), ds.n_cols());
    if n <= d + 1 {
        warn!("{n} rows for {d} features: the per-feature regressions are underdetermined");
    }

    let x = build_design(ds);
    let init = match cfg.init_method {
        InitMethod::Median => baseline::median_impute(ds)?,
        InitMethod::Mean => baseline::mean_impute(ds)?,
    };
    let mut m = ImputationMatrix::from_imputations(&x, &init)?;

    let mut trace = Vec::with_capacity(2 * cfg.max_outer);
    let mut converged = false;
    let mut fallbacks = 0;
    let mut outer = 0;
    let mut a = CoefficientMatrix(Matrix::identity(d + 1));
    let mut previous: Option<f64> = None;

    while outer < cfg.max_outer {
        outer += 1;
        a = update_a(&x, &m, cfg.lambda)?;
        let after_a = penalized_objective(&x, &m, &a, cfg.lambda);
        trace.push(after_a);

        let (next_m, inner_ok) = match cfg.m_solver {
            MSolver::ClosedForm => match update_m_closed_form(&x, &a) {
                Ok(next) => (next, true),
                Err(Error::Singular { .. }) => {
                    warn!("restricted system singular at outer iteration {outer}; using gradient descent");
                    fallbacks += 1;
                    let (next, rep) = update_m_gradient(&x, &m, &a, cfg)?;
                    (next, rep.converged)
                }
                Err(e) => return Err(e),
            },
            MSolver::Gradient => {
                let (next, rep) = update_m_gradient(&x, &m, &a, cfg)?;
                (next, rep.converged)
            }
        };
        let mut after_m = penalized_objective(&x, &next_m, &a, cfg.lambda);
        if after_m <= after_a {
            m = next_m;
        } else {
            // Only reachable through rounding in the exact solve.
            after_m = after_a;
        }
        trace.push(after_m);

        let reference = previous.unwrap_or(after_a);
        debug!("outer {outer}: L = {after_m:e}");
        if inner_ok && relative_change(reference, after_m) < cfg.tol_outer {
            converged = true;
            break;
        }
        previous = Some(after_m);
    }

    Ok(FitResult {
        design: x,
        a,
        m,
        objective_trace: trace,
        outer_iterations: outer,
        converged,
        fallbacks,
    })
}

/// The completed `N×d` data for the chosen output variant.
pub fn imputed_data(
    x: &DesignMatrix,
    m: &ImputationMatrix,
    a: &CoefficientMatrix,
    variant: OutputVariant,
) -> Matrix {
    let d = x.n_features();
    let z = x.completed(m);
    let mut out = Matrix::from_fn(x.n_rows(), d, |r, c| z[(r, c)]);
    if variant == OutputVariant::Regressed {
        let za = z.matmul(&a.0).expect("shapes checked by construction");
        for (r, c) in x.missing_cells() {
            out[(r, c)] = za[(r, c)];
        }
    }
    out
}

/// The imputed values at the missing cells, in row-major order.
pub fn imputations(
    x: &DesignMatrix,
    m: &ImputationMatrix,
    a: &CoefficientMatrix,
    variant: OutputVariant,
) -> Vec<Imputation> {
    let full = imputed_data(x, m, a, variant);
    x.missing_cells()
        .map(|(row, col)| Imputation {
            row,
            col,
            value: full[(row, col)],
        })
        .collect()
}
