#![allow(dead_code)]

use linimpute::baseline;
use linimpute::dataset::{self, HeldOut, Imputation};
use linimpute::oli::{self, DesignMatrix, ImputationMatrix, OliConfig};
use linimpute::{Dataset, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n×d` draws from a two-factor model with unit noise, so features are
/// correlated but the design is full rank.
pub fn factor_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let loadings: Vec<[f64; 2]> = (0..d)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();
    let mut m = Matrix::zeros(n, d);
    for r in 0..n {
        let f: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        for c in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            m[(r, c)] = loadings[c][0] * f[0] + loadings[c][1] * f[1] + 0.5 * e;
        }
    }
    m
}

/// A standardized random instance with MCAR missingness at `rate`.
pub fn masked_instance(seed: u64, n: usize, d: usize, rate: f64) -> (Dataset, HeldOut) {
    let mut r = rng(seed);
    let data = factor_data(&mut r, n, d);
    let (std, _) = dataset::standardize(&Dataset::complete(data).unwrap()).unwrap();
    for attempt in 0.. {
        if let Ok(out) = dataset::inject_missing(&std, rate, seed.wrapping_add(attempt * 7919)) {
            if out.0.n_missing() > 0 {
                return out;
            }
        }
    }
    unreachable!()
}

pub fn iris_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/iris.csv")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn perturbed_start(x: &DesignMatrix, ds: &Dataset, seed: u64) -> ImputationMatrix {
    let mut r = rng(seed ^ 0x5eed);
    let imps: Vec<Imputation> = baseline::median_impute(ds)
        .unwrap()
        .into_iter()
        .map(|i| Imputation {
            value: i.value + r.sample::<f64, _>(StandardNormal),
            ..i
        })
        .collect();
    ImputationMatrix::from_imputations(x, &imps).unwrap()
}

pub fn cell_values(m: &ImputationMatrix, x: &DesignMatrix) -> Vec<f64> {
    x.missing_cells().map(|(r, c)| m.get(r, c)).collect()
}

/// Largest `|g − fd| / max(|g|, |fd|, 1)` over the missing cells, with `fd`
/// the central difference at `h = 1e-5` around a non-stationary point.
pub fn gradient_fd_error(ds: &Dataset, seed: u64) -> f64 {
    let x = oli::build_design(ds);
    let m0 = ImputationMatrix::from_imputations(&x, &baseline::median_impute(ds).unwrap()).unwrap();
    let a = oli::update_a(&x, &m0, 0.0).unwrap();
    let m = perturbed_start(&x, ds, seed);
    let g = oli::gradient_m(&x, &m, &a);
    let cells: Vec<(usize, usize)> = x.missing_cells().collect();
    let base: Vec<Imputation> = cells
        .iter()
        .map(|&(row, col)| Imputation { row, col, value: m.get(row, col) })
        .collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..cells.len() {
        let shifted = |delta: f64| {
            let mut imps = base.clone();
            imps[k].value += delta;
            oli::objective(&x, &ImputationMatrix::from_imputations(&x, &imps).unwrap(), &a)
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let an = g[cells[k]];
        worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1.0));
    }
    worst
}

/// Largest elementwise gap between the exact and the gradient `M` update
/// from the same `A` and starting point.
pub fn solver_gap(ds: &Dataset, seed: u64) -> f64 {
    let x = oli::build_design(ds);
    let m0 = ImputationMatrix::from_imputations(&x, &baseline::median_impute(ds).unwrap()).unwrap();
    let a = oli::update_a(&x, &m0, 0.0).unwrap();
    let exact = oli::update_m_closed_form(&x, &a).unwrap();
    let cfg = OliConfig { tol_inner: 1e-10, max_inner: 200_000, ..Default::default() };
    let (descent, report) = oli::update_m_gradient(&x, &perturbed_start(&x, ds, seed), &a, &cfg).unwrap();
    assert!(report.converged, "gradient solver stopped at |g| = {}", report.gradient_norm);
    max_abs_diff(&cell_values(&exact, &x), &cell_values(&descent, &x))
}
