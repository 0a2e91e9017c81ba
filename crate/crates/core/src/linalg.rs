//! Small dense linear-algebra kernel.
//!
//! Everything here works on the row-major [`Matrix`] type. The problems this
//! crate solves are at most a few dozen columns wide, so plain `O(n^3)`
//! factorizations are used throughout.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a factorization is declared singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factor `L` (lower triangular, positive diagonal) with `L Lᵀ = S`.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::Shape(format!("cholesky needs a square matrix, got {}x{}", n, s.cols())));
    }
    let scale = s.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale.max(1.0) {
                return Err(Error::NotSymmetric);
            }
        }
    }

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > SINGULAR_RTOL * scale) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Ridge-regularized least squares.
///
/// Minimizes `‖Xβ − y‖² + λ Σ_{j ≠ unpenalized} β_j²`. The coordinate named by
/// `unpenalized` (normally the intercept) is left out of the penalty. Solved by
/// Householder QR of the augmented system `[X; √λ·E] β ≈ [y; 0]`, which never
/// forms `XᵀX`.
pub fn least_squares(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    unpenalized: Option<usize>,
) -> Result<Vec<f64>> {
    let (n, p) = (x.rows(), x.cols());
    if n == 0 || p == 0 {
        return Err(Error::Shape(format!("least squares on a {n}x{p} design")));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("design has {n} rows but target has {}", y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("ridge weight must be finite and >= 0, got {lambda}")));
    }

    // Column-major working copy of the augmented design.
    let penalized: Vec<usize> = if lambda > 0.0 {
        (0..p).filter(|&j| Some(j) != unpenalized).collect()
    } else {
        Vec::new()
    };
    let m = n + penalized.len();
    let mut a = vec![0.0; m * p];
    for j in 0..p {
        let col = &mut a[j * m..(j + 1) * m];
        for i in 0..n {
            col[i] = x[(i, j)];
        }
    }
    let root = lambda.sqrt();
    for (k, &j) in penalized.iter().enumerate() {
        a[j * m + n + k] = root;
    }
    let mut b = vec![0.0; m];
    b[..n].copy_from_slice(y);

    let scale = (0..p)
        .map(|j| norm(&a[j * m..(j + 1) * m]))
        .fold(0.0, f64::max);

    let mut r_diag = vec![0.0; p];
    for k in 0..p {
        let (head, tail) = a.split_at_mut((k + 1) * m);
        let col = &mut head[k * m..];
        let alpha = norm(&col[k..]);
        if !(alpha > SINGULAR_RTOL * scale) {
            return Err(Error::Singular { index: k, pivot: alpha });
        }
        let sign = if col[k] >= 0.0 { 1.0 } else { -1.0 };
        // v = col[k..] + sign*alpha*e_k, stored in place.
        col[k] += sign * alpha;
        let vnorm2: f64 = col[k..].iter().map(|v| v * v).sum();
        r_diag[k] = -sign * alpha;
        let v = &col[k..];
        for jcol in tail.chunks_exact_mut(m) {
            let t = 2.0 * dot(v, &jcol[k..]) / vnorm2;
            for (c, vi) in jcol[k..].iter_mut().zip(v) {
                *c -= t * vi;
            }
        }
        let t = 2.0 * dot(v, &b[k..]) / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(v) {
            *c -= t * vi;
        }
    }

    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in (k + 1)..p {
            s -= a[j * m + k] * beta[j];
        }
        beta[k] = s / r_diag[k];
    }
    Ok(beta)
}

/// Solves `A x = b` by LU elimination with partial pivoting.
pub fn solve_linear_system(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let k = a.rows();
    if a.cols() != k || b.len() != k {
        return Err(Error::Shape(format!(
            "system is {}x{} with right-hand side of length {}",
            k,
            a.cols(),
            b.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let tol = SINGULAR_RTOL * a.max_abs();
    let mut lu = a.clone();
    let mut x = b.to_vec();

    for col in 0..k {
        let (piv, piv_val) = (col..k)
            .map(|r| (r, lu[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_val > tol) {
            return Err(Error::Singular { index: col, pivot: piv_val });
        }
        if piv != col {
            for j in 0..k {
                lu.as_mut_slice().swap(piv * k + j, col * k + j);
            }
            x.swap(piv, col);
        }
        let d = lu[(col, col)];
        for r in (col + 1)..k {
            let f = lu[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..k {
                lu[(r, j)] -= f * lu[(col, j)];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..k).rev() {
        let mut s = x[col];
        for j in (col + 1)..k {
            s -= lu[(col, j)] * x[j];
        }
        x[col] = s / lu[(col, col)];
    }
    Ok(x)
}

fn norm(v: &[f64]) -> f64 {
    // Scaled to avoid overflow on large inputs.
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let s = Matrix::from_rows(&[[1.0, 0.7], [0.7, 1.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        assert_close(l.as_slice(), &[1.0, 0.0, 0.7, 0.51f64.sqrt()], 1e-15);
        let back = l.matmul(&l.transpose()).unwrap();
        assert_close(back.as_slice(), s.as_slice(), 1e-12);
    }

    #[test]
    fn cholesky_indefinite() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&s), Err(Error::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn cholesky_asymmetric() {
        let s = Matrix::from_rows(&[[1.0, 0.5], [0.2, 1.0]]).unwrap();
        assert!(matches!(cholesky(&s), Err(Error::NotSymmetric)));
    }

    #[test]
    fn least_squares_exact_fit() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let beta = least_squares(&x, &[2.0, 4.0], 0.0, None).unwrap();
        assert_close(&beta, &[2.0], 1e-14);
    }

    #[test]
    fn least_squares_orthonormal_columns() {
        let s = 0.5f64.sqrt();
        let x = Matrix::from_rows(&[[s, s], [s, -s], [0.0, 0.0]]).unwrap();
        let y = [1.0, 3.0, 5.0];
        let beta = least_squares(&x, &y, 0.0, None).unwrap();
        let xty = x.transpose().mat_vec(&y).unwrap();
        assert_close(&beta, &xty, 1e-12);
    }

    #[test]
    fn least_squares_duplicated_column() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let y = [1.0, 2.0, 4.0];
        assert!(matches!(least_squares(&x, &y, 0.0, None), Err(Error::Singular { .. })));

        let lambda = 1e-6;
        let beta = least_squares(&x, &y, lambda, None).unwrap();
        assert!(beta.iter().all(|b| b.is_finite()));
        // With identical columns the ridge solution splits s = xᵀy / (xᵀx + λ/2) evenly.
        let s = 17.0 / (14.0 + lambda / 2.0);
        assert_close(&beta, &[s / 2.0, s / 2.0], 1e-8);

        let objective = |b: &[f64]| -> f64 {
            let r: f64 = (0..3)
                .map(|i| {
                    let e = x[(i, 0)] * b[0] + x[(i, 1)] * b[1] - y[i];
                    e * e
                })
                .sum();
            r + lambda * (b[0] * b[0] + b[1] * b[1])
        };
        // Brute-force grid around the solution: nothing beats it.
        let best = objective(&beta);
        let h = 1e-3;
        for i in -20..=20 {
            for j in -20..=20 {
                let cand = [beta[0] + i as f64 * h, beta[1] + j as f64 * h];
                assert!(objective(&cand) >= best - 1e-15);
            }
        }
    }

    #[test]
    fn least_squares_intercept_not_penalized() {
        // y = 10 + noise-free slope 0 on a centered regressor; huge λ only kills the slope.
        let x = Matrix::from_rows(&[[-1.0, 1.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let beta = least_squares(&x, &[9.0, 10.0, 14.0], 1e12, Some(1)).unwrap();
        assert!(beta[0].abs() < 1e-9);
        assert!((beta[1] - 11.0).abs() < 1e-9);
    }

    #[test]
    fn least_squares_rejects_bad_lambda() {
        let x = Matrix::identity(2);
        assert!(least_squares(&x, &[1.0, 2.0], -1.0, None).is_err());
        assert!(least_squares(&x, &[1.0, 2.0], f64::NAN, None).is_err());
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = [3.0, -1.0, 2.5];
        assert_close(&solve_linear_system(&Matrix::identity(3), &b).unwrap(), &b, 0.0);
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        assert_close(&solve_linear_system(&a, &[2.0, 8.0]).unwrap(), &[1.0, 2.0], 1e-15);
    }

    #[test]
    fn solve_singular() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert!(matches!(solve_linear_system(&a, &[1.0, 2.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn solve_needs_pivoting() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_close(&solve_linear_system(&a, &[5.0, 7.0]).unwrap(), &[7.0, 5.0], 0.0);
    }
}
