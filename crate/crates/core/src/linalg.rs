//! Minimal dense linear algebra over row-major `f64` matrices.
//!
//! Everything in this crate runs on tiny problems (a few hundred rows at
//! most), so the implementations favour clarity and determinism over speed:
//! plain loops, fixed accumulation order, no blocking, no threads.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Invariants: `data.len() == rows * cols`, `rows >= 1`, `cols >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape_mismatch(
                "Matrix::from_vec",
                format!("{rows}x{cols} ({} elements)", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::shape_mismatch("Matrix::from_rows", ">=1 rows", "0 rows"));
        }
        let ncols = rows[0].len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::shape_mismatch(
                    "Matrix::from_rows",
                    format!("row of length {ncols}"),
                    format!("row {i} of length {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(nrows, ncols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`, shapes `(m x k) * (k x n) -> (m x n)`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape_mismatch(
                "matmul",
                format!("lhs cols == rhs rows ({})", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let lhs_row = i * other.cols;
                let rhs_row = k * other.cols;
                for j in 0..other.cols {
                    out.data[lhs_row + j] += a * other.data[rhs_row + j];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Mean over rows, producing one value per column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.get(i, j);
            }
        }
        let n = self.rows as f64;
        for v in &mut out {
            *v /= n;
        }
        out
    }
}

// JSON form is a plain nested array of rows so that model files stay
// readable and tool-agnostic. serde_json prints f64 as the shortest
// round-trip decimal, so values survive a save/load cycle exactly.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.rows).map(|r| self.row(r)).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Returns the lower-triangular factor `L` with `L L^T = A`. Fails when a
/// pivot is not strictly positive.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::shape_mismatch(
            "cholesky",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Factorization(format!(
                        "matrix is not positive definite (pivot {sum:e} at index {i})"
                    )));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    if b.len() != n {
        return Err(Error::shape_mismatch("solve_lower", format!("{n}"), format!("{}", b.len())));
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Ok(x)
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    if b.len() != n {
        return Err(Error::shape_mismatch(
            "solve_lower_transpose",
            format!("{n}"),
            format!("{}", b.len()),
        ));
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Ok(x)
}

/// Solves `(L L^T) x = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let y = solve_lower(l, b)?;
    solve_lower_transpose(l, &y)
}

/// Least-squares solution of `A x = b` via Householder QR with column
/// scaling. Columns are scaled to unit infinity-norm before factorization,
/// which keeps narrow-interval polynomial bases well conditioned.
///
/// Fails when a column is (numerically) linearly dependent on the others.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let m = a.rows();
    let n = a.cols();
    if b.len() != m {
        return Err(Error::shape_mismatch("least_squares", format!("{m} rhs values"), format!("{}", b.len())));
    }
    if m < n {
        return Err(Error::Factorization(format!(
            "underdetermined system: {m} rows < {n} columns"
        )));
    }

    // Column scaling: divide each column by its max |entry|.
    let mut scale = vec![0.0_f64; n];
    for j in 0..n {
        let mut s = 0.0_f64;
        for i in 0..m {
            s = s.max(a.get(i, j).abs());
        }
        if s == 0.0 || !s.is_finite() {
            return Err(Error::Factorization(format!("column {j} is zero or non-finite")));
        }
        scale[j] = s;
    }

    let mut r = a.clone();
    for i in 0..m {
        for j in 0..n {
            let v = r.get(i, j) / scale[j];
            r.set(i, j, v);
        }
    }
    let mut rhs = b.to_vec();

    // Householder triangularization, applied to rhs on the fly.
    for j in 0..n {
        let mut norm = 0.0_f64;
        for i in j..m {
            norm += r.get(i, j) * r.get(i, j);
        }
        let norm = norm.sqrt();
        if norm < 1e-12 {
            return Err(Error::Factorization(format!(
                "rank-deficient design matrix (column {j})"
            )));
        }
        let alpha = if r.get(j, j) >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - j];
        v[0] = r.get(j, j) - alpha;
        for i in j + 1..m {
            v[i - j] = r.get(i, j);
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            // Apply H = I - 2 v v^T / (v^T v) to the remaining columns and rhs.
            for c in j..n {
                let mut dot = 0.0;
                for i in j..m {
                    dot += v[i - j] * r.get(i, c);
                }
                let f = 2.0 * dot / vtv;
                for i in j..m {
                    let val = r.get(i, c) - f * v[i - j];
                    r.set(i, c, val);
                }
            }
            let mut dot = 0.0;
            for i in j..m {
                dot += v[i - j] * rhs[i];
            }
            let f = 2.0 * dot / vtv;
            for i in j..m {
                rhs[i] -= f * v[i - j];
            }
        }
        r.set(j, j, alpha);
        for i in j + 1..m {
            r.set(i, j, 0.0);
        }
    }

    // Back substitution on the leading n x n triangle.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = rhs[i];
        for k in i + 1..n {
            sum -= r.get(i, k) * x[k];
        }
        let d = r.get(i, i);
        if d.abs() < 1e-12 {
            return Err(Error::Factorization(format!(
                "rank-deficient design matrix (pivot {d:e} at column {i})"
            )));
        }
        x[i] = sum / d;
    }

    // Undo column scaling.
    for j in 0..n {
        x[j] /= scale[j];
    }
    Ok(x)
}
