//! Dense vectors and matrices, plus the handful of factorizations the solvers need.
//!
//! Every reduction (dot products, norms, matrix-vector rows) goes through
//! [`dot`], which accumulates in eight fixed lanes and combines them in a fixed
//! order. The result does not depend on the platform or on the caller, so traces
//! are bit-reproducible.

use std::ops::{Add, Deref, DerefMut, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::LinalgError;

const LANES: usize = 8;

/// Fixed-order inner product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        let xa = &a[base..base + LANES];
        let xb = &b[base..base + LANES];
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Neumaier-compensated sum of a sequence of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        if !t.is_finite() || !sum.is_finite() {
            sum += t;
            continue;
        }
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    if sum.is_finite() {
        sum + comp
    } else {
        sum
    }
}

/// Inner product with compensated accumulation, for gap evaluations that
/// cancel heavily.
pub fn dot_compensated(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self((0..dim).map(f).collect())
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseVector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += alpha * v;
        }
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseVector {
        DenseVector(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &DenseVector, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        debug_assert_eq!(self.dim(), other.dim());
        DenseVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `alpha * self + beta * other`
    pub fn lincomb(&self, alpha: f64, other: &DenseVector, beta: f64) -> DenseVector {
        self.zip_map(other, |a, b| alpha * a + beta * b)
    }

    pub fn dist(&self, other: &DenseVector) -> f64 {
        (self - other).norm()
    }

    /// Concatenation `(self, other)`.
    pub fn concat(&self, other: &DenseVector) -> DenseVector {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        DenseVector(v)
    }

    /// Splits into the first `at` entries and the rest.
    pub fn split(&self, at: usize) -> (DenseVector, DenseVector) {
        (
            DenseVector(self.0[..at].to_vec()),
            DenseVector(self.0[at..].to_vec()),
        )
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for DenseVector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for DenseVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Add for &DenseVector {
    type Output = DenseVector;
    fn add(self, rhs: &DenseVector) -> DenseVector {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &DenseVector {
    type Output = DenseVector;
    fn sub(self, rhs: &DenseVector) -> DenseVector {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Neg for &DenseVector {
    type Output = DenseVector;
    fn neg(self) -> DenseVector {
        self.map(|v| -v)
    }
}

impl Mul<&DenseVector> for f64 {
    type Output = DenseVector;
    fn mul(self, rhs: &DenseVector) -> DenseVector {
        rhs.scaled(self)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
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

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows * cols != data.len() {
            return Err(LinalgError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index: i });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(LinalgError::Ragged {
                expected: c,
                found: bad.len(),
            });
        }
        Self::from_row_major(r, c, rows.concat())
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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector::from_fn(self.rows, |i| self[(i, j)])
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimMismatch {
                op: "add",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self + alpha * I`
    pub fn add_diag(&self, alpha: f64) -> DenseMatrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += alpha;
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Result<DenseVector, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::DimMismatch {
                op: "matvec",
                left: (self.rows, self.cols),
                right: (v.len(), 1),
            });
        }
        Ok(DenseVector::from_fn(self.rows, |i| dot(self.row(i), v)))
    }

    /// `selfᵀ v`, accumulated row by row.
    pub fn tmatvec(&self, v: &[f64]) -> Result<DenseVector, LinalgError> {
        if v.len() != self.rows {
            return Err(LinalgError::DimMismatch {
                op: "tmatvec",
                left: (self.cols, self.rows),
                right: (v.len(), 1),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        Ok(DenseVector::from(out))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimMismatch {
                op: "matmul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let ot = other.transpose();
        Ok(DenseMatrix::from_fn(self.rows, other.cols, |i, j| {
            dot(self.row(i), ot.row(j))
        }))
    }

    /// `selfᵀ self`
    pub fn gram(&self) -> DenseMatrix {
        let t = self.transpose();
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(t.row(i), t.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Spectral-norm estimate via power iteration on `selfᵀ self`.
    pub fn norm2_estimate(&self) -> f64 {
        let mut v = DenseVector::from_fn(self.cols, |i| 1.0 + 0.01 * ((i * 7919) % 97) as f64);
        let mut est = 0.0;
        for _ in 0..500 {
            let nv = v.norm();
            if nv == 0.0 {
                return 0.0;
            }
            v = v.scaled(1.0 / nv);
            let av = self.matvec(&v).expect("shape");
            let next = self.tmatvec(&av).expect("shape");
            let new_est = next.norm().sqrt();
            let done = (new_est - est).abs() <= 1e-14 * new_est;
            est = new_est;
            v = next;
            if done {
                break;
            }
        }
        est
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        DenseMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`DenseMatrix::matvec`].
pub fn matvec(a: &DenseMatrix, v: &DenseVector) -> Result<DenseVector, LinalgError> {
    a.matvec(v)
}

/// Lower-triangular Cholesky factor `S = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(s: &DenseMatrix) -> Result<Self, LinalgError> {
        if !s.is_square() {
            return Err(LinalgError::NotSquare {
                rows: s.rows(),
                cols: s.cols(),
            });
        }
        let n = s.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let d = s[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
            // A pivot that cancels to rounding level of its diagonal entry
            // means the matrix is singular to working precision.
            if !(d > s[(j, j)].abs() * n as f64 * f64::EPSILON) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let v = (s[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j])) / ljj;
                l[(i, j)] = v;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<DenseVector, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimMismatch {
                op: "cholesky solve",
                left: (n, n),
                right: (b.len(), 1),
            });
        }
        // L z = b
        let mut z = vec![0.0; n];
        for i in 0..n {
            let row = self.l.row(i);
            z[i] = (b[i] - dot(&row[..i], &z[..i])) / row[i];
        }
        // Lᵀ u = z, column-oriented so the inner loop runs over contiguous rows.
        let mut u = z;
        for i in (0..n).rev() {
            u[i] /= self.l[(i, i)];
            let ui = u[i];
            let row = self.l.row(i);
            for k in 0..i {
                u[k] -= row[k] * ui;
            }
        }
        Ok(DenseVector::from(u))
    }

    pub fn factor_matrix(&self) -> &DenseMatrix {
        &self.l
    }

    /// Explicit inverse, one solve per column.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e).expect("dims");
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Solves `S u = b` for symmetric positive definite `S` via Cholesky.
pub fn solve_spd(s: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, LinalgError> {
    Cholesky::factor(s)?.solve(b)
}

/// LU factorization with partial pivoting, for the few nonsymmetric systems
/// (implicit steps, transformed certificates).
#[derive(Clone, Debug)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
                return Err(LinalgError::Singular { pivot: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<DenseVector, LinalgError> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(LinalgError::DimMismatch {
                op: "lu solve",
                left: (n, n),
                right: (b.len(), 1),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            x[i] -= dot(&row[..i], &x[..i]);
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            x[i] = (x[i] - dot(&row[i + 1..], &x[i + 1..])) / row[i];
        }
        Ok(DenseVector::from(x))
    }

    /// Solves `Aᵀ x = b` with the same factorization.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<DenseVector, LinalgError> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(LinalgError::DimMismatch {
                op: "lu solve",
                left: (n, n),
                right: (b.len(), 1),
            });
        }
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ v = w, x = Pᵀ v.
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for (k, wk) in w.iter().enumerate().take(i) {
                s -= self.lu[(k, i)] * wk;
            }
            w[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for (k, wk) in w.iter().enumerate().skip(i + 1) {
                s -= self.lu[(k, i)] * wk;
            }
            w[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        Ok(DenseVector::from(x))
    }
}

pub fn solve_general(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, LinalgError> {
    Lu::factor(a)?.solve(b)
}

/// Largest-to-smallest eigenvalue ratio of a symmetric positive semidefinite
/// matrix, from power iteration (largest) and inverse power iteration through
/// a Cholesky factor (smallest). Returns `f64::INFINITY` when `s` is singular.
pub fn cond_estimate(s: &DenseMatrix) -> f64 {
    const ITERS: usize = 200;
    const SETTLE: f64 = 1e-12;
    let n = s.rows();
    if n == 0 {
        return 1.0;
    }
    let start = DenseVector::from_fn(n, |i| {
        1.0 + 0.37 * ((i * 2654435761usize) % 1000) as f64 / 1000.0
    });

    let rayleigh = |v: &DenseVector, sv: &DenseVector| v.dot(sv) / v.norm_sq();

    let mut v = start.clone();
    let mut lmax = 0.0;
    for _ in 0..ITERS {
        let sv = s.matvec(&v).expect("square");
        let est = rayleigh(&v, &sv);
        let nrm = sv.norm();
        if nrm == 0.0 {
            return f64::INFINITY;
        }
        let settled = (est - lmax).abs() <= SETTLE * est.abs();
        lmax = est;
        v = sv.scaled(1.0 / nrm);
        if settled {
            break;
        }
    }

    let chol = match Cholesky::factor(s) {
        Ok(c) => c,
        Err(_) => return f64::INFINITY,
    };
    let mut v = start;
    let mut lmin = f64::INFINITY;
    for _ in 0..ITERS {
        let w = chol.solve(&v).expect("square");
        // Rayleigh quotient of S⁻¹ at v, inverted.
        let est = v.norm_sq() / v.dot(&w);
        let nrm = w.norm();
        if !nrm.is_finite() || nrm == 0.0 {
            return f64::INFINITY;
        }
        let settled = (est - lmin).abs() <= SETTLE * est.abs();
        lmin = est;
        v = w.scaled(1.0 / nrm);
        if settled {
            break;
        }
    }
    if !(lmin > 0.0) || lmax / lmin > 1e300 {
        return f64::INFINITY;
    }
    lmax / lmin
}

/// Minimum-norm least-squares solution of `a x = b` through an SVD, treating
/// singular values below `1e-12·σ_max` as zero.
pub fn lstsq_min_norm(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, LinalgError> {
    if a.rows() != b.dim() {
        return Err(LinalgError::DimMismatch {
            op: "lstsq",
            left: (a.rows(), a.cols()),
            right: (b.dim(), 1),
        });
    }
    let m = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let svd = m.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rhs = nalgebra::DVector::from_column_slice(b.as_slice());
    let x = svd
        .solve(&rhs, 1e-12 * smax)
        .expect("both factors computed");
    Ok(DenseVector::from(x.as_slice()))
}

/// Exact extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn symmetric_extreme_eigenvalues(s: &DenseMatrix) -> (f64, f64) {
    let n = s.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let eig = nalgebra::SymmetricEigen::new(m);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matvec_examples() {
        let i3 = DenseMatrix::identity(3);
        assert_eq!(
            i3.matvec(&[1.0, 2.0, 3.0]).unwrap().as_slice(),
            &[1.0, 2.0, 3.0]
        );
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap().as_slice(), &[3.0, 7.0]);
        assert_eq!(a.matvec(&[0.0, 0.0]).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn matvec_dimension_mismatch_is_an_error() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            a.matvec(&[1.0, 2.0]),
            Err(LinalgError::DimMismatch { .. })
        ));
        assert!(a.tmatvec(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn matvec_is_linear() {
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let a = rng.normal_matrix(7, 13, 1.0);
            let u = rng.normal_vector(13);
            let v = rng.normal_vector(13);
            let (al, be) = (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
            let lhs = a.matvec(&u.lincomb(al, &v, be)).unwrap();
            let rhs = a
                .matvec(&u)
                .unwrap()
                .lincomb(al, &a.matvec(&v).unwrap(), be);
            let scale = 1.0 + rhs.norm();
            assert!(lhs.dist(&rhs) <= 1e-12 * scale);
        }
    }

    #[test]
    fn tmatvec_matches_transpose() {
        let mut rng = Rng::new(3);
        let a = rng.normal_matrix(9, 4, 1.0);
        let v = rng.normal_vector(9);
        let lhs = a.tmatvec(&v).unwrap();
        let rhs = a.transpose().matvec(&v).unwrap();
        assert!(lhs.dist(&rhs) < 1e-13);
    }

    #[test]
    fn solve_spd_examples() {
        let b = DenseVector::from([3.0, -1.0, 2.5]);
        assert_eq!(solve_spd(&DenseMatrix::identity(3), &b).unwrap(), b);
        let x = solve_spd(
            &DenseMatrix::identity(2).scaled(2.0),
            &DenseVector::from([4.0, 6.0]),
        )
        .unwrap();
        assert!(close(&x, &[2.0, 3.0], 1e-15));
        let x = solve_spd(
            &DenseMatrix::diag(&[1.0, 4.0]),
            &DenseVector::from([1.0, 4.0]),
        )
        .unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn solve_spd_round_trip_on_random_spd() {
        let mut rng = Rng::new(5);
        for n in [1usize, 2, 5, 17, 40] {
            let g = rng.normal_matrix(n + 3, n, 1.0);
            let s = g.gram().add_diag(1.0);
            let b = rng.normal_vector(n);
            let u = solve_spd(&s, &b).unwrap();
            let r = &s.matvec(&u).unwrap() - &b;
            assert!(
                r.norm() <= 1e-10 * (1.0 + b.norm()),
                "n={n} residual {}",
                r.norm()
            );
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let s = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 2.0, 1.0],
        ])
        .unwrap();
        match Cholesky::factor(&s) {
            Err(LinalgError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
        let msg = Cholesky::factor(&s).unwrap_err().to_string();
        assert!(msg.contains("pivot 2"), "{msg}");
    }

    #[test]
    fn lu_solves_nonsymmetric_and_transpose() {
        let mut rng = Rng::new(8);
        let a = rng.normal_matrix(6, 6, 1.0).add_diag(3.0);
        let b = rng.normal_vector(6);
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&b).unwrap();
        assert!((&a.matvec(&x).unwrap() - &b).norm() < 1e-12);
        let xt = lu.solve_transpose(&b).unwrap();
        assert!((&a.tmatvec(&xt).unwrap() - &b).norm() < 1e-12);
        assert!(matches!(
            Lu::factor(&DenseMatrix::zeros(2, 2)),
            Err(LinalgError::Singular { pivot: 0 })
        ));
    }

    #[test]
    fn cond_estimate_examples() {
        assert!((cond_estimate(&DenseMatrix::identity(4)) - 1.0).abs() < 1e-2);
        assert!((cond_estimate(&DenseMatrix::diag(&[1.0, 100.0])) - 100.0).abs() < 1.0);
        assert!(cond_estimate(&DenseMatrix::diag(&[1.0, 0.0])).is_infinite());
    }

    #[test]
    fn cond_estimate_agrees_with_exact_eigenvalues() {
        let mut rng = Rng::new(21);
        let g = rng.normal_matrix(30, 20, 1.0);
        let s = g.gram().add_diag(0.5);
        let (lo, hi) = symmetric_extreme_eigenvalues(&s);
        let est = cond_estimate(&s);
        assert!(
            ((est - hi / lo) / (hi / lo)).abs() < 1e-2,
            "{est} vs {}",
            hi / lo
        );
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(terms), 2.0);
    }

    #[test]
    fn dot_is_fixed_order() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 1.91).cos()).collect();
        let first = dot(&a, &b);
        for _ in 0..5 {
            assert_eq!(dot(&a, &b).to_bits(), first.to_bits());
        }
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((first - naive).abs() < 1e-13);
    }

    #[test]
    fn matrix_json_is_row_major_nested() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let back: DenseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<DenseMatrix>("[[1.0],[2.0,3.0]]").is_err());
    }
}
