//! Dense linear algebra and a fixed-step ODE kernel.
//!
//! Problem sizes in this crate are small (tens of rows at most), so every
//! matrix is a dense row-major `Vec<f64>` and every operation allocates its
//! result. Column vectors are `n x 1` matrices.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
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

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::dim("matrix has no rows"));
        }
        let c = rows[0].len();
        if c == 0 {
            return Err(Error::dim("matrix has no columns"));
        }
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::dim(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    c
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(|r| r.to_vec()).collect()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    pub fn try_add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same(rhs, "add")?;
        Ok(self.zip_with(rhs, |a, b| a + b))
    }

    pub fn try_sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same(rhs, "subtract")?;
        Ok(self.zip_with(rhs, |a, b| a - b))
    }

    fn check_same(&self, rhs: &Matrix, what: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(format!(
                "cannot {} {}x{} and {}x{}",
                what, self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`, shapes must agree.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn symmetrize(&self) -> Matrix {
        debug_assert!(self.is_square());
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Copies the `rows x cols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let src = &self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + cols];
            out.data[i * cols..(i + 1) * cols].copy_from_slice(src);
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Matrix) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "block out of range"
        );
        for i in 0..b.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(&b.data[i * b.cols..(i + 1) * b.cols]);
        }
    }

    pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for b in blocks {
            out.set_block(r, c, b);
            r += b.rows;
            c += b.cols;
        }
        out
    }

    pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::dim("vstack blocks differ in column count"));
        }
        let mut data = Vec::new();
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        Ok(Matrix { rows, cols, data })
    }

    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::dim("hstack blocks differ in row count"));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut c = 0;
        for b in blocks {
            out.set_block(0, c, b);
            c += b.cols;
        }
        Ok(out)
    }

    /// `x' self x` for a column vector `x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        debug_assert!(self.is_square() && self.rows == x.len());
        let n = self.rows;
        let mut acc = 0.0;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += x[i] * s;
        }
        acc
    }

    /// Matrix-vector product on plain slices, `y = self x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, x.len());
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `y += self x` on plain slices.
    pub fn mul_vec_acc(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(self.cols, x.len());
        debug_assert_eq!(self.rows, y.len());
        for (yi, row) in y.iter_mut().zip(self.data.chunks(self.cols)) {
            *yi += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
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

// Operator impls panic on shape mismatch; fallible code paths use the
// `try_*` / `matmul` methods instead.
impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix add")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix sub")
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).expect("matrix mul")
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)) {
            writeln!(f, "  {:?}", row)?;
        }
        write!(f, "]")
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl SymEigResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Rebuilds `V diag(g(lambda)) V'`.
    pub fn map_spectrum(&self, g: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let gk = g(self.eigenvalues[k]);
            for i in 0..n {
                let vik = v[(i, k)] * gk;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        out
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(m + m')/2` first. Sweeps stop once the
/// off-diagonal Frobenius norm drops below `1e-12` relative to the full norm.
pub fn sym_eig(m: &Matrix) -> Result<SymEigResult> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();

    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt();
            if off <= JACOBI_TOL * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

pub fn lambda_min(m: &Matrix) -> Result<f64> {
    Ok(sym_eig(m)?.min())
}

pub fn lambda_max(m: &Matrix) -> Result<f64> {
    Ok(sym_eig(m)?.max())
}

/// Lower-triangular Cholesky factor `L` with `m = L L'`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "Cholesky needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                context: "Cholesky factorization".into(),
                pivot: j,
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `m x = rhs` for symmetric positive definite `m`.
pub fn solve_spd(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if rhs.rows != m.rows {
        return Err(Error::dim(format!(
            "right-hand side has {} rows, system has {}",
            rhs.rows, m.rows
        )));
    }
    let l = cholesky(m)?;
    let n = m.rows;
    let mut x = rhs.clone();
    for c in 0..rhs.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

pub fn inverse_spd(m: &Matrix) -> Result<Matrix> {
    solve_spd(m, &Matrix::identity(m.rows))
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    if eig.min() < -1e-12 * eig.max().abs().max(1.0) {
        return Err(Error::NotPositiveDefinite {
            context: "matrix square root".into(),
            pivot: 0,
        });
    }
    Ok(eig.map_spectrum(|l| l.max(0.0).sqrt()))
}

/// One classical fourth-order Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<F>(mut f: F, t: f64, y: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(f64, &Matrix) -> Result<Matrix>,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step size must be positive, got {h}")));
    }
    let check = |k: Matrix, ts: f64| -> Result<Matrix> {
        if y.shape() != k.shape() {
            return Err(Error::dim("derivative shape differs from state shape"));
        }
        if !k.is_finite() {
            return Err(Error::Integration {
                t: ts,
                reason: "non-finite derivative".into(),
            });
        }
        Ok(k)
    };
    let half = 0.5 * h;
    let k1 = check(f(t, y)?, t)?;
    let mut y2 = y.clone();
    y2.axpy(half, &k1);
    let k2 = check(f(t + half, &y2)?, t + half)?;
    let mut y3 = y.clone();
    y3.axpy(half, &k2);
    let k3 = check(f(t + half, &y3)?, t + half)?;
    let mut y4 = y.clone();
    y4.axpy(h, &k3);
    let k4 = check(f(t + h, &y4)?, t + h)?;

    let mut out = y.clone();
    let w = h / 6.0;
    out.axpy(w, &k1);
    out.axpy(2.0 * w, &k2);
    out.axpy(2.0 * w, &k3);
    out.axpy(w, &k4);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    fn det(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut a = m.clone();
        let mut d = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs()))
                .unwrap();
            if a[(p, c)] == 0.0 {
                return 0.0;
            }
            if p != c {
                for k in 0..n {
                    let tmp = a[(c, k)];
                    a[(c, k)] = a[(p, k)];
                    a[(p, k)] = tmp;
                }
                d = -d;
            }
            d *= a[(c, c)];
            for r in (c + 1)..n {
                let f = a[(r, c)] / a[(c, c)];
                for k in c..n {
                    a[(r, k)] -= f * a[(c, k)];
                }
            }
        }
        d
    }

    /// Roots of det(A - lambda I) found by scanning for sign changes and
    /// bisecting each bracket; independent of the Jacobi iteration.
    fn char_poly_roots(m: &Matrix) -> Vec<f64> {
        let n = m.rows();
        let bound = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
            + 1.0;
        let p = |l: f64| det(&(m - &Matrix::scaled_identity(n, l)));
        let samples = 20000;
        let mut roots = Vec::new();
        let mut prev_x = -bound;
        let mut prev = p(prev_x);
        for k in 1..=samples {
            let x = -bound + 2.0 * bound * k as f64 / samples as f64;
            let v = p(x);
            if prev == 0.0 {
                roots.push(prev_x);
            } else if prev.signum() != v.signum() && v != 0.0 {
                let (mut lo, mut hi) = (prev_x, x);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if p(mid).signum() == p(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev_x = x;
            prev = v;
        }
        roots
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn swap_matrix_eigenvalues() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_5x5_matches_determinant_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_sym(5, &mut rng);
        let roots = char_poly_roots(&m);
        let e = sym_eig(&m).unwrap();
        assert_eq!(roots.len(), 5, "roots {roots:?}");
        for (r, l) in roots.iter().zip(&e.eigenvalues) {
            assert!((r - l).abs() < 1e-9, "{r} vs {l}");
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 4, 7, 12] {
            let m = random_sym(n, &mut rng);
            let e = sym_eig(&m).unwrap();
            let rebuilt = e.map_spectrum(|l| l);
            assert!((&rebuilt - &m).frobenius_norm() <= 1e-10 * m.frobenius_norm());
            let vtv = &e.eigenvectors.transpose() * &e.eigenvectors;
            assert!((&vtv - &Matrix::identity(n)).max_abs() < 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn lambda_min_matches_rayleigh_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_sym(4, &mut rng);
        let lmin = lambda_min(&m).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm: f64 = x.iter().map(|v| v * v).sum();
            best = best.min(m.quad_form(&x) / nrm);
        }
        // Every Rayleigh quotient bounds lambda_min from above.
        assert!(best >= lmin - 1e-8);
        // The eigenvector itself attains it.
        let e = sym_eig(&m).unwrap();
        let v0 = e.eigenvectors.block(0, 0, 4, 1).into_vec();
        assert!((m.quad_form(&v0) - lmin).abs() < 1e-8);
    }

    #[test]
    fn sym_eig_rejects_non_square() {
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = Matrix::column(&[3.0, -1.0]);
        assert_eq!(solve_spd(&Matrix::identity(2), &b).unwrap(), b);
        let x = solve_spd(&Matrix::diag(&[2.0, 4.0]), &Matrix::column(&[2.0, 4.0])).unwrap();
        assert!((&x - &Matrix::column(&[1.0, 1.0])).max_abs() < 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Matrix::from_vec(4, 4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let a = &(&g.transpose() * &g) + &Matrix::identity(4);
        let rhs = Matrix::from_vec(4, 2, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let x = solve_spd(&a, &rhs).unwrap();
        let res = (&(&a * &x) - &rhs).frobenius_norm();
        assert!(res <= 1e-9 * (a.frobenius_norm() * x.frobenius_norm() + rhs.frobenius_norm()));
    }

    #[test]
    fn solve_names_failing_pivot() {
        let m = Matrix::diag(&[1.0, 2.0, -1.0]);
        match solve_spd(&m, &Matrix::column(&[1.0, 1.0, 1.0])) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rk4_constant_and_exponential() {
        let c = Matrix::column(&[2.5]);
        let y = rk4_step(|_, y| Ok(Matrix::zeros(y.rows(), 1)), 0.0, &c, 0.3).unwrap();
        assert_eq!(y, c);

        let y = rk4_step(|_, y| Ok(y.clone()), 0.0, &Matrix::column(&[1.0]), 0.1).unwrap();
        assert!((y[(0, 0)] - 0.1f64.exp()).abs() <= 1e-7);
    }

    #[test]
    fn rk4_tanh() {
        let mut y = Matrix::column(&[0.0]);
        let h = 0.01;
        for k in 0..100 {
            y = rk4_step(
                |_, y| Ok(Matrix::column(&[1.0 - y[(0, 0)] * y[(0, 0)]])),
                k as f64 * h,
                &y,
                h,
            )
            .unwrap();
        }
        assert!((y[(0, 0)] - 1f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn rk4_fourth_order_on_linear_system() {
        // y' = M y with M = [[0, 1], [-4, -0.5]]; reference from a very fine run.
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![-4.0, -0.5]]).unwrap();
        let run = |h: f64, steps: usize| {
            let mut y = Matrix::column(&[1.0, 0.0]);
            for k in 0..steps {
                y = rk4_step(|_, y| Ok(&m * y), k as f64 * h, &y, h).unwrap();
            }
            y
        };
        let reference = run(1e-4, 20000);
        let e1 = (&run(0.1, 20) - &reference).max_abs();
        let e2 = (&run(0.05, 40) - &reference).max_abs();
        assert!(e1 / e2 >= 14.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn rk4_reports_non_finite() {
        let err = rk4_step(
            |t, _| Ok(Matrix::column(&[if t > 0.0 { f64::NAN } else { 0.0 }])),
            0.0,
            &Matrix::column(&[1.0]),
            0.1,
        )
        .unwrap_err();
        match err {
            Error::Integration { t, .. } => assert!((t - 0.05).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let s = sqrt_psd(&m).unwrap();
        assert!((&(&s * &s) - &m).max_abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eig_reconstructs(entries in proptest::collection::vec(-5.0f64..5.0, 36)) {
                let a = Matrix::from_vec(6, 6, entries).unwrap().symmetrize();
                let e = sym_eig(&a).unwrap();
                let rebuilt = e.map_spectrum(|l| l);
                prop_assert!((&rebuilt - &a).frobenius_norm() <= 1e-10 * a.frobenius_norm().max(1e-300));
            }
        }
    }
}
