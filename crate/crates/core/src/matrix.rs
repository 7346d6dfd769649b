//! Dense real matrices and the handful of spectral tools the rest of the
//! crate needs: cyclic Jacobi eigendecomposition, Kronecker products,
//! spectral norms, commutation defects and simultaneous diagonalization
//! of commuting symmetric pairs.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symmetry tolerance accepted by [`sym_eig`], relative to `max(1, max|s_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default relative commutation tolerance for pattern pairs.
pub const COMMUTE_TOL: f64 = 1e-8;

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("pattern matrices do not commute (defect {defect:e} > tolerance {tol:e})")]
    NotCommuting { defect: f64, tol: f64 },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("ragged rows: row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
}

/// Row-major dense matrix of finite reals.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        let m = Matrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cols {
                return Err(MatrixError::Ragged { row: i, len: row.len(), expected: n_cols });
            }
            data.extend(row);
        }
        Matrix::from_row_major(n_rows, n_cols, data)
    }

    /// Convenience for literals in tests and the built-in scenario. Panics on
    /// ragged or non-finite input.
    pub fn from_slice_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).expect("well-formed literal matrix")
    }

    fn check_finite(&self) -> Result<(), MatrixError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(MatrixError::NonFinite { row: k / self.cols.max(1), col: k % self.cols.max(1) }),
            None => Ok(()),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        self.data.chunks(self.cols.max(1)).take(self.rows).map(|row| dot(row, x)).collect()
    }

    /// `out += self * x` without allocating.
    pub fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.cols.max(1))) {
            *o += dot(row, x);
        }
    }

    pub fn try_matmul(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn try_add(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, MatrixError> {
        if self.dims() != rhs.dims() {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute off-diagonal entry.
    pub fn off_diagonal_max(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    m = m.max(self[(i, j)].abs());
                }
            }
        }
        m
    }

    /// `max |s_ij - s_ji|`, or infinity for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol * self.max_abs().max(1.0)
    }

    /// `(S + Sᵀ)/2`.
    pub fn symmetric_part(&self) -> Matrix {
        let t = self.transpose();
        self.zip_with(&t, |a, b| 0.5 * (a + b)).expect("square matrix")
    }

    /// Copy of the `rows x cols` window whose top-left corner is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        let mut b = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Matrix) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = MatrixError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
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
        for row in self.to_rows() {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

// Operator impls panic on shape mismatch; the fallible `try_*` methods are
// the checked path.
impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &'a Matrix) -> Matrix {
        self.try_matmul(rhs).expect("matrix product dimensions")
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn add(self, rhs: &'a Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix sum dimensions")
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &'a Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix difference dimensions")
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vec_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (br, bc) = b.dims();
    let mut out = Matrix::zeros(a.rows * br, a.cols * bc);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as the
/// columns of `eigenvectors`, paired by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl SymEigResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps visit `(p, q)` pairs in row order, so results are bit-for-bit
/// reproducible. The input must be symmetric to within [`SYMMETRY_TOL`];
/// the strictly lower triangle is ignored after that check.
pub fn sym_eig(s: &Matrix) -> Result<SymEigResult, MatrixError> {
    if !s.is_square() {
        return Err(MatrixError::NotSquare { rows: s.rows, cols: s.cols });
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(MatrixError::NotSymmetric { asymmetry: s.asymmetry() });
    }
    let n = s.rows;
    let mut a = s.symmetric_part();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| a[(i, j)] * a[(i, j)]).sum();
        if off.sqrt() <= f64::EPSILON * scale || off == 0.0 {
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
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, new)] = v[(k, old)];
        }
    }
    Ok(SymEigResult { eigenvalues, eigenvectors })
}

/// Eigenvalues only of a symmetric matrix, ascending.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>, MatrixError> {
    Ok(sym_eig(s)?.eigenvalues)
}

/// Spectral norm `sqrt(λ_max(MᵀM))`.
pub fn induced_norm2(m: &Matrix) -> f64 {
    if m.rows == 0 || m.cols == 0 {
        return 0.0;
    }
    let gram = if m.rows < m.cols { m * &m.transpose() } else { &m.transpose() * m };
    let lmax = sym_eig(&gram.symmetric_part()).expect("gram matrix is symmetric").max();
    lmax.max(0.0).sqrt()
}

/// Spectral norm of the commutator `p1 p2 - p2 p1`.
pub fn commute_defect(p1: &Matrix, p2: &Matrix) -> Result<f64, MatrixError> {
    if !p1.is_square() || p1.dims() != p2.dims() {
        return Err(MatrixError::DimensionMismatch(format!(
            "commutator of {}x{} and {}x{}",
            p1.rows, p1.cols, p2.rows, p2.cols
        )));
    }
    Ok(induced_norm2(&(&(p1 * p2) - &(p2 * p1))))
}

/// Orthogonal `u` with `uᵀ p1 u = diag(lambda1)` and `uᵀ p2 u = diag(lambda2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimultaneousDiag {
    pub u: Matrix,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// Mixing weight used when the two-stage method had to fall back to
    /// diagonalizing `p1 + θ p2`.
    pub theta: Option<f64>,
}

impl SimultaneousDiag {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.lambda1.iter().copied().zip(self.lambda2.iter().copied()).collect()
    }
}

/// Jointly diagonalize two commuting symmetric matrices.
///
/// `tol` is relative: the commutator must satisfy
/// `‖p1p2 − p2p1‖ ≤ tol·max(‖p1‖‖p2‖, 1)` and the off-diagonal residual of
/// both conjugations must end up below `tol·max(‖p1‖, ‖p2‖, 1)`.
///
/// Columns are ordered ascending by λ1; within a repeated λ1 they are
/// ascending by λ2.
pub fn simultaneous_diagonalize(p1: &Matrix, p2: &Matrix, tol: f64) -> Result<SimultaneousDiag, MatrixError> {
    for p in [p1, p2] {
        if !p.is_square() {
            return Err(MatrixError::NotSquare { rows: p.rows, cols: p.cols });
        }
        if !p.is_symmetric(SYMMETRY_TOL) {
            return Err(MatrixError::NotSymmetric { asymmetry: p.asymmetry() });
        }
    }
    let n1 = induced_norm2(p1);
    let n2 = induced_norm2(p2);
    let defect = commute_defect(p1, p2)?;
    let commute_tol = tol * (n1 * n2).max(1.0);
    if defect > commute_tol {
        return Err(MatrixError::NotCommuting { defect, tol: commute_tol });
    }
    let residual_tol = tol * n1.max(n2).max(1.0);

    let two_stage = diagonalize_two_stage(p1, p2)?;
    if joint_residual(p1, p2, &two_stage.u) <= residual_tol {
        return Ok(two_stage);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a3b);
    let mut best = two_stage;
    let mut best_res = f64::INFINITY;
    for _ in 0..8 {
        let theta: f64 = rng.gen_range(0.25..4.0);
        let cand = diagonalize_combined(p1, p2, theta)?;
        let res = joint_residual(p1, p2, &cand.u);
        if res < best_res {
            best_res = res;
            best = cand;
        }
        if res <= residual_tol {
            break;
        }
    }
    Ok(best)
}

fn joint_residual(p1: &Matrix, p2: &Matrix, u: &Matrix) -> f64 {
    let ut = u.transpose();
    let d1 = &(&ut * p1) * u;
    let d2 = &(&ut * p2) * u;
    d1.off_diagonal_max().max(d2.off_diagonal_max())
}

fn diagonalize_two_stage(p1: &Matrix, p2: &Matrix) -> Result<SimultaneousDiag, MatrixError> {
    let n = p1.rows();
    let e1 = sym_eig(p1)?;
    let cluster_tol = 1e-8 * induced_norm2(p1).max(1.0);

    let mut u = Matrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && e1.eigenvalues[end] - e1.eigenvalues[end - 1] <= cluster_tol {
            end += 1;
        }
        let basis = e1.eigenvectors.block(0, start, n, end - start);
        if end - start == 1 {
            u.set_block(0, start, &basis);
        } else {
            let restricted = (&(&basis.transpose() * p2) * &basis).symmetric_part();
            let inner = sym_eig(&restricted)?;
            u.set_block(0, start, &(&basis * &inner.eigenvectors));
        }
        start = end;
    }
    Ok(finish(p1, p2, u, None))
}

/// Diagonalize `p1 + θ p2` and read both spectra off the common basis.
pub fn diagonalize_combined(p1: &Matrix, p2: &Matrix, theta: f64) -> Result<SimultaneousDiag, MatrixError> {
    let mix = p1 + &p2.scale(theta);
    let e = sym_eig(&mix.symmetric_part())?;
    let mut diag = finish(p1, p2, e.eigenvectors, Some(theta));
    sort_pairs(&mut diag);
    Ok(diag)
}

fn finish(p1: &Matrix, p2: &Matrix, u: Matrix, theta: Option<f64>) -> SimultaneousDiag {
    let ut = u.transpose();
    let lambda1 = (&(&ut * p1) * &u).diagonal();
    let lambda2 = (&(&ut * p2) * &u).diagonal();
    SimultaneousDiag { u, lambda1, lambda2, theta }
}

fn sort_pairs(d: &mut SimultaneousDiag) {
    let n = d.lambda1.len();
    let tie = 1e-8 * d.lambda1.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut order: Vec<usize> = (0..n).collect();
    // Quantize λ1 so ties compare equal and the sort stays a total order.
    let key = |i: usize| (d.lambda1[i] / tie).round() as i64;
    order.sort_by(|&i, &j| key(i).cmp(&key(j)).then(d.lambda2[i].total_cmp(&d.lambda2[j])));
    let mut u = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            u[(k, new)] = d.u[(k, old)];
        }
    }
    d.lambda1 = order.iter().map(|&i| d.lambda1[i]).collect();
    d.lambda2 = order.iter().map(|&i| d.lambda2[i]).collect();
    d.u = u;
}

/// Closed-form spectral radius of a nonnegative 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurVerdict {
    pub stable: bool,
    pub spectral_radius: f64,
}

pub fn schur_2x2_nonneg(m: &Matrix) -> Result<SchurVerdict, MatrixError> {
    if m.dims() != (2, 2) {
        return Err(MatrixError::DimensionMismatch(format!("expected 2x2, got {}x{}", m.rows, m.cols)));
    }
    for i in 0..2 {
        for j in 0..2 {
            if m[(i, j)] < 0.0 {
                return Err(MatrixError::NegativeEntry { row: i, col: j, value: m[(i, j)] });
            }
        }
    }
    let half_trace = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    // ((a-d)/2)² + bc, nonnegative for nonnegative entries.
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let disc = half_diff * half_diff + m[(0, 1)] * m[(1, 0)];
    let spectral_radius = half_trace + disc.max(0.0).sqrt();
    Ok(SchurVerdict { stable: spectral_radius < 1.0, spectral_radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_slice_rows(rows)
    }

    /// Symmetric circulant with the given first row.
    fn circulant(first: &[f64]) -> Matrix {
        let n = first.len();
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = first[(j + n - i) % n];
            }
        }
        c
    }

    fn p1() -> Matrix {
        circulant(&[1.0, -0.5, 0.0, 0.0, 0.0, -0.5])
    }

    fn p2() -> Matrix {
        circulant(&[1.0, -0.25, -0.25, 0.0, -0.25, -0.25])
    }

    /// Eigenvalues of a symmetric circulant: Σ_j c_j cos(2πjk/n).
    fn circulant_spectrum(first: &[f64]) -> Vec<f64> {
        let n = first.len();
        let mut ev: Vec<f64> = (0..n)
            .map(|k| {
                first
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * (2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64).cos())
                    .sum()
            })
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn kron_identity_and_scalar() {
        assert_eq!(kron(&Matrix::identity(2), &Matrix::identity(2)), Matrix::identity(4));
        let swap = m(&[[0.0, 1.0], [1.0, 0.0]]);
        let two = Matrix::from_slice_rows(&[[2.0]]);
        assert_eq!(kron(&swap, &two), m(&[[0.0, 2.0], [2.0, 0.0]]));
    }

    #[test]
    fn kron_first_block_row_of_pattern() {
        let ab = m(&[[0.0, -0.5], [0.5, 0.0]]);
        let k = kron(&p1(), &ab);
        assert_eq!(k.dims(), (12, 12));
        assert_eq!(k.block(0, 0, 2, 2), ab);
        assert_eq!(k.block(0, 2, 2, 2), ab.scale(-0.5));
        assert_eq!(k.block(0, 4, 2, 2), Matrix::zeros(2, 2));
        assert_eq!(k.block(0, 10, 2, 2), ab.scale(-0.5));
    }

    #[test]
    fn sym_eig_identity() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn sym_eig_pattern_spectra_match_circulant_formula() {
        let e1 = sym_eig(&p1()).unwrap();
        let want1 = circulant_spectrum(&[1.0, -0.5, 0.0, 0.0, 0.0, -0.5]);
        for (got, want) in e1.eigenvalues.iter().zip(&want1) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        for (got, want) in e1.eigenvalues.iter().zip([0.0, 0.5, 0.5, 1.5, 1.5, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let e2 = sym_eig(&p2()).unwrap();
        for (got, want) in e2.eigenvalues.iter().zip([0.0, 1.0, 1.0, 1.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = m(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(sym_eig(&a), Err(MatrixError::NotSymmetric { .. })));
    }

    #[test]
    fn induced_norm_examples() {
        assert!((induced_norm2(&Matrix::identity(4)) - 1.0).abs() < 1e-14);
        assert!((induced_norm2(&m(&[[3.0, 0.0], [4.0, 0.0]])) - 5.0).abs() < 1e-12);
        let closed = m(&[[-0.5, 1.0], [-1.0, -0.3]]);
        assert!((induced_norm2(&closed) - 1.177).abs() < 1e-3);
    }

    #[test]
    fn commute_defect_examples() {
        assert!(commute_defect(&p1(), &p2()).unwrap() < 1e-12);
        assert_eq!(commute_defect(&Matrix::identity(3), &p1().block(0, 0, 3, 3)).unwrap(), 0.0);
        let d = commute_defect(&m(&[[0.0, 1.0], [0.0, 0.0]]), &m(&[[1.0, 0.0], [0.0, 2.0]])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_diag_of_equal_diagonal_pair() {
        let d = Matrix::from_diag(&[1.0, 2.0]);
        let sd = simultaneous_diagonalize(&d, &d, COMMUTE_TOL).unwrap();
        assert_eq!(sd.lambda1, vec![1.0, 2.0]);
        assert_eq!(sd.lambda2, vec![1.0, 2.0]);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((sd.u[(i, j)].abs() - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn simultaneous_diag_of_reference_pair() {
        let (a, b) = (p1(), p2());
        let sd = simultaneous_diagonalize(&a, &b, COMMUTE_TOL).unwrap();
        assert!(sd.theta.is_none());
        assert!(joint_residual(&a, &b, &sd.u) <= 1e-8);
        let utu = &sd.u.transpose() * &sd.u;
        assert!((&utu - &Matrix::identity(6)).max_abs() < 1e-12);

        // Oracle: eigenvectors of p1 + 2 p2 diagonalize both (generic mix).
        let oracle = diagonalize_combined(&a, &b, 2.0).unwrap();
        let mut want = oracle.pairs();
        want.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let got = sd.pairs();
        for ((g1, g2), (w1, w2)) in got.iter().zip(&want) {
            assert!((g1 - w1).abs() < 1e-9 && (g2 - w2).abs() < 1e-9, "{got:?} vs {want:?}");
        }
        assert!(got[0].0.abs() < 1e-12 && got[0].1.abs() < 1e-12);
        assert!((got[5].0 - 2.0).abs() < 1e-12);
        for (_, l2) in &got {
            assert!([0.0, 1.0, 1.5].iter().any(|v| (v - l2).abs() < 1e-9));
        }
        for w in got.windows(2) {
            assert!(w[0].0 <= w[1].0 + 1e-9);
        }
    }

    #[test]
    fn simultaneous_diag_rejects_non_commuting() {
        let a = m(&[[1.0, 0.0], [0.0, 2.0]]);
        let b = m(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(simultaneous_diagonalize(&a, &b, COMMUTE_TOL), Err(MatrixError::NotCommuting { .. })));
    }

    #[test]
    fn schur_examples() {
        let v = schur_2x2_nonneg(&m(&[[0.5, 0.0], [0.0, 0.5]])).unwrap();
        assert!(v.stable && (v.spectral_radius - 0.5).abs() < 1e-15);
        let v = schur_2x2_nonneg(&m(&[[1.0, 1.0], [0.0, 1.0]])).unwrap();
        assert!(!v.stable && (v.spectral_radius - 1.0).abs() < 1e-15);
        assert!(matches!(
            schur_2x2_nonneg(&m(&[[0.1, -0.1], [0.0, 0.1]])),
            Err(MatrixError::NegativeEntry { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn serde_as_nested_rows() {
        let a = m(&[[1.0, 2.0], [3.0, 4.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }

    fn arb_matrix(max: usize) -> impl Strategy<Value = Matrix> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-5.0..5.0f64, r * c).prop_map(move |d| Matrix::from_row_major(r, c, d).unwrap())
        })
    }

    fn arb_symmetric(max: usize) -> impl Strategy<Value = Matrix> {
        (1..=max).prop_flat_map(|n| {
            proptest::collection::vec(-10.0..10.0f64, n * n)
                .prop_map(move |d| Matrix::from_row_major(n, n, d).unwrap().symmetric_part())
        })
    }

    proptest! {
        #[test]
        fn sym_eig_reconstructs(s in arb_symmetric(12)) {
            let e = sym_eig(&s).unwrap();
            let v = &e.eigenvectors;
            let rebuilt = &(v * &Matrix::from_diag(&e.eigenvalues)) * &v.transpose();
            let scale = induced_norm2(&s).max(f64::MIN_POSITIVE);
            prop_assert!(induced_norm2(&(&rebuilt - &s)) <= 1e-9 * scale.max(1e-300) + 1e-300);
            let orth = &(&v.transpose() * v) - &Matrix::identity(s.rows());
            prop_assert!(orth.max_abs() <= 1e-9);
            let residual = &(&s * v) - &(v * &Matrix::from_diag(&e.eigenvalues));
            prop_assert!(induced_norm2(&residual) <= 1e-9 * scale);
            for w in e.eigenvalues.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn norm_transpose_invariant_and_submultiplicative(a in arb_matrix(6), seed in any::<u64>()) {
            prop_assert!((induced_norm2(&a) - induced_norm2(&a.transpose())).abs() <= 1e-9 * induced_norm2(&a).max(1.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..6usize);
            let b = Matrix::from_row_major(a.cols(), k, (0..a.cols() * k).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
            prop_assert!(induced_norm2(&(&a * &b)) <= induced_norm2(&a) * induced_norm2(&b) * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn simultaneous_diag_of_random_commuting_pair(n in 1usize..8, seed in any::<u64>()) {
            // Commuting pair built from a shared eigenbasis with repeated eigenvalues.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Matrix::from_row_major(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let q = sym_eig(&g.symmetric_part()).unwrap().eigenvectors;
            let l1: Vec<f64> = (0..n).map(|_| rng.gen_range(0..3) as f64).collect();
            let l2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = (&(&q * &Matrix::from_diag(&l1)) * &q.transpose()).symmetric_part();
            let b = (&(&q * &Matrix::from_diag(&l2)) * &q.transpose()).symmetric_part();
            let sd = simultaneous_diagonalize(&a, &b, COMMUTE_TOL).unwrap();
            prop_assert!(joint_residual(&a, &b, &sd.u) <= 1e-8);
            let orth = &(&sd.u.transpose() * &sd.u) - &Matrix::identity(n);
            prop_assert!(orth.max_abs() <= 1e-9);
        }

        #[test]
        fn schur_radius_matches_power_iteration(e in proptest::array::uniform4(0.0..2.0f64)) {
            let a = Matrix::from_row_major(2, 2, e.to_vec()).unwrap();
            let v = schur_2x2_nonneg(&a).unwrap();
            // Power iteration on the positive shift A + I (same Perron vector).
            let shifted = &a + &Matrix::identity(2);
            let mut x = vec![1.0, 1.0];
            for _ in 0..4000 {
                let y = shifted.mul_vec(&x);
                let ny = vec_norm(&y);
                x = y.iter().map(|v| v / ny).collect();
            }
            let y = shifted.mul_vec(&x);
            let lambda = dot(&x, &y);
            let residual = vec_norm(&[y[0] - lambda * x[0], y[1] - lambda * x[1]]);
            // Near-degenerate spectra converge too slowly to serve as an oracle.
            prop_assume!(residual <= 1e-13);
            prop_assert!((v.spectral_radius - (lambda - 1.0)).abs() <= 1e-9, "{} vs {}", v.spectral_radius, lambda - 1.0);
        }
    }
}
