//! Matrix-valued functions of the scheduling parameter ρ.

use serde::{Deserialize, Serialize};

use crate::matrix::{Matrix, MatrixError};

/// `F(ρ) = Σ_k ρ^k C_k`. Products of affine families (for instance
/// `ℬ(ρ)𝒦(ρ)` when both parts vary) stay in this class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFamily {
    coeffs: Vec<Matrix>,
}

impl PolyFamily {
    pub fn constant(c: Matrix) -> Self {
        PolyFamily { coeffs: vec![c] }
    }

    pub fn affine(c0: Matrix, c1: Matrix) -> Result<Self, MatrixError> {
        PolyFamily::new(vec![c0, c1])
    }

    pub fn new(coeffs: Vec<Matrix>) -> Result<Self, MatrixError> {
        let Some(first) = coeffs.first() else {
            return Err(MatrixError::DimensionMismatch("empty coefficient list".into()));
        };
        let dims = first.dims();
        if let Some(bad) = coeffs.iter().find(|c| c.dims() != dims) {
            return Err(MatrixError::DimensionMismatch(format!("coefficient {:?} vs {:?}", bad.dims(), dims)));
        }
        Ok(PolyFamily { coeffs })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.coeffs[0].dims()
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    /// Degree after dropping trailing all-zero coefficients.
    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| c.max_abs() > 0.0).unwrap_or(0)
    }

    pub fn is_affine(&self) -> bool {
        self.degree() <= 1
    }

    pub fn eval(&self, rho: f64) -> Matrix {
        // Horner
        let mut acc = self.coeffs.last().expect("nonempty").clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = &acc.scale(rho) + c;
        }
        acc
    }

    pub fn try_add(&self, rhs: &PolyFamily) -> Result<PolyFamily, MatrixError> {
        let (r, c) = self.dims();
        if rhs.dims() != (r, c) {
            return Err(MatrixError::DimensionMismatch(format!("family sum {:?} vs {:?}", self.dims(), rhs.dims())));
        }
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = Matrix::zeros(r, c);
        let coeffs = (0..n)
            .map(|k| {
                let a = self.coeffs.get(k).unwrap_or(&zero);
                let b = rhs.coeffs.get(k).unwrap_or(&zero);
                a + b
            })
            .collect();
        Ok(PolyFamily { coeffs })
    }

    pub fn try_mul(&self, rhs: &PolyFamily) -> Result<PolyFamily, MatrixError> {
        let (r, inner) = self.dims();
        let (inner2, c) = rhs.dims();
        if inner != inner2 {
            return Err(MatrixError::DimensionMismatch(format!("family product {:?} x {:?}", self.dims(), rhs.dims())));
        }
        let mut coeffs = vec![Matrix::zeros(r, c); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] = &coeffs[i + j] + &(a * b);
            }
        }
        Ok(PolyFamily { coeffs })
    }
}

/// `n` uniformly spaced samples of `[lo, hi]`, endpoints included exactly.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let mut g: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
            g[n - 1] = hi;
            g
        }
    }
}

/// Grid with twice the density of a uniform `n`-point grid (`2n − 1` points).
pub fn refined_grid_size(n: usize) -> usize {
    2 * n.max(1) - 1
}
