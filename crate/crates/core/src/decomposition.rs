//! Decomposable networked systems over a switching pattern pair, their
//! modal splitting into `N` independent subsystems, and the LPV system that
//! covers all of those subsystems with one scheduling parameter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::PolyFamily;
use crate::matrix::{kron, simultaneous_diagonalize, Matrix, MatrixError, SimultaneousDiag, COMMUTE_TOL};

/// Slack allowed when checking σ against its range.
const SIGMA_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("sigma {sigma} outside [{lo}, {hi}]")]
    SigmaOutOfRange { sigma: f64, lo: f64, hi: f64 },
    #[error("invalid sigma range [{lo}, {hi}] (must be a subinterval of [0, 1] in the convex convention)")]
    InvalidSigmaRange { lo: f64, hi: f64 },
    #[error("vector length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("inconsistent dimensions: {0}")]
    Dimensions(String),
}

/// `M = I_N ⊗ M^a + 𝒫 ⊗ M^b`, stored by its two per-agent parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposableMatrixSpec {
    pub decentralized: Matrix,
    pub interconnected: Matrix,
}

impl DecomposableMatrixSpec {
    pub fn new(decentralized: Matrix, interconnected: Matrix) -> Result<Self, DecompositionError> {
        let spec = DecomposableMatrixSpec { decentralized, interconnected };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec with no interconnected part.
    pub fn decentralized_only(m: Matrix) -> Self {
        let (r, c) = m.dims();
        DecomposableMatrixSpec { decentralized: m, interconnected: Matrix::zeros(r, c) }
    }

    pub fn validate(&self) -> Result<(), DecompositionError> {
        if self.decentralized.dims() != self.interconnected.dims() {
            return Err(DecompositionError::Dimensions(format!(
                "decentralized part {:?} vs interconnected part {:?}",
                self.decentralized.dims(),
                self.interconnected.dims()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.decentralized.dims()
    }

    /// `M^a + ν M^b`.
    pub fn eval(&self, nu: f64) -> Matrix {
        &self.decentralized + &self.interconnected.scale(nu)
    }

    pub fn family(&self) -> PolyFamily {
        PolyFamily::affine(self.decentralized.clone(), self.interconnected.clone()).expect("validated dims")
    }
}

/// How a user-facing σ maps onto the pattern matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternConvention {
    /// `𝒫 = σ P1 + (1 − σ) P2`, σ ∈ [0, 1].
    #[default]
    Convex,
    /// `𝒫 = (P1 + P2 + σ (P2 − P1)) / 2`, σ ∈ [−1, 1].
    Midpoint,
}

impl PatternConvention {
    /// Map a σ given in this convention to the convex one.
    pub fn to_convex(self, sigma: f64) -> f64 {
        match self {
            PatternConvention::Convex => sigma,
            PatternConvention::Midpoint => 0.5 * (1.0 - sigma),
        }
    }

    pub fn natural_range(self) -> (f64, f64) {
        match self {
            PatternConvention::Convex => (0.0, 1.0),
            PatternConvention::Midpoint => (-1.0, 1.0),
        }
    }
}

/// Two commuting symmetric pattern matrices and the admissible σ range.
///
/// Internally everything is in the convex convention; `convention` only
/// changes how σ values handed to [`PatternPair::eval`] are read.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPair {
    p1: Matrix,
    p2: Matrix,
    sigma_range: (f64, f64),
    convention: PatternConvention,
    diag: SimultaneousDiag,
}

impl PatternPair {
    pub fn new(p1: Matrix, p2: Matrix) -> Result<Self, DecompositionError> {
        PatternPair::with_convention(p1, p2, PatternConvention::Convex, None)
    }

    /// `sigma_range` is expressed in `convention`; `None` means the
    /// convention's full range.
    pub fn with_convention(
        p1: Matrix,
        p2: Matrix,
        convention: PatternConvention,
        sigma_range: Option<(f64, f64)>,
    ) -> Result<Self, DecompositionError> {
        let (lo, hi) = sigma_range.unwrap_or(convention.natural_range());
        let (a, b) = (convention.to_convex(lo), convention.to_convex(hi));
        let range = (a.min(b), a.max(b));
        if !(range.0 >= -SIGMA_SLACK && range.1 <= 1.0 + SIGMA_SLACK && lo <= hi) {
            return Err(DecompositionError::InvalidSigmaRange { lo, hi });
        }
        let diag = simultaneous_diagonalize(&p1, &p2, COMMUTE_TOL)?;
        Ok(PatternPair { p1, p2, sigma_range: range, convention, diag })
    }

    pub fn p1(&self) -> &Matrix {
        &self.p1
    }

    pub fn p2(&self) -> &Matrix {
        &self.p2
    }

    pub fn n_agents(&self) -> usize {
        self.p1.rows()
    }

    /// σ range in the convex convention.
    pub fn sigma_range(&self) -> (f64, f64) {
        self.sigma_range
    }

    pub fn convention(&self) -> PatternConvention {
        self.convention
    }

    pub fn diagonalization(&self) -> &SimultaneousDiag {
        &self.diag
    }

    /// Convert a σ in the pair's convention to the convex one, checking range.
    pub fn convex_sigma(&self, sigma: f64) -> Result<f64, DecompositionError> {
        self.check_convex(self.convention.to_convex(sigma)).or(Err(DecompositionError::SigmaOutOfRange {
            sigma,
            lo: self.user_range().0,
            hi: self.user_range().1,
        }))
    }

    fn user_range(&self) -> (f64, f64) {
        match self.convention {
            PatternConvention::Convex => self.sigma_range,
            PatternConvention::Midpoint => (1.0 - 2.0 * self.sigma_range.1, 1.0 - 2.0 * self.sigma_range.0),
        }
    }

    fn check_convex(&self, s: f64) -> Result<f64, DecompositionError> {
        let (lo, hi) = self.sigma_range;
        if s.is_finite() && s >= lo - SIGMA_SLACK && s <= hi + SIGMA_SLACK {
            Ok(s.clamp(lo, hi))
        } else {
            Err(DecompositionError::SigmaOutOfRange { sigma: s, lo, hi })
        }
    }

    /// `𝒫(σ)` with σ read in the pair's convention.
    pub fn eval(&self, sigma: f64) -> Result<Matrix, DecompositionError> {
        let s = self.convex_sigma(sigma)?;
        Ok(self.eval_convex(s))
    }

    /// `σ P1 + (1 − σ) P2` without range checks.
    pub fn eval_convex(&self, sigma: f64) -> Matrix {
        &self.p1.scale(sigma) + &self.p2.scale(1.0 - sigma)
    }
}

/// `σ P1 + (1 − σ) P2` for a convex-convention σ.
pub fn pattern_eval(pp: &PatternPair, sigma: f64) -> Result<Matrix, DecompositionError> {
    let s = pp.check_convex(sigma)?;
    Ok(pp.eval_convex(s))
}

/// `I_N ⊗ M^a + 𝒫(σ) ⊗ M^b` (σ in the convex convention).
pub fn assemble_full(
    spec: &DecomposableMatrixSpec,
    pp: &PatternPair,
    sigma: f64,
) -> Result<Matrix, DecompositionError> {
    spec.validate()?;
    let p = pattern_eval(pp, sigma)?;
    Ok(assemble_with_pattern(spec, &p))
}

pub(crate) fn assemble_with_pattern(spec: &DecomposableMatrixSpec, pattern: &Matrix) -> Matrix {
    let n = pattern.rows();
    &kron(&Matrix::identity(n), &spec.decentralized) + &kron(pattern, &spec.interconnected)
}

/// The networked plant `ẋ = A x + B u`, `y = C x(t − τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposablePlant {
    pub a: DecomposableMatrixSpec,
    pub b: DecomposableMatrixSpec,
    pub c: DecomposableMatrixSpec,
    pub pattern: PatternPair,
}

impl DecomposablePlant {
    pub fn new(
        a: DecomposableMatrixSpec,
        b: DecomposableMatrixSpec,
        c: DecomposableMatrixSpec,
        pattern: PatternPair,
    ) -> Result<Self, DecompositionError> {
        for s in [&a, &b, &c] {
            s.validate()?;
        }
        let (n, n2) = a.dims();
        if n != n2 {
            return Err(DecompositionError::Dimensions(format!("A parts must be square, got {n}x{n2}")));
        }
        if b.dims().0 != n {
            return Err(DecompositionError::Dimensions(format!("B parts have {} rows, state dim is {n}", b.dims().0)));
        }
        if c.dims().1 != n {
            return Err(DecompositionError::Dimensions(format!("C parts have {} cols, state dim is {n}", c.dims().1)));
        }
        Ok(DecomposablePlant { a, b, c, pattern })
    }

    pub fn n_agents(&self) -> usize {
        self.pattern.n_agents()
    }

    pub fn state_dim(&self) -> usize {
        self.a.dims().0
    }

    pub fn input_dim(&self) -> usize {
        self.b.dims().1
    }

    pub fn output_dim(&self) -> usize {
        self.c.dims().0
    }
}

/// The `N` modal subsystems `A†(ν_i) = A^a + ν_i A^b` (same for B, C).
#[derive(Debug, Clone, PartialEq)]
pub struct ModalFamily {
    pub u_basis: Matrix,
    /// `(λ_{1i}, λ_{2i})` per mode, in the diagonalizer's column order.
    pub nu_pairs: Vec<(f64, f64)>,
    pub a: DecomposableMatrixSpec,
    pub b: DecomposableMatrixSpec,
    pub c: DecomposableMatrixSpec,
    pub theta: Option<f64>,
}

impl ModalFamily {
    pub fn n_modes(&self) -> usize {
        self.nu_pairs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a.dims().0
    }

    /// `ν_i(σ) = σ λ_{1i} + (1 − σ) λ_{2i}`.
    pub fn nu(&self, mode: usize, sigma: f64) -> f64 {
        let (l1, l2) = self.nu_pairs[mode];
        sigma * l1 + (1.0 - sigma) * l2
    }

    /// Range of `ν_i` over σ ∈ [0, 1].
    pub fn mode_interval(&self, mode: usize) -> (f64, f64) {
        let (l1, l2) = self.nu_pairs[mode];
        (l1.min(l2), l1.max(l2))
    }

    pub fn mode_intervals(&self) -> Vec<(f64, f64)> {
        (0..self.n_modes()).map(|i| self.mode_interval(i)).collect()
    }

    pub fn modal_matrices(&self, mode: usize, sigma: f64) -> (Matrix, Matrix, Matrix) {
        let nu = self.nu(mode, sigma);
        (self.a.eval(nu), self.b.eval(nu), self.c.eval(nu))
    }
}

/// Split the network into its modal subsystems.
pub fn decompose(plant: &DecomposablePlant) -> ModalFamily {
    let d = plant.pattern.diagonalization();
    ModalFamily {
        u_basis: d.u.clone(),
        nu_pairs: d.pairs(),
        a: plant.a.clone(),
        b: plant.b.clone(),
        c: plant.c.clone(),
        theta: d.theta,
    }
}

/// `ω̇ = 𝒜(ρ) ω + ℬ(ρ) v`, `r = 𝒞(ρ) ω(t − τ)` with ρ in `rho_interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvPlant {
    pub a: DecomposableMatrixSpec,
    pub b: DecomposableMatrixSpec,
    pub c: DecomposableMatrixSpec,
    pub rho_interval: (f64, f64),
}

impl LpvPlant {
    pub fn state_dim(&self) -> usize {
        self.a.dims().0
    }

    pub fn a_at(&self, rho: f64) -> Matrix {
        self.a.eval(rho)
    }

    pub fn b_at(&self, rho: f64) -> Matrix {
        self.b.eval(rho)
    }

    pub fn c_at(&self, rho: f64) -> Matrix {
        self.c.eval(rho)
    }

    /// `ℬ(ρ)𝒦(ρ)`.
    pub fn input_coupling(&self, gains: &GainSchedule) -> PolyFamily {
        self.b.family().try_mul(&gains.controller().family()).expect("validated gain dims")
    }

    /// `ℒ(ρ)𝒞(ρ)`.
    pub fn output_coupling(&self, gains: &GainSchedule) -> PolyFamily {
        gains.observer().family().try_mul(&self.c.family()).expect("validated gain dims")
    }

    /// `𝓜(ρ) = 𝒜(ρ) + ℬ(ρ)𝒦(ρ)`.
    pub fn controller_loop(&self, gains: &GainSchedule) -> PolyFamily {
        self.a.family().try_add(&self.input_coupling(gains)).expect("validated gain dims")
    }

    /// `𝓝(ρ) = 𝒜(ρ) + ℒ(ρ)𝒞(ρ)`.
    pub fn observer_loop(&self, gains: &GainSchedule) -> PolyFamily {
        self.a.family().try_add(&self.output_coupling(gains)).expect("validated gain dims")
    }
}

/// Cover every modal subsystem by one LPV system over the enlarged interval
/// `[min(λ̲1, λ̲2), max(λ̄1, λ̄2)]`.
pub fn to_lpv(mf: &ModalFamily) -> LpvPlant {
    let lo = mf.nu_pairs.iter().map(|&(a, b)| a.min(b)).fold(f64::INFINITY, f64::min);
    let hi = mf.nu_pairs.iter().map(|&(a, b)| a.max(b)).fold(f64::NEG_INFINITY, f64::max);
    LpvPlant { a: mf.a.clone(), b: mf.b.clone(), c: mf.c.clone(), rho_interval: (lo, hi) }
}

/// `𝒦(ρ) = K^a + ρ K^b`, `ℒ(ρ) = L^a + ρ L^b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub k_a: Matrix,
    pub k_b: Matrix,
    pub l_a: Matrix,
    pub l_b: Matrix,
}

impl GainSchedule {
    pub fn controller(&self) -> DecomposableMatrixSpec {
        DecomposableMatrixSpec { decentralized: self.k_a.clone(), interconnected: self.k_b.clone() }
    }

    pub fn observer(&self) -> DecomposableMatrixSpec {
        DecomposableMatrixSpec { decentralized: self.l_a.clone(), interconnected: self.l_b.clone() }
    }

    pub fn k_at(&self, rho: f64) -> Matrix {
        self.controller().eval(rho)
    }

    pub fn l_at(&self, rho: f64) -> Matrix {
        self.observer().eval(rho)
    }

    /// Check shapes against per-agent dimensions (state n, input du, output dy).
    pub fn validate(&self, n: usize, du: usize, dy: usize) -> Result<(), DecompositionError> {
        let check = |name: &str, m: &Matrix, want: (usize, usize)| {
            if m.dims() == want {
                Ok(())
            } else {
                Err(DecompositionError::Dimensions(format!("{name} is {:?}, expected {want:?}", m.dims())))
            }
        };
        check("k_a", &self.k_a, (du, n))?;
        check("k_b", &self.k_b, (du, n))?;
        check("l_a", &self.l_a, (n, dy))?;
        check("l_b", &self.l_b, (n, dy))
    }
}

/// Network-level distributed controller and observer gains at σ.
pub fn lift_gains(gs: &GainSchedule, pp: &PatternPair, sigma: f64) -> Result<(Matrix, Matrix), DecompositionError> {
    let k = assemble_full(&gs.controller(), pp, sigma)?;
    let l = assemble_full(&gs.observer(), pp, sigma)?;
    Ok((k, l))
}

/// `(U ⊗ I_p)ᵀ M (U ⊗ I_q)` for an orthogonal `U`.
pub fn to_modal_frame(m: &Matrix, u: &Matrix, p: usize, q: usize) -> Matrix {
    let left = kron(u, &Matrix::identity(p));
    let right = kron(u, &Matrix::identity(q));
    &(&left.transpose() * m) * &right
}

/// Largest entry outside the `p x q` diagonal blocks.
pub fn block_offdiag_residual(m: &Matrix, p: usize, q: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i / p != j / q {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

/// `x̂ = (U ⊗ I_block)ᵀ x`.
pub fn coords_to_modal(x: &[f64], u_basis: &Matrix, block: usize) -> Result<Vec<f64>, DecompositionError> {
    transform(x, u_basis, block, true)
}

/// `x = (U ⊗ I_block) x̂`.
pub fn coords_to_network(x_hat: &[f64], u_basis: &Matrix, block: usize) -> Result<Vec<f64>, DecompositionError> {
    transform(x_hat, u_basis, block, false)
}

fn transform(x: &[f64], u: &Matrix, block: usize, transpose: bool) -> Result<Vec<f64>, DecompositionError> {
    let n = u.rows();
    if x.len() != n * block {
        return Err(DecompositionError::LengthMismatch { expected: n * block, got: x.len() });
    }
    let mut out = vec![0.0; n * block];
    for i in 0..n {
        for j in 0..n {
            let w = if transpose { u[(j, i)] } else { u[(i, j)] };
            if w == 0.0 {
                continue;
            }
            for k in 0..block {
                out[i * block + k] += w * x[j * block + k];
            }
        }
    }
    Ok(out)
}
