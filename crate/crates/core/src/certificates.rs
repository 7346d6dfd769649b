//! Parameter-dependent Lyapunov certificates for `ξ̇ = Ω(ρ) ξ + ϑ` with ρ
//! piecewise constant under a range dwell-time condition, and the
//! fading-memory constants they imply.
//!
//! A certificate is `Q(ρ) = Q0 + ρ Q1` together with scalars `(d1, d2, μ, γ)`
//! such that on every grid point (and grid pair for the cross constraint)
//!
//! ```text
//! d1 I ⪯ Q(ρ) ⪯ d2 I
//! Q(ρ) ⪯ μ Q(θ)
//! Ω(ρ)ᵀ Q(ρ) + Q(ρ) Ω(ρ) ⪯ −γ Q(ρ)
//! ```
//!
//! Feasibility on a grid is necessary but not sufficient for the
//! semi-infinite constraints; reports carry that caveat and searches
//! re-check on a grid of twice the density.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{refined_grid_size, uniform_grid, PolyFamily};
use crate::matrix::{sym_eig, Matrix, MatrixError, SYMMETRY_TOL};

/// Margins at or above `-FEASIBILITY_TOL · d2` count as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-10;
/// A contraction constant within this of 1 counts as 1 (not contractive).
pub const CONTRACTION_TOL: f64 = 1e-12;

pub const GRID_CAVEAT: &str =
    "grid feasibility is necessary, not sufficient, for the semi-infinite LMIs; see the refined-grid re-check";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("invalid certificate: {0}")]
    Invalid(String),
    #[error("invalid dwell specification: {0}")]
    InvalidDwell(String),
    #[error("mu * exp(-gamma * delta_min) = {mu_delta} is not < 1")]
    MuDeltaNotContractive { mu_delta: f64 },
    #[error("no certificate found; best margins (bounds {:.3e}, cross {:.3e}, lyapunov {:.3e}) at gamma={}, mu={}", .best.bounds, .best.cross, .best.lyapunov, .best.gamma, .best.mu)]
    Infeasible { best: BestAttempt },
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
}

/// Range dwell-time condition `t_{k+1} − t_k ∈ [δ̲, δ̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDwell")]
pub struct DwellSpec {
    pub delta_min: f64,
    pub delta_max: f64,
}

#[derive(Deserialize)]
struct RawDwell {
    delta_min: f64,
    delta_max: f64,
}

impl TryFrom<RawDwell> for DwellSpec {
    type Error = CertificateError;
    fn try_from(r: RawDwell) -> Result<Self, Self::Error> {
        DwellSpec::new(r.delta_min, r.delta_max)
    }
}

impl DwellSpec {
    pub fn new(delta_min: f64, delta_max: f64) -> Result<Self, CertificateError> {
        if !(delta_min > 0.0 && delta_min <= delta_max && delta_max.is_finite()) {
            return Err(CertificateError::InvalidDwell(format!(
                "need 0 < delta_min <= delta_max, got [{delta_min}, {delta_max}]"
            )));
        }
        Ok(DwellSpec { delta_min, delta_max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCertificate")]
pub struct LmiCertificate {
    pub q0: Matrix,
    pub q1: Matrix,
    pub d1: f64,
    pub d2: f64,
    pub mu: f64,
    pub gamma: f64,
    pub grid: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCertificate {
    q0: Matrix,
    q1: Matrix,
    d1: f64,
    d2: f64,
    mu: f64,
    gamma: f64,
    grid: Vec<f64>,
}

impl TryFrom<RawCertificate> for LmiCertificate {
    type Error = CertificateError;
    fn try_from(r: RawCertificate) -> Result<Self, Self::Error> {
        LmiCertificate::new(r.q0, r.q1, r.d1, r.d2, r.mu, r.gamma, r.grid)
    }
}

impl LmiCertificate {
    pub fn new(
        q0: Matrix,
        q1: Matrix,
        d1: f64,
        d2: f64,
        mu: f64,
        gamma: f64,
        grid: Vec<f64>,
    ) -> Result<Self, CertificateError> {
        let cert = LmiCertificate { q0, q1, d1, d2, mu, gamma, grid };
        cert.validate()?;
        Ok(cert)
    }

    pub fn validate(&self) -> Result<(), CertificateError> {
        let bad = |m: String| Err(CertificateError::Invalid(m));
        if !self.q0.is_square() || self.q0.dims() != self.q1.dims() {
            return bad(format!("q0 {:?} and q1 {:?} must be square and equal-sized", self.q0.dims(), self.q1.dims()));
        }
        if !self.q0.is_symmetric(SYMMETRY_TOL) || !self.q1.is_symmetric(SYMMETRY_TOL) {
            return bad("q0 and q1 must be symmetric".into());
        }
        if !(self.d1 > 0.0 && self.d1.is_finite()) {
            return bad(format!("d1 must be positive, got {}", self.d1));
        }
        if !(self.d2 >= self.d1 && self.d2.is_finite()) {
            return bad(format!("d2 must be >= d1, got d1={} d2={}", self.d1, self.d2));
        }
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return bad(format!("mu must be >= 1, got {}", self.mu));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.grid.iter().any(|g| !g.is_finite()) || self.grid.windows(2).any(|w| w[0] > w[1]) {
            return bad("grid must be finite and ascending".into());
        }
        Ok(())
    }

    pub fn q_at(&self, rho: f64) -> Matrix {
        &self.q0 + &self.q1.scale(rho)
    }

    /// Same certificate with `Q`, `d1`, `d2` multiplied by `kappa > 0`.
    pub fn scaled(&self, kappa: f64) -> LmiCertificate {
        LmiCertificate {
            q0: self.q0.scale(kappa),
            q1: self.q1.scale(kappa),
            d1: self.d1 * kappa,
            d2: self.d2 * kappa,
            ..self.clone()
        }
    }

    pub fn with_grid(&self, grid: Vec<f64>) -> LmiCertificate {
        LmiCertificate { grid, ..self.clone() }
    }

    /// Uniform grid over the certificate grid's span with twice the density.
    pub fn refined_grid(&self) -> Vec<f64> {
        let lo = self.grid[0];
        let hi = *self.grid.last().expect("nonempty grid");
        uniform_grid(lo, hi, refined_grid_size(self.grid.len()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Worst margin of each constraint over the grid; a margin is the minimum
/// eigenvalue of the slack matrix, so negative means violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub grid_points: usize,
    /// `min_ρ min(λ_min(Q) − d1, d2 − λ_max(Q))`
    pub bounds_margin: f64,
    pub bounds_worst_rho: f64,
    /// `min_{ρ,θ} λ_min(μ Q(θ) − Q(ρ))`
    pub cross_margin: f64,
    pub cross_worst_pair: (f64, f64),
    /// `min_ρ λ_min(−γ Q − Ωᵀ Q − Q Ω)`
    pub lyapunov_margin: f64,
    pub lyapunov_worst_rho: f64,
    pub tolerance: f64,
    pub feasible: bool,
    pub caveat: String,
}

impl CertificateReport {
    pub fn margins(&self) -> [f64; 3] {
        [self.bounds_margin, self.cross_margin, self.lyapunov_margin]
    }
}

fn sym_min_eig(m: &Matrix) -> f64 {
    sym_eig(&m.symmetric_part()).expect("symmetrized").min()
}

fn lyapunov_slack(omega: &Matrix, q: &Matrix, gamma: f64) -> Matrix {
    // −γQ − ΩᵀQ − QΩ
    let oq = &omega.transpose() * q;
    let qo = q * omega;
    &(&q.scale(-gamma) - &oq) - &qo
}

fn check_dims(family: &PolyFamily, cert: &LmiCertificate) -> Result<(), CertificateError> {
    let n = cert.q0.rows();
    if family.dims() != (n, n) {
        return Err(
            MatrixError::DimensionMismatch(format!("family is {:?}, certificate is {n}x{n}", family.dims())).into()
        );
    }
    Ok(())
}

/// Check all three constraint sets on the certificate's own grid.
pub fn verify_certificate(family: &PolyFamily, cert: &LmiCertificate) -> Result<CertificateReport, CertificateError> {
    verify_on_grid(family, cert, &cert.grid)
}

/// Check all three constraint sets on an arbitrary grid.
pub fn verify_on_grid(
    family: &PolyFamily,
    cert: &LmiCertificate,
    grid: &[f64],
) -> Result<CertificateReport, CertificateError> {
    cert.validate()?;
    check_dims(family, cert)?;
    if grid.is_empty() {
        return Err(CertificateError::GridTooSmall(0));
    }
    let n = cert.q0.rows();
    let id = Matrix::identity(n);
    let qs: Vec<Matrix> = grid.iter().map(|&r| cert.q_at(r)).collect();

    let mut bounds = (f64::INFINITY, grid[0]);
    let mut lyap = (f64::INFINITY, grid[0]);
    for (&rho, q) in grid.iter().zip(&qs) {
        let lower = sym_min_eig(&(q - &id.scale(cert.d1)));
        let upper = sym_min_eig(&(&id.scale(cert.d2) - q));
        let m = lower.min(upper);
        if m < bounds.0 {
            bounds = (m, rho);
        }
        let l = sym_min_eig(&lyapunov_slack(&family.eval(rho), q, cert.gamma));
        if l < lyap.0 {
            lyap = (l, rho);
        }
    }

    let mut cross = (f64::INFINITY, (grid[0], grid[0]));
    for (&rho, q_rho) in grid.iter().zip(&qs) {
        for (&theta, q_theta) in grid.iter().zip(&qs) {
            let m = sym_min_eig(&(&q_theta.scale(cert.mu) - q_rho));
            if m < cross.0 {
                cross = (m, (rho, theta));
            }
        }
    }

    let tolerance = FEASIBILITY_TOL * cert.d2;
    let feasible = bounds.0 >= -tolerance && cross.0 >= -tolerance && lyap.0 >= -tolerance;
    Ok(CertificateReport {
        grid_points: grid.len(),
        bounds_margin: bounds.0,
        bounds_worst_rho: bounds.1,
        cross_margin: cross.0,
        cross_worst_pair: cross.1,
        lyapunov_margin: lyap.0,
        lyapunov_worst_rho: lyap.1,
        tolerance,
        feasible,
        caveat: GRID_CAVEAT.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Decay rates tried in order; the first feasible one wins.
    pub gamma_menu: Vec<f64>,
    /// Jump factors tried (inner loop) for each γ.
    pub mu_menu: Vec<f64>,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Lower eigenvalue floor of the normalized `Q` during the search.
    pub pd_floor: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            gamma_menu: vec![2.0, 1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01],
            mu_menu: vec![1.0, 1.1, 1.5, 2.0, 4.0],
            max_iters: 600,
            restarts: 2,
            seed: 0,
            pd_floor: 1e-3,
        }
    }
}

/// Best margins seen when a search fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestAttempt {
    pub gamma: f64,
    pub mu: f64,
    pub bounds: f64,
    pub cross: f64,
    pub lyapunov: f64,
}

/// Which constraint produced the current maximum violation, with the data
/// needed for its subgradient.
enum Active {
    Floor { rho: f64 },
    Cross { rho: f64, theta: f64 },
    Lyapunov { rho: f64 },
}

struct Problem<'a> {
    family: &'a PolyFamily,
    omegas: Vec<(f64, Matrix)>,
    lo: f64,
    hi: f64,
    gamma: f64,
    mu: f64,
    floor: f64,
    affine_q: bool,
}

impl Problem<'_> {
    /// `max` over constraints of `λ_max(G)` (G ⪯ 0 wanted), with its argmax.
    fn objective(&self, q0: &Matrix, q1: &Matrix) -> (f64, Active, Vec<f64>) {
        let n = q0.rows();
        let q_at = |r: f64| &q0.clone() + &q1.scale(r);
        let mut best: (f64, Active, Vec<f64>) = (f64::NEG_INFINITY, Active::Floor { rho: self.lo }, vec![0.0; n]);
        let mut consider = |g: Matrix, act: Active| {
            let e = sym_eig(&g.symmetric_part()).expect("symmetric");
            let lmax = e.max();
            if lmax > best.0 {
                best = (lmax, act, e.eigenvectors.column(n - 1));
            }
        };
        let id = Matrix::identity(n);
        // λ_min(Q(ρ)) is concave in ρ and Q(ρ) − μQ(θ) is jointly affine, so
        // interval corners are exact for these two constraint sets.
        for rho in [self.lo, self.hi] {
            consider(&id.scale(self.floor) - &q_at(rho), Active::Floor { rho });
        }
        if self.affine_q {
            for (rho, theta) in [(self.lo, self.hi), (self.hi, self.lo)] {
                consider(&q_at(rho) - &q_at(theta).scale(self.mu), Active::Cross { rho, theta });
            }
        }
        for (rho, omega) in &self.omegas {
            let q = q_at(*rho);
            let g = lyapunov_slack(omega, &q, self.gamma).scale(-1.0);
            consider(g, Active::Lyapunov { rho: *rho });
        }
        best
    }

    fn omega(&self, rho: f64) -> Matrix {
        self.omegas.iter().find(|(r, _)| *r == rho).map(|(_, m)| m.clone()).unwrap_or_else(|| self.family.eval(rho))
    }

    /// Subgradient of `vᵀ G v` with respect to `(Q0, Q1)`.
    fn subgradient(&self, active: &Active, v: &[f64]) -> (Matrix, Matrix) {
        let n = v.len();
        let vv = Matrix::from_row_major(n, 1, v.to_vec()).expect("column");
        let outer = &vv * &vv.transpose();
        match *active {
            Active::Floor { rho } => (outer.scale(-1.0), outer.scale(-rho)),
            Active::Cross { rho, theta } => (outer.scale(1.0 - self.mu), outer.scale(rho - self.mu * theta)),
            Active::Lyapunov { rho } => {
                let omega = self.omega(rho);
                let w = &(&(&omega * &outer) + &(&outer * &omega.transpose())) + &outer.scale(self.gamma);
                let w1 = w.scale(rho);
                (w, w1)
            }
        }
    }
}

fn normalize(q0: &mut Matrix, q1: &mut Matrix) {
    let norm = (q0.frobenius_norm().powi(2) + q1.frobenius_norm().powi(2)).sqrt();
    if norm > 0.0 {
        *q0 = q0.scale(1.0 / norm);
        *q1 = q1.scale(1.0 / norm);
    }
}

/// Search for a certificate with projected subgradient descent on the
/// largest constraint violation over `(Q0, Q1)`, sweeping the `(γ, μ)`
/// menus. A candidate is accepted only if it verifies on the search grid
/// and on its 2x refinement. With `μ = 1` the cross constraint forces a
/// constant `Q`, so `Q1` is pinned to zero there.
pub fn search_certificate(
    family: &PolyFamily,
    rho_interval: (f64, f64),
    grid_size: usize,
    opts: &SearchOptions,
) -> Result<LmiCertificate, CertificateError> {
    if grid_size < 2 {
        return Err(CertificateError::GridTooSmall(grid_size));
    }
    let (n, m) = family.dims();
    if n != m {
        return Err(MatrixError::NotSquare { rows: n, cols: m }.into());
    }
    let (lo, hi) = rho_interval;
    let grid = uniform_grid(lo, hi, grid_size);
    let refined = uniform_grid(lo, hi, refined_grid_size(grid_size));
    let omegas: Vec<(f64, Matrix)> = grid.iter().map(|&r| (r, family.eval(r))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_fail: Option<(f64, BestAttempt)> = None;

    for &gamma in &opts.gamma_menu {
        for &mu in &opts.mu_menu {
            let problem = Problem {
                family,
                omegas: omegas.clone(),
                lo,
                hi,
                gamma,
                mu,
                floor: opts.pd_floor,
                affine_q: mu > 1.0 && hi > lo,
            };
            for restart in 0..=opts.restarts {
                let mut q0 = Matrix::identity(n);
                let mut q1 = Matrix::zeros(n, n);
                if restart > 0 {
                    let r = Matrix::from_row_major(n, n, (0..n * n).map(|_| rng.gen_range(-0.5..0.5)).collect())
                        .expect("shape");
                    q0 = &q0 + &(&r * &r.transpose());
                }
                normalize(&mut q0, &mut q1);
                let (q0, q1, f) = descend(&problem, q0, q1, opts.max_iters);
                if f < 0.0 {
                    if let Some(cert) = assemble_certificate(family, &q0, &q1, gamma, mu, &grid, &refined) {
                        return Ok(cert);
                    }
                }
                let attempt = attempt_margins(family, &q0, &q1, gamma, mu, &grid);
                if best_fail.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best_fail = Some((f, attempt));
                }
            }
        }
    }
    let best = best_fail.map(|(_, b)| b).unwrap_or(BestAttempt {
        gamma: f64::NAN,
        mu: f64::NAN,
        bounds: f64::NAN,
        cross: f64::NAN,
        lyapunov: f64::NAN,
    });
    Err(CertificateError::Infeasible { best })
}

fn descend(p: &Problem<'_>, mut q0: Matrix, mut q1: Matrix, iters: usize) -> (Matrix, Matrix, f64) {
    let (mut f, mut active, mut v) = p.objective(&q0, &q1);
    let mut best = (q0.clone(), q1.clone(), f);
    let step0 = 0.2;
    for k in 0..iters {
        if best.2 < 0.0 {
            break;
        }
        let (mut g0, mut g1) = p.subgradient(&active, &v);
        if !p.affine_q {
            g1 = Matrix::zeros(g1.rows(), g1.cols());
        }
        let gnorm = (g0.frobenius_norm().powi(2) + g1.frobenius_norm().powi(2)).sqrt();
        if gnorm == 0.0 {
            break;
        }
        let step = step0 / ((k + 1) as f64).sqrt() / gnorm;
        g0 = g0.scale(step);
        g1 = g1.scale(step);
        q0 = (&q0 - &g0).symmetric_part();
        q1 = (&q1 - &g1).symmetric_part();
        normalize(&mut q0, &mut q1);
        (f, active, v) = p.objective(&q0, &q1);
        if f < best.2 {
            best = (q0.clone(), q1.clone(), f);
        }
    }
    best
}

fn assemble_certificate(
    family: &PolyFamily,
    q0: &Matrix,
    q1: &Matrix,
    gamma: f64,
    mu: f64,
    grid: &[f64],
    refined: &[f64],
) -> Option<LmiCertificate> {
    let mut d1 = f64::INFINITY;
    let mut d2 = f64::NEG_INFINITY;
    for &r in refined {
        let e = sym_eig(&(q0 + &q1.scale(r)).symmetric_part()).ok()?;
        d1 = d1.min(e.min());
        d2 = d2.max(e.max());
    }
    if !(d1 > 0.0) {
        return None;
    }
    // Rescale so d1 = 1; the LMIs are homogeneous in (Q, d1, d2).
    let k = 1.0 / d1;
    let cert = LmiCertificate::new(q0.scale(k), q1.scale(k), 1.0, d2 * k, mu, gamma, grid.to_vec()).ok()?;
    let on_grid = verify_certificate(family, &cert).ok()?;
    let on_refined = verify_on_grid(family, &cert, refined).ok()?;
    (on_grid.feasible && on_refined.feasible).then_some(cert)
}

fn attempt_margins(family: &PolyFamily, q0: &Matrix, q1: &Matrix, gamma: f64, mu: f64, grid: &[f64]) -> BestAttempt {
    let probe = LmiCertificate {
        q0: q0.clone(),
        q1: q1.clone(),
        d1: f64::MIN_POSITIVE,
        d2: f64::MAX,
        mu,
        gamma,
        grid: grid.to_vec(),
    };
    match verify_certificate(family, &probe) {
        Ok(r) => BestAttempt { gamma, mu, bounds: r.bounds_margin, cross: r.cross_margin, lyapunov: r.lyapunov_margin },
        Err(_) => BestAttempt { gamma, mu, bounds: f64::NAN, cross: f64::NAN, lyapunov: f64::NAN },
    }
}

/// `μ_Δ = μ e^{−γ δ̲}`.
pub fn mu_delta(cert: &LmiCertificate, dwell: &DwellSpec) -> f64 {
    cert.mu * (-cert.gamma * dwell.delta_min).exp()
}

/// Smallest integer `η ≥ 1` with `η > (ln(d1/(d2 μ)) − γ δ̄) / ln(μ_Δ)`.
pub fn min_eta(cert: &LmiCertificate, dwell: &DwellSpec) -> Result<u32, CertificateError> {
    let md = mu_delta(cert, dwell);
    if md >= 1.0 {
        return Err(CertificateError::MuDeltaNotContractive { mu_delta: md });
    }
    let threshold = ((cert.d1 / (cert.d2 * cert.mu)).ln() - cert.gamma * dwell.delta_max) / md.ln();
    let mut eta = (threshold.floor() + 1.0).max(1.0) as u32;
    // The closed form can land one off when the threshold is an integer up to
    // rounding; settle it on the contraction constant itself.
    let contracts = |e: u32| fading_constants(cert, dwell, e, 0.0).contractive;
    while !contracts(eta) {
        eta += 1;
    }
    while eta > 1 && contracts(eta - 1) {
        eta -= 1;
    }
    Ok(eta)
}

/// Constants of the fading-memory estimate
/// `|ξ(t)| ≤ a |ξ(t − T)| + b sup_{[t−T, t]} |ϑ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingMemoryConstants {
    /// `a` (controller loop) or `c` (observer loop).
    pub gain_contraction: f64,
    /// `b` (controller loop) or `d` (observer loop).
    pub gain_isse: f64,
    pub horizon: f64,
    pub eta: u32,
    pub mu_delta: f64,
    /// `gain_contraction < 1 − CONTRACTION_TOL`.
    pub contractive: bool,
}

pub fn fading_constants(cert: &LmiCertificate, dwell: &DwellSpec, eta: u32, horizon: f64) -> FadingMemoryConstants {
    let md = mu_delta(cert, dwell);
    let ratio = cert.d2 / cert.d1;
    let a = (ratio * cert.mu * md.powi(eta as i32) * (cert.gamma * dwell.delta_max).exp()).sqrt();
    let b = (cert.mu * ratio * horizon / cert.gamma).sqrt();
    FadingMemoryConstants {
        gain_contraction: a,
        gain_isse: b,
        horizon,
        eta,
        mu_delta: md,
        contractive: a < 1.0 - CONTRACTION_TOL,
    }
}

/// `T = η δ̲`, the pairing used by the built-in scenario.
pub fn suggest_horizon(eta: u32, dwell: &DwellSpec) -> f64 {
    eta as f64 * dwell.delta_min
}

/// Dwell intervals guaranteed to fit completely inside any window of length
/// `T`: `⌊T / δ̄⌋ − 1`, saturating at zero.
pub fn conservative_eta(horizon: f64, dwell: &DwellSpec) -> u32 {
    let k = (horizon / dwell.delta_max).floor() - 1.0;
    k.max(0.0) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    fn scalar_cert(q: f64, d1: f64, d2: f64, mu: f64, gamma: f64, n: usize, grid: Vec<f64>) -> LmiCertificate {
        LmiCertificate::new(Matrix::identity(n).scale(q), Matrix::zeros(n, n), d1, d2, mu, gamma, grid).unwrap()
    }

    #[test]
    fn stable_identity_family_is_certified() {
        let fam = PolyFamily::constant(Matrix::identity(2).scale(-1.0));
        let cert = scalar_cert(1.0, 1.0, 1.0, 1.0, 1.0, 2, uniform_grid(0.0, 1.0, 5));
        let r = verify_certificate(&fam, &cert).unwrap();
        assert!(r.feasible);
        assert!((r.lyapunov_margin - 1.0).abs() < 1e-14);
        assert_eq!(r.cross_margin, 0.0);
        assert_eq!(r.bounds_margin, 0.0);
    }

    #[test]
    fn unstable_family_fails_lyapunov() {
        let fam = PolyFamily::constant(Matrix::identity(2));
        for q in [0.5, 1.0, 3.0] {
            let cert = scalar_cert(q, q, q, 1.0, 0.1, 2, uniform_grid(0.0, 1.0, 3));
            let r = verify_certificate(&fam, &cert).unwrap();
            assert!(!r.feasible);
            assert!(r.lyapunov_margin < 0.0);
        }
    }

    #[test]
    fn published_certificate_lyapunov_margin_is_negative() {
        // Q = 0.01 I needs Mᵀ + M ⪯ −I on [0, 2], but Mᵀ + M =
        // diag(2, 1.2)·(−0.5 + 0.1ρ) reaches −0.36 at ρ = 2.
        let lpv = crate::decomposition::to_lpv(&crate::decomposition::decompose(&reference::plant()));
        let m = lpv.controller_loop(&reference::gains());
        let r = verify_certificate(&m, &reference::published_certificate(33)).unwrap();
        assert!(r.bounds_margin.abs() < 1e-15 && r.cross_margin == 0.0);
        assert!((r.lyapunov_margin + 0.0064).abs() < 1e-12);
        assert_eq!(r.lyapunov_worst_rho, 2.0);
        assert!(!r.feasible);
    }

    #[test]
    fn homogeneity_scales_margins() {
        let lpv = crate::decomposition::to_lpv(&crate::decomposition::decompose(&reference::plant()));
        let m = lpv.controller_loop(&reference::gains());
        let cert = search_certificate(&m, (0.0, 2.0), 17, &SearchOptions::default()).unwrap();
        let base = verify_certificate(&m, &cert).unwrap();
        for kappa in [0.01, 3.0, 250.0] {
            let r = verify_certificate(&m, &cert.scaled(kappa)).unwrap();
            assert_eq!(r.feasible, base.feasible);
            for (a, b) in r.margins().iter().zip(base.margins()) {
                assert!((a - kappa * b).abs() <= 1e-9 * kappa.max(1.0) * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn search_finds_certificate_for_controller_loop() {
        let lpv = crate::decomposition::to_lpv(&crate::decomposition::decompose(&reference::plant()));
        let m = lpv.controller_loop(&reference::gains());
        let cert = search_certificate(&m, (0.0, 2.0), 33, &SearchOptions::default()).unwrap();
        assert!(verify_certificate(&m, &cert).unwrap().feasible);
        assert!(verify_on_grid(&m, &cert, &cert.refined_grid()).unwrap().feasible);
        assert!(cert.d1 > 0.0 && cert.d2 >= cert.d1 && cert.mu >= 1.0 && cert.gamma > 0.0);
        assert_eq!(cert.grid.len(), 33);
        assert_eq!((cert.grid[0], cert.grid[32]), (0.0, 2.0));
        // A common constant Q exists, so the μ = 1 branch succeeds.
        assert_eq!(cert.mu, 1.0);
    }

    #[test]
    fn search_reports_infeasible_for_unstable_family() {
        // Ω(0) = diag(0.2, −1) is unstable.
        let fam = PolyFamily::affine(Matrix::from_diag(&[0.2, -1.0]), Matrix::from_diag(&[-1.0, 0.0])).unwrap();
        let opts = SearchOptions { max_iters: 100, restarts: 0, ..SearchOptions::default() };
        match search_certificate(&fam, (0.0, 1.0), 9, &opts) {
            Err(CertificateError::Infeasible { best }) => assert!(best.lyapunov < 0.0),
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn search_uses_parameter_dependent_q_when_needed() {
        // Ω(ρ) = [[-1, ρ], [0, -1]]·s: stable everywhere; a constant Q works
        // only for small |ρ|, so larger spans lean on μ > 1 or small γ.
        let fam = PolyFamily::affine(
            Matrix::from_slice_rows(&[[-1.0, 0.0], [0.0, -1.0]]),
            Matrix::from_slice_rows(&[[0.0, 1.0], [0.0, 0.0]]),
        )
        .unwrap();
        let cert = search_certificate(&fam, (0.0, 4.0), 17, &SearchOptions::default()).unwrap();
        assert!(verify_on_grid(&fam, &cert, &cert.refined_grid()).unwrap().feasible);
    }

    #[test]
    fn min_eta_for_published_values() {
        let cert = reference::published_certificate(33);
        let dwell = reference::dwell();
        assert_eq!(min_eta(&cert, &dwell).unwrap(), 6);
        assert!(fading_constants(&cert, &dwell, 6, 0.6).contractive);
        assert!(!fading_constants(&cert, &dwell, 5, 0.5).contractive);
    }

    #[test]
    fn min_eta_trivial_and_boundary() {
        let dwell = DwellSpec::new(1.0, 1.0).unwrap();
        let cert = scalar_cert(1.0, 1.0, 1.0, 1.0, 1.0, 1, vec![0.0]);
        let zero_dwell_max = DwellSpec { delta_min: 1.0, delta_max: 0.0 };
        assert_eq!(min_eta(&cert, &zero_dwell_max).unwrap(), 1);
        assert_eq!(min_eta(&cert, &dwell).unwrap(), 2);
        // μ_Δ = μ e^{−γδ̲} = 1 exactly.
        let boundary = scalar_cert(1.0, 1.0, 1.0, 1f64.exp(), 1.0, 1, vec![0.0]);
        assert!(matches!(min_eta(&boundary, &dwell), Err(CertificateError::MuDeltaNotContractive { .. })));
    }

    #[test]
    fn published_fading_constants() {
        let cert = reference::published_certificate(33);
        let dwell = reference::dwell();
        let ctl = fading_constants(&cert, &dwell, 50, 5.0);
        assert!((ctl.gain_contraction - (-2.25f64).exp()).abs() < 1e-14);
        assert!((ctl.gain_contraction - 0.1054).abs() < 1e-3 && (ctl.gain_isse - 2.2361).abs() < 1e-3);
        let obs = fading_constants(&cert, &dwell, 75, 7.5);
        assert!((obs.gain_contraction - 0.0302).abs() < 1e-3 && (obs.gain_isse - 2.7386).abs() < 1e-3);
        assert!(ctl.contractive && obs.contractive);
    }

    #[test]
    fn non_contractive_constants_are_flagged() {
        let dwell = DwellSpec::new(1.0, 1.0).unwrap();
        let cert = scalar_cert(1.0, 1.0, 1.0, 1.0, 1.0, 1, vec![0.0]);
        let fc = fading_constants(&cert, &dwell, 0, 1.0);
        assert!((fc.gain_contraction - 1.6487212707).abs() < 1e-9);
        assert!(!fc.contractive);
    }

    #[test]
    fn fading_constants_monotone() {
        let cert = reference::published_certificate(3);
        let dwell = reference::dwell();
        let mut prev = f64::INFINITY;
        for eta in 0..120 {
            let a = fading_constants(&cert, &dwell, eta, 5.0).gain_contraction;
            assert!(a < prev);
            prev = a;
        }
        let mut prev = 0.0;
        for k in 1..100 {
            let b = fading_constants(&cert, &dwell, 50, 0.1 * k as f64).gain_isse;
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn eta_horizon_helpers() {
        let dwell = reference::dwell();
        assert!((suggest_horizon(50, &dwell) - 5.0).abs() < 1e-12);
        assert!((suggest_horizon(75, &dwell) - 7.5).abs() < 1e-12);
        assert_eq!(conservative_eta(5.0, &dwell), 9);
        assert_eq!(conservative_eta(0.2, &dwell), 0);
    }

    #[test]
    fn certificate_json_round_trip_and_validation() {
        let cert = reference::published_certificate(5);
        let back = LmiCertificate::from_json(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
        let bad = cert.to_json().replace("\"mu\": 1.0", "\"mu\": 0.5");
        assert!(LmiCertificate::from_json(&bad).is_err());
        assert!(DwellSpec::new(0.5, 0.1).is_err());
        assert!(DwellSpec::new(0.0, 0.1).is_err());
    }
}
