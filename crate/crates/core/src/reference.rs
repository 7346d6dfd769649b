//! Built-in six-agent consensus scenario: nonholonomic agents on a ring
//! whose coupling switches between nearest-neighbour and next-nearest
//! neighbour patterns.

use crate::certificates::{DwellSpec, LmiCertificate};
use crate::decomposition::{DecomposableMatrixSpec, DecomposablePlant, GainSchedule, PatternPair};
use crate::family::uniform_grid;
use crate::matrix::Matrix;
use crate::simulator::DelayProfile;

pub const N_AGENTS: usize = 6;
pub const STATE_DIM: usize = 2;

pub const DWELL_MIN: f64 = 0.1;
pub const DWELL_MAX: f64 = 0.5;

/// `(η, T)` pairings for the controller and observer loops.
pub const CONTROLLER_ETA: u32 = 50;
pub const CONTROLLER_HORIZON: f64 = 5.0;
pub const OBSERVER_ETA: u32 = 75;
pub const OBSERVER_HORIZON: f64 = 7.5;

pub const CERT_D1: f64 = 0.01;
pub const CERT_D2: f64 = 0.01;
pub const CERT_MU: f64 = 1.0;
pub const CERT_GAMMA: f64 = 1.0;

pub const DEFAULT_GRID: usize = 33;

/// Published values the reproduction is scored against.
pub mod published {
    pub const A: f64 = 0.1054;
    pub const B: f64 = 2.2361;
    pub const C: f64 = 0.0302;
    pub const D: f64 = 2.7386;
    pub const S1: f64 = 0.5;
    pub const S2: f64 = 0.5;
    pub const S3: f64 = 1.177;
    pub const TAU_BOUND: f64 = 0.3593;
    pub const RHO_MIN: f64 = 0.0;
    pub const RHO_MAX: f64 = 2.0;
    pub const P1_SPECTRUM: [f64; 6] = [0.0, 0.5, 0.5, 1.5, 1.5, 2.0];
    pub const P2_SPECTRUM: [f64; 6] = [0.0, 1.0, 1.0, 1.0, 1.5, 1.5];
}

fn ring(first: [f64; N_AGENTS]) -> Matrix {
    let mut m = Matrix::zeros(N_AGENTS, N_AGENTS);
    for i in 0..N_AGENTS {
        for j in 0..N_AGENTS {
            m[(i, j)] = first[(j + N_AGENTS - i) % N_AGENTS];
        }
    }
    m
}

pub fn p1() -> Matrix {
    ring([1.0, -0.5, 0.0, 0.0, 0.0, -0.5])
}

pub fn p2() -> Matrix {
    ring([1.0, -0.25, -0.25, 0.0, -0.25, -0.25])
}

pub fn a_a() -> Matrix {
    Matrix::from_slice_rows(&[[0.0, 1.0], [-1.0, 0.0]])
}

pub fn a_b() -> Matrix {
    Matrix::from_slice_rows(&[[0.0, -0.5], [0.5, 0.0]])
}

pub fn b_a() -> Matrix {
    Matrix::from_diag(&[1.0, 0.6])
}

pub fn c_a() -> Matrix {
    Matrix::identity(2)
}

pub fn pattern_pair() -> PatternPair {
    PatternPair::new(p1(), p2()).expect("reference pattern pair commutes")
}

pub fn plant() -> DecomposablePlant {
    DecomposablePlant::new(
        DecomposableMatrixSpec::new(a_a(), a_b()).expect("same dims"),
        DecomposableMatrixSpec::decentralized_only(b_a()),
        DecomposableMatrixSpec::decentralized_only(c_a()),
        pattern_pair(),
    )
    .expect("reference plant is consistent")
}

pub fn gains() -> GainSchedule {
    let diag_a = Matrix::identity(2).scale(-0.5);
    let diag_b = Matrix::identity(2).scale(0.1);
    GainSchedule { k_a: diag_a.clone(), k_b: diag_b.clone(), l_a: diag_a, l_b: diag_b }
}

pub fn dwell() -> DwellSpec {
    DwellSpec::new(DWELL_MIN, DWELL_MAX).expect("valid dwell")
}

/// `τ(t) = 0.05 sin(4t) + 0.3`.
pub fn delay_profile() -> DelayProfile {
    DelayProfile::sinusoid(0.05, 4.0, 0.3).expect("valid profile")
}

/// Constant `Q = 0.01 I` with `d1 = d2 = 0.01`, `μ = γ = 1` on a uniform grid
/// of `[0, 2]`.
pub fn published_certificate(grid_size: usize) -> LmiCertificate {
    LmiCertificate::new(
        Matrix::identity(STATE_DIM).scale(CERT_D1),
        Matrix::zeros(STATE_DIM, STATE_DIM),
        CERT_D1,
        CERT_D2,
        CERT_MU,
        CERT_GAMMA,
        uniform_grid(published::RHO_MIN, published::RHO_MAX, grid_size),
    )
    .expect("valid certificate data")
}
