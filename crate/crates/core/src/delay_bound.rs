//! Explicit admissible delay bound for the observer-based output-feedback
//! loop, the 2x2 small-gain matrix behind it, and a sampled checker for the
//! trajectory fan-out inequality `Z(t) ≤ Υ 𝔙_T(t)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{uniform_grid, PolyFamily};
use crate::matrix::{induced_norm2, schur_2x2_nonneg, Matrix, MatrixError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayBoundError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("invalid constant {name} = {value}: {reason}")]
    InvalidConstant { name: &'static str, value: f64, reason: &'static str },
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("trajectory spans {span} but the check needs at least 2T = {needed}")]
    WindowTooShort { span: f64, needed: f64 },
    #[error("sampling step {step} does not divide window {window}")]
    WindowNotMultiple { step: f64, window: f64 },
    #[error("witness is malformed: {0}")]
    Malformed(String),
}

/// Grid maximum of `‖F(ρ)‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub value: f64,
    pub argmax: f64,
    /// The maximum sits at an end of the interval.
    pub at_endpoint: bool,
}

pub fn sup_norm(family: &PolyFamily, rho_interval: (f64, f64), grid_size: usize) -> Result<SupNorm, DelayBoundError> {
    if grid_size < 2 {
        return Err(DelayBoundError::GridTooSmall(grid_size));
    }
    let grid = uniform_grid(rho_interval.0, rho_interval.1, grid_size);
    let mut best = SupNorm { value: f64::NEG_INFINITY, argmax: grid[0], at_endpoint: true };
    for &rho in &grid {
        let v = induced_norm2(&family.eval(rho));
        if v > best.value {
            best.value = v;
            best.argmax = rho;
        }
    }
    let ends = induced_norm2(&family.eval(rho_interval.0)).max(induced_norm2(&family.eval(rho_interval.1)));
    best.at_endpoint = ends >= best.value * (1.0 - 1e-12);
    Ok(best)
}

/// Constants entering the delay bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallGainConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

/// The delay bound, or `Unbounded` when no delay constraint arises
/// (`d s1 s2 = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DelayBound {
    Finite(f64),
    Unbounded,
}

impl DelayBound {
    pub fn value(self) -> f64 {
        match self {
            DelayBound::Finite(v) => v,
            DelayBound::Unbounded => f64::INFINITY,
        }
    }

    pub fn admits(self, tau_max: f64) -> bool {
        tau_max < self.value()
    }
}

impl SmallGainConstants {
    pub fn validate(&self) -> Result<(), DelayBoundError> {
        let chk = |name, v: f64, ok: bool, reason| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(DelayBoundError::InvalidConstant { name, value: v, reason })
            }
        };
        chk("a", self.a, (0.0..1.0).contains(&self.a), "must lie in [0, 1)")?;
        chk("c", self.c, (0.0..1.0).contains(&self.c), "must lie in [0, 1)")?;
        chk("b", self.b, self.b >= 0.0, "must be nonnegative")?;
        chk("d", self.d, self.d >= 0.0, "must be nonnegative")?;
        chk("s1", self.s1, self.s1 >= 0.0, "must be nonnegative")?;
        chk("s2", self.s2, self.s2 >= 0.0, "must be nonnegative")?;
        chk("s3", self.s3, self.s3 >= 0.0, "must be nonnegative")
    }

    /// `τ̄_u = (1 − a)(1 − c) / (d s1 s2 ((1 − a) + b s3))`.
    pub fn tau_bound(&self) -> Result<DelayBound, DelayBoundError> {
        self.validate()?;
        let den = self.d * self.s1 * self.s2 * ((1.0 - self.a) + self.b * self.s3);
        if den == 0.0 {
            return Ok(DelayBound::Unbounded);
        }
        Ok(DelayBound::Finite((1.0 - self.a) * (1.0 - self.c) / den))
    }

    /// `Υ(τ̄) = [[a, b s1], [d s2 s3 τ̄, d s1 s2 τ̄ + c]]`.
    pub fn small_gain_matrix(&self, tau_bar: f64) -> Matrix {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 0)] = self.a;
        m[(0, 1)] = self.b * self.s1;
        m[(1, 0)] = self.d * self.s2 * self.s3 * tau_bar;
        m[(1, 1)] = self.d * self.s1 * self.s2 * tau_bar + self.c;
        m
    }
}

pub fn tau_bound(k: &SmallGainConstants) -> Result<DelayBound, DelayBoundError> {
    k.tau_bound()
}

pub fn small_gain_matrix(k: &SmallGainConstants, tau_bar: f64) -> Matrix {
    k.small_gain_matrix(tau_bar)
}

/// The bound together with the small-gain verdict at a candidate `τ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayMargin {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub tau_bar_u: DelayBound,
    pub tau_bar: f64,
    pub upsilon: Matrix,
    pub spectral_radius: f64,
    pub schur_ok: bool,
}

pub fn delay_margin(k: &SmallGainConstants, tau_bar: f64) -> Result<DelayMargin, DelayBoundError> {
    let tau_bar_u = k.tau_bound()?;
    let upsilon = k.small_gain_matrix(tau_bar);
    let v = schur_2x2_nonneg(&upsilon)?;
    Ok(DelayMargin {
        s1: k.s1,
        s2: k.s2,
        s3: k.s3,
        tau_bar_u,
        tau_bar,
        upsilon,
        spectral_radius: v.spectral_radius,
        schur_ok: v.stable,
    })
}

/// Sampled nonnegative signals `z_g` with the matrix they are checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct FanOutWitness {
    pub step: f64,
    /// `signals[g][k] = z_g(k · step)`.
    pub signals: Vec<Vec<f64>>,
    pub window: f64,
    pub upsilon: Matrix,
    /// Samples before this time are not scored (transient).
    pub score_from: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanOutReport {
    pub holds: bool,
    pub first_violation: Option<f64>,
    /// `max_{t,g} (z_g(t) − (Υ 𝔙)_g(t)) / max(1, ‖𝔙(t)‖∞)`; ≤ 0 when the
    /// inequality holds.
    pub worst_slack: f64,
    pub samples_scored: usize,
    /// Ratio of successive trailing-window maxima of `max_g z_g`.
    pub window_ratios: Vec<f64>,
    pub decay_threshold: f64,
    /// Finite-horizon proxy for `z_g → 0`: every window ratio is at most
    /// `ρ(Υ) + 0.05`.
    pub decays: bool,
}

const FANOUT_SLACK: f64 = 1e-12;

/// Check `Z(t) ≤ Υ 𝔙_T(t)` at every scored sample, where
/// `𝔙_T(t)_g = sup_{[t−T, t]} z_g`.
pub fn check_fanout(w: &FanOutWitness) -> Result<FanOutReport, DelayBoundError> {
    let l = w.signals.len();
    if l == 0 || w.upsilon.dims() != (l, l) {
        return Err(DelayBoundError::Malformed(format!("{} signals vs upsilon {:?}", l, w.upsilon.dims())));
    }
    let n = w.signals[0].len();
    if w.signals.iter().any(|s| s.len() != n) {
        return Err(DelayBoundError::Malformed("signals have different lengths".into()));
    }
    if w.signals.iter().flatten().any(|&z| !(z >= 0.0)) {
        return Err(DelayBoundError::Malformed("signals must be nonnegative".into()));
    }
    if w.upsilon.as_slice().iter().any(|&u| u < 0.0) {
        return Err(DelayBoundError::Malformed("upsilon must be nonnegative".into()));
    }
    if !(w.step > 0.0) {
        return Err(DelayBoundError::Malformed(format!("step {}", w.step)));
    }
    let ratio = w.window / w.step;
    let win = ratio.round() as usize;
    if win == 0 || (ratio - win as f64).abs() > 1e-6 * ratio.max(1.0) {
        return Err(DelayBoundError::WindowNotMultiple { step: w.step, window: w.window });
    }
    let span = (n.saturating_sub(1)) as f64 * w.step;
    if span + 1e-9 * w.step < 2.0 * w.window {
        return Err(DelayBoundError::WindowTooShort { span, needed: 2.0 * w.window });
    }

    let running: Vec<Vec<f64>> = w.signals.iter().map(|s| sliding_max(s, win)).collect();
    let start = ((w.score_from / w.step).ceil() as usize).max(win);
    let mut worst_slack = f64::NEG_INFINITY;
    let mut first_violation = None;
    let mut scored = 0;
    for k in start..n {
        let v: Vec<f64> = running.iter().map(|r| r[k]).collect();
        let bound = w.upsilon.mul_vec(&v);
        let scale = v.iter().fold(1.0f64, |m, x| m.max(*x));
        for (sig, b) in w.signals.iter().zip(&bound) {
            let slack = (sig[k] - b) / scale;
            worst_slack = worst_slack.max(slack);
            if slack > FANOUT_SLACK && first_violation.is_none() {
                first_violation = Some(k as f64 * w.step);
            }
        }
        scored += 1;
    }

    // Trailing-window maxima of max_g z_g at t = T, 2T, ...
    let combined: Vec<f64> = (0..n).map(|k| w.signals.iter().map(|s| s[k]).fold(0.0, f64::max)).collect();
    let comb_run = sliding_max(&combined, win);
    let mut window_ratios = Vec::new();
    let mut idx = win;
    while idx + win < n {
        let (prev, next) = (comb_run[idx], comb_run[idx + win]);
        window_ratios.push(if prev > 0.0 {
            next / prev
        } else if next > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
        idx += win;
    }
    let radius = spectral_radius(&w.upsilon)?;
    let decay_threshold = radius + 0.05;
    let decays = window_ratios.iter().all(|&r| r <= decay_threshold);

    Ok(FanOutReport {
        holds: first_violation.is_none(),
        first_violation,
        worst_slack,
        samples_scored: scored,
        window_ratios,
        decay_threshold,
        decays,
    })
}

fn spectral_radius(m: &Matrix) -> Result<f64, DelayBoundError> {
    if m.dims() == (2, 2) {
        return Ok(schur_2x2_nonneg(m)?.spectral_radius);
    }
    // Nonnegative l x l: Perron root via power iteration on the shifted matrix.
    let l = m.rows();
    let shifted = m + &Matrix::identity(l);
    let mut x = vec![1.0; l];
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let y = shifted.mul_vec(&x);
        let ny = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if ny == 0.0 {
            return Ok(0.0);
        }
        lambda = ny;
        x = y.iter().map(|v| v / ny).collect();
    }
    Ok(lambda - 1.0)
}

/// `out[k] = max(s[k − win ..= k])` (clipped at the start).
fn sliding_max(s: &[f64], win: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    let mut dq: VecDeque<usize> = VecDeque::new();
    for (k, &v) in s.iter().enumerate() {
        while dq.back().is_some_and(|&j| s[j] <= v) {
            dq.pop_back();
        }
        dq.push_back(k);
        while dq.front().is_some_and(|&j| j + win < k) {
            dq.pop_front();
        }
        out.push(s[*dq.front().expect("nonempty")]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{decompose, to_lpv};
    use crate::reference::{self, published};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn published_constants() -> SmallGainConstants {
        SmallGainConstants {
            a: (-2.25f64).exp(),
            b: 5f64.sqrt(),
            c: (-3.5f64).exp(),
            d: 7.5f64.sqrt(),
            s1: 0.5,
            s2: 0.5,
            s3: induced_norm2(&Matrix::from_slice_rows(&[[-0.5, 1.0], [-1.0, -0.3]])),
        }
    }

    #[test]
    fn reference_sup_norms() {
        let lpv = to_lpv(&decompose(&reference::plant()));
        let gains = reference::gains();
        let s1 = sup_norm(&lpv.input_coupling(&gains), (0.0, 2.0), 33).unwrap();
        assert!((s1.value - published::S1).abs() < 1e-12);
        assert_eq!(s1.argmax, 0.0);
        let s2 = sup_norm(&lpv.output_coupling(&gains), (0.0, 2.0), 33).unwrap();
        assert!((s2.value - published::S2).abs() < 1e-12);
        let s3 = sup_norm(&lpv.controller_loop(&gains), (0.0, 2.0), 33).unwrap();
        assert!((s3.value - published::S3).abs() < 1e-3);
        assert!(s1.at_endpoint && s2.at_endpoint && s3.at_endpoint);
    }

    #[test]
    fn sup_norm_refinement_is_monotone_and_stable() {
        let lpv = to_lpv(&decompose(&reference::plant()));
        let fam = lpv.controller_loop(&reference::gains());
        let mut prev = 0.0;
        // Nested grids: 2^k + 1 points.
        for k in 1..=7 {
            let v = sup_norm(&fam, (0.0, 2.0), (1 << k) + 1).unwrap().value;
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let a = sup_norm(&fam, (0.0, 2.0), 65).unwrap().value;
        let b = sup_norm(&fam, (0.0, 2.0), 129).unwrap().value;
        assert!((a - b).abs() <= 1e-6);
    }

    #[test]
    fn reference_tau_bound() {
        let k = published_constants();
        let tb = k.tau_bound().unwrap().value();
        assert!((tb - published::TAU_BOUND).abs() < 1e-3, "{tb}");
    }

    #[test]
    fn simple_tau_bound_and_unbounded() {
        let k = SmallGainConstants { a: 0.0, b: 1.0, c: 0.0, d: 1.0, s1: 1.0, s2: 1.0, s3: 1.0 };
        assert_eq!(k.tau_bound().unwrap(), DelayBound::Finite(0.5));
        let k0 = SmallGainConstants { s1: 0.0, ..k };
        assert_eq!(k0.tau_bound().unwrap(), DelayBound::Unbounded);
        assert!(k0.tau_bound().unwrap().admits(1e9));
        let bad = SmallGainConstants { a: 1.0, ..k };
        assert!(matches!(bad.tau_bound(), Err(DelayBoundError::InvalidConstant { name: "a", .. })));
    }

    #[test]
    fn small_gain_matrix_cases() {
        let k = published_constants();
        let m0 = k.small_gain_matrix(0.0);
        assert_eq!(m0[(1, 0)], 0.0);
        let r0 = schur_2x2_nonneg(&m0).unwrap().spectral_radius;
        assert!((r0 - k.a.max(k.c)).abs() < 1e-15);
        assert!(schur_2x2_nonneg(&k.small_gain_matrix(0.3)).unwrap().stable);
        assert!(!schur_2x2_nonneg(&k.small_gain_matrix(0.40)).unwrap().stable);
        let tb = k.tau_bound().unwrap().value();
        let rb = schur_2x2_nonneg(&k.small_gain_matrix(tb)).unwrap().spectral_radius;
        assert!((rb - 1.0).abs() < 1e-9);
        let at_published = schur_2x2_nonneg(&k.small_gain_matrix(published::TAU_BOUND)).unwrap();
        assert!((at_published.spectral_radius - 1.0).abs() < 1e-3);
    }

    #[test]
    fn tau_bound_monotone_in_each_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = SmallGainConstants {
                a: rng.gen_range(0.0..0.9),
                b: rng.gen_range(0.1..3.0),
                c: rng.gen_range(0.0..0.9),
                d: rng.gen_range(0.1..3.0),
                s1: rng.gen_range(0.1..2.0),
                s2: rng.gen_range(0.1..2.0),
                s3: rng.gen_range(0.1..2.0),
            };
            let base = k.tau_bound().unwrap().value();
            let bumps = [
                SmallGainConstants { d: k.d * 1.1, ..k },
                SmallGainConstants { s1: k.s1 * 1.1, ..k },
                SmallGainConstants { s2: k.s2 * 1.1, ..k },
                SmallGainConstants { s3: k.s3 * 1.1, ..k },
                SmallGainConstants { a: k.a + 0.05, ..k },
                SmallGainConstants { c: k.c + 0.05, ..k },
            ];
            for b in bumps {
                assert!(b.tau_bound().unwrap().value() < base);
            }
        }
    }

    fn geometric(r: f64, per: usize, windows: usize) -> Vec<f64> {
        (0..per * windows + 1).map(|k| r.powi((k / per) as i32)).collect()
    }

    #[test]
    fn fanout_zero_signals_pass() {
        let w = FanOutWitness {
            step: 0.1,
            signals: vec![vec![0.0; 101], vec![0.0; 101]],
            window: 1.0,
            upsilon: Matrix::from_diag(&[0.5, 0.5]),
            score_from: 0.0,
        };
        let r = check_fanout(&w).unwrap();
        assert!(r.holds && r.decays);
    }

    #[test]
    fn fanout_geometric_envelope_passes() {
        let r = 0.6;
        let per = 10;
        let z = geometric(r, per, 8);
        let w = FanOutWitness {
            step: 0.5,
            signals: vec![z.clone(), z],
            window: 5.0,
            upsilon: Matrix::from_diag(&[r, r]),
            score_from: 0.0,
        };
        let rep = check_fanout(&w).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(rep.decays);
        assert!(rep.window_ratios.iter().all(|x| (x - r).abs() < 1e-12));
    }

    #[test]
    fn fanout_detects_violation() {
        // Constant signal cannot satisfy z ≤ 0.5 z.
        let w = FanOutWitness {
            step: 0.5,
            signals: vec![vec![1.0; 41]],
            window: 5.0,
            upsilon: Matrix::from_slice_rows(&[[0.5]]),
            score_from: 0.0,
        };
        let rep = check_fanout(&w).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.first_violation, Some(5.0));
        assert!(!rep.decays);
    }

    #[test]
    fn fanout_input_errors() {
        let base = FanOutWitness {
            step: 0.3,
            signals: vec![vec![0.0; 20]],
            window: 1.0,
            upsilon: Matrix::from_slice_rows(&[[0.5]]),
            score_from: 0.0,
        };
        assert!(matches!(check_fanout(&base), Err(DelayBoundError::WindowNotMultiple { .. })));
        let short = FanOutWitness { step: 0.1, window: 1.5, ..base.clone() };
        assert!(matches!(check_fanout(&short), Err(DelayBoundError::WindowTooShort { .. })));
    }

    #[test]
    fn sliding_max_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        for win in [1, 3, 17] {
            let fast = sliding_max(&s, win);
            for k in 0..s.len() {
                let lo = k.saturating_sub(win);
                let brute = s[lo..=k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(fast[k], brute);
            }
        }
    }
}
