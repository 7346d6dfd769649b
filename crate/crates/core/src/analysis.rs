//! End-to-end pipeline pieces shared by the command line and the tests:
//! per-loop certification, the delay bound from the resulting constants and
//! modal-versus-network simulation helpers.

use serde::{Deserialize, Serialize};

use crate::certificates::{
    fading_constants, min_eta, search_certificate, verify_on_grid, CertificateError, CertificateReport, DwellSpec,
    FadingMemoryConstants, LmiCertificate, SearchOptions,
};
use crate::decomposition::{coords_to_network, decompose, to_lpv, DecomposablePlant, GainSchedule, LpvPlant};
use crate::delay_bound::{
    delay_margin, sup_norm, DelayBound, DelayBoundError, DelayMargin, FanOutWitness, SmallGainConstants, SupNorm,
};
use crate::family::{uniform_grid, PolyFamily};
use crate::matrix::Matrix;
use crate::simulator::{
    modal_norms, simulate_lpv_closed_loop, DelayProfile, InitialCondition, RhoPath, SimulationError, StepSettings,
    SwitchingSignal, TrajectoryRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    /// `𝓜(ρ) = 𝒜 + ℬ𝒦`, constants `(a, b)`.
    Controller,
    /// `𝓝(ρ) = 𝒜 + ℒ𝒞`, constants `(c, d)`.
    Observer,
}

impl LoopKind {
    pub fn label(self) -> &'static str {
        match self {
            LoopKind::Controller => "controller",
            LoopKind::Observer => "observer",
        }
    }

    pub fn family(self, lpv: &LpvPlant, gains: &GainSchedule) -> PolyFamily {
        match self {
            LoopKind::Controller => lpv.controller_loop(gains),
            LoopKind::Observer => lpv.observer_loop(gains),
        }
    }
}

/// Certificate data without a grid; the grid comes from the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateValues {
    pub q0: Matrix,
    pub q1: Matrix,
    pub d1: f64,
    pub d2: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl CertificateValues {
    pub fn on_grid(&self, grid: Vec<f64>) -> Result<LmiCertificate, CertificateError> {
        LmiCertificate::new(self.q0.clone(), self.q1.clone(), self.d1, self.d2, self.mu, self.gamma, grid)
    }

    pub fn from_certificate(c: &LmiCertificate) -> Self {
        CertificateValues { q0: c.q0.clone(), q1: c.q1.clone(), d1: c.d1, d2: c.d2, mu: c.mu, gamma: c.gamma }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub eta: u32,
    pub horizon: f64,
    pub supplied: Option<CertificateValues>,
}

/// One certificate checked on the grid and its refinement, with its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedLoop {
    pub certificate: LmiCertificate,
    pub grid_report: CertificateReport,
    pub refined_report: CertificateReport,
    /// Feasible on both the grid and the refinement.
    pub verified: bool,
    pub min_eta: Option<u32>,
    pub constants: FadingMemoryConstants,
}

impl CertifiedLoop {
    fn check(
        family: &PolyFamily,
        cert: LmiCertificate,
        dwell: &DwellSpec,
        eta: u32,
        horizon: f64,
    ) -> Result<Self, CertificateError> {
        let grid_report = verify_on_grid(family, &cert, &cert.grid)?;
        let refined_report = verify_on_grid(family, &cert, &cert.refined_grid())?;
        let verified = grid_report.feasible && refined_report.feasible;
        let min_eta = min_eta(&cert, dwell).ok();
        let constants = fading_constants(&cert, dwell, eta, horizon);
        Ok(CertifiedLoop { certificate: cert, grid_report, refined_report, verified, min_eta, constants })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopAnalysis {
    pub kind: LoopKind,
    pub eta: u32,
    pub horizon: f64,
    pub supplied: Option<CertifiedLoop>,
    /// Run when nothing was supplied or the supplied certificate failed.
    pub searched: Option<CertifiedLoop>,
    pub search_error: Option<String>,
}

impl LoopAnalysis {
    /// Constants as configured: the supplied certificate if any, else the
    /// searched one.
    pub fn nominal(&self) -> Option<&CertifiedLoop> {
        self.supplied.as_ref().or(self.searched.as_ref())
    }

    /// First certificate that actually verifies.
    pub fn verified(&self) -> Option<&CertifiedLoop> {
        [self.supplied.as_ref(), self.searched.as_ref()].into_iter().flatten().find(|c| c.verified)
    }
}

pub fn analyze_loop(
    kind: LoopKind,
    lpv: &LpvPlant,
    gains: &GainSchedule,
    dwell: &DwellSpec,
    spec: &LoopSpec,
    grid_size: usize,
    opts: &SearchOptions,
) -> Result<LoopAnalysis, CertificateError> {
    if grid_size < 2 {
        return Err(CertificateError::GridTooSmall(grid_size));
    }
    let family = kind.family(lpv, gains);
    let (lo, hi) = lpv.rho_interval;
    let supplied = match &spec.supplied {
        Some(v) => {
            let cert = v.on_grid(uniform_grid(lo, hi, grid_size))?;
            Some(CertifiedLoop::check(&family, cert, dwell, spec.eta, spec.horizon)?)
        }
        None => None,
    };
    let mut searched = None;
    let mut search_error = None;
    if !supplied.as_ref().is_some_and(|s| s.verified) {
        match search_certificate(&family, lpv.rho_interval, grid_size, opts) {
            Ok(cert) => searched = Some(CertifiedLoop::check(&family, cert, dwell, spec.eta, spec.horizon)?),
            Err(CertificateError::Infeasible { best }) => {
                search_error = Some(format!(
                    "infeasible; best margins bounds {:.3e}, cross {:.3e}, lyapunov {:.3e} at gamma {}, mu {}",
                    best.bounds, best.cross, best.lyapunov, best.gamma, best.mu
                ))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(LoopAnalysis { kind, eta: spec.eta, horizon: spec.horizon, supplied, searched, search_error })
}

/// `s1 = sup ‖ℬ𝒦‖`, `s2 = sup ‖ℒ𝒞‖`, `s3 = sup ‖𝓜‖` over the ρ interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupConstants {
    pub s1: SupNorm,
    pub s2: SupNorm,
    pub s3: SupNorm,
}

pub fn sup_constants(lpv: &LpvPlant, gains: &GainSchedule, grid_size: usize) -> Result<SupConstants, DelayBoundError> {
    let iv = lpv.rho_interval;
    Ok(SupConstants {
        s1: sup_norm(&lpv.input_coupling(gains), iv, grid_size)?,
        s2: sup_norm(&lpv.output_coupling(gains), iv, grid_size)?,
        s3: sup_norm(&lpv.controller_loop(gains), iv, grid_size)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAnalysis {
    pub sups: SupConstants,
    pub constants: SmallGainConstants,
    pub bound: DelayBound,
    pub tau_max: f64,
    /// `τ̄_u − τ̄`; negative when the profile exceeds the bound.
    pub margin: f64,
    pub admitted: bool,
    /// Υ evaluated at the profile's `τ̄`.
    pub at_tau_max: DelayMargin,
}

pub fn analyze_bound(
    sups: &SupConstants,
    ctrl: &FadingMemoryConstants,
    obs: &FadingMemoryConstants,
    delay: &DelayProfile,
) -> Result<BoundAnalysis, DelayBoundError> {
    let constants = SmallGainConstants {
        a: ctrl.gain_contraction,
        b: ctrl.gain_isse,
        c: obs.gain_contraction,
        d: obs.gain_isse,
        s1: sups.s1.value,
        s2: sups.s2.value,
        s3: sups.s3.value,
    };
    let bound = constants.tau_bound()?;
    let at_tau_max = delay_margin(&constants, delay.tau_max)?;
    Ok(BoundAnalysis {
        sups: *sups,
        constants,
        bound,
        tau_max: delay.tau_max,
        margin: bound.value() - delay.tau_max,
        admitted: bound.admits(delay.tau_max),
        at_tau_max,
    })
}

/// Run every modal subsystem on its own with `ρ_i(t) = ν_i(σ(t))`, starting
/// from the modal image of a network initial condition.
pub fn simulate_modes(
    plant: &DecomposablePlant,
    gains: &GainSchedule,
    switching: &SwitchingSignal,
    delay: &DelayProfile,
    init: &InitialCondition,
    settings: StepSettings,
) -> Result<Vec<TrajectoryRecord>, SimulationError> {
    let mf = decompose(plant);
    let lpv = to_lpv(&mf);
    let n = plant.state_dim();
    let modal_init = init.to_modal(&mf.u_basis, n)?;
    let mut convex = switching.clone();
    for v in &mut convex.values {
        *v = plant.pattern.convex_sigma(*v)?;
    }
    convex.value_range = (0.0, 1.0);
    mf.nu_pairs
        .iter()
        .enumerate()
        .map(|(i, &(lambda1, lambda2))| {
            let path = RhoPath::Mode { switching: &convex, lambda1, lambda2 };
            let mut rec = simulate_lpv_closed_loop(&lpv, gains, path, delay, &modal_init.slice(i * n, n), settings)?;
            rec.sigma.clone_from(&switching_samples(switching, &rec.times));
            rec.scenario = format!("mode{i}");
            Ok(rec)
        })
        .collect()
}

fn switching_samples(sw: &SwitchingSignal, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| sw.value_at(t)).collect()
}

/// Stack modal records and map back with `U ⊗ I`.
pub fn reassemble_network(modes: &[TrajectoryRecord], u: &Matrix, block: usize) -> TrajectoryRecord {
    let len = modes[0].len();
    let stack = |pick: &dyn Fn(&TrajectoryRecord, usize) -> Vec<f64>, k: usize| {
        let modal: Vec<f64> = modes.iter().flat_map(|m| pick(m, k)).collect();
        coords_to_network(&modal, u, block).expect("consistent modal dimensions")
    };
    let first = &modes[0];
    TrajectoryRecord {
        scenario: "modal".into(),
        seed: first.seed,
        step: first.step,
        times: first.times.clone(),
        sigma: first.sigma.clone(),
        tau: first.tau.clone(),
        x: (0..len).map(|k| stack(&|m, k| m.x[k].clone(), k)).collect(),
        xhat: (0..len).map(|k| stack(&|m, k| m.xhat[k].clone(), k)).collect(),
        output: Vec::new(),
    }
}

/// Largest absolute difference between two records' plant and observer states.
pub fn sup_state_difference(a: &TrajectoryRecord, b: &TrajectoryRecord) -> f64 {
    let diff = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        p.iter().zip(q).flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max)
    };
    diff(&a.x, &b.x).max(diff(&a.xhat, &b.xhat))
}

/// One fan-out witness per modal subsystem with `z = (|ω_i|, |ω̃_i|)`.
pub fn modal_fanout_witnesses(
    net: &TrajectoryRecord,
    u: &Matrix,
    block: usize,
    upsilon: &Matrix,
    window: f64,
    score_from: f64,
) -> Result<Vec<FanOutWitness>, SimulationError> {
    let norms = modal_norms(net, u, block)?;
    Ok(norms
        .into_iter()
        .map(|(xs, es)| FanOutWitness {
            step: net.step,
            signals: vec![xs, es],
            window,
            upsilon: upsilon.clone(),
            score_from,
        })
        .collect())
}
