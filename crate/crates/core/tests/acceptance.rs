//! Acceptance suite for the six-agent reference scenario. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

use std::process::ExitCode;

use lpvnet::analysis::{
    modal_fanout_witnesses, reassemble_network, simulate_modes, sup_constants, sup_state_difference,
};
use lpvnet::certificates::{fading_constants, verify_on_grid, LmiCertificate};
use lpvnet::decomposition::{coords_to_modal, coords_to_network, decompose, to_lpv};
use lpvnet::delay_bound::{check_fanout, small_gain_matrix, tau_bound, DelayBound, SmallGainConstants};
use lpvnet::family::uniform_grid;
use lpvnet::matrix::{schur_2x2_nonneg, sym_eigenvalues, Matrix};
use lpvnet::reference::{self, published};
use lpvnet::simulator::{
    consensus_gap, gen_switching, random_initial_condition, simulate_lpv_closed_loop, simulate_network,
    InitialCondition, RhoPath, StepSettings,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn near(name: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    if (got - want).abs() <= tol {
        Ok(format!("{name}={got:.4}"))
    } else {
        Err(format!("{name}={got:.6} expected {want} ± {tol}"))
    }
}

fn a1() -> Outcome {
    let mut notes = Vec::new();
    for (name, m, want) in
        [("P1", reference::p1(), published::P1_SPECTRUM), ("P2", reference::p2(), published::P2_SPECTRUM)]
    {
        let ev = sym_eigenvalues(&m).map_err(|e| e.to_string())?;
        let worst = ev.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > 1e-9 {
            return Err(format!("{name} spectrum {ev:?} off by {worst:e}"));
        }
        notes.push(format!("{name} spectrum within {worst:.1e}"));
    }
    let (lo, hi) = to_lpv(&decompose(&reference::plant())).rho_interval;
    if (lo - published::RHO_MIN).abs() > 1e-12 || (hi - published::RHO_MAX).abs() > 1e-12 {
        return Err(format!("rho interval [{lo}, {hi}]"));
    }
    notes.push(format!("rho interval [{lo:.1e}, {hi:.15}] (ends within 1e-12 of [0, 2])"));
    Ok(notes.join("; "))
}

fn a2() -> Outcome {
    let cert = reference::published_certificate(reference::DEFAULT_GRID);
    let dwell = reference::dwell();
    let ctl = fading_constants(&cert, &dwell, reference::CONTROLLER_ETA, reference::CONTROLLER_HORIZON);
    let obs = fading_constants(&cert, &dwell, reference::OBSERVER_ETA, reference::OBSERVER_HORIZON);
    let parts = [
        near("a", ctl.gain_contraction, published::A, 1e-3)?,
        near("b", ctl.gain_isse, published::B, 1e-3)?,
        near("c", obs.gain_contraction, published::C, 1e-3)?,
        near("d", obs.gain_isse, published::D, 1e-3)?,
    ];
    Ok(parts.join(" "))
}

fn reference_small_gain() -> Result<SmallGainConstants, String> {
    let lpv = to_lpv(&decompose(&reference::plant()));
    let sups = sup_constants(&lpv, &reference::gains(), reference::DEFAULT_GRID).map_err(|e| e.to_string())?;
    let cert = reference::published_certificate(reference::DEFAULT_GRID);
    let dwell = reference::dwell();
    let ctl = fading_constants(&cert, &dwell, reference::CONTROLLER_ETA, reference::CONTROLLER_HORIZON);
    let obs = fading_constants(&cert, &dwell, reference::OBSERVER_ETA, reference::OBSERVER_HORIZON);
    Ok(SmallGainConstants {
        a: ctl.gain_contraction,
        b: ctl.gain_isse,
        c: obs.gain_contraction,
        d: obs.gain_isse,
        s1: sups.s1.value,
        s2: sups.s2.value,
        s3: sups.s3.value,
    })
}

fn a3() -> Outcome {
    let k = reference_small_gain()?;
    let bound = tau_bound(&k).map_err(|e| e.to_string())?.value();
    let profile = reference::delay_profile();
    let parts = [
        near("s1", k.s1, published::S1, 1e-3)?,
        near("s2", k.s2, published::S2, 1e-3)?,
        near("s3", k.s3, published::S3, 1e-3)?,
        near("tau_u", bound, published::TAU_BOUND, 1e-3)?,
    ];
    if !(profile.tau_max < bound) {
        return Err(format!("profile sup {} not below bound {bound}", profile.tau_max));
    }
    Ok(format!("{}; profile sup {} accepted", parts.join(" "), profile.tau_max))
}

fn a4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa4);
    let (mut stable_checks, mut boundary_worst) = (0usize, 0.0f64);
    for _ in 0..1000 {
        let k = SmallGainConstants {
            a: rng.gen_range(0.0..1.0),
            b: rng.gen_range(0.0..=3.0),
            c: rng.gen_range(0.0..1.0),
            d: rng.gen_range(0.0..=3.0),
            s1: 2.0 - rng.gen_range(0.0..2.0),
            s2: 2.0 - rng.gen_range(0.0..2.0),
            s3: 2.0 - rng.gen_range(0.0..2.0),
        };
        let bound = match tau_bound(&k).map_err(|e| e.to_string())? {
            DelayBound::Finite(v) => v,
            DelayBound::Unbounded => continue,
        };
        let edge = schur_2x2_nonneg(&small_gain_matrix(&k, bound)).map_err(|e| e.to_string())?;
        boundary_worst = boundary_worst.max((edge.spectral_radius - 1.0).abs());
        for side in [-1.0, 1.0] {
            let tau = bound * (1.0 + side * rng.gen_range(1e-9..1.0));
            if (tau - bound).abs() <= 1e-9 * bound.max(1.0) {
                continue;
            }
            let v = schur_2x2_nonneg(&small_gain_matrix(&k, tau)).map_err(|e| e.to_string())?;
            if v.stable != (tau < bound) {
                return Err(format!("{k:?} tau={tau} bound={bound} radius={}", v.spectral_radius));
            }
            stable_checks += 1;
        }
    }
    if boundary_worst > 1e-9 {
        return Err(format!("boundary radius off by {boundary_worst:e}"));
    }
    Ok(format!("{stable_checks} side checks agree; boundary |rho-1| <= {boundary_worst:.1e}"))
}

fn a5() -> Outcome {
    let plant = reference::plant();
    let gains = reference::gains();
    let delay = reference::delay_profile();
    let mf = decompose(&plant);
    let settings = StepSettings { step: 5e-3, horizon: 10.0 };
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let sw = gen_switching(seed, reference::dwell(), settings.horizon, (0.0, 1.0)).map_err(|e| e.to_string())?;
        let init = random_initial_condition(seed, reference::N_AGENTS * reference::STATE_DIM, 1.0);
        let net = simulate_network(&plant, &gains, &sw, &delay, &init, settings).map_err(|e| e.to_string())?;
        let modes = simulate_modes(&plant, &gains, &sw, &delay, &init, settings).map_err(|e| e.to_string())?;
        let back = reassemble_network(&modes, &mf.u_basis, reference::STATE_DIM);
        worst = worst.max(sup_state_difference(&net, &back));
    }
    if worst <= 1e-6 {
        Ok(format!("network vs modal sup difference {worst:.2e} over 5 seeds"))
    } else {
        Err(format!("network vs modal sup difference {worst:e}"))
    }
}

fn a6() -> Outcome {
    let plant = reference::plant();
    let gains = reference::gains();
    let delay = reference::delay_profile();
    let mf = decompose(&plant);
    let k = reference_small_gain()?;
    let upsilon = small_gain_matrix(&k, delay.tau_max);
    let window = reference::CONTROLLER_HORIZON.max(reference::OBSERVER_HORIZON) + delay.tau_max;
    let settings = StepSettings { step: 5e-3, horizon: 40.0 };
    let (mut worst_ratio, mut worst_slack) = (0.0f64, f64::NEG_INFINITY);
    for seed in 0..10u64 {
        let sw = gen_switching(seed, reference::dwell(), settings.horizon, (0.0, 1.0)).map_err(|e| e.to_string())?;
        let init = random_initial_condition(seed, reference::N_AGENTS * reference::STATE_DIM, 1.0);
        let net = simulate_network(&plant, &gains, &sw, &delay, &init, settings).map_err(|e| e.to_string())?;
        let gap = consensus_gap(&net, reference::STATE_DIM).map_err(|e| e.to_string())?;
        let ratio = gap.last().unwrap() / gap[0];
        worst_ratio = worst_ratio.max(ratio);
        if ratio > 0.01 {
            return Err(format!("seed {seed}: gap ratio {ratio:e}"));
        }
        let witnesses = modal_fanout_witnesses(&net, &mf.u_basis, reference::STATE_DIM, &upsilon, window, window)
            .map_err(|e| e.to_string())?;
        for (mode, w) in witnesses.iter().enumerate() {
            let rep = check_fanout(w).map_err(|e| e.to_string())?;
            worst_slack = worst_slack.max(rep.worst_slack);
            if !rep.holds {
                return Err(format!("seed {seed} mode {mode}: fan-out violated at t={:?}", rep.first_violation));
            }
        }
    }
    Ok(format!(
        "worst gap ratio {worst_ratio:.2e}; fan-out holds from t={window}, worst normalized slack {worst_slack:.2e}"
    ))
}

fn a7() -> Outcome {
    let lpv = to_lpv(&decompose(&reference::plant()));
    let gains = reference::gains();
    let cert = reference::published_certificate(33);
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (name, fam) in [("M", lpv.controller_loop(&gains)), ("N", lpv.observer_loop(&gains))] {
        for grid in [cert.grid.clone(), cert.refined_grid()] {
            let rep = verify_on_grid(&fam, &cert, &grid).map_err(|e| e.to_string())?;
            let line = format!(
                "{name}/{}pt margins bounds {:.1e} cross {:.1e} lyapunov {:.2e}@rho={}",
                rep.grid_points, rep.bounds_margin, rep.cross_margin, rep.lyapunov_margin, rep.lyapunov_worst_rho
            );
            if rep.feasible {
                notes.push(line);
            } else {
                failures.push(line);
            }
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<String, String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map(|_| format!("{name} ({cases})")).map_err(|e| format!("{name}: {e}"))
}

fn a8() -> Outcome {
    let cert = reference::published_certificate(9);
    let dwell = reference::dwell();
    let mut parts = Vec::new();

    parts.push(run_property("fading monotone", 128, (1u32..200, 0.1f64..20.0, 0.01f64..5.0), |(eta, t, dt)| {
        let lo = fading_constants(&cert, &dwell, eta, t);
        let next = fading_constants(&cert, &dwell, eta + 1, t);
        let longer = fading_constants(&cert, &dwell, eta, t + dt);
        prop_assert!(next.gain_contraction < lo.gain_contraction);
        prop_assert!(longer.gain_isse > lo.gain_isse);
        Ok(())
    })?);

    let lpv = to_lpv(&decompose(&reference::plant()));
    let fam = lpv.observer_loop(&reference::gains());
    parts.push(run_property("LMI homogeneity", 32, 0.01f64..100.0, |kappa| {
        let base = LmiCertificate::new(
            Matrix::from_slice_rows(&[[2.0, 0.3], [0.3, 1.5]]),
            Matrix::from_slice_rows(&[[0.1, 0.0], [0.0, -0.05]]),
            1.0,
            3.0,
            1.2,
            0.2,
            uniform_grid(0.0, 2.0, 9),
        )
        .unwrap();
        let r0 = verify_on_grid(&fam, &base, &base.grid).unwrap();
        let r1 = verify_on_grid(&fam, &base.scaled(kappa), &base.grid).unwrap();
        prop_assert_eq!(r0.feasible, r1.feasible);
        for (m0, m1) in r0.margins().iter().zip(r1.margins()) {
            prop_assert!((m1 - kappa * m0).abs() <= 1e-9 * kappa.max(1.0) * m0.abs().max(1.0));
        }
        Ok(())
    })?);

    let u = decompose(&reference::plant()).u_basis;
    parts.push(run_property("coordinate round trip", 128, prop::collection::vec(-10.0f64..10.0, 12), |x| {
        let back = coords_to_network(&coords_to_modal(&x, &u, 2).unwrap(), &u, 2).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        Ok(())
    })?);

    let gains = reference::gains();
    let delay = reference::delay_profile();
    parts.push(run_property("RK4 step refinement", 6, (0u64..1000, 0usize..6), |(seed, mode)| {
        let sw = gen_switching(seed, dwell, 10.0, (0.0, 1.0)).unwrap();
        let (l1, l2) = decompose(&reference::plant()).nu_pairs[mode];
        let path = RhoPath::Mode { switching: &sw, lambda1: l1, lambda2: l2 };
        let init = random_initial_condition(seed, 2, 1.0);
        let init = InitialCondition::constant(init.plant, vec![0.0; 2]);
        let run = |step| {
            simulate_lpv_closed_loop(&lpv, &gains, path, &delay, &init, StepSettings { step, horizon: 10.0 }).unwrap()
        };
        let (c, f) = (run(2e-3), run(1e-3));
        let end = |r: &lpvnet::TrajectoryRecord| [r.x.last().unwrap().clone(), r.xhat.last().unwrap().clone()].concat();
        let diff = end(&c).iter().zip(end(&f)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-5, "endpoint change {}", diff);
        Ok(())
    })?);

    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 8] =
        [("A1", a1), ("A2", a2), ("A3", a3), ("A4", a4), ("A5", a5), ("A6", a6), ("A7", a7), ("A8", a8)];
    let mut failed = 0;
    for (id, check) in criteria {
        match check() {
            Ok(msg) => println!("{id} PASS {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{id} FAIL {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
