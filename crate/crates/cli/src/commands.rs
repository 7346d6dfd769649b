//! The five verbs. Each returns a text report, a JSON sidecar and the error
//! (if any) that decides the exit code; the report is emitted either way.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lpvnet::analysis::{
    analyze_bound, analyze_loop, modal_fanout_witnesses, reassemble_network, simulate_modes, sup_constants,
    sup_state_difference, BoundAnalysis, CertifiedLoop, LoopAnalysis, LoopKind, SupConstants,
};
use lpvnet::certificates::{FadingMemoryConstants, SearchOptions};
use lpvnet::decomposition::{decompose, to_lpv, LpvPlant};
use lpvnet::delay_bound::{check_fanout, FanOutReport};
use lpvnet::reference::published;
use lpvnet::simulator::{consensus_gap, gen_switching, random_initial_condition, simulate_network, StepSettings};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Scenario;
use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub eta: Option<u32>,
}

#[derive(Debug)]
pub struct Report {
    pub verb: &'static str,
    pub text: String,
    pub sidecar: Value,
    pub failure: Option<CliError>,
}

impl Report {
    pub fn exit_code(&self) -> u8 {
        self.failure.as_ref().map_or(0, CliError::exit_code)
    }
}

/// Write via a temporary sibling and rename, so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| CliError::Other(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report data serializes")
}

fn grid_size(sc: &Scenario, opts: &Options) -> usize {
    opts.grid.unwrap_or(sc.config.certificates.grid_size)
}

fn apply_overrides(sc: &Scenario, opts: &Options) -> Result<Scenario, CliError> {
    let mut sc = sc.clone();
    if let Some(eta) = opts.eta {
        if eta == 0 {
            return Err(CliError::Validation("--eta must be positive".into()));
        }
        sc.override_eta(eta);
    }
    if let Some(g) = opts.grid {
        if g < 2 {
            return Err(CliError::Validation("--grid must be at least 2".into()));
        }
    }
    if let Some(seed) = opts.seed {
        sc.config.simulation.seeds = vec![seed];
    }
    Ok(sc)
}

fn lpv_of(sc: &Scenario) -> LpvPlant {
    to_lpv(&decompose(&sc.plant))
}

pub fn cmd_decompose(sc: &Scenario, opts: &Options) -> Result<Report, CliError> {
    let sc = apply_overrides(sc, opts)?;
    let mf = decompose(&sc.plant);
    let lpv = to_lpv(&mf);
    let mut t = String::new();
    writeln!(
        t,
        "scenario {}: {} agents, agent state dimension {}",
        sc.config.name,
        sc.plant.n_agents(),
        sc.plant.state_dim()
    )
    .ok();
    if let Some(theta) = mf.theta {
        writeln!(t, "simultaneous diagonalization used the randomized combination, theta = {theta}").ok();
    }
    writeln!(t, "mode  lambda1      lambda2      nu interval").ok();
    for (i, &(l1, l2)) in mf.nu_pairs.iter().enumerate() {
        let (lo, hi) = mf.mode_interval(i);
        writeln!(t, "{i:>4}  {l1:>11.6}  {l2:>11.6}  [{lo:.6}, {hi:.6}]").ok();
    }
    let (lo, hi) = lpv.rho_interval;
    writeln!(t, "rho interval: [{lo:.6}, {hi:.6}]").ok();
    let sidecar = json!({
        "scenario": sc.config.name,
        "u_basis": to_value(&mf.u_basis),
        "nu_pairs": mf.nu_pairs,
        "mode_intervals": mf.mode_intervals(),
        "theta": mf.theta,
        "rho_interval": lpv.rho_interval,
        "lpv": to_value(&lpv),
    });
    Ok(Report { verb: "decompose", text: t, sidecar, failure: None })
}

fn describe_certified(t: &mut String, label: &str, c: &CertifiedLoop, pair: (&str, &str)) {
    let cert = &c.certificate;
    writeln!(t, "  {label} certificate: d1={} d2={} mu={} gamma={}", cert.d1, cert.d2, cert.mu, cert.gamma).ok();
    for r in [&c.grid_report, &c.refined_report] {
        writeln!(
            t,
            "    grid {:>3}: bounds {:+.4e}  cross {:+.4e}  lyapunov {:+.4e} (worst rho {:.4})  {}",
            r.grid_points,
            r.bounds_margin,
            r.cross_margin,
            r.lyapunov_margin,
            r.lyapunov_worst_rho,
            if r.feasible { "ok" } else { "VIOLATED" }
        )
        .ok();
    }
    let k = &c.constants;
    writeln!(
        t,
        "    min eta {}; {}={:.4} {}={:.4}{}",
        c.min_eta.map_or("n/a".to_string(), |e| e.to_string()),
        pair.0,
        k.gain_contraction,
        pair.1,
        k.gain_isse,
        if k.contractive { "" } else { "  (FLAGGED: contraction constant >= 1)" }
    )
    .ok();
}

fn loop_pair(kind: LoopKind) -> (&'static str, &'static str) {
    match kind {
        LoopKind::Controller => ("a", "b"),
        LoopKind::Observer => ("c", "d"),
    }
}

fn describe_loop(t: &mut String, an: &LoopAnalysis) {
    writeln!(t, "{} loop: eta={} T={}", an.kind.label(), an.eta, an.horizon).ok();
    let pair = loop_pair(an.kind);
    if let Some(s) = &an.supplied {
        describe_certified(t, "supplied", s, pair);
    }
    if let Some(s) = &an.searched {
        describe_certified(t, "searched", s, pair);
    }
    if let Some(e) = &an.search_error {
        writeln!(t, "  search: {e}").ok();
    }
    let verdict = match (an.verified(), &an.supplied) {
        (Some(v), Some(s)) if std::ptr::eq(v, s) => "supplied certificate verified on grid and refinement".to_string(),
        (Some(v), Some(_)) => format!(
            "supplied certificate does NOT verify; searched certificate (gamma={}, mu={}) verifies",
            v.certificate.gamma, v.certificate.mu
        ),
        (Some(v), None) => {
            format!("searched certificate (gamma={}, mu={}) verifies", v.certificate.gamma, v.certificate.mu)
        }
        (None, _) => "no verified certificate".to_string(),
    };
    writeln!(t, "  verdict: {verdict}").ok();
}

struct Certified {
    controller: LoopAnalysis,
    observer: LoopAnalysis,
}

impl Certified {
    fn loops(&self) -> [&LoopAnalysis; 2] {
        [&self.controller, &self.observer]
    }

    fn failure(&self) -> Option<CliError> {
        for an in self.loops() {
            match (an.verified(), an.nominal()) {
                (None, _) | (_, None) => {
                    return Some(CliError::Infeasible(format!(
                        "{} loop has no verified certificate{}",
                        an.kind.label(),
                        an.search_error.as_ref().map_or(String::new(), |e| format!(" ({e})"))
                    )))
                }
                (_, Some(n)) if !n.constants.contractive => {
                    return Some(CliError::Infeasible(format!(
                        "{} loop constants are not contractive at eta={} (min eta {})",
                        an.kind.label(),
                        an.eta,
                        n.min_eta.map_or("n/a".to_string(), |e| e.to_string())
                    )))
                }
                _ => {}
            }
        }
        None
    }

    fn nominal_constants(&self) -> Option<(FadingMemoryConstants, FadingMemoryConstants)> {
        Some((self.controller.nominal()?.constants, self.observer.nominal()?.constants))
    }

    fn verified_constants(&self) -> Option<(FadingMemoryConstants, FadingMemoryConstants)> {
        Some((self.controller.verified()?.constants, self.observer.verified()?.constants))
    }

    fn nominal_is_verified(&self) -> bool {
        self.loops().iter().all(|an| an.nominal().is_some_and(|c| c.verified))
    }
}

fn certify(sc: &Scenario, grid: usize) -> Result<Certified, CliError> {
    let lpv = lpv_of(sc);
    let cfg = &sc.config;
    let opts = SearchOptions::default();
    let run = |kind, spec| {
        analyze_loop(kind, &lpv, &cfg.gains, &cfg.dwell, spec, grid, &opts)
            .map_err(|e| CliError::Validation(format!("{} loop: {e}", kind.label())))
    };
    Ok(Certified {
        controller: run(LoopKind::Controller, &cfg.certificates.controller.spec())?,
        observer: run(LoopKind::Observer, &cfg.certificates.observer.spec())?,
    })
}

pub fn cmd_certify(sc: &Scenario, opts: &Options) -> Result<Report, CliError> {
    let sc = apply_overrides(sc, opts)?;
    let grid = grid_size(&sc, opts);
    let cert = certify(&sc, grid)?;
    let mut t = String::new();
    writeln!(t, "scenario {}: certificates on a {grid}-point grid and its refinement", sc.config.name).ok();
    for an in cert.loops() {
        describe_loop(&mut t, an);
    }
    writeln!(t, "note: {}", lpvnet::certificates::GRID_CAVEAT).ok();
    let sidecar = json!({
        "scenario": sc.config.name,
        "grid_size": grid,
        "controller": to_value(&cert.controller),
        "observer": to_value(&cert.observer),
    });
    Ok(Report { verb: "certify", text: t, sidecar, failure: cert.failure() })
}

struct Bounded {
    cert: Certified,
    sups: SupConstants,
    nominal: Option<Result<BoundAnalysis, String>>,
    verified: Option<Result<BoundAnalysis, String>>,
}

fn bound(sc: &Scenario, grid: usize) -> Result<Bounded, CliError> {
    let cert = certify(sc, grid)?;
    let sups = sup_constants(&lpv_of(sc), &sc.config.gains, grid).map_err(|e| CliError::Validation(e.to_string()))?;
    let delay = &sc.config.delay;
    let run = |(c, o): (FadingMemoryConstants, FadingMemoryConstants)| {
        analyze_bound(&sups, &c, &o, delay).map_err(|e| e.to_string())
    };
    let nominal = cert.nominal_constants().map(run);
    let verified = if cert.nominal_is_verified() { None } else { cert.verified_constants().map(run) };
    Ok(Bounded { cert, sups, nominal, verified })
}

fn describe_bound(t: &mut String, label: &str, b: &Result<BoundAnalysis, String>) {
    match b {
        Ok(b) => {
            let k = &b.constants;
            writeln!(
                t,
                "{label}: a={:.4} b={:.4} c={:.4} d={:.4} -> tau_u = {}",
                k.a,
                k.b,
                k.c,
                k.d,
                fmt_bound(b.bound.value())
            )
            .ok();
            writeln!(
                t,
                "  profile tau_max = {} : {} (margin {:+.4}); Upsilon(tau_max) spectral radius {:.4}",
                b.tau_max,
                if b.admitted { "accepted" } else { "REJECTED" },
                b.margin,
                b.at_tau_max.spectral_radius
            )
            .ok();
        }
        Err(e) => {
            writeln!(t, "{label}: bound unavailable: {e}").ok();
        }
    }
}

fn fmt_bound(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "unbounded".into()
    }
}

pub fn cmd_bound(sc: &Scenario, opts: &Options) -> Result<Report, CliError> {
    let sc = apply_overrides(sc, opts)?;
    let grid = grid_size(&sc, opts);
    let b = bound(&sc, grid)?;
    let mut t = String::new();
    writeln!(t, "scenario {}: delay bound on a {grid}-point grid", sc.config.name).ok();
    let s = &b.sups;
    writeln!(
        t,
        "s1 = sup|BK| = {:.6} (rho={:.4})  s2 = sup|LC| = {:.6} (rho={:.4})  s3 = sup|A+BK| = {:.6} (rho={:.4})",
        s.s1.value, s.s1.argmax, s.s2.value, s.s2.argmax, s.s3.value, s.s3.argmax
    )
    .ok();
    let failure = match &b.nominal {
        Some(nom) => {
            let label = if b.cert.nominal_is_verified() { "verified constants" } else { "configured constants" };
            describe_bound(&mut t, label, nom);
            if let Some(v) = &b.verified {
                writeln!(t, "warning: configured certificates do not verify; bound from verified certificates follows")
                    .ok();
                describe_bound(&mut t, "verified constants", v);
            }
            match nom {
                Ok(n) if !n.admitted => Some(CliError::DelayExceedsBound(format!(
                    "tau_max {} >= tau_u {} (margin {:+.4})",
                    n.tau_max,
                    fmt_bound(n.bound.value()),
                    n.margin
                ))),
                Ok(_) => None,
                Err(e) => Some(CliError::Infeasible(e.clone())),
            }
        }
        None => b.cert.failure().or_else(|| Some(CliError::Infeasible("no certificate for the bound".into()))),
    };
    let sidecar = json!({
        "scenario": sc.config.name,
        "grid_size": grid,
        "sup_constants": to_value(&b.sups),
        "nominal": b.nominal.as_ref().map(|r| r.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e }))),
        "verified": b.verified.as_ref().map(|r| r.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e }))),
        "nominal_is_verified": b.cert.nominal_is_verified(),
    });
    Ok(Report { verb: "bound", text: t, sidecar, failure })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub jumps: usize,
    pub gap_initial: f64,
    pub gap_final: f64,
    pub gap_ratio: f64,
    pub modal_network_difference: f64,
    pub fanout: Option<Vec<FanOutReport>>,
    pub files: Vec<String>,
}

impl SeedSummary {
    fn fanout_holds(&self) -> Option<bool> {
        self.fanout.as_ref().map(|r| r.iter().all(|f| f.holds))
    }
}

fn simulate_seed(
    sc: &Scenario,
    seed: u64,
    fanout: Option<(&lpvnet::Matrix, f64)>,
    out: Option<&Path>,
) -> Result<SeedSummary, CliError> {
    let cfg = &sc.config;
    let sim = &cfg.simulation;
    let settings = StepSettings { step: sim.step, horizon: sim.horizon };
    let range = cfg.pattern.sigma_range.unwrap_or(cfg.pattern.convention.natural_range());
    let sim_err = |e: lpvnet::SimulationError| match e {
        lpvnet::SimulationError::StepTooLarge { .. }
        | lpvnet::SimulationError::NonPositiveHorizon(_)
        | lpvnet::SimulationError::HistoryMissing(_)
        | lpvnet::SimulationError::InvalidDelay(_) => CliError::Validation(e.to_string()),
        other => CliError::Other(other.to_string()),
    };
    let sw = gen_switching(seed, cfg.dwell, sim.horizon, range).map_err(sim_err)?;
    let dim = sc.plant.n_agents() * sc.plant.state_dim();
    let init = random_initial_condition(seed, dim, sim.initial_spread);
    let mut net = simulate_network(&sc.plant, &cfg.gains, &sw, &cfg.delay, &init, settings).map_err(sim_err)?;
    net.scenario.clone_from(&cfg.name);
    let modes = simulate_modes(&sc.plant, &cfg.gains, &sw, &cfg.delay, &init, settings).map_err(sim_err)?;
    let u = &sc.plant.pattern.diagonalization().u;
    let block = sc.plant.state_dim();
    let back = reassemble_network(&modes, u, block);
    let gap = consensus_gap(&net, block).map_err(sim_err)?;
    let (g0, g1) = (gap[0], *gap.last().expect("nonempty"));

    let fanout = match fanout {
        Some((upsilon, window)) if sim.horizon >= 2.0 * window => {
            let ws = modal_fanout_witnesses(&net, u, block, upsilon, window, window).map_err(sim_err)?;
            Some(
                ws.iter()
                    .map(|w| check_fanout(w).map_err(|e| CliError::Other(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
        _ => None,
    };

    let mut files = Vec::new();
    if let Some(dir) = out {
        let mut write = |name: String, bytes: Vec<u8>| -> Result<(), CliError> {
            write_atomic(&dir.join(&name), &bytes)?;
            files.push(name);
            Ok(())
        };
        write(net.file_name(), net.to_csv_string().into_bytes())?;
        for (i, m) in modes.iter().enumerate() {
            let mut m = m.clone();
            m.scenario = format!("{}-mode{i}", cfg.name);
            write(m.file_name(), m.to_csv_string().into_bytes())?;
        }
        write(
            format!("{}_{seed}.switching.json", cfg.name),
            serde_json::to_vec_pretty(&sw).expect("switching serializes"),
        )?;
    }
    Ok(SeedSummary {
        seed,
        jumps: sw.jump_count(sim.horizon),
        gap_initial: g0,
        gap_final: g1,
        gap_ratio: if g0 > 0.0 { g1 / g0 } else { 0.0 },
        modal_network_difference: sup_state_difference(&net, &back),
        fanout,
        files,
    })
}

struct Simulated {
    summaries: Vec<SeedSummary>,
    window: f64,
    fanout_note: Option<String>,
}

fn simulate(sc: &Scenario, grid: usize, out: Option<&Path>) -> Result<(Simulated, Bounded), CliError> {
    let b = bound(sc, grid)?;
    let cfg = &sc.config;
    let window = cfg.certificates.controller.horizon.max(cfg.certificates.observer.horizon) + cfg.delay.tau_max;
    let (upsilon, fanout_note) = match &b.nominal {
        Some(Ok(n)) if n.admitted => (Some(n.at_tau_max.upsilon.clone()), None),
        Some(Ok(_)) => (None, Some("fan-out check skipped: delay profile exceeds the bound".to_string())),
        Some(Err(e)) => (None, Some(format!("fan-out check skipped: {e}"))),
        None => (None, Some("fan-out check skipped: no certificate".to_string())),
    };
    let fanout_note = fanout_note.or_else(|| {
        (cfg.simulation.horizon < 2.0 * window)
            .then(|| format!("fan-out check skipped: horizon shorter than 2 x window {window}"))
    });
    let summaries = cfg
        .simulation
        .seeds
        .par_iter()
        .map(|&seed| simulate_seed(sc, seed, upsilon.as_ref().map(|u| (u, window)), out))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((Simulated { summaries, window, fanout_note }, b))
}

fn describe_simulation(t: &mut String, s: &Simulated) {
    writeln!(t, "seed  jumps  gap(0)      gap(end)    ratio       modal-vs-network  fan-out").ok();
    for r in &s.summaries {
        let fan = match (r.fanout_holds(), &r.fanout) {
            (Some(true), Some(f)) => {
                let worst = f.iter().map(|x| x.worst_slack).fold(f64::NEG_INFINITY, f64::max);
                format!("holds (worst slack {worst:+.3e})")
            }
            (Some(false), Some(f)) => {
                let first = f.iter().filter_map(|x| x.first_violation).fold(f64::INFINITY, f64::min);
                format!("VIOLATED at t={first}")
            }
            _ => "skipped".into(),
        };
        writeln!(
            t,
            "{:>4}  {:>5}  {:<10.4e}  {:<10.4e}  {:<10.4e}  {:<16.3e}  {fan}",
            r.seed, r.jumps, r.gap_initial, r.gap_final, r.gap_ratio, r.modal_network_difference
        )
        .ok();
    }
    if let Some(n) = &s.fanout_note {
        writeln!(t, "{n}").ok();
    } else {
        writeln!(t, "fan-out window T + tau_max = {}; scored from t >= {}", s.window, s.window).ok();
    }
    let verdicts: Vec<Option<bool>> = s.summaries.iter().map(SeedSummary::fanout_holds).collect();
    let consistent = verdicts.windows(2).all(|w| w[0] == w[1]);
    writeln!(t, "fan-out verdicts identical across seeds: {}", if consistent { "yes" } else { "no" }).ok();
}

pub fn cmd_simulate(sc: &Scenario, opts: &Options) -> Result<Report, CliError> {
    let sc = apply_overrides(sc, opts)?;
    let grid = grid_size(&sc, opts);
    let (s, _) = simulate(&sc, grid, opts.out.as_deref())?;
    let mut t = String::new();
    let sim = &sc.config.simulation;
    writeln!(
        t,
        "scenario {}: {} run(s), step {}, horizon {}",
        sc.config.name,
        s.summaries.len(),
        sim.step,
        sim.horizon
    )
    .ok();
    describe_simulation(&mut t, &s);
    let sidecar = json!({
        "scenario": sc.config.name,
        "window": s.window,
        "fanout_note": s.fanout_note,
        "runs": s.summaries,
    });
    Ok(Report { verb: "simulate", text: t, sidecar, failure: None })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffRow {
    pub quantity: String,
    pub published: f64,
    pub ours: f64,
    pub tolerance: f64,
    pub matches: bool,
}

fn row(quantity: &str, published: f64, ours: f64, tolerance: f64) -> DiffRow {
    DiffRow { quantity: quantity.into(), published, ours, tolerance, matches: (ours - published).abs() <= tolerance }
}

/// Full reference pipeline with every published number diffed.
pub fn cmd_reproduce(sc: &Scenario, opts: &Options) -> Result<Report, CliError> {
    let sc = apply_overrides(sc, opts)?;
    let grid = grid_size(&sc, opts);
    let mut t = String::new();
    writeln!(t, "reproduction of the six-agent ring scenario (grid {grid})").ok();
    if opts.eta.is_some() || opts.grid.is_some() || opts.seed.is_some() {
        writeln!(t, "overrides: eta={:?} grid={:?} seed={:?}", opts.eta, opts.grid, opts.seed).ok();
    }
    let dec = cmd_decompose(&sc, &Options::default())?;
    t.push_str("\n== decomposition\n");
    t.push_str(&dec.text);

    let (sim, b) = simulate(&sc, grid, opts.out.as_deref())?;
    t.push_str("\n== certificates\n");
    for an in b.cert.loops() {
        describe_loop(&mut t, an);
    }
    t.push_str("\n== delay bound\n");
    if let Some(n) = &b.nominal {
        describe_bound(&mut t, "configured constants", n);
    }
    if let Some(v) = &b.verified {
        describe_bound(&mut t, "verified constants", v);
    }
    t.push_str("\n== simulation\n");
    describe_simulation(&mut t, &sim);

    let lpv = lpv_of(&sc);
    let mut rows = vec![
        row("rho_min", published::RHO_MIN, lpv.rho_interval.0, 1e-12),
        row("rho_max", published::RHO_MAX, lpv.rho_interval.1, 1e-12),
    ];
    if let Some(Ok(n)) = &b.nominal {
        let k = &n.constants;
        rows.extend([
            row("a", published::A, k.a, 1e-3),
            row("b", published::B, k.b, 1e-3),
            row("c", published::C, k.c, 1e-3),
            row("d", published::D, k.d, 1e-3),
            row("s1", published::S1, k.s1, 1e-3),
            row("s2", published::S2, k.s2, 1e-3),
            row("s3", published::S3, k.s3, 1e-3),
            row("tau_u", published::TAU_BOUND, n.bound.value(), 1e-3),
        ]);
    }
    t.push_str("\n== published values\n");
    writeln!(t, "quantity   published   ours        tolerance  status").ok();
    for r in &rows {
        writeln!(
            t,
            "{:<9}  {:<10.4}  {:<10.4}  {:<9.0e}  {}",
            r.quantity,
            r.published,
            r.ours,
            r.tolerance,
            if r.matches { "match" } else { "MISMATCH" }
        )
        .ok();
    }
    for an in b.cert.loops() {
        let verifies = an.supplied.as_ref().map(|s| s.verified);
        writeln!(
            t,
            "{} certificate as published verifies: {}",
            an.kind.label(),
            match verifies {
                Some(true) => "yes",
                Some(false) => "NO (see certificate margins above)",
                None => "not supplied",
            }
        )
        .ok();
    }
    let admitted = matches!(&b.nominal, Some(Ok(n)) if n.admitted);
    writeln!(t, "delay profile (sup {}) admitted: {}", sc.config.delay.tau_max, if admitted { "yes" } else { "NO" })
        .ok();

    let failure = match &b.nominal {
        Some(Ok(n)) if !n.admitted => Some(CliError::DelayExceedsBound(format!("margin {:+.4}", n.margin))),
        Some(Err(e)) => Some(CliError::Infeasible(e.clone())),
        None => Some(CliError::Infeasible("no certificate".into())),
        _ => None,
    };
    let sidecar = json!({
        "scenario": sc.config.name,
        "grid_size": grid,
        "published": rows,
        "decomposition": dec.sidecar,
        "certificates": { "controller": to_value(&b.cert.controller), "observer": to_value(&b.cert.observer) },
        "bound": {
            "sup_constants": to_value(&b.sups),
            "nominal": b.nominal.as_ref().map(|r| r.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e }))),
            "verified": b.verified.as_ref().map(|r| r.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e }))),
        },
        "simulation": { "window": sim.window, "fanout_note": sim.fanout_note, "runs": sim.summaries },
    });
    Ok(Report { verb: "reproduce", text: t, sidecar, failure })
}
