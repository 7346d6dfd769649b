//! Fixed-step integration of the observer-based closed loop with delayed
//! output, either for one LPV/modal subsystem or for the whole network.
//!
//! The integrator is classical RK4. Steps are split at switching instants
//! and at delay-profile breakpoints so that substeps never straddle a jump.
//! Delayed plant states come from cubic Hermite interpolation of the
//! stored history, using one-sided derivatives on each side of a jump.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::DwellSpec;
use crate::decomposition::{
    assemble_with_pattern, coords_to_modal, DecomposablePlant, DecompositionError, GainSchedule, LpvPlant,
};
use crate::matrix::{vec_norm, Matrix};

/// Stream ids for the shared ChaCha generator.
const STREAM_SWITCHING: u64 = 0;
const STREAM_INITIAL: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("step {step} too large: must be <= {limit} ({reason})")]
    StepTooLarge { step: f64, limit: f64, reason: &'static str },
    #[error("initial history missing or malformed: {0}")]
    HistoryMissing(String),
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("invalid delay profile: {0}")]
    InvalidDelay(String),
    #[error("invalid switching signal: {0}")]
    InvalidSwitching(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
}

/// Piecewise-constant signal with jumps at `jump_times`; `values[k]` holds on
/// `[jump_times[k], jump_times[k + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    pub jump_times: Vec<f64>,
    pub values: Vec<f64>,
    pub dwell: DwellSpec,
    pub seed: u64,
    pub value_range: (f64, f64),
    pub horizon: f64,
}

impl SwitchingSignal {
    pub fn new(
        jump_times: Vec<f64>,
        values: Vec<f64>,
        dwell: DwellSpec,
        value_range: (f64, f64),
        horizon: f64,
    ) -> Result<Self, SimulationError> {
        let sw = SwitchingSignal { jump_times, values, dwell, seed: 0, value_range, horizon };
        sw.validate()?;
        Ok(sw)
    }

    /// Constant value over the whole horizon.
    pub fn constant(value: f64, dwell: DwellSpec, horizon: f64) -> Self {
        SwitchingSignal {
            jump_times: vec![0.0],
            values: vec![value],
            dwell,
            seed: 0,
            value_range: (value, value),
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidSwitching(m));
        if self.jump_times.is_empty() || self.jump_times[0] != 0.0 {
            return bad("jump times must start at 0".into());
        }
        if self.jump_times.len() != self.values.len() {
            return bad(format!("{} jump times vs {} values", self.jump_times.len(), self.values.len()));
        }
        let eps = 1e-9;
        for w in self.jump_times.windows(2) {
            let gap = w[1] - w[0];
            if gap < self.dwell.delta_min - eps || gap > self.dwell.delta_max + eps {
                return bad(format!("gap {gap} at t={} outside dwell range", w[0]));
            }
        }
        let (lo, hi) = self.value_range;
        if let Some(v) = self.values.iter().find(|v| !(**v >= lo - eps && **v <= hi + eps)) {
            return bad(format!("value {v} outside [{lo}, {hi}]"));
        }
        Ok(())
    }

    /// Index of the interval containing `t` (right-continuous).
    pub fn interval_at(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&j| j <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.interval_at(t)]
    }

    /// Jump instants strictly inside `(t0, t1)`.
    pub fn jumps_between(&self, t0: f64, t1: f64) -> impl Iterator<Item = f64> + '_ {
        let start = self.jump_times.partition_point(|&j| j <= t0);
        self.jump_times[start..].iter().copied().take_while(move |&j| j < t1)
    }

    /// Number of jumps after t = 0 up to `t_end`.
    pub fn jump_count(&self, t_end: f64) -> usize {
        self.jump_times.iter().skip(1).filter(|&&t| t <= t_end).count()
    }
}

/// Random switching signal: gaps uniform on `[δ̲, δ̄]`, values uniform on
/// `value_range`, reproducible from `seed`.
pub fn gen_switching(
    seed: u64,
    dwell: DwellSpec,
    horizon: f64,
    value_range: (f64, f64),
) -> Result<SwitchingSignal, SimulationError> {
    if !(horizon > 0.0) {
        return Err(SimulationError::NonPositiveHorizon(horizon));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SWITCHING);
    let (lo, hi) = value_range;
    let draw_value = |rng: &mut ChaCha8Rng| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let mut jump_times = vec![0.0];
    let mut values = vec![draw_value(&mut rng)];
    let mut t = 0.0;
    loop {
        let gap = if dwell.delta_max > dwell.delta_min {
            rng.gen_range(dwell.delta_min..=dwell.delta_max)
        } else {
            dwell.delta_min
        };
        t += gap;
        if t >= horizon {
            break;
        }
        jump_times.push(t);
        values.push(draw_value(&mut rng));
    }
    Ok(SwitchingSignal { jump_times, values, dwell, seed, value_range, horizon })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    Constant {
        value: f64,
    },
    /// `amplitude · sin(frequency · t) + offset`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
    /// Zero-order hold of `values[k]` on `[times[k], times[k + 1])`.
    Sampled {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Time-varying delay `τ(t) ∈ [0, τ̄]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDelay")]
pub struct DelayProfile {
    #[serde(flatten)]
    pub kind: DelayKind,
    pub tau_max: f64,
}

#[derive(Deserialize)]
struct RawDelay {
    #[serde(flatten)]
    kind: DelayKind,
    tau_max: Option<f64>,
}

impl TryFrom<RawDelay> for DelayProfile {
    type Error = SimulationError;
    fn try_from(r: RawDelay) -> Result<Self, Self::Error> {
        DelayProfile::new(r.kind, r.tau_max)
    }
}

impl DelayProfile {
    /// `tau_max = None` uses the profile's own supremum.
    pub fn new(kind: DelayKind, tau_max: Option<f64>) -> Result<Self, SimulationError> {
        let (inf, sup) = match &kind {
            DelayKind::Constant { value } => (*value, *value),
            DelayKind::Sinusoid { amplitude, frequency, offset } => {
                if !frequency.is_finite() {
                    return Err(SimulationError::InvalidDelay("frequency must be finite".into()));
                }
                (offset - amplitude.abs(), offset + amplitude.abs())
            }
            DelayKind::Sampled { times, values } => {
                if times.is_empty() || times.len() != values.len() || times[0] != 0.0 {
                    return Err(SimulationError::InvalidDelay(
                        "sampled profile needs matching times/values starting at t=0".into(),
                    ));
                }
                if times.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SimulationError::InvalidDelay("sample times must increase".into()));
                }
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        };
        if !(inf >= 0.0) || !sup.is_finite() {
            return Err(SimulationError::InvalidDelay(format!("delay range [{inf}, {sup}] must be within [0, inf)")));
        }
        let tau_max = tau_max.unwrap_or(sup);
        if tau_max < sup {
            return Err(SimulationError::InvalidDelay(format!("tau_max {tau_max} below profile supremum {sup}")));
        }
        Ok(DelayProfile { kind, tau_max })
    }

    pub fn constant(value: f64) -> Result<Self, SimulationError> {
        DelayProfile::new(DelayKind::Constant { value }, None)
    }

    pub fn zero() -> Self {
        DelayProfile { kind: DelayKind::Constant { value: 0.0 }, tau_max: 0.0 }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64, offset: f64) -> Result<Self, SimulationError> {
        DelayProfile::new(DelayKind::Sinusoid { amplitude, frequency, offset }, None)
    }

    pub fn tau_at(&self, t: f64) -> f64 {
        match &self.kind {
            DelayKind::Constant { value } => *value,
            DelayKind::Sinusoid { amplitude, frequency, offset } => amplitude * (frequency * t).sin() + offset,
            DelayKind::Sampled { times, values } => values[times.partition_point(|&s| s <= t).saturating_sub(1)],
        }
    }

    /// Supremum of the profile itself (not the declared `tau_max`).
    pub fn sup(&self) -> f64 {
        match &self.kind {
            DelayKind::Constant { value } => *value,
            DelayKind::Sinusoid { amplitude, offset, .. } => offset + amplitude.abs(),
            DelayKind::Sampled { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Discontinuities strictly inside `(t0, t1)`.
    fn breakpoints_between(&self, t0: f64, t1: f64) -> Vec<f64> {
        match &self.kind {
            DelayKind::Sampled { times, .. } => times.iter().copied().filter(|&s| s > t0 && s < t1).collect(),
            _ => Vec::new(),
        }
    }
}

/// Plant history on `[−τ̄, 0)`; the value at `t = 0` is the initial plant state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialHistory {
    /// Constant extension of the initial plant state.
    #[default]
    Constant,
    /// Piecewise-linear through `(times[k], states[k])`, `times` ascending and
    /// below 0; held constant before the first sample.
    Sampled { times: Vec<f64>, states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub plant: Vec<f64>,
    pub observer: Vec<f64>,
    #[serde(default)]
    pub history: InitialHistory,
}

impl InitialCondition {
    pub fn constant(plant: Vec<f64>, observer: Vec<f64>) -> Self {
        InitialCondition { plant, observer, history: InitialHistory::Constant }
    }

    fn validate(&self, dim: usize, tau_max: f64) -> Result<(), SimulationError> {
        if self.plant.len() != dim || self.observer.len() != dim {
            return Err(SimulationError::Dimensions(format!(
                "initial state lengths {}/{} vs state dimension {dim}",
                self.plant.len(),
                self.observer.len()
            )));
        }
        if let InitialHistory::Sampled { times, states } = &self.history {
            if times.is_empty() || times.len() != states.len() {
                return Err(SimulationError::HistoryMissing("sampled history needs matching times/states".into()));
            }
            if times.windows(2).any(|w| w[0] >= w[1]) || *times.last().unwrap() >= 0.0 {
                return Err(SimulationError::HistoryMissing("history times must increase and stay below 0".into()));
            }
            if times[0] > -tau_max + 1e-12 {
                return Err(SimulationError::HistoryMissing(format!(
                    "history starts at {} but must cover [-{tau_max}, 0]",
                    times[0]
                )));
            }
            if states.iter().any(|s| s.len() != dim) {
                return Err(SimulationError::HistoryMissing("history state has wrong length".into()));
            }
        }
        Ok(())
    }

    /// Express in another basis: `(U ⊗ I_block)ᵀ` applied to every state.
    pub fn to_modal(&self, u: &Matrix, block: usize) -> Result<InitialCondition, DecompositionError> {
        let history = match &self.history {
            InitialHistory::Constant => InitialHistory::Constant,
            InitialHistory::Sampled { times, states } => InitialHistory::Sampled {
                times: times.clone(),
                states: states.iter().map(|s| coords_to_modal(s, u, block)).collect::<Result<_, _>>()?,
            },
        };
        Ok(InitialCondition {
            plant: coords_to_modal(&self.plant, u, block)?,
            observer: coords_to_modal(&self.observer, u, block)?,
            history,
        })
    }

    /// Restrict to components `[offset, offset + len)`.
    pub fn slice(&self, offset: usize, len: usize) -> InitialCondition {
        let cut = |v: &Vec<f64>| v[offset..offset + len].to_vec();
        let history = match &self.history {
            InitialHistory::Constant => InitialHistory::Constant,
            InitialHistory::Sampled { times, states } => {
                InitialHistory::Sampled { times: times.clone(), states: states.iter().map(cut).collect() }
            }
        };
        InitialCondition { plant: cut(&self.plant), observer: cut(&self.observer), history }
    }
}

/// Plant state uniform on `[−spread, spread]`, observer at the origin.
pub fn random_initial_condition(seed: u64, dim: usize, spread: f64) -> InitialCondition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_INITIAL);
    let plant = (0..dim).map(|_| rng.gen_range(-spread..=spread)).collect();
    InitialCondition::constant(plant, vec![0.0; dim])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    pub step: f64,
    pub horizon: f64,
}

/// Sampled closed-loop trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub scenario: String,
    pub seed: u64,
    pub step: f64,
    pub times: Vec<f64>,
    /// Value of the driving switching signal (σ, or ρ for a direct path).
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    /// Delayed measurement `r(t) = C x(t − τ(t))`.
    pub output: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// `x̂ − x` at sample `k`.
    pub fn error(&self, k: usize) -> Vec<f64> {
        self.xhat[k].iter().zip(&self.x[k]).map(|(h, x)| h - x).collect()
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.scenario, self.seed)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let m = self.state_dim();
        let mut h = vec!["t".to_string(), "sigma".into(), "tau".into()];
        h.extend((0..m).map(|i| format!("x{i}")));
        h.extend((0..m).map(|i| format!("xhat{i}")));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.csv_header())?;
        let mut row: Vec<String> = Vec::new();
        for k in 0..self.len() {
            row.clear();
            row.push(self.times[k].to_string());
            row.push(self.sigma[k].to_string());
            row.push(self.tau[k].to_string());
            row.extend(self.x[k].iter().map(f64::to_string));
            row.extend(self.xhat[k].iter().map(f64::to_string));
            wr.write_record(&row)?;
        }
        wr.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8 csv")
    }

    /// Every sample expressed in modal coordinates `(U ⊗ I_block)ᵀ x`.
    pub fn to_modal(&self, u: &Matrix, block: usize) -> Result<TrajectoryRecord, DecompositionError> {
        let map =
            |rows: &Vec<Vec<f64>>| rows.iter().map(|v| coords_to_modal(v, u, block)).collect::<Result<Vec<_>, _>>();
        Ok(TrajectoryRecord { x: map(&self.x)?, xhat: map(&self.xhat)?, output: Vec::new(), ..self.clone() })
    }

    /// Components `[offset, offset + len)` of states.
    pub fn slice_states(&self, offset: usize, len: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let cut = |rows: &Vec<Vec<f64>>| rows.iter().map(|v| v[offset..offset + len].to_vec()).collect();
        (cut(&self.x), cut(&self.xhat))
    }
}

/// Closed loop `ż = F z + G x(t − τ)` with `z = (x, x̂)`, constant per segment.
#[derive(Debug, Clone)]
pub(crate) struct LoopMatrices {
    pub f: Matrix,
    pub g: Matrix,
    pub c: Matrix,
}

impl LoopMatrices {
    /// Plant/observer form: `ẋ = A x + BK x̂`, `x̂̇ = (A + BK + LC) x̂ − LC x(t − τ)`.
    pub(crate) fn observer_form(a: &Matrix, b: &Matrix, k: &Matrix, l: &Matrix, c: &Matrix) -> Self {
        let m = a.rows();
        let bk = b * k;
        let lc = l * c;
        let mut f = Matrix::zeros(2 * m, 2 * m);
        f.set_block(0, 0, a);
        f.set_block(0, m, &bk);
        f.set_block(m, m, &(&(a + &bk) + &lc));
        let mut g = Matrix::zeros(2 * m, m);
        g.set_block(m, 0, &lc.scale(-1.0));
        LoopMatrices { f, g, c: c.clone() }
    }
}

struct HistPoint {
    t: f64,
    x: Vec<f64>,
    /// Derivative from the left (segment ending here) and from the right.
    d_left: Vec<f64>,
    d_right: Vec<f64>,
}

struct History<'a> {
    points: Vec<HistPoint>,
    init: &'a InitialCondition,
}

impl History<'_> {
    fn lookup(&self, s: f64, stage: Option<(f64, &[f64])>) -> Vec<f64> {
        let first = &self.points[0];
        if s < first.t {
            return self.initial(s);
        }
        let last = self.points.last().expect("nonempty");
        if s >= last.t {
            return match stage {
                Some((ts, xs)) if ts > last.t => {
                    let w = ((s - last.t) / (ts - last.t)).min(1.0);
                    last.x.iter().zip(xs).map(|(a, b)| a + w * (b - a)).collect()
                }
                _ => last.x.clone(),
            };
        }
        let i = self.points.partition_point(|p| p.t <= s) - 1;
        let (p, q) = (&self.points[i], &self.points[i + 1]);
        hermite(p.t, &p.x, &p.d_right, q.t, &q.x, &q.d_left, s)
    }

    fn initial(&self, s: f64) -> Vec<f64> {
        match &self.init.history {
            InitialHistory::Constant => self.init.plant.clone(),
            InitialHistory::Sampled { times, states } => {
                if s <= times[0] {
                    return states[0].clone();
                }
                let k = times.partition_point(|&t| t <= s);
                let (t0, x0) = (times[k - 1], &states[k - 1]);
                let (t1, x1) = if k < times.len() { (times[k], &states[k]) } else { (0.0, &self.init.plant) };
                let w = (s - t0) / (t1 - t0);
                x0.iter().zip(x1).map(|(a, b)| a + w * (b - a)).collect()
            }
        }
    }
}

fn hermite(t0: f64, x0: &[f64], d0: &[f64], t1: f64, x1: &[f64], d1: &[f64], s: f64) -> Vec<f64> {
    let h = t1 - t0;
    let u = (s - t0) / h;
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    (0..x0.len()).map(|i| h00 * x0[i] + h10 * h * d0[i] + h01 * x1[i] + h11 * h * d1[i]).collect()
}

pub(crate) struct RawRun {
    pub times: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub segment: Vec<usize>,
}

/// Integrate a piecewise-constant linear delay loop. `segment_starts[k]` is
/// the start time of segment `k` (first is 0) and `mats[k]` its matrices.
pub(crate) fn integrate_loop(
    segment_starts: &[f64],
    mats: &[LoopMatrices],
    delay: &DelayProfile,
    init: &InitialCondition,
    settings: StepSettings,
) -> Result<RawRun, SimulationError> {
    let StepSettings { step, horizon } = settings;
    if !(horizon > 0.0) {
        return Err(SimulationError::NonPositiveHorizon(horizon));
    }
    if !(step > 0.0) {
        return Err(SimulationError::StepTooLarge { step, limit: 0.0, reason: "step must be positive" });
    }
    let m = mats[0].f.rows() / 2;
    init.validate(m, delay.tau_max)?;
    let n_steps = (horizon / step).round().max(1.0) as usize;

    let seg_at = |t: f64| segment_starts.partition_point(|&s| s <= t).saturating_sub(1);

    let mut z: Vec<f64> = init.plant.iter().chain(&init.observer).copied().collect();
    let mut hist = History {
        points: vec![HistPoint { t: 0.0, x: init.plant.clone(), d_left: vec![0.0; m], d_right: vec![0.0; m] }],
        init,
    };

    let rhs = |mats: &LoopMatrices, hist: &History, t: f64, z: &[f64]| -> Vec<f64> {
        let s = t - delay.tau_at(t);
        let xd = hist.lookup(s, Some((t, &z[..m])));
        let mut out = mats.f.mul_vec(z);
        mats.g.mul_vec_acc(&xd, &mut out);
        out
    };

    let mut run = RawRun {
        times: Vec::with_capacity(n_steps + 1),
        z: Vec::with_capacity(n_steps + 1),
        output: Vec::with_capacity(n_steps + 1),
        tau: Vec::with_capacity(n_steps + 1),
        segment: Vec::with_capacity(n_steps + 1),
    };
    let record = |run: &mut RawRun, hist: &History, t: f64, z: &[f64]| {
        let seg = seg_at(t);
        let tau = delay.tau_at(t);
        let xd = hist.lookup(t - tau, Some((t, &z[..m])));
        run.times.push(t);
        run.z.push(z.to_vec());
        run.output.push(mats[seg].c.mul_vec(&xd));
        run.tau.push(tau);
        run.segment.push(seg);
    };
    record(&mut run, &hist, 0.0, &z);

    let mut cuts: Vec<f64> = Vec::new();
    for k in 0..n_steps {
        let t0 = k as f64 * step;
        let t1 = (k + 1) as f64 * step;
        cuts.clear();
        cuts.push(t0);
        cuts.extend(segment_starts.iter().copied().filter(|&s| s > t0 && s < t1));
        cuts.extend(delay.breakpoints_between(t0, t1));
        cuts.push(t1);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * step);

        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            let lm = &mats[seg_at(0.5 * (a + b))];
            let k1 = rhs(lm, &hist, a, &z);
            hist.points.last_mut().expect("nonempty").d_right = k1[..m].to_vec();
            let z2: Vec<f64> = z.iter().zip(&k1).map(|(zi, ki)| zi + 0.5 * h * ki).collect();
            let k2 = rhs(lm, &hist, a + 0.5 * h, &z2);
            let z3: Vec<f64> = z.iter().zip(&k2).map(|(zi, ki)| zi + 0.5 * h * ki).collect();
            let k3 = rhs(lm, &hist, a + 0.5 * h, &z3);
            let z4: Vec<f64> = z.iter().zip(&k3).map(|(zi, ki)| zi + h * ki).collect();
            let k4 = rhs(lm, &hist, b, &z4);
            for i in 0..z.len() {
                z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            // Left derivative at b under the same segment; its delayed term
            // blends toward the new state for very short delays.
            let d_end = rhs(lm, &hist, b, &z);
            hist.points.push(HistPoint {
                t: b,
                x: z[..m].to_vec(),
                d_left: d_end[..m].to_vec(),
                d_right: d_end[..m].to_vec(),
            });
        }
        record(&mut run, &hist, t1, &z);
    }
    Ok(run)
}

fn check_resolution(step: f64, dwell: &DwellSpec, delay: &DelayProfile) -> Result<(), SimulationError> {
    if step > dwell.delta_min / 10.0 * (1.0 + 1e-12) {
        return Err(SimulationError::StepTooLarge {
            step,
            limit: dwell.delta_min / 10.0,
            reason: "step must resolve the minimum dwell time",
        });
    }
    if delay.tau_max > 0.0 && step > delay.tau_max / 10.0 * (1.0 + 1e-12) {
        return Err(SimulationError::StepTooLarge {
            step,
            limit: delay.tau_max / 10.0,
            reason: "step must resolve the maximum delay",
        });
    }
    Ok(())
}

/// How ρ(t) is produced for an LPV/modal run.
#[derive(Debug, Clone, Copy)]
pub enum RhoPath<'a> {
    /// `ρ(t) = ν_i(σ(t)) = σ λ1 + (1 − σ) λ2`.
    Mode { switching: &'a SwitchingSignal, lambda1: f64, lambda2: f64 },
    /// The signal's values are ρ itself.
    Direct { signal: &'a SwitchingSignal },
}

impl RhoPath<'_> {
    fn signal(&self) -> &SwitchingSignal {
        match self {
            RhoPath::Mode { switching, .. } => switching,
            RhoPath::Direct { signal } => signal,
        }
    }

    fn rho(&self, k: usize) -> f64 {
        match self {
            RhoPath::Mode { switching, lambda1, lambda2 } => {
                let s = switching.values[k];
                s * lambda1 + (1.0 - s) * lambda2
            }
            RhoPath::Direct { signal } => signal.values[k],
        }
    }
}

fn assemble_record(scenario: &str, signal: &SwitchingSignal, run: RawRun, m: usize) -> TrajectoryRecord {
    let sigma = run.segment.iter().map(|&s| signal.values[s]).collect();
    let (x, xhat) = run.z.iter().map(|z| (z[..m].to_vec(), z[m..].to_vec())).unzip();
    TrajectoryRecord {
        scenario: scenario.to_string(),
        seed: signal.seed,
        step: run.times.get(1).map_or(0.0, |t| *t),
        times: run.times,
        sigma,
        tau: run.tau,
        x,
        xhat,
        output: run.output,
    }
}

/// Simulate the observer-based loop for one LPV (or modal) subsystem.
pub fn simulate_lpv_closed_loop(
    plant: &LpvPlant,
    gains: &GainSchedule,
    path: RhoPath<'_>,
    delay: &DelayProfile,
    init: &InitialCondition,
    settings: StepSettings,
) -> Result<TrajectoryRecord, SimulationError> {
    let signal = path.signal();
    check_resolution(settings.step, &signal.dwell, delay)?;
    let n = plant.state_dim();
    gains.validate(n, plant.b.dims().1, plant.c.dims().0)?;
    if let RhoPath::Direct { .. } = path {
        let (lo, hi) = plant.rho_interval;
        if let Some(v) = signal.values.iter().find(|v| **v < lo - 1e-12 || **v > hi + 1e-12) {
            return Err(SimulationError::InvalidSwitching(format!("rho {v} outside [{lo}, {hi}]")));
        }
    }
    let mats: Vec<LoopMatrices> = (0..signal.values.len())
        .map(|k| {
            let rho = path.rho(k);
            LoopMatrices::observer_form(
                &plant.a_at(rho),
                &plant.b_at(rho),
                &gains.k_at(rho),
                &gains.l_at(rho),
                &plant.c_at(rho),
            )
        })
        .collect();
    let run = integrate_loop(&signal.jump_times, &mats, delay, init, settings)?;
    Ok(assemble_record("lpv", signal, run, n))
}

/// Simulate the full `N n`-dimensional network with distributed controller
/// and observer gains `I ⊗ K^a + 𝒫(σ) ⊗ K^b` (same for L).
pub fn simulate_network(
    plant: &DecomposablePlant,
    gains: &GainSchedule,
    switching: &SwitchingSignal,
    delay: &DelayProfile,
    init: &InitialCondition,
    settings: StepSettings,
) -> Result<TrajectoryRecord, SimulationError> {
    check_resolution(settings.step, &switching.dwell, delay)?;
    gains.validate(plant.state_dim(), plant.input_dim(), plant.output_dim())?;
    let pp = &plant.pattern;
    let mut mats = Vec::with_capacity(switching.values.len());
    for &s in &switching.values {
        let sigma = pp.convex_sigma(s)?;
        let p = pp.eval_convex(sigma);
        let a = assemble_with_pattern(&plant.a, &p);
        let b = assemble_with_pattern(&plant.b, &p);
        let c = assemble_with_pattern(&plant.c, &p);
        let k = assemble_with_pattern(&gains.controller(), &p);
        let l = assemble_with_pattern(&gains.observer(), &p);
        mats.push(LoopMatrices::observer_form(&a, &b, &k, &l, &c));
    }
    let run = integrate_loop(&switching.jump_times, &mats, delay, init, settings)?;
    let dim = plant.n_agents() * plant.state_dim();
    Ok(assemble_record("network", switching, run, dim))
}

/// Largest pairwise distance between agent plant states, per sample.
pub fn consensus_gap(rec: &TrajectoryRecord, agent_dim: usize) -> Result<Vec<f64>, SimulationError> {
    let dim = rec.state_dim();
    if agent_dim == 0 || !dim.is_multiple_of(agent_dim) {
        return Err(SimulationError::Dimensions(format!("state dimension {dim} not a multiple of {agent_dim}")));
    }
    let n = dim / agent_dim;
    Ok(rec
        .x
        .iter()
        .map(|x| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let d: f64 =
                        (0..agent_dim).map(|k| x[i * agent_dim + k] - x[j * agent_dim + k]).map(|v| v * v).sum();
                    worst = worst.max(d.sqrt());
                }
            }
            worst
        })
        .collect())
}

/// `(|ω_i(t)|, |ω̃_i(t)|)` series of one mode.
pub type ModeNorms = (Vec<f64>, Vec<f64>);

/// Per-mode norm series of a network record.
pub fn modal_norms(rec: &TrajectoryRecord, u: &Matrix, block: usize) -> Result<Vec<ModeNorms>, DecompositionError> {
    let modal = rec.to_modal(u, block)?;
    let modes = u.rows();
    Ok((0..modes)
        .map(|i| {
            let r = i * block..(i + 1) * block;
            let xs = modal.x.iter().map(|x| vec_norm(&x[r.clone()])).collect();
            let es = modal
                .x
                .iter()
                .zip(&modal.xhat)
                .map(|(x, xh)| {
                    let e: Vec<f64> = xh[r.clone()].iter().zip(&x[r.clone()]).map(|(a, b)| a - b).collect();
                    vec_norm(&e)
                })
                .collect();
            (xs, es)
        })
        .collect())
}
