//! Euler-Maruyama integration of the walker with a trapezoidal memory
//! convolution, single trajectories and seeded ensembles.

use rayon::prelude::*;

use crate::bessel;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::lyapunov::{self, LyapunovParams};
use crate::models::{KernelSpec, ModelSpec, PilotKind};
use crate::rng::GaussianStream;
use crate::state::{
    default_n_mem, trapezoid_weights, HistoryBuffer, WalkerState, TRUNCATION_TOLERANCE,
};

/// Local step halvings allowed in guarded mode.
pub const MAX_GUARD_HALVINGS: u32 = 8;
/// Events kept verbatim in a trajectory log; later ones are only counted.
pub const EVENT_LOG_CAPACITY: usize = 1000;

/// Everything needed to reproduce one run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub dt: f64,
    pub t_max: f64,
    pub burn_in: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Constant position occupied for all `t < 0`.
    pub initial_past: Vec<f64>,
    pub record_stride: usize,
    pub seed: u64,
    /// Halve the step locally when it would land within `x_min` of the origin.
    pub guarded: bool,
    /// History length in steps; defaults to the `1e-12` kernel horizon.
    pub n_mem: Option<usize>,
}

impl SimConfig {
    /// Reference experiment for a Coulomb strength: `dt = 2^-6`, walker at
    /// rest at `(2 pi, 0)` with the same constant past.
    pub fn reference(coulomb_alpha: f64, t_max: f64) -> Result<Self> {
        let start = vec![2.0 * std::f64::consts::PI, 0.0];
        Ok(SimConfig {
            model: ModelSpec::reference(coulomb_alpha)?,
            dt: 1.0 / 64.0,
            t_max,
            burn_in: 0.25 * t_max,
            x0: start.clone(),
            v0: vec![0.0, 0.0],
            initial_past: start,
            record_stride: 8,
            seed: 0,
            guarded: false,
            n_mem: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model.dim;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Argument(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Argument(format!("t_max must be > 0, got {}", self.t_max)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_max) {
            return Err(Error::Argument(format!(
                "burn_in must lie in [0, t_max), got {}",
                self.burn_in
            )));
        }
        if self.x0.len() != d || self.v0.len() != d || self.initial_past.len() != d {
            return Err(Error::Argument(format!(
                "x0, v0 and initial_past must have dimension {d}"
            )));
        }
        if !self.model.is_admissible(&self.x0) {
            return Err(Error::Argument(format!("x0 = {:?} is not admissible", self.x0)));
        }
        if self.v0.iter().chain(&self.initial_past).any(|c| !c.is_finite()) {
            return Err(Error::Argument("v0 and initial_past must be finite".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Argument("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }

    pub fn history_len(&self) -> usize {
        self.n_mem
            .unwrap_or_else(|| default_n_mem(&self.model.kernel, self.dt))
    }

    /// Initial history: the constant past, with `x0` as the current sample.
    pub fn initial_buffer(&self) -> Result<HistoryBuffer> {
        let mut b = HistoryBuffer::constant_past(&self.initial_past, self.dt, self.history_len())?;
        if self.x0 != self.initial_past {
            b.push_sample(&self.x0);
        }
        Ok(b)
    }
}

/// Trapezoid weights for the memory integral at a fixed step and horizon.
#[derive(Debug, Clone)]
pub struct MemoryQuadrature {
    dt: f64,
    n_mem: usize,
    kernel: KernelSpec,
    weights: Vec<f64>,
    tail_mass: Option<f64>,
}

impl MemoryQuadrature {
    pub fn new(kernel: &KernelSpec, dt: f64, n_mem: usize) -> Self {
        MemoryQuadrature {
            dt,
            n_mem,
            kernel: kernel.clone(),
            weights: trapezoid_weights(kernel, dt, n_mem + 1),
            tail_mass: kernel.tail_integral(n_mem as f64 * dt).ok(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check(&self, buffer: &HistoryBuffer) -> Result<()> {
        if buffer.dt() != self.dt || buffer.n_mem() != self.n_mem {
            return Err(Error::Argument(format!(
                "history grid (dt = {}, n_mem = {}) does not match the quadrature (dt = {}, n_mem = {})",
                buffer.dt(),
                buffer.n_mem(),
                self.dt,
                self.n_mem
            )));
        }
        Ok(())
    }

    /// Adds `int_0^inf H(x - eta(s)) K(s) ds` to `out` and returns the bound
    /// on the part lost to truncation.
    pub fn accumulate(
        &self,
        x: &[f64],
        buffer: &HistoryBuffer,
        model: &ModelSpec,
        out: &mut [f64],
    ) -> Result<f64> {
        self.check(buffer)?;
        if model.pilot.is_zero() {
            return Ok(0.0);
        }
        let d = x.len();
        let len = buffer.len();
        let mut w = self.weights.clone();
        if buffer.tail_constant().is_none() && len < w.len() {
            // trapezoid over the stored nodes only
            w.truncate(len);
            if len == 1 {
                w[0] = 0.0;
            } else if len > 1 {
                w[len - 1] *= 0.5;
            }
        }
        let (a, b) = buffer.runs();
        let mut scratch = vec![0.0; d];
        let mut h = vec![0.0; d];
        let mut k = 0;
        let mut max_sep: f64 = 0.0;
        for run in [a, b] {
            for eta in run.chunks_exact(d) {
                let wk = w[k];
                k += 1;
                match model.pilot.kind {
                    PilotKind::BesselJ1 => {
                        let mut r2 = 0.0;
                        for i in 0..d {
                            scratch[i] = x[i] - eta[i];
                            r2 += scratch[i] * scratch[i];
                        }
                        let s = wk * bessel::j1_over_r(r2.sqrt());
                        for i in 0..d {
                            out[i] += s * scratch[i];
                        }
                    }
                    _ => {
                        for i in 0..d {
                            scratch[i] = x[i] - eta[i];
                        }
                        max_sep = max_sep.max(norm(&scratch));
                        model.pilot.value_into(&scratch, &mut h);
                        for i in 0..d {
                            out[i] += wk * h[i];
                        }
                    }
                }
            }
        }
        match buffer.tail_constant() {
            Some(c) => {
                let mut mass: f64 = w[len.min(w.len())..].iter().sum();
                mass += self.tail_mass.ok_or_else(|| {
                    Error::Unsupported("constant tail requires an exponential kernel".into())
                })?;
                for i in 0..d {
                    scratch[i] = x[i] - c[i];
                }
                model.pilot.value_into(&scratch, &mut h);
                for i in 0..d {
                    out[i] += mass * h[i];
                }
                Ok(0.0)
            }
            None => {
                let end = (len.max(1) - 1) as f64 * self.dt;
                let reach = max_sep.max(norm(x) + buffer.max_evicted_norm());
                Ok(model.pilot.sup_bound(reach) * self.kernel.tail_bound(end))
            }
        }
    }
}

/// Memory force with its truncation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryForce {
    pub force: Vec<f64>,
    /// Bound on the contribution of discarded history; zero for an exact tail.
    pub truncation_bound: f64,
}

/// `int_0^inf H(x_now - eta(s)) K(s) ds` by the trapezoid rule on the stored
/// grid plus the analytic tail.
pub fn memory_force(x_now: &[f64], buffer: &HistoryBuffer, model: &ModelSpec) -> Result<MemoryForce> {
    model.check_dim(x_now)?;
    let q = MemoryQuadrature::new(&model.kernel, buffer.dt(), buffer.n_mem());
    let mut force = vec![0.0; x_now.len()];
    let truncation_bound = q.accumulate(x_now, buffer, model, &mut force)?;
    Ok(MemoryForce {
        force,
        truncation_bound,
    })
}

/// Result of one Euler-Maruyama step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WalkerState,
    /// The new position is within `x_min` of the singularity.
    pub near_singularity: bool,
    /// Number of local substeps taken (1 unless the guard engaged).
    pub substeps: u32,
    pub truncation_bound: f64,
}

/// Precomputed stepping data for one model and step size.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    model: &'a ModelSpec,
    dt: f64,
    quadrature: MemoryQuadrature,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ModelSpec, dt: f64, n_mem: usize) -> Self {
        Stepper {
            model,
            dt,
            quadrature: MemoryQuadrature::new(&model.kernel, dt, n_mem),
        }
    }

    pub fn quadrature(&self) -> &MemoryQuadrature {
        &self.quadrature
    }

    /// Advances `state` by one step and pushes the new position into `buffer`.
    pub fn step(
        &self,
        state: &WalkerState,
        buffer: &mut HistoryBuffer,
        gauss: &[f64],
        guarded: bool,
    ) -> Result<StepOutcome> {
        let m = self.model;
        let d = m.dim;
        let dt = self.dt;
        if gauss.len() != d {
            return Err(Error::Argument(format!("need {d} normal draws, got {}", gauss.len())));
        }
        let forces = m.eval_forces(&state.x)?;
        let mut mem = vec![0.0; d];
        let truncation_bound = self.quadrature.accumulate(&state.x, buffer, m, &mut mem)?;
        let noise = m.sigma / m.mass * dt.sqrt();
        let mut x = vec![0.0; d];
        let mut v = vec![0.0; d];
        for i in 0..d {
            x[i] = state.x[i] + state.v[i] * dt;
            let drift = -state.v[i] - forces.grad_u[i] - forces.grad_g[i] + mem[i];
            v[i] = state.v[i] + dt / m.mass * drift + noise * gauss[i];
        }
        let mut substeps = 1;
        let close = |p: &[f64]| m.singular.is_present() && norm(p) < m.x_min;
        if guarded && close(&x) {
            for level in 1..=MAX_GUARD_HALVINGS {
                let n = 1u32 << level;
                if let Some((xs, vs)) = self.substeps(state, &mem, gauss, n) {
                    x = xs;
                    v = vs;
                    substeps = n;
                    break;
                }
            }
        }
        buffer.push_sample(&x);
        Ok(StepOutcome {
            near_singularity: close(&x),
            state: WalkerState { x, v, t: state.t + dt },
            substeps,
            truncation_bound,
        })
    }

    /// `n` equal substeps with the memory force frozen and the Gaussian
    /// increment split evenly; `None` if any substep comes within `x_min`.
    fn substeps(
        &self,
        state: &WalkerState,
        mem: &[f64],
        gauss: &[f64],
        n: u32,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.model;
        let h = self.dt / n as f64;
        let noise = m.sigma / m.mass * self.dt.sqrt() / n as f64;
        let mut x = state.x.clone();
        let mut v = state.v.clone();
        for _ in 0..n {
            let f = m.eval_forces(&x).ok()?;
            let mut xn = x.clone();
            for i in 0..x.len() {
                xn[i] = x[i] + v[i] * h;
                v[i] += h / m.mass * (-v[i] - f.grad_u[i] - f.grad_g[i] + mem[i]) + noise * gauss[i];
            }
            x = xn;
            if norm(&x) < m.x_min {
                return None;
            }
        }
        Some((x, v))
    }
}

/// One Euler-Maruyama step: `x+ = x + v dt`,
/// `v+ = v + (dt/m)(-v - grad U - grad G + F_mem) + (sigma/m) sqrt(dt) gauss`,
/// with every force taken at the pre-step state. `buffer` receives `x+`.
pub fn em_step(
    state: &WalkerState,
    buffer: &mut HistoryBuffer,
    model: &ModelSpec,
    dt: f64,
    gauss: &[f64],
) -> Result<StepOutcome> {
    if buffer.dt() != dt {
        return Err(Error::Argument(format!(
            "history step {} differs from dt = {dt}",
            buffer.dt()
        )));
    }
    Stepper::new(model, dt, buffer.n_mem()).step(state, buffer, gauss, false)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    SingularityProximity { step: u64, t: f64, radius: f64 },
    GuardedStep { step: u64, t: f64, substeps: u32 },
    Truncation { step: u64, t: f64, bound: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub singularity_count: u64,
    pub guarded_count: u64,
    pub max_truncation_bound: f64,
}

impl EventLog {
    fn push(&mut self, e: Event) {
        if self.events.len() < EVENT_LOG_CAPACITY {
            self.events.push(e);
        }
    }
}

/// Recorded states of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub record_stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<WalkerState>,
    pub events: EventLog,
    pub stream_id: u64,
    pub initial_past: Vec<f64>,
    pub final_state: WalkerState,
    pub final_buffer: HistoryBuffer,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }

    /// Radii `|x|` of the recorded states after `burn_in`.
    pub fn radii_after(&self, burn_in: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t > burn_in)
            .map(|(_, s)| norm(&s.x))
            .collect()
    }
}

struct MemberRun {
    events: EventLog,
    final_state: WalkerState,
    final_buffer: HistoryBuffer,
}

/// Integrates one member, calling `record` at every recorded step
/// (including `t = 0`).
fn run_member(
    config: &SimConfig,
    stepper: &Stepper,
    stream: u64,
    mut record: impl FnMut(&WalkerState, &HistoryBuffer) -> Result<()>,
) -> Result<MemberRun> {
    let d = config.model.dim;
    let mut rng = GaussianStream::new(config.seed, stream);
    let mut buffer = config.initial_buffer()?;
    let mut state = WalkerState::new(config.x0.clone(), config.v0.clone(), 0.0)?;
    let mut gauss = vec![0.0; d];
    let mut events = EventLog::default();
    record(&state, &buffer)?;
    let n = config.n_steps();
    for step in 1..=n {
        rng.fill(&mut gauss);
        let out = stepper.step(&state, &mut buffer, &gauss, config.guarded)?;
        let mut next = out.state;
        next.t = step as f64 * config.dt;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                step,
                t: next.t,
                last_x: state.x,
                last_v: state.v,
            });
        }
        if out.near_singularity {
            events.singularity_count += 1;
            events.push(Event::SingularityProximity {
                step,
                t: next.t,
                radius: norm(&next.x),
            });
        }
        if out.substeps > 1 {
            events.guarded_count += 1;
            events.push(Event::GuardedStep {
                step,
                t: next.t,
                substeps: out.substeps,
            });
        }
        if out.truncation_bound > TRUNCATION_TOLERANCE
            && events.max_truncation_bound <= TRUNCATION_TOLERANCE
        {
            events.push(Event::Truncation {
                step,
                t: next.t,
                bound: out.truncation_bound,
            });
        }
        events.max_truncation_bound = events.max_truncation_bound.max(out.truncation_bound);
        state = next;
        if step % config.record_stride as u64 == 0 {
            record(&state, &buffer)?;
        }
    }
    Ok(MemberRun {
        events,
        final_state: state,
        final_buffer: buffer,
    })
}

/// Runs member `stream` of the configuration and records its states.
pub fn simulate_stream(config: &SimConfig, stream: u64) -> Result<Trajectory> {
    config.validate()?;
    let stepper = Stepper::new(&config.model, config.dt, config.history_len());
    let mut times = Vec::new();
    let mut states = Vec::new();
    let run = run_member(config, &stepper, stream, |s, _| {
        times.push(s.t);
        states.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        dt: config.dt,
        record_stride: config.record_stride,
        times,
        states,
        events: run.events,
        stream_id: stream,
        initial_past: config.initial_past.clone(),
        final_state: run.final_state,
        final_buffer: run.final_buffer,
    })
}

/// Deterministic single run (stream 0).
pub fn simulate(config: &SimConfig) -> Result<Trajectory> {
    simulate_stream(config, 0)
}

/// A scalar function of the walker recorded across an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Radius,
    Coordinate(usize),
    SpeedSquared,
    Phi(LyapunovParams),
    Psi(LyapunovParams),
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Radius => "radius".into(),
            Observable::Coordinate(i) => format!("x{}", i + 1),
            Observable::SpeedSquared => "speed_squared".into(),
            Observable::Phi(_) => "phi".into(),
            Observable::Psi(_) => "psi".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "radius" | "|x|" => Ok(Observable::Radius),
            "speed_squared" => Ok(Observable::SpeedSquared),
            _ => name
                .strip_prefix('x')
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|i| *i >= 1)
                .map(|i| Observable::Coordinate(i - 1))
                .ok_or_else(|| Error::Parse(format!("unknown observable '{name}'"))),
        }
    }

    pub fn evaluate(
        &self,
        state: &WalkerState,
        buffer: &HistoryBuffer,
        model: &ModelSpec,
        weights: &[f64],
    ) -> Result<f64> {
        match self {
            Observable::Radius => Ok(norm(&state.x)),
            Observable::Coordinate(i) => state
                .x
                .get(*i)
                .copied()
                .ok_or_else(|| Error::Argument(format!("coordinate {} out of range", i + 1))),
            Observable::SpeedSquared => Ok(state.v.iter().map(|c| c * c).sum()),
            Observable::Phi(p) => lyapunov::phi(state, model, p),
            Observable::Psi(p) => {
                let n = crate::state::weighted_norm_with(buffer, &model.kernel, p.p2, weights)?;
                Ok(lyapunov::phi(state, model, p)? + n.value.powf(p.p2))
            }
        }
    }
}

/// Online mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two summaries as if all samples had been pushed into one.
    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        RunningStats {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n * other.n) as f64 / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Independent members of one configuration.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub config: SimConfig,
    pub n_members: usize,
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `member_series[member][observable][time]`; `None` for aborted members.
    pub member_series: Vec<Option<Vec<Vec<f64>>>>,
    pub final_states: Vec<Option<WalkerState>>,
    pub aborted: Vec<(usize, Error)>,
    /// `stats[observable][time]` over the members that completed.
    pub stats: Vec<Vec<RunningStats>>,
    pub singularity_events: u64,
}

impl Ensemble {
    /// Index of the recorded time nearest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let step = self.config.dt * self.config.record_stride as f64;
        ((t / step).round().max(0.0) as usize).min(self.times.len() - 1)
    }

    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.observables.iter().position(|o| o.name() == name)
    }

    pub fn completed(&self) -> usize {
        self.n_members - self.aborted.len()
    }

    /// Values of one observable at one recorded time across completed members.
    pub fn cross_section(&self, observable: usize, time_index: usize) -> Vec<f64> {
        self.member_series
            .iter()
            .flatten()
            .map(|s| s[observable][time_index])
            .collect()
    }
}

/// Runs `n_members` members on `threads` workers (all cores when `None`).
/// Member `i` draws from stream `i`, so results do not depend on scheduling.
pub fn simulate_ensemble(
    config: &SimConfig,
    n_members: usize,
    observables: &[Observable],
    threads: Option<usize>,
) -> Result<Ensemble> {
    config.validate()?;
    if n_members == 0 {
        return Err(Error::Argument("ensemble needs at least one member".into()));
    }
    let stepper = Stepper::new(&config.model, config.dt, config.history_len());
    let n_records = config.n_steps() as usize / config.record_stride + 1;
    let run = |i: usize| -> Result<(Vec<Vec<f64>>, WalkerState, u64)> {
        let mut series = vec![Vec::with_capacity(n_records); observables.len()];
        let weights = stepper.quadrature().weights();
        let out = run_member(config, &stepper, i as u64, |s, b| {
            for (o, col) in observables.iter().zip(series.iter_mut()) {
                col.push(o.evaluate(s, b, &config.model, weights)?);
            }
            Ok(())
        })?;
        Ok((series, out.final_state, out.events.singularity_count))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let results: Vec<Result<_>> = pool.install(|| (0..n_members).into_par_iter().map(run).collect());

    let times: Vec<f64> = (0..n_records)
        .map(|k| (k * config.record_stride) as f64 * config.dt)
        .collect();
    let mut stats = vec![vec![RunningStats::default(); n_records]; observables.len()];
    let mut member_series = Vec::with_capacity(n_members);
    let mut final_states = Vec::with_capacity(n_members);
    let mut aborted = Vec::new();
    let mut singularity_events = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((series, fin, sing)) => {
                for (o, col) in series.iter().enumerate() {
                    for (k, v) in col.iter().enumerate() {
                        stats[o][k].push(*v);
                    }
                }
                singularity_events += sing;
                member_series.push(Some(series));
                final_states.push(Some(fin));
            }
            Err(e) => {
                aborted.push((i, e));
                member_series.push(None);
                final_states.push(None);
            }
        }
    }
    Ok(Ensemble {
        config: config.clone(),
        n_members,
        times,
        observables: observables.to_vec(),
        member_series,
        final_states,
        aborted,
        stats,
        singularity_events,
    })
}

/// Distance between two recorded trajectories' final positions; helper for
/// coupling checks in tests and tools.
pub fn final_separation(a: &Trajectory, b: &Trajectory) -> f64 {
    dist(&a.final_state.x, &b.final_state.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::j1;
    use crate::state::Tail;
    use crate::models::{PilotForceSpec, SingularPotentialSpec, SmoothPotentialSpec};
    use std::f64::consts::PI;

    const DT: f64 = 1.0 / 64.0;

    #[test]
    fn memory_force_of_resting_walker_vanishes() {
        let m = ModelSpec::reference(1.0).unwrap();
        let b = HistoryBuffer::constant_past(&[1.0, 0.5], DT, 1769).unwrap();
        let f = memory_force(&[1.0, 0.5], &b, &m).unwrap();
        assert_eq!(f.force, vec![0.0, 0.0]);
    }

    #[test]
    fn memory_force_of_constant_displacement() {
        let m = ModelSpec::reference(1.0).unwrap();
        let b = HistoryBuffer::constant_past(&[PI, 0.0], DT, 1769).unwrap();
        let f = memory_force(&[2.0 * PI, 0.0], &b, &m).unwrap();
        // trapezoid kernel mass 1 + dt^2/12
        let mass = 1.0 + DT * DT / 12.0;
        assert!((f.force[0] - j1(PI) * mass).abs() < 1e-9, "{:?}", f.force);
        assert!((f.force[0] - 0.284_615).abs() < 1e-5);
        assert_eq!(f.force[1], 0.0);
    }

    /// Synthetic smooth history `eta(s) = (cos s, sin s)`; oracle by dense
    /// Simpson quadrature of the integrand.
    fn circle_history(dt: f64) -> HistoryBuffer {
        let n_mem = (40.0 / dt) as usize;
        let samples: Vec<Vec<f64>> = (0..=n_mem)
            .map(|k| {
                let s = k as f64 * dt;
                vec![s.cos(), s.sin()]
            })
            .collect();
        HistoryBuffer::from_samples(&samples, dt, n_mem, Tail::Constant(vec![1.0, 0.0])).unwrap()
    }

    #[test]
    fn memory_force_converges_at_second_order() {
        let m = ModelSpec::reference(1.0).unwrap();
        let x = [1.0, 0.0];
        let oracle = {
            let n = 400_000;
            let h = 40.0 / n as f64;
            let f = |s: f64| {
                let r = [x[0] - s.cos(), x[1] - s.sin()];
                let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
                let c = if rn == 0.0 { 0.5 } else { j1(rn) / rn };
                [c * r[0] * (-s).exp(), c * r[1] * (-s).exp()]
            };
            let mut acc = [0.0; 2];
            for i in 0..=n {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                let v = f(i as f64 * h);
                acc[0] += w * v[0];
                acc[1] += w * v[1];
            }
            [acc[0] * h / 3.0, acc[1] * h / 3.0]
        };
        let err = |dt: f64| {
            let f = memory_force(&x, &circle_history(dt), &m).unwrap().force;
            dist(&f, &oracle)
        };
        let ratio = err(DT) / err(DT / 2.0);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn truncation_matches_doubled_horizon() {
        let m = ModelSpec::reference(1.0).unwrap();
        let n = default_n_mem(&m.kernel, DT);
        let mut short = HistoryBuffer::empty(2, DT, n, Tail::Truncated).unwrap();
        let mut long = HistoryBuffer::empty(2, DT, 2 * n, Tail::Truncated).unwrap();
        for k in 0..=2 * n {
            let s = k as f64 * DT;
            let p = [2.0 + (0.3 * s).sin(), (0.2 * s).cos()];
            short.push_sample(&p);
            long.push_sample(&p);
        }
        let x = short.sample(0).unwrap().to_vec();
        let a = memory_force(&x, &short, &m).unwrap();
        let b = memory_force(&x, &long, &m).unwrap();
        assert!(dist(&a.force, &b.force) < 1e-9);
        assert!(a.truncation_bound < 1e-9 && a.truncation_bound > 0.0);
    }

    fn harmonic(sigma: f64) -> ModelSpec {
        ModelSpec::harmonic_oscillator(2, sigma).unwrap()
    }

    fn state(x: [f64; 2], v: [f64; 2]) -> WalkerState {
        WalkerState::new(x.to_vec(), v.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn em_step_examples() {
        let m = harmonic(0.0);
        let mut b = HistoryBuffer::constant_past(&[1.0, 0.0], DT, 10).unwrap();
        let out = em_step(&state([1.0, 0.0], [0.0, 0.0]), &mut b, &m, DT, &[0.3, 0.1]).unwrap();
        assert_eq!(out.state.x, vec![1.0, 0.0]);
        assert_eq!(out.state.v, vec![-DT, 0.0]);
        assert_eq!(out.state.t, DT);

        let m = ModelSpec::reference(1.0).unwrap().with_x_min(1e-8);
        let mut m0 = m.clone();
        m0.sigma = 0.0;
        let mut b = HistoryBuffer::constant_past(&[1.0, 0.0], DT, 1769).unwrap();
        let out = em_step(&state([1.0, 0.0], [0.0, 0.0]), &mut b, &m0, DT, &[0.0, 0.0]).unwrap();
        assert_eq!(out.state.v, vec![0.0, 0.0]);
        assert_eq!(b.sample(0).unwrap(), &[1.0, 0.0]);

        // pure diffusion increment at the origin of a force-free model
        let free = ModelSpec::new(
            2,
            1.0,
            1.0,
            KernelSpec::unit_exponential(),
            SmoothPotentialSpec::polynomial(1.0, 2.0).unwrap(),
            SingularPotentialSpec::none(),
            PilotForceSpec::zero(),
        )
        .unwrap();
        let mut b = HistoryBuffer::constant_past(&[0.0, 0.0], DT, 10).unwrap();
        let out = em_step(&state([0.0, 0.0], [0.0, 0.0]), &mut b, &free, DT, &[1.0, 0.0]).unwrap();
        assert!((out.state.v[0] - DT.sqrt()).abs() < 1e-15 && out.state.v[1] == 0.0);
    }

    #[test]
    fn singularity_is_flagged_and_guarded() {
        let m = ModelSpec::reference(1.0).unwrap().with_x_min(1e-3);
        let mut m0 = m.clone();
        m0.sigma = 0.0;
        // heading straight into the origin
        let s = state([0.01, 0.0], [-0.64, 0.0]);
        let mut b = HistoryBuffer::constant_past(&[0.01, 0.0], DT, 1769).unwrap();
        let plain = em_step(&s, &mut b, &m0, DT, &[0.0, 0.0]).unwrap();
        assert!(plain.near_singularity);
        let mut b = HistoryBuffer::constant_past(&[0.01, 0.0], DT, 1769).unwrap();
        let st = Stepper::new(&m0, DT, 1769);
        let guarded = st.step(&s, &mut b, &[0.0, 0.0], true).unwrap();
        assert!(guarded.substeps > 1);
        assert!(!guarded.near_singularity, "{:?}", guarded.state);
    }

    #[test]
    fn deterministic_harmonic_matches_exact_flow() {
        // x'' = -x' - x; exact solution from the 2x2 matrix exponential
        let mut cfg = SimConfig::reference(1.0, 4.0).unwrap();
        cfg.model = harmonic(0.0);
        cfg.x0 = vec![1.0, 0.0];
        cfg.v0 = vec![0.0, 0.0];
        cfg.initial_past = vec![1.0, 0.0];
        cfg.record_stride = 1;
        let err_at = |dt: f64| {
            let mut c = cfg.clone();
            c.dt = dt;
            let tr = simulate(&c).unwrap();
            let w = 3f64.sqrt() / 2.0;
            tr.times
                .iter()
                .zip(&tr.states)
                .map(|(t, s)| {
                    let x = (-t / 2.0).exp() * ((w * t).cos() + (w * t).sin() / (2.0 * w));
                    (s.x[0] - x).abs()
                })
                .fold(0.0, f64::max)
        };
        let e1 = err_at(DT);
        let e2 = err_at(DT / 2.0);
        assert!(e1 < 2.0 * DT, "{e1}");
        assert!((1.7..2.3).contains(&(e1 / e2)), "{}", e1 / e2);
    }

    #[test]
    fn simulate_is_deterministic() {
        let cfg = SimConfig::reference(3.0, 2.0).unwrap();
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times.len(), 2 * 64 / 8 + 1);
        let mut c2 = cfg.clone();
        c2.seed = 1;
        assert_ne!(simulate(&c2).unwrap().states, a.states);
    }

    #[test]
    fn singleton_ensemble_equals_simulate() {
        let cfg = SimConfig::reference(3.0, 1.0).unwrap();
        let tr = simulate(&cfg).unwrap();
        let ens = simulate_ensemble(&cfg, 1, &[Observable::Radius], Some(1)).unwrap();
        let radii: Vec<f64> = tr.states.iter().map(|s| norm(&s.x)).collect();
        assert_eq!(ens.member_series[0].as_ref().unwrap()[0], radii);
        let again = simulate_ensemble(&cfg, 3, &[Observable::Radius], Some(2)).unwrap();
        let other = simulate_ensemble(&cfg, 3, &[Observable::Radius], Some(1)).unwrap();
        assert_eq!(again.stats, other.stats);
    }

    #[test]
    fn replaying_positions_rebuilds_buffers() {
        let mut cfg = SimConfig::reference(3.0, 2.0).unwrap();
        cfg.record_stride = 1;
        let tr = simulate(&cfg).unwrap();
        let mut b = cfg.initial_buffer().unwrap();
        for s in &tr.states[1..] {
            b.push_sample(&s.x);
        }
        assert_eq!(b, tr.final_buffer);
    }

    #[test]
    fn noiseless_dissipation_of_phi() {
        let mut cfg = SimConfig::reference(1.0, 20.0).unwrap();
        cfg.model = harmonic(0.0);
        cfg.x0 = vec![3.0, 1.0];
        cfg.v0 = vec![0.0, 0.0];
        cfg.initial_past = cfg.x0.clone();
        cfg.record_stride = 1;
        let tr = simulate(&cfg).unwrap();
        // mechanical energy U + |v|^2/2 decays up to O(dt^2) per step
        let e: Vec<f64> = tr
            .states
            .iter()
            .map(|s| 0.5 * (s.x[0].powi(2) + s.x[1].powi(2) + s.v[0].powi(2) + s.v[1].powi(2)))
            .collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 2.0 * DT * DT * w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn running_stats_merge_is_consistent() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|x| all.push(*x));
        let mut a = RunningStats::default();
        let mut b = RunningStats::default();
        xs[..40].iter().for_each(|x| a.push(*x));
        xs[40..].iter().for_each(|x| b.push(*x));
        let m = a.merge(&b);
        assert!((m.mean - all.mean).abs() < 1e-12);
        assert!((m.variance() - all.variance()).abs() < 1e-12);
    }
}
