//! Difference flow `rho = J xi - A zeta` of the walker, the control `zeta`
//! that drives it, and the deterministic control path used for
//! irreducibility.
//!
//! The flow obeys the damped linear system
//!
//! ```text
//! d/dt pi_x rho = pi_v rho
//! d/dt pi_v rho = -5 a pi_v rho - 6 a^2 pi_x rho
//! pi_eta rho(t; 0) = pi_x rho(t)
//! ```
//!
//! where `a` is the rate parameter (`rate_alpha`), unrelated to the Coulomb
//! strength of the singular potential.

mod control_path;

pub use control_path::{
    build_control_path, gamma_residual, psi1, ControlPath, ControlSamples, GammaSeries, PathCase,
    Segment, SegmentKind, MAX_EPS_HALVINGS,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::linalg::{mat_vec, norm};
use crate::models::{KernelSpec, ModelSpec};
use crate::state::{default_n_mem, trapezoid_weights, weighted_norm_with, HistoryBuffer, Tail};

/// Initial direction `xi = (pi_x xi, pi_v xi, pi_eta xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Past of the perturbation; `None` is the zero history.
    pub eta: Option<HistoryBuffer>,
}

impl Perturbation {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() || x.is_empty() {
            return Err(Error::Argument(format!(
                "perturbation blocks have lengths {} and {}",
                x.len(),
                v.len()
            )));
        }
        Ok(Perturbation { x, v, eta: None })
    }

    pub fn with_history(mut self, eta: HistoryBuffer) -> Result<Self> {
        if eta.dim() != self.x.len() {
            return Err(Error::Argument("history dimension does not match".into()));
        }
        self.eta = Some(eta);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `|pi_x xi| + |pi_v xi| + ||pi_eta xi||_q`.
    pub fn norm(&self, kernel: &KernelSpec, q: f64) -> Result<f64> {
        let eta = match &self.eta {
            Some(h) => {
                let w = trapezoid_weights(kernel, h.dt(), h.node_count());
                weighted_norm_with(h, kernel, q, &w)?.value
            }
            None => 0.0,
        };
        Ok(norm(&self.x) + norm(&self.v) + eta)
    }

    /// Rescaled to unit norm.
    pub fn normalized(&self, kernel: &KernelSpec, q: f64) -> Result<Self> {
        let n = self.norm(kernel, q)?;
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize the zero perturbation".into()));
        }
        Ok(Perturbation {
            x: self.x.iter().map(|c| c / n).collect(),
            v: self.v.iter().map(|c| c / n).collect(),
            eta: self.eta.as_ref().map(|h| h.scaled(1.0 / n)),
        })
    }
}

/// Coefficients `(A, B)` with `pi_x rho = A e^{-2at} - B e^{-3at}`.
fn closed_form_coefficients(xi: &Perturbation, rate_alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let a = xi.x.iter().zip(&xi.v).map(|(x, v)| 3.0 * x + v / rate_alpha).collect();
    let b = xi.x.iter().zip(&xi.v).map(|(x, v)| 2.0 * x + v / rate_alpha).collect();
    (a, b)
}

/// Exact `(pi_x rho_t, pi_v rho_t)`.
pub fn rho_closed_form(xi: &Perturbation, rate_alpha: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = closed_form_coefficients(xi, rate_alpha);
    let e2 = (-2.0 * rate_alpha * t).exp();
    let e3 = (-3.0 * rate_alpha * t).exp();
    let x = a.iter().zip(&b).map(|(a, b)| a * e2 - b * e3).collect();
    let v = a
        .iter()
        .zip(&b)
        .map(|(a, b)| -2.0 * rate_alpha * a * e2 + 3.0 * rate_alpha * b * e3)
        .collect();
    (x, v)
}

/// `C` in `|pi_x rho_t| + |pi_v rho_t| <= C e^{-2 a t}`.
pub fn decay_constant(xi: &Perturbation, rate_alpha: f64) -> f64 {
    let (a, b) = closed_form_coefficients(xi, rate_alpha);
    norm(&a) * (1.0 + 2.0 * rate_alpha) + norm(&b) * (1.0 + 3.0 * rate_alpha)
}

/// One time slice of the difference flow.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub pi_x: Vec<f64>,
    pub pi_v: Vec<f64>,
    /// Past values of `pi_x rho`, most recent first.
    pub pi_eta: HistoryBuffer,
    pub rate_alpha: f64,
}

/// Time series of the difference flow on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSeries {
    pub rate_alpha: f64,
    pub dt: f64,
    pub p2: f64,
    pub times: Vec<f64>,
    pub pi_x: Vec<Vec<f64>>,
    pub pi_v: Vec<Vec<f64>>,
    /// `||pi_eta rho_t||_{p2}`.
    pub eta_norm: Vec<f64>,
    pub initial_eta: HistoryBuffer,
}

impl VariationalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `pi_eta rho_t` at lag node `j`: `pi_x rho` at time index `k - j`, or
    /// the initial past beyond it.
    pub fn eta_node(&self, k: usize, j: usize) -> &[f64] {
        if j <= k {
            &self.pi_x[k - j]
        } else {
            self.initial_eta
                .node(j - k)
                .or_else(|| self.initial_eta.tail_constant())
                .unwrap_or_else(|| self.initial_eta.node(self.initial_eta.node_count() - 1).unwrap())
        }
    }

    /// Full state at time index `k`, with the history rebuilt from the series.
    pub fn state_at(&self, k: usize) -> Result<VariationalState> {
        let mut h = self.initial_eta.clone();
        for x in &self.pi_x[1..=k] {
            h.push_sample(x);
        }
        Ok(VariationalState {
            pi_x: self.pi_x[k].clone(),
            pi_v: self.pi_v[k].clone(),
            pi_eta: h,
            rate_alpha: self.rate_alpha,
        })
    }

    /// Largest deviation from [`rho_closed_form`] over the grid.
    pub fn sup_error(&self, xi: &Perturbation) -> f64 {
        let mut e: f64 = 0.0;
        for (k, t) in self.times.iter().enumerate() {
            let (x, v) = rho_closed_form(xi, self.rate_alpha, *t);
            for i in 0..x.len() {
                e = e.max((x[i] - self.pi_x[k][i]).abs()).max((v[i] - self.pi_v[k][i]).abs());
            }
        }
        e
    }
}

/// Initial history of `xi` on the given grid.
fn initial_eta(xi: &Perturbation, kernel: &KernelSpec, dt: f64) -> Result<HistoryBuffer> {
    match &xi.eta {
        Some(h) => {
            if h.dt() != dt {
                return Err(Error::Argument(format!(
                    "perturbation history has dt = {}, expected {dt}",
                    h.dt()
                )));
            }
            let mut h = h.clone();
            // the boundary value pi_eta(0; 0) is pi_x xi
            if h.sample(0) != Some(&xi.x[..]) {
                h.push_sample(&xi.x);
            }
            Ok(h)
        }
        None => {
            let n_mem = default_n_mem(kernel, dt);
            HistoryBuffer::from_samples(&[xi.x.clone()], dt, n_mem, Tail::Constant(vec![0.0; xi.dim()]))
        }
    }
}

/// RK4 integration of the `(x, v)` block with the history transported along.
pub fn rho_numeric(
    xi: &Perturbation,
    rate_alpha: f64,
    dt: f64,
    t_end: f64,
    kernel: &KernelSpec,
    p2: f64,
) -> Result<VariationalSeries> {
    if !(rate_alpha > 0.0) {
        return Err(Error::Argument(format!("rate_alpha must be > 0, got {rate_alpha}")));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Argument(format!("need dt > 0 and t_end >= 0, got {dt}, {t_end}")));
    }
    let d = xi.dim();
    let mut history = initial_eta(xi, kernel, dt)?;
    let initial = history.clone();
    let weights = trapezoid_weights(kernel, dt, history.node_count());
    let steps = (t_end / dt).round() as usize;
    let a = rate_alpha;
    let rhs = |x: &[f64], v: &[f64], dx: &mut [f64], dv: &mut [f64]| {
        for i in 0..d {
            dx[i] = v[i];
            dv[i] = -5.0 * a * v[i] - 6.0 * a * a * x[i];
        }
    };
    let mut x = xi.x.clone();
    let mut v = xi.v.clone();
    let mut out = VariationalSeries {
        rate_alpha,
        dt,
        p2,
        times: Vec::with_capacity(steps + 1),
        pi_x: Vec::with_capacity(steps + 1),
        pi_v: Vec::with_capacity(steps + 1),
        eta_norm: Vec::with_capacity(steps + 1),
        initial_eta: initial,
    };
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut l = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut xs = vec![0.0; d];
    let mut vs = vec![0.0; d];
    for step in 0..=steps {
        out.times.push(step as f64 * dt);
        out.pi_x.push(x.clone());
        out.pi_v.push(v.clone());
        out.eta_norm.push(weighted_norm_with(&history, kernel, p2, &weights)?.value);
        if step == steps {
            break;
        }
        for stage in 0..4 {
            let c = match stage {
                0 => 0.0,
                3 => 1.0,
                _ => 0.5,
            };
            for i in 0..d {
                let (pk, pl) = if stage == 0 { (0.0, 0.0) } else { (k[stage - 1][i], l[stage - 1][i]) };
                xs[i] = x[i] + c * dt * pk;
                vs[i] = v[i] + c * dt * pl;
            }
            let (ks, ls) = (&mut k[stage], &mut l[stage]);
            rhs(&xs, &vs, ks, ls);
        }
        for i in 0..d {
            x[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            v[i] += dt / 6.0 * (l[0][i] + 2.0 * l[1][i] + 2.0 * l[2][i] + l[3][i]);
        }
        history.push_sample(&x);
    }
    Ok(out)
}

/// The control along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaSeries {
    pub times: Vec<f64>,
    pub zeta: Vec<Vec<f64>>,
    /// `sum dt |zeta|^2`.
    pub energy: f64,
    /// Time indices where the walker was within `x_min` of the origin.
    pub unreliable: Vec<usize>,
}

/// Control `zeta(t)` making `rho` solve the damped system, evaluated along
/// `traj` (recorded at every step) for unit mass.
pub fn zeta_control(
    traj: &Trajectory,
    series: &VariationalSeries,
    model: &ModelSpec,
    rate_alpha: f64,
) -> Result<ZetaSeries> {
    if traj.record_stride != 1 {
        return Err(Error::Argument("zeta needs a trajectory recorded at every step".into()));
    }
    if (traj.dt - series.dt).abs() > 1e-15 * series.dt {
        return Err(Error::Argument(format!(
            "time grids differ: trajectory dt = {}, flow dt = {}",
            traj.dt, series.dt
        )));
    }
    let d = model.dim;
    if series.pi_x.first().map(Vec::len) != Some(d) {
        return Err(Error::Argument("flow dimension does not match the model".into()));
    }
    let n = traj.states.len().min(series.len());
    let dt = series.dt;
    let n_mem = default_n_mem(&model.kernel, dt);
    let weights = trapezoid_weights(&model.kernel, dt, n_mem + 1);
    let tail_mass = model.kernel.tail_integral(n_mem as f64 * dt).unwrap_or(0.0);
    let a = rate_alpha;

    let mut hess = vec![0.0; d * d];
    let mut jac = vec![0.0; d * d];
    let mut r = vec![0.0; d];
    let mut diff = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut out = ZetaSeries {
        times: series.times[..n].to_vec(),
        zeta: Vec::with_capacity(n),
        energy: 0.0,
        unreliable: Vec::new(),
    };
    for k in 0..n {
        let x = &traj.states[k].x;
        let (px, pv) = (&series.pi_x[k], &series.pi_v[k]);
        let mut z: Vec<f64> = (0..d).map(|i| -pv[i] + 5.0 * a * pv[i] + 6.0 * a * a * px[i]).collect();
        if norm(x) < model.x_min {
            out.unreliable.push(k);
        }
        model.smooth.hessian_into(x, &mut hess);
        mat_vec(&hess, px, &mut tmp);
        for i in 0..d {
            z[i] -= tmp[i];
        }
        if model.singular.is_present() && norm(x) > 0.0 {
            model.singular.hessian_into(x, &mut hess);
            mat_vec(&hess, px, &mut tmp);
            for i in 0..d {
                z[i] -= tmp[i];
            }
        }
        if !model.pilot.is_zero() {
            let past = |j: usize| -> &[f64] {
                if j <= k {
                    &traj.states[k - j].x
                } else {
                    &traj.initial_past
                }
            };
            for (j, w) in weights.iter().enumerate().chain(std::iter::once((n_mem, &tail_mass))) {
                if *w == 0.0 {
                    continue;
                }
                let eta = past(j);
                let peta = series.eta_node(k, j);
                for i in 0..d {
                    r[i] = x[i] - eta[i];
                    diff[i] = px[i] - peta[i];
                }
                model.pilot.jacobian_into(&r, &mut jac);
                mat_vec(&jac, &diff, &mut tmp);
                for i in 0..d {
                    z[i] -= w * tmp[i];
                }
            }
        }
        out.energy += dt * z.iter().map(|c| c * c).sum::<f64>();
        out.zeta.push(z);
    }
    Ok(out)
}
