//! Memory kernels, confining and singular potentials, pilot-wave forces, and
//! sampled validators for their growth and steepness conditions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bessel;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, spectral_norm, sym_spectral_norm};

/// Finite-difference step used for user callables.
pub const FD_STEP: f64 = 1e-5;
/// Default singularity-proximity threshold.
pub const DEFAULT_X_MIN: f64 = 1e-8;
/// Tolerance on the kernel decay check.
pub const KERNEL_TOLERANCE: f64 = 1e-8;

/// A user-supplied scalar potential on `R^d`.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            probe[i] = x[i] + FD_STEP;
            let up = self.value(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = self.value(&probe);
            probe[i] = x[i];
            out[i] = (up - down) / (2.0 * FD_STEP);
        }
    }

    /// Row-major `d x d` Hessian; central differences of the gradient by default.
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let mut probe = x.to_vec();
        let mut up = vec![0.0; d];
        let mut down = vec![0.0; d];
        for j in 0..d {
            probe[j] = x[j] + FD_STEP;
            self.gradient(&probe, &mut up);
            probe[j] = x[j] - FD_STEP;
            self.gradient(&probe, &mut down);
            probe[j] = x[j];
            for i in 0..d {
                out[i * d + j] = (up[i] - down[i]) / (2.0 * FD_STEP);
            }
        }
    }
}

/// A user-supplied vector field `R^d -> R^d`.
pub trait VectorField: Send + Sync {
    fn value(&self, x: &[f64], out: &mut [f64]);

    /// Row-major Jacobian, `out[i*d + j] = d f_i / d x_j`.
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let mut probe = x.to_vec();
        let mut up = vec![0.0; d];
        let mut down = vec![0.0; d];
        for j in 0..d {
            probe[j] = x[j] + FD_STEP;
            self.value(&probe, &mut up);
            probe[j] = x[j] - FD_STEP;
            self.value(&probe, &mut down);
            probe[j] = x[j];
            for i in 0..d {
                out[i * d + j] = (up[i] - down[i]) / (2.0 * FD_STEP);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Kernel

/// Memory kernel `K`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `K(t) = k0 * exp(-delta * t)`
    Exponential { k0: f64, delta: f64 },
    /// Piecewise-linear table, zero past the last node. `delta` is the claimed
    /// decay rate.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
        delta: f64,
    },
}

impl KernelSpec {
    pub fn exponential(k0: f64, delta: f64) -> Result<Self> {
        if !(k0 >= 0.0 && k0.is_finite()) {
            return Err(Error::Argument(format!("kernel amplitude must be >= 0, got {k0}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Argument(format!("kernel decay rate must be > 0, got {delta}")));
        }
        Ok(KernelSpec::Exponential { k0, delta })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>, delta: f64) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Argument(
                "tabulated kernel needs at least two (time, value) pairs".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "tabulated kernel times must start at 0 and increase strictly".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Argument("kernel values must be nonnegative".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::Argument(format!("kernel decay rate must be > 0, got {delta}")));
        }
        Ok(KernelSpec::Tabulated {
            times,
            values,
            delta,
        })
    }

    /// Standard kernel of the reference experiment, `K(t) = e^{-t}`.
    pub fn unit_exponential() -> Self {
        KernelSpec::Exponential { k0: 1.0, delta: 1.0 }
    }

    pub fn k0(&self) -> f64 {
        match self {
            KernelSpec::Exponential { k0, .. } => *k0,
            KernelSpec::Tabulated { values, .. } => values[0],
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            KernelSpec::Exponential { delta, .. } | KernelSpec::Tabulated { delta, .. } => *delta,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            KernelSpec::Exponential { .. } => "exponential",
            KernelSpec::Tabulated { .. } => "tabulated",
        }
    }

    /// `K(t)`; negative times are a domain error.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("kernel evaluated at negative time {t}")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        match self {
            KernelSpec::Exponential { k0, delta } => k0 * (-delta * t).exp(),
            KernelSpec::Tabulated { times, values, .. } => {
                let last = times.len() - 1;
                if t >= times[last] {
                    return if t == times[last] { values[last] } else { 0.0 };
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// `int_T^inf K(s) ds`, analytic for the exponential kind only.
    pub fn tail_integral(&self, from: f64) -> Result<f64> {
        if !(from >= 0.0) {
            return Err(Error::Domain(format!("tail integral from negative time {from}")));
        }
        match self {
            KernelSpec::Exponential { k0, delta } => Ok(k0 * (-delta * from).exp() / delta),
            KernelSpec::Tabulated { .. } => Err(Error::Unsupported(
                "analytic tail integral requires an exponential kernel".into(),
            )),
        }
    }

    /// Upper bound on `int_T^inf K` for kernels obeying `K' <= -delta K`.
    pub(crate) fn tail_bound(&self, from: f64) -> f64 {
        self.eval_unchecked(0.0) * (-self.delta() * from).exp() / self.delta()
    }

    /// History horizon with `K(T)/K(0) <= 1e-12`.
    pub fn default_horizon(&self) -> f64 {
        -(1e-12f64).ln() / self.delta()
    }
}

/// `K(t)` for the given kernel.
pub fn eval_kernel(spec: &KernelSpec, t: f64) -> Result<f64> {
    spec.eval(t)
}

/// Checks `K'(t) <= -delta K(t)` by finite differences at every grid point.
pub fn validate_kernel(
    spec: &KernelSpec,
    grid: &[f64],
    delta_candidate: f64,
) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::Argument("kernel validation grid is empty".into()));
    }
    if grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "kernel validation grid must be nonnegative and strictly increasing".into(),
        ));
    }
    let h = 1e-6;
    let mut violations = Vec::new();
    for &t in grid {
        let deriv = if t < h {
            (-3.0 * spec.eval_unchecked(t) + 4.0 * spec.eval_unchecked(t + h)
                - spec.eval_unchecked(t + 2.0 * h))
                / (2.0 * h)
        } else {
            (spec.eval_unchecked(t + h) - spec.eval_unchecked(t - h)) / (2.0 * h)
        };
        let bound = -delta_candidate * spec.eval_unchecked(t);
        if deriv > bound + KERNEL_TOLERANCE {
            violations.push(Violation {
                point: vec![t],
                radius: t,
                lhs: deriv,
                rhs: bound,
            });
        }
    }
    let mut report = ValidationReport::default();
    report.push(Verdict::from_violations(
        "kernel_decay",
        format!("K'(t) <= -{delta_candidate} K(t) on {} grid points", grid.len()),
        violations,
    ));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Potentials

/// Radial profile value and first two derivatives at `r`.
#[derive(Debug, Clone, Copy)]
struct Radial {
    value: f64,
    d1: f64,
    d2: f64,
}

fn radial_gradient(profile: Radial, x: &[f64], r: f64, out: &mut [f64]) {
    let s = profile.d1 / r;
    for (o, xi) in out.iter_mut().zip(x) {
        *o = s * xi;
    }
}

/// Hessian of `g(|x|)`: `g'' xx^T/r^2 + (g'/r)(I - xx^T/r^2)`.
fn radial_hessian(profile: Radial, x: &[f64], r: f64, out: &mut [f64]) {
    let d = x.len();
    let trans = profile.d1 / r;
    let rad = profile.d2;
    for i in 0..d {
        for j in 0..d {
            let proj = x[i] * x[j] / (r * r);
            let id = if i == j { 1.0 } else { 0.0 };
            out[i * d + j] = rad * proj + trans * (id - proj);
        }
    }
}

#[derive(Clone)]
pub enum SmoothKind {
    /// `U(x) = |x|^2 / 2`
    Harmonic,
    /// `U(x) = coefficient * |x|^exponent`
    Polynomial { coefficient: f64, exponent: f64 },
    Custom(Arc<dyn ScalarField>),
}

impl fmt::Debug for SmoothKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothKind::Harmonic => write!(f, "Harmonic"),
            SmoothKind::Polynomial {
                coefficient,
                exponent,
            } => write!(f, "Polynomial({coefficient} |x|^{exponent})"),
            SmoothKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Confining potential `U` with its growth constants.
#[derive(Debug, Clone)]
pub struct SmoothPotentialSpec {
    pub kind: SmoothKind,
    pub q0: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl SmoothPotentialSpec {
    pub fn harmonic() -> Self {
        SmoothPotentialSpec {
            kind: SmoothKind::Harmonic,
            q0: 2.0,
            a0: 2.0,
            a1: 1.0,
            a2: 0.0,
        }
    }

    pub fn polynomial(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient > 0.0) || !(exponent >= 2.0) {
            return Err(Error::Argument(format!(
                "polynomial potential needs coefficient > 0 and exponent >= 2, got {coefficient}, {exponent}"
            )));
        }
        let c = coefficient;
        Ok(SmoothPotentialSpec {
            kind: SmoothKind::Polynomial {
                coefficient,
                exponent,
            },
            q0: exponent,
            a0: (c * exponent * exponent).max(1.0 / c).max(1.0),
            a1: c * exponent,
            a2: 0.0,
        })
    }

    pub fn custom(field: Arc<dyn ScalarField>, q0: f64, a0: f64, a1: f64, a2: f64) -> Self {
        SmoothPotentialSpec {
            kind: SmoothKind::Custom(field),
            q0,
            a0,
            a1,
            a2,
        }
    }

    fn radial(&self, r: f64) -> Option<Radial> {
        match &self.kind {
            SmoothKind::Harmonic => Some(Radial {
                value: 0.5 * r * r,
                d1: r,
                d2: 1.0,
            }),
            SmoothKind::Polynomial {
                coefficient: c,
                exponent: p,
            } => Some(Radial {
                value: c * r.powf(*p),
                d1: c * p * r.powf(p - 1.0),
                d2: c * p * (p - 1.0) * r.powf(p - 2.0),
            }),
            SmoothKind::Custom(_) => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SmoothKind::Custom(f) => f.value(x),
            _ => self.radial(norm(x)).map(|p| p.value).unwrap_or(0.0),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SmoothKind::Harmonic => out.copy_from_slice(x),
            SmoothKind::Custom(f) => f.gradient(x, out),
            SmoothKind::Polynomial { .. } => {
                let r = norm(x);
                if r == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    radial_gradient(self.radial(r).unwrap(), x, r, out);
                }
            }
        }
    }

    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match &self.kind {
            SmoothKind::Harmonic => {
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = if i == j { 1.0 } else { 0.0 };
                    }
                }
            }
            SmoothKind::Custom(f) => f.hessian(x, out),
            SmoothKind::Polynomial { .. } => {
                let r = norm(x).max(1e-300);
                radial_hessian(self.radial(r).unwrap(), x, r, out);
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SmoothKind::Harmonic => "harmonic",
            SmoothKind::Polynomial { .. } => "polynomial",
            SmoothKind::Custom(_) => "custom",
        }
    }
}

#[derive(Clone)]
pub enum SingularKind {
    /// No singular term.
    None,
    /// `G(x) = -alpha log|x|`
    CoulombLog { alpha: f64 },
    /// `G(x) = strength / |x|^exponent`
    Riesz { strength: f64, exponent: f64 },
    /// `G(x) = 4 epsilon [(sigma/|x|)^12 - (sigma/|x|)^6]`
    LennardJones { epsilon: f64, sigma: f64 },
    Custom(Arc<dyn ScalarField>),
}

impl fmt::Debug for SingularKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SingularKind::None => write!(f, "None"),
            SingularKind::CoulombLog { alpha } => write!(f, "CoulombLog(alpha = {alpha})"),
            SingularKind::Riesz { strength, exponent } => {
                write!(f, "Riesz({strength} / |x|^{exponent})")
            }
            SingularKind::LennardJones { epsilon, sigma } => {
                write!(f, "LennardJones(epsilon = {epsilon}, sigma = {sigma})")
            }
            SingularKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Singular repulsive potential `G` with its structural constants.
#[derive(Debug, Clone)]
pub struct SingularPotentialSpec {
    pub kind: SingularKind,
    pub beta1: f64,
    pub beta2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

impl SingularPotentialSpec {
    pub fn none() -> Self {
        SingularPotentialSpec {
            kind: SingularKind::None,
            beta1: 1.0,
            beta2: 0.0,
            a3: 0.0,
            a4: 0.0,
            a5: 0.0,
        }
    }

    pub fn coulomb_log(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Argument(format!("coulomb_alpha must be > 0, got {alpha}")));
        }
        Ok(SingularPotentialSpec {
            kind: SingularKind::CoulombLog { alpha },
            beta1: 1.0,
            beta2: 0.0,
            a3: alpha,
            a4: alpha,
            a5: 0.0,
        })
    }

    pub fn riesz(strength: f64, exponent: f64) -> Result<Self> {
        if !(strength > 0.0 && exponent > 0.0) {
            return Err(Error::Argument("riesz potential needs strength, exponent > 0".into()));
        }
        let (c, q) = (strength, exponent);
        Ok(SingularPotentialSpec {
            kind: SingularKind::Riesz { strength, exponent },
            beta1: q + 1.0,
            beta2: 0.0,
            a3: c * (q + 1.0) * (q + 2.0),
            a4: c * q,
            a5: 0.0,
        })
    }

    pub fn lennard_jones(epsilon: f64, sigma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && sigma > 0.0) {
            return Err(Error::Argument("lennard-jones needs epsilon, sigma > 0".into()));
        }
        let s6 = sigma.powi(6);
        Ok(SingularPotentialSpec {
            kind: SingularKind::LennardJones { epsilon, sigma },
            beta1: 13.0,
            beta2: 7.0,
            a3: 4.0 * epsilon * 156.0 * s6 * s6,
            a4: 48.0 * epsilon * s6 * s6,
            a5: 24.0 * epsilon * s6,
        })
    }

    pub fn custom(field: Arc<dyn ScalarField>, beta1: f64, beta2: f64, a3: f64, a4: f64, a5: f64) -> Self {
        SingularPotentialSpec {
            kind: SingularKind::Custom(field),
            beta1,
            beta2,
            a3,
            a4,
            a5,
        }
    }

    pub fn is_present(&self) -> bool {
        !matches!(self.kind, SingularKind::None)
    }

    pub fn coulomb_alpha(&self) -> Option<f64> {
        match self.kind {
            SingularKind::CoulombLog { alpha } => Some(alpha),
            _ => None,
        }
    }

    fn radial(&self, r: f64) -> Option<Radial> {
        match self.kind {
            SingularKind::None => Some(Radial {
                value: 0.0,
                d1: 0.0,
                d2: 0.0,
            }),
            SingularKind::CoulombLog { alpha } => Some(Radial {
                value: -alpha * r.ln(),
                d1: -alpha / r,
                d2: alpha / (r * r),
            }),
            SingularKind::Riesz { strength, exponent } => Some(Radial {
                value: strength * r.powf(-exponent),
                d1: -strength * exponent * r.powf(-exponent - 1.0),
                d2: strength * exponent * (exponent + 1.0) * r.powf(-exponent - 2.0),
            }),
            SingularKind::LennardJones { epsilon, sigma } => {
                let sr6 = (sigma / r).powi(6);
                let sr12 = sr6 * sr6;
                Some(Radial {
                    value: 4.0 * epsilon * (sr12 - sr6),
                    d1: 4.0 * epsilon * (-12.0 * sr12 + 6.0 * sr6) / r,
                    d2: 4.0 * epsilon * (156.0 * sr12 - 42.0 * sr6) / (r * r),
                })
            }
            SingularKind::Custom(_) => None,
        }
    }

    /// `G(x)`; `+inf` at the origin.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SingularKind::None => 0.0,
            SingularKind::Custom(f) => f.value(x),
            _ => {
                let r = norm(x);
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    self.radial(r).unwrap().value
                }
            }
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SingularKind::None => out.iter_mut().for_each(|o| *o = 0.0),
            SingularKind::CoulombLog { alpha } => {
                let s = -alpha / dot(x, x);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi;
                }
            }
            SingularKind::Custom(f) => f.gradient(x, out),
            _ => {
                let r = norm(x);
                radial_gradient(self.radial(r).unwrap(), x, r, out);
            }
        }
    }

    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            SingularKind::None => out.iter_mut().for_each(|o| *o = 0.0),
            SingularKind::Custom(f) => f.hessian(x, out),
            _ => {
                let r = norm(x);
                radial_hessian(self.radial(r).unwrap(), x, r, out);
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SingularKind::None => "none",
            SingularKind::CoulombLog { .. } => "coulomb-log",
            SingularKind::Riesz { .. } => "riesz",
            SingularKind::LennardJones { .. } => "lennard-jones",
            SingularKind::Custom(_) => "custom",
        }
    }
}

#[derive(Clone)]
pub enum PilotKind {
    /// `H(x) = J1(|x|) x/|x|`
    BesselJ1,
    Zero,
    Custom(Arc<dyn VectorField>),
}

impl fmt::Debug for PilotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PilotKind::BesselJ1 => write!(f, "BesselJ1"),
            PilotKind::Zero => write!(f, "Zero"),
            PilotKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Pilot-wave force `H` with its growth constants.
#[derive(Debug, Clone)]
pub struct PilotForceSpec {
    pub kind: PilotKind,
    pub p1: f64,
    pub a_h: f64,
}

impl PilotForceSpec {
    pub fn bessel_j1() -> Self {
        PilotForceSpec {
            kind: PilotKind::BesselJ1,
            p1: 0.0,
            a_h: 1.0,
        }
    }

    pub fn zero() -> Self {
        PilotForceSpec {
            kind: PilotKind::Zero,
            p1: 0.0,
            a_h: 0.0,
        }
    }

    pub fn custom(field: Arc<dyn VectorField>, p1: f64, a_h: f64) -> Self {
        PilotForceSpec {
            kind: PilotKind::Custom(field),
            p1,
            a_h,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PilotKind::Zero)
    }

    pub fn value_into(&self, r: &[f64], out: &mut [f64]) {
        match &self.kind {
            PilotKind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            PilotKind::BesselJ1 => {
                let s = bessel::j1_over_r(norm(r));
                for (o, ri) in out.iter_mut().zip(r) {
                    *o = s * ri;
                }
            }
            PilotKind::Custom(f) => f.value(r, out),
        }
    }

    pub fn jacobian_into(&self, r: &[f64], out: &mut [f64]) {
        let d = r.len();
        match &self.kind {
            PilotKind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            PilotKind::BesselJ1 => {
                let rn = norm(r);
                let trans = bessel::j1_over_r(rn);
                let rad = bessel::j1_prime(rn);
                for i in 0..d {
                    for j in 0..d {
                        let proj = if rn == 0.0 { 0.0 } else { r[i] * r[j] / (rn * rn) };
                        let id = if i == j { 1.0 } else { 0.0 };
                        out[i * d + j] = rad * proj + trans * (id - proj);
                    }
                }
            }
            PilotKind::Custom(f) => f.jacobian(r, out),
        }
    }

    /// Upper bound on `sup |H|` used for truncation-error estimates.
    pub(crate) fn sup_bound(&self, scale: f64) -> f64 {
        match self.kind {
            PilotKind::Zero => 0.0,
            PilotKind::BesselJ1 => bessel::J1_MAX,
            PilotKind::Custom(_) => self.a_h * (scale.powf(self.p1) + 1.0),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PilotKind::BesselJ1 => "bessel-j1",
            PilotKind::Zero => "zero",
            PilotKind::Custom(_) => "custom",
        }
    }
}

/// The full walker model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dim: usize,
    pub mass: f64,
    pub sigma: f64,
    pub kernel: KernelSpec,
    pub smooth: SmoothPotentialSpec,
    pub singular: SingularPotentialSpec,
    pub pilot: PilotForceSpec,
    pub x_min: f64,
    /// Free parameter in the growth condition on `q0`.
    pub eps1: f64,
}

impl ModelSpec {
    pub fn new(
        dim: usize,
        mass: f64,
        sigma: f64,
        kernel: KernelSpec,
        smooth: SmoothPotentialSpec,
        singular: SingularPotentialSpec,
        pilot: PilotForceSpec,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("dimension must be >= 1".into()));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Argument(format!("mass must be > 0, got {mass}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Argument(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(ModelSpec {
            dim,
            mass,
            sigma,
            kernel,
            smooth,
            singular,
            pilot,
            x_min: DEFAULT_X_MIN,
            eps1: 1.0,
        })
    }

    /// Reference walker: `m = sigma = 1`, `U = |x|^2/2`, `G = -alpha log|x|`,
    /// `H = J1(|x|) x/|x|`, `K = e^{-t}`, in the plane.
    pub fn reference(coulomb_alpha: f64) -> Result<Self> {
        ModelSpec::new(
            2,
            1.0,
            1.0,
            KernelSpec::unit_exponential(),
            SmoothPotentialSpec::harmonic(),
            SingularPotentialSpec::coulomb_log(coulomb_alpha)?,
            PilotForceSpec::bessel_j1(),
        )
    }

    /// Linear test case: harmonic `U`, no singular term, no pilot force.
    pub fn harmonic_oscillator(dim: usize, sigma: f64) -> Result<Self> {
        ModelSpec::new(
            dim,
            1.0,
            sigma,
            KernelSpec::unit_exponential(),
            SmoothPotentialSpec::harmonic(),
            SingularPotentialSpec::none(),
            PilotForceSpec::zero(),
        )
    }

    pub fn with_x_min(mut self, x_min: f64) -> Self {
        self.x_min = x_min;
        self
    }

    /// Position domain: `(0, inf)` for `d = 1`, `R^d \ {0}` otherwise.
    /// Without a singular term the whole space is admissible.
    pub fn is_admissible(&self, x: &[f64]) -> bool {
        if x.len() != self.dim || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        if !self.singular.is_present() {
            return true;
        }
        if self.dim == 1 {
            x[0] > 0.0
        } else {
            norm(x) > 0.0
        }
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Argument(format!(
                "vector has dimension {}, model has {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn potential_u(&self, x: &[f64]) -> f64 {
        self.smooth.value(x)
    }

    pub fn potential_g(&self, x: &[f64]) -> f64 {
        self.singular.value(x)
    }

    /// Returns `grad U(x)` and `grad G(x)`.
    pub fn eval_forces(&self, x: &[f64]) -> Result<Forces> {
        self.check_dim(x)?;
        let r = norm(x);
        if self.singular.is_present() && r == 0.0 {
            return Err(Error::Singularity { x: x.to_vec() });
        }
        let mut grad_u = vec![0.0; self.dim];
        let mut grad_g = vec![0.0; self.dim];
        self.smooth.gradient_into(x, &mut grad_u);
        self.singular.gradient_into(x, &mut grad_g);
        Ok(Forces {
            grad_u,
            grad_g,
            near_singularity: self.singular.is_present() && r < self.x_min,
        })
    }

    /// `H(r)`; the removable singularity at `r = 0` evaluates to zero.
    pub fn eval_pilot(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        self.pilot.value_into(r, &mut out);
        out
    }

    pub fn validate_assumptions(&self, plan: &SamplingPlan) -> ValidationReport {
        validate_model(self, plan)
    }
}

/// Gradients of the two potentials at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Forces {
    pub grad_u: Vec<f64>,
    pub grad_g: Vec<f64>,
    /// `|x|` is below the configured `x_min`.
    pub near_singularity: bool,
}

pub fn eval_forces(model: &ModelSpec, x: &[f64]) -> Result<Forces> {
    model.eval_forces(x)
}

pub fn eval_pilot(model: &ModelSpec, r: &[f64]) -> Vec<f64> {
    model.eval_pilot(r)
}

// ---------------------------------------------------------------------------
// Validation

/// A point where a sampled condition fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub point: Vec<f64>,
    pub radius: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one sampled condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub condition: String,
    pub passed: bool,
    /// Advisory findings do not count towards the overall verdict.
    pub advisory: bool,
    pub detail: String,
    pub violations: Vec<Violation>,
}

impl Verdict {
    fn from_violations(condition: &str, detail: String, violations: Vec<Violation>) -> Self {
        Verdict {
            condition: condition.to_string(),
            passed: violations.is_empty(),
            advisory: false,
            detail,
            violations,
        }
    }

    fn simple(condition: &str, passed: bool, detail: String) -> Self {
        Verdict {
            condition: condition.to_string(),
            passed,
            advisory: false,
            detail,
            violations: Vec::new(),
        }
    }

    pub fn min_violation_radius(&self) -> Option<f64> {
        self.violations
            .iter()
            .map(|v| v.radius)
            .min_by(|a, b| a.total_cmp(b))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub verdicts: Vec<Verdict>,
    /// Sampled constants estimated along the way (name, value).
    pub estimates: Vec<(String, f64)>,
}

impl ValidationReport {
    fn push(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    /// True iff every non-advisory verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed || v.advisory)
    }

    pub fn verdict(&self, condition: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.condition == condition)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Sample points for the assumption validators: log-spaced radii and random
/// directions per radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
    pub directions: usize,
    pub seed: u64,
    /// Steepness constant; `None` reports the supremum ratio instead.
    pub a6: Option<f64>,
    pub p2: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            r_min: 1e-4,
            r_max: 1e2,
            radii: 97,
            directions: 64,
            seed: 0,
            a6: Some(1e-3),
            p2: 1.5,
        }
    }
}

impl SamplingPlan {
    pub fn radii(&self) -> Vec<f64> {
        let n = self.radii.max(2);
        let (lo, hi) = (self.r_min.ln(), self.r_max.ln());
        (0..n)
            .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    /// Sample points `r * u` with `u` uniform on the sphere. In one dimension
    /// only the positive half-line is sampled.
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        for r in self.radii() {
            let dirs = if dim == 1 { 1 } else { self.directions };
            for _ in 0..dirs {
                let u = if dim == 1 {
                    vec![1.0]
                } else {
                    random_direction(&mut rng, dim)
                };
                out.push(u.iter().map(|c| c * r).collect());
            }
        }
        out
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|c| c / n).collect();
        }
    }
}

/// Admissible `p2` interval `(max{2p1, p1+1}, 2 max{1, p1+eps1})`.
pub fn p2_window(p1: f64, eps1: f64) -> (f64, f64) {
    ((2.0 * p1).max(p1 + 1.0), 2.0 * 1f64.max(p1 + eps1))
}

fn violation(x: &[f64], lhs: f64, rhs: f64) -> Violation {
    Violation {
        point: x.to_vec(),
        radius: norm(x),
        lhs,
        rhs,
    }
}

fn validate_model(model: &ModelSpec, plan: &SamplingPlan) -> ValidationReport {
    let d = model.dim;
    let points = plan.points(d);
    let mut report = ValidationReport::default();

    // kernel decay with the declared rate
    let delta = model.kernel.delta();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5 / delta).collect();
    if let Ok(k) = validate_kernel(&model.kernel, &grid, delta) {
        report.verdicts.extend(k.verdicts);
    }

    // pilot force growth
    {
        let mut h = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        let mut violations = Vec::new();
        let mut worst: f64 = 0.0;
        let origin = vec![0.0; d];
        for x in std::iter::once(&origin).chain(points.iter()) {
            model.pilot.value_into(x, &mut h);
            model.pilot.jacobian_into(x, &mut jac);
            let lhs = norm(&h).max(spectral_norm(&jac, d));
            let rhs = model.pilot.a_h * (norm(x).powf(model.pilot.p1) + 1.0);
            worst = worst.max(lhs / (norm(x).powf(model.pilot.p1) + 1.0));
            if lhs > rhs * (1.0 + 1e-12) {
                violations.push(violation(x, lhs, rhs));
            }
        }
        report.estimates.push(("a_h_required".into(), worst));
        report.push(Verdict::from_violations(
            "pilot_growth",
            format!(
                "max(|H|, |grad H|) <= {}(|x|^{} + 1); sampled requirement a_H >= {worst:.6}",
                model.pilot.a_h, model.pilot.p1
            ),
            violations,
        ));
    }

    // smooth potential
    let u = &model.smooth;
    {
        let mut min_u = f64::INFINITY;
        let mut a0: f64 = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut coercive = Vec::new();
        for x in &points {
            let r = norm(x);
            let val = u.value(x);
            u.gradient_into(x, &mut grad);
            u.hessian_into(x, &mut hess);
            min_u = min_u.min(val);
            let rq = r.powf(u.q0);
            a0 = a0
                .max(rq / (val.abs() + 1.0))
                .max(val.abs() / (rq + 1.0))
                .max(norm(&grad) / (r.powf(u.q0 - 1.0) + 1.0))
                .max(sym_spectral_norm(&hess, d) / (r.powf(u.q0 - 2.0) + 1.0));
            let lhs = dot(x, &grad);
            let rhs = u.a1 * rq - u.a2;
            if lhs < rhs - 1e-9 * (1.0 + rhs.abs()) {
                coercive.push(violation(x, lhs, rhs));
            }
        }
        report.estimates.push(("a0".into(), a0));
        report.push(Verdict {
            condition: "smooth_lower_bound".into(),
            passed: min_u >= 1.0,
            advisory: true,
            detail: format!(
                "U >= 1 expected; sampled minimum {min_u:.6e} (reported as a warning only)"
            ),
            violations: Vec::new(),
        });
        report.push(Verdict::simple(
            "smooth_growth",
            a0.is_finite() && a0 <= 1e12,
            format!("growth, gradient and Hessian bounds hold with sampled a0 = {a0:.6}"),
        ));
        report.push(Verdict::from_violations(
            "smooth_coercivity",
            format!("<x, grad U> >= {} |x|^{} - {}", u.a1, u.q0, u.a2),
            coercive,
        ));
        let need = 2.0 * 1f64.max(model.pilot.p1 + model.eps1);
        report.push(Verdict::simple(
            "q0_condition",
            u.q0 >= need,
            format!(
                "q0 = {} must be >= 2 max(1, p1 + eps1) = {need} (eps1 = {})",
                u.q0, model.eps1
            ),
        ));
    }

    // p2 window
    {
        let (lo, hi) = p2_window(model.pilot.p1, model.eps1);
        report.estimates.push(("p2_window_low".into(), lo));
        report.estimates.push(("p2_window_high".into(), hi));
        report.push(Verdict::simple(
            "p2_window",
            lo < hi && plan.p2 > lo && plan.p2 < hi,
            format!("p2 = {} must lie in ({lo}, {hi})", plan.p2),
        ));
    }

    let g = &model.singular;
    if !g.is_present() {
        report.push(Verdict::simple(
            "singular_terms",
            true,
            "no singular potential configured".into(),
        ));
        return report;
    }

    // part 1: blow-up and growth
    {
        let dir = plan.points(d)[0].clone();
        let unit: Vec<f64> = dir.iter().map(|c| c / norm(&dir)).collect();
        let seq: Vec<f64> = (1..=8)
            .map(|k| {
                let r = 10f64.powi(-k);
                g.value(&unit.iter().map(|c| c * r).collect::<Vec<_>>())
            })
            .collect();
        let increasing = seq.windows(2).all(|w| w[1] > w[0]);
        report.push(Verdict::simple(
            "singular_blowup",
            increasing && seq[7] > seq[0],
            format!(
                "G on radii 1e-1..1e-8: {:.4} -> {:.4}",
                seq[0], seq[7]
            ),
        ));
        let mut a3: f64 = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for x in &points {
            let r = norm(x);
            g.gradient_into(x, &mut grad);
            g.hessian_into(x, &mut hess);
            a3 = a3
                .max(g.value(x).abs() / (1.0 + r + r.powf(-g.beta1)))
                .max(norm(&grad) / (1.0 + r.powf(-g.beta1)))
                .max(sym_spectral_norm(&hess, d) / (1.0 + r.powf(-g.beta1 - 1.0)));
        }
        report.estimates.push(("a3".into(), a3));
        report.push(Verdict::simple(
            "singular_growth",
            a3.is_finite() && a3 <= 1e12,
            format!("growth bounds with beta1 = {} hold with sampled a3 = {a3:.6}", g.beta1),
        ));
    }

    // part 2: leading singular behaviour of grad G
    {
        let mut grad = vec![0.0; d];
        let mut violations = Vec::new();
        for x in &points {
            let r = norm(x);
            g.gradient_into(x, &mut grad);
            let s = g.a4 / r.powf(g.beta1 + 1.0);
            let lhs = grad
                .iter()
                .zip(x)
                .map(|(gi, xi)| (gi + s * xi).powi(2))
                .sum::<f64>()
                .sqrt();
            let rhs = g.a5 / r.powf(g.beta2) + g.a5;
            let scale = norm(&grad).max(1.0);
            if lhs > rhs + 1e-10 * scale {
                violations.push(violation(x, lhs, rhs));
            }
        }
        report.push(Verdict::from_violations(
            "singular_gradient_structure",
            format!(
                "|grad G + {} x/|x|^{}| <= {}/|x|^{} + {}",
                g.a4,
                g.beta1 + 1.0,
                g.a5,
                g.beta2,
                g.a5
            ),
            violations,
        ));
    }

    // part 3: steepness 1 + e^G/|x|^beta1 >= a6 |hess G|^2, compared in log space
    {
        let mut hess = vec![0.0; d * d];
        let mut violations = Vec::new();
        let mut sup_log_ratio = f64::NEG_INFINITY;
        for x in &points {
            let r = norm(x);
            g.hessian_into(x, &mut hess);
            let h2 = sym_spectral_norm(&hess, d).powi(2);
            let e = g.value(x) - g.beta1 * r.ln();
            let log_lhs = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            let log_ratio = h2.ln() - log_lhs;
            sup_log_ratio = sup_log_ratio.max(log_ratio);
            if let Some(a6) = plan.a6 {
                if a6.ln() + h2.ln() > log_lhs + 1e-12 {
                    violations.push(violation(x, log_lhs.exp(), a6 * h2));
                }
            }
        }
        let sup_ratio = sup_log_ratio.exp();
        report.estimates.push(("steepness_sup_ratio".into(), sup_ratio));
        let hint = match g.kind {
            SingularKind::CoulombLog { .. } if d == 2 => {
                "; for the coulomb-log potential in d = 2 this requires coulomb_alpha >= 3"
            }
            _ => "",
        };
        let verdict = match plan.a6 {
            Some(a6) => {
                let mut v = Verdict::from_violations(
                    "singular_steepness",
                    String::new(),
                    violations,
                );
                v.detail = if v.passed {
                    format!("1 + e^G/|x|^{} >= {a6} |hess G|^2 on all samples", g.beta1)
                } else {
                    format!(
                        "1 + e^G/|x|^{} >= {a6} |hess G|^2 violated at {} samples, smallest radius {:.3e}{hint}",
                        g.beta1,
                        v.violations.len(),
                        v.min_violation_radius().unwrap_or(f64::NAN)
                    )
                };
                v
            }
            None => Verdict::simple(
                "singular_steepness",
                sup_ratio.is_finite() && sup_ratio <= 1e12,
                format!(
                    "sup |hess G|^2 / (1 + e^G/|x|^{}) = {sup_ratio:.6e} (a6 = 1/sup){hint}",
                    g.beta1
                ),
            ),
        };
        report.push(verdict);
    }

    report
}

pub fn validate_assumptions(model: &ModelSpec, plan: &SamplingPlan) -> ValidationReport {
    model.validate_assumptions(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kernel_values() {
        let k = KernelSpec::unit_exponential();
        assert_eq!(eval_kernel(&k, 0.0).unwrap(), 1.0);
        assert!(approx(eval_kernel(&k, 1.0).unwrap(), 1.0 / E, 1e-15));
        let k2 = KernelSpec::exponential(2.0, 0.5).unwrap();
        assert!(approx(eval_kernel(&k2, 2.0).unwrap(), 2.0 / E, 1e-15));
        assert!(matches!(eval_kernel(&k, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_validation_fixtures() {
        let k = KernelSpec::unit_exponential();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        assert!(validate_kernel(&k, &grid, 1.0).unwrap().passed());
        let bad = validate_kernel(&k, &grid, 1.5).unwrap();
        assert_eq!(bad.verdicts[0].violations.len(), grid.len());
        assert!(matches!(validate_kernel(&k, &[], 1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn algebraic_kernel_fails_for_large_times() {
        let delta = 0.5;
        let times: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|t| 1.0 / (1.0 + t).powi(2)).collect();
        let k = KernelSpec::tabulated(times, values, delta).unwrap();
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let report = validate_kernel(&k, &grid, delta).unwrap();
        let v = &report.verdicts[0];
        assert!(!v.passed);
        // K'/K = -2/(1+t) exceeds -delta once t > 2/delta - 1 = 3
        assert!(v.violations.iter().all(|p| p.radius > 2.9));
        assert!(v.violations.iter().any(|p| p.radius >= 19.5));
    }

    #[test]
    fn forces_of_reference_model() {
        let m = ModelSpec::reference(1.0).unwrap();
        let f = m.eval_forces(&[1.0, 0.0]).unwrap();
        assert_eq!(f.grad_u, vec![1.0, 0.0]);
        assert!(approx(f.grad_g[0], -1.0, 1e-15) && f.grad_g[1] == 0.0);
        assert!(approx(norm(&f.grad_u), norm(&f.grad_g), 1e-15));
        let m5 = ModelSpec::reference(5.0).unwrap();
        let f = m5.eval_forces(&[2.0, 0.0]).unwrap();
        assert_eq!(f.grad_u, vec![2.0, 0.0]);
        // -5 (2,0) / 4
        assert!(approx(f.grad_g[0], -2.5, 1e-15));
        assert!(matches!(m.eval_forces(&[0.0, 0.0]), Err(Error::Singularity { .. })));
        assert!(m.eval_forces(&[1e-9, 0.0]).unwrap().near_singularity);
    }

    #[test]
    fn pilot_force_values() {
        let m = ModelSpec::reference(1.0).unwrap();
        assert_eq!(m.eval_pilot(&[0.0, 0.0]), vec![0.0, 0.0]);
        let h = m.eval_pilot(&[PI, 0.0]);
        assert!(approx(h[0], 0.284_615_343_179_752_7, 1e-11));
        let hm = m.eval_pilot(&[-PI, 0.0]);
        assert!(approx(hm[0], -h[0], 1e-15));
    }

    #[test]
    fn steepness_fixtures() {
        let plan = SamplingPlan::default();
        let r3 = ModelSpec::reference(3.0).unwrap().validate_assumptions(&plan);
        assert!(r3.verdict("singular_steepness").unwrap().passed);
        let r1 = ModelSpec::reference(1.0).unwrap().validate_assumptions(&plan);
        let v = r1.verdict("singular_steepness").unwrap();
        assert!(!v.passed);
        assert!(v.min_violation_radius().unwrap() < 0.1);
        assert!(v.detail.contains("coulomb_alpha >= 3"));
    }

    #[test]
    fn pilot_growth_and_windows() {
        let plan = SamplingPlan::default();
        let r = ModelSpec::reference(3.0).unwrap().validate_assumptions(&plan);
        assert!(r.verdict("pilot_growth").unwrap().passed);
        assert!(r.verdict("p2_window").unwrap().passed);
        assert!(r.verdict("q0_condition").unwrap().passed);
        assert!(r.verdict("smooth_coercivity").unwrap().passed);
        assert!(r.verdict("singular_gradient_structure").unwrap().passed);
        assert!(r.verdict("singular_blowup").unwrap().passed);
        // U = |x|^2/2 drops below 1: advisory only
        let lb = r.verdict("smooth_lower_bound").unwrap();
        assert!(!lb.passed && lb.advisory);
        assert!(r.passed());
        assert_eq!(p2_window(0.0, 1.0), (1.0, 2.0));
    }

    #[test]
    fn supremum_mode_reports_ratio() {
        let plan = SamplingPlan {
            a6: None,
            ..SamplingPlan::default()
        };
        let r = ModelSpec::reference(3.0).unwrap().validate_assumptions(&plan);
        let sup = r.estimate("steepness_sup_ratio").unwrap();
        // |hess G|^2 / (1 + r^-4) -> alpha^2 = 9 as r -> 0
        assert!(sup <= 9.0 + 1e-9 && sup > 8.9, "{sup}");
    }

    #[test]
    fn other_singular_kinds_satisfy_structure() {
        let plan = SamplingPlan {
            a6: None,
            ..SamplingPlan::default()
        };
        for g in [
            SingularPotentialSpec::riesz(1.0, 1.0).unwrap(),
            SingularPotentialSpec::lennard_jones(1.0, 1.0).unwrap(),
        ] {
            let m = ModelSpec::new(
                3,
                1.0,
                1.0,
                KernelSpec::unit_exponential(),
                SmoothPotentialSpec::harmonic(),
                g,
                PilotForceSpec::bessel_j1(),
            )
            .unwrap();
            let r = m.validate_assumptions(&plan);
            for name in ["singular_gradient_structure", "singular_blowup", "singular_steepness"] {
                assert!(r.verdict(name).unwrap().passed, "{name}: {:?}", r.verdict(name));
            }
        }
    }

    struct Quartic;
    impl ScalarField for Quartic {
        fn value(&self, x: &[f64]) -> f64 {
            dot(x, x).powi(2)
        }
    }

    #[test]
    fn custom_field_uses_finite_differences() {
        let u = SmoothPotentialSpec::custom(Arc::new(Quartic), 4.0, 16.0, 4.0, 0.0);
        let x = [0.7, -1.2];
        let mut g = [0.0; 2];
        u.gradient_into(&x, &mut g);
        let s = 4.0 * dot(&x, &x);
        assert!(approx(g[0], s * x[0], 1e-7) && approx(g[1], s * x[1], 1e-7));
        let mut h = [0.0; 4];
        u.hessian_into(&x, &mut h);
        let expect01 = 8.0 * x[0] * x[1];
        assert!(approx(h[1], expect01, 1e-4), "{} vs {expect01}", h[1]);
    }
}
