//! Lyapunov functionals `Phi` and `Psi`, the choice of `kappa`, and Monte
//! Carlo diagnostics of their exponential moments.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrator::{Ensemble, Observable};
use crate::linalg::{dot, norm};
use crate::models::{p2_window, ModelSpec, SamplingPlan};
use crate::state::{weighted_norm, HistoryBuffer, WalkerState};

/// Largest argument of `exp` that stays finite.
pub const EXP_OVERFLOW: f64 = 709.78;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovParams {
    pub kappa: f64,
    pub p2: f64,
    pub a1: f64,
    /// Sampled lower constant of the sandwich around `Phi - G`.
    pub c_kappa: f64,
    /// Sampled upper constant of the sandwich around `Phi - G`.
    pub big_c_kappa: f64,
    pub warnings: Vec<String>,
}

impl LyapunovParams {
    /// Parameters with the sandwich estimate skipped.
    pub fn new(kappa: f64, p2: f64, a1: f64) -> Self {
        LyapunovParams {
            kappa,
            p2,
            a1,
            c_kappa: f64::NAN,
            big_c_kappa: f64::NAN,
            warnings: Vec::new(),
        }
    }
}

/// Upper limit `min{1/(2(1 + 1/a1)), a1/2}` on `kappa`.
pub fn kappa_bound(a1: f64) -> f64 {
    (1.0 / (2.0 * (1.0 + 1.0 / a1))).min(a1 / 2.0)
}

/// `kappa = safety * bound`, plus a sampled check of
/// `c (U + |v|^2/2) <= Phi - G <= C (U + |v|^2/2)`.
pub fn choose_kappa(model: &ModelSpec, safety: f64, p2: f64) -> Result<LyapunovParams> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Argument(format!("safety must lie in (0, 1), got {safety}")));
    }
    let a1 = model.smooth.a1;
    if !(a1 > 0.0) {
        return Err(Error::Argument(format!("a1 must be > 0, got {a1}")));
    }
    let (lo, hi) = p2_window(model.pilot.p1, model.eps1);
    if !(p2 > lo && p2 < hi) {
        return Err(Error::Argument(format!("p2 = {p2} outside the admissible window ({lo}, {hi})")));
    }
    let kappa = safety * kappa_bound(a1);
    let mut params = LyapunovParams::new(kappa, p2, a1);
    sandwich_estimate(model, &mut params);
    Ok(params)
}

fn sandwich_estimate(model: &ModelSpec, params: &mut LyapunovParams) {
    let plan = SamplingPlan {
        radii: 25,
        directions: 16,
        ..SamplingPlan::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x5eed);
    let d = model.dim;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut worst: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for x in plan.points(d) {
        for speed in [0.0, 0.1, 1.0, 10.0] {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0) * speed).collect();
            let base = model.potential_u(&x) + 0.5 * dot(&v, &v);
            if base == 0.0 {
                continue;
            }
            let r = norm(&x);
            let cross = params.kappa * dot(&x, &v) - dot(&x, &v) / r;
            let ratio = (base + cross) / base;
            if ratio < lo {
                lo = ratio;
                worst = Some((x.clone(), v.clone(), ratio));
            }
            hi = hi.max(ratio);
        }
    }
    params.c_kappa = lo;
    params.big_c_kappa = hi;
    if lo <= 0.0 {
        let (x, v, ratio) = worst.unwrap();
        params.warnings.push(format!(
            "sandwich lower bound fails: (Phi - G)/(U + |v|^2/2) = {ratio:.4} at x = {x:?}, v = {v:?}"
        ));
    }
}

/// `Phi = U + G + |v|^2/2 + kappa <x, v> - <x, v>/|x|`.
pub fn phi(state: &WalkerState, model: &ModelSpec, params: &LyapunovParams) -> Result<f64> {
    model.check_dim(&state.x)?;
    let r = norm(&state.x);
    if r == 0.0 {
        return Err(Error::Singularity { x: state.x.clone() });
    }
    let xv = dot(&state.x, &state.v);
    Ok(model.potential_u(&state.x)
        + model.potential_g(&state.x)
        + 0.5 * dot(&state.v, &state.v)
        + params.kappa * xv
        - xv / r)
}

/// `Psi = Phi + ||eta||_{p2}^{p2}`.
pub fn psi(
    state: &WalkerState,
    buffer: &HistoryBuffer,
    model: &ModelSpec,
    params: &LyapunovParams,
) -> Result<f64> {
    let n = weighted_norm(buffer, &model.kernel, params.p2)?;
    Ok(phi(state, model, params)? + n.value.powf(params.p2))
}

/// One time point of the exponential-moment series.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentPoint {
    pub t: f64,
    /// `log E exp(Psi)`
    pub log_mean: f64,
    /// Jackknife standard error of `log_mean`.
    pub log_stderr: f64,
    /// `E exp(Psi)`, `+inf` when it overflows.
    pub mean: f64,
    /// Jackknife standard error of `mean`.
    pub stderr: f64,
    /// Fraction of members with `Psi` beyond the `exp` range.
    pub overflow_fraction: f64,
}

/// Fitted envelope `C1 exp(-c1 t) exp(Psi(0)) + C1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFit {
    pub c1_prefactor: f64,
    pub c1_rate: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentSeries {
    pub points: Vec<ExpMomentPoint>,
    pub fit: Option<EnvelopeFit>,
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + (s / values.len() as f64).ln()
}

/// Per-time `log E exp(Psi)` with jackknife errors, from an ensemble that
/// recorded a `Psi` observable. `times` are matched to the nearest recorded
/// time.
pub fn exp_moment_diagnostic(
    ensemble: &Ensemble,
    params: &LyapunovParams,
    times: &[f64],
) -> Result<ExpMomentSeries> {
    let idx = ensemble
        .observables
        .iter()
        .position(|o| matches!(o, Observable::Psi(p) if p.kappa == params.kappa && p.p2 == params.p2))
        .ok_or_else(|| {
            Error::Argument("ensemble did not record Psi with these parameters".into())
        })?;
    let members: Vec<&Vec<Vec<f64>>> = ensemble.member_series.iter().flatten().collect();
    let n = members.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} usable ensemble members")));
    }
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let k = ensemble.time_index(t);
        let values: Vec<f64> = members.iter().map(|m| m[idx][k]).collect();
        let log_mean = log_mean_exp(&values);
        // leave-one-out estimates
        let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let terms: Vec<f64> = values.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = terms.iter().sum();
        let loo: Vec<f64> = terms
            .iter()
            .map(|e| m + ((total - e).max(f64::MIN_POSITIVE) / (n - 1) as f64).ln())
            .collect();
        let loo_mean = loo.iter().sum::<f64>() / n as f64;
        let var = loo.iter().map(|l| (l - loo_mean).powi(2)).sum::<f64>() * (n - 1) as f64
            / n as f64;
        let log_stderr = var.sqrt();
        let mean = log_mean.exp();
        points.push(ExpMomentPoint {
            t: ensemble.times[k],
            log_mean,
            log_stderr,
            mean,
            stderr: mean * log_stderr,
            overflow_fraction: values.iter().filter(|v| **v > EXP_OVERFLOW).count() as f64
                / n as f64,
        });
    }
    let fit = fit_envelope(&points);
    Ok(ExpMomentSeries { points, fit })
}

/// Least squares on `log(E exp(Psi) - C1) = log(C1 exp(Psi0)) - c1 t`, with
/// `C1` the mean over the last quarter of the series. Only attempted for a
/// decreasing series.
fn fit_envelope(points: &[ExpMomentPoint]) -> Option<EnvelopeFit> {
    if points.len() < 4 {
        return None;
    }
    let first = points.first()?.log_mean;
    let last = points.last()?.log_mean;
    if !(first > last) {
        return None;
    }
    let plateau = &points[points.len() * 3 / 4..];
    let log_c1 = log_mean_exp(&plateau.iter().map(|p| p.log_mean).collect::<Vec<_>>());
    let log_psi0 = first;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in points {
        // log(exp(a) - exp(b)) for a > b
        let gap = p.log_mean - log_c1;
        if gap > 1e-3 {
            xs.push(p.t);
            ys.push(p.log_mean + (-(-gap).exp()).ln_1p());
        }
    }
    let line = crate::ergodics::least_squares(&xs, &ys)?;
    Some(EnvelopeFit {
        c1_prefactor: log_c1.exp(),
        c1_rate: -line.slope,
        r2: line.r2,
    })
    .filter(|_| log_psi0.is_finite())
}

/// `sum dt exp(-rate t) exp(G(x(t))) / |x(t)|^beta1` along a recorded path,
/// in log space.
pub fn discounted_singular_moment(
    times: &[f64],
    positions: &[Vec<f64>],
    model: &ModelSpec,
    rate: f64,
) -> Result<f64> {
    if times.len() != positions.len() || times.len() < 2 {
        return Err(Error::Argument("need matching times and positions".into()));
    }
    let beta1 = model.singular.beta1;
    let logs: Vec<f64> = times
        .iter()
        .zip(positions)
        .map(|(t, x)| -rate * t + model.potential_g(x) - beta1 * norm(x).ln())
        .collect();
    let dt = times[1] - times[0];
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    Ok(m + (s * dt).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn state(x: [f64; 2], v: [f64; 2]) -> WalkerState {
        WalkerState::new(x.to_vec(), v.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn kappa_choices() {
        let m = ModelSpec::reference(1.0).unwrap();
        let p = choose_kappa(&m, 0.5, 1.5).unwrap();
        assert!((p.kappa - 0.125).abs() < 1e-15);
        assert!((kappa_bound(2.0) - 1.0 / 3.0).abs() < 1e-15);
        let mut m2 = m.clone();
        m2.smooth.a1 = 2.0;
        let p2 = choose_kappa(&m2, 1.0 - 1e-12, 1.5).unwrap();
        assert!((p2.kappa - 1.0 / 3.0).abs() < 1e-11);
        assert!(choose_kappa(&m, 0.0, 1.5).is_err());
        // U = |x|^2/2 has no lower bound 1: the sandwich breaks near the origin
        assert!(!p.warnings.is_empty());
        assert!(p.big_c_kappa > 1.0);
    }

    #[test]
    fn phi_values() {
        let m = ModelSpec::reference(1.0).unwrap();
        let p = LyapunovParams::new(0.125, 1.5, 1.0);
        assert!((phi(&state([1.0, 0.0], [0.0, 0.0]), &m, &p).unwrap() - 0.5).abs() < 1e-15);
        assert!((phi(&state([1.0, 0.0], [1.0, 0.0]), &m, &p).unwrap() - 0.125).abs() < 1e-15);
        let expect = 0.005 - 0.1f64.ln();
        assert!((phi(&state([0.1, 0.0], [0.0, 0.0]), &m, &p).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 2.307_585).abs() < 1e-6);
        assert!(phi(&state([0.0, 0.0], [0.0, 0.0]), &m, &p).is_err());
    }

    #[test]
    fn psi_values() {
        let m = ModelSpec::reference(1.0).unwrap();
        let p = LyapunovParams::new(0.125, 1.5, 1.0);
        let dt = 1.0 / 64.0;
        let n_mem = crate::state::default_n_mem(&m.kernel, dt);
        let one = HistoryBuffer::constant_past(&[1.0, 0.0], dt, n_mem).unwrap();
        let got = psi(&state([1.0, 0.0], [0.0, 0.0]), &one, &m, &p).unwrap();
        // the trapezoid kernel mass is 1 + dt^2/12
        assert!((got - 1.5).abs() < 1e-4, "{got}");
        let zero = HistoryBuffer::constant_past(&[0.0, 0.0], dt, n_mem).unwrap();
        assert!((psi(&state([1.0, 0.0], [0.0, 0.0]), &zero, &m, &p).unwrap() - 0.5).abs() < 1e-15);
        let c = [2.0 * PI, 0.0];
        let past = HistoryBuffer::constant_past(&c, dt, n_mem).unwrap();
        let got = psi(&state(c, [0.0, 0.0]), &past, &m, &p).unwrap();
        let expect = 2.0 * PI * PI - (2.0 * PI).ln() + (2.0 * PI).powf(1.5);
        assert!((got - expect).abs() < 1e-3 * expect, "{got} vs {expect}");
    }

    #[test]
    fn psi_scales_through_norm_term() {
        let m = ModelSpec::reference(3.0).unwrap();
        let p = LyapunovParams::new(0.125, 1.5, 1.0);
        let s = state([1.2, -0.4], [0.3, 0.1]);
        let samples: Vec<Vec<f64>> = (0..40).map(|k| vec![1.0 + 0.01 * k as f64, 0.2]).collect();
        let b = HistoryBuffer::from_samples(&samples, 0.1, 50, crate::state::Tail::Constant(vec![1.4, 0.2]))
            .unwrap();
        let lambda: f64 = 2.5;
        let base = phi(&s, &m, &p).unwrap();
        let n1 = psi(&s, &b, &m, &p).unwrap() - base;
        let n2 = psi(&s, &b.scaled(lambda), &m, &p).unwrap() - base;
        assert!((n2 - lambda.powf(1.5) * n1).abs() < 1e-12 * n2);
    }

    #[test]
    fn phi_dominates_g_on_samples() {
        let m = ModelSpec::reference(1.0).unwrap();
        let p = LyapunovParams::new(0.125, 1.5, 1.0);
        for r in [0.5, 1.0, 2.0, 5.0] {
            for theta in [0.0, 1.0, 2.0] {
                let x = [r * f64::cos(theta), r * f64::sin(theta)];
                for v in [[0.0, 0.0], [0.3, -0.2], [-2.0, 1.0]] {
                    let s = state(x, v);
                    // U >= 1 region only: there the sandwich keeps Phi >= G
                    if m.potential_u(&x) >= 1.0 {
                        assert!(phi(&s, &m, &p).unwrap() >= m.potential_g(&x));
                    }
                }
            }
        }
    }

    #[test]
    fn log_mean_exp_handles_large_arguments() {
        let v = [1000.0, 1000.0 + 2f64.ln()];
        assert!((log_mean_exp(&v) - (1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn discounted_moment_is_log_of_sum() {
        let m = ModelSpec::reference(1.0).unwrap();
        let times = [0.0, 0.5, 1.0];
        let pos = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.5, 0.0]];
        let got = discounted_singular_moment(&times, &pos, &m, 1.0).unwrap();
        // e^G/|x| = |x|^-2 for alpha = 1
        let expect: f64 = 0.5 * (1.0 + (-0.5f64).exp() / 4.0 + (-1.0f64).exp() * 4.0);
        assert!((got - expect.ln()).abs() < 1e-14);
    }
}
