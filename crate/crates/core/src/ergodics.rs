//! Invariant-measure estimates, stationarity and mixing diagnostics, and the
//! straight-line bounds on the path metric.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{Ensemble, Trajectory};
use crate::linalg::{dist, dot, norm};
use crate::lyapunov::{psi, LyapunovParams};
use crate::models::ModelSpec;
use crate::quadrature::gauss_legendre_half;
use crate::state::{weighted_norm, HistoryBuffer, WalkerState};

/// Histogram estimate of the density of `r = |x|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialPdf {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub samples: usize,
}

impl RadialPdf {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `sum p_i dr_i`.
    pub fn total_mass(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.densities)
            .map(|(w, p)| p * (w[1] - w[0]))
            .sum()
    }
}

/// Uniform-bin histogram of radii on `[0, max r]`, normalized to unit mass.
pub fn radial_histogram_of(radii: &[f64], bins: usize) -> Result<RadialPdf> {
    if bins < 8 {
        return Err(Error::Argument(format!("need at least 8 bins, got {bins}")));
    }
    if radii.len() < 10 * bins {
        return Err(Error::InsufficientData(format!(
            "{} samples for {bins} bins; need at least {}",
            radii.len(),
            10 * bins
        )));
    }
    let max = radii.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::InsufficientData("radii are all zero or non-finite".into()));
    }
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &r in radii {
        let i = ((r / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    let n = radii.len() as f64;
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(c, w)| *c as f64 / (n * (w[1] - w[0])))
        .collect();
    Ok(RadialPdf {
        edges,
        densities,
        samples: radii.len(),
    })
}

/// Radial density of the recorded states after `burn_in`.
pub fn radial_histogram(traj: &Trajectory, burn_in: f64, bins: usize) -> Result<RadialPdf> {
    radial_histogram_of(&traj.radii_after(burn_in), bins)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub radius: f64,
    /// More than one separated local maximum within 1% of the top density.
    pub ambiguous: bool,
    pub candidates: Vec<f64>,
}

/// Mode of the histogram, refined by a parabola through the top bin and its
/// neighbours.
pub fn peak_location(pdf: &RadialPdf) -> Result<Peak> {
    let p = &pdf.densities;
    if p.is_empty() {
        return Err(Error::InsufficientData("empty histogram".into()));
    }
    let centers = pdf.centers();
    let width = pdf.bin_width();
    let top = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
    let pmax = p[top];
    let local_max = |i: usize| {
        (i == 0 || p[i] >= p[i - 1]) && (i + 1 == p.len() || p[i] >= p[i + 1])
    };
    let mut candidates: Vec<usize> = (0..p.len())
        .filter(|&i| local_max(i) && p[i] >= 0.99 * pmax)
        .collect();
    // plateaus of equal neighbours count once
    candidates.dedup_by(|b, a| *b == *a + 1);
    let radius = if top > 0 && top + 1 < p.len() {
        let (l, c, r) = (p[top - 1], p[top], p[top + 1]);
        let denom = l - 2.0 * c + r;
        let shift = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
        centers[top] + shift.clamp(-0.5, 0.5) * width
    } else {
        centers[top]
    };
    Ok(Peak {
        radius,
        ambiguous: candidates.len() > 1,
        candidates: candidates.iter().map(|&i| centers[i]).collect(),
    })
}

/// Integrated autocorrelation time `sum_{k >= 1} rho_k`, truncated by the
/// initial positive sequence rule.
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = dot(&c, &c) / n as f64;
    if c0 == 0.0 {
        return 0.0;
    }
    let acf = |k: usize| dot(&c[..n - k], &c[k..]) / (n as f64 * c0);
    // pairs Gamma_m = rho_{2m} + rho_{2m+1}, with rho_0 = 1
    let mut sum = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let g = if m == 0 { 1.0 } else { acf(2 * m) } + acf(2 * m + 1);
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev);
        sum += 2.0 * g;
        prev = g;
        m += 1;
    }
    // sum = 1 + 2 sum_{k>=1} rho_k
    (0.5 * (sum - 1.0)).max(0.0)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    d
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub n_eff1: f64,
    pub n_eff2: f64,
    pub tau_int: f64,
    /// Statistic below the 5% critical value.
    pub passed: bool,
}

/// KS comparison of two samples with autocorrelation-corrected sizes
/// `n / (2 tau + 1)`.
pub fn ks_test_correlated(first: &[f64], second: &[f64]) -> Result<KsResult> {
    if first.len() < 2 || second.len() < 2 {
        return Err(Error::InsufficientData("each part needs at least two samples".into()));
    }
    let tau = 0.5 * (integrated_autocorrelation(first) + integrated_autocorrelation(second));
    let n1 = first.len() as f64 / (2.0 * tau + 1.0);
    let n2 = second.len() as f64 / (2.0 * tau + 1.0);
    let d = ks_statistic(first, second);
    let scale = (n1 * n2 / (n1 + n2)).sqrt();
    let critical = 1.358 / scale;
    Ok(KsResult {
        statistic: d,
        critical_value: critical,
        p_value: kolmogorov_sf(scale * d),
        n1: first.len(),
        n2: second.len(),
        n_eff1: n1,
        n_eff2: n2,
        tau_int: tau,
        passed: d < critical,
    })
}

/// Compares the radii before and after the `split` fraction of the
/// post-burn-in record.
pub fn stationarity_test(traj: &Trajectory, burn_in: f64, split: f64) -> Result<KsResult> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Argument(format!("split must lie in (0, 1), got {split}")));
    }
    let r = traj.radii_after(burn_in);
    if r.len() < 20 {
        return Err(Error::InsufficientData(format!("{} post-burn-in samples", r.len())));
    }
    let cut = ((r.len() as f64 * split) as usize).clamp(1, r.len() - 1);
    ks_test_correlated(&r[..cut], &r[cut..])
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<Line> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(Line {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingVerdict {
    Fitted,
    /// Poor fit: rate withheld.
    PoorFit,
    /// `D(t)` never rises above the noise floor.
    AlreadyMixed,
}

/// What is fitted against time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitTarget {
    /// `log D(t)` over the leading interval on which `D > 3 SE`.
    Window,
    /// `log D(t)` at every point where `D > 3 SE`.
    Pointwise,
    /// `log max_{s >= t} D(s)` where that envelope exceeds `3 SE`; robust to
    /// oscillating differences that pass through zero.
    Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingFit {
    pub observable: String,
    pub times: Vec<f64>,
    pub d: Vec<f64>,
    pub stderr: Vec<f64>,
    pub target: FitTarget,
    pub rate: Option<f64>,
    pub prefactor: Option<f64>,
    pub r2: Option<f64>,
    pub fit_points: usize,
    pub verdict: MixingVerdict,
    /// `D` at the last time is below three pooled standard errors.
    pub terminal_within_noise: bool,
}

pub const DEFAULT_R2_THRESHOLD: f64 = 0.8;

/// Fits `D(t) = |mean_A f - mean_B f| ~ C e^{-c t}` for two ensembles that
/// differ only in their initial condition.
pub fn mixing_rate(
    a: &Ensemble,
    b: &Ensemble,
    observable: &str,
    target: FitTarget,
    r2_threshold: f64,
) -> Result<MixingFit> {
    let ia = a
        .observable_index(observable)
        .ok_or_else(|| Error::Argument(format!("ensemble A lacks observable '{observable}'")))?;
    let ib = b
        .observable_index(observable)
        .ok_or_else(|| Error::Argument(format!("ensemble B lacks observable '{observable}'")))?;
    if a.times != b.times {
        return Err(Error::Argument("ensembles are recorded on different time grids".into()));
    }
    let times = a.times.clone();
    let d: Vec<f64> = (0..times.len())
        .map(|k| (a.stats[ia][k].mean - b.stats[ib][k].mean).abs())
        .collect();
    let se: Vec<f64> = (0..times.len())
        .map(|k| (a.stats[ia][k].stderr().powi(2) + b.stats[ib][k].stderr().powi(2)).sqrt())
        .collect();
    let fit_of = |vals: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..times.len() {
            if vals[k] > 3.0 * se[k] && vals[k] > 0.0 {
                xs.push(times[k]);
                ys.push(vals[k].ln());
            }
        }
        (xs, ys)
    };
    let (xs, ys) = match target {
        FitTarget::Window => {
            let end = (0..times.len())
                .find(|&k| !(d[k] > 3.0 * se[k] && d[k] > 0.0))
                .unwrap_or(times.len());
            (times[..end].to_vec(), d[..end].iter().map(|v| v.ln()).collect())
        }
        FitTarget::Pointwise => fit_of(&d),
        FitTarget::Envelope => {
            let mut env = d.clone();
            for k in (0..env.len().saturating_sub(1)).rev() {
                env[k] = env[k].max(env[k + 1]);
            }
            fit_of(&env)
        }
    };
    let terminal_within_noise = d.last().zip(se.last()).map(|(d, s)| *d < 3.0 * s).unwrap_or(false);
    let mut fit = MixingFit {
        observable: observable.to_string(),
        times: times.clone(),
        d: d.clone(),
        stderr: se.clone(),
        target,
        rate: None,
        prefactor: None,
        r2: None,
        fit_points: xs.len(),
        verdict: MixingVerdict::AlreadyMixed,
        terminal_within_noise,
    };
    if xs.len() < 3 {
        return Ok(fit);
    }
    match least_squares(&xs, &ys) {
        Some(line) => {
            fit.r2 = Some(line.r2);
            if line.r2 >= r2_threshold {
                fit.rate = Some(-line.slope);
                fit.prefactor = Some(line.intercept.exp());
                fit.verdict = MixingVerdict::Fitted;
            } else {
                fit.verdict = MixingVerdict::PoorFit;
            }
        }
        None => fit.verdict = MixingVerdict::AlreadyMixed,
    }
    Ok(fit)
}

/// Parameters of the saturated metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricParams {
    pub n_scale: f64,
    pub params: LyapunovParams,
    pub x_min: f64,
}

/// A point of the extended state space.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub state: &'a WalkerState,
    pub history: &'a HistoryBuffer,
}

/// `|x - x~| + |v - v~| + ||eta - eta~||_{p2}`.
pub fn ambient_distance(a: Point, b: Point, model: &ModelSpec, p2: f64) -> Result<f64> {
    let diff = HistoryBuffer::combine(a.history, 1.0, b.history, -1.0)?;
    Ok(dist(&a.state.x, &b.state.x)
        + dist(&a.state.v, &b.state.v)
        + weighted_norm(&diff, &model.kernel, p2)?.value)
}

/// Distance from the origin to the segment `[a, b]`.
fn segment_clearance(a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let len2 = dot(&ab, &ab);
    let t = if len2 == 0.0 { 0.0 } else { (-dot(a, &ab) / len2).clamp(0.0, 1.0) };
    let p: Vec<f64> = a.iter().zip(&ab).map(|(q, d)| q + t * d).collect();
    norm(&p)
}

const RHO_NODES: usize = 64;

fn line_point(a: Point, b: Point, u: f64, w: f64) -> Result<(WalkerState, HistoryBuffer)> {
    let mix = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| u * x + w * y).collect() };
    let state = WalkerState {
        x: mix(&a.state.x, &b.state.x),
        v: mix(&a.state.v, &b.state.v),
        t: 0.0,
    };
    Ok((state, HistoryBuffer::combine(a.history, u, b.history, w)?))
}

/// Upper bound on the path metric along the straight segment from `b` to
/// `a`: `int_0^1 e^{Psi(gamma(s))/2} ||a - b|| ds` by 64-point
/// Gauss-Legendre. `+inf` when the position segment passes within `x_min` of
/// the origin.
pub fn rho_line(a: Point, b: Point, model: &ModelSpec, metric: &MetricParams) -> Result<f64> {
    let length = ambient_distance(a, b, model, metric.params.p2)?;
    if length == 0.0 {
        return Ok(0.0);
    }
    if segment_clearance(&a.state.x, &b.state.x) < metric.x_min {
        return Ok(f64::INFINITY);
    }
    // log-space accumulation of sum_i w_i e^{Psi_i / 2}; node pairs are
    // combined first so swapping a and b gives a bitwise-equal result
    let mut terms = Vec::with_capacity(RHO_NODES);
    for (x, wt) in gauss_legendre_half(RHO_NODES) {
        let u = 0.5 * (1.0 + x);
        let w = 0.5 * (1.0 - x);
        let (s1, h1) = line_point(a, b, u, w)?;
        let (s2, h2) = line_point(a, b, w, u)?;
        let l1 = 0.5 * psi(&s1, &h1, model, &metric.params)?;
        let l2 = 0.5 * psi(&s2, &h2, model, &metric.params)?;
        let (hi, lo) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
        terms.push((0.5 * wt).ln() + hi + (lo - hi).exp().ln_1p());
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    Ok(length * (m + s.ln()).exp())
}

/// `rho_N = min(N rho, 1)` and `rho~_N = sqrt(rho_N (1 + e^{Psi(a)} + e^{Psi(b)}))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoValues {
    pub rho_line: f64,
    pub rho_n: f64,
    pub rho_tilde: f64,
    pub log_rho_tilde: f64,
}

/// Saturated and weighted values from a path-metric bound and the two
/// endpoint values of `Psi`.
pub fn rho_from_parts(rho_line: f64, psi_a: f64, psi_b: f64, n_scale: f64) -> RhoValues {
    let rho_n = (n_scale * rho_line).min(1.0);
    let m = psi_a.max(psi_b).max(0.0);
    let lse = m + ((-m).exp() + (psi_a - m).exp() + (psi_b - m).exp()).ln();
    let log_rho_tilde = 0.5 * (rho_n.ln() + lse);
    RhoValues {
        rho_line,
        rho_n,
        rho_tilde: log_rho_tilde.exp(),
        log_rho_tilde,
    }
}

pub fn rho_n_and_tilde(a: Point, b: Point, model: &ModelSpec, metric: &MetricParams) -> Result<RhoValues> {
    if metric.n_scale <= 0.0 {
        return Err(Error::Argument(format!("N must be > 0, got {}", metric.n_scale)));
    }
    let line = rho_line(a, b, model, metric)?;
    let pa = psi(a.state, a.history, model, &metric.params)?;
    let pb = psi(b.state, b.history, model, &metric.params)?;
    Ok(rho_from_parts(line, pa, pb, metric.n_scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;
    use crate::state::Tail;

    #[test]
    fn point_mass_histogram() {
        let r = vec![2.0; 100];
        let pdf = radial_histogram_of(&r, 8).unwrap();
        let w = pdf.bin_width();
        assert_eq!(pdf.densities[7], 1.0 / w);
        assert!(pdf.densities[..7].iter().all(|p| *p == 0.0));
        let peak = peak_location(&pdf).unwrap();
        assert!((peak.radius - 2.0).abs() <= w / 2.0);
        assert!(radial_histogram_of(&r, 20).is_err());
        assert!(radial_histogram_of(&r, 4).is_err());
    }

    #[test]
    fn histogram_matches_linear_density() {
        // r = sqrt(u) has density 2r on [0, 1]
        let mut g = GaussianStream::new(11, 0);
        let n = 200_000;
        let r: Vec<f64> = (0..n)
            .map(|_| {
                let z = g.next();
                // uniform from the normal CDF via erfc-free approximation: use two normals
                let w = g.next();
                let u = (z.atan2(w) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
                u.sqrt()
            })
            .collect();
        let pdf = radial_histogram_of(&r, 20).unwrap();
        assert!((pdf.total_mass() - 1.0).abs() < 1e-10);
        let w = pdf.bin_width();
        for (c, p) in pdf.centers().iter().zip(&pdf.densities) {
            let prob = (c + w / 2.0).powi(2).min(1.0) - (c - w / 2.0).powi(2);
            let expect = prob / w;
            let sigma = (prob * (1.0 - prob) / n as f64).sqrt() / w;
            assert!((p - expect).abs() < 3.5 * sigma, "{c}: {p} vs {expect}");
        }
    }

    #[test]
    fn ks_disjoint_supports() {
        let a = vec![1.0; 50];
        let b = vec![2.0; 50];
        assert_eq!(ks_statistic(&a, &b), 1.0);
    }

    #[test]
    fn ks_null_rejection_rate() {
        let mut g = GaussianStream::new(5, 0);
        let mut accepted = 0;
        let runs = 200;
        for _ in 0..runs {
            // AR(1) samples, so the autocorrelation correction matters
            let mut x = 0.0;
            let xs: Vec<f64> = (0..2000)
                .map(|_| {
                    x = 0.8 * x + g.next();
                    x
                })
                .collect();
            if ks_test_correlated(&xs[..1000], &xs[1000..]).unwrap().passed {
                accepted += 1;
            }
        }
        assert!(accepted as f64 >= 0.9 * runs as f64, "{accepted}/{runs}");
    }

    #[test]
    fn autocorrelation_of_ar1() {
        let mut g = GaussianStream::new(9, 0);
        let phi: f64 = 0.9;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..400_000)
            .map(|_| {
                x = phi * x + g.next();
                x
            })
            .collect();
        // sum_{k>=1} phi^k
        let tau = integrated_autocorrelation(&xs);
        let expect = phi / (1.0 - phi);
        assert!((tau - expect).abs() < 0.1 * expect, "{tau} vs {expect}");
    }

    #[test]
    fn kolmogorov_tail_reference() {
        // P(K > 1.358) = 0.05
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let l = least_squares(&xs, &ys).unwrap();
        assert!((l.slope + 0.5).abs() < 1e-15 && (l.r2 - 1.0).abs() < 1e-15);
    }

    fn setup() -> (ModelSpec, MetricParams, HistoryBuffer) {
        let model = ModelSpec::reference(1.0).unwrap();
        let params = LyapunovParams::new(0.125, 1.5, 1.0);
        let metric = MetricParams {
            n_scale: 10.0,
            params,
            x_min: 1e-8,
        };
        let h = HistoryBuffer::constant_past(&[1.0, 0.0], 1.0 / 64.0, 200).unwrap();
        (model, metric, h)
    }

    #[test]
    fn rho_of_identical_points_is_zero() {
        let (model, metric, h) = setup();
        let s = WalkerState::new(vec![1.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let p = Point { state: &s, history: &h };
        assert_eq!(rho_line(p, p, &model, &metric).unwrap(), 0.0);
        let v = rho_n_and_tilde(p, p, &model, &metric).unwrap();
        assert_eq!((v.rho_n, v.rho_tilde), (0.0, 0.0));
    }

    #[test]
    fn rho_through_origin_is_infinite() {
        let (model, metric, _) = setup();
        let ha = HistoryBuffer::constant_past(&[1.0, 0.0], 1.0 / 64.0, 200).unwrap();
        let hb = HistoryBuffer::constant_past(&[-1.0, 0.0], 1.0 / 64.0, 200).unwrap();
        let a = WalkerState::new(vec![1.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let b = WalkerState::new(vec![-1.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let r = rho_line(Point { state: &a, history: &ha }, Point { state: &b, history: &hb }, &model, &metric)
            .unwrap();
        assert!(r.is_infinite());
    }

    #[test]
    fn rho_velocity_segment_matches_dense_quadrature() {
        let (model, metric, h) = setup();
        let a = WalkerState::new(vec![1.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let b = WalkerState::new(vec![1.0, 0.0], vec![0.1, 0.0], 0.0).unwrap();
        let pa = Point { state: &a, history: &h };
        let pb = Point { state: &b, history: &h };
        let got = rho_line(pa, pb, &model, &metric).unwrap();
        // midpoint rule on 4096 nodes of 0.1 e^{Psi/2}
        let n = 4096;
        let mut acc = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            let st = WalkerState::new(vec![1.0, 0.0], vec![0.1 * (1.0 - s), 0.0], 0.0).unwrap();
            acc += (0.5 * psi(&st, &h, &model, &metric.params).unwrap()).exp();
        }
        let oracle = 0.1 * acc / n as f64;
        assert!((got - oracle).abs() < 1e-8 * oracle, "{got} vs {oracle}");
        let back = rho_line(pb, pa, &model, &metric).unwrap();
        assert_eq!(got, back);
    }

    #[test]
    fn rho_saturation_and_weighting() {
        let v = rho_from_parts(0.05, 0.0, 0.0, 10.0);
        assert!((v.rho_n - 0.5).abs() < 1e-15);
        assert!((v.rho_tilde - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((v.rho_tilde - 1.224_745).abs() < 1e-6);
        let s = rho_from_parts(0.2, 1.0, 2.0, 10.0);
        assert_eq!(s.rho_n, 1.0);
        assert!((s.rho_tilde - (1.0 + 1f64.exp() + 2f64.exp()).sqrt()).abs() < 1e-14);
        // large Psi stays finite in log space
        let big = rho_from_parts(0.01, 2000.0, 10.0, 1.0);
        assert!((big.log_rho_tilde - 0.5 * (0.01f64.ln() + 2000.0)).abs() < 1e-9);
    }

    #[test]
    fn ambient_distance_uses_history_norm() {
        let (model, _, _) = setup();
        let ha = HistoryBuffer::from_samples(&[vec![1.0, 0.0]], 0.1, 100, Tail::Constant(vec![1.0, 0.0])).unwrap();
        let hb = HistoryBuffer::from_samples(&[vec![1.0, 0.0]], 0.1, 100, Tail::Constant(vec![1.0, 0.0])).unwrap();
        let a = WalkerState::new(vec![1.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let d = ambient_distance(Point { state: &a, history: &ha }, Point { state: &a, history: &hb }, &model, 1.5)
            .unwrap();
        assert_eq!(d, 0.0);
    }
}
