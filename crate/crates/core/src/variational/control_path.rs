//! Deterministic path steering `(x0, v0)` to `(e1, 0)` while keeping
//! `int |x(s)|^p2 ds` small, and the forcing `Gamma` that realizes it.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::models::ModelSpec;
use crate::quadrature::integrate;

/// Cap on the number of times `eps` is halved to meet the integral target.
pub const MAX_EPS_HALVINGS: u32 = 20;

/// Cosine ramp from `eps` at `u = 0` to `1` at `u = 1`, flat at both ends.
pub fn psi1(u: f64, eps: f64) -> f64 {
    eps + (1.0 - eps) * 0.5 * (1.0 - (PI * u).cos())
}

fn psi1_prime(u: f64, eps: f64) -> f64 {
    (1.0 - eps) * 0.5 * PI * (PI * u).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathCase {
    /// Cubic straight to `e1`.
    Direct,
    /// Cubic to `e2`, then a quarter-turn blend onto `e1`.
    ViaE2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Cubic,
    Blend,
    Descent,
    Hold,
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPath {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t: f64,
    pub eps: f64,
    pub r_target: f64,
    pub p2: f64,
    pub case: PathCase,
    pub segments: Vec<Segment>,
    /// `int_0^t |x(s)|^p2 ds`.
    pub integral: f64,
    /// Smallest `|x(s)|` found on a fine sample of the path.
    pub min_clearance: f64,
    pub halvings: u32,
    pub cutoff: &'static str,
}

/// Path sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSamples {
    pub s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Cubic on `[0, eps]` from `(x0, v0)` to `(target, 0)`.
fn cubic(x0: &[f64], v0: &[f64], target: &[f64], eps: f64, s: f64, x: &mut [f64], v: &mut [f64]) {
    let u = s / eps;
    let p = 2.0 * u * u * u - 3.0 * u * u;
    let dp = 6.0 / eps * (u * u - u);
    let q = 2.0 / (eps * eps) * (s * s * s / 3.0 - 0.75 * eps * s * s);
    let dq = 2.0 * (u * u - 1.5 * u);
    for i in 0..x0.len() {
        let c = target[i] - x0[i] - eps * v0[i] / 6.0;
        x[i] = x0[i] - c * p + v0[i] * q + v0[i] * s;
        v[i] = -c * dp + v0[i] * dq + v0[i];
    }
}

impl ControlPath {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Knots between segments, including `0` and `t`.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        k.push(self.t);
        k
    }

    fn segment_at(&self, s: f64) -> &Segment {
        self.segments
            .iter()
            .find(|seg| s < seg.end)
            .unwrap_or_else(|| self.segments.last().unwrap())
    }

    /// `(x(s), v(s))`.
    pub fn eval(&self, s: f64, x: &mut [f64], v: &mut [f64]) {
        let d = self.dim();
        let eps = self.eps;
        let seg = self.segment_at(s);
        let set_e1 = |x: &mut [f64], v: &mut [f64], a: f64, b: f64| {
            x.iter_mut().for_each(|c| *c = 0.0);
            v.iter_mut().for_each(|c| *c = 0.0);
            x[0] = a;
            v[0] = b;
        };
        match seg.kind {
            SegmentKind::Cubic => {
                let target = match self.case {
                    PathCase::Direct => unit(d, 0),
                    PathCase::ViaE2 => unit(d, 1),
                };
                cubic(&self.x0, &self.v0, &target, eps, s, x, v);
            }
            SegmentKind::Blend => {
                let u = (s - seg.start) / eps;
                let psi2 = 0.5 * ((PI * u).cos() + 1.0);
                let dpsi2 = -0.5 * PI / eps * (PI * u).sin();
                set_e1(x, v, 1.0 - psi2, -dpsi2);
                x[1] = psi2;
                v[1] = dpsi2;
            }
            SegmentKind::Descent => {
                let u = (s - seg.start) / eps;
                set_e1(x, v, 1.0 + eps - psi1(u, eps), -psi1_prime(u, eps) / eps);
            }
            SegmentKind::Hold => set_e1(x, v, eps, 0.0),
            SegmentKind::Ramp => {
                let u = ((s - seg.start) / eps).min(1.0);
                set_e1(x, v, psi1(u, eps), psi1_prime(u, eps) / eps);
            }
        }
    }

    pub fn position(&self, s: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        let mut v = vec![0.0; self.dim()];
        self.eval(s, &mut x, &mut v);
        x
    }

    pub fn velocity(&self, s: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        let mut v = vec![0.0; self.dim()];
        self.eval(s, &mut x, &mut v);
        v
    }

    /// Grid with spacing at most `h` in every segment, containing every knot.
    pub fn grid(&self, h: f64) -> Vec<f64> {
        let mut g = vec![0.0];
        for seg in &self.segments {
            let n = ((seg.end - seg.start) / h).ceil().max(1.0) as usize;
            for i in 1..=n {
                g.push(if i == n { seg.end } else { seg.start + (seg.end - seg.start) * i as f64 / n as f64 });
            }
        }
        g
    }

    pub fn sample(&self, h: f64) -> ControlSamples {
        let s = self.grid(h);
        let (x, v) = s.iter().map(|&s| (self.position(s), self.velocity(s))).unzip();
        ControlSamples { s, x, v }
    }

    /// `sum dt |x|^p2` by the trapezoid rule on [`Self::grid`].
    pub fn grid_integral(&self, h: f64) -> f64 {
        let g = self.grid(h);
        let f: Vec<f64> = g.iter().map(|&s| norm(&self.position(s)).powf(self.p2)).collect();
        g.windows(2).zip(f.windows(2)).map(|(s, f)| 0.5 * (s[1] - s[0]) * (f[0] + f[1])).sum()
    }
}

fn layout(case: PathCase, t: f64, eps: f64) -> Vec<Segment> {
    let seg = |kind, start, end| Segment { kind, start, end };
    let mut out = vec![seg(SegmentKind::Cubic, 0.0, eps)];
    let mut at = eps;
    if case == PathCase::ViaE2 {
        out.push(seg(SegmentKind::Blend, at, at + eps));
        at += eps;
    }
    out.push(seg(SegmentKind::Descent, at, at + eps));
    out.push(seg(SegmentKind::Hold, at + eps, t - eps));
    out.push(seg(SegmentKind::Ramp, t - eps, t));
    out
}

fn path_integral(path: &ControlPath) -> f64 {
    let p = path.p2;
    path.segments
        .iter()
        .map(|seg| match seg.kind {
            SegmentKind::Hold => (seg.end - seg.start) * path.eps.powf(p),
            _ => {
                let [v] = integrate(|s| [norm(&path.position(s)).powf(p)], seg.start, seg.end, 1e-14);
                v
            }
        })
        .sum()
}

fn min_clearance(path: &ControlPath) -> f64 {
    // only the leading segments can approach the origin
    let mut m = path.eps.min(1.0);
    for seg in path.segments.iter().filter(|s| matches!(s.kind, SegmentKind::Cubic | SegmentKind::Blend)) {
        let n = 4096;
        for i in 0..=n {
            let s = seg.start + (seg.end - seg.start) * i as f64 / n as f64;
            m = m.min(norm(&path.position(s)));
        }
    }
    m
}

/// Distance from the origin to the segment `[a, b]`.
fn segment_clearance(a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let l2 = dot(&ab, &ab);
    let t = if l2 == 0.0 { 0.0 } else { (-dot(a, &ab) / l2).clamp(0.0, 1.0) };
    let p: Vec<f64> = a.iter().zip(&ab).map(|(q, d)| q + t * d).collect();
    norm(&p)
}

/// Builds the path, halving `eps` until the integral drops below `r_target`
/// and the cubic keeps at least half the clearance of the straight chord.
pub fn build_control_path(
    x0: &[f64],
    v0: &[f64],
    t: f64,
    eps: f64,
    r_target: f64,
    p2: f64,
) -> Result<ControlPath> {
    let d = x0.len();
    if d == 0 || v0.len() != d {
        return Err(Error::Argument("x0 and v0 must have the same positive length".into()));
    }
    if !(norm(x0) > 0.0) {
        return Err(Error::Domain("the path cannot start at the origin".into()));
    }
    if !(t > 1.0) {
        return Err(Error::Argument(format!("t must exceed 1, got {t}")));
    }
    if !(eps > 0.0 && eps < t / 4.0) {
        return Err(Error::Argument(format!("eps must lie in (0, t/4), got {eps}")));
    }
    if !(r_target > 0.0) || !(p2 > 1.0) {
        return Err(Error::Argument("need r_target > 0 and p2 > 1".into()));
    }
    let perp: f64 = x0[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
    let parallel = perp <= 1e-12 * norm(x0);
    let case = if !parallel {
        PathCase::Direct
    } else if d == 1 {
        if x0[0] < 0.0 {
            return Err(Error::ControlPath(
                "in one dimension a path from x0 < 0 to 1 must cross the origin".into(),
            ));
        }
        PathCase::Direct
    } else {
        PathCase::ViaE2
    };
    let target = match case {
        PathCase::Direct => unit(d, 0),
        PathCase::ViaE2 => unit(d, 1),
    };
    let chord = segment_clearance(x0, &target);
    if chord == 0.0 {
        return Err(Error::ControlPath("the chord to the target passes through the origin".into()));
    }
    let mut eps = eps;
    let mut last = f64::NAN;
    for halvings in 0..=MAX_EPS_HALVINGS {
        let mut path = ControlPath {
            x0: x0.to_vec(),
            v0: v0.to_vec(),
            t,
            eps,
            r_target,
            p2,
            case,
            segments: layout(case, t, eps),
            integral: 0.0,
            min_clearance: 0.0,
            halvings,
            cutoff: "psi1(u) = eps + (1 - eps) (1 - cos(pi u)) / 2",
        };
        path.min_clearance = min_clearance(&path);
        path.integral = path_integral(&path);
        last = path.integral;
        if path.integral < r_target && path.min_clearance >= 0.5 * chord.min(eps) {
            return Ok(path);
        }
        eps *= 0.5;
    }
    Err(Error::ControlPath(format!(
        "integral {last:.6e} still above {r_target} after {MAX_EPS_HALVINGS} halvings of eps"
    )))
}

/// Forcing `Gamma` on a grid and the residual of the controlled equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSeries {
    pub s: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub residual: f64,
}

/// `Gamma(s) = v(s) - v0 + int_0^s (v + grad U(x) + grad G(x))` on a
/// knot-aligned grid of spacing `h`, with the cell integrals by adaptive
/// Gauss-Kronrod. The residual is the largest cell mismatch in
/// `dx/ds = v` and `dv/ds = -v - grad U - grad G + dGamma/ds`, both tested
/// in cell-averaged form.
pub fn gamma_residual(path: &ControlPath, model: &ModelSpec, h: f64) -> Result<GammaSeries> {
    if path.min_clearance <= 0.0 {
        return Err(Error::Domain("the path touches the origin".into()));
    }
    model.check_dim(&path.x0)?;
    if !(h > 0.0) {
        return Err(Error::Argument(format!("grid spacing must be > 0, got {h}")));
    }
    let d = path.dim();
    let grid = path.grid(h);
    let mut gx = vec![0.0; d];
    let mut gg = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    // [v, v + grad U + grad G] stacked; d <= 3 keeps this fixed-size
    const MAXD: usize = 3;
    if d > MAXD {
        return Err(Error::Unsupported(format!("control paths are implemented for d <= {MAXD}")));
    }
    let mut integrand = |s: f64| -> [f64; 2 * MAXD] {
        path.eval(s, &mut x, &mut v);
        model.smooth.gradient_into(&x, &mut gx);
        if model.singular.is_present() {
            model.singular.gradient_into(&x, &mut gg);
        } else {
            gg.iter_mut().for_each(|c| *c = 0.0);
        }
        let mut out = [0.0; 2 * MAXD];
        for i in 0..d {
            out[i] = v[i];
            out[MAXD + i] = v[i] + gx[i] + gg[i];
        }
        out
    };
    let mut gamma = Vec::with_capacity(grid.len());
    let mut acc = vec![0.0; d];
    let mut residual: f64 = 0.0;
    gamma.push(vec![0.0; d]);
    let mut prev_x = path.position(0.0);
    let mut prev_v = path.velocity(0.0);
    let mut prev_gamma = vec![0.0; d];
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let cell = integrate(&mut integrand, a, b, 1e-13 * (b - a));
        let xb = path.position(b);
        let vb = path.velocity(b);
        let mut g = vec![0.0; d];
        for i in 0..d {
            acc[i] += cell[MAXD + i];
            g[i] = vb[i] - path.v0[i] + acc[i];
        }
        let len = b - a;
        let mut r1 = 0.0;
        let mut r2 = 0.0;
        for i in 0..d {
            r1 += ((xb[i] - prev_x[i]) / len - cell[i] / len).powi(2);
            r2 += ((vb[i] - prev_v[i]) / len + cell[MAXD + i] / len - (g[i] - prev_gamma[i]) / len).powi(2);
        }
        residual = residual.max(r1.sqrt() + r2.sqrt());
        prev_x = xb;
        prev_v = vb;
        prev_gamma = g.clone();
        gamma.push(g);
    }
    Ok(GammaSeries {
        s: grid,
        gamma,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn direct_case_boundary_values() {
        let p = build_control_path(&[0.0, 1.0], &[0.0, 0.0], 4.0, 0.25, 10.0, 1.5).unwrap();
        assert_eq!(p.case, PathCase::Direct);
        assert_eq!(p.halvings, 0);
        assert!(close(&p.position(0.0), &[0.0, 1.0], 1e-15));
        assert!(close(&p.velocity(0.0), &[0.0, 0.0], 1e-15));
        assert!(close(&p.position(4.0), &[1.0, 0.0], 1e-10));
        assert!(close(&p.velocity(4.0), &[0.0, 0.0], 1e-10));
        assert!(p.min_clearance > 0.0);
    }

    #[test]
    fn path_is_continuous_at_knots() {
        let p = build_control_path(&[-0.3, 2.0], &[1.5, -0.7], 3.0, 0.2, 10.0, 1.5).unwrap();
        for k in p.knots() {
            let (l, r) = ((k - 1e-9).max(0.0), (k + 1e-9).min(p.t));
            assert!(close(&p.position(l), &p.position(r), 1e-7), "x at {k}");
            assert!(close(&p.velocity(l), &p.velocity(r), 1e-6), "v at {k}");
        }
    }

    #[test]
    fn velocity_is_the_derivative_of_position() {
        let p = build_control_path(&[2.0, 0.0], &[0.4, 0.9], 3.0, 0.3, 10.0, 1.5).unwrap();
        let h = 1e-6;
        for s in [0.05, 0.29, 0.31, 0.55, 0.7, 1.5, 2.8, 2.95] {
            let fd: Vec<f64> = p
                .position(s + h)
                .iter()
                .zip(p.position(s - h))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            assert!(close(&fd, &p.velocity(s), 1e-5), "s={s}");
        }
    }

    #[test]
    fn parallel_start_routes_through_e2() {
        let p = build_control_path(&[2.0, 0.0], &[0.0, 0.0], 4.0, 0.25, 10.0, 1.5).unwrap();
        assert_eq!(p.case, PathCase::ViaE2);
        assert!(close(&p.position(0.25), &[0.0, 1.0], 1e-12));
        assert!(close(&p.velocity(0.25), &[0.0, 0.0], 1e-12));
        assert!(close(&p.position(4.0), &[1.0, 0.0], 1e-10));
        assert!(close(&p.velocity(4.0), &[0.0, 0.0], 1e-10));
        let back = build_control_path(&[-2.0, 0.0], &[0.0, 0.0], 4.0, 0.25, 10.0, 1.5).unwrap();
        assert!(back.min_clearance > 0.1);
    }

    #[test]
    fn one_dimension() {
        let p = build_control_path(&[3.0], &[1.0], 2.0, 0.1, 10.0, 1.5).unwrap();
        assert!((p.position(2.0)[0] - 1.0).abs() < 1e-12);
        assert!(build_control_path(&[-3.0], &[0.0], 2.0, 0.1, 10.0, 1.5).is_err());
    }

    #[test]
    fn integral_target_forces_halving() {
        let p = build_control_path(&[0.0, 1.0], &[0.0, 0.0], 4.0, 0.25, 0.1, 1.5).unwrap();
        assert!(p.halvings > 0);
        assert!(p.integral < 0.1);
        assert!((p.grid_integral(1e-4) - p.integral).abs() < 1e-3 * p.integral);
        let err = build_control_path(&[0.0, 1.0], &[0.0, 0.0], 4.0, 0.25, 1e-30, 1.5).unwrap_err();
        assert!(matches!(err, Error::ControlPath(_)));
    }

    #[test]
    fn integral_is_roughly_linear_in_eps() {
        let a = build_control_path(&[0.0, 1.0], &[0.0, 0.0], 10.0, 0.01, 1e3, 1.5).unwrap();
        let b = build_control_path(&[0.0, 1.0], &[0.0, 0.0], 10.0, 0.005, 1e3, 1.5).unwrap();
        let ratio = b.integral / a.integral;
        assert!((0.35..=0.65).contains(&ratio), "{ratio}");
        // bound C eps t R^p2 with R the largest radius on the path
        assert!(a.integral <= 3.0 * 0.01 * 10.0);
    }

    #[test]
    fn gamma_on_reference_model() {
        let model = ModelSpec::reference(3.0).unwrap();
        let p = build_control_path(&[0.0, 1.0], &[0.5, 0.0], 4.0, 0.25, 10.0, 1.5).unwrap();
        let g = gamma_residual(&p, &model, 1e-3).unwrap();
        assert_eq!(g.gamma[0], vec![0.0, 0.0]);
        assert!(g.residual <= 1e-6, "{}", g.residual);
        // on the hold, dGamma/ds = grad U + grad G at eps e1
        let i = g.s.iter().position(|&s| s > 1.0).unwrap();
        let slope = (g.gamma[i + 1][0] - g.gamma[i][0]) / (g.s[i + 1] - g.s[i]);
        let expect = 0.25 - 3.0 / 0.25;
        assert!((slope - expect).abs() < 1e-9, "{slope} vs {expect}");
    }
}
