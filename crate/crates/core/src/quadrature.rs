//! Gauss-Legendre nodes and adaptive Gauss-Kronrod integration.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// returned for the nonnegative half only (`x_i >= 0`); the rule is the
/// union of `(x_i, w_i)` and `(-x_i, w_i)`, with a node at zero counted once.
pub fn gauss_legendre_half(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n.div_ceil(2));
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let x = if n % 2 == 1 && i == n / 2 { 0.0 } else { x };
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its 7-point Gauss companion on `[a, b]`.
fn gk15<const D: usize>(f: &mut impl FnMut(f64) -> [f64; D], a: f64, b: f64) -> ([f64; D], [f64; D]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; D];
    let mut g = [0.0; D];
    let fc = f(c);
    for j in 0..D {
        k[j] = GK_WEIGHTS[7] * fc[j];
        g[j] = G_WEIGHTS[3] * fc[j];
    }
    for i in 0..7 {
        let fl = f(c - h * GK_NODES[i]);
        let fr = f(c + h * GK_NODES[i]);
        for j in 0..D {
            let s = fl[j] + fr[j];
            k[j] += GK_WEIGHTS[i] * s;
            if i % 2 == 1 {
                g[j] += G_WEIGHTS[i / 2] * s;
            }
        }
    }
    for j in 0..D {
        k[j] *= h;
        g[j] *= h;
    }
    (k, g)
}

/// Adaptive Gauss-Kronrod integral of a vector-valued `f` on `[a, b]` to
/// absolute tolerance `tol`, or to round-off when `tol` is below it.
pub fn integrate<const D: usize>(mut f: impl FnMut(f64) -> [f64; D], a: f64, b: f64, tol: f64) -> [f64; D] {
    fn rec<const D: usize>(
        f: &mut impl FnMut(f64) -> [f64; D],
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
    ) -> [f64; D] {
        let (k, g) = gk15(f, a, b);
        let err = k.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let floor = 50.0 * f64::EPSILON * k.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if err <= tol.max(floor) || depth >= 30 || (b - a).abs() < 1e-14 {
            return k;
        }
        let m = 0.5 * (a + b);
        let l = rec(f, a, m, 0.5 * tol, depth + 1);
        let r = rec(f, m, b, 0.5 * tol, depth + 1);
        let mut out = [0.0; D];
        for j in 0..D {
            out[j] = l[j] + r[j];
        }
        out
    }
    if a == b {
        return [0.0; D];
    }
    rec(&mut f, a, b, tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_tolerance_stops_at_round_off() {
        let mut calls = 0;
        let [v] = integrate(
            |x| {
                calls += 1;
                [1e3 / (1.0 + x * x)]
            },
            0.0,
            1e-4,
            1e-30,
        );
        assert!((v - 1e3 * 1e-4f64.atan()).abs() < 1e-15);
        assert!(calls < 1000, "{calls}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let half = gauss_legendre_half(64);
        assert_eq!(half.len(), 32);
        let total: f64 = half.iter().map(|(_, w)| 2.0 * w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        // x^126 is the largest even degree the rule integrates exactly
        let m: f64 = half.iter().map(|(x, w)| 2.0 * w * x.powi(126)).sum();
        assert!((m - 2.0 / 127.0).abs() < 1e-14);
        let odd = gauss_legendre_half(5);
        assert_eq!(odd.last().unwrap().0, 0.0);
        let mass: f64 = odd
            .iter()
            .map(|(x, w)| if *x == 0.0 { *w } else { 2.0 * w })
            .sum();
        assert!((mass - 2.0).abs() < 1e-14);
        let eighth: f64 = odd.iter().map(|(x, w)| 2.0 * w * x.powi(8)).sum();
        assert!((eighth - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_integration() {
        let [v] = integrate(|x| [x.sin()], 0.0, std::f64::consts::PI, 1e-13);
        assert!((v - 2.0).abs() < 1e-13);
        let [a, b] = integrate(|x| [x.sqrt(), (-x).exp()], 0.0, 1.0, 1e-12);
        assert!((a - 2.0 / 3.0).abs() < 1e-11);
        assert!((b - (1.0 - (-1.0f64).exp())).abs() < 1e-13);
    }
}
