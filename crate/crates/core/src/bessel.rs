//! Bessel functions of the first kind, orders 0 and 1.
//!
//! Ascending power series on `|x| <= 12`, Hankel asymptotic expansion
//! beyond. The pilot force evaluates `J1` millions of times per run, so
//! [`j1_fast`] serves it from a cubic Hermite table built once from the
//! series (nodes every `12/4096`, interpolation error a few `1e-12`).

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Crossover between the power series and the asymptotic expansion.
pub const SERIES_LIMIT: f64 = 12.0;

/// Location and value of the first maximum of `J1`.
pub const J1_MAX_ARG: f64 = 1.841_183_781_340_659;
pub const J1_MAX: f64 = 0.581_865_224_281_596_5;

const TABLE_INTERVALS: usize = 4096;

fn series(order: u32, x: f64) -> f64 {
    // sum_k (-1)^k (x/2)^(2k+order) / (k! (k+order)!)
    let half = 0.5 * x;
    let q = -half * half;
    let mut term = if order == 0 { 1.0 } else { half };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + order as f64));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k > 2.0 {
            break;
        }
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    sum
}

fn asymptotic(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let chi = x - (order as f64 * 0.5 + 0.25) * PI;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        let mag = a.abs();
        if mag > prev || mag < 1e-17 {
            break;
        }
        prev = mag;
        // a_k / x^k with sign (-1)^(k/2) on P (even k) and (-1)^((k-1)/2) on Q (odd k)
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
    }
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J0(x)`.
pub fn j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        series(0, ax)
    } else {
        asymptotic(0, ax)
    }
}

/// `J1(x)`, odd in `x`.
pub fn j1(x: f64) -> f64 {
    let ax = x.abs();
    let val = if ax <= SERIES_LIMIT {
        series(1, ax)
    } else {
        asymptotic(1, ax)
    };
    if x < 0.0 {
        -val
    } else {
        val
    }
}

/// `J1'(x) = J0(x) - J1(x)/x`, with the limit `1/2` at the origin.
pub fn j1_prime(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        return 0.5 - 3.0 * x * x / 16.0;
    }
    j0(x) - j1(x) / x
}

struct J1Table {
    step: f64,
    inv_step: f64,
    value: Vec<f64>,
    slope: Vec<f64>,
}

fn table() -> &'static J1Table {
    static TABLE: OnceLock<J1Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let step = SERIES_LIMIT / TABLE_INTERVALS as f64;
        let nodes = TABLE_INTERVALS + 1;
        let mut value = Vec::with_capacity(nodes);
        let mut slope = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let r = i as f64 * step;
            value.push(series(1, r));
            slope.push(j1_prime(r));
        }
        J1Table {
            step,
            inv_step: 1.0 / step,
            value,
            slope,
        }
    })
}

/// Tabulated `J1(r)` for `r >= 0`; falls back to the asymptotic expansion
/// beyond the table.
#[inline]
pub fn j1_fast(r: f64) -> f64 {
    if r >= SERIES_LIMIT {
        return asymptotic(1, r);
    }
    let tab = table();
    let pos = r * tab.inv_step;
    let i = (pos as usize).min(TABLE_INTERVALS - 1);
    let u = pos - i as f64;
    let (y0, y1) = (tab.value[i], tab.value[i + 1]);
    let (m0, m1) = (tab.slope[i] * tab.step, tab.slope[i + 1] * tab.step);
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * m0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * m1
}

/// `J1(r)/r` for `r >= 0`, equal to `1/2` at `r = 0`.
#[inline]
pub fn j1_over_r(r: f64) -> f64 {
    if r < 1e-6 {
        0.5 - r * r / 16.0
    } else {
        j1_fast(r) / r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Integral representation J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt,
    /// composite Simpson on a dense grid.
    fn integral_oracle(order: f64, x: f64) -> f64 {
        let n = 20_000;
        let h = PI / n as f64;
        let f = |t: f64| (order * t - x * t.sin()).cos();
        let mut s = f(0.0) + f(PI);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn j1_matches_integral_oracle() {
        for &x in &[0.1, 0.5, 1.0, PI, 5.0, 8.3, 11.9, 12.0, 12.1, 15.0, 30.0, 47.5] {
            let oracle = integral_oracle(1.0, x);
            assert!((j1(x) - oracle).abs() < 1e-10, "x={x}: {} vs {oracle}", j1(x));
            assert!((j0(x) - integral_oracle(0.0, x)).abs() < 1e-10, "j0 at {x}");
        }
    }

    #[test]
    fn j1_of_pi_reference() {
        assert!((j1(PI) - 0.284_615_343_179_752_7).abs() < 1e-12);
        assert!((j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-13);
    }

    #[test]
    fn crossover_is_continuous() {
        let lo = series(1, SERIES_LIMIT);
        let hi = asymptotic(1, SERIES_LIMIT);
        assert!((lo - hi).abs() < 1e-10, "{lo} vs {hi}");
    }

    #[test]
    fn table_matches_series() {
        let mut worst: f64 = 0.0;
        for i in 0..20_000 {
            let r = i as f64 * 0.000_6 + 0.000_1;
            worst = worst.max((j1_fast(r) - j1(r)).abs());
        }
        assert!(worst < 5e-12, "table error {worst}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &x in &[0.0, 0.3, 2.0, 7.0, 13.0] {
            let h = 1e-5;
            let fd = (j1(x + h) - j1(x - h)) / (2.0 * h);
            assert!((j1_prime(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn maximum_of_j1() {
        assert!((j1(J1_MAX_ARG) - J1_MAX).abs() < 1e-12);
        assert!(j1_prime(J1_MAX_ARG).abs() < 1e-10);
    }
}
