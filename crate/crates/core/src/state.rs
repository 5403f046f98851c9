//! Walker state and the sampled history `eta(t; s) = x(t - s)`.

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::models::KernelSpec;

/// Tolerance on the lossy-truncation bound before a norm is flagged.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;

/// Position, velocity and time of a walker.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl WalkerState {
    pub fn new(x: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if x.len() != v.len() || x.is_empty() {
            return Err(Error::Argument(format!(
                "position and velocity dimensions differ ({} vs {})",
                x.len(),
                v.len()
            )));
        }
        Ok(WalkerState { x, v, t })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite()) && self.t.is_finite()
    }
}

/// What the history holds beyond the stored samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// The walker sat at this position for all earlier times.
    Constant(Vec<f64>),
    /// Older samples were discarded; only an error bound is kept.
    Truncated,
}

/// Ring buffer of past positions sampled every `dt`, most recent first.
///
/// Sample `k` is `x(t - k dt)` for `k = 0..=n_mem`. While fewer than
/// `n_mem + 1` samples have been pushed, a constant tail stands in for the
/// missing nodes.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dt: f64,
    n_mem: usize,
    dim: usize,
    data: Vec<f64>,
    head: usize,
    len: usize,
    tail: Tail,
    /// Largest `|x|` among samples evicted while the tail was not exact.
    max_evicted_norm: f64,
}

/// Number of history steps for a kernel at step `dt`, covering
/// `K(T)/K(0) <= 1e-12`.
pub fn default_n_mem(kernel: &KernelSpec, dt: f64) -> usize {
    (kernel.default_horizon() / dt - 1e-9).ceil() as usize
}

/// Buffers are equal when they hold the same samples on the same grid,
/// regardless of where the ring starts.
impl PartialEq for HistoryBuffer {
    fn eq(&self, other: &Self) -> bool {
        self.dt == other.dt
            && self.n_mem == other.n_mem
            && self.dim == other.dim
            && self.len == other.len
            && self.tail == other.tail
            && self.max_evicted_norm == other.max_evicted_norm
            && self.samples().eq(other.samples())
    }
}

impl HistoryBuffer {
    /// Empty buffer. `tail` describes the past beyond the stored samples.
    pub fn empty(dim: usize, dt: f64, n_mem: usize, tail: Tail) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("history step must be > 0, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::Argument("history dimension must be >= 1".into()));
        }
        if let Tail::Constant(c) = &tail {
            if c.len() != dim {
                return Err(Error::Argument(format!(
                    "tail constant has dimension {}, expected {dim}",
                    c.len()
                )));
            }
        }
        Ok(HistoryBuffer {
            dt,
            n_mem,
            dim,
            data: vec![0.0; (n_mem + 1) * dim],
            head: 0,
            len: 0,
            tail,
            max_evicted_norm: 0.0,
        })
    }

    /// History of a walker that has sat at `c` forever: the buffer is full of
    /// `c` and the tail is `c`.
    pub fn constant_past(c: &[f64], dt: f64, n_mem: usize) -> Result<Self> {
        let mut buf = HistoryBuffer::empty(c.len(), dt, n_mem, Tail::Constant(c.to_vec()))?;
        for _ in 0..=n_mem {
            buf.push_sample(c);
        }
        Ok(buf)
    }

    /// History from explicit samples (most recent first) and a tail.
    pub fn from_samples(
        samples: &[Vec<f64>],
        dt: f64,
        n_mem: usize,
        tail: Tail,
    ) -> Result<Self> {
        let dim = match (&tail, samples.first()) {
            (_, Some(s)) => s.len(),
            (Tail::Constant(c), None) => c.len(),
            (Tail::Truncated, None) => {
                return Err(Error::Argument("history needs a sample or a constant tail".into()))
            }
        };
        if samples.len() > n_mem + 1 {
            return Err(Error::Argument(format!(
                "{} samples exceed the capacity {}",
                samples.len(),
                n_mem + 1
            )));
        }
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Argument("history samples differ in dimension".into()));
        }
        let mut buf = HistoryBuffer::empty(dim, dt, n_mem, tail)?;
        for s in samples.iter().rev() {
            buf.push_sample(s);
        }
        Ok(buf)
    }

    pub(crate) fn set_max_evicted_norm(&mut self, value: f64) {
        self.max_evicted_norm = value;
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_mem(&self) -> usize {
        self.n_mem
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.n_mem + 1
    }

    /// `T_mem = n_mem dt`.
    pub fn horizon(&self) -> f64 {
        self.n_mem as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn tail_constant(&self) -> Option<&[f64]> {
        match &self.tail {
            Tail::Constant(c) => Some(c),
            Tail::Truncated => None,
        }
    }

    pub fn max_evicted_norm(&self) -> f64 {
        self.max_evicted_norm
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self.tail, Tail::Truncated)
    }

    /// Stored sample `k` (`k = 0` is the current position).
    pub fn sample(&self, k: usize) -> Option<&[f64]> {
        if k >= self.len {
            return None;
        }
        let i = (self.head + k) % self.capacity();
        Some(&self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Node `k` of the history grid: the stored sample, or the tail constant
    /// where nothing is stored yet.
    pub fn node(&self, k: usize) -> Option<&[f64]> {
        self.sample(k).or_else(|| {
            if k <= self.n_mem {
                self.tail_constant()
            } else {
                None
            }
        })
    }

    /// Number of grid nodes with a defined value.
    pub fn node_count(&self) -> usize {
        if self.tail_constant().is_some() {
            self.n_mem + 1
        } else {
            self.len
        }
    }

    /// Stored samples, most recent first.
    pub fn samples(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |k| self.sample(k).unwrap())
    }

    /// Stored samples as at most two contiguous row-major runs, most recent
    /// first.
    pub(crate) fn runs(&self) -> (&[f64], &[f64]) {
        let cap = self.capacity();
        let first = (cap - self.head).min(self.len);
        let a = &self.data[self.head * self.dim..(self.head + first) * self.dim];
        let b = &self.data[..(self.len - first) * self.dim];
        (a, b)
    }

    /// Makes `x_new` the most recent sample, shifting the others back.
    ///
    /// When full, the oldest sample leaves the buffer. That is lossless only
    /// if it equals the constant tail; otherwise the tail is dropped and the
    /// buffer keeps a bound on what was lost.
    pub fn push_sample(&mut self, x_new: &[f64]) {
        debug_assert_eq!(x_new.len(), self.dim);
        let cap = self.capacity();
        if self.len == cap {
            let oldest = (self.head + cap - 1) % cap;
            let evicted = &self.data[oldest * self.dim..(oldest + 1) * self.dim];
            let exact = matches!(&self.tail, Tail::Constant(c) if c.as_slice() == evicted);
            if !exact {
                if let Tail::Constant(c) = &self.tail {
                    self.max_evicted_norm = self.max_evicted_norm.max(norm(c));
                }
                self.max_evicted_norm = self.max_evicted_norm.max(norm(evicted));
                self.tail = Tail::Truncated;
            }
        } else {
            self.len += 1;
        }
        self.head = (self.head + cap - 1) % cap;
        self.data[self.head * self.dim..(self.head + 1) * self.dim].copy_from_slice(x_new);
    }

    /// Bound on `int_{T}^inf |eta(s)|^q K(s) ds` for the discarded past,
    /// where `T` is the end of the defined grid.
    pub fn truncation_bound(&self, kernel: &KernelSpec, q: f64) -> f64 {
        if !self.is_truncated() {
            return 0.0;
        }
        let end = (self.node_count().max(1) - 1) as f64 * self.dt;
        self.max_evicted_norm.powf(q) * kernel.tail_bound(end)
    }

    /// Node-wise `wa * a + wb * b` over the defined grid. Both histories must
    /// share `dt` and `n_mem`; the tail is combined only when both are
    /// constant.
    pub fn combine(a: &HistoryBuffer, wa: f64, b: &HistoryBuffer, wb: f64) -> Result<HistoryBuffer> {
        if a.dt != b.dt || a.n_mem != b.n_mem || a.dim != b.dim {
            return Err(Error::Argument(format!(
                "histories differ in grid: (dt {}, n_mem {}, d {}) vs (dt {}, n_mem {}, d {})",
                a.dt, a.n_mem, a.dim, b.dt, b.n_mem, b.dim
            )));
        }
        let nodes = a.node_count().min(b.node_count());
        let mut out = a.clone();
        out.data.iter_mut().for_each(|c| *c = 0.0);
        out.head = 0;
        out.len = nodes;
        for k in 0..nodes {
            let (x, y) = (a.node(k).unwrap(), b.node(k).unwrap());
            for i in 0..a.dim {
                out.data[k * a.dim + i] = wa * x[i] + wb * y[i];
            }
        }
        out.tail = match (&a.tail, &b.tail) {
            (Tail::Constant(x), Tail::Constant(y)) => {
                Tail::Constant(x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect())
            }
            _ => Tail::Truncated,
        };
        out.max_evicted_norm = wa.abs() * a.max_evicted_norm + wb.abs() * b.max_evicted_norm;
        Ok(out)
    }

    /// Scales every sample and the tail by `lambda`.
    pub fn scaled(&self, lambda: f64) -> HistoryBuffer {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|c| *c *= lambda);
        if let Tail::Constant(c) = &mut out.tail {
            c.iter_mut().for_each(|ci| *ci *= lambda);
        }
        out.max_evicted_norm *= lambda.abs();
        out
    }
}

/// `(int_0^inf |eta(s)|^q K(s) ds)^{1/q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm {
    pub q: f64,
    pub value: f64,
    /// Set when discarded history may contribute more than the tolerance.
    pub warning: Option<String>,
}

/// Trapezoid weights `w_k K(k dt)` for `nodes` grid points.
pub(crate) fn trapezoid_weights(kernel: &KernelSpec, dt: f64, nodes: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..nodes)
        .map(|k| dt * kernel.eval_unchecked(k as f64 * dt))
        .collect();
    match nodes {
        0 => {}
        1 => w[0] = 0.0,
        _ => {
            w[0] *= 0.5;
            w[nodes - 1] *= 0.5;
        }
    }
    w
}

/// Weighted memory norm: trapezoid on the stored grid plus the analytic tail
/// for a constant past.
pub fn weighted_norm(buffer: &HistoryBuffer, kernel: &KernelSpec, q: f64) -> Result<WeightedNorm> {
    let weights = trapezoid_weights(kernel, buffer.dt(), buffer.node_count());
    weighted_norm_with(buffer, kernel, q, &weights)
}

/// As [`weighted_norm`] with precomputed full-grid trapezoid weights.
pub(crate) fn weighted_norm_with(
    buffer: &HistoryBuffer,
    kernel: &KernelSpec,
    q: f64,
    weights: &[f64],
) -> Result<WeightedNorm> {
    if !(q > 1.0) {
        return Err(Error::Argument(format!("norm exponent must be > 1, got {q}")));
    }
    let nodes = buffer.node_count();
    let rebuilt;
    let weights = if weights.len() == nodes {
        weights
    } else {
        rebuilt = trapezoid_weights(kernel, buffer.dt(), nodes);
        &rebuilt
    };
    let mut sum = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let n2: f64 = buffer.node(k).unwrap().iter().map(|c| c * c).sum();
        if n2 > 0.0 {
            sum += w * n2.powf(0.5 * q);
        }
    }
    let end = (nodes.max(1) - 1) as f64 * buffer.dt();
    let mut warning = None;
    match buffer.tail() {
        Tail::Constant(c) => {
            let mass = kernel.tail_integral(end).map_err(|_| {
                Error::Unsupported("constant tail requires an exponential kernel".into())
            })?;
            sum += norm(c).powf(q) * mass;
        }
        Tail::Truncated => {
            let bound = buffer.truncation_bound(kernel, q);
            if bound > TRUNCATION_TOLERANCE {
                warning = Some(format!(
                    "discarded history may contribute up to {bound:.3e} to the integral"
                ));
            }
        }
    }
    Ok(WeightedNorm {
        q,
        value: sum.powf(1.0 / q),
        warning,
    })
}

/// `int_T^inf K(s) ds`; only `moment = 0` is supported.
pub fn tail_integral(kernel: &KernelSpec, t: f64, moment: u32) -> Result<f64> {
    if moment != 0 {
        return Err(Error::Unsupported(format!("tail moment {moment} is not available")));
    }
    kernel.tail_integral(t)
}
