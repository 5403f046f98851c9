//! Reproducible Gaussian streams.
//!
//! Each ensemble member draws from a ChaCha8 generator keyed by the run seed,
//! with the member index as the stream id, so members are independent of
//! scheduling and of each other.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Standard normal draws by the Box-Muller transform.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
    stream: u64,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussianStream {
            rng,
            spare: None,
            stream,
        }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform on `(0, 1]`, 53 bits.
    fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for o in out {
            *o = self.next();
        }
    }
}
