//! The reference experiment: radial density of the walker for a given
//! Coulomb strength, with a stationarity check.

use serde::Serialize;

use crate::ergodics::{peak_location, radial_histogram, stationarity_test, KsResult, Peak, RadialPdf};
use crate::error::Result;
use crate::integrator::{simulate, SimConfig, Trajectory};

pub const DEFAULT_T_MAX: f64 = 2000.0;
pub const FULL_T_MAX: f64 = 1e4;
pub const DEFAULT_BURN_IN: f64 = 500.0;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_SPLIT: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Fig1Run {
    pub config: SimConfig,
    pub trajectory: Trajectory,
    pub pdf: RadialPdf,
    pub peak: Peak,
    pub stationarity: KsResult,
}

/// Summary without the trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct Fig1Summary {
    pub coulomb_alpha: f64,
    pub t_max: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub peak: Peak,
    pub sqrt_alpha: f64,
    pub peak_over_sqrt_alpha: f64,
    pub stationarity: KsResult,
}

impl Fig1Run {
    pub fn summary(&self) -> Fig1Summary {
        let a = self.config.model.singular.coulomb_alpha().unwrap_or(0.0);
        Fig1Summary {
            coulomb_alpha: a,
            t_max: self.config.t_max,
            burn_in: self.config.burn_in,
            seed: self.config.seed,
            peak: self.peak.clone(),
            sqrt_alpha: a.sqrt(),
            peak_over_sqrt_alpha: self.peak.radius / a.sqrt(),
            stationarity: self.stationarity.clone(),
        }
    }
}

/// Config of the reference run: walker and its past at `(2 pi, 0)`.
pub fn fig1_config(coulomb_alpha: f64, t_max: f64, burn_in: f64, seed: u64) -> Result<SimConfig> {
    let mut c = SimConfig::reference(coulomb_alpha, t_max)?;
    c.burn_in = burn_in;
    c.seed = seed;
    c.validate()?;
    Ok(c)
}

pub fn run_fig1(config: &SimConfig, bins: usize, split: f64) -> Result<Fig1Run> {
    let trajectory = simulate(config)?;
    let pdf = radial_histogram(&trajectory, config.burn_in, bins)?;
    let peak = peak_location(&pdf)?;
    let stationarity = stationarity_test(&trajectory, config.burn_in, split)?;
    Ok(Fig1Run {
        config: config.clone(),
        trajectory,
        pdf,
        peak,
        stationarity,
    })
}
