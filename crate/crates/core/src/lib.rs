//! Simulation and diagnostics for a Langevin walker driven by a path-memory
//! force and a singular repulsive potential.
//!
//! The walker obeys
//!
//! ```text
//! dx = v dt
//! m dv = ( -v - grad U(x) - grad G(x) + int_0^inf H(x(t) - x(t-s)) K(s) ds ) dt + sigma dW
//! ```
//!
//! and is advanced with Euler-Maruyama, the memory integral being a
//! trapezoid over a ring buffer of past positions plus an analytic tail.

pub mod bessel;
pub mod ergodics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod models;
pub mod quadrature;
pub mod reference;
pub mod rng;
pub mod state;
pub mod variational;

pub use error::{Error, Result};
pub use models::{
    eval_forces, eval_kernel, eval_pilot, validate_assumptions, validate_kernel, Forces,
    KernelSpec, ModelSpec, PilotForceSpec, PilotKind, SamplingPlan, ScalarField,
    SingularKind, SingularPotentialSpec, SmoothKind, SmoothPotentialSpec, ValidationReport,
    VectorField, Verdict, Violation,
};
pub use state::{default_n_mem, tail_integral, weighted_norm, HistoryBuffer, Tail, WalkerState, WeightedNorm};
pub use ergodics::{
    ks_test_correlated, least_squares, mixing_rate, peak_location, radial_histogram, radial_histogram_of,
    rho_from_parts, rho_line, rho_n_and_tilde, stationarity_test, FitTarget, KsResult, Line, MetricParams,
    MixingFit, MixingVerdict, Peak, Point, RadialPdf, RhoValues,
};
pub use integrator::{
    em_step, memory_force, simulate, simulate_ensemble, simulate_stream, Ensemble, Event, EventLog,
    MemoryForce, MemoryQuadrature, Observable, RunningStats, SimConfig, StepOutcome, Stepper, Trajectory,
};
pub use lyapunov::{
    choose_kappa, exp_moment_diagnostic, kappa_bound, phi, psi, EnvelopeFit, ExpMomentPoint, ExpMomentSeries,
    LyapunovParams,
};
pub use rng::GaussianStream;
pub use variational::{
    build_control_path, gamma_residual, rho_closed_form, rho_numeric, zeta_control, ControlPath, GammaSeries,
    Perturbation, VariationalSeries, VariationalState, ZetaSeries,
};
