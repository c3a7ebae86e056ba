//! Solver and experiment harness for semilinear stochastic heat equations on
//! the unit interval with Dirichlet boundary conditions, driven by
//! multiplicative space-time white noise.
//!
//! The state is carried as coefficients against the Dirichlet-Laplacian
//! eigenbasis `√2·sin(jπξ)`; nonlinearities are evaluated pointwise on a
//! uniform lattice and projected back ([`spectral`], [`nemytskii`]). Time
//! stepping is an explicit exponential scheme: the full Euler update is
//! damped by one application of the heat semigroup per step ([`integrator`]).
//! Driving noise comes from a seeded per-mode increment lattice whose
//! time-coarsened and mode-truncated views are bit-exactly consistent with
//! the fine lattice, so refinement studies are genuine couplings
//! ([`noise`], [`harness`]).

pub mod error;
pub mod harness;
pub mod integrator;
pub mod nemytskii;
pub mod noise;
pub mod spectral;

pub use error::{Result, SpdeError};
pub use harness::{
    dyadic_lags, fit_rate, holder_estimate, moment_check, second_moment_curve,
    strong_error_spatial, strong_error_temporal, ErrorReport, ErrorTime, ExperimentConfig,
    HolderReport, MomentPoint, MomentReport, RatePoint, RunningMoments,
};
pub use integrator::{Discretization, InitialDatum, SnapshotPolicy, Stepper, Trajectory};
pub use nemytskii::{ModelSpec, NemytskiiScratch};
pub use noise::NoiseLattice;
pub use spectral::{coeff_dist_sq, coeff_norm_sq, eigenvalue, SpectralPlan};
