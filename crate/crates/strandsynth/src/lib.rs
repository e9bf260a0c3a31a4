//! Physical-modeling synthesizer for nonlinear planar string vibration.
//!
//! The engine simulates a stiff, lossy string whose transverse displacement `u`
//! and longitudinal displacement `zeta` are coupled through a geometric
//! nonlinearity. The continuous model is discretized with an implicit
//! finite-difference time-domain scheme: each audio-rate time step assembles a
//! banded block system over the stacked interior state `w = [u; zeta]` and
//! advances it with a direct banded solve. Excitation comes from plucks
//! (initial conditions), a bowed friction model solved per step by safeguarded
//! Newton iteration, and a lumped-mass hammer in unilateral contact.
//!
//! The crate is organized as:
//!
//! * [`params`]: parameter types, validation, and randomized sampling.
//! * [`grid`]: stable spatio-temporal grid construction.
//! * [`ops`]: banded spatial operators and cross-grid interpolants.
//! * [`linalg`]: banded and dense LU factorizations.
//! * [`scheme`]: per-step block assembly and the render loop.
//! * [`excitation`]: pluck, bow, and hammer models.
//! * [`analysis`]: pitch estimation, spectra, mode tables, metrics.
//! * [`wav`], [`config`], [`dataset`], [`bench`], [`verify`]: I/O,
//!   dataset generation, benchmarking, and the self-check suites.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod excitation;
pub mod grid;
pub mod linalg;
pub mod ops;
pub mod params;
pub mod rng;
pub mod scheme;
pub mod verify;
pub mod wav;

pub use error::{Error, Result};
pub use grid::{compute_grid, Grid};
pub use ops::{build_operators, BandedMatrix, BoundaryClosure, OperatorSet};
pub use params::{
    theta_default, validate, LinearSolverKind, ParamDistribution, Range, SamplingLaw,
    SimulationConfig, SolverSettings, StringParams, ValidationReport,
};
pub use scheme::{render, render_on_grid, RenderResult};
