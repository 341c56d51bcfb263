//! Closed-loop simulation of magneto-sensitive coherent-population-trapping
//! (CPT) spectroscopy with an adaptive Bayesian controller.
//!
//! The crate is organized around the experiment it models:
//!
//! - [`physics`] — five-level density-matrix model: Hamiltonian, Liouvillian
//!   superoperator, steady-state and time-domain solvers, CPT spectra.
//! - [`plant`] — the virtual experiment: voltage → magnetic field maps,
//!   seeded noise injection, and the [`plant::Experiment`] interface that a
//!   hardware driver could implement instead.
//! - [`lineshape`] — four-parameter Lorentzian evaluation and nonlinear
//!   least-squares fitting.
//! - [`bayes`] — grid pdfs in log space: likelihood construction with the
//!   orientation flip rule, posterior updates, moment estimates.
//! - [`controller`] — the adaptive loop that tunes the control voltage until
//!   the fitted resonance sits at the requested frequency.
//! - [`baseline`] — the traditional calibrate-then-invert method used as the
//!   comparison point.
//!
//! Internally every frequency is angular (rad/s); all public interfaces that
//! talk about detunings or resonance positions use ordinary frequency in Hz.

pub mod baseline;
pub mod bayes;
pub mod controller;
pub mod error;
pub mod lineshape;
pub mod physics;
pub mod plant;

pub use baseline::{CalibrationModel, InvertOutcome, ModelKind};
pub use bayes::{FrequencyEstimate, ProbabilityGrid};
pub use controller::{AdaptationResult, ControllerConfig, IterationRecord};
pub use error::Error;
pub use lineshape::{FitReport, LorentzParams};
pub use physics::{AtomParams, DensityMatrix, FieldPoint, SpectrumRaw};
pub use plant::{Experiment, NoiseConfig, SimPlant, SweepConfig, VoltageMap};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
