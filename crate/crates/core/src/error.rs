//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in the simulation and the control loop.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter failed validation (non-finite, out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The Liouvillian null space has dimension > 1 so no unique steady
    /// state exists (e.g. both Rabi frequencies zero).
    #[error("degenerate steady state: null space dimension > 1")]
    DegenerateSteadyState,

    /// The steady-state least-squares residual exceeded its acceptance bound.
    #[error("steady-state solve rejected: relative residual {residual:.3e} > {bound:.3e}")]
    SteadyStateResidual { residual: f64, bound: f64 },

    /// Adaptive step control could not meet the local error tolerance.
    #[error("integrator failure: step size underflow at t = {t:.3e} s")]
    IntegratorFailure { t: f64 },

    /// A measured spectrum carries no usable structure above the noise.
    #[error("flat spectrum: peak-to-peak {range:.3e} below 3x noise estimate {noise:.3e}")]
    FlatSpectrum { range: f64, noise: f64 },

    /// The lineshape fit produced non-finite residuals or parameters.
    #[error("lineshape fit diverged")]
    FitDiverged,

    /// A curve with max == min cannot be unit-normalized.
    #[error("degenerate curve: max == min")]
    DegenerateCurve,

    /// A pdf integrated to zero mass.
    #[error("zero probability mass on the grid")]
    ZeroMass,

    /// Quadrature produced a variance more negative than round-off allows.
    #[error("numerical variance {0:.3e} below tolerance")]
    NumericalVariance(f64),

    /// A probe frequency fell outside the probability grid.
    #[error("probe frequency {probe_hz:.1} Hz outside grid [{lo_hz:.1}, {hi_hz:.1}]")]
    ProbeOutOfWindow { probe_hz: f64, lo_hz: f64, hi_hz: f64 },

    /// More than half of the controller iterations failed to fit.
    #[error("adaptation aborted: {failed} of {total} iterations failed")]
    TooManyFailedIterations { failed: usize, total: usize },

    /// The calibration design matrix is rank deficient.
    #[error("singular regression design")]
    SingularRegression,

    /// Polynomial inversion found no real root in the calibrated span.
    #[error("no real root of the calibration model inside the voltage span")]
    NoRealRoot,

    /// Polynomial inversion found more than one root in the calibrated span.
    #[error("ambiguous inversion: multiple roots inside the voltage span")]
    AmbiguousRoot,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
