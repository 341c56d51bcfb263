//! Grid-based Bayesian engine in log space.
//!
//! Likelihoods come in as unit-normalized lineshape curves, get oriented by
//! the flip rule, and are turned into pdfs on the sweep grid. Posterior
//! updates multiply in log space so that dozens of sequential products of
//! similar distributions stay numerically healthy.

use crate::error::Error;
use crate::Result;

/// Values below this floor are lifted before taking logs so that exact zeros
/// in a min-max-normalized curve do not poison later products with infinities.
const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Tolerance for the trapezoidal normalization invariant.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A pdf sampled on a uniform frequency grid, stored as log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    freqs: Vec<f64>,
    logw: Vec<f64>,
}

/// Posterior mean and standard deviation in Hz.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrequencyEstimate {
    pub mean_hz: f64,
    pub std_hz: f64,
}

fn check_uniform_grid(freqs: &[f64]) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(Error::invalid("grid needs at least 2 nodes"));
    }
    let step = (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    for w in freqs.windows(2) {
        let d = w[1] - w[0];
        if !(d > 0.0) || (d - step).abs() > 1e-9 * step.abs() + 1e-12 {
            return Err(Error::invalid("grid spacing must be uniform"));
        }
    }
    Ok(step)
}

/// Trapezoid weight of node `i` on a uniform grid of `n` nodes.
#[inline]
fn trapezoid_weight(i: usize, n: usize, step: f64) -> f64 {
    if i == 0 || i == n - 1 {
        step / 2.0
    } else {
        step
    }
}

impl ProbabilityGrid {
    /// Grid nodes in Hz.
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Log-weights (natural log of the pdf values).
    pub fn log_weights(&self) -> &[f64] {
        &self.logw
    }

    /// Pdf values per node.
    pub fn pdf(&self) -> Vec<f64> {
        self.logw.iter().map(|&l| l.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Uniform grid spacing in Hz.
    pub fn step(&self) -> f64 {
        (self.freqs[self.freqs.len() - 1] - self.freqs[0]) / (self.freqs.len() - 1) as f64
    }

    /// Trapezoidal integral of the pdf (1 within [`NORMALIZATION_TOL`] after
    /// any constructor or update).
    pub fn integral(&self) -> f64 {
        let n = self.freqs.len();
        let step = self.step();
        self.logw
            .iter()
            .enumerate()
            .map(|(i, &l)| trapezoid_weight(i, n, step) * l.exp())
            .sum()
    }

    /// Pdf value at an arbitrary frequency by linear interpolation.
    pub fn pdf_at(&self, f_hz: f64) -> Result<f64> {
        let lo = self.freqs[0];
        let hi = self.freqs[self.freqs.len() - 1];
        if !(f_hz >= lo && f_hz <= hi) {
            return Err(Error::ProbeOutOfWindow { probe_hz: f_hz, lo_hz: lo, hi_hz: hi });
        }
        Ok(interp_linear(&self.freqs, &self.pdf(), f_hz))
    }

    /// Renormalize in log space so the trapezoid integral is exactly one.
    fn normalize(freqs: Vec<f64>, mut logw: Vec<f64>) -> Result<ProbabilityGrid> {
        let step = check_uniform_grid(&freqs)?;
        if logw.len() != freqs.len() {
            return Err(Error::invalid("log-weight length mismatch"));
        }
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::ZeroMass);
        }
        let n = freqs.len();
        let z: f64 = logw
            .iter()
            .enumerate()
            .map(|(i, &l)| trapezoid_weight(i, n, step) * (l - m).exp())
            .sum();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::ZeroMass);
        }
        let log_norm = m + z.ln();
        for l in logw.iter_mut() {
            *l -= log_norm;
        }
        Ok(ProbabilityGrid { freqs, logw })
    }
}

/// Uniform prior over the grid span: pdf ≡ 1/(f_max − f_min).
pub fn uniform_prior(freqs: &[f64]) -> Result<ProbabilityGrid> {
    check_uniform_grid(freqs)?;
    let span = freqs[freqs.len() - 1] - freqs[0];
    let logw = vec![-span.ln(); freqs.len()];
    ProbabilityGrid::normalize(freqs.to_vec(), logw)
}

/// Min-max normalize a sampled curve to [0, 1].
pub fn normalize_unit(curve: &[f64]) -> Result<Vec<f64>> {
    let mut out = curve.to_vec();
    crate::physics::normalize_min_max(&mut out)?;
    Ok(out)
}

/// Orientation flip rule.
///
/// The unit-normalized curve is kept as-is when its interpolated value at
/// the target frequency exceeds 0.5 and replaced by 1 − L̃ pointwise
/// otherwise (ties flip). Returns the oriented curve and whether it flipped.
pub fn orient(freqs: &[f64], l_norm: &[f64], fd_hz: f64) -> Result<(Vec<f64>, bool)> {
    check_uniform_grid(freqs)?;
    if l_norm.len() != freqs.len() {
        return Err(Error::invalid("curve length mismatch"));
    }
    let lo = freqs[0];
    let hi = freqs[freqs.len() - 1];
    if !(fd_hz >= lo && fd_hz <= hi) {
        return Err(Error::ProbeOutOfWindow { probe_hz: fd_hz, lo_hz: lo, hi_hz: hi });
    }
    let at_target = interp_linear(freqs, l_norm, fd_hz);
    if at_target > 0.5 {
        Ok((l_norm.to_vec(), false))
    } else {
        Ok((l_norm.iter().map(|&v| 1.0 - v).collect(), true))
    }
}

/// Normalize a nonnegative curve into a pdf on the grid (Riemann–trapezoid).
pub fn to_pdf(freqs: &[f64], curve: &[f64]) -> Result<ProbabilityGrid> {
    check_uniform_grid(freqs)?;
    if curve.len() != freqs.len() {
        return Err(Error::invalid("curve length mismatch"));
    }
    if curve.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid("curve must be finite and nonnegative"));
    }
    let logw: Vec<f64> = curve.iter().map(|&v| v.max(LIKELIHOOD_FLOOR).ln()).collect();
    ProbabilityGrid::normalize(freqs.to_vec(), logw)
}

/// Bayes update: posterior ∝ prior · likelihood, renormalized in log space.
pub fn posterior_update(
    prior: &ProbabilityGrid,
    likelihood: &ProbabilityGrid,
) -> Result<ProbabilityGrid> {
    if prior.freqs != likelihood.freqs {
        return Err(Error::invalid("prior and likelihood grids differ"));
    }
    let logw: Vec<f64> = prior
        .logw
        .iter()
        .zip(&likelihood.logw)
        .map(|(&a, &b)| a + b)
        .collect();
    ProbabilityGrid::normalize(prior.freqs.clone(), logw)
}

/// Mean and standard deviation of the pdf by trapezoidal quadrature.
///
/// The variance is accumulated in centered form Σ w·(f − mean)²·p, which is
/// algebraically Eq.-style ∫f²p − mean² but cannot go negative beyond
/// round-off.
pub fn estimate(grid: &ProbabilityGrid) -> Result<FrequencyEstimate> {
    let n = grid.len();
    let step = grid.step();
    let pdf = grid.pdf();
    let mut mean = 0.0;
    for i in 0..n {
        mean += trapezoid_weight(i, n, step) * grid.freqs[i] * pdf[i];
    }
    let mut var = 0.0;
    for i in 0..n {
        let d = grid.freqs[i] - mean;
        var += trapezoid_weight(i, n, step) * d * d * pdf[i];
    }
    if var < -1e-18 {
        return Err(Error::NumericalVariance(var));
    }
    Ok(FrequencyEstimate { mean_hz: mean, std_hz: var.max(0.0).sqrt() })
}

/// Linear interpolation on a sorted grid; `x` must lie inside the span.
fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    match xs.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => ys[i],
        Err(i) => {
            if i == 0 {
                ys[0]
            } else if i >= n {
                ys[n - 1]
            } else {
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                ys[i - 1] + t * (ys[i] - ys[i - 1])
            }
        }
    }
}
