//! The adaptive loop: acquire a spectrum, fit it, update the posterior, and
//! move the voltage.
//!
//! Each iteration k sweeps at voltage U_k, fits the Lorentzian, and builds
//! two pdfs from the fitted curve: the peak-shaped likelihood (used to pick
//! the step direction and gain around the target frequency) and the oriented
//! likelihood from the flip rule (multiplied into the posterior). The
//! voltage then moves by ±h·δU/k, so early steps are large and the loop
//! settles as 1/k.
//!
//! Direction probes deliberately use the un-flipped likelihood: the flip
//! rule exists to keep the posterior product well-formed when the resonance
//! sits far from the target, but the sign information about *where* the
//! resonance is lives in the peak, and probing the flipped curve would
//! invert it exactly when the loop is far from lock.

use crate::bayes::{
    estimate, normalize_unit, orient, posterior_update, to_pdf, uniform_prior, FrequencyEstimate,
    ProbabilityGrid,
};
use crate::error::Error;
use crate::lineshape::{eval_lorentz_grid, fit_lorentz, LorentzParams};
use crate::plant::Experiment;
use crate::Result;

/// Settings of one adaptation run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Target frequency f_d, Hz.
    pub fd_hz: f64,
    /// Initial voltage U₀, V.
    pub u0_volts: f64,
    /// Voltage step scale δU, V.
    pub delta_u_volts: f64,
    /// Probe offset δf, Hz.
    pub delta_f_hz: f64,
    /// Lower clamp of the applied gain h.
    pub h_min: f64,
    /// Upper clamp of the applied gain h.
    pub h_max: f64,
    /// Total iterations N.
    pub iters: usize,
    /// First iteration (1-based) of the tail average for U_d.
    pub tail_k: usize,
    /// Last iteration (1-based) of the tail average for U_d.
    pub tail_m: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig::new(-807.6e3, 8.5)
    }
}

impl ControllerConfig {
    /// Paper-style defaults: δU = 2 V, δf = 42 kHz, h ∈ [0.2, 2], 50
    /// iterations, U_d averaged over the last ten.
    pub fn new(fd_hz: f64, u0_volts: f64) -> Self {
        ControllerConfig {
            fd_hz,
            u0_volts,
            delta_u_volts: 2.0,
            delta_f_hz: 42e3,
            h_min: 0.2,
            h_max: 2.0,
            iters: 50,
            tail_k: 41,
            tail_m: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fd_hz.is_finite() || !self.u0_volts.is_finite() {
            return Err(Error::invalid("fd and U0 must be finite"));
        }
        if !(self.delta_u_volts > 0.0) {
            return Err(Error::invalid("delta_u must be positive"));
        }
        if !(self.delta_f_hz > 0.0) {
            return Err(Error::invalid("delta_f must be positive"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_max) {
            return Err(Error::invalid("need 0 < h_min <= h_max"));
        }
        if self.iters == 0 {
            return Err(Error::invalid("need at least one iteration"));
        }
        if !(1 <= self.tail_k && self.tail_k <= self.tail_m && self.tail_m <= self.iters) {
            return Err(Error::invalid("need 1 <= tail_k <= tail_m <= iters"));
        }
        Ok(())
    }
}

/// Everything recorded about one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Iteration index, 1-based.
    pub k: usize,
    /// Voltage commanded this iteration, V.
    pub u_k: f64,
    /// Fitted lineshape, absent when the fit failed.
    pub fit: Option<LorentzParams>,
    pub fit_ok: bool,
    /// Whether the orientation rule flipped the likelihood.
    pub flipped: bool,
    /// Posterior mean after this iteration, Hz.
    pub mean_hz: f64,
    /// Posterior standard deviation after this iteration, Hz.
    pub std_hz: f64,
    /// Step direction exponent: voltage moves by (−1)^s · h · δU/k.
    pub s: u8,
    /// Applied (clamped) gain.
    pub h: f64,
    /// Voltage for the next iteration, V.
    pub u_next: f64,
}

/// Output of a full adaptation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationResult {
    pub records: Vec<IterationRecord>,
    /// Suggested voltage: mean of U_k over the tail window.
    pub u_d_volts: f64,
    pub posterior_final: ProbabilityGrid,
    /// Posterior mean/std after the last iteration.
    pub final_estimate: FrequencyEstimate,
    /// Posterior snapshots at the requested iterations, in iteration order.
    pub posterior_snapshots: Vec<(usize, ProbabilityGrid)>,
}

/// Step direction from the two probes around the target.
///
/// s = 0 (voltage up) when P(f_d − δf) < P(f_d + δf), s = 1 when the
/// difference is positive, and s = 0 on an exact tie.
pub fn step_direction(p: &ProbabilityGrid, fd_hz: f64, delta_f_hz: f64) -> Result<u8> {
    let below = p.pdf_at(fd_hz - delta_f_hz)?;
    let above = p.pdf_at(fd_hz + delta_f_hz)?;
    let diff = below - above;
    Ok(if diff > 0.0 { 1 } else { 0 })
}

/// Gain from the probe difference over the discrete curvature at the target,
/// clamped in magnitude to [h_min, h_max]. A vanishing denominator maps to
/// h_min.
pub fn step_gain(
    p: &ProbabilityGrid,
    fd_hz: f64,
    delta_f_hz: f64,
    h_min: f64,
    h_max: f64,
) -> Result<f64> {
    let below = p.pdf_at(fd_hz - delta_f_hz)?;
    let above = p.pdf_at(fd_hz + delta_f_hz)?;
    let at = p.pdf_at(fd_hz)?;
    let raw = (below - above) / (below + above - 2.0 * at);
    if !raw.is_finite() {
        return Ok(h_min);
    }
    Ok(raw.abs().clamp(h_min, h_max))
}

/// The voltage update rule U_{k+1} = U_k + (−1)^s · h · δU / k.
pub fn next_voltage(u_k: f64, k: usize, s: u8, h: f64, delta_u: f64) -> f64 {
    let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
    u_k + sign * h * delta_u / k as f64
}

/// Errors that mark a single iteration as failed instead of aborting the run.
fn is_soft_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::FitDiverged
            | Error::FlatSpectrum { .. }
            | Error::DegenerateCurve
            | Error::ZeroMass
    )
}

struct IterationOutcome {
    fit: LorentzParams,
    flipped: bool,
    direction_pdf: ProbabilityGrid,
    oriented_pdf: ProbabilityGrid,
}

fn process_spectrum(
    grid: &[f64],
    spectrum: &crate::physics::SpectrumRaw,
    fd_hz: f64,
) -> Result<IterationOutcome> {
    let report = fit_lorentz(spectrum)?;
    let curve = eval_lorentz_grid(&report.params, grid);
    let l_norm = normalize_unit(&curve)?;
    let (oriented, flipped) = orient(grid, &l_norm, fd_hz)?;
    let direction_pdf = to_pdf(grid, &l_norm)?;
    let oriented_pdf = to_pdf(grid, &oriented)?;
    Ok(IterationOutcome { fit: report.params, flipped, direction_pdf, oriented_pdf })
}

/// Run the full adaptive loop against an experiment.
///
/// Fit failures are tolerated: the iteration is recorded with `fit_ok =
/// false`, the posterior stays untouched, and the voltage moves by
/// h_min·δU/k in the last successful direction (up, if none yet). The run
/// aborts once more than half of all iterations have failed.
pub fn run_adaptation(
    cfg: &ControllerConfig,
    plant: &mut dyn Experiment,
) -> Result<AdaptationResult> {
    run_adaptation_with_snapshots(cfg, plant, &[])
}

/// [`run_adaptation`] that additionally captures the posterior after each
/// iteration listed in `snapshot_ks` (1-based).
pub fn run_adaptation_with_snapshots(
    cfg: &ControllerConfig,
    plant: &mut dyn Experiment,
    snapshot_ks: &[usize],
) -> Result<AdaptationResult> {
    cfg.validate()?;

    let mut snapshots: Vec<(usize, ProbabilityGrid)> = Vec::new();
    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.iters);
    let mut posterior: Option<ProbabilityGrid> = None;
    let mut estimate_now: Option<FrequencyEstimate> = None;
    let mut u = cfg.u0_volts;
    let mut last_s: u8 = 0;
    let mut failed = 0usize;

    for k in 1..=cfg.iters {
        let spectrum = plant.acquire_spectrum(u)?;
        let grid = spectrum.detunings_hz();
        if posterior.is_none() {
            posterior = Some(uniform_prior(&grid)?);
        }
        let prior = posterior.take().expect("posterior initialized above");

        match process_spectrum(&grid, &spectrum, cfg.fd_hz) {
            Ok(out) => {
                let post = posterior_update(&prior, &out.oriented_pdf)?;
                let est = estimate(&post)?;
                let s = step_direction(&out.direction_pdf, cfg.fd_hz, cfg.delta_f_hz)?;
                let h = step_gain(
                    &out.direction_pdf,
                    cfg.fd_hz,
                    cfg.delta_f_hz,
                    cfg.h_min,
                    cfg.h_max,
                )?;
                let u_next = next_voltage(u, k, s, h, cfg.delta_u_volts);
                records.push(IterationRecord {
                    k,
                    u_k: u,
                    fit: Some(out.fit),
                    fit_ok: true,
                    flipped: out.flipped,
                    mean_hz: est.mean_hz,
                    std_hz: est.std_hz,
                    s,
                    h,
                    u_next,
                });
                if snapshot_ks.contains(&k) {
                    snapshots.push((k, post.clone()));
                }
                posterior = Some(post);
                estimate_now = Some(est);
                last_s = s;
                u = u_next;
            }
            Err(e) if is_soft_failure(&e) => {
                failed += 1;
                if 2 * failed > cfg.iters {
                    return Err(Error::TooManyFailedIterations {
                        failed,
                        total: cfg.iters,
                    });
                }
                let est = match &estimate_now {
                    Some(e) => *e,
                    None => estimate(&prior)?,
                };
                let u_next = next_voltage(u, k, last_s, cfg.h_min, cfg.delta_u_volts);
                records.push(IterationRecord {
                    k,
                    u_k: u,
                    fit: None,
                    fit_ok: false,
                    flipped: false,
                    mean_hz: est.mean_hz,
                    std_hz: est.std_hz,
                    s: last_s,
                    h: cfg.h_min,
                    u_next,
                });
                if snapshot_ks.contains(&k) {
                    snapshots.push((k, prior.clone()));
                }
                posterior = Some(prior);
                estimate_now = Some(est);
                u = u_next;
            }
            Err(e) => return Err(e),
        }
    }

    let tail: Vec<f64> = records[(cfg.tail_k - 1)..cfg.tail_m]
        .iter()
        .map(|r| r.u_k)
        .collect();
    let u_d = tail.iter().sum::<f64>() / tail.len() as f64;
    let posterior_final = posterior.expect("at least one iteration ran");
    let final_estimate = estimate_now.expect("at least one iteration ran");

    Ok(AdaptationResult {
        records,
        u_d_volts: u_d,
        posterior_final,
        final_estimate,
        posterior_snapshots: snapshots,
    })
}
