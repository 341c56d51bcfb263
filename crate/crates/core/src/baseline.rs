//! The traditional calibration method: measure resonance centers at a set of
//! manually chosen voltages, fit f = g(U) by least squares, and invert the
//! polynomial at the target frequency.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::lineshape::fit_lorentz;
use crate::physics::{simulate_spectrum, AtomParams};
use crate::plant::{Experiment, SimPlant, VoltageMap};
use crate::Result;

/// Polynomial order of the calibration curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearFit,
    QuadraticFit,
}

impl ModelKind {
    pub fn order(&self) -> usize {
        match self {
            ModelKind::LinearFit => 1,
            ModelKind::QuadraticFit => 2,
        }
    }
}

/// Fitted calibration curve f = g(U).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationModel {
    pub kind: ModelKind,
    /// Polynomial coefficients in ascending powers of U, Hz per Vⁿ.
    pub coeffs: Vec<f64>,
    /// Standard deviation of the regression residuals, Hz.
    pub residual_std_hz: f64,
    /// Voltage range that was calibrated, V.
    pub voltage_span: (f64, f64),
    /// Range of measured center frequencies, Hz.
    pub freq_range: (f64, f64),
}

impl CalibrationModel {
    /// Evaluate g(U).
    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

/// Result of inverting the calibration curve at a target frequency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InvertOutcome {
    pub u_volts: f64,
    /// True when the target lay outside the measured frequency range.
    pub extrapolated: bool,
}

/// Measure one spectrum per voltage and regress center vs. voltage.
pub fn calibrate(
    experiment: &mut dyn Experiment,
    voltages: &[f64],
    kind: ModelKind,
) -> Result<CalibrationModel> {
    let order = kind.order();
    let p = order + 1;
    if voltages.len() < order + 2 {
        return Err(Error::invalid(format!(
            "need at least {} voltages for a {kind:?}",
            order + 2
        )));
    }
    let lo = voltages.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = voltages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::SingularRegression);
    }

    let mut centers = Vec::with_capacity(voltages.len());
    for &u in voltages {
        let spectrum = experiment.acquire_spectrum(u)?;
        centers.push(fit_lorentz(&spectrum)?.params.eps);
    }

    let (coeffs, residual_std) = polyfit(voltages, &centers, order)?;
    let f_lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
    let f_hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let model = CalibrationModel {
        kind,
        coeffs,
        residual_std_hz: residual_std,
        voltage_span: (lo, hi),
        freq_range: (f_lo, f_hi),
    };
    if model.coeffs[p - 1] == 0.0 {
        return Err(Error::SingularRegression);
    }
    Ok(model)
}

/// Ordinary least-squares polynomial fit; returns (coefficients ascending,
/// residual std with n − p degrees of freedom).
fn polyfit(xs: &[f64], ys: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    let n = xs.len();
    let p = order + 1;
    // Center and scale the abscissa for conditioning, then map back.
    let mean = xs.iter().sum::<f64>() / n as f64;
    let scale = xs
        .iter()
        .map(|x| (x - mean).abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut design = DMatrix::<f64>::zeros(n, p);
    for (i, &x) in xs.iter().enumerate() {
        let t = (x - mean) / scale;
        let mut pow = 1.0;
        for j in 0..p {
            design[(i, j)] = pow;
            pow *= t;
        }
    }
    let rhs = DVector::from_column_slice(ys);
    let qr = design.clone().qr();
    let r = qr.r();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..p {
        let d = r[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmax == 0.0 || dmin < 1e-12 * dmax {
        return Err(Error::SingularRegression);
    }
    let mut qtb = rhs.clone();
    qr.q_tr_mul(&mut qtb);
    let scaled = r
        .solve_upper_triangular(&qtb.rows(0, p).into_owned())
        .ok_or(Error::SingularRegression)?;

    // Residuals in the original coordinates.
    let mut ssr = 0.0;
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let _ = i;
        let t = (x - mean) / scale;
        let mut fit = 0.0;
        for j in (0..p).rev() {
            fit = fit * t + scaled[j];
        }
        ssr += (fit - y) * (fit - y);
    }
    let dof = (n - p).max(1);
    let residual_std = (ssr / dof as f64).sqrt();

    // Expand the shifted/scaled polynomial back to ascending powers of x.
    let mut coeffs = vec![0.0; p];
    // poly(t) with t = (x - mean)/scale; accumulate binomial expansion.
    for j in 0..p {
        // scaled[j] * ((x - mean)/scale)^j
        let c = scaled[j] / scale.powi(j as i32);
        // (x - mean)^j = sum_m binom(j, m) x^m (-mean)^(j-m)
        let mut binom = 1.0f64;
        for m in 0..=j {
            if m > 0 {
                binom = binom * (j - m + 1) as f64 / m as f64;
            }
            coeffs[m] += c * binom * (-mean).powi((j - m) as i32);
        }
    }
    Ok((coeffs, residual_std))
}

/// Invert g at the target frequency.
///
/// Linear models invert in closed form; quadratic models pick the real root
/// inside the calibrated voltage span and report an error when zero or two
/// roots qualify. `extrapolated` flags targets outside the measured
/// frequency range.
pub fn invert(model: &CalibrationModel, fd_hz: f64) -> Result<InvertOutcome> {
    let extrapolated = fd_hz < model.freq_range.0 || fd_hz > model.freq_range.1;
    let (lo, hi) = model.voltage_span;
    let span_tol = 1e-9 * (hi - lo).abs();
    let in_span = |u: f64| u >= lo - span_tol && u <= hi + span_tol;

    match model.kind {
        ModelKind::LinearFit => {
            let a0 = model.coeffs[0];
            let a1 = model.coeffs[1];
            if a1 == 0.0 {
                return Err(Error::SingularRegression);
            }
            Ok(InvertOutcome { u_volts: (fd_hz - a0) / a1, extrapolated })
        }
        ModelKind::QuadraticFit => {
            let c = model.coeffs[0] - fd_hz;
            let b = model.coeffs[1];
            let a = model.coeffs[2];
            if a == 0.0 {
                return Err(Error::SingularRegression);
            }
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return Err(Error::NoRealRoot);
            }
            // Numerically stable quadratic roots.
            let q = -0.5 * (b + b.signum().max(0.0).mul_add(2.0, -1.0) * disc.sqrt());
            let mut roots = Vec::new();
            if q != 0.0 {
                roots.push(q / a);
                roots.push(c / q);
            } else {
                roots.push(0.0);
                roots.push(-b / a);
            }
            let candidates: Vec<f64> = roots.into_iter().filter(|&u| in_span(u)).collect();
            match candidates.len() {
                1 => Ok(InvertOutcome { u_volts: candidates[0], extrapolated }),
                0 => Err(Error::NoRealRoot),
                _ => {
                    // Two formulas can return the same root twice.
                    if (candidates[0] - candidates[1]).abs()
                        <= 1e-9 * candidates[0].abs().max(1.0)
                    {
                        Ok(InvertOutcome { u_volts: candidates[0], extrapolated })
                    } else {
                        Err(Error::AmbiguousRoot)
                    }
                }
            }
        }
    }
}

/// Exact-center oracle: fine noiseless scan around the predicted resonance,
/// fitted for the center.
pub fn noiseless_center_hz(atom: &AtomParams, map: &VoltageMap, u_volts: f64) -> Result<f64> {
    let bz = map.field_gauss(u_volts);
    let predicted = -atom.zeeman_slope_hz_per_gauss() * bz;
    let half = 100e3;
    let n = 401;
    let step = 2.0 * half / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| predicted - half + step * i as f64).collect();
    let spectrum = simulate_spectrum(atom, bz, &grid)?;
    Ok(fit_lorentz(&spectrum)?.params.eps)
}

/// One full traditional-method study of a target frequency.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaselineStd {
    /// Sample std over trials of the frequency the inverted voltage lands on.
    pub std_hz: f64,
    /// Median per-trial regression prediction std at the target (analytic
    /// error propagation), Hz.
    pub analytic_std_hz: f64,
    /// Frequencies (via the noiseless oracle) the trials landed on, Hz.
    pub trial_freqs_hz: Vec<f64>,
    /// Inverted voltages per trial, V.
    pub trial_u_d: Vec<f64>,
    pub trials_requested: usize,
    pub trials_succeeded: usize,
    pub budget: usize,
}

/// Repeat calibrate + invert `trials` times on independent RNG streams and
/// measure the trial-to-trial spread of the achieved frequency.
///
/// Each trial spends exactly `budget` spectra on a uniform voltage grid over
/// `span`. Per-trial inversion failures (no usable root) are skipped; the
/// study fails once fewer than 10 or half the trials survive.
pub fn baseline_std(
    plant: &SimPlant,
    budget: usize,
    trials: usize,
    fd_hz: f64,
    kind: ModelKind,
    span: (f64, f64),
) -> Result<BaselineStd> {
    if budget < kind.order() + 2 {
        return Err(Error::invalid("budget below order + 2"));
    }
    if trials < 10 {
        return Err(Error::invalid("need at least 10 trials"));
    }
    if !(span.1 > span.0) {
        return Err(Error::invalid("voltage span must be nondegenerate"));
    }
    let step = (span.1 - span.0) / (budget - 1) as f64;
    let voltages: Vec<f64> = (0..budget).map(|i| span.0 + step * i as f64).collect();

    let mut trial_freqs = Vec::with_capacity(trials);
    let mut trial_u_d = Vec::with_capacity(trials);
    let mut analytic = Vec::with_capacity(trials);
    let mut last_err: Option<Error> = None;

    for trial in 0..trials {
        // Stream 0 is the controller's; trials live on their own streams.
        let mut exp = plant.with_stream(1000 + trial as u64);
        let outcome = (|| -> Result<(f64, f64)> {
            let model = calibrate(&mut exp, &voltages, kind)?;
            let inv = invert(&model, fd_hz)?;
            Ok((inv.u_volts, prediction_std(&model, &voltages, inv.u_volts)))
        })();
        match outcome {
            Ok((u_d, pred_std)) => {
                let f = noiseless_center_hz(&plant.atom, &plant.map, u_d)?;
                trial_u_d.push(u_d);
                trial_freqs.push(f);
                analytic.push(pred_std);
            }
            Err(e) => last_err = Some(e),
        }
    }

    let ok = trial_freqs.len();
    if ok < 10 || 2 * ok < trials {
        return Err(last_err.unwrap_or(Error::SingularRegression));
    }

    let mean = trial_freqs.iter().sum::<f64>() / ok as f64;
    let var =
        trial_freqs.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (ok - 1) as f64;
    analytic.sort_by(f64::total_cmp);
    Ok(BaselineStd {
        std_hz: var.sqrt(),
        analytic_std_hz: analytic[analytic.len() / 2],
        trial_freqs_hz: trial_freqs,
        trial_u_d,
        trials_requested: trials,
        trials_succeeded: ok,
        budget,
    })
}

/// Regression prediction std of g(U*) from the residual std and the design.
fn prediction_std(model: &CalibrationModel, voltages: &[f64], u_star: f64) -> f64 {
    let p = model.kind.order() + 1;
    let n = voltages.len();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    for &u in voltages {
        let mut row = DVector::<f64>::zeros(p);
        let mut pow = 1.0;
        for j in 0..p {
            row[j] = pow;
            pow *= u;
        }
        xtx += &row * row.transpose();
    }
    let mut x_star = DVector::<f64>::zeros(p);
    let mut pow = 1.0;
    for j in 0..p {
        x_star[j] = pow;
        pow *= u_star;
    }
    let _ = n;
    match xtx.lu().solve(&x_star) {
        Some(v) => {
            let lever = x_star.dot(&v);
            model.residual_std_hz * lever.max(0.0).sqrt()
        }
        None => f64::NAN,
    }
}
