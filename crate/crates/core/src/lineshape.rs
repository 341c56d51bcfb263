//! Four-parameter Lorentzian lineshape: evaluation, initial guess, and
//! damped Gauss–Newton fitting with an analytic Jacobian.
//!
//! The model is
//!
//! ```text
//! L(f) = (2A/π) · w / (4[(f − ε)² + w²]) + B
//! ```
//!
//! so the peak height above baseline is A/(2πw) and w is the half width at
//! half maximum. The fitter is orientation-agnostic: inverted data simply
//! comes back with A < 0.

use crate::error::Error;
use crate::physics::SpectrumRaw;
use crate::Result;

/// Parameters of the Lorentzian lineshape.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LorentzParams {
    /// Area-like amplitude, signal · Hz.
    pub a: f64,
    /// Half width at half maximum, Hz. Always positive.
    pub w: f64,
    /// Center frequency ε, Hz.
    pub eps: f64,
    /// Baseline offset.
    pub b: f64,
}

impl LorentzParams {
    pub fn new(a: f64, w: f64, eps: f64, b: f64) -> Self {
        LorentzParams { a, w, eps, b }
    }

    /// Peak height above the baseline, A/(2πw).
    pub fn peak_height(&self) -> f64 {
        self.a / (2.0 * std::f64::consts::PI * self.w)
    }

    fn as_array(&self) -> [f64; 4] {
        [self.a, self.w, self.eps, self.b]
    }

    fn from_array(p: [f64; 4]) -> Self {
        LorentzParams { a: p[0], w: p[1], eps: p[2], b: p[3] }
    }

    /// Map (A, w) → (−A, −w), which leaves the model invariant, onto the
    /// canonical branch w > 0.
    fn canonicalize(mut p: [f64; 4]) -> [f64; 4] {
        if p[1] < 0.0 {
            p[1] = -p[1];
            p[0] = -p[0];
        }
        p
    }
}

/// Diagnostics attached to a completed fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitReport {
    pub params: LorentzParams,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    /// True when the relative parameter step fell below the tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// Evaluate the Lorentzian at a single frequency (Hz).
pub fn eval_lorentz(p: &LorentzParams, f_hz: f64) -> f64 {
    let d = f_hz - p.eps;
    (2.0 * p.a / std::f64::consts::PI) * p.w / (4.0 * (d * d + p.w * p.w)) + p.b
}

/// Evaluate the Lorentzian on a grid.
pub fn eval_lorentz_grid(p: &LorentzParams, grid_hz: &[f64]) -> Vec<f64> {
    grid_hz.iter().map(|&f| eval_lorentz(p, f)).collect()
}

/// Analytic Jacobian row [∂L/∂A, ∂L/∂w, ∂L/∂ε, ∂L/∂B] at one frequency.
pub fn lorentz_jacobian_row(p: &LorentzParams, f_hz: f64) -> [f64; 4] {
    let pi = std::f64::consts::PI;
    let d = f_hz - p.eps;
    let den = d * d + p.w * p.w;
    [
        (2.0 / pi) * p.w / (4.0 * den),
        (2.0 * p.a / pi) * (d * d - p.w * p.w) / (4.0 * den * den),
        p.a * p.w * d / (pi * den * den),
        1.0,
    ]
}

/// Robust noise estimate from second differences of the signal.
///
/// For data s_i = smooth_i + n_i with i.i.d. noise of std σ, the second
/// difference has std σ√6; the median absolute value of a zero-mean normal
/// is 0.6745σ.
fn estimate_noise_std(signal: &[f64]) -> f64 {
    if signal.len() < 3 {
        return 0.0;
    }
    let mut d2: Vec<f64> = signal
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
        .collect();
    d2.sort_by(f64::total_cmp);
    let median = d2[d2.len() / 2];
    median / (0.6745 * 6f64.sqrt())
}

/// Initial parameter guess from the data.
///
/// ε₀ is the argmax of a 5-point moving average, B₀ the median of the lowest
/// quartile, w₀ half the span over which the signal exceeds the half-maximum
/// level, and A₀ = 2πw₀(peak − B₀).
pub fn initial_guess(spectrum: &SpectrumRaw) -> Result<LorentzParams> {
    spectrum.validate()?;
    if spectrum.len() < 16 {
        return Err(Error::invalid("need at least 16 points for a guess"));
    }
    let freqs = spectrum.detunings_hz();
    let signal = spectrum.signals();
    let n = signal.len();

    let lo = signal.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let noise = estimate_noise_std(&signal);
    if hi - lo < 3.0 * noise || hi == lo {
        return Err(Error::FlatSpectrum { range: hi - lo, noise });
    }

    // 5-point moving average, shrinking near the edges.
    let mut best_idx = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..n {
        let a = i.saturating_sub(2);
        let b = (i + 3).min(n);
        let avg = signal[a..b].iter().sum::<f64>() / (b - a) as f64;
        if avg > best_val {
            best_val = avg;
            best_idx = i;
        }
    }
    let eps0 = freqs[best_idx];
    let peak = signal[best_idx];

    let mut sorted = signal.clone();
    sorted.sort_by(f64::total_cmp);
    let quartile = &sorted[..(n / 4).max(1)];
    let b0 = quartile[quartile.len() / 2];

    let half_level = b0 + (peak - b0) / 2.0;
    let first = signal.iter().position(|&s| s > half_level);
    let last = signal.iter().rposition(|&s| s > half_level);
    let grid_step = (freqs[n - 1] - freqs[0]) / (n - 1) as f64;
    let w0 = match (first, last) {
        (Some(i), Some(j)) if j > i => ((freqs[j] - freqs[i]) / 2.0).max(grid_step),
        _ => grid_step,
    };
    let a0 = 2.0 * std::f64::consts::PI * w0 * (peak - b0);
    Ok(LorentzParams::new(a0, w0, eps0, b0))
}

const FIT_STEP_TOL: f64 = 1e-9;
const FIT_MAX_ITER: usize = 200;

/// Nonlinear least-squares Lorentzian fit.
///
/// Damped Gauss–Newton with Levenberg-style adaptation of the damping
/// parameter: steps that would increase the residual are retried with more
/// damping, so the residual never increases. Converges when the relative
/// parameter step drops below 1e-9 or after 200 iterations.
pub fn fit_lorentz(spectrum: &SpectrumRaw) -> Result<FitReport> {
    let guess = initial_guess(spectrum)?;
    fit_lorentz_from(spectrum, &guess)
}

/// Same as [`fit_lorentz`] but starting from a caller-provided guess.
pub fn fit_lorentz_from(spectrum: &SpectrumRaw, guess: &LorentzParams) -> Result<FitReport> {
    spectrum.validate()?;
    let freqs = spectrum.detunings_hz();
    let signal = spectrum.signals();

    let mut p = LorentzParams::canonicalize(guess.as_array());
    if p[1] == 0.0 {
        return Err(Error::invalid("initial width must be nonzero"));
    }

    let residual = |p: &[f64; 4]| -> Vec<f64> {
        let lp = LorentzParams::from_array(*p);
        freqs
            .iter()
            .zip(&signal)
            .map(|(&f, &s)| eval_lorentz(&lp, f) - s)
            .collect()
    };

    let mut r = residual(&p);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    if !cost.is_finite() {
        return Err(Error::FitDiverged);
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..FIT_MAX_ITER {
        iterations = iter + 1;
        let lp = LorentzParams::from_array(p);

        // Normal equations JᵀJ and Jᵀr.
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for (idx, &f) in freqs.iter().enumerate() {
            let row = lorentz_jacobian_row(&lp, f);
            for i in 0..4 {
                jtr[i] += row[i] * r[idx];
                for j in i..4 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..i {
                jtj[i][j] = jtj[j][i];
            }
        }

        let mut accepted = false;
        let mut step_rel = f64::INFINITY;
        for _ in 0..40 {
            // Marquardt scaling: damp proportionally to the diagonal.
            let mut m = nalgebra::Matrix4::<f64>::zeros();
            for i in 0..4 {
                for j in 0..4 {
                    m[(i, j)] = jtj[i][j];
                }
                m[(i, i)] += lambda * jtj[i][i].max(1e-300);
            }
            let g = nalgebra::Vector4::new(-jtr[0], -jtr[1], -jtr[2], -jtr[3]);
            let Some(dp) = m.lu().solve(&g) else {
                lambda = (lambda * 10.0).min(1e14);
                continue;
            };
            let trial = LorentzParams::canonicalize([
                p[0] + dp[0],
                p[1] + dp[1],
                p[2] + dp[2],
                p[3] + dp[3],
            ]);
            if trial[1] == 0.0 {
                lambda = (lambda * 10.0).min(1e14);
                continue;
            }
            let rt = residual(&trial);
            let ct: f64 = rt.iter().map(|v| v * v).sum();
            if ct.is_finite() && ct <= cost {
                step_rel = (0..4)
                    .map(|i| dp[i].abs() / (p[i].abs() + f64::MIN_POSITIVE))
                    .fold(0.0f64, f64::max);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda = (lambda * 10.0).min(1e14);
        }

        if !accepted {
            // Fully damped and still no improvement: stationary point.
            converged = true;
            break;
        }
        if step_rel < FIT_STEP_TOL {
            converged = true;
            break;
        }
    }

    if p.iter().any(|v| !v.is_finite()) || !cost.is_finite() {
        return Err(Error::FitDiverged);
    }

    Ok(FitReport {
        params: LorentzParams::from_array(p),
        residual_norm: cost.sqrt(),
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn default_grid() -> Vec<f64> {
        // 201 points, 2 kHz spacing, centered on -807.6 kHz.
        (0..201).map(|i| -1007.6e3 + 2e3 * i as f64).collect()
    }

    fn synthetic(p: &LorentzParams, grid: &[f64]) -> SpectrumRaw {
        SpectrumRaw {
            points: grid.iter().map(|&f| (f, eval_lorentz(p, f))).collect(),
            voltage: None,
            noiseless: false,
        }
    }

    #[test]
    fn eval_peak_and_half_width() {
        let p = LorentzParams::new(3000.0, 25e3, -807.6e3, 0.1);
        let peak = eval_lorentz(&p, p.eps);
        assert_abs_diff_eq!(peak, p.a / (2.0 * std::f64::consts::PI * p.w) + p.b, epsilon = 1e-12);
        let half_up = eval_lorentz(&p, p.eps + p.w);
        let half_dn = eval_lorentz(&p, p.eps - p.w);
        let expect = p.a / (4.0 * std::f64::consts::PI * p.w) + p.b;
        assert_abs_diff_eq!(half_up, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(half_dn, expect, epsilon = 1e-12);
    }

    #[test]
    fn eval_baseline_limit() {
        let p = LorentzParams::new(3000.0, 25e3, 0.0, 0.37);
        assert_abs_diff_eq!(eval_lorentz(&p, 1e13), p.b, epsilon = 1e-9);
        assert_abs_diff_eq!(eval_lorentz(&p, -1e13), p.b, epsilon = 1e-9);
    }

    #[test]
    fn guess_recovers_synthetic_within_20_percent() {
        let truth = LorentzParams::new(3000.0, 25e3, -807.6e3, 0.1);
        let s = synthetic(&truth, &default_grid());
        let g = initial_guess(&s).unwrap();
        assert!((g.eps - truth.eps).abs() <= 0.2 * truth.w, "eps {e}", e = g.eps);
        assert!((g.w - truth.w).abs() <= 0.2 * truth.w);
        assert!((g.a - truth.a).abs() <= 0.2 * truth.a.abs());
        assert!((g.b - truth.b).abs() <= 0.2 * truth.peak_height());
    }

    #[test]
    fn guess_flat_spectrum_rejected() {
        let grid = default_grid();
        let s = SpectrumRaw {
            points: grid.iter().map(|&f| (f, 0.5)).collect(),
            voltage: None,
            noiseless: true,
        };
        match initial_guess(&s) {
            Err(Error::FlatSpectrum { .. }) => {}
            other => panic!("expected FlatSpectrum, got {other:?}"),
        }
    }

    #[test]
    fn guess_handles_peak_at_grid_edge() {
        let truth = LorentzParams::new(3000.0, 25e3, -1005e3, 0.1);
        let s = synthetic(&truth, &default_grid());
        let g = initial_guess(&s).unwrap();
        assert!(g.eps >= -1007.6e3 && g.eps <= -607.6e3);
        // The fit should still run from this guess.
        let fit = fit_lorentz_from(&s, &g).unwrap();
        assert!((fit.params.eps - truth.eps).abs() < 2e3);
    }

    #[test]
    fn fit_round_trip_noiseless() {
        let truth = LorentzParams::new(3000.0, 25e3, -807.6e3, 0.1);
        let s = synthetic(&truth, &default_grid());
        let fit = fit_lorentz(&s).unwrap();
        assert!(fit.converged);
        let p = fit.params;
        assert!((p.a - truth.a).abs() / truth.a.abs() <= 1e-6);
        assert!((p.w - truth.w).abs() / truth.w <= 1e-6);
        assert!((p.eps - truth.eps).abs() / truth.eps.abs() <= 1e-6);
        assert!((p.b - truth.b).abs() / truth.b.abs() <= 1e-6);
    }

    #[test]
    fn fit_center_under_noise_monte_carlo() {
        // Peak height 0.9 over the baseline, like a unit-normalized sweep.
        let w = 25e3;
        let truth = LorentzParams::new(0.9 * 2.0 * std::f64::consts::PI * w, w, -807.6e3, 0.05);
        let grid = default_grid();
        let clean: Vec<f64> = grid.iter().map(|&f| eval_lorentz(&truth, f)).collect();
        let gate = 0.5 * truth.w / (grid.len() as f64).sqrt();
        let mut sq_err = 0.0;
        let n_seeds = 100;
        for seed in 0..n_seeds {
            let mut rng = StdRng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let s = SpectrumRaw {
                points: grid
                    .iter()
                    .zip(&clean)
                    .map(|(&f, &c)| (f, c + noise.sample(&mut rng)))
                    .collect(),
                voltage: None,
                noiseless: false,
            };
            let fit = fit_lorentz(&s).unwrap();
            sq_err += (fit.params.eps - truth.eps).powi(2);
        }
        let rms = (sq_err / n_seeds as f64).sqrt();
        assert!(rms <= gate, "rms {rms} vs gate {gate}");
    }

    #[test]
    fn fit_mirror_symmetry() {
        let truth = LorentzParams::new(3000.0, 25e3, -807.6e3, 0.1);
        let grid = default_grid();
        let s = synthetic(&truth, &grid);
        let mut mirrored: Vec<(f64, f64)> =
            s.points.iter().map(|&(f, v)| (-f, v)).collect();
        mirrored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let sm = SpectrumRaw { points: mirrored, voltage: None, noiseless: false };
        let fit = fit_lorentz(&s).unwrap().params;
        let fit_m = fit_lorentz(&sm).unwrap().params;
        assert!((fit.eps + fit_m.eps).abs() <= 1e-9 * fit.eps.abs());
        assert!((fit.a - fit_m.a).abs() <= 1e-9 * fit.a.abs());
        assert!((fit.w - fit_m.w).abs() <= 1e-9 * fit.w);
        assert!((fit.b - fit_m.b).abs() <= 1e-9 * fit.b.abs().max(1e-3));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..25 {
            let p = LorentzParams::new(
                rng.random_range(500.0..5000.0),
                rng.random_range(5e3..60e3),
                rng.random_range(-9e5..-6e5),
                rng.random_range(-0.5..0.5),
            );
            let f = rng.random_range(-1.0e6..-4e5);
            let analytic = lorentz_jacobian_row(&p, f);
            let arr = [p.a, p.w, p.eps, p.b];
            for i in 0..4 {
                let h = 1e-6 * arr[i].abs().max(1e-3);
                let mut up = arr;
                up[i] += h;
                let mut dn = arr;
                dn[i] -= h;
                let fd = (eval_lorentz(&LorentzParams::from_array(up), f)
                    - eval_lorentz(&LorentzParams::from_array(dn), f))
                    / (2.0 * h);
                let denom = analytic[i].abs().max(1e-12);
                assert!(
                    (fd - analytic[i]).abs() / denom <= 1e-6,
                    "param {i}: fd {fd} vs analytic {}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn shift_equivariance_in_baseline() {
        let truth = LorentzParams::new(3000.0, 25e3, -807.6e3, 0.1);
        let grid = default_grid();
        let s = synthetic(&truth, &grid);
        let shifted = SpectrumRaw {
            points: s.points.iter().map(|&(f, v)| (f, v + 0.37)).collect(),
            voltage: None,
            noiseless: false,
        };
        let f0 = fit_lorentz(&s).unwrap().params;
        let f1 = fit_lorentz(&shifted).unwrap().params;
        assert_abs_diff_eq!(f1.b - f0.b, 0.37, epsilon = 1e-7);
        assert_abs_diff_eq!(f1.eps, f0.eps, epsilon = 1e-3);
        assert_abs_diff_eq!(f1.w, f0.w, epsilon = 1e-3);
        assert_abs_diff_eq!(f1.a, f0.a, epsilon = 1e-2);
    }
}
