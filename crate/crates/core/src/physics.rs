//! Five-level density-matrix model of magneto-sensitive CPT spectroscopy.
//!
//! Level order: |1⟩ = |F=1, m=+1⟩, |2⟩ = |F=1, m=−1⟩, |3⟩ = |F=2, m=+1⟩,
//! |4⟩ = |F=2, m=−1⟩, |5⟩ = excited |F'=1, m=0⟩. The ground sublevels are
//! Zeeman-shifted linearly; both optical fields couple each ground level to
//! |5⟩, which decays at `Gamma` and feeds population back into the ground
//! manifold.
//!
//! All frequencies in this module are angular (rad/s) except where a name
//! says `hz`. Spectra are reported against ordinary two-photon detuning in
//! Hz; the conversion happens at the boundary.

use nalgebra::{DMatrix, DVector, Matrix5, SMatrix, SVector};
use num_complex::Complex64 as C64;

use crate::error::Error;
use crate::Result;

/// 2π, the angular/ordinary frequency conversion factor.
pub const TAU: f64 = std::f64::consts::TAU;

/// Default reference Rabi frequency Ω₀ in rad/s.
pub const OMEGA_0: f64 = 2.0e6;

/// Bohr magneton over h in Hz per gauss.
pub const MU_B_HZ_PER_GAUSS: f64 = 1.399_624e6;

/// Relative residual above which a steady-state solve is rejected.
const STEADY_STATE_RESIDUAL_BOUND: f64 = 1e-8;

/// Ratio of smallest to largest R diagonal below which the stacked system is
/// treated as rank deficient (non-unique steady state).
const RANK_TOL: f64 = 1e-10;

type CMat5 = Matrix5<C64>;
type Superop = SMatrix<C64, 25, 25>;
type StateVec = SVector<C64, 25>;

/// Convert ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// Convert angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn rad_to_hz(w_rad: f64) -> f64 {
    w_rad / TAU
}

/// Physical parameters of the five-level atom.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomParams {
    /// Excited-state decay rate Γ, rad/s.
    pub gamma: f64,
    /// Decay rate into the F=1 manifold (levels 1, 2), rad/s.
    pub gamma1: f64,
    /// Decay rate into the F=2 manifold (levels 3, 4), rad/s.
    pub gamma2: f64,
    /// Rabi frequency Ω_a coupling levels 2 and 4 to the excited state, rad/s.
    pub omega_a: f64,
    /// Rabi frequency Ω_b coupling levels 1 and 3 to the excited state, rad/s.
    pub omega_b: f64,
    /// Effective Landé g-factor of the F=1 manifold.
    pub g1: f64,
    /// Effective Landé g-factor of the F=2 manifold.
    pub g2: f64,
    /// Bohr magneton in rad/s per gauss.
    pub mu_b: f64,
    /// Average one-photon detuning δ, rad/s.
    pub delta_avg: f64,
    /// CPT pulse duration, s.
    pub tau: f64,
}

impl Default for AtomParams {
    fn default() -> Self {
        let gamma = TAU * 6e6;
        let gamma1 = 0.25 * gamma;
        AtomParams {
            gamma,
            gamma1,
            // gamma2 derived by subtraction so gamma1 + gamma2 == gamma holds
            // bit-exactly.
            gamma2: gamma - gamma1,
            omega_a: 3f64.sqrt() * OMEGA_0,
            omega_b: OMEGA_0,
            g1: -0.5017,
            g2: 0.4997,
            mu_b: TAU * MU_B_HZ_PER_GAUSS,
            delta_avg: 0.0,
            tau: 1e-3,
        }
    }
}

impl AtomParams {
    /// Defaults with a different reference Rabi frequency (Ω_a = √3 Ω₀,
    /// Ω_b = Ω₀).
    pub fn with_omega0(omega0: f64) -> Self {
        AtomParams {
            omega_a: 3f64.sqrt() * omega0,
            omega_b: omega0,
            ..AtomParams::default()
        }
    }

    /// Validate the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.gamma,
            self.gamma1,
            self.gamma2,
            self.omega_a,
            self.omega_b,
            self.g1,
            self.g2,
            self.mu_b,
            self.delta_avg,
            self.tau,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("atom parameters must be finite"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma must be positive"));
        }
        if self.tau <= 0.0 {
            return Err(Error::invalid("tau must be positive"));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(Error::invalid("branching rates must be nonnegative"));
        }
        if self.gamma1 + self.gamma2 != self.gamma {
            return Err(Error::invalid("gamma1 + gamma2 must equal gamma exactly"));
        }
        Ok(())
    }

    /// Magnitude of the magneto-sensitive Zeeman slope, Hz per gauss:
    /// (g₂ − g₁)·μ_B / 2π.
    pub fn zeeman_slope_hz_per_gauss(&self) -> f64 {
        (self.g2 - self.g1) * self.mu_b / TAU
    }
}

/// A single operating point: two-photon detuning and magnetic field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    /// Two-photon detuning Δ = δ₁ − δ₂, rad/s.
    pub delta: f64,
    /// Magnetic field along z, gauss.
    pub bz: f64,
}

impl FieldPoint {
    pub fn new(delta_rad: f64, bz_gauss: f64) -> Self {
        FieldPoint { delta: delta_rad, bz: bz_gauss }
    }

    /// Construct from an ordinary-frequency detuning in Hz.
    pub fn from_hz(detuning_hz: f64, bz_gauss: f64) -> Self {
        FieldPoint { delta: hz_to_rad(detuning_hz), bz: bz_gauss }
    }

    fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || !self.bz.is_finite() {
            return Err(Error::invalid("field point must be finite"));
        }
        Ok(())
    }
}

/// 5×5 density matrix with validated Hermiticity and unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMat5,
}

impl DensityMatrix {
    pub const HERMITICITY_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-9;

    /// Build from a raw matrix, checking the density-matrix invariants.
    pub fn try_new(rho: CMat5) -> Result<Self> {
        let dm = DensityMatrix { rho };
        dm.check()?;
        Ok(dm)
    }

    /// The initial state of each CPT pulse: population ¼ on each ground
    /// level, no coherences.
    pub fn equal_ground_populations() -> Self {
        let mut rho = CMat5::zeros();
        for i in 0..4 {
            rho[(i, i)] = C64::new(0.25, 0.0);
        }
        DensityMatrix { rho }
    }

    pub fn matrix(&self) -> &CMat5 {
        &self.rho
    }

    /// Excited-state population ρ₅₅.
    pub fn rho55(&self) -> f64 {
        self.rho[(4, 4)].re
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..5 {
            for j in 0..5 {
                let d = (self.rho[(i, j)] - self.rho[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    fn check(&self) -> Result<()> {
        if self.rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("density matrix must be finite"));
        }
        let herm = self.hermiticity_error();
        if herm > Self::HERMITICITY_TOL {
            return Err(Error::invalid(format!("hermiticity violated by {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::invalid(format!("trace {tr} not 1")));
        }
        for i in 0..5 {
            let d = self.rho[(i, i)];
            if d.re < -1e-9 || d.re > 1.0 + 1e-9 {
                return Err(Error::invalid(format!("population {i} out of range: {}", d.re)));
            }
        }
        Ok(())
    }

    fn to_vec(&self) -> StateVec {
        let mut v = StateVec::zeros();
        for i in 0..5 {
            for j in 0..5 {
                v[5 * i + j] = self.rho[(i, j)];
            }
        }
        v
    }

    fn from_vec(v: &StateVec) -> CMat5 {
        let mut rho = CMat5::zeros();
        for i in 0..5 {
            for j in 0..5 {
                rho[(i, j)] = v[5 * i + j];
            }
        }
        rho
    }
}

/// One sampled transmission spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRaw {
    /// (detuning in Hz, signal) pairs with strictly increasing detunings.
    pub points: Vec<(f64, f64)>,
    /// Commanded voltage this sweep was taken at, when it came from a plant.
    pub voltage: Option<f64>,
    /// True when no noise was injected; the signal then lies in [0, 1].
    pub noiseless: bool,
}

impl SpectrumRaw {
    pub fn detunings_hz(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn signals(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("spectrum must not be empty"));
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("detunings must be strictly increasing"));
            }
        }
        for &(f, s) in &self.points {
            if !f.is_finite() || !s.is_finite() {
                return Err(Error::invalid("spectrum values must be finite"));
            }
            if self.noiseless && !(-1e-12..=1.0 + 1e-12).contains(&s) {
                return Err(Error::invalid("noiseless signal must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Build H/ħ in angular-frequency units.
///
/// The diagonal carries the Zeeman-shifted two-photon detunings
/// Δ₁ = Δ/2 + g₁μ_B B_z, Δ₂ = Δ/2 − g₁μ_B B_z, Δ₃ = −Δ/2 − g₂μ_B B_z,
/// Δ₄ = −Δ/2 + g₂μ_B B_z and δ − iΓ/2 on the excited state; the fifth row
/// and column couple the grounds via (Ω_b, Ω_a, Ω_b, Ω_a)/2.
pub fn build_hamiltonian(params: &AtomParams, field: &FieldPoint) -> Result<CMat5> {
    params.validate()?;
    field.validate()?;
    let zeeman = params.mu_b * field.bz;
    let half = field.delta / 2.0;
    let diag = [
        half + params.g1 * zeeman,
        half - params.g1 * zeeman,
        -half - params.g2 * zeeman,
        -half + params.g2 * zeeman,
    ];
    let coupling = [params.omega_b, params.omega_a, params.omega_b, params.omega_a];

    let mut h = CMat5::zeros();
    for i in 0..4 {
        h[(i, i)] = C64::new(diag[i], 0.0);
        h[(i, 4)] = C64::new(coupling[i] / 2.0, 0.0);
        h[(4, i)] = C64::new(coupling[i] / 2.0, 0.0);
    }
    h[(4, 4)] = C64::new(params.delta_avg, -params.gamma / 2.0);
    Ok(h)
}

/// Build the 25×25 superoperator M with d vec(ρ)/dt = M vec(ρ).
///
/// vec is row-major: component 5i + j is ρ_ij. M combines −i(Hρ − ρH†) with
/// the repopulation term that feeds Γ₁/2·ρ₅₅ into levels 1, 2 and Γ₂/2·ρ₅₅
/// into levels 3, 4. Ground-state decay is neglected, so M conserves the
/// trace exactly.
pub fn build_liouvillian(params: &AtomParams, field: &FieldPoint) -> Result<Superop> {
    let h = build_hamiltonian(params, field)?;
    let mut m = Superop::zeros();
    let i_unit = C64::new(0.0, 1.0);
    for i in 0..5 {
        for j in 0..5 {
            let row = 5 * i + j;
            for k in 0..5 {
                // −i (H ρ)_ij pulls from ρ_kj
                m[(row, 5 * k + j)] -= i_unit * h[(i, k)];
                // +i (ρ H†)_ij pulls from ρ_ik
                m[(row, 5 * i + k)] += i_unit * h[(j, k)].conj();
            }
        }
    }
    let feed = [
        params.gamma1 / 2.0,
        params.gamma1 / 2.0,
        params.gamma2 / 2.0,
        params.gamma2 / 2.0,
    ];
    for (level, rate) in feed.iter().enumerate() {
        m[(6 * level, 24)] += C64::new(*rate, 0.0);
    }
    Ok(m)
}

/// Solve for the unit-trace steady state of the Liouvillian.
///
/// The 25×25 superoperator (scaled to unit spectral magnitude) is stacked
/// with one trace-constraint row and solved as a real least-squares problem;
/// the solve is rejected if the relative residual exceeds 1e-8 and reported
/// as degenerate if the stacked system is rank deficient (null space
/// dimension > 1, e.g. with both Rabi frequencies zero).
pub fn steady_state(params: &AtomParams, field: &FieldPoint) -> Result<DensityMatrix> {
    let m = build_liouvillian(params, field)?;
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(Error::DegenerateSteadyState);
    }

    // Real expansion: unknowns [Re vec(ρ); Im vec(ρ)], equations
    // [Re M, −Im M; Im M, Re M] x = 0 plus Re/Im trace rows.
    let mut a = DMatrix::<f64>::zeros(52, 50);
    for r in 0..25 {
        for c in 0..25 {
            let z = m[(r, c)] / scale;
            a[(r, c)] = z.re;
            a[(r, 25 + c)] = -z.im;
            a[(25 + r, c)] = z.im;
            a[(25 + r, 25 + c)] = z.re;
        }
    }
    for d in 0..5 {
        a[(50, 6 * d)] = 1.0;
        a[(51, 25 + 6 * d)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(52);
    b[50] = 1.0;

    let qr = a.qr();
    let r = qr.r();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..50 {
        let d = r[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmax == 0.0 || dmin < RANK_TOL * dmax {
        return Err(Error::DegenerateSteadyState);
    }
    qr.q_tr_mul(&mut b);
    let y = b.rows(0, 50).into_owned();
    let x = r
        .solve_upper_triangular(&y)
        .ok_or(Error::DegenerateSteadyState)?;

    let mut v = StateVec::zeros();
    for k in 0..25 {
        v[k] = C64::new(x[k], x[25 + k]);
    }

    // Residual check against the scaled complex system plus the trace row.
    let mv = m * v / C64::new(scale, 0.0);
    let mut residual = mv.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let tr: C64 = (0..5).map(|i| v[6 * i]).sum();
    residual = residual.max((tr - C64::new(1.0, 0.0)).norm());
    if residual > STEADY_STATE_RESIDUAL_BOUND {
        return Err(Error::SteadyStateResidual {
            residual,
            bound: STEADY_STATE_RESIDUAL_BOUND,
        });
    }

    DensityMatrix::try_new(DensityMatrix::from_vec(&v))
}

/// Integrate the Liouville equation from `rho0` for a time `t`.
///
/// Adaptive embedded Dormand–Prince 5(4) with absolute tolerance 1e-10; this
/// is the validation oracle for [`steady_state`], not the production
/// spectrum engine.
pub fn evolve(
    params: &AtomParams,
    field: &FieldPoint,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid("evolution time must be finite and >= 0"));
    }
    rho0.check()?;
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let m = build_liouvillian(params, field)?;
    let v = ode::dp45(&m, rho0.to_vec(), t, 1e-10, 1e-10)?;
    DensityMatrix::try_new(DensityMatrix::from_vec(&v))
}

/// Steady-state transmission signal 1 − ρ₅₅ at a single operating point.
pub fn raw_signal(params: &AtomParams, field: &FieldPoint) -> Result<f64> {
    Ok(1.0 - steady_state(params, field)?.rho55())
}

/// Sweep the two-photon detuning over `grid_hz` at fixed field and return
/// the min-max-normalized transmission spectrum.
///
/// The steady-state solve is the engine; points where the steady state is
/// non-unique (zero field makes one dark state per hyperfine manifold
/// stationary at every detuning) fall back to integrating the CPT pulse for
/// `params.tau` from the equal-ground-population initial state.
pub fn simulate_spectrum(
    params: &AtomParams,
    bz_gauss: f64,
    grid_hz: &[f64],
) -> Result<SpectrumRaw> {
    if grid_hz.is_empty() {
        return Err(Error::invalid("detuning grid must not be empty"));
    }
    for w in grid_hz.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid("detuning grid must be strictly increasing"));
        }
    }
    let rho0 = DensityMatrix::equal_ground_populations();
    let mut signals = Vec::with_capacity(grid_hz.len());
    for &f_hz in grid_hz {
        let field = FieldPoint::from_hz(f_hz, bz_gauss);
        let rho55 = match steady_state(params, &field) {
            Ok(rho) => rho.rho55(),
            Err(Error::DegenerateSteadyState) => {
                evolve(params, &field, &rho0, params.tau)?.rho55()
            }
            Err(e) => return Err(e),
        };
        signals.push(1.0 - rho55);
    }
    normalize_min_max(&mut signals)?;
    let spectrum = SpectrumRaw {
        points: grid_hz.iter().copied().zip(signals).collect(),
        voltage: None,
        noiseless: true,
    };
    spectrum.validate()?;
    Ok(spectrum)
}

/// In-place min-max normalization to [0, 1].
pub(crate) fn normalize_min_max(values: &mut [f64]) -> Result<()> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::DegenerateCurve);
    }
    for v in values.iter_mut() {
        *v = (*v - lo) / range;
    }
    Ok(())
}

mod ode {
    //! Embedded Dormand–Prince 5(4) for the linear system v' = M v.

    use super::{C64, Error, Result, StateVec, Superop};

    // Dormand–Prince coefficients.
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // 5th-order weights equal the last A row (FSAL); 4th-order weights below.
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    /// Project onto the Hermitian subspace: ρ_ij ← (ρ_ij + ρ_ji*)/2.
    fn hermitize(v: &mut StateVec) {
        for i in 0..5 {
            v[6 * i].im = 0.0;
            for j in (i + 1)..5 {
                let avg = (v[5 * i + j] + v[5 * j + i].conj()) * C64::new(0.5, 0.0);
                v[5 * i + j] = avg;
                v[5 * j + i] = avg.conj();
            }
        }
    }

    pub fn dp45(
        m: &Superop,
        mut y: StateVec,
        t_end: f64,
        atol: f64,
        rtol: f64,
    ) -> Result<StateVec> {
        let mut t = 0.0f64;
        let mut h = (1e-9f64).min(t_end);
        let h_floor = t_end * 1e-14;
        let mut k = [StateVec::zeros(); 7];
        k[0] = m * y;

        while t < t_end {
            h = h.min(t_end - t);
            // Stage evaluations.
            for s in 0..6 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    let c = A[s][j];
                    if c != 0.0 {
                        ys += kj * C64::new(h * c, 0.0);
                    }
                }
                k[s + 1] = m * ys;
            }
            // 5th-order solution is the last stage input by FSAL construction.
            let mut y5 = y;
            for (j, kj) in k.iter().enumerate().take(6) {
                let c = A[5][j];
                if c != 0.0 {
                    y5 += kj * C64::new(h * c, 0.0);
                }
            }
            // Error estimate against the embedded 4th-order solution.
            let mut err = 0.0f64;
            for i in 0..25 {
                let mut e = C64::new(0.0, 0.0);
                for (j, kj) in k.iter().enumerate() {
                    let db = (if j < 6 { A[5][j] } else { 0.0 }) - B4[j];
                    if db != 0.0 {
                        e += kj[i] * C64::new(h * db, 0.0);
                    }
                }
                let scale = atol + rtol * y[i].norm().max(y5[i].norm());
                err = err.max(e.norm() / scale);
            }

            if err <= 1.0 {
                t += h;
                y = y5;
                // Round-off from the differing summation orders of ρ_ij and
                // ρ_ji rows slowly breaks Hermiticity; project it back.
                hermitize(&mut y);
                k[0] = m * y; // recompute FSAL stage on the projected state
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h *= grow;
            } else {
                h *= (0.9 * err.powf(-0.25)).max(0.1);
                if h < h_floor {
                    return Err(Error::IntegratorFailure { t });
                }
            }
        }
        Ok(y)
    }
}
