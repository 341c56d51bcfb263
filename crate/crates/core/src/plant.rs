//! The virtual experiment: voltage in, CPT spectrum out.
//!
//! A [`SimPlant`] maps the commanded d.c. voltage to a magnetic field
//! (linearly or quadratically), injects seeded voltage jitter and per-point
//! spectrum noise, and serves sweeps through the [`Experiment`] trait — the
//! same surface a hardware driver would implement.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::Error;
use crate::physics::{simulate_spectrum, AtomParams, SpectrumRaw};
use crate::Result;

/// Default linear field coefficient, gauss per volt.
///
/// Chosen so the magneto-sensitive resonance at the reference voltage 8.5 V
/// sits near −790 kHz, inside the (−900, −700) kHz design window.
pub const DEFAULT_LINEAR_KAPPA: f64 = 0.0663;

/// Default quadratic field coefficient, gauss per volt².
pub const DEFAULT_QUADRATIC_KAPPA: f64 = 0.01;

/// Voltage → magnetic field map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VoltageMap {
    /// B_z(U) = kappa·U + offset.
    Linear { kappa: f64, offset: f64 },
    /// B_z(U) = kappa·U² + offset.
    Quadratic { kappa: f64, offset: f64 },
}

impl VoltageMap {
    pub fn validate(&self) -> Result<()> {
        let (kappa, offset) = match self {
            VoltageMap::Linear { kappa, offset } | VoltageMap::Quadratic { kappa, offset } => {
                (*kappa, *offset)
            }
        };
        if !kappa.is_finite() || !offset.is_finite() {
            return Err(Error::invalid("voltage map coefficients must be finite"));
        }
        if kappa == 0.0 {
            return Err(Error::invalid("kappa must be nonzero"));
        }
        Ok(())
    }

    /// Field in gauss for a commanded voltage.
    pub fn field_gauss(&self, u_volts: f64) -> f64 {
        match self {
            VoltageMap::Linear { kappa, offset } => kappa * u_volts + offset,
            VoltageMap::Quadratic { kappa, offset } => kappa * u_volts * u_volts + offset,
        }
    }
}

/// The calibrated default map: linear, no offset.
pub fn default_linear_map() -> VoltageMap {
    VoltageMap::Linear { kappa: DEFAULT_LINEAR_KAPPA, offset: 0.0 }
}

/// Map a voltage through `map` to gauss. Free-function form of
/// [`VoltageMap::field_gauss`] with input validation.
pub fn map_voltage(map: &VoltageMap, u_volts: f64) -> Result<f64> {
    map.validate()?;
    if !u_volts.is_finite() {
        return Err(Error::invalid("voltage must be finite"));
    }
    Ok(map.field_gauss(u_volts))
}

/// Noise injection settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std of additive Gaussian noise per point on the normalized signal.
    pub spectrum_sigma: f64,
    /// Half-width of the zero-mean uniform voltage jitter U_ε, volts.
    pub voltage_jitter_bound: f64,
    /// RNG seed.
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noise_free(seed: u64) -> Self {
        NoiseConfig { spectrum_sigma: 0.0, voltage_jitter_bound: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.spectrum_sigma.is_finite() || self.spectrum_sigma < 0.0 {
            return Err(Error::invalid("spectrum_sigma must be finite and >= 0"));
        }
        if !self.voltage_jitter_bound.is_finite() || self.voltage_jitter_bound < 0.0 {
            return Err(Error::invalid("voltage_jitter_bound must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Detuning sweep window.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Window center, Hz.
    pub center_hz: f64,
    /// Full window width, Hz.
    pub width_hz: f64,
    /// Number of grid points.
    pub points: usize,
}

impl SweepConfig {
    /// Default window: 400 kHz wide, 201 points, centered on the target.
    pub fn centered_on(fd_hz: f64) -> Self {
        SweepConfig { center_hz: fd_hz, width_hz: 400e3, points: 201 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center_hz.is_finite() || !self.width_hz.is_finite() {
            return Err(Error::invalid("sweep window must be finite"));
        }
        if !(self.width_hz > 0.0) {
            return Err(Error::invalid("sweep width must be positive"));
        }
        if self.points < 16 {
            return Err(Error::invalid("sweep needs at least 16 points"));
        }
        Ok(())
    }

    /// The uniform detuning grid in Hz.
    pub fn grid_hz(&self) -> Vec<f64> {
        let lo = self.center_hz - self.width_hz / 2.0;
        let step = self.width_hz / (self.points - 1) as f64;
        (0..self.points).map(|i| lo + step * i as f64).collect()
    }
}

/// Seedable, stream-splittable RNG with draw counters so any acquisition
/// sequence can be replayed and audited.
#[derive(Debug, Clone)]
pub struct PlantRng {
    rng: ChaCha12Rng,
    jitter_draws: u64,
    noise_draws: u64,
}

impl PlantRng {
    pub fn new(seed: u64) -> Self {
        PlantRng { rng: ChaCha12Rng::seed_from_u64(seed), jitter_draws: 0, noise_draws: 0 }
    }

    /// Same seed, independent stream. Used for parallel trials.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PlantRng { rng, jitter_draws: 0, noise_draws: 0 }
    }

    /// (jitter draws, per-point noise draws) consumed so far.
    pub fn draw_counts(&self) -> (u64, u64) {
        (self.jitter_draws, self.noise_draws)
    }

    pub(crate) fn draw_jitter(&mut self, bound: f64) -> f64 {
        if bound <= 0.0 {
            return 0.0;
        }
        self.jitter_draws += 1;
        Uniform::new_inclusive(-bound, bound)
            .expect("valid jitter bounds")
            .sample(&mut self.rng)
    }

    pub(crate) fn draw_noise(&mut self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return 0.0;
        }
        self.noise_draws += 1;
        Normal::new(0.0, sigma).expect("valid noise sigma").sample(&mut self.rng)
    }
}

/// The experiment interface the controller and baseline depend on.
///
/// Hardware could implement this by commanding a voltage and returning the
/// measured sweep.
pub trait Experiment {
    /// Command voltage `u_volts`, sweep the detuning window, return the
    /// normalized transmission spectrum.
    fn acquire_spectrum(&mut self, u_volts: f64) -> Result<SpectrumRaw>;
}

/// Simulated plant backed by the five-level model.
#[derive(Debug, Clone)]
pub struct SimPlant {
    pub atom: AtomParams,
    pub map: VoltageMap,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    rng: PlantRng,
    grid_hz: Vec<f64>,
}

impl SimPlant {
    pub fn new(
        atom: AtomParams,
        map: VoltageMap,
        noise: NoiseConfig,
        sweep: SweepConfig,
    ) -> Result<Self> {
        atom.validate()?;
        map.validate()?;
        noise.validate()?;
        sweep.validate()?;
        let grid_hz = sweep.grid_hz();
        let rng = PlantRng::new(noise.seed);
        Ok(SimPlant { atom, map, noise, sweep, rng, grid_hz })
    }

    /// Same plant, independent RNG stream (for parallel or repeated trials).
    pub fn with_stream(&self, stream: u64) -> Self {
        let mut p = self.clone();
        p.rng = PlantRng::with_stream(self.noise.seed, stream);
        p
    }

    pub fn grid_hz(&self) -> &[f64] {
        &self.grid_hz
    }

    pub fn rng_draw_counts(&self) -> (u64, u64) {
        self.rng.draw_counts()
    }

    /// The same plant with all noise disabled; used by oracles.
    pub fn noiseless(&self) -> Self {
        let mut p = self.clone();
        p.noise = NoiseConfig::noise_free(self.noise.seed);
        p.rng = PlantRng::new(self.noise.seed);
        p
    }
}

impl Experiment for SimPlant {
    fn acquire_spectrum(&mut self, u_volts: f64) -> Result<SpectrumRaw> {
        if !u_volts.is_finite() {
            return Err(Error::invalid("voltage must be finite"));
        }
        // One jitter draw per acquisition, held constant across the sweep.
        let jitter = self.rng.draw_jitter(self.noise.voltage_jitter_bound);
        let bz = self.map.field_gauss(u_volts + jitter);
        let mut spectrum = simulate_spectrum(&self.atom, bz, &self.grid_hz)?;
        spectrum.voltage = Some(u_volts);
        if self.noise.spectrum_sigma > 0.0 {
            for p in spectrum.points.iter_mut() {
                p.1 += self.rng.draw_noise(self.noise.spectrum_sigma);
            }
            spectrum.noiseless = false;
        }
        spectrum.validate()?;
        Ok(spectrum)
    }
}
