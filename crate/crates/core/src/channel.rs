//! Everything between the TX port and the RX port other than the canceller:
//! circulator leakage, the antenna and its programmable π-network tuner,
//! environment echoes, and the composite self-interference response.
//!
//! All responses are baseband equivalents on offsets relative to the carrier.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::signal::db_to_amplitude;

pub const CAP_CODE_MAX: u8 = 31;

/// Complex gain sampled on a strictly increasing baseband frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    freqs: Vec<f64>,
    gains: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn new(freqs: Vec<f64>, gains: Vec<Complex64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(domain("frequency response needs at least one point"));
        }
        if freqs.len() != gains.len() {
            return Err(Error::Shape(format!("{} frequencies vs {} gains", freqs.len(), gains.len())));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("frequency grid must be strictly increasing"));
        }
        if freqs.iter().any(|f| !f.is_finite()) || gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(domain("frequency response contains non-finite values"));
        }
        Ok(Self { freqs, gains })
    }

    /// Same gain at every grid point.
    pub fn flat(freqs: &[f64], gain: Complex64) -> Result<Self> {
        Self::new(freqs.to_vec(), vec![gain; freqs.len()])
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.freqs == other.freqs
    }

    /// Magnitude in dB at every point.
    pub fn magnitude_db(&self) -> Vec<f64> {
        self.gains.iter().map(|g| 20.0 * g.norm().log10()).collect()
    }
}

/// `n` evenly spaced points spanning `[lo, hi]` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirculatorParams {
    /// TX→RX leakage expressed as a positive loss.
    pub isolation_db: f64,
    pub leakage_delay_ns: f64,
    /// Loss of each of the TX→ANT and ANT→RX paths.
    pub insertion_loss_db: f64,
}

impl Default for CirculatorParams {
    fn default() -> Self {
        Self { isolation_db: 20.0, leakage_delay_ns: 5.0, insertion_loss_db: 1.5 }
    }
}

impl CirculatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.isolation_db > 0.0) {
            return Err(Error::Config(format!("isolation_db must be > 0, got {}", self.isolation_db)));
        }
        if !(self.insertion_loss_db >= 0.0) {
            return Err(Error::Config(format!("insertion_loss_db must be >= 0, got {}", self.insertion_loss_db)));
        }
        if !(self.leakage_delay_ns >= 0.0) {
            return Err(Error::Config(format!("leakage_delay_ns must be >= 0, got {}", self.leakage_delay_ns)));
        }
        Ok(())
    }

    /// Direct TX→RX leakage at a baseband offset.
    pub fn leakage(&self, offset_hz: f64) -> Complex64 {
        let mag = db_to_amplitude(-self.isolation_db);
        let phase = -2.0 * PI * offset_hz * self.leakage_delay_ns * 1e-9;
        Complex64::from_polar(mag, phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaImpedance {
    /// Impedance at the carrier (ohms).
    pub z: Complex64,
    /// Linear change of impedance per hertz of baseband offset.
    #[serde(default)]
    pub slope_ohm_per_hz: Complex64,
}

impl Default for AntennaImpedance {
    fn default() -> Self {
        Self { z: Complex64::new(50.0, 8.0), slope_ohm_per_hz: Complex64::new(0.0, 0.0) }
    }
}

impl AntennaImpedance {
    pub fn resistive(r: f64) -> Self {
        Self { z: Complex64::new(r, 0.0), slope_ohm_per_hz: Complex64::new(0.0, 0.0) }
    }

    pub fn at_offset(&self, offset_hz: f64) -> Complex64 {
        self.z + self.slope_ohm_per_hz * offset_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z.re >= 0.0) {
            return Err(Error::Config(format!("antenna resistance must be >= 0, got {}", self.z.re)));
        }
        Ok(())
    }
}

/// Element placement of the π-network, circulator side first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunerTopology {
    /// Shunt C1, series branch of L in parallel with C2, shunt C3.
    #[default]
    TankSeriesBranch,
    /// Shunt C1, series branch of L in series with C2, shunt C3.
    SeriesLcBranch,
    /// Shunt C1, series L, shunt C3 (C2 unused).
    InductorBranch,
    /// Shunt C1 only (L, C2, C3 removed).
    ShuntC1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    #[serde(default)]
    pub topology: TunerTopology,
    pub cap_codes: [u8; 3],
    pub inductance_h: f64,
    pub cap_min_f: f64,
    pub cap_step_f: f64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            topology: TunerTopology::TankSeriesBranch,
            cap_codes: [5, 2, 10],
            inductance_h: 5.1e-9,
            cap_min_f: 0.6e-12,
            cap_step_f: 0.131e-12,
        }
    }
}

impl TunerConfig {
    pub fn with_codes(mut self, codes: [u8; 3]) -> Self {
        self.cap_codes = codes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.cap_codes.iter().find(|&&c| c > CAP_CODE_MAX) {
            return Err(domain(format!("capacitor code {c} outside 0..={CAP_CODE_MAX}")));
        }
        if !(self.inductance_h > 0.0) || !(self.cap_min_f > 0.0) || !(self.cap_step_f > 0.0) {
            return Err(Error::Config("tuner inductance and capacitance mapping must be positive".into()));
        }
        Ok(())
    }
}

/// Over-the-air reflection from the surroundings, seen TX port to RX port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentEcho {
    pub gain_db: f64,
    pub delay_ns: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

impl EnvironmentEcho {
    pub fn response(&self, offset_hz: f64) -> Complex64 {
        let phase = self.phase_deg.to_radians() - 2.0 * PI * offset_hz * self.delay_ns * 1e-9;
        Complex64::from_polar(db_to_amplitude(self.gain_db), phase)
    }
}

/// Everything needed to evaluate the self-interference response of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub circulator: CirculatorParams,
    pub tuner: TunerConfig,
    pub antenna: AntennaImpedance,
    #[serde(default)]
    pub echoes: Vec<EnvironmentEcho>,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self {
            circulator: CirculatorParams::default(),
            tuner: TunerConfig::default(),
            antenna: AntennaImpedance::default(),
            echoes: vec![EnvironmentEcho { gain_db: -47.0, delay_ns: 200.0, phase_deg: 40.0 }],
        }
    }
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<()> {
        self.circulator.validate()?;
        self.tuner.validate()?;
        self.antenna.validate()
    }

    pub fn si_response(&self, freq_grid: &[f64], carrier_hz: f64) -> Result<FrequencyResponse> {
        let mut h = si_channel_response(&self.circulator, &self.tuner, &self.antenna, freq_grid, carrier_hz)?;
        for echo in &self.echoes {
            for (g, &f) in h.gains.iter_mut().zip(&h.freqs) {
                *g += echo.response(f);
            }
        }
        Ok(h)
    }
}

pub fn cap_code_to_capacitance(code: u8, cfg: &TunerConfig) -> Result<f64> {
    if code > CAP_CODE_MAX {
        return Err(domain(format!("capacitor code {code} outside 0..={CAP_CODE_MAX}")));
    }
    Ok(cfg.cap_min_f + code as f64 * cfg.cap_step_f)
}

fn series(a: Complex64, b: Complex64) -> Complex64 {
    a + b
}

fn parallel(a: Complex64, b: Complex64) -> Complex64 {
    a * b / (a + b)
}

/// Input impedance seen from the circulator looking into the tuner loaded by
/// the antenna.
pub fn tuner_input_impedance(cfg: &TunerConfig, load: &AntennaImpedance, freq_hz: f64) -> Result<Complex64> {
    cfg.validate()?;
    if !(freq_hz > 0.0) {
        return Err(domain(format!("frequency must be positive, got {freq_hz}")));
    }
    let w = 2.0 * PI * freq_hz;
    let cap_z = |code: u8| -> Result<Complex64> {
        let c = cap_code_to_capacitance(code, cfg)?;
        Ok(Complex64::new(0.0, -1.0 / (w * c)))
    };
    let [c1, c2, c3] = cfg.cap_codes;
    let zl = Complex64::new(0.0, w * cfg.inductance_h);
    let z_ant = load.z;
    let z = match cfg.topology {
        TunerTopology::TankSeriesBranch => {
            let z = parallel(z_ant, cap_z(c3)?);
            let z = series(z, parallel(zl, cap_z(c2)?));
            parallel(z, cap_z(c1)?)
        }
        TunerTopology::SeriesLcBranch => {
            let z = parallel(z_ant, cap_z(c3)?);
            let z = series(z, series(zl, cap_z(c2)?));
            parallel(z, cap_z(c1)?)
        }
        TunerTopology::InductorBranch => {
            let z = parallel(z_ant, cap_z(c3)?);
            parallel(series(z, zl), cap_z(c1)?)
        }
        TunerTopology::ShuntC1 => parallel(z_ant, cap_z(c1)?),
    };
    Ok(z)
}

/// `Γ = (Z − Z0)/(Z + Z0)`.
pub fn reflection_coefficient(z: Complex64, z0: f64) -> Result<Complex64> {
    let den = z + z0;
    if den.norm() <= f64::EPSILON * z0.abs().max(1.0) {
        return Err(Error::Singular(format!("Z = {z} is the negative of Z0 = {z0}")));
    }
    Ok((z - z0) / den)
}

pub const REFERENCE_IMPEDANCE_OHM: f64 = 50.0;

/// Composite TX→RX response: direct circulator leakage plus the antenna-port
/// reflection travelling TX→ANT, off the tuner input, and ANT→RX.
pub fn si_channel_response(
    circ: &CirculatorParams,
    tuner: &TunerConfig,
    ant: &AntennaImpedance,
    freq_grid: &[f64],
    carrier_hz: f64,
) -> Result<FrequencyResponse> {
    if freq_grid.is_empty() {
        return Err(domain("empty frequency grid"));
    }
    circ.validate()?;
    ant.validate()?;
    let il = db_to_amplitude(-circ.insertion_loss_db);
    let gains = freq_grid
        .iter()
        .map(|&f| {
            let load = AntennaImpedance { z: ant.at_offset(f), slope_ohm_per_hz: Complex64::new(0.0, 0.0) };
            let zin = tuner_input_impedance(tuner, &load, carrier_hz + f)?;
            let gamma = reflection_coefficient(zin, REFERENCE_IMPEDANCE_OHM)?;
            Ok(circ.leakage(f) + gamma * (il * il))
        })
        .collect::<Result<Vec<_>>>()?;
    FrequencyResponse::new(freq_grid.to_vec(), gains)
}

/// Exhaustive search over all 32³ capacitor codes for the smallest mean
/// `|Γ|²` on the grid. Ties resolve to the lexicographically smallest codes.
pub fn match_tuner(
    base: &TunerConfig,
    ant: &AntennaImpedance,
    freq_grid: &[f64],
    carrier_hz: f64,
) -> Result<([u8; 3], f64)> {
    base.validate()?;
    if freq_grid.is_empty() {
        return Err(domain("empty frequency grid"));
    }
    let n = (CAP_CODE_MAX as u32 + 1).pow(3);
    let score = |idx: u32| -> (f64, u32) {
        let codes = index_to_caps(idx);
        let cfg = base.with_codes(codes);
        let mut acc = 0.0;
        for &f in freq_grid {
            let load = AntennaImpedance { z: ant.at_offset(f), slope_ohm_per_hz: Complex64::new(0.0, 0.0) };
            let g = tuner_input_impedance(&cfg, &load, carrier_hz + f)
                .and_then(|z| reflection_coefficient(z, REFERENCE_IMPEDANCE_OHM))
                .map(|g| g.norm_sqr())
                .unwrap_or(f64::INFINITY);
            acc += g;
        }
        (acc / freq_grid.len() as f64, idx)
    };
    let (best, idx) = (0..n)
        .into_par_iter()
        .map(score)
        .reduce(|| (f64::INFINITY, u32::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok((index_to_caps(idx), best.sqrt()))
}

fn index_to_caps(idx: u32) -> [u8; 3] {
    let base = CAP_CODE_MAX as u32 + 1;
    [(idx / (base * base)) as u8, ((idx / base) % base) as u8, (idx % base) as u8]
}

const FIT_BAND_FRACTION: f64 = 0.8;

/// Time-domain FIR realisation of a response, with taps at lags
/// `-pre_taps..=post_taps` (tap `k` multiplies `x[n-k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FirChannel {
    pub taps: Vec<Complex64>,
    pub pre_taps: usize,
}

impl FirChannel {
    /// Least-squares fit of `Σ h[k]·e^{-j2πfk/fs}` to the response evaluated by
    /// `eval` on a dense grid over the central 80 % of the Nyquist band.
    pub fn fit<F>(eval: F, sample_rate_hz: f64, pre_taps: usize, post_taps: usize, grid_points: usize) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<FrequencyResponse>,
    {
        let n_taps = pre_taps + post_taps + 1;
        if grid_points < n_taps {
            return Err(domain("FIR fit grid must have at least as many points as taps"));
        }
        let grid: Vec<f64> = (0..grid_points)
            .map(|k| FIT_BAND_FRACTION * sample_rate_hz * ((k as f64 + 0.5) / grid_points as f64 - 0.5))
            .collect();
        let h = eval(&grid)?;
        let mut a = linalg::CMatrix::zeros(grid_points, n_taps);
        for (r, &f) in grid.iter().enumerate() {
            for c in 0..n_taps {
                let lag = c as f64 - pre_taps as f64;
                a[(r, c)] = Complex64::from_polar(1.0, -2.0 * PI * f * lag / sample_rate_hz);
            }
        }
        let taps = linalg::solve_least_squares(&a, h.gains(), 0.0)?.solution;
        Ok(Self { taps, pre_taps })
    }

    /// A single flat gain at lag 0.
    pub fn flat(gain: Complex64) -> Self {
        Self { taps: vec![gain], pre_taps: 0 }
    }

    pub fn response_at(&self, offset_hz: f64, sample_rate_hz: f64) -> Complex64 {
        self.taps
            .iter()
            .enumerate()
            .map(|(c, &t)| {
                let lag = c as f64 - self.pre_taps as f64;
                t * Complex64::from_polar(1.0, -2.0 * PI * offset_hz * lag / sample_rate_hz)
            })
            .sum()
    }

    /// Subtracts a flat gain from the zero-lag tap.
    pub fn minus_flat(&self, gain: Complex64) -> Self {
        let mut out = self.clone();
        out.taps[self.pre_taps] -= gain;
        out
    }
}
