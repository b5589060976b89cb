//! Frequency-flat amplitude/phase RF canceller, residual SI and RF SIC
//! metrics, and code-space search.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{FrequencyResponse, CAP_CODE_MAX};
use crate::error::{domain, Error, Result};
use crate::signal::db_to_amplitude;

pub const ATT_CODE_MAX: u8 = 127;
pub const PS_CODE_MAX: u8 = 255;
pub const PS_STEPS: u32 = 256;
/// Returned by SIC metrics when the residual vanishes.
pub const SIC_CAP_DB: f64 = 150.0;

/// Full box configuration: attenuator, phase shifter and tuner capacitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CancellerCode {
    pub att: u8,
    pub ps: u8,
    pub caps: [u8; 3],
}

impl CancellerCode {
    /// The configuration programmed in the published tone experiment.
    pub const PAPER_PROFILE: CancellerCode = CancellerCode { att: 30, ps: 110, caps: [16, 6, 6] };

    pub fn validate(&self) -> Result<()> {
        if self.att > ATT_CODE_MAX {
            return Err(domain(format!("ATT code {} outside 0..={ATT_CODE_MAX}", self.att)));
        }
        if let Some(c) = self.caps.iter().find(|&&c| c > CAP_CODE_MAX) {
            return Err(domain(format!("CAP code {c} outside 0..={CAP_CODE_MAX}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellerParams {
    pub coupler_tap_db: f64,
    /// Canceller path loss at ATT = 0 excluding the coupler tap.
    pub base_loss_db: f64,
    pub att_step_db: f64,
    pub phase_span_deg: f64,
    /// Optional ceiling on the attenuation actually realised, reproducing the
    /// compressed range measured on hardware.
    #[serde(default)]
    pub att_saturation_db: Option<f64>,
}

impl Default for CancellerParams {
    fn default() -> Self {
        Self {
            coupler_tap_db: 6.0,
            base_loss_db: 11.5,
            att_step_db: 0.25,
            phase_span_deg: 360.0,
            att_saturation_db: None,
        }
    }
}

impl CancellerParams {
    /// Profile matching the measured amplitude range (−17.5 dB to −46.5 dB).
    pub fn measured_range() -> Self {
        Self { att_saturation_db: Some(29.0), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.att_step_db > 0.0) || !(self.base_loss_db > 0.0) || !(self.phase_span_deg > 0.0) {
            return Err(Error::Config("canceller step, base loss and phase span must be positive".into()));
        }
        Ok(())
    }
}

pub fn att_code_to_attenuation_db(code: u8, params: &CancellerParams) -> Result<f64> {
    if code > ATT_CODE_MAX {
        return Err(domain(format!("ATT code {code} outside 0..={ATT_CODE_MAX}")));
    }
    let lin = code as f64 * params.att_step_db;
    Ok(match params.att_saturation_db {
        Some(cap) => lin.min(cap),
        None => lin,
    })
}

pub fn ps_code_to_phase_deg(code: u8, params: &CancellerParams) -> f64 {
    code as f64 * (params.phase_span_deg / PS_STEPS as f64)
}

/// Complex path gain of the canceller for an ATT/PS pair.
pub fn canceller_scalar_gain(att: u8, ps: u8, params: &CancellerParams) -> Result<Complex64> {
    let att_db = att_code_to_attenuation_db(att, params)?;
    let mag = db_to_amplitude(-(params.coupler_tap_db + params.base_loss_db + att_db));
    Ok(Complex64::from_polar(mag, ps_code_to_phase_deg(ps, params).to_radians()))
}

pub fn canceller_gain(code: &CancellerCode, params: &CancellerParams, freq_grid: &[f64]) -> Result<FrequencyResponse> {
    code.validate()?;
    FrequencyResponse::flat(freq_grid, canceller_scalar_gain(code.att, code.ps, params)?)
}

/// Pointwise `h_si − h_c`; the canceller output is subtracted at the LNA input.
pub fn residual_response(h_si: &FrequencyResponse, h_c: &FrequencyResponse) -> Result<FrequencyResponse> {
    if !h_si.same_grid(h_c) {
        return Err(Error::Shape("residual of responses on different frequency grids".into()));
    }
    let gains = h_si.gains().iter().zip(h_c.gains()).map(|(a, b)| a - b).collect();
    FrequencyResponse::new(h_si.freqs().to_vec(), gains)
}

/// Half-width band `[-band/2, band/2]` selection as indices into the grid.
fn band_indices(freqs: &[f64], band_hz: f64) -> Vec<usize> {
    let half = 0.5 * band_hz * (1.0 + 1e-12);
    freqs.iter().enumerate().filter(|(_, f)| f.abs() <= half).map(|(i, _)| i).collect()
}

fn mean_power(gains: &[Complex64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| gains[i].norm_sqr()).sum::<f64>() / idx.len() as f64
}

fn ratio_db(before: f64, after: f64) -> f64 {
    if after <= 0.0 {
        return SIC_CAP_DB;
    }
    (10.0 * (before / after).log10()).min(SIC_CAP_DB)
}

/// In-band RF SIC in dB over the centered band of total width `band_hz`.
pub fn rf_sic_db(h_before: &FrequencyResponse, h_after: &FrequencyResponse, band_hz: f64) -> Result<f64> {
    if !h_before.same_grid(h_after) {
        return Err(Error::Shape("SIC of responses on different frequency grids".into()));
    }
    let idx = band_indices(h_before.freqs(), band_hz);
    if idx.is_empty() {
        return Err(domain(format!("no grid points inside a {band_hz} Hz band")));
    }
    Ok(ratio_db(mean_power(h_before.gains(), &idx), mean_power(h_after.gains(), &idx)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    #[default]
    Exhaustive,
    CoordinateDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub code: CancellerCode,
    pub sic_db: f64,
    /// Coordinate sweeps performed (1 for exhaustive search).
    pub sweeps: u32,
}

pub const MAX_SWEEPS: u32 = 20;

/// In-band statistics of `h_si` that make the residual power of any flat
/// gain `g` a closed form: `mean|h − g|² = p − 2·Re(ḡ·m) + |g|²`.
struct BandMoments {
    mean_gain: Complex64,
    mean_power: f64,
}

impl BandMoments {
    fn residual(&self, g: Complex64) -> f64 {
        (self.mean_power - 2.0 * (g.conj() * self.mean_gain).re + g.norm_sqr()).max(0.0)
    }
}

/// Searches ATT/PS for the best in-band RF SIC with the tuner codes held at
/// `caps`. Ties go to the smallest `(att, ps)`.
pub fn tune_canceller(
    h_si: &FrequencyResponse,
    params: &CancellerParams,
    band_hz: f64,
    strategy: SearchStrategy,
    caps: [u8; 3],
    start: Option<CancellerCode>,
) -> Result<TuneResult> {
    params.validate()?;
    let idx = band_indices(h_si.freqs(), band_hz);
    if idx.is_empty() {
        return Err(domain(format!("no grid points inside a {band_hz} Hz band")));
    }
    let n = idx.len() as f64;
    let moments = BandMoments {
        mean_gain: idx.iter().map(|&i| h_si.gains()[i]).sum::<Complex64>() / n,
        mean_power: mean_power(h_si.gains(), &idx),
    };
    let gains = GainTable::new(params)?;
    let ((att, ps), sweeps) = match strategy {
        SearchStrategy::Exhaustive => (exhaustive(&moments, &gains), 1),
        SearchStrategy::CoordinateDescent => {
            let s = start.map(|c| (c.att, c.ps)).unwrap_or((0, 0));
            coordinate_descent(&moments, &gains, s)
        }
    };
    let code = CancellerCode { att, ps, caps };
    code.validate()?;
    let sic_db = ratio_db(moments.mean_power, moments.residual(gains.get(att, ps)));
    Ok(TuneResult { code, sic_db, sweeps })
}

struct GainTable {
    mags: Vec<f64>,
    phasors: Vec<Complex64>,
}

impl GainTable {
    fn new(params: &CancellerParams) -> Result<Self> {
        let mags = (0..=ATT_CODE_MAX)
            .map(|a| canceller_scalar_gain(a, 0, params).map(|g| g.re))
            .collect::<Result<Vec<_>>>()?;
        let phasors = (0..=PS_CODE_MAX)
            .map(|p| Complex64::from_polar(1.0, ps_code_to_phase_deg(p, params).to_radians()))
            .collect();
        Ok(Self { mags, phasors })
    }

    fn get(&self, att: u8, ps: u8) -> Complex64 {
        self.phasors[ps as usize] * self.mags[att as usize]
    }
}

fn exhaustive(m: &BandMoments, gains: &GainTable) -> (u8, u8) {
    // Partitioned by ATT row; each worker returns the first minimum of its row
    // and the reduction keeps the earliest row on ties.
    let rows: Vec<(f64, u8, u8)> = (0..=ATT_CODE_MAX)
        .into_par_iter()
        .map(|att| {
            let mut best = (f64::INFINITY, att, 0u8);
            for ps in 0..=PS_CODE_MAX {
                let r = m.residual(gains.get(att, ps));
                if r < best.0 {
                    best = (r, att, ps);
                }
            }
            best
        })
        .collect();
    let mut best = rows[0];
    for &r in &rows[1..] {
        if r.0 < best.0 {
            best = r;
        }
    }
    (best.1, best.2)
}

fn coordinate_descent(m: &BandMoments, gains: &GainTable, start: (u8, u8)) -> ((u8, u8), u32) {
    let (mut att, mut ps) = start;
    let mut current = m.residual(gains.get(att, ps));
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let before = current;
        for a in 0..=ATT_CODE_MAX {
            let r = m.residual(gains.get(a, ps));
            if r < current || (r == current && a < att) {
                current = r;
                att = a;
            }
        }
        for p in 0..=PS_CODE_MAX {
            let r = m.residual(gains.get(att, p));
            if r < current || (r == current && p < ps) {
                current = r;
                ps = p;
            }
        }
        if current >= before {
            break;
        }
    }
    ((att, ps), sweeps)
}
