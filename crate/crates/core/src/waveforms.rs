//! Test signals, transmit-chain impairments and receiver noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::signal::{db_to_amplitude, dbm_to_watts, ComplexBasebandSignal};

/// Complex exponential at `offset_hz` with exact mean power `power_dbm`.
pub fn gen_tone(rate_hz: f64, offset_hz: f64, power_dbm: f64, n: usize) -> Result<ComplexBasebandSignal> {
    if n == 0 {
        return Err(domain("tone length must be positive"));
    }
    if !(offset_hz.abs() < rate_hz / 2.0) {
        return Err(domain(format!("offset {offset_hz} Hz aliases at {rate_hz} Hz sampling")));
    }
    let amp = dbm_to_watts(power_dbm).sqrt();
    let w = 2.0 * PI * offset_hz / rate_hz;
    let samples = (0..n).map(|k| Complex64::from_polar(amp, w * k as f64)).collect();
    ComplexBasebandSignal::new(samples, rate_hz)
}

/// Root-raised-cosine taps, `span·sps + 1` long, unit energy.
pub fn rrc_taps(rolloff: f64, span_symbols: usize, sps: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) || sps == 0 {
        return Err(domain(format!("invalid RRC parameters: rolloff {rolloff}, sps {sps}")));
    }
    let half = (span_symbols * sps / 2) as i64;
    let b = rolloff;
    let taps: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-12 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    Ok(taps.into_iter().map(|h| h / energy).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PskParams {
    /// 2 (BPSK) or 4 (QPSK).
    pub order: u32,
    pub symbol_rate_hz: f64,
    pub sample_rate_hz: f64,
    pub rrc_rolloff: f64,
    /// 0 disables pulse shaping.
    pub rrc_span_symbols: usize,
    pub power_dbm: f64,
    pub n_symbols: usize,
    pub seed: u64,
}

/// Seeded PSK symbols on the unit circle, upsampled and RRC shaped, scaled to
/// `power_dbm`.
pub fn gen_psk(p: &PskParams) -> Result<ComplexBasebandSignal> {
    if p.order != 2 && p.order != 4 {
        return Err(domain(format!("PSK order must be 2 or 4, got {}", p.order)));
    }
    if !(p.symbol_rate_hz > 0.0) || p.n_symbols == 0 {
        return Err(domain("symbol rate and symbol count must be positive"));
    }
    let ratio = p.sample_rate_hz / p.symbol_rate_hz;
    let sps = ratio.round();
    if sps < 1.0 || (ratio - sps).abs() > 1e-9 * ratio {
        return Err(domain(format!("sample rate is not an integer multiple of the symbol rate ({ratio})")));
    }
    let sps = sps as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let symbols: Vec<Complex64> = (0..p.n_symbols)
        .map(|_| {
            let k = rng.random_range(0..p.order);
            if p.order == 2 {
                Complex64::new(if k == 0 { 1.0 } else { -1.0 }, 0.0)
            } else {
                Complex64::from_polar(1.0, PI / 4.0 + k as f64 * PI / 2.0)
            }
        })
        .collect();
    let n = p.n_symbols * sps;
    let mut up = vec![Complex64::new(0.0, 0.0); n];
    for (i, s) in symbols.iter().enumerate() {
        up[i * sps] = *s;
    }
    let shaped = if p.rrc_span_symbols == 0 {
        up
    } else {
        let taps = rrc_taps(p.rrc_rolloff, p.rrc_span_symbols, sps)?;
        convolve_centered(&up, &taps)
    };
    let mut sig = ComplexBasebandSignal::new(shaped, p.sample_rate_hz)?;
    scale_to_power(&mut sig, p.power_dbm)?;
    Ok(sig)
}

/// Linear convolution with a symmetric real filter, output aligned to the
/// input by the filter's group delay and truncated to the input length.
pub fn convolve_centered(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let d = (taps.len() - 1) / 2;
    (0..x.len())
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &h) in taps.iter().enumerate() {
                let idx = n as i64 + d as i64 - k as i64;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += x[idx as usize] * h;
                }
            }
            acc
        })
        .collect()
}

pub fn scale_to_power(sig: &mut ComplexBasebandSignal, power_dbm: f64) -> Result<()> {
    let p = sig.mean_power_w()?;
    if p == 0.0 {
        return Err(domain("cannot scale an all-zero signal"));
    }
    let k = (dbm_to_watts(power_dbm) / p).sqrt();
    sig.samples.iter_mut().for_each(|s| *s *= k);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxChainParams {
    /// Third-order coefficient per unit normalized amplitude squared.
    pub pa_a3: Complex64,
    pub pa_a5: Complex64,
    pub tx_gain_db: f64,
    /// Input power whose amplitude counts as unit drive for the polynomial.
    pub unit_drive_dbm: f64,
    /// Image leakage of the quadrature modulator relative to the wanted signal
    /// (dBc); `None` for an ideal modulator.
    #[serde(default)]
    pub iq_image_dbc: Option<f64>,
    #[serde(default)]
    pub iq_image_phase_deg: f64,
}

impl Default for TxChainParams {
    fn default() -> Self {
        Self {
            pa_a3: Complex64::from_polar(0.005, 10f64.to_radians()),
            pa_a5: Complex64::from_polar(0.0001, (-20f64).to_radians()),
            tx_gain_db: 10.0,
            unit_drive_dbm: -20.0,
            iq_image_dbc: Some(-43.0),
            iq_image_phase_deg: 30.0,
        }
    }
}

impl TxChainParams {
    pub fn ideal(tx_gain_db: f64) -> Self {
        Self {
            pa_a3: Complex64::new(0.0, 0.0),
            pa_a5: Complex64::new(0.0, 0.0),
            tx_gain_db,
            unit_drive_dbm: 30.0,
            iq_image_dbc: None,
            iq_image_phase_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |c: Complex64| c.re.is_finite() && c.im.is_finite();
        if !finite(self.pa_a3)
            || !finite(self.pa_a5)
            || !self.tx_gain_db.is_finite()
            || !self.unit_drive_dbm.is_finite()
        {
            return Err(domain("TX chain coefficients must be finite"));
        }
        Ok(())
    }
}

/// Memoryless odd-order polynomial PA: `y = g·(x + a3·x|x|² + a5·x|x|⁴)` with
/// amplitudes normalized to `unit_drive_dbm`.
pub fn apply_pa(tx: &ComplexBasebandSignal, params: &TxChainParams) -> Result<ComplexBasebandSignal> {
    params.validate()?;
    let g = db_to_amplitude(params.tx_gain_db);
    let a2 = dbm_to_watts(params.unit_drive_dbm) * tx.ref_impedance_ohm;
    let samples = tx
        .samples
        .iter()
        .map(|&x| {
            let u = x.norm_sqr() / a2;
            x * (Complex64::new(1.0, 0.0) + params.pa_a3 * u + params.pa_a5 * u * u) * g
        })
        .collect();
    Ok(ComplexBasebandSignal { samples, ..tx.clone() })
}

/// Quadrature modulator imbalance: `x + ν·conj(x)`.
pub fn apply_iq_imbalance(tx: &ComplexBasebandSignal, params: &TxChainParams) -> ComplexBasebandSignal {
    match params.iq_image_dbc {
        None => tx.clone(),
        Some(dbc) => {
            let nu = Complex64::from_polar(db_to_amplitude(dbc), params.iq_image_phase_deg.to_radians());
            let samples = tx.samples.iter().map(|&x| x + nu * x.conj()).collect();
            ComplexBasebandSignal { samples, ..tx.clone() }
        }
    }
}

/// Modulator followed by the power amplifier.
pub fn apply_tx_chain(tx: &ComplexBasebandSignal, params: &TxChainParams) -> Result<ComplexBasebandSignal> {
    apply_pa(&apply_iq_imbalance(tx, params), params)
}

/// Circular complex Gaussian samples with total power `floor_dbm` across
/// the full sample rate. `-inf` yields zeros.
pub fn awgn_samples(n: usize, floor_dbm: f64, ref_impedance_ohm: f64, seed: u64) -> Vec<Complex64> {
    if floor_dbm == f64::NEG_INFINITY {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    let sigma = (dbm_to_watts(floor_dbm) * ref_impedance_ohm / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite noise power");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect()
}

pub fn add_awgn(sig: &ComplexBasebandSignal, noise_floor_dbm: f64, seed: u64) -> Result<ComplexBasebandSignal> {
    if noise_floor_dbm.is_nan() || noise_floor_dbm == f64::INFINITY {
        return Err(domain(format!("invalid noise floor {noise_floor_dbm}")));
    }
    let noise = awgn_samples(sig.len(), noise_floor_dbm, sig.ref_impedance_ohm, seed);
    let samples = sig.samples.iter().zip(noise).map(|(s, n)| s + n).collect();
    Ok(ComplexBasebandSignal { samples, ..sig.clone() })
}
