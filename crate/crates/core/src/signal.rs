//! Complex baseband sample streams and the power convention shared by every
//! stage of the simulator.
//!
//! Powers are expressed in dBm under a unit reference impedance:
//! `P[dBm] = 10·log10(mean|x|² / R) + 30` with `R = 1 Ω` unless a signal says
//! otherwise. A 0 dBm stream therefore has `mean|x|² = 1e-3`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Reference impedance of signals built with [`ComplexBasebandSignal::new`].
pub const DEFAULT_REF_IMPEDANCE_OHM: f64 = 1.0;

pub const POWER_CONVENTION: &str = "dBm = 10*log10(mean(|x|^2) / R) + 30, R = ref_impedance_ohm";

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub ref_impedance_ohm: f64,
}

impl ComplexBasebandSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(domain(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(domain("signal contains non-finite samples"));
        }
        Ok(Self { samples, sample_rate_hz, ref_impedance_ohm: DEFAULT_REF_IMPEDANCE_OHM })
    }

    pub fn zeros(n: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); n], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean-square magnitude normalized by the reference impedance (watts).
    pub fn mean_power_w(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(domain("power of an empty signal"));
        }
        Ok(mean_square(&self.samples) / self.ref_impedance_ohm)
    }

    pub fn power_dbm(&self) -> Result<f64> {
        self.mean_power_w().map(watts_to_dbm)
    }

    /// Sub-range `[start, end)` as a new signal with the same rate.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::Shape(format!("slice {start}..{end} out of bounds for length {}", self.samples.len())));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            ref_impedance_ohm: self.ref_impedance_ohm,
        })
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { samples: self.samples.iter().map(|&s| s * factor).collect(), ..self.clone() }
    }
}

/// Power of a signal in dBm. Errors on an empty signal.
pub fn power_dbm(sig: &ComplexBasebandSignal) -> Result<f64> {
    sig.power_dbm()
}

pub fn mean_square(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Sidecar metadata written next to raw I/Q captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqSidecar {
    pub format: String,
    pub sample_rate_hz: f64,
    pub ref_impedance_ohm: f64,
    pub power_convention: String,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub const IQ_FORMAT: &str = "cf32_le";

pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut p = data_path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes interleaved little-endian `f32` I/Q plus a `<path>.json` sidecar.
pub fn write_iq(sig: &ComplexBasebandSignal, path: &Path, seed: Option<u64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in &sig.samples {
        w.write_all(&(s.re as f32).to_le_bytes())?;
        w.write_all(&(s.im as f32).to_le_bytes())?;
    }
    w.flush()?;
    let meta = IqSidecar {
        format: IQ_FORMAT.to_string(),
        sample_rate_hz: sig.sample_rate_hz,
        ref_impedance_ohm: sig.ref_impedance_ohm,
        power_convention: POWER_CONVENTION.to_string(),
        n_samples: sig.len(),
        seed,
    };
    let side = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(side, &meta)?;
    Ok(())
}

pub fn read_iq(path: &Path) -> Result<(ComplexBasebandSignal, IqSidecar)> {
    let meta: IqSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    if meta.format != IQ_FORMAT {
        return Err(Error::Parse(format!("unsupported I/Q format {:?}", meta.format)));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!("I/Q file length {} is not a multiple of 8", bytes.len())));
    }
    let samples: Vec<Complex64> = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    if samples.len() != meta.n_samples {
        return Err(Error::Parse(format!("sidecar declares {} samples, file holds {}", meta.n_samples, samples.len())));
    }
    let mut sig = ComplexBasebandSignal::new(samples, meta.sample_rate_hz)?;
    sig.ref_impedance_ohm = meta.ref_impedance_ohm;
    Ok((sig, meta))
}
