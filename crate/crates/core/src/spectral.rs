//! Welch power spectral density with per-bin power normalization, so that
//! the linear bin powers sum to the mean signal power.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::signal::ComplexBasebandSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    pub fn name(&self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rect => "rect",
        }
    }

    fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            // Periodic Hann: exact overlap-add at 50%.
            Window::Hann => (0..n).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    /// Bin centers, DC in the middle (`(k − nfft/2)·fs/nfft`).
    pub freqs_hz: Vec<f64>,
    pub psd_dbm_per_bin: Vec<f64>,
    pub nfft: usize,
    pub window_name: String,
    pub overlap_fraction: f64,
    pub n_segments: usize,
}

impl PsdEstimate {
    pub fn bin_powers_w(&self) -> Vec<f64> {
        self.psd_dbm_per_bin.iter().map(|d| 10f64.powf((d - 30.0) / 10.0)).collect()
    }

    pub fn total_power_dbm(&self) -> f64 {
        10.0 * self.bin_powers_w().iter().sum::<f64>().log10() + 30.0
    }

    pub fn peak_bin(&self) -> usize {
        self.psd_dbm_per_bin
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
    }

    /// Index of the bin whose center is nearest `freq_hz`.
    pub fn bin_of(&self, freq_hz: f64) -> usize {
        self.freqs_hz
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - freq_hz).abs().total_cmp(&(b.1 - freq_hz).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

pub fn welch_psd(
    sig: &ComplexBasebandSignal,
    nfft: usize,
    window: Window,
    overlap_fraction: f64,
) -> Result<PsdEstimate> {
    if nfft == 0 {
        return Err(domain("nfft must be positive"));
    }
    if sig.len() < nfft {
        return Err(domain(format!("signal of {} samples shorter than nfft {nfft}", sig.len())));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(domain(format!("overlap fraction {overlap_fraction} outside [0, 1)")));
    }
    let hop = ((nfft as f64) * (1.0 - overlap_fraction)).round().max(1.0) as usize;
    let n_segments = (sig.len() - nfft) / hop + 1;
    let w = window.coefficients(nfft);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut acc = vec![0.0; nfft];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for s in 0..n_segments {
        let seg = &sig.samples[s * hop..s * hop + nfft];
        for ((b, x), wk) in buf.iter_mut().zip(seg).zip(&w) {
            *b = x * wk;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    // Σ_k |X_k|² = nfft·Σ|w·x|², so dividing by nfft·Σw² yields bin powers
    // whose sum is the window-weighted mean power.
    let norm = n_segments as f64 * nfft as f64 * w_energy * sig.ref_impedance_ohm;
    let half = nfft / 2;
    let fs = sig.sample_rate_hz;
    let mut freqs_hz = Vec::with_capacity(nfft);
    let mut psd = Vec::with_capacity(nfft);
    for k in 0..nfft {
        let src = (k + nfft - half) % nfft;
        freqs_hz.push((k as f64 - half as f64) * fs / nfft as f64);
        psd.push(10.0 * (acc[src] / norm).max(1e-300).log10() + 30.0);
    }
    Ok(PsdEstimate {
        freqs_hz,
        psd_dbm_per_bin: psd,
        nfft,
        window_name: window.name().to_string(),
        overlap_fraction,
        n_segments,
    })
}

pub const CSV_HEADER: &str = "freq_hz,psd_dbm";

/// CSV text with fixed formatting so identical estimates give identical bytes.
pub fn psd_to_csv(psd: &PsdEstimate) -> String {
    let mut out = String::with_capacity(32 * psd.nfft);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (f, p) in psd.freqs_hz.iter().zip(&psd.psd_dbm_per_bin) {
        let _ = writeln!(out, "{f:.3},{p:.6}");
    }
    out
}

pub fn export_psd(psd: &PsdEstimate, path: &Path) -> Result<()> {
    std::fs::write(path, psd_to_csv(psd))?;
    Ok(())
}

/// Parses `freq_hz,psd_dbm` rows back into `(freqs, psd)`.
pub fn parse_psd_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected PSD CSV header {other:?}"))),
    }
    let mut freqs = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Parse(format!("row {} too short", i + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))
        };
        freqs.push(parse(parts.next())?);
        vals.push(parse(parts.next())?);
    }
    Ok((freqs, vals))
}
