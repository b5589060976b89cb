//! End-to-end node and link experiments.
//!
//! A run resolves the canceller code, streams the waveform through the TX
//! chain, SI channel, canceller and RX combiner, fits the Volterra model on
//! the training window and reports powers over the held-out window.

mod config;
mod pipeline;
mod report;

pub use config::{
    CancellerSetting, DigitalSicSettings, Durations, ExperimentConfig, FirSettings, PsdSettings, RemoteSignal,
    TxImpairments, Wave, PRESET_NAMES,
};
pub use pipeline::{
    baseband_waveform, calibrate_drive, prepare_channel, simulate, NoiseSource, PreparedChannel, SimulationTrace,
    StreamingFir,
};
pub use report::{DesiredSignalReport, ExperimentReport};

use std::ops::Range;

use num_complex::Complex64;

use crate::canceller::SIC_CAP_DB;
use crate::error::{domain, Error, Result};
use crate::signal::{mean_square, watts_to_dbm, ComplexBasebandSignal};
use crate::spectral::{welch_psd, PsdEstimate, Window};

/// A report plus the artifacts behind it.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub trace: SimulationTrace,
    /// Spectrum of the received signal after RF SIC (evaluation window).
    pub psd_post_rf: PsdEstimate,
    /// Spectrum after digital SIC (evaluation window).
    pub psd_post_dig: PsdEstimate,
}

impl ExperimentOutput {
    pub fn eval_window(&self, cfg: &ExperimentConfig) -> Range<usize> {
        eval_window(cfg)
    }
}

fn eval_window(cfg: &ExperimentConfig) -> Range<usize> {
    let d = cfg.durations;
    d.settle_samples + d.train_samples..d.total()
}

/// SI-only run; rejects configurations with an active remote signal.
pub fn run_node_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.active_remote().is_some() {
        return Err(Error::Config("node experiment takes no remote signal; use the link experiment".into()));
    }
    run(cfg, "node")
}

/// Run with a remote tone added at the RX combiner.
pub fn run_link_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.remote.is_none() {
        return Err(Error::Config("link experiment needs a remote signal".into()));
    }
    run(cfg, "link")
}

/// Dispatches on whether `cfg` has a remote signal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.remote.is_some() {
        run_link_experiment(cfg)
    } else {
        run_node_experiment(cfg)
    }
}

fn run(cfg: &ExperimentConfig, scenario: &str) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let prepared = prepare_channel(cfg, cfg.canceller)?;
    let trace = simulate(cfg, &prepared)?;
    let e = eval_window(cfg);
    if !(trace.dig_valid.start <= e.start && trace.dig_valid.end >= e.end) {
        return Err(domain("evaluation window extends past the digital SIC support"));
    }
    let rx_sig = |v: &[Complex64]| ComplexBasebandSignal::new(v[e.clone()].to_vec(), cfg.rate_hz);
    let tx_power_dbm = watts_to_dbm(mean_square(&trace.tx_out[e.clone()]));
    let (post_rf_power_dbm, rf_sic_db, post_dig_power_dbm, dig_sic_db) = report::stage_budget(
        tx_power_dbm,
        mean_square(&trace.si_post_rf[e.clone()]),
        mean_square(&trace.si_post_dig[e.clone()]),
    );
    let rx_rf = rx_sig(&trace.rx_post_rf.samples)?;
    let rx_dig = rx_sig(&trace.rx_post_dig.samples)?;
    let psd_post_rf = welch_psd(&rx_rf, cfg.psd.nfft, Window::Hann, cfg.psd.overlap)?;
    let psd_post_dig = welch_psd(&rx_dig, cfg.psd.nfft, Window::Hann, cfg.psd.overlap)?;

    let desired = match cfg.active_remote() {
        None => None,
        Some(r) => {
            let d = &trace.desired[e.clone()];
            let before = desired_snr_db(&rx_rf, d, r.offset_hz, cfg)?;
            let after = desired_snr_db(&rx_dig, d, r.offset_hz, cfg)?;
            let ideal = (r.power_dbm - cfg.noise_floor_dbm).min(SIC_CAP_DB);
            Some(DesiredSignalReport {
                offset_hz: r.offset_hz,
                power_dbm: r.power_dbm,
                ideal_snr_db: ideal,
                snr_before_dig_db: before,
                snr_after_dig_db: after,
                snr_loss_db: ideal - after,
            })
        }
    };

    let report = ExperimentReport {
        scenario: scenario.to_string(),
        tx_power_dbm,
        post_rf_power_dbm,
        rf_sic_db,
        post_dig_power_dbm,
        dig_sic_db,
        total_sic_db: rf_sic_db + dig_sic_db,
        canceller_code_used: prepared.code,
        rf_band_sic_db: prepared.rf_band_sic_db,
        rf_band_hz: cfg.rf_band_hz,
        noise_floor_dbm: cfg.noise_floor_dbm,
        rx_power_post_rf_dbm: rx_rf.power_dbm()?,
        rx_power_post_dig_dbm: rx_dig.power_dbm()?,
        volterra_lag: trace.model.lag,
        desired,
    };
    Ok(ExperimentOutput { report, trace, psd_post_rf, psd_post_dig })
}

/// SNR of the known desired signal `d` inside `rx`: the desired component is
/// projected out and the impairment density is read from the spectrum within
/// `psd.snr_halfwidth_hz` of `offset_hz`, scaled to the full sample rate.
pub fn desired_snr_db(
    rx: &ComplexBasebandSignal,
    d: &[Complex64],
    offset_hz: f64,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    if rx.len() != d.len() {
        return Err(Error::Shape(format!("{} received vs {} desired samples", rx.len(), d.len())));
    }
    let dd: f64 = d.iter().map(|v| v.norm_sqr()).sum();
    if dd == 0.0 {
        return Err(domain("desired signal is zero"));
    }
    let alpha: Complex64 = rx.samples.iter().zip(d).map(|(r, v)| r * v.conj()).sum::<Complex64>() / dd;
    let impairment: Vec<Complex64> = rx.samples.iter().zip(d).map(|(r, v)| r - alpha * v).collect();
    let psd = welch_psd(
        &ComplexBasebandSignal { samples: impairment, ..rx.clone() },
        cfg.psd.nfft,
        Window::Hann,
        cfg.psd.overlap,
    )?;
    let powers = psd.bin_powers_w();
    let near: Vec<f64> = psd
        .freqs_hz
        .iter()
        .zip(&powers)
        .filter(|(f, _)| (*f - offset_hz).abs() <= cfg.psd.snr_halfwidth_hz)
        .map(|(_, p)| *p)
        .collect();
    if near.is_empty() {
        return Err(domain("SNR window contains no spectrum bins"));
    }
    let density = near.iter().sum::<f64>() / near.len() as f64;
    let signal = alpha.norm_sqr() * dd / d.len() as f64 / rx.ref_impedance_ohm;
    let noise = density * psd.nfft as f64;
    if noise <= 0.0 {
        return Ok(SIC_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SIC_CAP_DB))
}
