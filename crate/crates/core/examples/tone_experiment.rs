//! Single-tone node experiment: 200 kHz tone at 0 dBm, 5 MS/s, 900 MHz,
//! auto-tuned canceller, Volterra digital SIC.
//!
//! ```text
//! cargo run --release --example tone_experiment [preset]
//! ```
//! `preset` defaults to `tone`; `tone_5dbm` and `paper_code` are variants.

use std::time::Instant;

use fd_lab::experiment::{run_node_experiment, ExperimentConfig};

fn main() -> fd_lab::Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "tone".into());
    let cfg = ExperimentConfig::preset(&preset)?;
    let started = Instant::now();
    let out = run_node_experiment(&cfg)?;
    let elapsed = started.elapsed();

    print!("{}", out.report.to_text());
    println!();
    println!("canceller-only suppression across {:.1} MHz: {:.2} dB", cfg.rf_band_hz / 1e6, out.report.rf_band_sic_db);
    println!(
        "measured RX power (SI + noise): {:.2} dBm after RF SIC, {:.2} dBm after digital SIC (floor {:.1} dBm)",
        out.report.rx_power_post_rf_dbm, out.report.rx_power_post_dig_dbm, cfg.noise_floor_dbm
    );

    let peak = out.psd_post_rf.peak_bin();
    println!(
        "strongest post-RF bin: {:.1} kHz at {:.2} dBm",
        out.psd_post_rf.freqs_hz[peak] / 1e3,
        out.psd_post_rf.psd_dbm_per_bin[peak]
    );
    println!("run time: {elapsed:.2?}");
    Ok(())
}
