//! Wideband node experiment: 2.5 Msym/s QPSK (RRC, rolloff 0.25) at 10 MS/s
//! and 0 dBm. The flat canceller has to hold its suppression across the
//! whole occupied band, so RF SIC is lower than for the tone.
//!
//! ```text
//! cargo run --release --example qpsk_experiment
//! ```

use fd_lab::experiment::{run_node_experiment, ExperimentConfig};
use fd_lab::spectral::PsdEstimate;

fn band_power_dbm(psd: &PsdEstimate, lo: f64, hi: f64) -> f64 {
    let w: f64 =
        psd.freqs_hz.iter().zip(psd.bin_powers_w()).filter(|(f, _)| (lo..=hi).contains(*f)).map(|(_, p)| p).sum();
    10.0 * w.log10() + 30.0
}

fn main() -> fd_lab::Result<()> {
    let cfg = ExperimentConfig::qpsk();
    let out = run_node_experiment(&cfg)?;
    print!("{}", out.report.to_text());
    println!();

    // The received spectrum after each stage, in 1 MHz slices.
    println!("{:>12} {:>14} {:>14}", "slice (MHz)", "post-RF (dBm)", "post-dig (dBm)");
    for k in -5..5 {
        let lo = k as f64 * 1e6;
        println!(
            "{:>5.1}..{:<5.1} {:>14.2} {:>14.2}",
            lo / 1e6,
            lo / 1e6 + 1.0,
            band_power_dbm(&out.psd_post_rf, lo, lo + 1e6),
            band_power_dbm(&out.psd_post_dig, lo, lo + 1e6)
        );
    }
    println!("Volterra alignment lag: {} samples", out.report.volterra_lag);
    Ok(())
}
