//! Spectra and raw samples for external plotting: runs the tone link
//! scenario, writes post-RF and post-digital PSD CSVs plus the received
//! samples as cf32 I/Q with a JSON sidecar.
//!
//! ```text
//! cargo run --release --example spectrum_export [out_dir]
//! ```

use std::path::PathBuf;

use fd_lab::experiment::{run_link_experiment, ExperimentConfig};
use fd_lab::signal::{read_iq, sidecar_path, write_iq};
use fd_lab::spectral::export_psd;

fn main() -> fd_lab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fd-lab-out".into()));
    std::fs::create_dir_all(&dir)?;
    let cfg = ExperimentConfig::tone_link();
    let out = run_link_experiment(&cfg)?;

    let rf_csv = dir.join("psd_post_rf.csv");
    let dig_csv = dir.join("psd_post_dig.csv");
    export_psd(&out.psd_post_rf, &rf_csv)?;
    export_psd(&out.psd_post_dig, &dig_csv)?;

    let iq = dir.join("rx_post_rf.cf32");
    write_iq(&out.trace.rx_post_rf, &iq, Some(cfg.seed))?;
    let (back, sidecar) = read_iq(&iq)?;

    println!("wrote {} and {}", rf_csv.display(), dig_csv.display());
    println!(
        "wrote {} ({} samples at {} S/s) and {}",
        iq.display(),
        back.len(),
        sidecar.sample_rate_hz,
        sidecar_path(&iq).display()
    );
    println!(
        "{} bins, {} segments, {} window, {:.0}% overlap",
        out.psd_post_dig.nfft,
        out.psd_post_dig.n_segments,
        out.psd_post_dig.window_name,
        100.0 * out.psd_post_dig.overlap_fraction
    );
    for (name, psd) in [("post-RF", &out.psd_post_rf), ("post-digital", &out.psd_post_dig)] {
        let at = |f: f64| psd.psd_dbm_per_bin[psd.bin_of(f)];
        println!("{name:<13} 200 kHz: {:7.2} dBm/bin   400 kHz: {:7.2} dBm/bin", at(200e3), at(400e3));
    }
    Ok(())
}
