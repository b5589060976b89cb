//! Link experiment: a second node sends a tone at 400 kHz that arrives
//! 20 dB above the receiver noise floor while the FD node transmits its own
//! 200 kHz tone. Digital SIC must remove the self-interference without
//! eating into the desired signal.
//!
//! ```text
//! cargo run --release --example link_experiment [remote_power_dbm]
//! ```

use fd_lab::experiment::{run_experiment, run_link_experiment, ExperimentConfig, RemoteSignal};

fn main() -> fd_lab::Result<()> {
    let mut cfg = ExperimentConfig::tone_link();
    if let Some(p) = std::env::args().nth(1) {
        let power_dbm = p.parse().map_err(|e| fd_lab::Error::Parse(format!("{p}: {e}")))?;
        cfg.remote = Some(RemoteSignal { offset_hz: 400e3, power_dbm });
    }
    let out = run_link_experiment(&cfg)?;
    print!("{}", out.report.to_text());

    let d = out.report.desired.as_ref().expect("link report carries desired-signal metrics");
    println!();
    println!("interference-free SNR: {:.2} dB", d.ideal_snr_db);
    let rf = &out.psd_post_dig;
    for f in [200e3, 400e3] {
        let b = rf.bin_of(f);
        println!("post-digital spectrum at {:>5.0} kHz: {:.2} dBm/bin", f / 1e3, rf.psd_dbm_per_bin[b]);
    }

    // Remote tone at 1 MHz, inside the QPSK self-interference band. Residual
    // SI now shares the desired bin, and the remote tone is extra noise for
    // the least-squares fit, so the SNR loss is far larger than above.
    let wide = run_experiment(&ExperimentConfig::qpsk_link())?;
    let dw = wide.report.desired.as_ref().expect("link report");
    println!();
    println!(
        "QPSK link, remote at 1 MHz: SNR {:.2} dB before digital SIC, {:.2} dB after (ideal {:.2})",
        dw.snr_before_dig_db, dw.snr_after_dig_db, dw.ideal_snr_db
    );
    Ok(())
}
