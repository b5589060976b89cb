//! Searching the canceller's ATT/PS code space for a channel.
//!
//! Compares the exhaustive 128 x 256 search with coordinate descent, shows
//! how RF SIC falls off around the optimum, and how many dB each quantizer
//! step is worth.
//!
//! ```text
//! cargo run --release --example canceller_search
//! ```

use fd_lab::canceller::{
    att_code_to_attenuation_db, canceller_gain, ps_code_to_phase_deg, residual_response, rf_sic_db, tune_canceller,
    CancellerCode, CancellerParams, SearchStrategy,
};
use fd_lab::channel::{linear_grid, ChannelProfile};

fn main() -> fd_lab::Result<()> {
    let profile = ChannelProfile::default();
    let params = CancellerParams::default();
    let band = 5e6;
    let grid = linear_grid(-band / 2.0, band / 2.0, 201);
    let h_si = profile.si_response(&grid, 900e6)?;
    let caps = profile.tuner.cap_codes;

    let exhaustive = tune_canceller(&h_si, &params, band, SearchStrategy::Exhaustive, caps, None)?;
    let descent = tune_canceller(&h_si, &params, band, SearchStrategy::CoordinateDescent, caps, None)?;
    let paper_start = CancellerCode { caps, ..CancellerCode::PAPER_PROFILE };
    let warm = tune_canceller(&h_si, &params, band, SearchStrategy::CoordinateDescent, caps, Some(paper_start))?;
    for (name, r) in [("exhaustive", exhaustive), ("descent from 0/0", descent), ("descent from 30/110", warm)] {
        println!("{name:<20} ATT={:<3} PS={:<3} SIC={:6.2} dB  sweeps={}", r.code.att, r.code.ps, r.sic_db, r.sweeps);
    }

    let best = exhaustive.code;
    println!();
    println!(
        "optimum: {:.2} dB attenuation, {:.3} deg phase",
        att_code_to_attenuation_db(best.att, &params)?,
        ps_code_to_phase_deg(best.ps, &params)
    );
    let sic = |code: CancellerCode| -> fd_lab::Result<f64> {
        let h_c = canceller_gain(&code, &params, &grid)?;
        rf_sic_db(&h_si, &residual_response(&h_si, &h_c)?, band)
    };
    println!("{:>8} {:>12} {:>12}", "offset", "ATT+offset", "PS+offset");
    for d in [-8i32, -4, -2, -1, 0, 1, 2, 4, 8] {
        let att = (best.att as i32 + d).clamp(0, 127) as u8;
        let ps = (best.ps as i32 + d).rem_euclid(256) as u8;
        println!("{d:>8} {:>12.2} {:>12.2}", sic(CancellerCode { att, ..best })?, sic(CancellerCode { ps, ..best })?);
    }
    Ok(())
}
