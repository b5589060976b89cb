//! The self-interference channel seen from the TX port: circulator leakage,
//! antenna reflection through the tuner, and the environment echo, plus the
//! residual left by the best flat canceller setting.
//!
//! ```text
//! cargo run --release --example channel_response
//! ```

use fd_lab::canceller::{canceller_gain, residual_response, tune_canceller, CancellerParams, SearchStrategy};
use fd_lab::channel::{linear_grid, ChannelProfile};

fn main() -> fd_lab::Result<()> {
    let profile = ChannelProfile::default();
    let params = CancellerParams::default();
    let grid = linear_grid(-2.5e6, 2.5e6, 201);
    let h = profile.si_response(&grid, 900e6)?;
    let tuned = tune_canceller(&h, &params, 5e6, SearchStrategy::Exhaustive, profile.tuner.cap_codes, None)?;
    let residual = residual_response(&h, &canceller_gain(&tuned.code, &params, &grid)?)?;

    let mut direct = profile.clone();
    direct.echoes.clear();
    let h_direct = direct.si_response(&grid, 900e6)?;

    println!("{:>10} {:>12} {:>12} {:>14}", "offset MHz", "|H_si| dB", "no echo dB", "residual dB");
    for i in (0..grid.len()).step_by(20) {
        println!(
            "{:>10.2} {:>12.2} {:>12.2} {:>14.2}",
            grid[i] / 1e6,
            h.magnitude_db()[i],
            h_direct.magnitude_db()[i],
            residual.magnitude_db()[i]
        );
    }
    println!();
    println!("canceller ATT={} PS={}: {:.2} dB across 5 MHz", tuned.code.att, tuned.code.ps, tuned.sic_db);
    Ok(())
}
