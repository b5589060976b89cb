//! Antenna tuning with the programmable π-network.
//!
//! Searches all 32^3 capacitor codes for each tuner topology, reports the
//! best reflection coefficient and the TX/RX isolation it yields, and
//! evaluates the codes programmed in the published experiment.
//!
//! ```text
//! cargo run --release --example tuner_matching
//! ```

use fd_lab::channel::{
    linear_grid, match_tuner, reflection_coefficient, tuner_input_impedance, AntennaImpedance, ChannelProfile,
    TunerConfig, TunerTopology, REFERENCE_IMPEDANCE_OHM,
};

fn isolation_db(profile: &ChannelProfile) -> fd_lab::Result<f64> {
    let h = profile.si_response(&linear_grid(-2.5e6, 2.5e6, 51), 900e6)?;
    let mean = h.gains().iter().map(|g| g.norm_sqr()).sum::<f64>() / h.len() as f64;
    Ok(-10.0 * mean.log10())
}

fn main() -> fd_lab::Result<()> {
    let carrier = 900e6;
    let ant = AntennaImpedance::default();
    let bare = reflection_coefficient(ant.z, REFERENCE_IMPEDANCE_OHM)?;
    println!("antenna {:.1} ohm, bare |Γ| = {:.4}", ant.z, bare.norm());
    println!();

    for topology in [
        TunerTopology::TankSeriesBranch,
        TunerTopology::SeriesLcBranch,
        TunerTopology::InductorBranch,
        TunerTopology::ShuntC1,
    ] {
        let tuner = TunerConfig { topology, ..TunerConfig::default() };
        let (codes, gamma) = match_tuner(&tuner, &ant, &[0.0], carrier)?;
        let mut profile = ChannelProfile { tuner: tuner.with_codes(codes), ..ChannelProfile::default() };
        profile.echoes.clear();
        println!("{topology:<18?} best codes {codes:?}  |Γ| = {gamma:.4}  isolation {:.2} dB", isolation_db(&profile)?);
    }

    let paper = TunerConfig::default().with_codes([16, 6, 6]);
    let z = tuner_input_impedance(&paper, &ant, carrier)?;
    let g = reflection_coefficient(z, REFERENCE_IMPEDANCE_OHM)?;
    println!();
    println!("published codes 16/6/6: Zin = {z:.2} ohm, |Γ| = {:.4}", g.norm());
    Ok(())
}
