//! Digital SIC on its own: a QPSK stream goes through a nonlinear PA and a
//! short multipath channel; the memory-polynomial model is fitted on one
//! window and evaluated on the next. The fitted model is written as JSON.
//!
//! ```text
//! cargo run --release --example volterra_fit [model.json]
//! ```

use num_complex::Complex64;

use fd_lab::digital_sic::{apply_digital_sic, digital_sic_db, train_digital_sic, DigitalSicConfig, VolterraBasis};
use fd_lab::signal::ComplexBasebandSignal;
use fd_lab::waveforms::{add_awgn, apply_pa, gen_psk, PskParams, TxChainParams};

fn main() -> fd_lab::Result<()> {
    let fs = 10e6;
    let x = gen_psk(&PskParams {
        order: 4,
        symbol_rate_hz: 2.5e6,
        sample_rate_hz: fs,
        rrc_rolloff: 0.25,
        rrc_span_symbols: 8,
        power_dbm: -10.0,
        n_symbols: 5_500,
        seed: 11,
    })?;
    let pa = TxChainParams { iq_image_dbc: None, ..TxChainParams::default() };
    let y = apply_pa(&x, &pa)?;

    // Three-path channel, delayed by two samples.
    let taps = [
        (2, Complex64::from_polar(1e-2, 0.3)),
        (3, Complex64::from_polar(3e-3, -1.2)),
        (5, Complex64::from_polar(1.2e-3, 2.0)),
    ];
    let mut si = vec![Complex64::new(0.0, 0.0); y.len()];
    for (n, s) in si.iter_mut().enumerate() {
        for &(d, h) in &taps {
            if n >= d {
                *s += h * y.samples[n - d];
            }
        }
    }
    let rx = add_awgn(&ComplexBasebandSignal::new(si, fs)?, -85.0, 5)?;
    println!("received power: {:.2} dBm (noise floor -85 dBm)", rx.power_dbm()?);

    for basis in [
        VolterraBasis { orders: vec![1], memory: 8, pre_cursor: 2 },
        VolterraBasis { orders: vec![1, 3], memory: 8, pre_cursor: 2 },
        VolterraBasis::default(),
    ] {
        let cfg = DigitalSicConfig { basis: basis.clone(), ..DigitalSicConfig::default() };
        let model = train_digital_sic(&x, &rx, &cfg)?;
        let out = apply_digital_sic(&model, &x, &rx)?;
        let eval = cfg.train_len..cfg.train_len + cfg.eval_len;
        let sic = digital_sic_db(&rx.samples[eval.clone()], &out.residual.samples[eval.clone()])?;
        let residual = out.residual.slice(eval.start, eval.end)?.power_dbm()?;
        println!(
            "orders {:?}, memory {:>2}: lag {}, held-out SIC {:5.2} dB, residual {:.2} dBm",
            basis.orders, basis.memory, model.lag, sic, residual
        );
        if basis == VolterraBasis::default() {
            if let Some(path) = std::env::args().nth(1) {
                std::fs::write(&path, model.to_json()?)?;
                println!("model written to {path}");
            }
        }
    }
    Ok(())
}
