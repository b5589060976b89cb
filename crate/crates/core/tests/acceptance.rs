//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
//!
//! ```text
//! cargo test --release --test acceptance
//! ```

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fd_lab::canceller::{
    att_code_to_attenuation_db, ps_code_to_phase_deg, tune_canceller, CancellerCode, CancellerParams, SearchStrategy,
};
use fd_lab::channel::{linear_grid, FrequencyResponse};
use fd_lab::digital_sic::{build_volterra_features, fit_volterra, VolterraBasis};
use fd_lab::experiment::{prepare_channel, run_experiment, ExperimentConfig, ExperimentReport};
use fd_lab::signal::ComplexBasebandSignal;
use fd_lab::spectral::{welch_psd, Window};
use fd_lab::spi::{decode_word, encode_config, encode_word, transfer_time_us, SpiTarget, DEFAULT_SPI_CLOCK_HZ};
use fd_lab::waveforms::{add_awgn, gen_tone};

use common::{brute_force_canceller, gaussian, normal_equations, oracle_features, rel_err};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed_run(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Duration), String> {
    let t = Instant::now();
    let out = run_experiment(cfg).map_err(|e| e.to_string())?;
    Ok((out.report, t.elapsed()))
}

fn in_stage_range(db: f64) -> bool {
    (40.0..=50.0).contains(&db)
}

fn tone_experiment() -> Outcome {
    let (r, t) = timed_run(&ExperimentConfig::tone())?;
    check(
        r.total_sic_db >= 87.0
            && (r.post_dig_power_dbm + 85.0).abs() <= 3.0
            && in_stage_range(r.rf_sic_db)
            && in_stage_range(r.dig_sic_db)
            && t < Duration::from_secs(10),
        format!(
            "total {:.2} dB (RF {:.2}, digital {:.2}), post-digital {:.2} dBm, {:.2} s",
            r.total_sic_db,
            r.rf_sic_db,
            r.dig_sic_db,
            r.post_dig_power_dbm,
            t.as_secs_f64()
        ),
    )
}

/// Mean TX-to-RX isolation after the canceller over the tuning band, from
/// the analytic response rather than a particular waveform.
fn band_isolation_db(cfg: &ExperimentConfig) -> Result<f64, String> {
    let p = prepare_channel(cfg, cfg.canceller).map_err(|e| e.to_string())?;
    let inband: Vec<f64> = p
        .h_si
        .freqs()
        .iter()
        .zip(p.h_si.gains())
        .filter(|(f, _)| f.abs() <= cfg.rf_band_hz / 2.0)
        .map(|(_, h)| (h - p.canceller_gain).norm_sqr())
        .collect();
    Ok(-10.0 * (inband.iter().sum::<f64>() / inband.len() as f64).log10())
}

fn qpsk_experiment() -> Outcome {
    let cfg = ExperimentConfig::qpsk();
    let (r, t) = timed_run(&cfg)?;
    let band = band_isolation_db(&cfg)?;
    check(
        r.total_sic_db >= 82.0
            && r.rf_sic_db >= 40.0
            && band >= 40.0
            && cfg.rf_band_hz >= 5e6
            && t < Duration::from_secs(30),
        format!(
            "total {:.2} dB, RF {:.2} dB on the signal and {:.2} dB averaged across {:.1} MHz, {:.2} s",
            r.total_sic_db,
            r.rf_sic_db,
            band,
            cfg.rf_band_hz / 1e6,
            t.as_secs_f64()
        ),
    )
}

fn link_experiment() -> Outcome {
    let (r, _) = timed_run(&ExperimentConfig::tone_link())?;
    let d = r.desired.ok_or("no desired-signal report")?;
    check(
        d.offset_hz == 400e3 && d.snr_loss_db <= 1.0,
        format!(
            "desired at {:.0} kHz: SNR {:.2} dB after digital SIC, loss {:.2} dB",
            d.offset_hz / 1e3,
            d.snr_after_dig_db,
            d.snr_loss_db
        ),
    )
}

fn canceller_search() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = linear_grid(-2.5e6, 2.5e6, 21);
    let params = CancellerParams::default();
    let mut worst = 0.0f64;
    for i in 0..10 {
        let gain = Complex64::from_polar(
            10f64.powf(rng.random_range(-48.0..-16.0) / 20.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let h = FrequencyResponse::flat(&grid, gain).map_err(|e| e.to_string())?;
        let got =
            tune_canceller(&h, &params, 5e6, SearchStrategy::Exhaustive, [0; 3], None).map_err(|e| e.to_string())?;
        let (att, ps, sic) = brute_force_canceller(&h, 5e6);
        if (got.code.att, got.code.ps) != (att, ps) {
            let diff = (got.sic_db - sic).abs();
            if diff >= 1e-9 {
                return Err(format!("channel {i}: {:?} vs {att}/{ps}, {diff:e} dB apart", got.code));
            }
            worst = worst.max(diff);
        }
    }
    Ok(format!("10 random flat channels match the 32768-pair scan (worst SIC gap {worst:e} dB)"))
}

fn volterra_oracle() -> Outcome {
    let sig = |v: Vec<Complex64>| ComplexBasebandSignal::new(v, 1e6).map_err(|e| e.to_string());
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let basis = VolterraBasis {
            orders: if i % 2 == 0 { vec![1, 3] } else { vec![1, 3, 5] },
            memory: 1 + (i as usize % 5),
            pre_cursor: i as usize % 2,
        };
        let x = gaussian(500 + 25 * i as usize, 1000 + i);
        let f = build_volterra_features(&sig(x.clone())?, &basis).map_err(|e| e.to_string())?;
        let y = gaussian(f.rows(), 2000 + i);
        let ridge = if i % 4 == 0 { 0.0 } else { 1e-2 };
        let model = fit_volterra(&f, &y, ridge).map_err(|e| e.to_string())?;
        let (of, _) = oracle_features(&x, &basis);
        worst = worst.max(rel_err(&model.coeffs, normal_equations(&of, &y, ridge).as_slice()));
    }

    let basis = VolterraBasis::default();
    let x = gaussian(4000, 77);
    let kernels = gaussian(basis.n_coeffs(), 78);
    let (of, _) = oracle_features(&x, &basis);
    let y: Vec<Complex64> = (&of * DVector::from_column_slice(&kernels)).iter().copied().collect();
    let f = build_volterra_features(&sig(x)?, &basis).map_err(|e| e.to_string())?;
    let recovered = rel_err(&fit_volterra(&f, &y, 0.0).map_err(|e| e.to_string())?.coeffs, &kernels);
    check(
        worst < 1e-6 && recovered < 1e-9,
        format!("worst coefficient error {worst:.1e} over 20 instances, noiseless recovery {recovered:.1e}"),
    )
}

fn quantization() -> Outcome {
    let params = CancellerParams::default();
    let att = att_code_to_attenuation_db(127, &params).map_err(|e| e.to_string())?;
    let step = ps_code_to_phase_deg(1, &params) - ps_code_to_phase_deg(0, &params);
    let mut words = 0;
    for target in SpiTarget::ALL {
        for code in 0..=target.max_code() {
            let w = encode_word(target, code).map_err(|e| e.to_string())?;
            if decode_word(&w).map_err(|e| e.to_string())? != (target, code) {
                return Err(format!("{target} code {code} does not round-trip"));
            }
            words += 1;
        }
    }
    let cfg = encode_config(&CancellerCode::PAPER_PROFILE).map_err(|e| e.to_string())?;
    let us = transfer_time_us(&cfg, DEFAULT_SPI_CLOCK_HZ).map_err(|e| e.to_string())?;
    check(
        att == 31.75 && step == 360.0 / 256.0 && us == 7.0,
        format!("ATT 127 = {att} dB, PS step = {step} deg, {words} SPI codes round-trip, full config {us} us"),
    )
}

fn parseval() -> Outcome {
    let mut worst = 0.0f64;
    for (i, &(offset, nfft)) in [(200e3, 1024), (123.4e3, 256), (-1.7e6, 2048)].iter().enumerate() {
        for w in [Window::Hann, Window::Rect] {
            let tone = gen_tone(5e6, offset, -20.0 + i as f64, 20_000).map_err(|e| e.to_string())?;
            let noise =
                add_awgn(&ComplexBasebandSignal::zeros(1 << 16, 5e6).map_err(|e| e.to_string())?, -60.0, i as u64)
                    .map_err(|e| e.to_string())?;
            for x in [tone, noise] {
                let psd = welch_psd(&x, nfft, w, 0.5).map_err(|e| e.to_string())?;
                worst = worst.max((psd.total_power_dbm() - x.power_dbm().map_err(|e| e.to_string())?).abs());
            }
        }
    }
    let floor = add_awgn(&ComplexBasebandSignal::zeros(100_000, 5e6).map_err(|e| e.to_string())?, -85.0, 99)
        .map_err(|e| e.to_string())?;
    let measured = welch_psd(&floor, 1024, Window::Hann, 0.5).map_err(|e| e.to_string())?.total_power_dbm();
    check(
        worst < 0.1 && (measured + 85.0).abs() < 0.3,
        format!("worst integrated-PSD error {worst:.4} dB, noise floor measured at {measured:.3} dBm"),
    )
}

fn determinism() -> Outcome {
    let mut identical = true;
    for cfg in [ExperimentConfig::tone(), ExperimentConfig::qpsk(), ExperimentConfig::tone_link()] {
        let a = run_experiment(&cfg).and_then(|o| o.report.to_json()).map_err(|e| e.to_string())?;
        let b = run_experiment(&cfg).and_then(|o| o.report.to_json()).map_err(|e| e.to_string())?;
        identical &= a == b;
    }
    check(identical, "tone, QPSK and link reports byte-identical across two runs".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("tone experiment", tone_experiment),
        ("QPSK experiment", qpsk_experiment),
        ("link experiment", link_experiment),
        ("canceller search", canceller_search),
        ("Volterra oracle", volterra_oracle),
        ("quantization suite", quantization),
        ("Parseval/PSD suite", parseval),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
