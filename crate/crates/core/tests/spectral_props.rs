//! Welch PSD: Parseval, tone localization, noise floor, and the committed
//! spectrum of the tone link scenario.

use num_complex::Complex64;
use proptest::prelude::*;

use fd_lab::experiment::{run_link_experiment, ExperimentConfig};
use fd_lab::signal::ComplexBasebandSignal;
use fd_lab::spectral::{parse_psd_csv, psd_to_csv, welch_psd, Window};
use fd_lab::waveforms::{add_awgn, gen_tone};

fn window() -> impl Strategy<Value = Window> {
    prop_oneof![Just(Window::Hann), Just(Window::Rect)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integrated_tone_psd_equals_time_domain_power(
        log_nfft in 6u32..12,
        extra in 0usize..5000,
        offset in -0.49f64..0.49,
        power in -100.0f64..20.0,
        w in window(),
        overlap in prop_oneof![Just(0.0), Just(0.5), Just(0.75)],
    ) {
        let nfft = 1usize << log_nfft;
        let x = gen_tone(1e6, offset * 1e6, power, nfft + extra).unwrap();
        let psd = welch_psd(&x, nfft, w, overlap).unwrap();
        prop_assert!((psd.total_power_dbm() - x.power_dbm().unwrap()).abs() < 0.1);
    }

    #[test]
    fn tone_lands_in_nearest_bin(log_nfft in 5u32..13, offset in -0.45f64..0.45, w in window()) {
        let nfft = 1usize << log_nfft;
        let fs = 5e6;
        let bin = offset * nfft as f64;
        // Bin midpoints are ambiguous by construction.
        prop_assume!((bin - bin.floor() - 0.5).abs() > 0.02);
        let x = gen_tone(fs, offset * fs, 0.0, 4 * nfft).unwrap();
        let psd = welch_psd(&x, nfft, w, 0.5).unwrap();
        prop_assert_eq!(psd.peak_bin(), psd.bin_of(offset * fs));
    }
}

#[test]
fn integrated_noise_psd_equals_time_domain_power() {
    for (seed, w) in [(1, Window::Hann), (2, Window::Rect), (3, Window::Hann)] {
        let zero = ComplexBasebandSignal::zeros(1 << 16, 5e6).unwrap();
        let x = add_awgn(&zero, -60.0, seed).unwrap();
        let psd = welch_psd(&x, 1024, w, 0.5).unwrap();
        let diff = psd.total_power_dbm() - x.power_dbm().unwrap();
        assert!(diff.abs() < 0.1, "seed {seed}: {diff} dB");
    }
}

#[test]
fn noise_floor_measured_within_tolerance() {
    let zero = ComplexBasebandSignal::zeros(100_000, 5e6).unwrap();
    let x = add_awgn(&zero, -85.0, 42).unwrap();
    let psd = welch_psd(&x, 1024, Window::Hann, 0.5).unwrap();
    assert!((psd.total_power_dbm() + 85.0).abs() < 0.3, "{}", psd.total_power_dbm());
    // Flat: no bin more than 10 dB above the mean level.
    let mean_bin = -85.0 - 10.0 * 1024f64.log10();
    assert!(psd.psd_dbm_per_bin.iter().all(|&p| p < mean_bin + 10.0));
}

#[test]
fn two_tones_resolve_to_two_peaks() {
    let a = gen_tone(5e6, 200e3, -40.0, 20_000).unwrap();
    let b = gen_tone(5e6, 400e3, -60.0, 20_000).unwrap();
    let sum: Vec<Complex64> = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
    let psd = welch_psd(&ComplexBasebandSignal::new(sum, 5e6).unwrap(), 1024, Window::Hann, 0.5).unwrap();
    assert_eq!(psd.peak_bin(), psd.bin_of(200e3));
    let p400 = psd.psd_dbm_per_bin[psd.bin_of(400e3)];
    let p300 = psd.psd_dbm_per_bin[psd.bin_of(300e3)];
    assert!(p400 > p300 + 40.0, "{p400} vs {p300}");
}

fn assert_matches_golden(name: &str, csv: &str) {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let golden = std::fs::read_to_string(&path).unwrap();
    let (gf, gp) = parse_psd_csv(&golden).unwrap();
    let (f, p) = parse_psd_csv(csv).unwrap();
    assert_eq!(gf, f);
    let worst = gp.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{name}: max deviation {worst} dB");
}

#[test]
fn tone_link_spectra_match_golden() {
    let out = run_link_experiment(&ExperimentConfig::tone_link()).unwrap();
    assert_matches_golden("tone_link_psd_post_rf.csv", &psd_to_csv(&out.psd_post_rf));
    assert_matches_golden("tone_link_psd_post_dig.csv", &psd_to_csv(&out.psd_post_dig));
}
