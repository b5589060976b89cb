//! End-to-end runs: determinism, budget identities, held-out evaluation and
//! the desired-signal bookkeeping of links.

use num_complex::Complex64;
use proptest::prelude::*;

use fd_lab::canceller::CancellerCode;
use fd_lab::digital_sic::digital_sic_db;
use fd_lab::experiment::{
    run_experiment, run_link_experiment, run_node_experiment, CancellerSetting, Durations, ExperimentConfig,
    RemoteSignal, Wave,
};
use fd_lab::signal::{mean_square, watts_to_dbm};

fn short(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.durations = Durations { settle_samples: 512, train_samples: 4000, eval_samples: 4000, block_samples: 1500 };
    cfg
}

#[test]
fn identical_config_gives_identical_json() {
    for cfg in [ExperimentConfig::tone(), short(ExperimentConfig::qpsk_link())] {
        let a = run_experiment(&cfg).unwrap().report.to_json().unwrap();
        let b = run_experiment(&cfg).unwrap().report.to_json().unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seed_changes_the_noise_realisation() {
    let cfg = short(ExperimentConfig::tone());
    let mut other = cfg.clone();
    other.seed += 1;
    let a = run_experiment(&cfg).unwrap().report;
    let b = run_experiment(&other).unwrap().report;
    assert_ne!(a.rx_power_post_dig_dbm, b.rx_power_post_dig_dbm);
}

#[test]
fn block_size_does_not_change_the_result() {
    let cfg = short(ExperimentConfig::tone());
    let mut other = cfg.clone();
    other.durations.block_samples = 777;
    let a = run_experiment(&cfg).unwrap().report.to_json().unwrap();
    let b = run_experiment(&other).unwrap().report.to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn reported_digital_sic_is_measured_on_held_out_samples() {
    let cfg = ExperimentConfig::tone();
    let out = run_experiment(&cfg).unwrap();
    let e = out.eval_window(&cfg);
    let d = cfg.durations;
    assert_eq!(e.start, d.settle_samples + d.train_samples);
    assert_eq!(e.len(), d.eval_samples);
    let t = &out.trace;
    let dig = digital_sic_db(&t.si_post_rf[e.clone()], &t.si_post_dig[e.clone()]).unwrap();
    assert!((dig - out.report.dig_sic_db).abs() < 1e-9);
    let tx = watts_to_dbm(mean_square(&t.tx_out[e.clone()]));
    assert!((tx - out.report.tx_power_dbm).abs() < 1e-9);
}

#[test]
fn silent_remote_matches_node_run() {
    let node = run_node_experiment(&short(ExperimentConfig::tone())).unwrap().report;
    let mut cfg = short(ExperimentConfig::tone());
    cfg.remote = Some(RemoteSignal { offset_hz: 400e3, power_dbm: f64::NEG_INFINITY });
    let mut link = run_link_experiment(&cfg).unwrap().report;
    assert!(link.desired.is_none());
    link.scenario = node.scenario.clone();
    assert_eq!(link.to_json().unwrap(), node.to_json().unwrap());
}

#[test]
fn remote_twenty_db_above_floor_keeps_its_snr() {
    let out = run_link_experiment(&ExperimentConfig::tone_link()).unwrap();
    let d = out.report.desired.unwrap();
    assert_eq!(d.ideal_snr_db, 20.0);
    assert!((d.snr_after_dig_db - 20.0).abs() <= 1.0, "{d:?}");
    assert!(d.snr_loss_db <= 1.0);
    // Digital SIC must not subtract any of the desired tone.
    assert!(d.snr_after_dig_db >= d.snr_before_dig_db - 1.0);
}

#[test]
fn link_spectrum_shows_residual_si_at_floor_and_desired_intact() {
    let cfg = ExperimentConfig::tone_link();
    let out = run_link_experiment(&cfg).unwrap();
    let per_bin_floor = cfg.noise_floor_dbm - 10.0 * (cfg.psd.nfft as f64).log10();
    let rf = &out.psd_post_rf;
    let dig = &out.psd_post_dig;
    assert_eq!(rf.peak_bin(), rf.bin_of(200e3));
    assert_eq!(dig.peak_bin(), dig.bin_of(400e3));
    assert!(dig.psd_dbm_per_bin[dig.bin_of(200e3)] < per_bin_floor + 3.0);
    let remote = cfg.remote.unwrap().power_dbm;
    assert!((dig.psd_dbm_per_bin[dig.bin_of(400e3)] - remote).abs() < 2.0);
}

#[test]
fn node_and_link_entry_points_check_the_remote() {
    assert!(run_node_experiment(&ExperimentConfig::tone_link()).is_err());
    assert!(run_link_experiment(&ExperimentConfig::tone()).is_err());
}

#[test]
fn ideal_flat_channel_never_gains_from_digital_sic_below_zero() {
    let mut cfg = short(ExperimentConfig::tone());
    cfg.channel.echoes.clear();
    cfg.tx_impairments = fd_lab::experiment::TxImpairments::ideal();
    let r = run_experiment(&cfg).unwrap().report;
    assert!(r.dig_sic_db >= 0.0, "{r:?}");
}

#[test]
fn detuned_canceller_lowers_rf_sic() {
    let auto = run_experiment(&short(ExperimentConfig::tone())).unwrap().report;
    let mut cfg = short(ExperimentConfig::tone());
    cfg.canceller = CancellerSetting::Code(CancellerCode { att: 0, ..auto.canceller_code_used });
    let detuned = run_experiment(&cfg).unwrap().report;
    assert!(detuned.rf_sic_db < auto.rf_sic_db - 5.0);
}

#[test]
fn psk_and_tone_waves_both_run() {
    let mut cfg = short(ExperimentConfig::qpsk());
    cfg.wave = Wave::Psk { order: 2, symbol_rate_hz: 2.5e6, rolloff: 0.35, span_symbols: 6 };
    let r = run_experiment(&cfg).unwrap().report;
    assert!(r.total_sic_db > 60.0, "{r:?}");
}

fn arb_case() -> impl Strategy<Value = (f64, f64, u64, Option<f64>)> {
    (-10.0f64..5.0, -1.5e6f64..1.5e6, any::<u64>(), prop::option::of(-80.0f64..-50.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn budget_identities_hold((tx_power, offset, seed, remote) in arb_case()) {
        let mut cfg = short(ExperimentConfig::tone());
        cfg.tx_power_dbm = tx_power;
        cfg.wave = Wave::Tone { offset_hz: offset };
        cfg.seed = seed;
        cfg.remote = remote.map(|p| RemoteSignal { offset_hz: -offset / 2.0 + 50e3, power_dbm: p });
        let r = run_experiment(&cfg).unwrap().report;
        prop_assert!((r.rf_sic_db + r.dig_sic_db - r.total_sic_db).abs() < 0.1);
        prop_assert!((r.tx_power_dbm - r.post_dig_power_dbm - r.total_sic_db).abs() < 0.1);
        prop_assert!(r.tx_power_dbm >= r.post_rf_power_dbm);
        prop_assert!(r.post_rf_power_dbm >= r.post_dig_power_dbm);
        // Measured power cannot beat the receiver noise.
        prop_assert!(r.rx_power_post_dig_dbm >= cfg.noise_floor_dbm - 1.0, "{r:?}");
        prop_assert!((r.tx_power_dbm - tx_power).abs() < 1e-6);
    }
}

#[test]
fn remote_adds_only_its_own_component() {
    let cfg = short(ExperimentConfig::tone_link());
    let out = run_link_experiment(&cfg).unwrap();
    let e = out.eval_window(&cfg);
    let d: &[Complex64] = &out.trace.desired[e];
    let p = watts_to_dbm(mean_square(d));
    assert!((p - cfg.remote.unwrap().power_dbm).abs() < 1e-6, "{p}");
}
