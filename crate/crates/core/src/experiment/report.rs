//! Per-stage power budget of a run and its text/JSON renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::canceller::{CancellerCode, SIC_CAP_DB};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredSignalReport {
    pub offset_hz: f64,
    pub power_dbm: f64,
    /// SNR with only receiver noise present.
    pub ideal_snr_db: f64,
    pub snr_before_dig_db: f64,
    pub snr_after_dig_db: f64,
    /// `ideal_snr_db − snr_after_dig_db`.
    pub snr_loss_db: f64,
}

/// Stage powers are self-interference powers referred to the RX input over
/// the evaluation window; receiver noise and the remote signal are excluded
/// and reported separately as measured RX powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub tx_power_dbm: f64,
    pub post_rf_power_dbm: f64,
    pub rf_sic_db: f64,
    pub post_dig_power_dbm: f64,
    pub dig_sic_db: f64,
    pub total_sic_db: f64,
    pub canceller_code_used: CancellerCode,
    /// Canceller-only suppression across `rf_band_hz`, excluding passive
    /// isolation.
    pub rf_band_sic_db: f64,
    pub rf_band_hz: f64,
    #[serde(with = "super::config::neg_inf_as_null")]
    pub noise_floor_dbm: f64,
    pub rx_power_post_rf_dbm: f64,
    pub rx_power_post_dig_dbm: f64,
    pub volterra_lag: i64,
    pub desired: Option<DesiredSignalReport>,
}

/// Stage budget from linear SI powers, each drop capped at [`SIC_CAP_DB`].
/// The identities `rf + dig = total` and `total = tx − post_dig` hold exactly.
pub(crate) fn stage_budget(tx_dbm: f64, post_rf_w: f64, post_dig_w: f64) -> (f64, f64, f64, f64) {
    let to_dbm = |w: f64| if w > 0.0 { 10.0 * w.log10() + 30.0 } else { f64::NEG_INFINITY };
    let rf = (tx_dbm - to_dbm(post_rf_w)).min(SIC_CAP_DB);
    let post_rf = tx_dbm - rf;
    let dig = (post_rf - to_dbm(post_dig_w)).min(SIC_CAP_DB);
    (post_rf, rf, post_rf - dig, dig)
}

/// Two-decimal rendering without a negative zero.
fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

impl ExperimentReport {
    /// The five stage lines followed by totals and, for links, desired SNR.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "TX Signal: {} dBm", fixed2(self.tx_power_dbm));
        let _ = writeln!(s, "RX Signal after RF SIC: {} dBm", fixed2(self.post_rf_power_dbm));
        let _ = writeln!(s, "Amount of RF SIC: {} dB", fixed2(self.rf_sic_db));
        let _ = writeln!(s, "RX Signal after Digital SIC: {} dBm", fixed2(self.post_dig_power_dbm));
        let _ = writeln!(s, "Amount of Digital SIC: {} dB", fixed2(self.dig_sic_db));
        let _ = writeln!(s, "Amount of Total SIC: {} dB", fixed2(self.total_sic_db));
        let c = self.canceller_code_used;
        let _ = writeln!(
            s,
            "Canceller: ATT={} PS={} CAP1={} CAP2={} CAP3={}",
            c.att, c.ps, c.caps[0], c.caps[1], c.caps[2]
        );
        if let Some(d) = &self.desired {
            let _ = writeln!(s, "Desired Signal SNR before Digital SIC: {} dB", fixed2(d.snr_before_dig_db));
            let _ = writeln!(s, "Desired Signal SNR after Digital SIC: {} dB", fixed2(d.snr_after_dig_db));
            let _ = writeln!(s, "Desired Signal SNR loss: {} dB", fixed2(d.snr_loss_db));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
