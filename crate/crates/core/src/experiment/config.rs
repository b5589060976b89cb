//! Experiment configuration, named presets and JSON loading.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canceller::{CancellerCode, CancellerParams, SearchStrategy};
use crate::channel::ChannelProfile;
use crate::digital_sic::VolterraBasis;
use crate::error::{Error, Result};
use crate::waveforms::TxChainParams;

/// Transmitted waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Wave {
    Tone {
        offset_hz: f64,
    },
    Psk {
        order: u32,
        symbol_rate_hz: f64,
        #[serde(default = "default_rolloff")]
        rolloff: f64,
        #[serde(default = "default_span")]
        span_symbols: usize,
    },
}

fn default_rolloff() -> f64 {
    0.25
}

fn default_span() -> usize {
    8
}

/// Canceller setting: a fixed code or a search at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CancellerSetting {
    /// Exhaustive ATT/PS search with the tuner held at the channel profile's
    /// capacitor codes.
    Auto,
    Code(CancellerCode),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CancellerSettingRepr {
    Name(String),
    Code(CancellerCode),
}

impl Serialize for CancellerSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CancellerSetting::Auto => CancellerSettingRepr::Name("auto".into()).serialize(s),
            CancellerSetting::Code(c) => CancellerSettingRepr::Code(*c).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for CancellerSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match CancellerSettingRepr::deserialize(d)? {
            CancellerSettingRepr::Code(c) => Ok(CancellerSetting::Code(c)),
            CancellerSettingRepr::Name(n) => match n.as_str() {
                "auto" => Ok(CancellerSetting::Auto),
                "paper" => Ok(CancellerSetting::Code(CancellerCode::PAPER_PROFILE)),
                other => Err(serde::de::Error::custom(format!(
                    "canceller must be \"auto\", \"paper\" or a code object, got \"{other}\""
                ))),
            },
        }
    }
}

/// Transmit impairments; the gain comes from [`ExperimentConfig::tx_gain_db`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxImpairments {
    pub pa_a3: Complex64,
    pub pa_a5: Complex64,
    pub unit_drive_dbm: f64,
    #[serde(default)]
    pub iq_image_dbc: Option<f64>,
    #[serde(default)]
    pub iq_image_phase_deg: f64,
}

impl Default for TxImpairments {
    fn default() -> Self {
        let d = TxChainParams::default();
        Self {
            pa_a3: d.pa_a3,
            pa_a5: d.pa_a5,
            unit_drive_dbm: d.unit_drive_dbm,
            iq_image_dbc: d.iq_image_dbc,
            iq_image_phase_deg: d.iq_image_phase_deg,
        }
    }
}

impl TxImpairments {
    pub fn ideal() -> Self {
        let d = TxChainParams::ideal(0.0);
        Self {
            pa_a3: d.pa_a3,
            pa_a5: d.pa_a5,
            unit_drive_dbm: d.unit_drive_dbm,
            iq_image_dbc: None,
            iq_image_phase_deg: 0.0,
        }
    }

    pub fn chain(&self, tx_gain_db: f64) -> TxChainParams {
        TxChainParams {
            pa_a3: self.pa_a3,
            pa_a5: self.pa_a5,
            tx_gain_db,
            unit_drive_dbm: self.unit_drive_dbm,
            iq_image_dbc: self.iq_image_dbc,
            iq_image_phase_deg: self.iq_image_phase_deg,
        }
    }
}

/// Signal from a second node, added at the RX combiner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemoteSignal {
    pub offset_hz: f64,
    /// Received power at the FD node; `null` in JSON or `-inf` disables it.
    #[serde(with = "neg_inf_as_null")]
    pub power_dbm: f64,
}

pub(crate) mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Sample budget of a run, in receive samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Durations {
    /// Discarded while the channel memory fills.
    pub settle_samples: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    /// Samples per pipeline block.
    pub block_samples: usize,
}

impl Default for Durations {
    fn default() -> Self {
        Self { settle_samples: 1024, train_samples: 10_000, eval_samples: 10_000, block_samples: 4096 }
    }
}

impl Durations {
    pub fn total(&self) -> usize {
        self.settle_samples + self.train_samples + self.eval_samples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalSicSettings {
    pub basis: VolterraBasis,
    pub ridge_factor: f64,
    pub max_lag: usize,
}

impl Default for DigitalSicSettings {
    fn default() -> Self {
        Self { basis: VolterraBasis::default(), ridge_factor: 1e-6, max_lag: 32 }
    }
}

/// Taps of the time-domain realisation of the SI channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirSettings {
    pub pre_taps: usize,
    pub post_taps: usize,
    pub grid_points: usize,
}

impl Default for FirSettings {
    fn default() -> Self {
        Self { pre_taps: 4, post_taps: 12, grid_points: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdSettings {
    pub nfft: usize,
    pub overlap: f64,
    /// Half-width of the window around the desired offset used for SNR.
    pub snr_halfwidth_hz: f64,
}

impl Default for PsdSettings {
    fn default() -> Self {
        Self { nfft: 1024, overlap: 0.5, snr_halfwidth_hz: 100e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rate_hz: f64,
    pub carrier_hz: f64,
    pub tx_gain_db: f64,
    /// Accepted for command-line parity; powers are referred to the RX input.
    pub rx_gain_db: f64,
    pub tx_power_dbm: f64,
    pub wave: Wave,
    pub canceller: CancellerSetting,
    #[serde(default)]
    pub search: SearchStrategy,
    /// Band over which the canceller is tuned and its SIC is quoted.
    pub rf_band_hz: f64,
    #[serde(default)]
    pub channel: ChannelProfile,
    #[serde(default)]
    pub canceller_params: CancellerParams,
    #[serde(default)]
    pub tx_impairments: TxImpairments,
    /// Total receiver noise power over the sample rate; `null` disables it.
    #[serde(with = "neg_inf_as_null")]
    pub noise_floor_dbm: f64,
    #[serde(default)]
    pub remote: Option<RemoteSignal>,
    pub seed: u64,
    #[serde(default)]
    pub durations: Durations,
    #[serde(default)]
    pub digital_sic: DigitalSicSettings,
    #[serde(default)]
    pub fir: FirSettings,
    #[serde(default)]
    pub psd: PsdSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::tone()
    }
}

pub const PRESET_NAMES: [&str; 6] = ["tone", "tone_5dbm", "tone_link", "qpsk", "qpsk_link", "paper_code"];

impl ExperimentConfig {
    /// 200 kHz tone at 0 dBm, 5 MS/s, 900 MHz, auto-tuned canceller.
    pub fn tone() -> Self {
        Self {
            rate_hz: 5e6,
            carrier_hz: 900e6,
            tx_gain_db: 10.0,
            rx_gain_db: 10.0,
            tx_power_dbm: 0.0,
            wave: Wave::Tone { offset_hz: 200e3 },
            canceller: CancellerSetting::Auto,
            search: SearchStrategy::Exhaustive,
            rf_band_hz: 5e6,
            channel: ChannelProfile::default(),
            canceller_params: CancellerParams::default(),
            tx_impairments: TxImpairments::default(),
            noise_floor_dbm: -85.0,
            remote: None,
            seed: 1,
            durations: Durations::default(),
            digital_sic: DigitalSicSettings::default(),
            fir: FirSettings::default(),
            psd: PsdSettings::default(),
        }
    }

    /// Tone experiment at the 5 dBm level quoted in the prose.
    pub fn tone_5dbm() -> Self {
        Self { tx_power_dbm: 5.0, ..Self::tone() }
    }

    /// Tone experiment plus a remote tone at 400 kHz, 20 dB above the floor.
    pub fn tone_link() -> Self {
        let base = Self::tone();
        Self { remote: Some(RemoteSignal { offset_hz: 400e3, power_dbm: base.noise_floor_dbm + 20.0 }), ..base }
    }

    /// 2.5 MHz QPSK at 10 MS/s, 0 dBm.
    pub fn qpsk() -> Self {
        Self {
            rate_hz: 10e6,
            wave: Wave::Psk { order: 4, symbol_rate_hz: 2.5e6, rolloff: 0.25, span_symbols: 8 },
            ..Self::tone()
        }
    }

    /// QPSK experiment plus a remote tone at 1 MHz.
    pub fn qpsk_link() -> Self {
        let base = Self::qpsk();
        Self { remote: Some(RemoteSignal { offset_hz: 1e6, power_dbm: base.noise_floor_dbm + 20.0 }), ..base }
    }

    /// Tone experiment with the canceller pinned to the published code.
    pub fn paper_code() -> Self {
        Self { canceller: CancellerSetting::Code(CancellerCode::PAPER_PROFILE), ..Self::tone() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "tone" => Self::tone(),
            "tone_5dbm" => Self::tone_5dbm(),
            "tone_link" => Self::tone_link(),
            "qpsk" => Self::qpsk(),
            "qpsk_link" => Self::qpsk_link(),
            "paper_code" => Self::paper_code(),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset \"{other}\" (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn tx_chain(&self) -> TxChainParams {
        self.tx_impairments.chain(self.tx_gain_db)
    }

    /// Remote signal if present with finite power.
    pub fn active_remote(&self) -> Option<RemoteSignal> {
        self.remote.filter(|r| r.power_dbm.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return bad(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if !(self.carrier_hz > 0.0) {
            return bad(format!("carrier_hz must be positive, got {}", self.carrier_hz));
        }
        if !self.tx_power_dbm.is_finite() || !self.tx_gain_db.is_finite() || !self.rx_gain_db.is_finite() {
            return bad("tx_power_dbm, tx_gain_db and rx_gain_db must be finite".into());
        }
        if self.noise_floor_dbm.is_nan() || self.noise_floor_dbm == f64::INFINITY {
            return bad(format!("noise_floor_dbm must be finite or -inf, got {}", self.noise_floor_dbm));
        }
        let nyquist = self.rate_hz / 2.0;
        match self.wave {
            Wave::Tone { offset_hz } => {
                if !(offset_hz.abs() < nyquist) {
                    return bad(format!("tone offset {offset_hz} Hz outside Nyquist ±{nyquist} Hz"));
                }
            }
            Wave::Psk { order, symbol_rate_hz, rolloff, .. } => {
                if order != 2 && order != 4 {
                    return bad(format!("PSK order must be 2 or 4, got {order}"));
                }
                if !(symbol_rate_hz > 0.0) || symbol_rate_hz * (1.0 + rolloff) / 2.0 > nyquist {
                    return bad(format!("PSK occupied band exceeds Nyquist at {} Hz", self.rate_hz));
                }
                let ratio = self.rate_hz / symbol_rate_hz;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                    return bad(format!("rate_hz is not an integer multiple of the symbol rate ({ratio})"));
                }
                if !(0.0..=1.0).contains(&rolloff) {
                    return bad(format!("rolloff must be in [0, 1], got {rolloff}"));
                }
            }
        }
        if let Some(r) = self.remote {
            if !(r.offset_hz.abs() < nyquist) {
                return bad(format!("remote offset {} Hz outside Nyquist ±{nyquist} Hz", r.offset_hz));
            }
            if let Wave::Tone { offset_hz } = self.wave {
                if r.power_dbm.is_finite() && r.offset_hz == offset_hz {
                    return bad("remote offset must differ from the SI tone offset".into());
                }
            }
            if r.power_dbm.is_nan() || r.power_dbm == f64::INFINITY {
                return bad("remote power must be finite or -inf".into());
            }
        }
        if !(self.rf_band_hz > 0.0) {
            return bad(format!("rf_band_hz must be positive, got {}", self.rf_band_hz));
        }
        if let CancellerSetting::Code(c) = self.canceller {
            c.validate()?;
        }
        let d = &self.durations;
        if d.train_samples == 0 || d.eval_samples == 0 || d.block_samples == 0 {
            return bad("train, eval and block sample counts must be positive".into());
        }
        if d.train_samples < 2 * self.digital_sic.basis.n_coeffs() {
            return bad(format!(
                "train_samples {} too few for {} Volterra coefficients",
                d.train_samples,
                self.digital_sic.basis.n_coeffs()
            ));
        }
        if self.psd.nfft < 2 || self.psd.nfft > d.eval_samples || !(0.0..1.0).contains(&self.psd.overlap) {
            return bad("psd.nfft must be in 2..=eval_samples and overlap in [0, 1)".into());
        }
        if !(self.digital_sic.ridge_factor >= 0.0) {
            return bad("digital_sic.ridge_factor must be >= 0".into());
        }
        self.digital_sic.basis.validate()?;
        self.channel.validate()?;
        self.canceller_params.validate()?;
        self.tx_chain().validate()?;
        Ok(())
    }
}
