//! Live tuning sessions: each session owns a configuration, the current
//! canceller code and a frame generator. Updates to one session are
//! serialized by its mutex; the registry itself is shared.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::canceller::{canceller_scalar_gain, tune_canceller, CancellerCode, ATT_CODE_MAX, PS_CODE_MAX};
use crate::channel::CAP_CODE_MAX;
use crate::error::{domain, Error, Result};
use crate::experiment::{
    baseband_waveform, calibrate_drive, prepare_channel, run_experiment, CancellerSetting, ExperimentConfig,
    ExperimentReport, NoiseSource, PreparedChannel, StreamingFir,
};
use crate::signal::{mean_square, watts_to_dbm, ComplexBasebandSignal};
use crate::spectral::{welch_psd, Window};
use crate::waveforms::{apply_tx_chain, gen_tone};

const RF_HISTORY_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSettings {
    pub frame_rate_hz: f64,
    /// Frame length in FFT blocks of `psd.nfft` samples.
    pub segments: usize,
}

impl Default for StreamSettings {
    fn default() -> Self {
        Self { frame_rate_hz: 10.0, segments: 8 }
    }
}

impl StreamSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz <= 1000.0) {
            return Err(domain(format!("frame_rate_hz must be in (0, 1000], got {}", self.frame_rate_hz)));
        }
        if self.segments == 0 || self.segments > 256 {
            return Err(domain(format!("segments must be in 1..=256, got {}", self.segments)));
        }
        Ok(())
    }
}

/// One spectrum frame as streamed to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    pub freqs_hz: Vec<f64>,
    pub psd_dbm: Vec<f64>,
    pub rf_sic_db: f64,
    pub code: CancellerCode,
}

/// Reply to a canceller change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellerAck {
    pub code: CancellerCode,
    /// RF SIC the next frame will show, from the same power definition as
    /// the experiment report.
    pub rf_sic_db: f64,
}

/// Partial canceller update with wide integer fields so out-of-range values
/// reach validation instead of failing deserialization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeUpdate {
    #[serde(default)]
    pub att: Option<i64>,
    #[serde(default)]
    pub ps: Option<i64>,
    #[serde(default)]
    pub caps: Option<[i64; 3]>,
}

fn checked(v: i64, max: u8, name: &str) -> Result<u8> {
    if (0..=max as i64).contains(&v) {
        Ok(v as u8)
    } else {
        Err(domain(format!("{name} code {v} outside 0..={max}")))
    }
}

impl CodeUpdate {
    pub fn apply(&self, base: CancellerCode) -> Result<CancellerCode> {
        let mut c = base;
        if let Some(a) = self.att {
            c.att = checked(a, ATT_CODE_MAX, "ATT")?;
        }
        if let Some(p) = self.ps {
            c.ps = checked(p, PS_CODE_MAX, "PS")?;
        }
        if let Some(caps) = self.caps {
            for (i, v) in caps.iter().enumerate() {
                c.caps[i] = checked(*v, CAP_CODE_MAX, &format!("CAP{}", i + 1))?;
            }
        }
        Ok(c)
    }
}

impl From<CancellerCode> for CodeUpdate {
    fn from(c: CancellerCode) -> Self {
        Self { att: Some(c.att as i64), ps: Some(c.ps as i64), caps: Some(c.caps.map(|v| v as i64)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: u64,
    pub code: CancellerCode,
    pub next_seq: u64,
    pub stream: StreamSettings,
    pub rf_sic_history_db: Vec<f64>,
    pub last_frame: Option<Frame>,
    pub last_report: Option<ExperimentReport>,
}

/// Per-session simulator. The transmitted frame is fixed; noise is
/// redrawn for every frame from `seed` and the frame number.
pub struct Session {
    id: u64,
    cfg: ExperimentConfig,
    stream: StreamSettings,
    code: CancellerCode,
    channels: BTreeMap<[u8; 3], PreparedChannel>,
    /// PA output with `history` leading samples for channel memory.
    tx_out: Vec<Complex64>,
    history: usize,
    desired: Vec<Complex64>,
    tx_power_dbm: f64,
    next_seq: u64,
    rf_history: VecDeque<f64>,
    last_frame: Option<Frame>,
    last_report: Option<ExperimentReport>,
}

impl Session {
    pub fn new(id: u64, cfg: ExperimentConfig, stream: StreamSettings) -> Result<Self> {
        cfg.validate()?;
        stream.validate()?;
        let prepared = prepare_channel(&cfg, cfg.canceller)?;
        let code = prepared.code;
        let frame_len = cfg.psd.nfft * stream.segments;
        let history = cfg.fir.pre_taps + cfg.fir.post_taps;
        let n = frame_len + history;
        let chain = cfg.tx_chain();
        let unit = baseband_waveform(&cfg, n, cfg.tx_power_dbm - cfg.tx_gain_db, cfg.seed)?;
        let scale = calibrate_drive(&unit, &chain, cfg.tx_power_dbm)?;
        let tx_out = apply_tx_chain(&unit.scaled(Complex64::new(scale, 0.0)), &chain)?.samples;
        let tx_power_dbm = watts_to_dbm(mean_square(&tx_out[history..]));
        let desired = match cfg.active_remote() {
            Some(r) => gen_tone(cfg.rate_hz, r.offset_hz, r.power_dbm, frame_len)?.samples,
            None => vec![Complex64::new(0.0, 0.0); frame_len],
        };
        let mut channels = BTreeMap::new();
        channels.insert(code.caps, prepared);
        Ok(Self {
            id,
            cfg,
            stream,
            code,
            channels,
            tx_out,
            history,
            desired,
            tx_power_dbm,
            next_seq: 0,
            rf_history: VecDeque::with_capacity(RF_HISTORY_LEN),
            last_frame: None,
            last_report: None,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn code(&self) -> CancellerCode {
        self.code
    }

    pub fn stream_settings(&self) -> StreamSettings {
        self.stream
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn channel(&mut self, caps: [u8; 3]) -> Result<&PreparedChannel> {
        if !self.channels.contains_key(&caps) {
            let fixed = CancellerSetting::Code(CancellerCode { caps, ..self.code });
            let p = prepare_channel(&self.cfg, fixed)?;
            self.channels.insert(caps, p);
        }
        Ok(&self.channels[&caps])
    }

    /// SI after the canceller over one frame, without noise.
    fn si_frame(&mut self, code: CancellerCode) -> Result<Vec<Complex64>> {
        let g = canceller_scalar_gain(code.att, code.ps, &self.cfg.canceller_params)?;
        let fir = self.channel(code.caps)?.fir_si.minus_flat(g);
        let mut s = StreamingFir::new(&fir);
        let mut out = s.process(&self.tx_out);
        out.drain(..self.history);
        Ok(out)
    }

    fn rf_sic_of(&self, si: &[Complex64]) -> f64 {
        let p = mean_square(si);
        if p > 0.0 {
            (self.tx_power_dbm - watts_to_dbm(p)).min(crate::canceller::SIC_CAP_DB)
        } else {
            crate::canceller::SIC_CAP_DB
        }
    }

    pub fn set_canceller(&mut self, update: &CodeUpdate) -> Result<CancellerAck> {
        let code = update.apply(self.code)?;
        code.validate()?;
        let si = self.si_frame(code)?;
        self.code = code;
        Ok(CancellerAck { code, rf_sic_db: self.rf_sic_of(&si) })
    }

    /// Exhaustive ATT/PS search at the current capacitor codes.
    pub fn tune(&mut self) -> Result<CancellerAck> {
        let caps = self.code.caps;
        let params = self.cfg.canceller_params;
        let band = self.cfg.rf_band_hz;
        let strategy = self.cfg.search;
        let h = self.channel(caps)?.h_si.clone();
        let r = tune_canceller(&h, &params, band, strategy, caps, Some(self.code))?;
        self.set_canceller(&CodeUpdate::from(r.code))
    }

    pub fn next_frame(&mut self) -> Result<Frame> {
        let seq = self.next_seq;
        let si = self.si_frame(self.code)?;
        let mut noise = NoiseSource::new(
            self.cfg.noise_floor_dbm,
            self.cfg.seed.wrapping_add(seq.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        )?;
        let w = noise.take(si.len());
        let rx: Vec<Complex64> = si.iter().zip(&self.desired).zip(w).map(|((s, d), n)| s + d + n).collect();
        let sig = ComplexBasebandSignal::new(rx, self.cfg.rate_hz)?;
        let psd = welch_psd(&sig, self.cfg.psd.nfft, Window::Hann, self.cfg.psd.overlap)?;
        let rf_sic_db = self.rf_sic_of(&si);
        let frame = Frame { seq, freqs_hz: psd.freqs_hz, psd_dbm: psd.psd_dbm_per_bin, rf_sic_db, code: self.code };
        self.next_seq += 1;
        if self.rf_history.len() == RF_HISTORY_LEN {
            self.rf_history.pop_front();
        }
        self.rf_history.push_back(rf_sic_db);
        self.last_frame = Some(frame.clone());
        Ok(frame)
    }

    /// Configuration for a full run at the current code.
    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig { canceller: CancellerSetting::Code(self.code), ..self.cfg.clone() }
    }

    pub fn record_report(&mut self, report: ExperimentReport) {
        self.last_report = Some(report);
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id,
            code: self.code,
            next_seq: self.next_seq,
            stream: self.stream,
            rf_sic_history_db: self.rf_history.iter().copied().collect(),
            last_frame: self.last_frame.clone(),
            last_report: self.last_report.clone(),
        }
    }
}

pub type SessionHandle = Arc<Mutex<Session>>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Thread-safe set of live sessions.
#[derive(Default)]
pub struct SessionRegistry {
    sessions: Mutex<HashMap<u64, SessionHandle>>,
    next_id: AtomicU64,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, cfg: ExperimentConfig, stream: StreamSettings) -> Result<(u64, CancellerAck)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let mut s = Session::new(id, cfg, stream)?;
        let ack = s.set_canceller(&CodeUpdate::default())?;
        lock(&self.sessions).insert(id, Arc::new(Mutex::new(s)));
        Ok((id, ack))
    }

    pub fn get(&self, id: u64) -> Result<SessionHandle> {
        lock(&self.sessions).get(&id).cloned().ok_or(Error::UnknownSession(id))
    }

    pub fn contains(&self, id: u64) -> bool {
        lock(&self.sessions).contains_key(&id)
    }

    pub fn with<T>(&self, id: u64, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let h = self.get(id)?;
        let mut s = lock(&h);
        f(&mut s)
    }

    pub fn set_canceller(&self, id: u64, update: &CodeUpdate) -> Result<CancellerAck> {
        self.with(id, |s| s.set_canceller(update))
    }

    pub fn tune(&self, id: u64) -> Result<CancellerAck> {
        self.with(id, |s| s.tune())
    }

    pub fn next_frame(&self, id: u64) -> Result<Frame> {
        self.with(id, |s| s.next_frame())
    }

    pub fn view(&self, id: u64) -> Result<SessionView> {
        self.with(id, |s| Ok(s.view()))
    }

    /// Full experiment at the session's current code. The session lock is
    /// released while the run executes.
    pub fn run_digital_sic(&self, id: u64) -> Result<ExperimentReport> {
        let cfg = self.with(id, |s| Ok(s.experiment_config()))?;
        let report = run_experiment(&cfg)?.report;
        self.with(id, |s| {
            s.record_report(report.clone());
            Ok(())
        })?;
        Ok(report)
    }

    pub fn close(&self, id: u64) -> Result<()> {
        lock(&self.sessions).remove(&id).map(|_| ()).ok_or(Error::UnknownSession(id))
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry_with_tone() -> (SessionRegistry, u64) {
        let r = SessionRegistry::new();
        let (id, _) = r.create(ExperimentConfig::tone(), StreamSettings::default()).unwrap();
        (r, id)
    }

    #[test]
    fn frames_are_numbered_monotonically() {
        let (r, id) = registry_with_tone();
        let seqs: Vec<u64> = (0..4).map(|_| r.next_frame(id).unwrap().seq).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3]);
        let f = r.next_frame(id).unwrap();
        assert_eq!(f.freqs_hz.len(), 1024);
        assert_eq!(f.psd_dbm.len(), 1024);
    }

    #[test]
    fn detuning_attenuator_lowers_rf_sic() {
        let (r, id) = registry_with_tone();
        let tuned = r.next_frame(id).unwrap().rf_sic_db;
        let ack = r.set_canceller(id, &CodeUpdate { att: Some(0), ..Default::default() }).unwrap();
        assert_eq!(ack.code.att, 0);
        let detuned = r.next_frame(id).unwrap();
        assert_eq!(detuned.code.att, 0);
        assert!(detuned.rf_sic_db < tuned - 10.0, "{tuned} -> {}", detuned.rf_sic_db);
        assert!((ack.rf_sic_db - detuned.rf_sic_db).abs() < 1e-12);
    }

    #[test]
    fn last_writer_wins() {
        let (r, id) = registry_with_tone();
        let a = r.set_canceller(id, &CodeUpdate { att: Some(5), ..Default::default() }).unwrap();
        let b = r.set_canceller(id, &CodeUpdate { att: Some(6), ..Default::default() }).unwrap();
        assert_eq!((a.code.att, b.code.att), (5, 6));
        assert_eq!(r.next_frame(id).unwrap().code.att, 6);
    }

    #[test]
    fn invalid_codes_name_the_range() {
        let (r, id) = registry_with_tone();
        let before = r.view(id).unwrap().code;
        for (u, needle) in [
            (CodeUpdate { att: Some(200), ..Default::default() }, "0..=127"),
            (CodeUpdate { ps: Some(256), ..Default::default() }, "0..=255"),
            (CodeUpdate { caps: Some([0, 32, 0]), ..Default::default() }, "CAP2 code 32 outside 0..=31"),
            (CodeUpdate { att: Some(-1), ..Default::default() }, "0..=127"),
        ] {
            let e = r.set_canceller(id, &u).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
        }
        assert_eq!(r.view(id).unwrap().code, before);
    }

    #[test]
    fn tune_recovers_auto_code() {
        let (r, id) = registry_with_tone();
        let auto = r.view(id).unwrap().code;
        r.set_canceller(id, &CodeUpdate { att: Some(100), ps: Some(3), ..Default::default() }).unwrap();
        assert_eq!(r.tune(id).unwrap().code, auto);
    }

    #[test]
    fn unknown_and_closed_sessions() {
        let (r, id) = registry_with_tone();
        assert!(matches!(r.next_frame(id + 100), Err(Error::UnknownSession(_))));
        r.close(id).unwrap();
        assert!(matches!(r.view(id), Err(Error::UnknownSession(_))));
        assert!(matches!(r.close(id), Err(Error::UnknownSession(_))));
        assert!(r.is_empty());
    }

    #[test]
    fn stationary_stream() {
        let (r, id) = registry_with_tone();
        let a = r.next_frame(id).unwrap();
        let b = r.next_frame(id).unwrap();
        assert_eq!(a.rf_sic_db, b.rf_sic_db);
        assert_ne!(a.psd_dbm, b.psd_dbm);
        let mean = |f: &Frame| f.psd_dbm.iter().sum::<f64>() / f.psd_dbm.len() as f64;
        assert!((mean(&a) - mean(&b)).abs() < 0.5);
    }
}
