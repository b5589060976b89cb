//! Sample-level simulation: waveform generation, the SI channel with the RF
//! canceller, the RX combiner and the digital-SIC worker, run as three
//! threads joined by bounded queues.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::canceller::{canceller_scalar_gain, residual_response, rf_sic_db, tune_canceller, CancellerCode};
use crate::channel::{linear_grid, ChannelProfile, FirChannel, FrequencyResponse};
use crate::digital_sic::{apply_digital_sic, train_digital_sic, DigitalSicConfig, VolterraModel};
use crate::error::{domain, Error, Result};
use crate::signal::{dbm_to_watts, mean_square, ComplexBasebandSignal, DEFAULT_REF_IMPEDANCE_OHM};
use crate::waveforms::{apply_tx_chain, gen_psk, gen_tone, PskParams, TxChainParams};

use super::config::{CancellerSetting, ExperimentConfig, Wave};

/// Bounded queue depth between pipeline stages, in blocks.
const QUEUE_DEPTH: usize = 4;
const TUNING_GRID_POINTS: usize = 201;
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0001;
const PSK_STREAM: u64 = 0x7073_6b00_0000_0002;

/// Channel state resolved before streaming starts.
#[derive(Debug, Clone)]
pub struct PreparedChannel {
    pub code: CancellerCode,
    /// SI response on the tuning grid with the tuner at `code.caps`.
    pub h_si: FrequencyResponse,
    pub canceller_gain: Complex64,
    /// Canceller-only SIC over the RF band, excluding passive isolation.
    pub rf_band_sic_db: f64,
    pub fir_si: FirChannel,
}

impl PreparedChannel {
    pub fn fir_residual(&self) -> FirChannel {
        self.fir_si.minus_flat(self.canceller_gain)
    }
}

fn profile_with_caps(profile: &ChannelProfile, caps: [u8; 3]) -> ChannelProfile {
    let mut p = profile.clone();
    p.tuner.cap_codes = caps;
    p
}

/// Resolves the canceller code (searching if `auto`) and realises the SI
/// channel as an FIR at the sample rate.
pub fn prepare_channel(cfg: &ExperimentConfig, setting: CancellerSetting) -> Result<PreparedChannel> {
    let caps = match setting {
        CancellerSetting::Auto => cfg.channel.tuner.cap_codes,
        CancellerSetting::Code(c) => c.caps,
    };
    let profile = profile_with_caps(&cfg.channel, caps);
    let half = cfg.rf_band_hz / 2.0;
    let grid = linear_grid(-half, half, TUNING_GRID_POINTS);
    let h_si = profile.si_response(&grid, cfg.carrier_hz)?;
    let code = match setting {
        CancellerSetting::Auto => {
            tune_canceller(&h_si, &cfg.canceller_params, cfg.rf_band_hz, cfg.search, caps, None)?.code
        }
        CancellerSetting::Code(c) => {
            c.validate()?;
            c
        }
    };
    let canceller_gain = canceller_scalar_gain(code.att, code.ps, &cfg.canceller_params)?;
    let h_c = FrequencyResponse::flat(&grid, canceller_gain)?;
    let rf_band_sic_db = rf_sic_db(&h_si, &residual_response(&h_si, &h_c)?, cfg.rf_band_hz)?;
    let fir_si = FirChannel::fit(
        |g| profile.si_response(g, cfg.carrier_hz),
        cfg.rate_hz,
        cfg.fir.pre_taps,
        cfg.fir.post_taps,
        cfg.fir.grid_points,
    )?;
    Ok(PreparedChannel { code, h_si, canceller_gain, rf_band_sic_db, fir_si })
}

/// Digital baseband waveform of `n` samples at `power_dbm`.
pub fn baseband_waveform(cfg: &ExperimentConfig, n: usize, power_dbm: f64, seed: u64) -> Result<ComplexBasebandSignal> {
    match cfg.wave {
        Wave::Tone { offset_hz } => gen_tone(cfg.rate_hz, offset_hz, power_dbm, n),
        Wave::Psk { order, symbol_rate_hz, rolloff, span_symbols } => {
            let sps = (cfg.rate_hz / symbol_rate_hz).round() as usize;
            let p = PskParams {
                order,
                symbol_rate_hz,
                sample_rate_hz: cfg.rate_hz,
                rrc_rolloff: rolloff,
                rrc_span_symbols: span_symbols,
                power_dbm,
                n_symbols: n.div_ceil(sps),
                seed: seed ^ PSK_STREAM,
            };
            let mut sig = gen_psk(&p)?;
            sig.samples.truncate(n);
            Ok(sig)
        }
    }
}

/// Drive level at which the PA output of `x` averages `target_dbm`.
/// Returns the scale applied to `x`.
pub fn calibrate_drive(x: &ComplexBasebandSignal, chain: &TxChainParams, target_dbm: f64) -> Result<f64> {
    let target = dbm_to_watts(target_dbm) * x.ref_impedance_ohm;
    let mut scale = 1.0;
    for _ in 0..64 {
        let t = apply_tx_chain(&x.scaled(Complex64::new(scale, 0.0)), chain)?;
        let p = mean_square(&t.samples);
        if !(p > 0.0) {
            return Err(domain("transmit chain output is zero"));
        }
        let step = (target / p).sqrt();
        scale *= step;
        if (step - 1.0).abs() < 1e-14 {
            break;
        }
    }
    Ok(scale)
}

/// Streaming FIR with lag `c` on tap `c`; output is delayed by the
/// channel's pre-taps relative to its input.
#[derive(Debug, Clone)]
pub struct StreamingFir {
    taps: Vec<Complex64>,
    history: Vec<Complex64>,
}

impl StreamingFir {
    pub fn new(fir: &FirChannel) -> Self {
        Self { taps: fir.taps.clone(), history: vec![Complex64::new(0.0, 0.0); fir.taps.len().saturating_sub(1)] }
    }

    pub fn process(&mut self, block: &[Complex64]) -> Vec<Complex64> {
        let h = self.history.len();
        let mut buf = Vec::with_capacity(h + block.len());
        buf.extend_from_slice(&self.history);
        buf.extend_from_slice(block);
        let out =
            (0..block.len()).map(|i| self.taps.iter().enumerate().map(|(c, &t)| t * buf[h + i - c]).sum()).collect();
        self.history.copy_from_slice(&buf[buf.len() - h..]);
        out
    }
}

/// Seeded circular Gaussian noise drawn sequentially, so block boundaries do
/// not change the realisation.
pub struct NoiseSource {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl NoiseSource {
    pub fn new(floor_dbm: f64, seed: u64) -> Result<Self> {
        let normal = if floor_dbm == f64::NEG_INFINITY {
            None
        } else {
            let sigma = (dbm_to_watts(floor_dbm) * DEFAULT_REF_IMPEDANCE_OHM / 2.0).sqrt();
            Some(Normal::new(0.0, sigma).map_err(|e| domain(format!("noise floor {floor_dbm}: {e}")))?)
        };
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM), normal })
    }

    pub fn take(&mut self, n: usize) -> Vec<Complex64> {
        match &self.normal {
            None => vec![Complex64::new(0.0, 0.0); n],
            Some(d) => (0..n).map(|_| Complex64::new(d.sample(&mut self.rng), d.sample(&mut self.rng))).collect(),
        }
    }
}

/// Every stream of a run, indexed by receive sample.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    /// Digital baseband TX reference available to digital SIC.
    pub tx_reference: ComplexBasebandSignal,
    /// PA output.
    pub tx_out: Vec<Complex64>,
    /// SI at the RX port before the canceller.
    pub si_pre_rf: Vec<Complex64>,
    /// SI after the canceller.
    pub si_post_rf: Vec<Complex64>,
    /// SI after digital SIC; equals `si_post_rf` outside `dig_valid`.
    pub si_post_dig: Vec<Complex64>,
    pub desired: Vec<Complex64>,
    /// Received samples after the canceller (SI + desired + noise).
    pub rx_post_rf: ComplexBasebandSignal,
    pub rx_post_dig: ComplexBasebandSignal,
    pub dig_valid: std::ops::Range<usize>,
    pub model: VolterraModel,
}

struct TxBlock {
    x: Vec<Complex64>,
    t: Vec<Complex64>,
}

struct RxBlock {
    x: Vec<Complex64>,
    t: Vec<Complex64>,
    si_pre: Vec<Complex64>,
    si_rf: Vec<Complex64>,
    desired: Vec<Complex64>,
    rx: Vec<Complex64>,
}

fn stage_failed() -> Error {
    domain("pipeline stage terminated early")
}

fn tx_stage(x: ComplexBasebandSignal, chain: TxChainParams, block: usize, out: SyncSender<TxBlock>) -> Result<()> {
    for chunk in x.samples.chunks(block) {
        let sig = ComplexBasebandSignal { samples: chunk.to_vec(), ..x.clone() };
        let t = apply_tx_chain(&sig, &chain)?.samples;
        if out.send(TxBlock { x: sig.samples, t }).is_err() {
            return Err(stage_failed());
        }
    }
    Ok(())
}

fn channel_stage(
    prepared: &PreparedChannel,
    desired: Vec<Complex64>,
    mut noise: NoiseSource,
    input: Receiver<TxBlock>,
    out: SyncSender<RxBlock>,
) -> Result<()> {
    let mut pre = StreamingFir::new(&prepared.fir_si);
    let mut post = StreamingFir::new(&prepared.fir_residual());
    let mut pos = 0;
    for TxBlock { x, t } in input {
        let n = x.len();
        let si_pre = pre.process(&t);
        let si_rf = post.process(&t);
        let d = desired[pos..pos + n].to_vec();
        let rx = si_rf.iter().zip(&d).zip(noise.take(n)).map(|((s, d), w)| s + d + w).collect();
        pos += n;
        if out.send(RxBlock { x, t, si_pre, si_rf, desired: d, rx }).is_err() {
            return Err(stage_failed());
        }
    }
    Ok(())
}

struct Collected {
    x: Vec<Complex64>,
    t: Vec<Complex64>,
    si_pre: Vec<Complex64>,
    si_rf: Vec<Complex64>,
    desired: Vec<Complex64>,
    rx: Vec<Complex64>,
    model: VolterraModel,
}

/// Trains as soon as the training window has arrived, while the channel
/// stage keeps streaming the evaluation window.
fn digital_stage(cfg: &ExperimentConfig, input: Receiver<RxBlock>) -> Result<Collected> {
    let d = cfg.durations;
    let train_end = d.settle_samples + d.train_samples;
    let n = stream_len(cfg);
    let mut c = Collected {
        x: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        si_pre: Vec::with_capacity(n),
        si_rf: Vec::with_capacity(n),
        desired: Vec::with_capacity(n),
        rx: Vec::with_capacity(n),
        model: VolterraModel::zero(cfg.digital_sic.basis.clone()),
    };
    let mut trained = false;
    let sic_cfg = DigitalSicConfig {
        basis: cfg.digital_sic.basis.clone(),
        ridge_factor: cfg.digital_sic.ridge_factor,
        train_len: d.train_samples,
        eval_len: d.eval_samples,
        max_lag: cfg.digital_sic.max_lag,
    };
    for b in input {
        c.x.extend(b.x);
        c.t.extend(b.t);
        c.si_pre.extend(b.si_pre);
        c.si_rf.extend(b.si_rf);
        c.desired.extend(b.desired);
        c.rx.extend(b.rx);
        if !trained && c.rx.len() >= train_end {
            let window =
                |v: &[Complex64]| ComplexBasebandSignal::new(v[d.settle_samples..train_end].to_vec(), cfg.rate_hz);
            c.model = train_digital_sic(&window(&c.x)?, &window(&c.rx)?, &sic_cfg)?;
            trained = true;
        }
    }
    if !trained {
        return Err(stage_failed());
    }
    Ok(c)
}

fn join<T>(h: thread::ScopedJoinHandle<'_, Result<T>>) -> Result<T> {
    h.join().map_err(|_| domain("pipeline stage panicked"))?
}

/// Samples streamed per run: the configured budget plus a tail so the
/// evaluation window keeps full Volterra support at any admissible lag.
pub fn stream_len(cfg: &ExperimentConfig) -> usize {
    cfg.durations.total() + cfg.digital_sic.basis.memory + cfg.digital_sic.max_lag
}

/// Runs the three-stage pipeline over `cfg.durations.total()` samples.
pub fn simulate(cfg: &ExperimentConfig, prepared: &PreparedChannel) -> Result<SimulationTrace> {
    let n = stream_len(cfg);
    let chain = cfg.tx_chain();
    let unit = baseband_waveform(cfg, n, cfg.tx_power_dbm - cfg.tx_gain_db, cfg.seed)?;
    let eval = cfg.durations.settle_samples + cfg.durations.train_samples..cfg.durations.total();
    let scale = calibrate_drive(&unit.slice(eval.start, eval.end)?, &chain, cfg.tx_power_dbm)?;
    let x = unit.scaled(Complex64::new(scale, 0.0));
    let desired = match cfg.active_remote() {
        Some(r) => gen_tone(cfg.rate_hz, r.offset_hz, r.power_dbm, n)?.samples,
        None => vec![Complex64::new(0.0, 0.0); n],
    };
    let noise = NoiseSource::new(cfg.noise_floor_dbm, cfg.seed)?;
    let block = cfg.durations.block_samples;

    let collected = thread::scope(|s| {
        let (tx_send, tx_recv) = sync_channel(QUEUE_DEPTH);
        let (rx_send, rx_recv) = sync_channel(QUEUE_DEPTH);
        let x_in = x.clone();
        let h_tx = s.spawn(move || tx_stage(x_in, chain, block, tx_send));
        let h_ch = s.spawn(move || channel_stage(prepared, desired, noise, tx_recv, rx_send));
        let h_dig = s.spawn(move || digital_stage(cfg, rx_recv));
        let dig = join(h_dig);
        let ch = join(h_ch);
        let tx = join(h_tx);
        // Report the root cause: upstream failures close the queues.
        tx?;
        ch?;
        dig
    })?;

    let tx_reference = ComplexBasebandSignal::new(collected.x, cfg.rate_hz)?;
    let rx_post_rf = ComplexBasebandSignal::new(collected.rx, cfg.rate_hz)?;
    let out = apply_digital_sic(&collected.model, &tx_reference, &rx_post_rf)?;
    let mut si_post_dig = collected.si_rf.clone();
    for i in out.valid.clone() {
        let prediction = rx_post_rf.samples[i] - out.residual.samples[i];
        si_post_dig[i] -= prediction;
    }
    Ok(SimulationTrace {
        tx_reference,
        tx_out: collected.t,
        si_pre_rf: collected.si_pre,
        si_post_rf: collected.si_rf,
        si_post_dig,
        desired: collected.desired,
        rx_post_rf,
        rx_post_dig: out.residual,
        dig_valid: out.valid,
        model: collected.model,
    })
}
