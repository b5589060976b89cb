//! Command-line front end: `node`, `link` and `tune` runs plus the live
//! tuning service.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fd_lab::canceller::{tune_canceller, SearchStrategy};
use fd_lab::experiment::{
    prepare_channel, run_link_experiment, run_node_experiment, CancellerSetting, ExperimentConfig, RemoteSignal, Wave,
};
use fd_lab::service::{http, SessionRegistry};
use fd_lab::signal::{write_iq, ComplexBasebandSignal};
use fd_lab::spectral::export_psd;
use fd_lab::spi::{encode_config, hex_dump, transfer_time_us, DEFAULT_SPI_CLOCK_HZ};
use fd_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "fd-lab", version, about = "Full-duplex self-interference cancellation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Self-interference only: RF and digital SIC on the node's own signal.
    Node(RunArgs),
    /// Node experiment plus a remote tone at the RX combiner.
    Link(LinkArgs),
    /// Search the canceller code for the configured channel.
    Tune(TuneArgs),
    /// Serve live tuning sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample rate (Hz).
    #[arg(long, allow_negative_numbers = true)]
    rate: Option<f64>,
    /// Carrier frequency (Hz).
    #[arg(long, allow_negative_numbers = true)]
    freq: Option<f64>,
    /// TX gain (dB).
    #[arg(long = "tx-gain", allow_negative_numbers = true)]
    tx_gain: Option<f64>,
    /// RX gain (dB); accepted for parity, powers are input-referred.
    #[arg(long = "rx-gain", allow_negative_numbers = true)]
    rx_gain: Option<f64>,
    /// Offset of the transmitted tone (Hz).
    #[arg(long = "wave-freq", allow_negative_numbers = true)]
    wave_freq: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Named preset used when no --config is given.
    #[arg(long = "sim-preset", help_heading = "Simulator")]
    preset: Option<String>,
    /// TX power at the PA output (dBm).
    #[arg(long = "sim-tx-power", help_heading = "Simulator", allow_negative_numbers = true)]
    tx_power: Option<f64>,
    #[arg(long = "sim-seed", help_heading = "Simulator")]
    seed: Option<u64>,
    /// Canceller code as ATT,PS,CAP1,CAP2,CAP3, or "auto" / "paper".
    #[arg(long = "sim-canceller", help_heading = "Simulator")]
    canceller: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the post-digital-SIC spectrum as CSV.
    #[arg(long = "sim-psd-csv", help_heading = "Simulator")]
    psd_csv: Option<PathBuf>,
    /// Write the post-RF-SIC spectrum as CSV.
    #[arg(long = "sim-psd-rf-csv", help_heading = "Simulator")]
    psd_rf_csv: Option<PathBuf>,
    /// Write the received samples after RF SIC as cf32 I/Q with a JSON sidecar.
    #[arg(long = "sim-iq", help_heading = "Simulator")]
    iq: Option<PathBuf>,
}

#[derive(Args)]
struct LinkArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Remote tone offset (Hz).
    #[arg(long = "sim-remote-freq", help_heading = "Simulator", allow_negative_numbers = true)]
    remote_freq: Option<f64>,
    /// Remote power at the RX input (dBm).
    #[arg(long = "sim-remote-power", help_heading = "Simulator", allow_negative_numbers = true)]
    remote_power: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "sim-strategy", value_enum, default_value = "exhaustive", help_heading = "Simulator")]
    strategy: Strategy,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Strategy {
    Exhaustive,
    CoordinateDescent,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

fn parse_canceller(text: &str) -> Result<CancellerSetting> {
    let parsed: serde_json::Value = match text {
        "auto" | "paper" => serde_json::Value::String(text.to_string()),
        _ => {
            let v: Vec<u8> = text
                .split(',')
                .map(|p| p.trim().parse::<u8>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("canceller code \"{text}\": {e}")))?;
            if v.len() != 5 {
                return Err(Error::Parse(format!(
                    "canceller code needs 5 fields ATT,PS,CAP1,CAP2,CAP3, got {}",
                    v.len()
                )));
            }
            serde_json::json!({ "att": v[0], "ps": v[1], "caps": [v[2], v[3], v[4]] })
        }
    };
    Ok(serde_json::from_value(parsed)?)
}

fn build_config(a: &CommonArgs, default_preset: &str) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(p)) => ExperimentConfig::preset(p)?,
        (None, None) => ExperimentConfig::preset(default_preset)?,
    };
    if let Some(v) = a.rate {
        cfg.rate_hz = v;
    }
    if let Some(v) = a.freq {
        cfg.carrier_hz = v;
    }
    if let Some(v) = a.tx_gain {
        cfg.tx_gain_db = v;
    }
    if let Some(v) = a.rx_gain {
        cfg.rx_gain_db = v;
    }
    if let Some(v) = a.wave_freq {
        match &mut cfg.wave {
            Wave::Tone { offset_hz } => *offset_hz = v,
            Wave::Psk { .. } => return Err(Error::Config("--wave-freq applies to tone waveforms only".into())),
        }
    }
    if let Some(v) = a.tx_power {
        cfg.tx_power_dbm = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(c) = &a.canceller {
        cfg.canceller = parse_canceller(c)?;
    }
    Ok(cfg)
}

fn emit<T: serde::Serialize>(json: bool, value: &T, text: String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{text}");
    }
    Ok(())
}

fn run(args: &RunArgs, cfg: &ExperimentConfig, link: bool) -> Result<()> {
    let out = if link { run_link_experiment(cfg)? } else { run_node_experiment(cfg)? };
    if let Some(p) = &args.psd_csv {
        export_psd(&out.psd_post_dig, p)?;
    }
    if let Some(p) = &args.psd_rf_csv {
        export_psd(&out.psd_post_rf, p)?;
    }
    if let Some(p) = &args.iq {
        let rx = &out.trace.rx_post_rf;
        let sig = ComplexBasebandSignal { samples: rx.samples.clone(), ..rx.clone() };
        write_iq(&sig, p, Some(cfg.seed))?;
    }
    emit(args.common.json, &out.report, out.report.to_text())
}

fn tune(args: &TuneArgs) -> Result<()> {
    let cfg = build_config(&args.common, "tone")?;
    cfg.validate()?;
    let prepared = prepare_channel(&cfg, CancellerSetting::Auto)?;
    let strategy = match args.strategy {
        Strategy::Exhaustive => SearchStrategy::Exhaustive,
        Strategy::CoordinateDescent => SearchStrategy::CoordinateDescent,
    };
    let caps = prepared.code.caps;
    let r = tune_canceller(&prepared.h_si, &cfg.canceller_params, cfg.rf_band_hz, strategy, caps, None)?;
    let words = encode_config(&r.code)?;
    let us = transfer_time_us(&words, DEFAULT_SPI_CLOCK_HZ)?;
    let c = r.code;
    let text = format!(
        "Canceller: ATT={} PS={} CAP1={} CAP2={} CAP3={}\nRF SIC across {:.1} MHz: {:.2} dB\nSweeps: {}\nSPI words ({:.1} us at {:.0} MHz):\n{}",
        c.att,
        c.ps,
        c.caps[0],
        c.caps[1],
        c.caps[2],
        cfg.rf_band_hz / 1e6,
        r.sic_db,
        r.sweeps,
        us,
        DEFAULT_SPI_CLOCK_HZ / 1e6,
        hex_dump(&words)
    );
    emit(args.common.json, &r, text)
}

fn serve(args: &ServeArgs) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        http::serve(listener, Arc::new(SessionRegistry::new())).await
    })?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Node(a) => {
            let cfg = build_config(&a.common, "tone")?;
            run(&a, &cfg, false)
        }
        Command::Link(a) => {
            let mut cfg = build_config(&a.run.common, "tone_link")?;
            if a.remote_freq.is_some() || a.remote_power.is_some() || cfg.remote.is_none() {
                let base =
                    cfg.remote.unwrap_or(RemoteSignal { offset_hz: 400e3, power_dbm: cfg.noise_floor_dbm + 20.0 });
                cfg.remote = Some(RemoteSignal {
                    offset_hz: a.remote_freq.unwrap_or(base.offset_hz),
                    power_dbm: a.remote_power.unwrap_or(base.power_dbm),
                });
            }
            run(&a.run, &cfg, true)
        }
        Command::Tune(a) => tune(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) | Error::Domain(_) | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
