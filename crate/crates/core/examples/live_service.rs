//! The live tuning service end to end: starts the HTTP/WebSocket server on
//! an ephemeral port, creates a session, streams a few spectrum frames,
//! detunes and re-tunes the canceller, and runs digital SIC.
//!
//! ```text
//! cargo run --release --example live_service
//! ```
//! For a long-running server use `fd-lab serve --addr 127.0.0.1:8080`.

use std::sync::Arc;

use futures::StreamExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use fd_lab::service::{http, Frame, SessionRegistry};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[tokio::main]
async fn main() -> Result<(), BoxError> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(http::serve(listener, Arc::new(SessionRegistry::new())));
    let base = format!("http://{addr}");
    let client = reqwest::Client::new();

    let created: Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({ "preset": "tone_link", "stream": { "frame_rate_hz": 20.0, "segments": 4 } }))
        .send()
        .await?
        .json()
        .await?;
    let id = created["id"].as_u64().ok_or("no session id")?;
    println!(
        "session {id}: code {} rf_sic {:.2} dB",
        created["code"],
        created["rf_sic_db"].as_f64().unwrap_or_default()
    );

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream")).await?;
    let mut show = async |label: &str| -> Result<(), BoxError> {
        while let Some(msg) = ws.next().await {
            if let Message::Text(text) = msg? {
                let f: Frame = serde_json::from_str(&text)?;
                let peak = f.psd_dbm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                println!(
                    "{label:<10} frame {:>3}: ATT={:<3} rf_sic {:6.2} dB, peak {:7.2} dBm/bin",
                    f.seq, f.code.att, f.rf_sic_db, peak
                );
                return Ok(());
            }
        }
        Err("stream ended".into())
    };
    show("tuned").await?;

    let ack: Value =
        client.patch(format!("{base}/sessions/{id}/canceller")).json(&json!({ "att": 0 })).send().await?.json().await?;
    println!("PATCH att=0 -> {ack}");
    show("detuned").await?;
    show("detuned").await?;

    let bad = client.patch(format!("{base}/sessions/{id}/canceller")).json(&json!({ "att": 200 })).send().await?;
    println!("PATCH att=200 -> {} {}", bad.status(), bad.text().await?);

    let ack: Value = client.post(format!("{base}/sessions/{id}/tune")).send().await?.json().await?;
    println!("POST tune -> {ack}");
    show("re-tuned").await?;
    show("re-tuned").await?;

    let report: fd_lab::experiment::ExperimentReport =
        client.post(format!("{base}/sessions/{id}/digital-sic")).send().await?.json().await?;
    print!("{}", report.to_text());

    let status = client.delete(format!("{base}/sessions/{id}")).send().await?.status();
    println!("DELETE -> {status}");
    Ok(())
}
