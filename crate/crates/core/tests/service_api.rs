//! The HTTP and WebSocket contract exercised over real sockets.

use std::sync::Arc;
use std::time::Duration;

use futures::StreamExt;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use fd_lab::experiment::ExperimentReport;
use fd_lab::service::{http, CancellerAck, Frame, SessionRegistry, SessionView};

struct Server {
    base: String,
    ws: String,
    client: reqwest::Client,
}

async fn start() -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(http::serve(listener, Arc::new(SessionRegistry::new())));
    Server { base: format!("http://{addr}"), ws: format!("ws://{addr}"), client: reqwest::Client::new() }
}

impl Server {
    async fn create(&self, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(format!("{}/sessions", self.base)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn patch(&self, id: u64, body: Value) -> (StatusCode, Value) {
        let r = self.client.patch(format!("{}/sessions/{id}/canceller", self.base)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn post(&self, path: &str) -> reqwest::Response {
        self.client.post(format!("{}{path}", self.base)).send().await.unwrap()
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(format!("{}{path}", self.base)).send().await.unwrap()
    }
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn next_frame(ws: &mut Ws) -> Frame {
    let fut = async {
        loop {
            match ws.next().await.expect("stream open").expect("frame") {
                Message::Text(t) => return serde_json::from_str::<Frame>(&t).unwrap(),
                _ => continue,
            }
        }
    };
    tokio::time::timeout(Duration::from_secs(10), fut).await.expect("frame within 10 s")
}

/// Frames already in flight may predate a change; wait for one showing `att`.
async fn frame_with_att(ws: &mut Ws, att: u8) -> Frame {
    for _ in 0..10 {
        let f = next_frame(ws).await;
        if f.code.att == att {
            return f;
        }
    }
    panic!("no frame with ATT {att}");
}

const FAST: &str = r#"{"frame_rate_hz": 50.0, "segments": 2}"#;

#[tokio::test(flavor = "multi_thread")]
async fn session_lifecycle() {
    let s = start().await;
    let stream: Value = serde_json::from_str(FAST).unwrap();
    let (status, created) = s.create(json!({ "preset": "tone", "stream": stream })).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_u64().unwrap();
    assert_eq!(created["stream_path"], format!("/sessions/{id}/stream"));

    let view: SessionView = s.get(&format!("/sessions/{id}")).await.json().await.unwrap();
    assert_eq!(view.id, id);
    assert_eq!(serde_json::to_value(view.code).unwrap(), created["code"]);

    let r = s.client.delete(format!("{}/sessions/{id}", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    assert_eq!(s.get(&format!("/sessions/{id}")).await.status(), StatusCode::NOT_FOUND);
    let r = s.client.delete(format!("{}/sessions/{id}", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_follow_acked_canceller_changes() {
    let s = start().await;
    let stream: Value = serde_json::from_str(FAST).unwrap();
    let (_, created) = s.create(json!({ "preset": "tone", "stream": stream })).await;
    let id = created["id"].as_u64().unwrap();
    let tuned_att = created["code"]["att"].as_u64().unwrap() as u8;

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("{}/sessions/{id}/stream", s.ws)).await.unwrap();
    let first = next_frame(&mut ws).await;
    assert_eq!(first.freqs_hz.len(), first.psd_dbm.len());
    assert!((first.rf_sic_db - created["rf_sic_db"].as_f64().unwrap()).abs() < 1e-9);

    let (status, ack) = s.patch(id, json!({ "att": 0 })).await;
    assert_eq!(status, StatusCode::OK);
    let ack: CancellerAck = serde_json::from_value(ack).unwrap();
    assert_eq!(ack.code.att, 0);
    let detuned = frame_with_att(&mut ws, 0).await;
    assert_eq!(detuned.rf_sic_db, ack.rf_sic_db);
    assert!(detuned.seq > first.seq);
    // Residual around the tone rises once the canceller is detuned.
    let peak = |f: &Frame| f.psd_dbm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(peak(&detuned) > peak(&first) + 5.0);

    let ack: CancellerAck = s.post(&format!("/sessions/{id}/tune")).await.json().await.unwrap();
    assert_eq!(ack.code.att, tuned_att);
    let retuned = frame_with_att(&mut ws, tuned_att).await;
    assert_eq!(retuned.rf_sic_db, ack.rf_sic_db);

    let mut last = retuned.seq;
    for _ in 0..5 {
        let f = next_frame(&mut ws).await;
        assert!(f.seq > last);
        last = f.seq;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_requests_are_rejected() {
    let s = start().await;
    let (status, body) = s.create(json!({ "preset": "nope" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let (_, created) = s.create(json!({})).await;
    let id = created["id"].as_u64().unwrap();
    let (status, body) = s.patch(id, json!({ "att": 128 })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("0..=127"));
    let (status, _) = s.patch(id, json!({ "caps": [0, 32, 0] })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = s.patch(id, json!({ "ps": -1 })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // A rejected update leaves the code unchanged.
    let view: SessionView = s.get(&format!("/sessions/{id}")).await.json().await.unwrap();
    assert_eq!(serde_json::to_value(view.code).unwrap(), created["code"]);

    let (status, _) = s.patch(id + 100, json!({ "att": 1 })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(tokio_tungstenite::connect_async(format!("{}/sessions/{}/stream", s.ws, id + 100)).await.is_err());

    let r = s
        .client
        .patch(format!("{}/sessions/{id}/canceller", s.base))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert!(r.status().is_client_error());
}

#[tokio::test(flavor = "multi_thread")]
async fn digital_sic_run_matches_offline_experiment() {
    let s = start().await;
    let (_, created) = s.create(json!({ "preset": "tone" })).await;
    let id = created["id"].as_u64().unwrap();
    let r = s.post(&format!("/sessions/{id}/digital-sic")).await;
    assert_eq!(r.status(), StatusCode::OK);
    let report: ExperimentReport = r.json().await.unwrap();
    let offline = fd_lab::experiment::run_experiment(&fd_lab::experiment::ExperimentConfig::tone()).unwrap().report;
    assert_eq!(report.to_json().unwrap(), offline.to_json().unwrap());

    let view: SessionView = s.get(&format!("/sessions/{id}")).await.json().await.unwrap();
    assert_eq!(view.last_report, Some(report));
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_are_independent() {
    let s = start().await;
    let (_, a) = s.create(json!({})).await;
    let (_, b) = s.create(json!({})).await;
    let (a, b) = (a["id"].as_u64().unwrap(), b["id"].as_u64().unwrap());
    assert_ne!(a, b);
    let (status, _) = s.patch(a, json!({ "att": 0, "ps": 0 })).await;
    assert_eq!(status, StatusCode::OK);
    let va: SessionView = s.get(&format!("/sessions/{a}")).await.json().await.unwrap();
    let vb: SessionView = s.get(&format!("/sessions/{b}")).await.json().await.unwrap();
    assert_eq!((va.code.att, va.code.ps), (0, 0));
    assert_ne!(va.code, vb.code);
}
