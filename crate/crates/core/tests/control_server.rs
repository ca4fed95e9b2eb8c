//! Control server over a real socket.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use binaural_cdr::engine::control::{mailbox, telemetry_queue, ControlCommand, ParamName};
use binaural_cdr::{ControlServer, Enhancer, PipelineConfig, Telemetry};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn connect(server: &ControlServer) -> Ws {
    let (ws, _) = tungstenite::connect(format!("ws://{}", server.local_addr())).unwrap();
    ws
}

/// Next non-telemetry reply.
fn reply(ws: &mut Ws) -> Value {
    loop {
        if let Message::Text(t) = ws.read().unwrap() {
            let v: Value = serde_json::from_str(&t).unwrap();
            if v["type"] != "telemetry" {
                return v;
            }
        }
    }
}

fn send(ws: &mut Ws, v: Value) -> Value {
    ws.send(Message::Text(v.to_string())).unwrap();
    reply(ws)
}

fn next_telemetry(ws: &mut Ws) -> Value {
    let deadline = Instant::now() + Duration::from_secs(5);
    while Instant::now() < deadline {
        if let Message::Text(t) = ws.read().unwrap() {
            let v: Value = serde_json::from_str(&t).unwrap();
            if v["type"] == "telemetry" {
                return v;
            }
        }
    }
    panic!("no telemetry");
}

fn state() -> binaural_cdr::EngineState {
    Enhancer::new(&PipelineConfig::streaming()).unwrap().state()
}

#[test]
fn commands_reach_the_mailbox_in_order() {
    let (tx, rx) = mailbox(8);
    let (_ttx, trx) = telemetry_queue(4);
    let server = ControlServer::spawn("127.0.0.1:0", state(), tx, trx).unwrap();
    let mut ws = connect(&server);
    assert_eq!(
        send(&mut ws, json!({"type":"set_param","name":"mu","value":0.5})),
        json!({"type":"ack","name":"mu","value":0.5})
    );
    assert_eq!(send(&mut ws, json!({"type":"bypass","on":true})), json!({"type":"ack","name":"bypass","value":true}));
    assert_eq!(rx.try_recv(), Some(ControlCommand::SetParam(ParamName::Mu, 0.5)));
    assert_eq!(rx.try_recv(), Some(ControlCommand::Bypass(true)));
    assert_eq!(rx.try_recv(), None);
    assert_eq!(server.state().params.mu, 0.5);
    assert!(server.state().bypass);
}

#[test]
fn reconnect_sees_the_same_state() {
    let (tx, _rx) = mailbox(8);
    let (_ttx, trx) = telemetry_queue(4);
    let server = ControlServer::spawn("127.0.0.1:0", state(), tx, trx).unwrap();
    let mut a = connect(&server);
    send(&mut a, json!({"type":"set_param","name":"S","value":3.5}));
    let before = send(&mut a, json!({"type":"get_state"}));
    a.close(None).unwrap();
    drop(a);

    let mut b = connect(&server);
    let after = send(&mut b, json!({"type":"get_state"}));
    assert_eq!(before, after);
    assert_eq!(after["S"], 3.5);
    assert_eq!(after["estimator"], "new");
    assert_eq!(after["gain_rule"], "squared_wiener");
}

#[test]
fn full_mailbox_is_reported_and_state_kept() {
    let (tx, _rx) = mailbox(1);
    let (_ttx, trx) = telemetry_queue(4);
    let server = ControlServer::spawn("127.0.0.1:0", state(), tx, trx).unwrap();
    let mut ws = connect(&server);
    assert_eq!(send(&mut ws, json!({"type":"set_param","name":"S","value":2}))["type"], "ack");
    let r = send(&mut ws, json!({"type":"set_param","name":"S","value":4}));
    assert_eq!(r["type"], "error");
    assert_eq!(send(&mut ws, json!({"type":"get_state"}))["S"], 2.0);
}

#[test]
fn telemetry_fans_out_to_every_client() {
    let (tx, _rx) = mailbox(8);
    let (ttx, trx) = telemetry_queue(16);
    let server = ControlServer::spawn("127.0.0.1:0", state(), tx, trx).unwrap();
    let mut a = connect(&server);
    let mut b = connect(&server);
    // Both connections are registered once they have answered a request.
    send(&mut a, json!({"type":"get_state"}));
    send(&mut b, json!({"type":"get_state"}));

    let t = Telemetry { frame: 42, mean_coh: 0.5, ..Telemetry::default() };
    assert!(ttx.offer(&t));
    for ws in [&mut a, &mut b] {
        let v = next_telemetry(ws);
        assert_eq!(v["frame"], 42);
        assert_eq!(v["mean_coh"], 0.5);
        assert_eq!(v["band_gain"].as_array().unwrap().len(), 16);
    }
}

#[test]
fn slow_client_never_blocks_the_producer() {
    let (tx, _rx) = mailbox(8);
    let (ttx, trx) = telemetry_queue(8);
    let server = ControlServer::spawn("127.0.0.1:0", state(), tx, trx).unwrap();
    let mut ws = connect(&server);
    send(&mut ws, json!({"type":"get_state"}));
    let start = Instant::now();
    let mut dropped = 0;
    for frame in 0..5000 {
        if !ttx.offer(&Telemetry { frame, ..Telemetry::default() }) {
            dropped += 1;
        }
    }
    assert!(start.elapsed() < Duration::from_secs(1));
    assert!(dropped > 0);
    // Still answering after the burst.
    assert_eq!(send(&mut ws, json!({"type":"get_state"}))["type"], "state");
}

#[test]
fn binary_frames_are_rejected() {
    let (tx, _rx) = mailbox(8);
    let (_ttx, trx) = telemetry_queue(4);
    let server = ControlServer::spawn("127.0.0.1:0", state(), tx, trx).unwrap();
    let mut ws = connect(&server);
    ws.send(Message::Binary(vec![1, 2, 3])).unwrap();
    assert_eq!(reply(&mut ws)["type"], "error");
    server.shutdown();
}
