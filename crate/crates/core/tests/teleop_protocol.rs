mod common;

use std::net::TcpStream;
use std::sync::Arc;

use sctune::config::{Config, TeleopConfig};
use sctune::controller::MpcParams;
use sctune::teleop::{spawn, TeleopContext};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn server(env: &str, lockstep: bool, tick_hz: f64) -> std::net::SocketAddr {
    let cfg = Config { environment: sctune::world::EnvironmentSpec::builtin(env).unwrap(), ..Config::default() };
    let ctx = Arc::new(TeleopContext {
        scene: cfg.scene().unwrap(),
        eval: cfg.eval.clone(),
        baseline: MpcParams::baseline(),
        optimized: MpcParams { np: 10, nc: 5, ..MpcParams::baseline() },
        teleop: TeleopConfig { lockstep, tick_hz, ..cfg.teleop },
    });
    spawn("127.0.0.1:0", ctx).unwrap().0
}

fn connect(addr: std::net::SocketAddr) -> Client {
    tungstenite::connect(format!("ws://{addr}")).unwrap().0
}

fn send(ws: &mut Client, text: &str) {
    ws.send(Message::text(text)).unwrap();
}

fn recv(ws: &mut Client) -> serde_json::Value {
    loop {
        if let Message::Text(t) = ws.read().unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[test]
fn state_frame_wire_format() {
    let addr = server("default", true, 20.0);
    let mut ws = connect(addr);
    send(&mut ws, r#"{"type":"cmd","vx":0.05,"vy":0.0,"omega":0.0}"#);
    let s = recv(&mut ws);
    assert_eq!(s["type"], "state");
    assert_eq!(s["t"], 0.05);
    assert_eq!(s["ee"].as_array().unwrap().len(), 3);
    assert_eq!(s["q"].as_array().unwrap().len(), 3);
    assert_eq!(s["spheres"].as_array().unwrap().len(), 12);
    assert!(s["min_sd"].as_f64().unwrap() > 0.0);
    assert!(s["feasible"].as_bool().unwrap());
}

#[test]
fn malformed_frames_are_reported_and_the_session_continues() {
    let addr = server("default", true, 20.0);
    let mut ws = connect(addr);
    send(&mut ws, "not json");
    assert_eq!(recv(&mut ws)["type"], "error");
    send(&mut ws, r#"{"type":"cmd","vx":"fast"}"#);
    assert_eq!(recv(&mut ws)["type"], "error");
    ws.send(Message::binary(vec![1u8, 2, 3])).unwrap();
    assert_eq!(recv(&mut ws)["type"], "error");
    send(&mut ws, r#"{"type":"episode","action":"end","condition":"baseline"}"#);
    assert_eq!(recv(&mut ws)["type"], "error");
    send(&mut ws, r#"{"type":"cmd","vx":0.0,"vy":0.0,"omega":0.0}"#);
    assert_eq!(recv(&mut ws)["type"], "state");
}

#[test]
fn oversized_command_is_clamped_and_acknowledged() {
    let addr = server("default", true, 20.0);
    let mut ws = connect(addr);
    send(&mut ws, r#"{"type":"cmd","vx":3.0,"vy":4.0,"omega":0.1}"#);
    let ack = recv(&mut ws);
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["clamped"], true);
    let vmax = Config::default().eval.controller.limits.ee_speed_max;
    let (vx, vy) = (ack["vx"].as_f64().unwrap(), ack["vy"].as_f64().unwrap());
    assert!((vx.hypot(vy) - vmax).abs() < 1e-12);
    assert!((vy / vx - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(recv(&mut ws)["type"], "state");
}

#[test]
fn episodes_report_metrics_and_survive_disconnects() {
    let addr = server("default", true, 20.0);
    let mut ws = connect(addr);
    send(&mut ws, r#"{"type":"episode","action":"start","condition":"optimized"}"#);
    send(&mut ws, r#"{"type":"episode","action":"start","condition":"baseline"}"#);
    assert_eq!(recv(&mut ws)["type"], "error");
    for _ in 0..10 {
        send(&mut ws, r#"{"type":"cmd","vx":0.1,"vy":0.05,"omega":0.0}"#);
        assert_eq!(recv(&mut ws)["type"], "state");
    }
    // Drop the connection mid-episode; a new client starts fresh.
    drop(ws);
    let mut ws = connect(addr);
    send(&mut ws, r#"{"type":"episode","action":"start","condition":"baseline"}"#);
    for _ in 0..10 {
        send(&mut ws, r#"{"type":"cmd","vx":0.1,"vy":0.05,"omega":0.0}"#);
        recv(&mut ws);
    }
    send(&mut ws, r#"{"type":"episode","action":"end","condition":"baseline"}"#);
    let m = recv(&mut ws);
    assert_eq!(m["type"], "metrics");
    for key in ["d_ob", "t_ob", "f_ps", "f_cc", "f_vs", "t_C", "objective"] {
        assert!(m[key].as_f64().unwrap().is_finite(), "{key}");
    }
}

#[test]
fn realtime_mode_broadcasts_without_input() {
    let addr = server("empty", false, 100.0);
    let mut ws = connect(addr);
    let first = recv(&mut ws);
    let mut last = first.clone();
    for _ in 0..5 {
        last = recv(&mut ws);
        assert_eq!(last["type"], "state");
    }
    assert!(last["t"].as_f64().unwrap() > first["t"].as_f64().unwrap());
    assert_eq!(last["q"], first["q"]);
}

#[test]
fn scripted_replay_matches_simulation() {
    let o = common::criteria::teleop_replay();
    assert!(o.passed, "{}", o.detail);
}
