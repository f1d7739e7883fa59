#![allow(dead_code)]

use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::time::{Duration, Instant};

use classcode_core::synth::{
    flicker_sequence, render_sequence, FlickerModel, Placement, SceneSpec,
};
use classcode_core::{Answer, GrayImage};
use classcode_service::server::{Server, ServerConfig, ServerHandle};
use classcode_service::ClockKind;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

pub type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

pub fn start_server(state_dir: Option<&Path>) -> ServerHandle {
    let config = ServerConfig {
        bind: SocketAddr::from(([127, 0, 0, 1], 0)),
        state_dir: state_dir.map(Path::to_path_buf),
        clock: ClockKind::Logical,
        ..ServerConfig::default()
    };
    Server::bind(&config).unwrap().spawn().unwrap()
}

pub fn connect(addr: SocketAddr) -> Ws {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    ws
}

/// Connects as the operator, waiting for a previous operator's connection
/// to be released.
pub fn connect_operator(addr: SocketAddr) -> Ws {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let mut ws = connect(addr);
        let reply = request(&mut ws, &json!({"type": "get_summary"}));
        if reply["code"] != "BUSY" {
            return ws;
        }
        assert!(Instant::now() < deadline, "operator slot never released");
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn recv(ws: &mut Ws) -> Value {
    loop {
        match ws.read().expect("reply") {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            Message::Ping(_) | Message::Pong(_) => continue,
            other => panic!("unexpected message {other:?}"),
        }
    }
}

pub fn request(ws: &mut Ws, msg: &Value) -> Value {
    ws.send(Message::text(msg.to_string())).unwrap();
    recv(ws)
}

pub fn send_frame(ws: &mut Ws, png: Vec<u8>) -> Value {
    ws.send(Message::binary(png)).unwrap();
    recv(ws)
}

pub fn close(mut ws: Ws) {
    let _ = ws.close(None);
    while ws.read().is_ok() {}
}

/// Card 2 held at answer B in a 1280x720 frame.
pub fn flicker_base() -> SceneSpec {
    let mut spec = SceneSpec::new(1280, 720);
    spec.placements.push(Placement::new(
        2,
        400.0,
        360.0,
        80.0,
        Answer::B.orientation().radians(),
    ));
    spec
}

/// 123 frames of card 2 with misread neighbours flickering beside it.
pub fn flicker_frames(seed: u64) -> Vec<GrayImage> {
    let base = flicker_base();
    let seq = flicker_sequence(&base, &FlickerModel::occlusion_flicker(seed), 123);
    render_sequence(&base, &seq).unwrap()
}
