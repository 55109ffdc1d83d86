use futures::{SinkExt, StreamExt};
use std::net::SocketAddr;
use std::time::{Duration, Instant};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use forcestrat::demos::io::read_demo;
use forcestrat::sim::{step, SimConfig, SimState};
use forcestrat::teleop::{serve, ServerConfig, ServerMessage};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(max_sessions: usize) -> (SocketAddr, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServerConfig::new(SimConfig::default(), dir.path().to_path_buf());
    cfg.max_sessions = max_sessions;
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(serve("127.0.0.1:0".parse().unwrap(), cfg, move |a| {
        let _ = tx.send(a);
    }));
    (rx.await.unwrap(), dir)
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/session"))
        .await
        .unwrap()
        .0
}

async fn next_msg(ws: &mut Ws) -> ServerMessage {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .unwrap()
            .unwrap()
            .unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Skips state frames until a non-state message arrives.
async fn next_reply(ws: &mut Ws) -> ServerMessage {
    loop {
        let m = next_msg(ws).await;
        if !matches!(m, ServerMessage::State(_)) {
            return m;
        }
    }
}

async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::Text(text.into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn handshake_frames_and_recording() {
    let (addr, dir) = start(4).await;
    let mut ws = connect(addr).await;
    match next_msg(&mut ws).await {
        ServerMessage::Hello {
            version,
            wrench_limits,
            state_rate,
            geometry,
            ..
        } => {
            assert_eq!(version, 1);
            assert_eq!(
                geometry.hole_half_width,
                SimConfig::default().hole_half_width
            );
            assert_eq!(wrench_limits, SimConfig::default().wrench_limits);
            assert_eq!(state_rate, 30.0);
        }
        m => panic!("expected hello, got {m:?}"),
    }
    send(&mut ws, r#"{"type":"reset","seed":5}"#).await;
    assert!(
        matches!(next_reply(&mut ws).await, ServerMessage::Ack { request, .. } if request == "reset")
    );

    let t0 = Instant::now();
    let mut frames = 0;
    while t0.elapsed() < Duration::from_secs(2) {
        if matches!(next_msg(&mut ws).await, ServerMessage::State(_)) {
            frames += 1;
        }
    }
    let rate = frames as f64 / t0.elapsed().as_secs_f64();
    assert!((rate - 30.0).abs() <= 3.0, "state rate {rate}");

    send(&mut ws, r#"{"type":"start_recording"}"#).await;
    let t0 = Instant::now();
    assert!(matches!(
        next_reply(&mut ws).await,
        ServerMessage::Ack { .. }
    ));
    let end = t0 + Duration::from_secs(5);
    let mut k = 0;
    while Instant::now() + Duration::from_millis(50) < end {
        let a = (k as f64 * 0.3).sin();
        send(
            &mut ws,
            &format!(r#"{{"type":"wrench","axes":[{a},-0.5,{}]}}"#, a * 0.2),
        )
        .await;
        k += 1;
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    tokio::time::sleep_until(end.into()).await;
    send(&mut ws, r#"{"type":"stop_recording","success":true}"#).await;
    let (id, duration) = match next_reply(&mut ws).await {
        ServerMessage::Ack {
            request,
            detail,
            duration,
        } if request == "stop_recording" => (detail.unwrap(), duration.unwrap()),
        m => panic!("expected ack, got {m:?}"),
    };
    let demo = read_demo(&dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert!(demo.success);
    assert_eq!(demo.samples.last().unwrap().t, duration);
    // 5 s at 100 Hz; the closing sample is counted
    let n = demo.samples.len() as i64;
    assert!((n - 500).abs() <= 1, "{n} samples");

    let cfg = SimConfig::default();
    let first = demo.samples[0];
    let mut s = SimState {
        pose: first.pose,
        twist: first.twist,
        ..SimState::default()
    };
    for pair in demo.samples.windows(2) {
        s = step(&s, &pair[0].wrench, &cfg).unwrap();
        let p = pair[1].pose;
        assert!(
            (s.pose.x - p.x).abs() < 1e-9
                && (s.pose.z - p.z).abs() < 1e-9
                && (s.pose.theta - p.theta).abs() < 1e-9
        );
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn garbage_frames_keep_the_connection() {
    let (addr, _dir) = start(4).await;
    let mut ws = connect(addr).await;
    next_msg(&mut ws).await;
    let garbage = [
        "",
        "{",
        "null",
        "[1,2,3]",
        "\u{0}\u{1}\u{fffd}",
        r#"{"type":"wrench","axes":"x"}"#,
        r#"{"type":"fly"}"#,
    ];
    for g in garbage {
        send(&mut ws, g).await;
        assert!(
            matches!(next_reply(&mut ws).await, ServerMessage::Error { .. }),
            "no error for {g:?}"
        );
    }
    ws.send(Message::Binary(vec![0xff, 0x00, 0x13].into()))
        .await
        .unwrap();
    assert!(matches!(
        next_reply(&mut ws).await,
        ServerMessage::Error { .. }
    ));
    send(&mut ws, r#"{"type":"reset"}"#).await;
    assert!(matches!(
        next_reply(&mut ws).await,
        ServerMessage::Ack { .. }
    ));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_limit_is_enforced() {
    let (addr, _dir) = start(1).await;
    let mut first = connect(addr).await;
    next_msg(&mut first).await;
    let refused = connect_async(format!("ws://{addr}/session")).await;
    assert!(refused.is_err());
    drop(first);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let mut again = connect(addr).await;
    assert!(matches!(
        next_msg(&mut again).await,
        ServerMessage::Hello { .. }
    ));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serves_the_static_client() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(
        ui.path().join("index.html"),
        "<!doctype html><title>t</title>",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = ServerConfig::new(SimConfig::default(), out.path().to_path_buf());
    cfg.ui_dir = Some(ui.path().to_path_buf());
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(serve("127.0.0.1:0".parse().unwrap(), cfg, move |a| {
        let _ = tx.send(a);
    }));
    let addr = rx.await.unwrap();
    let get = |path: &'static str| async move {
        use tokio::io::{AsyncReadExt, AsyncWriteExt};
        let mut s = TcpStream::connect(addr).await.unwrap();
        s.write_all(
            format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes(),
        )
        .await
        .unwrap();
        let mut buf = String::new();
        s.read_to_string(&mut buf).await.unwrap();
        buf
    };
    let index = get("/").await;
    assert!(
        index.starts_with("HTTP/1.1 200")
            && index.contains("text/html")
            && index.ends_with("<title>t</title>")
    );
    assert!(get("/missing.js").await.starts_with("HTTP/1.1 404"));
    assert!(get("/../etc/passwd").await.starts_with("HTTP/1.1 404"));
}
