use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use holo_client::{ApiClient, ClientError, SessionClient};
use holo_core::api::{KappaRequest, ProjectRequest, ReportRequest, TwoSampleRequest};
use holo_core::analytics::{generate, SyntheticParams};
use holo_core::api::DatasetPayload;
use holo_core::config::EngineConfig;
use holo_core::geometry::Vec3;
use holo_core::protocol::{self, Body, Command, Event, Hello, Message, PROTOCOL_VERSION};
use holo_core::scenario::demo_deck;
use holo_core::session::replay;
use holo_core::tracking::{Pose, Role};
use holo_server::{RunningServer, ServerError, ServerOptions};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpSocket;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message as WsMessage;

const WAIT: Duration = Duration::from_secs(5);

async fn start() -> RunningServer {
    start_with(|o| o).await
}

async fn start_with(f: impl FnOnce(ServerOptions) -> ServerOptions) -> RunningServer {
    let opts = ServerOptions::new(EngineConfig::default(), demo_deck()).ephemeral();
    RunningServer::start(f(opts)).await.expect("server starts")
}

async fn until<T>(
    c: &mut SessionClient,
    mut pick: impl FnMut(&Message) -> Option<T>,
) -> T {
    timeout(WAIT, async {
        loop {
            let m = c.recv().await.expect("message");
            if let Some(t) = pick(&m) {
                return t;
            }
        }
    })
    .await
    .expect("timed out waiting for message")
}

#[tokio::test]
async fn tcp_handshake_command_and_snapshot() {
    let server = start().await;
    let (mut c, hello) = SessionClient::handshake(server.tcp_addr, "test", Some(0)).await.unwrap();
    assert_eq!(hello.version, PROTOCOL_VERSION);
    assert!(hello.clock_us.is_some());

    c.command(Command::NextSlide).await.unwrap();
    let idx = until(&mut c, |m| match &m.body {
        Body::Event(e) => match e.event {
            Event::SlideChanged { index } => Some(index),
            _ => None,
        },
        _ => None,
    })
    .await;
    assert_eq!(idx, 1);
    let (_, snap) = c.next_snapshot().await.unwrap();
    assert_eq!(snap.slide_index, 1);
    assert!(!snap.digest.is_empty());

    // Outgoing sequence numbers on one connection strictly increase.
    let mut last = 0;
    for _ in 0..10 {
        let m = c.recv().await.unwrap();
        assert!(m.seq > last);
        last = m.seq;
    }
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn malformed_lines_get_errors_and_connection_survives() {
    let server = start().await;
    let (mut c, _) = SessionClient::handshake(server.tcp_addr, "test", None).await.unwrap();
    c.write_raw(b"{not json\n").await.unwrap();
    let code = until(&mut c, |m| match &m.body {
        Body::Error(e) => Some(e.code.clone()),
        _ => None,
    })
    .await;
    assert_eq!(code, "malformed_frame");

    c.write_raw(b"{\"payload\":{},\"seq\":9,\"type\":\"teleport\"}\n").await.unwrap();
    let code = until(&mut c, |m| match &m.body {
        Body::Error(e) => Some(e.code.clone()),
        _ => None,
    })
    .await;
    assert_eq!(code, "unknown_type");

    c.write_raw(b"{\"payload\":{\"name\":\"set_teacher_eye\",\"eye\":{\"x\":\"a\",\"y\":0,\"z\":1}},\"seq\":10,\"type\":\"command\"}\n")
        .await
        .unwrap();
    let (code, path) = until(&mut c, |m| match &m.body {
        Body::Error(e) => Some((e.code.clone(), e.path.clone())),
        _ => None,
    })
    .await;
    assert_eq!(code, "schema_violation");
    assert!(path.unwrap().starts_with("payload"));

    c.command(Command::NextSlide).await.unwrap();
    let idx = until(&mut c, |m| match &m.body {
        Body::StateSnapshot(s) if s.slide_index == 1 => Some(s.slide_index),
        _ => None,
    })
    .await;
    assert_eq!(idx, 1);
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn version_mismatch_closes_connection() {
    let server = start().await;
    let mut c = SessionClient::connect(server.tcp_addr).await.unwrap();
    c.send(Body::Hello(Hello { version: PROTOCOL_VERSION + 1, client: None, clock_us: None })).await.unwrap();
    let code = until(&mut c, |m| match &m.body {
        Body::Error(e) => Some(e.code.clone()),
        _ => None,
    })
    .await;
    assert_eq!(code, "version_mismatch");
    let end = timeout(WAIT, async {
        loop {
            match c.recv().await {
                Ok(_) => continue,
                Err(e) => return e,
            }
        }
    })
    .await
    .unwrap();
    assert!(matches!(end, ClientError::Closed | ClientError::Io(_)), "{end}");
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn seq_gap_is_reported_and_regression_rejected() {
    let server = start().await;
    let (mut c, _) = SessionClient::handshake(server.tcp_addr, "test", None).await.unwrap();
    // The hello used seq 1.
    c.send_with_seq(5, Body::Command(Command::FreezeAfterimage)).await.unwrap();
    let gap = until(&mut c, |m| match &m.body {
        Body::Event(e) => match e.event {
            Event::SeqGap { expected, got } => Some((expected, got)),
            _ => None,
        },
        _ => None,
    })
    .await;
    assert_eq!(gap, (2, 5));

    c.send_with_seq(3, Body::Command(Command::NextSlide)).await.unwrap();
    let (code, path) = until(&mut c, |m| match &m.body {
        Body::Error(e) => Some((e.code.clone(), e.path.clone())),
        _ => None,
    })
    .await;
    assert_eq!(code, "seq_regressed");
    assert_eq!(path.as_deref(), Some("seq"));
    // The rejected command was not applied.
    let (_, snap) = c.next_snapshot().await.unwrap();
    assert_eq!(snap.slide_index, 0);
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn port_in_use_is_reported() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let opts = ServerOptions::new(EngineConfig::default(), demo_deck()).ephemeral();
    let err = RunningServer::start(ServerOptions { tcp_port: port, ..opts }).await.err().expect("bind fails");
    match err {
        ServerError::PortInUse { addr } => assert_eq!(addr.port(), port),
        other => panic!("unexpected {other}"),
    }
}

#[tokio::test]
async fn slow_client_does_not_stall_others() {
    let mut engine = EngineConfig::default();
    engine.tick_rate_hz = 1000;
    let server = start_with(|o| ServerOptions { engine, broadcast_capacity: 4, ..o }).await;
    // Never reads: its socket buffers fill and its queue overflows.
    let sock = TcpSocket::new_v4().unwrap();
    sock.set_recv_buffer_size(4096).unwrap();
    let mut slow = sock.connect(server.tcp_addr).await.unwrap();
    let hello = protocol::encode(&Message::new(
        1,
        Body::Hello(Hello { version: PROTOCOL_VERSION, client: Some("slow".into()), clock_us: None }),
    ))
    .unwrap();
    slow.write_all(&hello).await.unwrap();

    let (mut fast, _) = SessionClient::handshake(server.tcp_addr, "fast", None).await.unwrap();
    let (_, first) = fast.next_snapshot().await.unwrap();
    tokio::time::sleep(Duration::from_millis(1500)).await;
    // Drain what queued up while sleeping, then check frames are still fresh.
    let latest = server.hub().latest().unwrap().frame_id;
    assert!(latest > first.frame_id + 300, "tick stalled: {} -> {latest}", first.frame_id);
    let fid = until(&mut fast, |m| match &m.body {
        Body::StateSnapshot(s) if s.frame_id >= latest => Some(s.frame_id),
        _ => None,
    })
    .await;
    assert!(fid >= latest);

    // The slow peer sees strictly increasing numbers with gaps where it lost messages.
    let mut reader = BufReader::new(slow);
    let mut line = String::new();
    let mut last = 0;
    let mut gap = false;
    for _ in 0..100_000 {
        line.clear();
        timeout(WAIT, reader.read_line(&mut line)).await.unwrap().unwrap();
        let seq = protocol::decode(line.as_bytes()).unwrap().seq;
        assert!(seq > last, "{seq} after {last}");
        if seq > last + 1 {
            gap = true;
            break;
        }
        last = seq;
    }
    assert!(gap, "no loss observed after seq {last}");
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn websocket_bridge_carries_line_messages() {
    let server = start().await;
    let url = format!("ws://{}/ws", server.http_addr);
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    let hello = protocol::encode_str(&Message::new(
        1,
        Body::Hello(Hello { version: PROTOCOL_VERSION, client: Some("console".into()), clock_us: None }),
    ))
    .unwrap();
    ws.send(WsMessage::Text(hello.into())).await.unwrap();
    let next_cmd = protocol::encode_str(&Message::new(2, Body::Command(Command::NextSlide))).unwrap();
    ws.send(WsMessage::Text(next_cmd.into())).await.unwrap();

    let mut saw_hello = false;
    let got = timeout(WAIT, async {
        while let Some(frame) = ws.next().await {
            let WsMessage::Text(t) = frame.unwrap() else { continue };
            let msg = protocol::decode(t.as_bytes()).unwrap();
            match msg.body {
                Body::Hello(_) => saw_hello = true,
                Body::StateSnapshot(s) if s.slide_index == 1 => return s.slide_index,
                _ => {}
            }
        }
        panic!("socket closed");
    })
    .await
    .unwrap();
    assert!(saw_hello);
    assert_eq!(got, 1);
    // Same errors as the TCP transport.
    ws.send(WsMessage::Text("[]".into())).await.unwrap();
    let code = timeout(WAIT, async {
        while let Some(frame) = ws.next().await {
            let WsMessage::Text(t) = frame.unwrap() else { continue };
            if let Body::Error(e) = protocol::decode(t.as_bytes()).unwrap().body {
                return e.code;
            }
        }
        panic!("socket closed");
    })
    .await
    .unwrap();
    assert_eq!(code, "malformed_frame");
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn http_api_round_trip() {
    let server = start().await;
    let api = ApiClient::for_addr(server.http_addr);
    server.hub().wait_for_frame(1).await.unwrap();

    let h = api.health().await.unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.protocol_version, PROTOCOL_VERSION);

    let ack = api.command(&Command::NextSlide).await.unwrap();
    assert!(ack.events.iter().any(|e| matches!(e.event, Event::SlideChanged { index: 1 })));
    let snap = api.snapshot().await.unwrap();
    assert!(snap.frame_id >= ack.frame_id);
    assert_eq!(snap.slide_index, 1);

    let mut bad = Pose::new("hmd", Role::Head, 0, Vec3::new(0.0, 1.7, 1.0));
    bad.orientation.w = 2.0;
    match api.pose(&bad).await {
        Err(ClientError::Http { status, error }) => {
            assert_eq!(status, 422);
            assert_eq!(error.code, "schema_violation");
            assert_eq!(error.path.as_deref(), Some("payload.orientation"));
        }
        other => panic!("unexpected {other:?}"),
    }
    api.pose(&Pose::new("hmd", Role::Head, 0, Vec3::new(0.0, 1.7, 1.0))).await.unwrap();

    let p = api
        .project(&ProjectRequest { eye: Vec3::new(0.0, 1.2, 5.0), point: Vec3::new(1.0, 1.2, 2.5) })
        .await
        .unwrap();
    assert!((p.u - 2.0).abs() < 1e-12 && (p.v - 1.2).abs() < 1e-12);
    let degenerate = api.project(&ProjectRequest { eye: Vec3::new(0.0, 1.2, 5.0), point: Vec3::new(0.0, 0.0, 5.0) }).await;
    assert!(matches!(degenerate, Err(ClientError::Http { status: 422, .. })));

    let mw = api
        .mann_whitney(&TwoSampleRequest {
            a: vec![1.0, 2.0, 3.0],
            b: vec![4.0, 5.0, 6.0],
            method: Default::default(),
            variant: Default::default(),
        })
        .await
        .unwrap();
    assert_eq!(mw.statistic, 0.0);
    assert!((mw.p_value - 0.1).abs() < 1e-12);
    let k = api.kappa(&KappaRequest { confusion: vec![vec![10, 0], vec![0, 10]] }).await.unwrap();
    assert_eq!(k.statistic, 1.0);
    let empty = api
        .t_test(&TwoSampleRequest { a: vec![], b: vec![1.0], method: Default::default(), variant: Default::default() })
        .await;
    assert!(matches!(empty, Err(ClientError::Http { status: 422, .. })));

    let pair = generate(&SyntheticParams { audio_s: 2.0, ..SyntheticParams::default() }).unwrap();
    let req = ReportRequest {
        group_a: DatasetPayload::from_dataset(&pair.a),
        group_b: DatasetPayload::from_dataset(&pair.b),
        options: Default::default(),
    };
    let resp = api.report(&req).await.unwrap();
    assert_eq!(resp.report.rows.len(), 28);
    assert!(resp.report.row("close_posture").unwrap().significant(0.05));
    assert!(resp.text.contains("close_posture"));
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn event_log_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let log2 = log.clone();
    let server = start_with(move |o| ServerOptions { event_log: Some(log2), ..o }).await;
    let api = ApiClient::for_addr(server.http_addr);
    api.command(&Command::NextSlide).await.unwrap();
    api.command(&Command::RolePlay { active: true }).await.unwrap();
    api.command(&Command::ThrowBall { origin: None, direction: Vec3::new(0.0, 1.0, 1.0), speed: 3.0 })
        .await
        .unwrap();
    server.hub().wait_for_frame(server.hub().latest().unwrap().frame_id + 20).await.unwrap();
    server.shutdown().await.unwrap();

    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.ends_with('\n'));
    let summary = replay(EngineConfig::default(), demo_deck(), &text).unwrap();
    assert_eq!(summary.inputs, 3);
    assert!(summary.snapshots > 20);
}
