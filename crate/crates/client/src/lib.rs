//! Clients for the session server.
//!
//! [`SessionClient`] speaks the line protocol over TCP; [`ApiClient`] calls
//! the HTTP/JSON API.

use std::io;
use std::net::SocketAddr;

use holo_core::api::{
    CommandAck, Health, KappaRequest, ProjectRequest, ReportRequest, ReportResponse, TwoSampleRequest,
};
use holo_core::analytics::StatResult;
use holo_core::geometry::ScreenPoint;
use holo_core::protocol::{self, Body, Command, ErrorPayload, Hello, Message, ProtocolError, Snapshot, PROTOCOL_VERSION};
use holo_core::tracking::Pose;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("connection closed by server")]
    Closed,
    #[error("server error {}: {}", .0.code, .0.message)]
    Server(ErrorPayload),
    #[error("http {status}: {} ({})", error.message, error.code)]
    Http { status: u16, error: ErrorPayload },
    #[error("http transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

/// Line-protocol connection. Outgoing sequence numbers start at 1.
pub struct SessionClient {
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
    next_seq: u64,
    line: Vec<u8>,
}

impl SessionClient {
    pub async fn connect(addr: SocketAddr) -> Result<SessionClient, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        let _ = stream.set_nodelay(true);
        let (rd, wr) = stream.into_split();
        Ok(SessionClient { reader: BufReader::new(rd), writer: wr, next_seq: 1, line: Vec::new() })
    }

    /// Connects and exchanges hellos; returns the server's hello.
    pub async fn handshake(
        addr: SocketAddr,
        name: &str,
        clock_us: Option<i64>,
    ) -> Result<(SessionClient, Hello), ClientError> {
        let mut c = SessionClient::connect(addr).await?;
        c.send(Body::Hello(Hello { version: PROTOCOL_VERSION, client: Some(name.into()), clock_us })).await?;
        loop {
            match c.recv().await?.body {
                Body::Hello(h) => return Ok((c, h)),
                Body::Error(e) => return Err(ClientError::Server(e)),
                _ => continue,
            }
        }
    }

    /// Sends `body` with the next sequence number and returns that number.
    pub async fn send(&mut self, body: Body) -> Result<u64, ClientError> {
        let seq = self.next_seq;
        self.send_with_seq(seq, body).await?;
        Ok(seq)
    }

    /// Sends with an explicit sequence number; later sends continue after it.
    pub async fn send_with_seq(&mut self, seq: u64, body: Body) -> Result<(), ClientError> {
        let line = protocol::encode(&Message::new(seq, body))?;
        self.write_raw(&line).await?;
        self.next_seq = self.next_seq.max(seq + 1);
        Ok(())
    }

    /// Writes bytes as-is, for tests of malformed input.
    pub async fn write_raw(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.writer.write_all(bytes).await?;
        Ok(())
    }

    pub async fn command(&mut self, c: Command) -> Result<u64, ClientError> {
        self.send(Body::Command(c)).await
    }

    pub async fn pose(&mut self, p: Pose) -> Result<u64, ClientError> {
        self.send(Body::PoseUpdate(p)).await
    }

    /// Next message from the server.
    pub async fn recv(&mut self) -> Result<Message, ClientError> {
        self.line.clear();
        let n = self.reader.read_until(b'\n', &mut self.line).await?;
        if n == 0 {
            return Err(ClientError::Closed);
        }
        Ok(protocol::decode(&self.line)?)
    }

    /// Reads until a snapshot arrives, skipping everything else.
    pub async fn next_snapshot(&mut self) -> Result<(u64, Snapshot), ClientError> {
        loop {
            let msg = self.recv().await?;
            if let Body::StateSnapshot(s) = msg.body {
                return Ok((msg.seq, *s));
            }
        }
    }

    pub async fn close(mut self) -> Result<(), ClientError> {
        self.writer.shutdown().await?;
        Ok(())
    }
}

/// HTTP/JSON API client.
#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    /// `base` is like `http://127.0.0.1:7341`.
    pub fn new(base: impl Into<String>) -> ApiClient {
        ApiClient { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn for_addr(addr: SocketAddr) -> ApiClient {
        ApiClient::new(format!("http://{addr}"))
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let error = serde_json::from_str(&text).unwrap_or(ErrorPayload { code: "http".into(), message: text, path: None });
        Err(ClientError::Http { status: status.as_u16(), error })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(resp).await
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn snapshot(&self) -> Result<Snapshot, ClientError> {
        self.get("/api/snapshot").await
    }

    pub async fn command(&self, c: &Command) -> Result<CommandAck, ClientError> {
        self.post("/api/command", c).await
    }

    pub async fn pose(&self, p: &Pose) -> Result<(), ClientError> {
        let _: serde_json::Value = self.post("/api/pose", p).await?;
        Ok(())
    }

    pub async fn project(&self, req: &ProjectRequest) -> Result<ScreenPoint, ClientError> {
        self.post("/api/geometry/project", req).await
    }

    pub async fn mann_whitney(&self, req: &TwoSampleRequest) -> Result<StatResult, ClientError> {
        self.post("/api/analytics/mann_whitney", req).await
    }

    pub async fn t_test(&self, req: &TwoSampleRequest) -> Result<StatResult, ClientError> {
        self.post("/api/analytics/t_test", req).await
    }

    pub async fn kappa(&self, req: &KappaRequest) -> Result<StatResult, ClientError> {
        self.post("/api/analytics/kappa", req).await
    }

    pub async fn report(&self, req: &ReportRequest) -> Result<ReportResponse, ClientError> {
        self.post("/api/analytics/report", req).await
    }
}
