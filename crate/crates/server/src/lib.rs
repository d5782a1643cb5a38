//! Session server.
//!
//! One tick task owns the [`Session`]. Line-protocol peers connect over TCP;
//! browsers and tools use the HTTP/JSON API or the `/ws` WebSocket, which
//! carries the same line messages as text frames.

mod conn;
mod http;
mod hub;
mod tcp;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use holo_core::config::EngineConfig;
use holo_core::scene::SlideDeck;
use holo_core::session::{Recorder, Session};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

pub use conn::MAX_LINE;
pub use http::MAX_BODY;
pub use hub::{Clock, HubClosed, HubHandle};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("address {addr} is already in use")]
    PortInUse { addr: SocketAddr },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("event log {}: {source}", path.display())]
    EventLog { path: PathBuf, source: io::Error },
    #[error("server task failed: {0}")]
    Task(String),
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub engine: EngineConfig,
    pub deck: SlideDeck,
    pub bind: IpAddr,
    /// Line-protocol port; 0 picks a free one.
    pub tcp_port: u16,
    /// HTTP/WebSocket port; 0 picks a free one.
    pub http_port: u16,
    /// Records every applied input, event and snapshot for later replay.
    pub event_log: Option<PathBuf>,
    /// Messages buffered per subscriber before the oldest are dropped.
    pub broadcast_capacity: usize,
    pub input_capacity: usize,
}

impl ServerOptions {
    pub fn new(engine: EngineConfig, deck: SlideDeck) -> ServerOptions {
        ServerOptions {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            tcp_port: engine.port,
            http_port: engine.http_port(),
            engine,
            deck,
            event_log: None,
            broadcast_capacity: 256,
            input_capacity: 4096,
        }
    }

    /// Both listeners on free ports.
    pub fn ephemeral(mut self) -> ServerOptions {
        self.tcp_port = 0;
        self.http_port = 0;
        self
    }
}

async fn bind(ip: IpAddr, port: u16) -> Result<TcpListener, ServerError> {
    let addr = SocketAddr::new(ip, port);
    TcpListener::bind(addr).await.map_err(|source| match source.kind() {
        io::ErrorKind::AddrInUse => ServerError::PortInUse { addr },
        _ => ServerError::Bind { addr, source },
    })
}

fn spawn_log_writer(
    path: PathBuf,
) -> Result<(std::sync::mpsc::Sender<Vec<u8>>, thread::JoinHandle<io::Result<()>>), ServerError> {
    let file = File::create(&path).map_err(|source| ServerError::EventLog { path: path.clone(), source })?;
    let (tx, rx) = std::sync::mpsc::channel::<Vec<u8>>();
    let handle = thread::Builder::new()
        .name("event-log".into())
        .spawn(move || {
            let mut out = BufWriter::new(file);
            for chunk in rx {
                out.write_all(&chunk)?;
            }
            out.flush()
        })
        .map_err(|source| ServerError::EventLog { path, source })?;
    Ok((tx, handle))
}

/// A started server. Dropping it without [`RunningServer::shutdown`] leaves
/// the tasks running until the runtime stops.
pub struct RunningServer {
    pub tcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    hub: HubHandle,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    log_thread: Option<(PathBuf, thread::JoinHandle<io::Result<()>>)>,
}

impl RunningServer {
    /// Binds both listeners and starts ticking.
    pub async fn start(opts: ServerOptions) -> Result<RunningServer, ServerError> {
        let tcp = bind(opts.bind, opts.tcp_port).await?;
        let http = bind(opts.bind, opts.http_port).await?;
        let tcp_addr = tcp.local_addr().map_err(|source| ServerError::Bind { addr: SocketAddr::new(opts.bind, opts.tcp_port), source })?;
        let http_addr = http.local_addr().map_err(|source| ServerError::Bind { addr: SocketAddr::new(opts.bind, opts.http_port), source })?;

        let (recorder, log_thread) = match &opts.event_log {
            Some(path) => {
                let (tx, handle) = spawn_log_writer(path.clone())?;
                (Some(Recorder::new(hub::ChannelWriter(tx))), Some((path.clone(), handle)))
            }
            None => (None, None),
        };

        let (handle, inputs, latest) = hub::channels(opts.input_capacity, opts.broadcast_capacity);
        let (shutdown, shutdown_rx) = watch::channel(false);
        let period = Duration::from_micros(opts.engine.tick_period_us().max(1) as u64);
        let screen = opts.engine.screen;
        let tick = hub::TickLoop {
            session: Session::new(opts.engine, opts.deck),
            inputs,
            outbound: handle.outbound_sender(),
            latest,
            clock: handle.clock(),
            period,
            recorder,
        };

        let mut tasks = Vec::new();
        tasks.push(tokio::spawn(tick.run(shutdown_rx.clone())));
        tasks.push(tokio::spawn(tcp::serve(tcp, handle.clone(), shutdown_rx.clone())));

        let app = http::router(http::AppState { hub: handle.clone(), screen, shutdown: shutdown_rx.clone() });
        let mut http_shutdown = shutdown_rx;
        tasks.push(tokio::spawn(async move {
            let graceful = async move {
                let _ = http_shutdown.changed().await;
            };
            if let Err(e) = axum::serve(http, app).with_graceful_shutdown(graceful).await {
                tracing::error!(error = %e, "http server failed");
            }
        }));

        tracing::info!(%tcp_addr, %http_addr, "session server listening");
        Ok(RunningServer { tcp_addr, http_addr, hub: handle, shutdown, tasks, log_thread })
    }

    pub fn hub(&self) -> &HubHandle {
        &self.hub
    }

    /// Stops accepting, closes every connection, and flushes the event log.
    pub async fn shutdown(mut self) -> Result<(), ServerError> {
        let _ = self.shutdown.send(true);
        for t in self.tasks.drain(..) {
            t.await.map_err(|e| ServerError::Task(e.to_string()))?;
        }
        if let Some((path, handle)) = self.log_thread.take() {
            let res = tokio::task::spawn_blocking(move || handle.join())
                .await
                .map_err(|e| ServerError::Task(e.to_string()))?
                .map_err(|_| ServerError::Task("event log writer panicked".into()))?;
            res.map_err(|source| ServerError::EventLog { path, source })?;
        }
        tracing::info!("session server stopped");
        Ok(())
    }

    /// Runs until `signal` resolves, then shuts down.
    pub async fn run_until(self, signal: impl std::future::Future<Output = ()>) -> Result<(), ServerError> {
        signal.await;
        self.shutdown().await
    }
}
