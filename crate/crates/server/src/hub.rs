//! The single tick loop that owns the session, and the handle connection
//! tasks use to reach it.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use holo_core::api::CommandAck;
use holo_core::protocol::{Body, Command, Event, Snapshot};
use holo_core::session::{Input, Recorder, Session};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;

#[derive(Debug)]
pub(crate) enum Inbound {
    Input { input: Input, ack: Option<oneshot::Sender<CommandAck>> },
    Event(Event),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("session is shut down")]
pub struct HubClosed;

/// Server clock: microseconds since the session started.
#[derive(Debug, Clone, Copy)]
pub struct Clock(Instant);

impl Clock {
    pub fn now_us(&self) -> i64 {
        i64::try_from(self.0.elapsed().as_micros()).unwrap_or(i64::MAX)
    }
}

/// Cheap, cloneable access to the running session.
#[derive(Debug, Clone)]
pub struct HubHandle {
    inputs: mpsc::Sender<Inbound>,
    outbound: broadcast::Sender<Arc<Body>>,
    latest: watch::Receiver<Option<Arc<Snapshot>>>,
    clock: Clock,
    clients: Arc<AtomicUsize>,
}

impl HubHandle {
    pub fn now_us(&self) -> i64 {
        self.clock.now_us()
    }

    /// Queues an input for the next tick.
    pub async fn submit(&self, input: Input) -> Result<(), HubClosed> {
        self.inputs.send(Inbound::Input { input, ack: None }).await.map_err(|_| HubClosed)
    }

    /// Queues a command and waits for the tick that applies it.
    pub async fn command(&self, command: Command) -> Result<CommandAck, HubClosed> {
        let (tx, rx) = oneshot::channel();
        self.inputs
            .send(Inbound::Input { input: Input::Command(command), ack: Some(tx) })
            .await
            .map_err(|_| HubClosed)?;
        rx.await.map_err(|_| HubClosed)
    }

    /// Reports an event raised outside the session, such as a sequence gap.
    pub async fn report(&self, event: Event) -> Result<(), HubClosed> {
        self.inputs.send(Inbound::Event(event)).await.map_err(|_| HubClosed)
    }

    /// Snapshots and events as they are produced. A receiver that falls
    /// behind loses the oldest messages, never blocking the tick.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Body>> {
        self.outbound.subscribe()
    }

    pub fn latest(&self) -> Option<Arc<Snapshot>> {
        self.latest.borrow().clone()
    }

    /// Waits until a snapshot with `frame_id >= frame` exists.
    pub async fn wait_for_frame(&self, frame: u64) -> Result<Arc<Snapshot>, HubClosed> {
        let mut rx = self.latest.clone();
        let snap = rx
            .wait_for(|s| s.as_ref().is_some_and(|s| s.frame_id >= frame))
            .await
            .map_err(|_| HubClosed)?;
        Ok(snap.clone().expect("checked above"))
    }

    pub fn clients(&self) -> usize {
        self.clients.load(Ordering::Relaxed)
    }

    pub(crate) fn outbound_sender(&self) -> broadcast::Sender<Arc<Body>> {
        self.outbound.clone()
    }

    pub(crate) fn clock(&self) -> Clock {
        self.clock
    }

    pub(crate) fn client_guard(&self) -> ClientGuard {
        self.clients.fetch_add(1, Ordering::Relaxed);
        ClientGuard(self.clients.clone())
    }
}

/// Counts a connected client for as long as it lives.
pub(crate) struct ClientGuard(Arc<AtomicUsize>);

impl Drop for ClientGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::Relaxed);
    }
}

/// Sends log bytes to the writer thread so the tick never waits on disk.
pub(crate) struct ChannelWriter(pub(crate) std::sync::mpsc::Sender<Vec<u8>>);

impl Write for ChannelWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.send(buf.to_vec()).map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "log writer stopped"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub(crate) struct TickLoop {
    pub session: Session,
    pub inputs: mpsc::Receiver<Inbound>,
    pub outbound: broadcast::Sender<Arc<Body>>,
    pub latest: watch::Sender<Option<Arc<Snapshot>>>,
    pub clock: Clock,
    pub period: Duration,
    pub recorder: Option<Recorder<ChannelWriter>>,
}

pub(crate) fn channels(
    input_capacity: usize,
    broadcast_capacity: usize,
) -> (HubHandle, mpsc::Receiver<Inbound>, watch::Sender<Option<Arc<Snapshot>>>) {
    let (inputs, rx) = mpsc::channel(input_capacity.max(1));
    let (outbound, _) = broadcast::channel(broadcast_capacity.max(1));
    let (latest_tx, latest) = watch::channel(None);
    let handle = HubHandle {
        inputs,
        outbound,
        latest,
        clock: Clock(Instant::now()),
        clients: Arc::new(AtomicUsize::new(0)),
    };
    (handle, rx, latest_tx)
}

impl TickLoop {
    pub async fn run(mut self, mut shutdown: watch::Receiver<bool>) {
        let mut interval = tokio::time::interval(self.period);
        interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
        loop {
            tokio::select! {
                _ = interval.tick() => {}
                _ = shutdown.changed() => break,
            }
            self.tick();
        }
        if let Some(rec) = &mut self.recorder {
            if let Err(e) = rec.flush() {
                tracing::warn!(error = %e, "event log flush failed");
            }
        }
    }

    fn record(&mut self, f: impl FnOnce(&mut Recorder<ChannelWriter>) -> io::Result<()>) {
        if let Some(rec) = &mut self.recorder {
            if let Err(e) = f(rec) {
                tracing::warn!(error = %e, "event log write failed; logging disabled");
                self.recorder = None;
            }
        }
    }

    fn tick(&mut self) {
        let mut acks = Vec::new();
        while let Ok(msg) = self.inputs.try_recv() {
            match msg {
                Inbound::Input { input, ack } => {
                    self.record(|r| r.input(&input));
                    self.session.submit(input);
                    acks.extend(ack);
                }
                Inbound::Event(e) => self.session.report(e),
            }
        }
        let out = self.session.tick(self.clock.now_us());
        self.record(|r| r.tick(&out));
        let frame_id = self.session.frame_id();
        for ack in acks {
            let _ = ack.send(CommandAck { frame_id, events: out.events.clone() });
        }
        for e in out.events {
            let _ = self.outbound.send(Arc::new(Body::Event(e)));
        }
        if let Body::StateSnapshot(snap) = out.snapshot.body {
            let snap: Arc<Snapshot> = Arc::from(snap);
            self.latest.send_replace(Some(snap.clone()));
            let _ = self.outbound.send(Arc::new(Body::StateSnapshot(Box::new((*snap).clone()))));
        }
    }
}
