//! Line-protocol TCP listener.

use std::io;

use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};

use crate::conn::{self, Connection, Outbox, Outgoing, MAX_LINE};
use crate::hub::HubHandle;

pub(crate) async fn serve(listener: TcpListener, hub: HubHandle, mut shutdown: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    tracing::debug!(%peer, "tcp client connected");
                    let hub = hub.clone();
                    let shutdown = shutdown.clone();
                    tokio::spawn(async move {
                        if let Err(e) = handle(stream, hub, shutdown).await {
                            tracing::debug!(%peer, error = %e, "tcp client error");
                        }
                        tracing::debug!(%peer, "tcp client disconnected");
                    });
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
        }
    }
}

/// Reads one `\n`-terminated line into `buf`, keeping at most `max + 2`
/// bytes of it so an oversized line is still recognisable as one. Returns `None` at end of stream.
pub(crate) async fn read_line_limited<R: AsyncBufRead + Unpin>(
    reader: &mut R,
    buf: &mut Vec<u8>,
    max: usize,
) -> io::Result<Option<()>> {
    buf.clear();
    let mut overflow = false;
    loop {
        let chunk = reader.fill_buf().await?;
        if chunk.is_empty() {
            return Ok(if buf.is_empty() && !overflow { None } else { Some(()) });
        }
        let (take, done) = match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        let room = (max + 2).saturating_sub(buf.len());
        if take > room {
            overflow = true;
        }
        buf.extend_from_slice(&chunk[..take.min(room)]);
        reader.consume(take);
        if done {
            return Ok(Some(()));
        }
    }
}

async fn handle(stream: TcpStream, hub: HubHandle, shutdown: watch::Receiver<bool>) -> io::Result<()> {
    let _guard = hub.client_guard();
    let _ = stream.set_nodelay(true);
    let (rd, mut wr) = stream.into_split();
    let (reply_tx, mut reply_rx) = mpsc::channel(64);
    let mut feed = hub.subscribe();

    let mut writer_shutdown = shutdown.clone();
    let writer = tokio::spawn(async move {
        let mut outbox = Outbox::new();
        while let Outgoing::Line(mut line) =
            conn::next_outgoing(&mut outbox, &mut reply_rx, &mut feed, &mut writer_shutdown).await
        {
            line.push('\n');
            if wr.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = wr.shutdown().await;
    });

    let mut reader = BufReader::new(rd);
    let mut conn = Connection::new(hub);
    let mut buf = Vec::new();
    let mut shutdown = shutdown;
    let result = loop {
        let read = tokio::select! {
            _ = shutdown.changed() => break Ok(()),
            r = read_line_limited(&mut reader, &mut buf, MAX_LINE) => r,
        };
        match read {
            Ok(Some(())) => {}
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        }
        let Ok(outcome) = conn.handle_line(&buf).await else { break Ok(()) };
        for body in outcome.replies {
            if reply_tx.send(body).await.is_err() {
                break;
            }
        }
        if outcome.close {
            break Ok(());
        }
    };
    drop(reply_tx);
    let _ = writer.await;
    result
}
