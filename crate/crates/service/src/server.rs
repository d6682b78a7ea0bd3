//! TCP transport: newline-delimited envelope frames.
//!
//! A single actor task owns the [`Hub`]; connection tasks only forward frames
//! to it and write back what it returns, so every mutation happens in one
//! total order.

use std::collections::HashMap;
use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

use crate::envelope::{Envelope, ErrorCode};
use crate::hub::{ConnId, Delivery, Hub, Stepping};

pub const DEFAULT_PORT: u16 = 9870;
pub const PORT_ENV: &str = "SPEARED_PORT";

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    /// Wall-clock period between simulator steps in realtime mode.
    pub tick: Duration,
    /// Topic events a connection may have queued before its subscription is
    /// dropped.
    pub queue_limit: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            tick: Duration::from_millis(20),
            queue_limit: 4096,
        }
    }
}

struct Outgoing {
    frame: String,
    counted: bool,
}

#[derive(Clone)]
struct Outbox {
    tx: mpsc::UnboundedSender<Outgoing>,
    pending: Arc<AtomicUsize>,
}

enum Msg {
    Open(ConnId, Outbox),
    Frame(ConnId, String),
    Close(ConnId),
}

/// Serves connections on `listener` until the returned future is dropped.
pub async fn serve(listener: TcpListener, hub: Hub, config: ServerConfig) -> io::Result<()> {
    let (tx, rx) = mpsc::unbounded_channel();
    tokio::spawn(actor(hub, rx, config));
    let mut next: ConnId = 0;
    loop {
        let (stream, peer) = listener.accept().await?;
        next += 1;
        log::debug!("connection {next} from {peer}");
        tokio::spawn(connection(next, stream, tx.clone()));
    }
}

async fn actor(mut hub: Hub, mut rx: mpsc::UnboundedReceiver<Msg>, config: ServerConfig) {
    let mut outboxes: HashMap<ConnId, Outbox> = HashMap::new();
    let mut timer = tokio::time::interval(config.tick);
    timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let realtime = hub.stepping() == Stepping::Realtime;
    loop {
        let deliveries = tokio::select! {
            msg = rx.recv() => match msg {
                None => return,
                Some(Msg::Open(conn, outbox)) => {
                    outboxes.insert(conn, outbox);
                    continue;
                }
                Some(Msg::Close(conn)) => {
                    outboxes.remove(&conn);
                    hub.disconnect(conn);
                    continue;
                }
                Some(Msg::Frame(conn, text)) => hub.handle_frame(conn, &text),
            },
            _ = timer.tick(), if realtime => hub.tick(config.tick.as_secs_f64()),
        };
        for d in deliveries {
            deliver(&mut hub, &outboxes, d, config.queue_limit);
        }
    }
}

fn deliver(hub: &mut Hub, outboxes: &HashMap<ConnId, Outbox>, d: Delivery, limit: usize) {
    let Some(outbox) = outboxes.get(&d.conn) else {
        return;
    };
    let Some(topic) = d.topic else {
        let _ = outbox.tx.send(Outgoing {
            frame: d.envelope.to_frame(),
            counted: false,
        });
        return;
    };
    if outbox.pending.load(Ordering::SeqCst) >= limit {
        if let Some(id) = hub.unsubscribe(d.conn, topic) {
            log::warn!("connection {} overflowed on {topic}", d.conn);
            let err = Envelope::error(
                id,
                topic,
                ErrorCode::Overflow,
                "subscriber queue overflow",
                Value::Null,
            );
            let _ = outbox.tx.send(Outgoing {
                frame: err.to_frame(),
                counted: false,
            });
        }
        return;
    }
    outbox.pending.fetch_add(1, Ordering::SeqCst);
    let _ = outbox.tx.send(Outgoing {
        frame: d.envelope.to_frame(),
        counted: true,
    });
}

async fn connection(conn: ConnId, stream: TcpStream, hub: mpsc::UnboundedSender<Msg>) {
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Outgoing>();
    let pending = Arc::new(AtomicUsize::new(0));
    let outbox = Outbox {
        tx,
        pending: pending.clone(),
    };
    if hub.send(Msg::Open(conn, outbox)).is_err() {
        return;
    }

    let writer = tokio::spawn(async move {
        while let Some(out) = rx.recv().await {
            let mut bytes = out.frame.into_bytes();
            bytes.push(b'\n');
            let written = write.write_all(&bytes).await;
            if out.counted {
                pending.fetch_sub(1, Ordering::SeqCst);
            }
            if written.is_err() {
                break;
            }
        }
    });

    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    loop {
        line.clear();
        match reader.read_until(b'\n', &mut line).await {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        let text = String::from_utf8_lossy(&line);
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        if hub.send(Msg::Frame(conn, text.to_string())).is_err() {
            break;
        }
    }
    let _ = hub.send(Msg::Close(conn));
    // The actor dropped its sender on close, so the writer drains and exits.
    let _ = writer.await;
}
