//! Websocket front end for the simulator.
//!
//! One task owns the [`Simulator`] and ticks it at `tick_rate`. Connections
//! talk to it only through an ordered inbound queue, and every tick's
//! telemetry goes out through a broadcast of pre-encoded lines. The first
//! connection to send `claim_operator` may drive the drone; everyone else
//! watches.

use std::fs::File;
use std::future::Future;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use dronepick_core::haptics::encode_glove_frame;
use dronepick_core::protocol::{decode_inbound, encode_server, InboundKind, SeqFilter, ServerMsg};
use dronepick_core::session::SessionFile;
use dronepick_core::trial::write_trial_log;
use dronepick_core::{SimConfig, Simulator};
use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message;

const TELEMETRY_BUFFER: usize = 1024;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Session file written on shutdown.
    pub record: Option<PathBuf>,
    /// Trial answers are appended here as they arrive.
    pub trial_log: Option<PathBuf>,
    /// Device or file receiving one 8-byte glove frame per tick.
    pub glove: Option<PathBuf>,
    /// Stop after this many ticks.
    pub max_ticks: Option<u64>,
}

type ConnId = u64;

#[derive(Default)]
struct Roles {
    operator: Mutex<Option<ConnId>>,
}

impl Roles {
    /// Grants the role if it is free or already held by `conn`.
    fn claim(&self, conn: ConnId) -> bool {
        let mut op = self.operator.lock().expect("roles lock");
        match *op {
            None => {
                *op = Some(conn);
                true
            }
            Some(holder) => holder == conn,
        }
    }

    fn is_operator(&self, conn: ConnId) -> bool {
        *self.operator.lock().expect("roles lock") == Some(conn)
    }

    fn release(&self, conn: ConnId) {
        let mut op = self.operator.lock().expect("roles lock");
        if *op == Some(conn) {
            *op = None;
        }
    }
}

struct Shared {
    inbound: mpsc::UnboundedSender<InboundKind>,
    telemetry: broadcast::Sender<Arc<str>>,
    roles: Roles,
    next_conn: AtomicU64,
}

/// Serves until `shutdown` resolves or `max_ticks` is reached, then writes
/// the session file and returns the simulator.
pub async fn serve(
    listener: TcpListener,
    cfg: SimConfig,
    opts: ServeOptions,
    shutdown: impl Future<Output = ()>,
) -> Result<Simulator> {
    let sim = Simulator::new(cfg)?;
    let (inbound_tx, inbound_rx) = mpsc::unbounded_channel();
    let (telemetry_tx, _) = broadcast::channel(TELEMETRY_BUFFER);
    let shared = Arc::new(Shared {
        inbound: inbound_tx,
        telemetry: telemetry_tx,
        roles: Roles::default(),
        next_conn: AtomicU64::new(1),
    });

    let accept = tokio::spawn(accept_loop(listener, shared.clone()));
    let sim = run_loop(sim, inbound_rx, shared, &opts, shutdown).await?;
    accept.abort();

    if let Some(path) = &opts.record {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        SessionFile::from_simulator(&sim).write(BufWriter::new(file))?;
        log::info!("session written to {}", path.display());
    }
    Ok(sim)
}

async fn run_loop(
    mut sim: Simulator,
    mut inbound: mpsc::UnboundedReceiver<InboundKind>,
    shared: Arc<Shared>,
    opts: &ServeOptions,
    shutdown: impl Future<Output = ()>,
) -> Result<Simulator> {
    let mut glove = match &opts.glove {
        Some(p) => Some(File::create(p).with_context(|| format!("opening glove {}", p.display()))?),
        None => None,
    };
    let mut trial_log = match &opts.trial_log {
        Some(p) => Some(
            File::options()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening trial log {}", p.display()))?,
        ),
        None => None,
    };

    let mut interval = tokio::time::interval(Duration::from_secs_f64(sim.config().dt()));
    interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
    tokio::pin!(shutdown);

    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            _ = interval.tick() => {}
        }
        while let Ok(msg) = inbound.try_recv() {
            sim.submit(msg);
        }
        let (telemetry, errors) = sim.tick();
        for e in errors {
            log::warn!("tick {}: {e}", telemetry.tick);
        }
        // No subscribers is fine.
        let _ = shared.telemetry.send(encode_server(&ServerMsg::Telemetry(telemetry.clone())).into());

        if let Some(g) = glove.as_mut() {
            if let Err(e) = g.write_all(&encode_glove_frame(&telemetry.pattern)) {
                log::warn!("glove write failed, disabling: {e}");
                glove = None;
            }
        }
        let entries = sim.take_trial_entries();
        if let (Some(f), false) = (trial_log.as_mut(), entries.is_empty()) {
            write_trial_log(&mut *f, &entries)?;
            f.flush()?;
        }
        if opts.max_ticks.is_some_and(|n| telemetry.tick >= n) {
            break;
        }
    }
    Ok(sim)
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let conn = shared.next_conn.fetch_add(1, Ordering::Relaxed);
                log::info!("connection {conn} from {peer}");
                tokio::spawn(handle_connection(stream, conn, shared.clone()));
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

async fn handle_connection(stream: TcpStream, conn: ConnId, shared: Arc<Shared>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("connection {conn}: handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let mut telemetry = shared.telemetry.subscribe();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<ServerMsg>();

    let writer = tokio::spawn(async move {
        loop {
            let line: String = tokio::select! {
                reply = reply_rx.recv() => match reply {
                    Some(msg) => encode_server(&msg),
                    None => break,
                },
                t = telemetry.recv() => match t {
                    Ok(line) => line.to_string(),
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        log::warn!("connection {conn}: skipped {n} telemetry messages");
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(Message::Text(line)).await.is_err() {
                break;
            }
        }
    });

    let mut seq = SeqFilter::new();
    while let Some(frame) = source.next().await {
        let text = match frame {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let msg = match decode_inbound(&text) {
            Ok(m) => m,
            Err(e) => {
                let _ = reply_tx.send(ServerMsg::Error { message: e.to_string() });
                continue;
            }
        };
        if !seq.accept(msg.seq) {
            log::debug!("connection {conn}: dropped stale seq {} ({} so far)", msg.seq, seq.dropped());
            continue;
        }
        match msg.kind {
            InboundKind::ClaimOperator => {
                let operator = shared.roles.claim(conn);
                let _ = reply_tx.send(ServerMsg::Role { operator });
            }
            kind if shared.roles.is_operator(conn) => {
                let _ = shared.inbound.send(kind);
            }
            _ => {
                let _ = reply_tx.send(ServerMsg::Error { message: "operator role required".into() });
            }
        }
    }

    shared.roles.release(conn);
    drop(reply_tx);
    writer.abort();
    log::info!("connection {conn} closed");
}
