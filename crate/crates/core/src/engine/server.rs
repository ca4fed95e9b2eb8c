//! WebSocket control server.
//!
//! Runs entirely on the control side: it parses client messages, keeps the
//! authoritative parameter copy, forwards accepted changes through the
//! mailbox and fans telemetry out to every connected client.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender, TrySendError};
use tungstenite::{Message, WebSocket};

use crate::engine::control::{ControlSender, ControlState, EngineState, ServerMessage, TelemetryReceiver};
use crate::engine::telemetry::Telemetry;
use crate::error::Result;

const POLL: Duration = Duration::from_millis(10);
const CLIENT_QUEUE: usize = 64;

struct Shared {
    control: Mutex<ControlState>,
    mailbox: ControlSender,
    clients: Mutex<Vec<Sender<Telemetry>>>,
    stop: AtomicBool,
}

impl Shared {
    fn handle(&self, text: &str) -> ServerMessage {
        let mut control = self.control.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = control.clone();
        let (reply, cmd) = next.handle_text(text);
        match cmd {
            Some(cmd) if !self.mailbox.send(cmd) => ServerMessage::Error { msg: "engine mailbox full, retry".into() },
            _ => {
                *control = next;
                reply
            }
        }
    }
}

/// Handle to a running server. Dropping it shuts the server down.
pub struct ControlServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ControlServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn spawn(
        addr: impl ToSocketAddrs,
        initial: EngineState,
        mailbox: ControlSender,
        telemetry: TelemetryReceiver,
    ) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            control: Mutex::new(ControlState::new(initial)),
            mailbox,
            clients: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });

        let accept_shared = Arc::clone(&shared);
        let acceptor = thread::spawn(move || accept_loop(listener, accept_shared));
        let fan_shared = Arc::clone(&shared);
        let fanout = thread::spawn(move || fanout_loop(telemetry, fan_shared));
        log::info!("control server listening on ws://{addr}");
        Ok(Self { addr, shared, threads: vec![acceptor, fanout] })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Snapshot of the parameters as last accepted.
    pub fn state(&self) -> EngineState {
        *self.shared.control.lock().unwrap_or_else(|p| p.into_inner()).state()
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut connections: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let shared = Arc::clone(&shared);
                connections.push(thread::spawn(move || {
                    if let Err(e) = serve_client(stream, &shared) {
                        log::debug!("client {peer} closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        connections.retain(|c| !c.is_finished());
    }
    for c in connections {
        let _ = c.join();
    }
}

fn fanout_loop(telemetry: TelemetryReceiver, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::Relaxed) {
        match telemetry.recv_timeout(POLL) {
            Ok(t) => {
                let mut clients = shared.clients.lock().unwrap_or_else(|p| p.into_inner());
                clients.retain(|c| !matches!(c.try_send(t), Err(TrySendError::Disconnected(_))));
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => thread::sleep(POLL),
        }
    }
}

fn serve_client(stream: TcpStream, shared: &Shared) -> std::result::Result<(), Box<dyn std::error::Error>> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream)?;
    ws.get_ref().set_read_timeout(Some(POLL))?;

    let (tx, rx) = crossbeam_channel::bounded(CLIENT_QUEUE);
    shared.clients.lock().unwrap_or_else(|p| p.into_inner()).push(tx);

    while !shared.stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = shared.handle(&text);
                ws.send(Message::Text(reply.to_text()))?;
            }
            Ok(Message::Binary(_)) => {
                let reply = ServerMessage::Error { msg: "binary frames are not supported".into() };
                ws.send(Message::Text(reply.to_text()))?;
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        }
        forward_telemetry(&mut ws, &rx)?;
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

#[allow(clippy::result_large_err)]
fn forward_telemetry(ws: &mut WebSocket<TcpStream>, rx: &Receiver<Telemetry>) -> tungstenite::Result<()> {
    while let Ok(t) = rx.try_recv() {
        ws.send(Message::Text(ServerMessage::Telemetry(Box::new(t)).to_text()))?;
    }
    Ok(())
}
