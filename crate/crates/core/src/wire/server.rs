//! Wire server: accepts connections, performs the hello handshake, then
//! runs a command/reply loop against the router. One session thread per
//! connection; all sessions funnel into the router's ordered command
//! stream. When a connection drops, every participant it registered is
//! deregistered.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::router::{RouterConn, RouterError};

use super::frame::{encode_frame, Frame, FrameDecoder, FrameKind, VERSION};
use super::protocol::{CommandBody, CommandOp, HelloBody, HelloReply, ReplyBody, ReplyResult};
use super::WireError;

/// Handle to a running wire server. Dropping it shuts the server down.
pub struct WireServer {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    sessions: Arc<Mutex<Vec<TcpStream>>>,
}

impl WireServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stop accepting, close every live session, and join the acceptor.
    pub fn shutdown(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock the acceptor with a throwaway connection.
        let _ = TcpStream::connect(self.local_addr);
        for stream in self.sessions.lock().expect("session list poisoned").drain(..) {
            let _ = stream.shutdown(Shutdown::Both);
        }
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for WireServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl std::fmt::Debug for WireServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireServer")
            .field("local_addr", &self.local_addr)
            .finish_non_exhaustive()
    }
}

/// Bind `endpoint` and serve the router over framed JSON commands.
pub fn serve_router(conn: RouterConn, endpoint: &str) -> Result<WireServer, WireError> {
    let addr = resolve(endpoint)?;
    let listener = TcpListener::bind(addr)
        .map_err(|e| WireError::Bind { endpoint: endpoint.to_string(), source: e })?;
    let local_addr = listener.local_addr().map_err(WireError::Io)?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let sessions: Arc<Mutex<Vec<TcpStream>>> = Arc::new(Mutex::new(Vec::new()));

    let accept_shutdown = shutdown.clone();
    let accept_sessions = sessions.clone();
    let accept_thread = thread::Builder::new()
        .name("stackmw-wire-accept".to_string())
        .spawn(move || {
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                if let Ok(clone) = stream.try_clone() {
                    accept_sessions.lock().expect("session list poisoned").push(clone);
                }
                let conn = conn.clone();
                let _ = thread::Builder::new()
                    .name("stackmw-wire-session".to_string())
                    .spawn(move || run_session(stream, conn));
            }
        })
        .expect("spawn acceptor thread");

    Ok(WireServer {
        local_addr,
        shutdown,
        accept_thread: Some(accept_thread),
        sessions,
    })
}

pub(super) fn resolve(endpoint: &str) -> Result<SocketAddr, WireError> {
    endpoint
        .to_socket_addrs()
        .map_err(|e| WireError::Bind { endpoint: endpoint.to_string(), source: e })?
        .next()
        .ok_or_else(|| WireError::Bind {
            endpoint: endpoint.to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no address"),
        })
}

/// Tracks the gids a session registered so a dropped connection leaves no
/// orphaned participants behind.
struct Session {
    stream: TcpStream,
    conn: RouterConn,
    owned_gids: BTreeSet<u64>,
    greeted: bool,
}

fn run_session(stream: TcpStream, conn: RouterConn) {
    let mut session = Session { stream, conn, owned_gids: BTreeSet::new(), greeted: false };
    let _ = session_loop(&mut session);
    let _ = session.stream.shutdown(Shutdown::Both);
    for gid in std::mem::take(&mut session.owned_gids) {
        // The node may have deregistered some itself; stale gids are fine.
        let _ = session.conn.deregister(gid);
    }
}

fn session_loop(session: &mut Session) -> Result<(), WireError> {
    let mut decoder = FrameDecoder::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = session.stream.read(&mut buf).map_err(WireError::Io)?;
        if n == 0 {
            return Ok(());
        }
        let frames = decoder.push(&buf[..n])?;
        for frame in frames {
            handle_frame(session, frame)?;
        }
    }
}

fn handle_frame(session: &mut Session, frame: Frame) -> Result<(), WireError> {
    match frame.kind {
        FrameKind::Hello if !session.greeted => {
            let hello: HelloBody = serde_json::from_str(&frame.body)
                .map_err(|e| WireError::Handshake(e.to_string()))?;
            if hello.version != VERSION {
                let reply = HelloReply {
                    ok: false,
                    version: VERSION,
                    error: Some(format!("unsupported version {}", hello.version)),
                };
                send_frame(&mut session.stream, FrameKind::Hello, &reply)?;
                return Err(WireError::Handshake(format!(
                    "client requested version {}",
                    hello.version
                )));
            }
            session.greeted = true;
            let reply = HelloReply { ok: true, version: VERSION, error: None };
            send_frame(&mut session.stream, FrameKind::Hello, &reply)
        }
        FrameKind::Command if session.greeted => {
            let command: CommandBody = serde_json::from_str(&frame.body)
                .map_err(|e| WireError::Protocol(format!("malformed command: {e}")))?;
            let reply = execute(session, command);
            send_frame(&mut session.stream, FrameKind::Reply, &reply)
        }
        kind => Err(WireError::Protocol(format!(
            "unexpected {kind:?} frame {}",
            if session.greeted { "after handshake" } else { "before hello" }
        ))),
    }
}

fn execute(session: &mut Session, command: CommandBody) -> ReplyBody {
    let token = command.token;
    let outcome: Result<ReplyResult, RouterError> = match command.op {
        CommandOp::Register { decl } => session.conn.register(decl).map(|gid| {
            session.owned_gids.insert(gid);
            ReplyResult::Gid(gid)
        }),
        CommandOp::Deregister { gid } => session.conn.deregister(gid).map(|()| {
            session.owned_gids.remove(&gid);
            ReplyResult::Done
        }),
        CommandOp::Publish { envelope } => session
            .conn
            .publish(envelope)
            .map(|delivered| ReplyResult::Delivered(delivered as u64)),
        CommandOp::Fetch { gid, max } => session
            .conn
            .fetch(gid, max as usize)
            .map(ReplyResult::Envelopes),
        CommandOp::Query { filter } => session.conn.query(filter).map(ReplyResult::Records),
        CommandOp::Graph => session.conn.graph().map(ReplyResult::Graph),
    };
    match outcome {
        Ok(result) => ReplyBody::ok(token, result),
        Err(error) => ReplyBody::err(token, error),
    }
}

fn send_frame<T: serde::Serialize>(
    stream: &mut TcpStream,
    kind: FrameKind,
    body: &T,
) -> Result<(), WireError> {
    let json = serde_json::to_string(body).expect("protocol bodies serialize");
    let bytes = encode_frame(&Frame::new(kind, json))?;
    stream.write_all(&bytes).map_err(WireError::Io)
}
