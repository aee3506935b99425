//! Wire client: a [`RouterApi`] implementation that forwards commands to a
//! remote router over one framed connection.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Mutex;
use std::time::Duration;

use crate::router::{
    Envelope, EntityFilter, GraphSummary, ParticipantDecl, ParticipantRecord, RouterApi,
    RouterError,
};

use super::frame::{encode_frame, Frame, FrameDecoder, FrameKind};
use super::protocol::{CommandBody, CommandOp, HelloBody, HelloReply, ReplyBody, ReplyResult};
use super::server::resolve;
use super::WireError;

/// Replies are expected well before this; a silent peer means the router
/// process is gone.
const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

struct ClientInner {
    stream: TcpStream,
    decoder: FrameDecoder,
    next_token: u64,
}

/// Synchronous client session: one in-flight command at a time, replies
/// matched by correlation token.
pub struct WireClient {
    node: String,
    inner: Mutex<ClientInner>,
}

impl WireClient {
    /// Connect and perform the hello handshake.
    pub fn connect(endpoint: &str, node_name: &str) -> Result<Self, WireError> {
        let addr = resolve(endpoint)?;
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))
            .map_err(|e| WireError::Connect { endpoint: endpoint.to_string(), source: e })?;
        stream.set_read_timeout(Some(REPLY_TIMEOUT)).map_err(WireError::Io)?;
        stream.set_nodelay(true).map_err(WireError::Io)?;

        let mut inner = ClientInner { stream, decoder: FrameDecoder::new(), next_token: 1 };
        let hello = HelloBody::new(node_name);
        write_frame(&mut inner.stream, FrameKind::Hello, &hello)?;
        let frame = read_frame(&mut inner)?;
        if frame.kind != FrameKind::Hello {
            return Err(WireError::Handshake(format!(
                "expected hello reply, got {:?}",
                frame.kind
            )));
        }
        let reply: HelloReply = serde_json::from_str(&frame.body)
            .map_err(|e| WireError::Handshake(e.to_string()))?;
        if !reply.ok {
            return Err(WireError::Handshake(
                reply.error.unwrap_or_else(|| "hello rejected".to_string()),
            ));
        }
        Ok(WireClient { node: node_name.to_string(), inner: Mutex::new(inner) })
    }

    pub fn node_name(&self) -> &str {
        &self.node
    }

    fn request(&self, op: CommandOp) -> Result<ReplyResult, RouterError> {
        let mut inner = self.inner.lock().expect("wire client poisoned");
        let token = inner.next_token;
        inner.next_token += 1;

        let body = CommandBody { token, op };
        write_frame(&mut inner.stream, FrameKind::Command, &body)
            .map_err(|e| RouterError::Unavailable(e.to_string()))?;

        let frame = read_frame(&mut inner).map_err(|e| RouterError::Unavailable(e.to_string()))?;
        if frame.kind != FrameKind::Reply {
            return Err(RouterError::Unavailable(format!(
                "expected reply frame, got {:?}",
                frame.kind
            )));
        }
        let reply: ReplyBody = serde_json::from_str(&frame.body)
            .map_err(|e| RouterError::Unavailable(format!("malformed reply: {e}")))?;
        if reply.token != token {
            return Err(RouterError::Unavailable(format!(
                "reply token {} does not match command token {token}",
                reply.token
            )));
        }
        if reply.ok {
            reply
                .result
                .ok_or_else(|| RouterError::Unavailable("reply missing result".to_string()))
        } else {
            Err(reply
                .error
                .unwrap_or_else(|| RouterError::Unavailable("reply missing error".to_string())))
        }
    }
}

fn write_frame<T: serde::Serialize>(
    stream: &mut TcpStream,
    kind: FrameKind,
    body: &T,
) -> Result<(), WireError> {
    let json = serde_json::to_string(body).expect("protocol bodies serialize");
    let bytes = encode_frame(&Frame::new(kind, json))?;
    stream.write_all(&bytes).map_err(WireError::Io)
}

fn read_frame(inner: &mut ClientInner) -> Result<Frame, WireError> {
    let mut buf = [0u8; 8192];
    loop {
        let n = inner.stream.read(&mut buf).map_err(WireError::Io)?;
        if n == 0 {
            return Err(WireError::Protocol("connection closed".to_string()));
        }
        let mut frames = inner.decoder.push(&buf[..n])?;
        if let Some(frame) = frames.pop() {
            if !frames.is_empty() {
                // One command in flight means at most one pending reply.
                return Err(WireError::Protocol("unsolicited extra frames".to_string()));
            }
            return Ok(frame);
        }
    }
}

impl RouterApi for WireClient {
    fn register(&self, decl: ParticipantDecl) -> Result<u64, RouterError> {
        match self.request(CommandOp::Register { decl })? {
            ReplyResult::Gid(gid) => Ok(gid),
            other => Err(unexpected(other)),
        }
    }

    fn deregister(&self, gid: u64) -> Result<(), RouterError> {
        match self.request(CommandOp::Deregister { gid })? {
            ReplyResult::Done => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    fn publish(&self, envelope: Envelope) -> Result<usize, RouterError> {
        match self.request(CommandOp::Publish { envelope })? {
            ReplyResult::Delivered(n) => Ok(n as usize),
            other => Err(unexpected(other)),
        }
    }

    fn fetch(&self, gid: u64, max: usize) -> Result<Vec<Envelope>, RouterError> {
        match self.request(CommandOp::Fetch { gid, max: max as u64 })? {
            ReplyResult::Envelopes(envelopes) => Ok(envelopes),
            other => Err(unexpected(other)),
        }
    }

    fn query(&self, filter: EntityFilter) -> Result<Vec<ParticipantRecord>, RouterError> {
        match self.request(CommandOp::Query { filter })? {
            ReplyResult::Records(records) => Ok(records),
            other => Err(unexpected(other)),
        }
    }

    fn graph(&self) -> Result<GraphSummary, RouterError> {
        match self.request(CommandOp::Graph)? {
            ReplyResult::Graph(graph) => Ok(graph),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(result: ReplyResult) -> RouterError {
    RouterError::Unavailable(format!("reply result does not match command: {result:?}"))
}
