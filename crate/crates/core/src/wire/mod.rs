//! Framed local-socket transport: node hosts in other processes talk to
//! one router process through length-prefixed JSON frames.
//!
//! Frame layout (header is 10 bytes, bit-exact):
//!
//! ```text
//! magic "RMWW" | version u8 = 1 | kind u8 | length u32 LE | body (UTF-8 JSON)
//! ```
//!
//! Kinds: 1 = hello, 2 = command, 3 = reply, 4 = event. The hello body is
//! `{"node":"<name>","version":1}`. Commands carry a client-assigned token;
//! every command gets exactly one reply with the same token. The pull model
//! is kept over the wire: the server never pushes.

mod client;
mod frame;
mod protocol;
mod server;

use thiserror::Error;

pub use client::WireClient;
pub use frame::{
    encode_frame, Frame, FrameDecoder, FrameError, FrameKind, HEADER_LEN, MAGIC, MAX_BODY_LEN,
    VERSION,
};
pub use protocol::{CommandBody, CommandOp, HelloBody, HelloReply, ReplyBody, ReplyResult};
pub use server::{serve_router, WireServer};

/// Default router endpoint; override per call or with `STACKMW_ENDPOINT`.
pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:8590";

#[derive(Debug, Error)]
pub enum WireError {
    #[error("failed to bind `{endpoint}`: {source}")]
    Bind { endpoint: String, source: std::io::Error },
    #[error("failed to connect to `{endpoint}`: {source}")]
    Connect { endpoint: String, source: std::io::Error },
    #[error("i/o error: {0}")]
    Io(std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("handshake violation: {0}")]
    Handshake(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}
