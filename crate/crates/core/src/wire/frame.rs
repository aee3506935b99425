//! Framed wire format: `RMWW` magic, version byte, kind byte, uint32
//! little-endian body length, then exactly that many bytes of UTF-8 JSON.

use thiserror::Error;

/// Frame magic, always `RMWW`.
pub const MAGIC: [u8; 4] = *b"RMWW";
/// Protocol version carried in every frame header.
pub const VERSION: u8 = 1;
/// Header size in bytes: magic + version + kind + length.
pub const HEADER_LEN: usize = 10;
/// Maximum body length: 16 MiB.
pub const MAX_BODY_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Hello = 1,
    Command = 2,
    Reply = 3,
    Event = 4,
}

impl FrameKind {
    fn from_byte(byte: u8) -> Option<Self> {
        Some(match byte {
            1 => FrameKind::Hello,
            2 => FrameKind::Command,
            3 => FrameKind::Reply,
            4 => FrameKind::Event,
            _ => return None,
        })
    }
}

/// One wire frame: a kind plus a UTF-8 JSON body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub body: String,
}

impl Frame {
    pub fn new(kind: FrameKind, body: impl Into<String>) -> Self {
        Frame { kind, body: body.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("body of {len} bytes exceeds the {MAX_BODY_LEN}-byte frame limit")]
    Oversize { len: usize },
    #[error("bad magic {found:02x?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("frame body is not valid utf-8")]
    InvalidBody,
}

/// Encode a frame: 10-byte header followed by the body, bit-exact.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let body = frame.body.as_bytes();
    if body.len() > MAX_BODY_LEN {
        return Err(FrameError::Oversize { len: body.len() });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame.kind as u8);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    Ok(out)
}

/// Incremental frame decoder. Feed arbitrary chunks; complete frames come
/// out, partial input is retained as residual. Any error condemns the
/// stream: the decoder refuses further input.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    condemned: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes buffered but not yet decodable as a complete frame.
    pub fn residual_len(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Result<Vec<Frame>, FrameError> {
        assert!(!self.condemned, "decoder used after a protocol error");
        self.buf.extend_from_slice(bytes);

        let mut frames = Vec::new();
        loop {
            match self.try_decode_one() {
                Ok(Some(frame)) => frames.push(frame),
                Ok(None) => return Ok(frames),
                Err(err) => {
                    self.condemned = true;
                    return Err(err);
                }
            }
        }
    }

    fn try_decode_one(&mut self) -> Result<Option<Frame>, FrameError> {
        // Validate eagerly so a bad stream is condemned as soon as the
        // offending header bytes arrive.
        if self.buf.len() >= 4 {
            let mut found = [0u8; 4];
            found.copy_from_slice(&self.buf[..4]);
            if found != MAGIC {
                return Err(FrameError::BadMagic { found });
            }
        }
        if self.buf.len() >= 5 && self.buf[4] != VERSION {
            return Err(FrameError::UnsupportedVersion(self.buf[4]));
        }
        let kind = if self.buf.len() >= 6 {
            match FrameKind::from_byte(self.buf[5]) {
                Some(kind) => Some(kind),
                None => return Err(FrameError::UnknownKind(self.buf[5])),
            }
        } else {
            None
        };
        if self.buf.len() < HEADER_LEN {
            return Ok(None);
        }

        let len =
            u32::from_le_bytes(self.buf[6..10].try_into().expect("4 bytes")) as usize;
        if len > MAX_BODY_LEN {
            return Err(FrameError::Oversize { len });
        }
        if self.buf.len() < HEADER_LEN + len {
            return Ok(None);
        }

        let body_bytes: Vec<u8> = self.buf[HEADER_LEN..HEADER_LEN + len].to_vec();
        self.buf.drain(..HEADER_LEN + len);
        let body = String::from_utf8(body_bytes).map_err(|_| FrameError::InvalidBody)?;
        Ok(Some(Frame {
            kind: kind.expect("kind validated above"),
            body,
        }))
    }
}
