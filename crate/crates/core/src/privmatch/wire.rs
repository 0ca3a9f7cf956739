//! Bit-exact framing for protocol messages.
//!
//! ```text
//! frame   = length:u32be kind:u8 payload[length]
//! payload = count:u16be element[count]
//! element = len:u16be magnitude[len]      (big-endian, no leading zeros)
//! ```
//!
//! `length` counts payload bytes only.

use std::io::{self, Read, Write};

use num_bigint::BigUint;
use thiserror::Error;

/// Largest payload accepted on either side.
pub const MAX_PAYLOAD: usize = 16 << 20;
pub const MAX_ELEMENTS: usize = u16::MAX as usize;

#[derive(Debug, Error)]
pub enum FramingError {
    #[error("truncated frame: needed {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgKind {
    Hello = 1,
    EncA = 2,
    DoubleEncA = 3,
    EncB = 4,
    Result = 5,
    Abort = 6,
}

impl MsgKind {
    pub const ALL: [MsgKind; 6] = [
        MsgKind::Hello,
        MsgKind::EncA,
        MsgKind::DoubleEncA,
        MsgKind::EncB,
        MsgKind::Result,
        MsgKind::Abort,
    ];

    pub fn from_byte(b: u8) -> Result<Self, FramingError> {
        MsgKind::ALL
            .into_iter()
            .find(|k| *k as u8 == b)
            .ok_or(FramingError::UnknownKind(b))
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::Hello => "HELLO",
            MsgKind::EncA => "ENC_A",
            MsgKind::DoubleEncA => "DOUBLE_ENC_A",
            MsgKind::EncB => "ENC_B",
            MsgKind::Result => "RESULT",
            MsgKind::Abort => "ABORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MsgKind,
    pub payload: Vec<BigUint>,
}

impl WireMessage {
    pub fn new(kind: MsgKind, payload: Vec<BigUint>) -> Self {
        WireMessage { kind, payload }
    }

    pub fn abort() -> Self {
        WireMessage::new(MsgKind::Abort, Vec::new())
    }
}

fn magnitude(x: &BigUint) -> Vec<u8> {
    if x == &BigUint::ZERO {
        Vec::new()
    } else {
        x.to_bytes_be()
    }
}

pub fn encode_msg(m: &WireMessage) -> Result<Vec<u8>, FramingError> {
    if m.payload.len() > MAX_ELEMENTS {
        return Err(FramingError::Oversize(m.payload.len()));
    }
    let mut payload = Vec::new();
    payload.extend_from_slice(&(m.payload.len() as u16).to_be_bytes());
    for x in &m.payload {
        let mag = magnitude(x);
        if mag.len() > u16::MAX as usize {
            return Err(FramingError::Oversize(mag.len()));
        }
        payload.extend_from_slice(&(mag.len() as u16).to_be_bytes());
        payload.extend_from_slice(&mag);
    }
    if payload.len() > MAX_PAYLOAD {
        return Err(FramingError::Oversize(payload.len()));
    }
    let mut frame = Vec::with_capacity(5 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(m.kind as u8);
    frame.extend_from_slice(&payload);
    Ok(frame)
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], FramingError> {
    if buf.len() < n {
        return Err(FramingError::Truncated {
            needed: n,
            have: buf.len(),
        });
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn decode_payload(kind: MsgKind, mut body: &[u8]) -> Result<WireMessage, FramingError> {
    let count = u16::from_be_bytes(take(&mut body, 2)?.try_into().expect("2 bytes")) as usize;
    let mut payload = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_be_bytes(take(&mut body, 2)?.try_into().expect("2 bytes")) as usize;
        let mag = take(&mut body, len)?;
        if mag.first() == Some(&0) {
            return Err(FramingError::Malformed(
                "element has a leading zero byte".into(),
            ));
        }
        payload.push(BigUint::from_bytes_be(mag));
    }
    if !body.is_empty() {
        return Err(FramingError::Malformed(format!(
            "{} trailing payload bytes",
            body.len()
        )));
    }
    Ok(WireMessage { kind, payload })
}

/// Decodes exactly one complete frame.
pub fn decode_msg(bytes: &[u8]) -> Result<WireMessage, FramingError> {
    let mut buf = bytes;
    let header = take(&mut buf, 5)?;
    let len = u32::from_be_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(FramingError::Oversize(len));
    }
    let kind = MsgKind::from_byte(header[4])?;
    if buf.len() < len {
        return Err(FramingError::Truncated {
            needed: len,
            have: buf.len(),
        });
    }
    if buf.len() > len {
        return Err(FramingError::Malformed(format!(
            "{} bytes after the frame",
            buf.len() - len
        )));
    }
    decode_payload(kind, buf)
}

/// Reads one frame. A clean end of stream before the first header byte
/// yields `Ok(None)`; raw frame bytes are returned alongside the message.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<(WireMessage, Vec<u8>)>, FramingError> {
    let mut header = [0u8; 5];
    let mut filled = 0;
    while filled < header.len() {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(FramingError::Truncated {
                    needed: 5,
                    have: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(FramingError::Oversize(len));
    }
    let kind = MsgKind::from_byte(header[4])?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FramingError::Truncated {
            needed: len,
            have: 0,
        },
        _ => e.into(),
    })?;
    let msg = decode_payload(kind, &body)?;
    let mut raw = header.to_vec();
    raw.extend_from_slice(&body);
    Ok(Some((msg, raw)))
}

pub fn write_frame<W: Write>(w: &mut W, m: &WireMessage) -> Result<Vec<u8>, FramingError> {
    let frame = encode_msg(m)?;
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame)
}
