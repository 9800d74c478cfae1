//! Framed offset-agreement protocol between the two detection stations.
//!
//! Every frame is `length: u32 LE | type: u8 | payload`, where `length`
//! counts the type byte and the payload. Payload integers are little-endian.
//!
//! | type | message   | payload                                         |
//! |------|-----------|-------------------------------------------------|
//! | 1    | HELLO     | role u8 (0 = alice, 1 = bob), resolution u32    |
//! | 2    | HIST_REQ  | origin i64, bin_width u64, bin_count u32        |
//! | 3    | HIST_RESP | count u32 × bin_count                           |
//! | 4    | OFFSET    | offset i64 (ps)                                 |
//! | 5    | BYE       | (empty)                                         |

mod session;
mod transport;

use std::io::{self, Read, Write};

use thiserror::Error;

pub use session::{fold_histogram, run_sync, serve_sessions, Session, SyncParams};
pub use transport::{loopback_pair, LoopbackStream};

/// Frames longer than this are rejected before allocation.
pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("peer resolution {theirs} ps differs from local {ours} ps")]
    VersionMismatch { ours: u32, theirs: u32 },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("no correlation peak in the exchanged histograms")]
    NoPeak,
    #[error("invalid sync parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for SyncError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => SyncError::Timeout,
            _ => SyncError::Io(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    fn byte(self) -> u8 {
        match self {
            Role::Alice => 0,
            Role::Bob => 1,
        }
    }

    pub fn peer(self) -> Role {
        match self {
            Role::Alice => Role::Bob,
            Role::Bob => Role::Alice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { role: Role, resolution: u32 },
    HistReq { origin: i64, bin_width: u64, bin_count: u32 },
    HistResp { counts: Vec<u32> },
    Offset(i64),
    Bye,
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Hello { .. } => 1,
            Message::HistReq { .. } => 2,
            Message::HistResp { .. } => 3,
            Message::Offset(_) => 4,
            Message::Bye => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "HELLO",
            Message::HistReq { .. } => "HIST_REQ",
            Message::HistResp { .. } => "HIST_RESP",
            Message::Offset(_) => "OFFSET",
            Message::Bye => "BYE",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        match self {
            Message::Hello { role, resolution } => {
                payload.push(role.byte());
                payload.extend_from_slice(&resolution.to_le_bytes());
            }
            Message::HistReq { origin, bin_width, bin_count } => {
                payload.extend_from_slice(&origin.to_le_bytes());
                payload.extend_from_slice(&bin_width.to_le_bytes());
                payload.extend_from_slice(&bin_count.to_le_bytes());
            }
            Message::HistResp { counts } => {
                payload.reserve(4 * counts.len());
                for c in counts {
                    payload.extend_from_slice(&c.to_le_bytes());
                }
            }
            Message::Offset(v) => payload.extend_from_slice(&v.to_le_bytes()),
            Message::Bye => {}
        }
        let mut frame = Vec::with_capacity(5 + payload.len());
        frame.extend_from_slice(&((payload.len() + 1) as u32).to_le_bytes());
        frame.push(self.type_byte());
        frame.extend_from_slice(&payload);
        frame
    }

    /// Parses a frame body (type byte and payload).
    pub fn decode(body: &[u8]) -> Result<Message, SyncError> {
        let (&kind, payload) = body.split_first().ok_or_else(|| SyncError::ProtocolViolation("empty frame".into()))?;
        let bad_len = |name: &str| SyncError::ProtocolViolation(format!("{name} payload of {} bytes", payload.len()));
        let le8 = |b: &[u8]| -> [u8; 8] { b.try_into().expect("8 bytes") };
        match kind {
            1 => {
                if payload.len() != 5 {
                    return Err(bad_len("HELLO"));
                }
                let role = match payload[0] {
                    0 => Role::Alice,
                    1 => Role::Bob,
                    r => return Err(SyncError::ProtocolViolation(format!("unknown role {r}"))),
                };
                let resolution = u32::from_le_bytes(payload[1..5].try_into().expect("4 bytes"));
                Ok(Message::Hello { role, resolution })
            }
            2 => {
                if payload.len() != 20 {
                    return Err(bad_len("HIST_REQ"));
                }
                Ok(Message::HistReq {
                    origin: i64::from_le_bytes(le8(&payload[..8])),
                    bin_width: u64::from_le_bytes(le8(&payload[8..16])),
                    bin_count: u32::from_le_bytes(payload[16..20].try_into().expect("4 bytes")),
                })
            }
            3 => {
                if payload.len() % 4 != 0 {
                    return Err(bad_len("HIST_RESP"));
                }
                let counts =
                    payload.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                Ok(Message::HistResp { counts })
            }
            4 => {
                if payload.len() != 8 {
                    return Err(bad_len("OFFSET"));
                }
                Ok(Message::Offset(i64::from_le_bytes(le8(payload))))
            }
            5 => {
                if !payload.is_empty() {
                    return Err(bad_len("BYE"));
                }
                Ok(Message::Bye)
            }
            other => Err(SyncError::ProtocolViolation(format!("unknown message type {other}"))),
        }
    }
}

pub fn write_message(stream: &mut impl Write, msg: &Message) -> Result<(), SyncError> {
    stream.write_all(&msg.encode())?;
    stream.flush()?;
    Ok(())
}

pub fn read_message(stream: &mut impl Read) -> Result<Message, SyncError> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME {
        return Err(SyncError::ProtocolViolation(format!("frame length {len}")));
    }
    let mut body = vec![0u8; len as usize];
    stream.read_exact(&mut body)?;
    Message::decode(&body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_messages() -> Vec<Message> {
        vec![
            Message::Hello { role: Role::Bob, resolution: 4 },
            Message::HistReq { origin: -7, bin_width: 100, bin_count: 3 },
            Message::HistResp { counts: vec![1, 0, u32::MAX] },
            Message::Offset(-50_000),
            Message::Bye,
        ]
    }

    #[test]
    fn frames_round_trip() {
        for m in all_messages() {
            let bytes = m.encode();
            let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
            assert_eq!(len + 4, bytes.len());
            assert_eq!(bytes[4], m.type_byte());
            assert_eq!(read_message(&mut bytes.as_slice()).unwrap(), m);
        }
    }

    #[test]
    fn hello_layout() {
        let bytes = Message::Hello { role: Role::Alice, resolution: 1 }.encode();
        assert_eq!(bytes, [6, 0, 0, 0, 1, 0, 1, 0, 0, 0]);
        assert_eq!(Message::Bye.encode(), [1, 0, 0, 0, 5]);
    }

    #[test]
    fn malformed_frames() {
        assert!(matches!(Message::decode(&[9]), Err(SyncError::ProtocolViolation(_))));
        assert!(matches!(Message::decode(&[4, 1, 2]), Err(SyncError::ProtocolViolation(_))));
        assert!(matches!(Message::decode(&[1, 7, 0, 0, 0, 0]), Err(SyncError::ProtocolViolation(_))));
        assert!(matches!(read_message(&mut &[0u8, 0, 0, 0][..]), Err(SyncError::ProtocolViolation(_))));
        assert!(matches!(read_message(&mut &[5u8, 0, 0, 0, 4][..]), Err(SyncError::Io(_))));
    }
}
