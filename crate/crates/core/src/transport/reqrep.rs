//! Blocking request/reply sessions. A sender may have at most one
//! unacknowledged frame in flight; the receiver replies with a single byte
//! once it has finished with the frame.

use std::io::{self, Read, Write};

use super::codec::{read_raw_frame, write_frame, FrameMessage, RawFrame};
use super::TransportError;

/// The acknowledgement byte.
pub const REP_BYTE: u8 = 0x01;

fn map_timeout(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::UnexpectedEof => TransportError::Closed,
        _ => TransportError::Io(e),
    }
}

/// Sending half of a session. Read timeouts configured on the underlying
/// stream surface as [`TransportError::Timeout`] from [`await_reply`](Self::await_reply).
pub struct ReqSender<S> {
    stream: S,
    awaiting: bool,
    last_seq: Option<u64>,
}

impl<S: Read + Write> ReqSender<S> {
    pub fn new(stream: S) -> Self {
        ReqSender {
            stream,
            awaiting: false,
            last_seq: None,
        }
    }

    /// Resumes a session whose previous connection carried frames up to `last_seq`.
    pub fn resume(stream: S, last_seq: Option<u64>) -> Self {
        ReqSender {
            stream,
            awaiting: false,
            last_seq,
        }
    }

    pub fn is_awaiting_reply(&self) -> bool {
        self.awaiting
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    pub fn send(&mut self, m: &FrameMessage) -> Result<(), TransportError> {
        if self.awaiting {
            return Err(TransportError::ProtocolViolation(
                "send while the previous frame is unacknowledged".into(),
            ));
        }
        if let Some(last) = self.last_seq {
            if m.header.seq <= last {
                return Err(TransportError::ProtocolViolation(format!(
                    "seq {} does not follow {last}",
                    m.header.seq
                )));
            }
        }
        write_frame(&mut self.stream, m)?;
        self.awaiting = true;
        self.last_seq = Some(m.header.seq);
        Ok(())
    }

    pub fn await_reply(&mut self) -> Result<(), TransportError> {
        if !self.awaiting {
            return Err(TransportError::ProtocolViolation("no frame awaiting a reply".into()));
        }
        let mut b = [0u8; 1];
        self.stream.read_exact(&mut b).map_err(map_timeout)?;
        if b[0] != REP_BYTE {
            return Err(TransportError::Malformed(format!("reply byte {:#04x}", b[0])));
        }
        self.awaiting = false;
        Ok(())
    }

    /// `send` followed by `await_reply`.
    pub fn request(&mut self, m: &FrameMessage) -> Result<(), TransportError> {
        self.send(m)?;
        self.await_reply()
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

/// Receiving half of a session.
pub struct RepReceiver<S> {
    stream: S,
    pending: bool,
}

impl<S: Read + Write> RepReceiver<S> {
    pub fn new(stream: S) -> Self {
        RepReceiver { stream, pending: false }
    }

    /// Next frame, or `Ok(None)` when the peer closed the session cleanly.
    pub fn recv(&mut self) -> Result<Option<RawFrame>, TransportError> {
        if self.pending {
            return Err(TransportError::ProtocolViolation(
                "previous frame has not been replied to".into(),
            ));
        }
        let frame = read_raw_frame(&mut self.stream)?;
        self.pending = frame.is_some();
        Ok(frame)
    }

    pub fn reply(&mut self) -> Result<(), TransportError> {
        if !self.pending {
            return Err(TransportError::ProtocolViolation("nothing to reply to".into()));
        }
        self.stream.write_all(&[REP_BYTE])?;
        self.stream.flush()?;
        self.pending = false;
        Ok(())
    }
}
