use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::TransportError;
use crate::pose;

/// Leading bytes of every frame on the wire.
pub const MAGIC: &[u8; 4] = b"GTK1";
pub const WIRE_VERSION: u32 = 1;
pub const MAX_CAMERA_ID_BYTES: usize = 64;
pub const MAX_HEADER_BYTES: usize = 64 * 1024;
pub const MAX_PAYLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Jpeg,
    Raw8,
    Kp17,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub camera_id: String,
    pub seq: u64,
    pub ts_us: u64,
    pub width: u32,
    pub height: u32,
    pub encoding: Encoding,
}

/// JSON form of the header. Field order here is the order on the wire.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHeader {
    v: u32,
    cam: String,
    seq: u64,
    ts_us: u64,
    w: u32,
    h: u32,
    enc: Encoding,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMessage {
    pub header: FrameHeader,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    /// Builds a message, checking the payload against its declared encoding.
    pub fn new(header: FrameHeader, payload: Vec<u8>) -> Result<Self, TransportError> {
        let m = FrameMessage { header, payload };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        let h = &self.header;
        if h.camera_id.is_empty() || h.camera_id.len() > MAX_CAMERA_ID_BYTES {
            return Err(TransportError::Malformed(format!(
                "camera id must be 1..={MAX_CAMERA_ID_BYTES} bytes, got {}",
                h.camera_id.len()
            )));
        }
        if self.payload.len() > MAX_PAYLOAD_BYTES {
            return Err(TransportError::Malformed(format!("payload of {} bytes", self.payload.len())));
        }
        match h.encoding {
            Encoding::Raw8 => {
                let expected = h.width as u64 * h.height as u64;
                if self.payload.len() as u64 != expected {
                    return Err(TransportError::Malformed(format!(
                        "raw8 {}x{} needs {expected} bytes, got {}",
                        h.width,
                        h.height,
                        self.payload.len()
                    )));
                }
            }
            Encoding::Kp17 => {
                let n = match self.payload.get(..2) {
                    Some(c) => u16::from_le_bytes([c[0], c[1]]) as usize,
                    None => return Err(TransportError::Malformed("kp17 payload lacks a count".into())),
                };
                if self.payload.len() != pose::kp17_payload_len(n) {
                    return Err(TransportError::Malformed(format!(
                        "kp17 count {n} inconsistent with {} payload bytes",
                        self.payload.len()
                    )));
                }
            }
            Encoding::Jpeg => {}
        }
        Ok(())
    }
}

fn header_json(h: &FrameHeader) -> Vec<u8> {
    let wire = WireHeader {
        v: WIRE_VERSION,
        cam: h.camera_id.clone(),
        seq: h.seq,
        ts_us: h.ts_us,
        w: h.width,
        h: h.height,
        enc: h.encoding,
    };
    serde_json::to_vec(&wire).expect("header serialization is infallible")
}

pub fn encode_frame(m: &FrameMessage) -> Result<Vec<u8>, TransportError> {
    m.validate()?;
    let header = header_json(&m.header);
    let mut out = Vec::with_capacity(12 + header.len() + m.payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_be_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(m.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&m.payload);
    Ok(out)
}

/// Decodes exactly one frame occupying the whole buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<FrameMessage, TransportError> {
    let mut cursor = bytes;
    let raw = read_raw_frame(&mut cursor)?
        .ok_or_else(|| TransportError::Malformed("empty buffer".into()))?;
    if !cursor.is_empty() {
        return Err(TransportError::Malformed(format!("{} trailing bytes", cursor.len())));
    }
    raw.parse()
}

/// A frame whose framing is intact but whose header and payload have not been validated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub header: Vec<u8>,
    pub payload: Vec<u8>,
}

impl RawFrame {
    pub fn parse(self) -> Result<FrameMessage, TransportError> {
        let wire: WireHeader = serde_json::from_slice(&self.header)
            .map_err(|e| TransportError::Malformed(format!("header: {e}")))?;
        if wire.v != WIRE_VERSION {
            return Err(TransportError::Malformed(format!("unsupported version {}", wire.v)));
        }
        FrameMessage::new(
            FrameHeader {
                camera_id: wire.cam,
                seq: wire.seq,
                ts_us: wire.ts_us,
                width: wire.w,
                height: wire.h,
                encoding: wire.enc,
            },
            self.payload,
        )
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), TransportError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TransportError::Malformed(format!("truncated {what}")),
        _ => TransportError::from(e),
    })
}

fn read_len<R: Read>(r: &mut R, what: &str, max: usize) -> Result<usize, TransportError> {
    let mut b = [0u8; 4];
    read_full(r, &mut b, what)?;
    let n = u32::from_be_bytes(b) as usize;
    if n > max {
        return Err(TransportError::Malformed(format!("{what} of {n} bytes exceeds {max}")));
    }
    Ok(n)
}

/// Reads one frame from a byte stream. Returns `Ok(None)` on a clean end of
/// stream before the first magic byte.
pub fn read_raw_frame<R: Read>(r: &mut R) -> Result<Option<RawFrame>, TransportError> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < magic.len() {
        match r.read(&mut magic[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Malformed("truncated magic".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    if &magic != MAGIC {
        return Err(TransportError::Malformed(format!("bad magic {magic:02x?}")));
    }
    let hlen = read_len(r, "header length", MAX_HEADER_BYTES)?;
    let mut header = vec![0u8; hlen];
    read_full(r, &mut header, "header")?;
    let plen = read_len(r, "payload length", MAX_PAYLOAD_BYTES)?;
    let mut payload = vec![0u8; plen];
    read_full(r, &mut payload, "payload")?;
    Ok(Some(RawFrame { header, payload }))
}

pub fn write_frame<W: Write>(w: &mut W, m: &FrameMessage) -> Result<(), TransportError> {
    let bytes = encode_frame(m)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
