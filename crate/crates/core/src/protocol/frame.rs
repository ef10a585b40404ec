//! CCP framing.
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0x43 0x46 ("CF")
//! 2       1     version, 0x01
//! 3       1     kind: 0 request, 1 response, 2 error
//! 4       1     method id
//! 5       4     payload length, big-endian u32, at most 16 MiB
//! 9       n     payload
//! ```

use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x43, 0x46];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 9;
pub const MAX_PAYLOAD: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Request = 0,
    Response = 1,
    Error = 2,
}

impl FrameKind {
    pub fn from_u8(b: u8) -> Option<FrameKind> {
        match b {
            0 => Some(FrameKind::Request),
            1 => Some(FrameKind::Response),
            2 => Some(FrameKind::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub kind: FrameKind,
    pub method: u8,
    pub payload: Vec<u8>,
}

/// A header that can never start a valid frame. The connection must be
/// closed after answering with an error frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad magic {0:#04x} {1:#04x}")]
    BadMagic(u8, u8),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown frame kind {0}")]
    BadKind(u8),
    #[error("payload of {0} bytes exceeds the 16 MiB limit")]
    Oversize(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// A whole frame occupying the first `consumed` bytes.
    Frame { frame: Frame, consumed: usize },
    /// At least this many more bytes are needed.
    NeedMore(usize),
}

impl Frame {
    pub fn new(kind: FrameKind, method: u8, payload: Vec<u8>) -> Self {
        Frame { kind, method, payload }
    }

    pub fn request(method: u8, payload: Vec<u8>) -> Self {
        Self::new(FrameKind::Request, method, payload)
    }

    pub fn response(method: u8, payload: Vec<u8>) -> Self {
        Self::new(FrameKind::Response, method, payload)
    }

    /// Appends the wire image to `out`.
    ///
    /// Panics if the payload exceeds [`MAX_PAYLOAD`]; callers build payloads
    /// and must respect the limit.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let len = u32::try_from(self.payload.len())
            .ok()
            .filter(|&n| n <= MAX_PAYLOAD)
            .expect("payload within the frame limit");
        out.reserve(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.push(self.method);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }
}

/// Decodes one frame from the front of `buf`. Header fields are checked as
/// soon as their bytes are present, so garbage is rejected early while a
/// valid prefix only ever asks for more input.
pub fn decode(buf: &[u8]) -> Result<Decoded, FrameError> {
    if let Some(&b0) = buf.first() {
        let b1 = buf.get(1).copied();
        if b0 != MAGIC[0] || b1.is_some_and(|b| b != MAGIC[1]) {
            return Err(FrameError::BadMagic(b0, b1.unwrap_or(0)));
        }
    }
    if let Some(&v) = buf.get(2) {
        if v != VERSION {
            return Err(FrameError::BadVersion(v));
        }
    }
    let kind = match buf.get(3) {
        Some(&k) => Some(FrameKind::from_u8(k).ok_or(FrameError::BadKind(k))?),
        None => None,
    };
    if buf.len() < HEADER_LEN {
        return Ok(Decoded::NeedMore(HEADER_LEN - buf.len()));
    }
    let len = u32::from_be_bytes(buf[5..9].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    let total = HEADER_LEN + len as usize;
    if buf.len() < total {
        return Ok(Decoded::NeedMore(total - buf.len()));
    }
    Ok(Decoded::Frame {
        frame: Frame {
            kind: kind.expect("header complete"),
            method: buf[4],
            payload: buf[HEADER_LEN..total].to_vec(),
        },
        consumed: total,
    })
}

/// Incremental decoder over a byte stream split at arbitrary points.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet returned as frames.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// The next complete frame, `None` if more input is needed.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, FrameError> {
        match decode(&self.buf)? {
            Decoded::Frame { frame, consumed } => {
                self.buf.drain(..consumed);
                Ok(Some(frame))
            }
            Decoded::NeedMore(_) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_request_wire_image() {
        let f = Frame::request(3, Vec::new());
        assert_eq!(f.encode(), [0x43, 0x46, 0x01, 0x00, 0x03, 0x00, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn partial_header_needs_more() {
        let bytes = Frame::response(0x10, vec![1, 2, 3]).encode();
        for cut in 0..bytes.len() {
            match decode(&bytes[..cut]).unwrap() {
                Decoded::NeedMore(n) => assert!(n >= 1),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        assert!(matches!(decode(&bytes).unwrap(), Decoded::Frame { consumed: 12, .. }));
    }

    #[test]
    fn header_errors() {
        assert_eq!(decode(&[0x43, 0x47]), Err(FrameError::BadMagic(0x43, 0x47)));
        assert_eq!(decode(&[0x00]), Err(FrameError::BadMagic(0x00, 0)));
        assert_eq!(decode(&[0x43, 0x46, 0x02]), Err(FrameError::BadVersion(2)));
        assert_eq!(decode(&[0x43, 0x46, 0x01, 0x07]), Err(FrameError::BadKind(7)));
        let mut big = vec![0x43, 0x46, 0x01, 0x00, 0x10];
        big.extend_from_slice(&(MAX_PAYLOAD + 1).to_be_bytes());
        assert_eq!(decode(&big), Err(FrameError::Oversize(MAX_PAYLOAD + 1)));
    }

    #[test]
    fn stream_split_bytewise() {
        let frames = [Frame::request(1, vec![]), Frame::response(2, vec![9; 40]), Frame::new(FrameKind::Error, 3, vec![0, 1])];
        let mut wire = Vec::new();
        for f in &frames {
            f.encode_into(&mut wire);
        }
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        for b in wire {
            dec.push(&[b]);
            while let Some(f) = dec.next_frame().unwrap() {
                got.push(f);
            }
        }
        assert_eq!(got, frames);
        assert_eq!(dec.buffered(), 0);
    }
}
