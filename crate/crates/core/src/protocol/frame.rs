//! Frame codec: `68 A0..A5 68 C L DATA[L] CS 16`.

use thiserror::Error;

pub const START: u8 = 0x68;
pub const END: u8 = 0x16;
pub const MAX_PAYLOAD: usize = 200;
/// Bytes around the payload: two starts, address, control, length,
/// checksum, end.
pub const OVERHEAD: usize = 12;
/// Address digits all nines: broadcast.
pub const BROADCAST: u64 = 999_999_999_999;
const MAX_ADDRESS: u64 = BROADCAST;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLong(usize),
    #[error("invalid BCD digits")]
    BadBcd,
    #[error("missing start byte")]
    BadStart,
    #[error("frame length does not match the length byte")]
    BadLength,
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("missing end byte")]
    BadEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Twelve decimal digits.
    pub address: u64,
    pub control: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(address: u64, control: u8, payload: Vec<u8>) -> Self {
        Self {
            address,
            control,
            payload,
        }
    }

    pub fn is_broadcast(&self) -> bool {
        self.address == BROADCAST
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        encode_frame(self.address, self.control, &self.payload)
    }
}

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |acc, &b| acc.wrapping_add(b))
}

/// Packs `value` into `len` BCD bytes, least significant first.
pub fn encode_bcd(mut value: u64, len: usize) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let lo = value % 10;
        let hi = (value / 10) % 10;
        out.push(((hi << 4) | lo) as u8);
        value /= 100;
    }
    if value != 0 {
        return Err(FrameError::BadBcd);
    }
    Ok(out)
}

pub fn decode_bcd(bytes: &[u8]) -> Result<u64, FrameError> {
    bytes.iter().rev().try_fold(0u64, |acc, &b| {
        let (hi, lo) = (b >> 4, b & 0x0F);
        if hi > 9 || lo > 9 {
            return Err(FrameError::BadBcd);
        }
        Ok(acc * 100 + u64::from(hi) * 10 + u64::from(lo))
    })
}

pub fn encode_frame(address: u64, control: u8, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLong(payload.len()));
    }
    if address > MAX_ADDRESS {
        return Err(FrameError::BadBcd);
    }
    let mut out = Vec::with_capacity(OVERHEAD + payload.len());
    out.push(START);
    out.extend(encode_bcd(address, 6)?);
    out.push(START);
    out.push(control);
    out.push(payload.len() as u8);
    out.extend_from_slice(payload);
    out.push(checksum(&out));
    out.push(END);
    Ok(out)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.first() != Some(&START) {
        return Err(FrameError::BadStart);
    }
    if bytes.len() < OVERHEAD {
        return Err(FrameError::BadLength);
    }
    if bytes[7] != START {
        return Err(FrameError::BadStart);
    }
    let len = usize::from(bytes[9]);
    if len > MAX_PAYLOAD || bytes.len() != OVERHEAD + len {
        return Err(FrameError::BadLength);
    }
    let body_end = 10 + len;
    if checksum(&bytes[..body_end]) != bytes[body_end] {
        return Err(FrameError::BadChecksum);
    }
    if bytes[body_end + 1] != END {
        return Err(FrameError::BadEnd);
    }
    Ok(Frame {
        address: decode_bcd(&bytes[1..7])?,
        control: bytes[8],
        payload: bytes[10..body_end].to_vec(),
    })
}

/// Incremental frame extractor for a byte stream. Garbage and broken frames
/// are skipped by rescanning from the next start byte.
#[derive(Debug, Default)]
pub struct FrameParser {
    buf: Vec<u8>,
}

impl FrameParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes held while waiting for the rest of a frame.
    pub fn pending(&self) -> &[u8] {
        &self.buf
    }

    /// Next complete frame or framing error; `None` when more input is
    /// needed.
    pub fn next_frame(&mut self) -> Option<Result<Frame, FrameError>> {
        match self.buf.iter().position(|&b| b == START) {
            Some(0) => {}
            Some(i) => {
                self.buf.drain(..i);
            }
            None => {
                self.buf.clear();
                return None;
            }
        }
        if self.buf.len() < 10 {
            return None;
        }
        if self.buf[7] != START {
            self.buf.remove(0);
            return Some(Err(FrameError::BadStart));
        }
        let len = usize::from(self.buf[9]);
        if len > MAX_PAYLOAD {
            self.buf.remove(0);
            return Some(Err(FrameError::BadLength));
        }
        let total = OVERHEAD + len;
        if self.buf.len() < total {
            return None;
        }
        let result = decode_frame(&self.buf[..total]);
        match result {
            Ok(_) => {
                self.buf.drain(..total);
            }
            Err(_) => {
                self.buf.remove(0);
            }
        }
        Some(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: [u8; 16] = [
        0x68, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x68, 0x11, 0x04, 0x00, 0x00, 0x01, 0x00, 0xE7, 0x16,
    ];

    #[test]
    fn reference_read_frame() {
        let bytes = encode_frame(1, 0x11, &[0x00, 0x00, 0x01, 0x00]).unwrap();
        assert_eq!(bytes, REFERENCE);
        let f = decode_frame(&bytes).unwrap();
        assert_eq!(f, Frame::new(1, 0x11, vec![0, 0, 1, 0]));
    }

    #[test]
    fn empty_payload_checksum() {
        let bytes = encode_frame(0, 0x00, &[]).unwrap();
        assert_eq!(bytes.len(), 12);
        assert_eq!(bytes[9], 0);
        assert_eq!(bytes[10], 0xD0);
    }

    #[test]
    fn bounds() {
        assert_eq!(encode_frame(1, 0x11, &[0; 201]), Err(FrameError::PayloadTooLong(201)));
        assert!(encode_frame(1, 0x11, &[0; 200]).is_ok());
        assert_eq!(encode_frame(1_000_000_000_000, 0x11, &[]), Err(FrameError::BadBcd));
    }

    #[test]
    fn distinct_errors() {
        let mut b = REFERENCE;
        b[0] = 0x00;
        assert_eq!(decode_frame(&b), Err(FrameError::BadStart));
        assert_eq!(decode_frame(&REFERENCE[..15]), Err(FrameError::BadLength));
        let mut b = REFERENCE;
        b[14] ^= 1;
        assert_eq!(decode_frame(&b), Err(FrameError::BadChecksum));
        let mut b = REFERENCE;
        b[15] = 0x17;
        assert_eq!(decode_frame(&b), Err(FrameError::BadEnd));
    }

    #[test]
    fn bcd_round_trip() {
        assert_eq!(encode_bcd(115, 4).unwrap(), vec![0x15, 0x01, 0x00, 0x00]);
        assert_eq!(decode_bcd(&[0x15, 0x01, 0x00, 0x00]).unwrap(), 115);
        assert_eq!(encode_bcd(100, 1), Err(FrameError::BadBcd));
        assert_eq!(decode_bcd(&[0x1A]), Err(FrameError::BadBcd));
    }

    #[test]
    fn parser_resyncs_after_garbage() {
        let mut p = FrameParser::new();
        p.push(&[0xFF, 0x00, 0x68, 0x12]);
        p.push(&REFERENCE);
        let mut frames = Vec::new();
        while let Some(r) = p.next_frame() {
            frames.push(r);
        }
        assert_eq!(frames.last().unwrap().as_ref().unwrap().control, 0x11);
        assert!(p.pending().is_empty());
    }

    #[test]
    fn parser_keeps_truncated_tail() {
        let mut p = FrameParser::new();
        p.push(&REFERENCE[..12]);
        assert!(p.next_frame().is_none());
        assert_eq!(p.pending().len(), 12);
        p.push(&REFERENCE[12..]);
        assert!(p.next_frame().unwrap().is_ok());
    }
}
