//! Remote meter reading: a byte-exact frame codec, the request handler that
//! maps commands and data identifiers onto [`crate::registers::MeterState`],
//! and a TCP server and client.
//!
//! Payload bytes are plain BCD (no per-byte offset). Multi-byte values are
//! least significant byte first.

mod frame;
mod net;
mod service;

pub use frame::{
    checksum, decode_bcd, decode_frame, encode_bcd, encode_frame, Frame, FrameError, FrameParser, BROADCAST,
    MAX_PAYLOAD, OVERHEAD,
};
pub use net::{Client, Server};
pub use service::{
    control, decode_signed, decode_time, di, encode_demand, encode_energy, encode_signed, encode_time, error_frame,
    handle_request, read_value, request, ErrorReason,
};
