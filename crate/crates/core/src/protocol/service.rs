//! Request handling: data identifiers, commands and their encodings.

use crate::registers::{
    to_hundredths, DemandMode, DemandRecord, FreezeKind, MeterState, Parameter, RegisterError, Snapshot, ZeroKind,
};
use crate::time::{self, Timestamp};

use super::frame::{decode_bcd, encode_bcd, Frame, FrameError};

pub mod control {
    pub const TIME_SYNC: u8 = 0x08;
    pub const READ_DATA: u8 = 0x11;
    pub const READ_DEMAND: u8 = 0x12;
    pub const READ_EVENT: u8 = 0x13;
    pub const WRITE_PARAMETER: u8 = 0x14;
    pub const METER_ZERO: u8 = 0x1A;
    pub const FREEZE: u8 = 0x1C;
    pub const DEMAND_ZERO: u8 = 0x1D;
    pub const RESPONSE: u8 = 0x80;
    pub const ERROR: u8 = 0xC0;
}

pub mod di {
    pub const COMBINED_ACTIVE: u32 = 0x0000_0000;
    pub const ACTIVE_FWD: u32 = 0x0001_0000;
    pub const ACTIVE_REV: u32 = 0x0002_0000;
    pub const COMBINED_REACTIVE_1: u32 = 0x0003_0000;
    pub const COMBINED_REACTIVE_2: u32 = 0x0004_0000;
    /// Quadrant I; II..IV follow at steps of 0x0001_0000.
    pub const REACTIVE_Q1: u32 = 0x0005_0000;
    /// Phase A/B/C forward active.
    pub const PHASE_FWD: [u32; 3] = [0x0015_0000, 0x0029_0000, 0x003D_0000];
    pub const BALANCE: u32 = 0x0090_0200;
    pub const DEMAND_FWD: u32 = 0x0101_0000;
    pub const DEMAND_REV: u32 = 0x0102_0000;
    pub const CLOCK: u32 = 0x0400_0102;
    pub const DEMAND_CONFIG: u32 = 0x0400_0103;
    pub const REGULAR_FREEZE_MINUTES: u32 = 0x0400_0104;
    pub const OVERLOAD_W: u32 = 0x0400_0105;
    pub const RECHARGE: u32 = 0x0400_1001;
    /// `0x0500KKNN`: freeze kind KK, n-th most recent NN.
    pub const FREEZE_BASE: u32 = 0x0500_0000;
    /// `0x1E0000NN`: n-th most recent event.
    pub const EVENT_BASE: u32 = 0x1E00_0000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorReason {
    AuthFailure = 0x01,
    UnknownIdentifier = 0x02,
    PrivilegeRequired = 0x03,
    LockedOut = 0x04,
    Malformed = 0x05,
    AdjustmentRejected = 0x06,
    Unsupported = 0x07,
}

impl ErrorReason {
    pub fn from_byte(b: u8) -> Option<Self> {
        use ErrorReason::*;
        [
            AuthFailure,
            UnknownIdentifier,
            PrivilegeRequired,
            LockedOut,
            Malformed,
            AdjustmentRejected,
            Unsupported,
        ]
        .into_iter()
        .find(|r| *r as u8 == b)
    }
}

impl From<RegisterError> for ErrorReason {
    fn from(e: RegisterError) -> Self {
        match e {
            RegisterError::AuthFailure => ErrorReason::AuthFailure,
            RegisterError::PrivilegeRequired(_) => ErrorReason::PrivilegeRequired,
            RegisterError::LockedOut { .. } => ErrorReason::LockedOut,
            RegisterError::AdjustmentTooLarge { .. } | RegisterError::BroadcastNotAllowed => {
                ErrorReason::AdjustmentRejected
            }
            RegisterError::NoAgreedTrigger => ErrorReason::Unsupported,
            _ => ErrorReason::Malformed,
        }
    }
}

impl From<FrameError> for ErrorReason {
    fn from(_: FrameError) -> Self {
        ErrorReason::Malformed
    }
}

/// Four BCD bytes with two decimals, wrapping like a mechanical register.
pub fn encode_energy(units: u64) -> Vec<u8> {
    encode_bcd(to_hundredths(units) % 100_000_000, 4).expect("eight digits fit")
}

/// Signed variant: magnitude in seven digits, bit 7 of the last byte set
/// for negative values.
pub fn encode_signed(hundredths: i128) -> Vec<u8> {
    let magnitude = (hundredths.unsigned_abs() % 80_000_000) as u64;
    let mut out = encode_bcd(magnitude, 4).expect("eight digits fit");
    if hundredths < 0 {
        out[3] |= 0x80;
    }
    out
}

pub fn decode_signed(bytes: &[u8]) -> Result<i128, FrameError> {
    let mut b = bytes.to_vec();
    let negative = b.last().is_some_and(|&x| x & 0x80 != 0);
    if let Some(last) = b.last_mut() {
        *last &= 0x7F;
    }
    let m = i128::from(decode_bcd(&b)?);
    Ok(if negative { -m } else { m })
}

/// Units to signed hundredths, half-even.
fn signed_hundredths(units: i128) -> i128 {
    let h = to_hundredths(units.unsigned_abs() as u64) as i128;
    if units < 0 {
        -h
    } else {
        h
    }
}

/// Six BCD bytes `ss mm hh DD MM YY`, years 2000..=2099.
pub fn encode_time(ts: Timestamp) -> Result<Vec<u8>, FrameError> {
    let (y, mo, d, h, mi, s) = time::fields(ts);
    if !(2000..=2099).contains(&y) {
        return Err(FrameError::BadBcd);
    }
    [s, mi, h, d, mo, (y - 2000) as u32]
        .iter()
        .map(|&v| encode_bcd(u64::from(v), 1).map(|b| b[0]))
        .collect()
}

pub fn decode_time(bytes: &[u8]) -> Result<Timestamp, FrameError> {
    if bytes.len() != 6 {
        return Err(FrameError::BadLength);
    }
    let v: Vec<u32> = bytes
        .iter()
        .map(|&b| decode_bcd(&[b]).map(|x| x as u32))
        .collect::<Result<_, _>>()?;
    time::from_fields(2000 + v[5] as i32, v[4], v[3], v[2], v[1], v[0]).ok_or(FrameError::BadBcd)
}

/// Demand as four BCD bytes with four decimals plus `mm hh DD MM YY` of
/// the window end; absent maxima read as zeros.
pub fn encode_demand(record: Option<DemandRecord>) -> Vec<u8> {
    let Some(r) = record else { return vec![0; 9] };
    let scaled = (r.kw.abs() * 10_000.0).round().min(99_999_999.0) as u64;
    let mut out = encode_bcd(scaled, 4).expect("eight digits fit");
    match encode_time(r.at) {
        Ok(t) => out.extend_from_slice(&t[1..]),
        Err(_) => out.extend_from_slice(&[0; 5]),
    }
    out
}

fn password(payload: &[u8]) -> Option<u32> {
    payload.get(..4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_di(bytes: &[u8]) -> Option<u32> {
    bytes.get(..4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn snapshot_record(s: &Snapshot) -> Vec<u8> {
    let mut out = encode_time(s.timestamp)
        .map(|t| t[1..].to_vec())
        .unwrap_or_else(|_| vec![0; 5]);
    out.extend(encode_energy(s.bank.active_fwd));
    out.extend(encode_energy(s.bank.active_rev));
    out.extend(encode_demand(s.max_demand_fwd).into_iter().take(4));
    out
}

fn demand_value(meter: &MeterState, id: u32) -> Option<Vec<u8>> {
    match id {
        di::DEMAND_FWD => Some(encode_demand(meter.demand.forward.max)),
        di::DEMAND_REV => Some(encode_demand(meter.demand.reverse.max)),
        _ if id & 0xFFFF_FF00 == di::DEMAND_FWD => {
            let nn = (id & 0xFF) as usize;
            let slot = meter.demand.per_rate_max.get(nn.checked_sub(1)?)?;
            Some(encode_demand(*slot))
        }
        _ => None,
    }
}

/// Encoded value of a readable data identifier.
pub fn read_value(meter: &MeterState, id: u32) -> Option<Vec<u8>> {
    let bank = &meter.bank;
    let per_rate = |regs: &[u64], base: u32| -> Option<Vec<u8>> {
        if id & 0xFFFF_FF00 != base {
            return None;
        }
        let nn = (id & 0xFF) as usize;
        regs.get(nn.checked_sub(1)?).map(|&u| encode_energy(u))
    };
    match id {
        di::COMBINED_ACTIVE => Some(encode_signed(signed_hundredths(meter.combined_active()))),
        di::ACTIVE_FWD => Some(encode_energy(bank.active_fwd)),
        di::ACTIVE_REV => Some(encode_energy(bank.active_rev)),
        di::COMBINED_REACTIVE_1 => Some(encode_signed(signed_hundredths(meter.combined_reactive_1()))),
        di::COMBINED_REACTIVE_2 => Some(encode_signed(signed_hundredths(meter.combined_reactive_2()))),
        _ if (di::REACTIVE_Q1..=di::REACTIVE_Q1 + 0x0003_0000).contains(&id) && id & 0xFFFF == 0 => {
            Some(encode_energy(bank.reactive[((id - di::REACTIVE_Q1) >> 16) as usize]))
        }
        _ if di::PHASE_FWD.contains(&id) => {
            let phase = di::PHASE_FWD.iter().position(|&d| d == id)?;
            bank.per_phase_fwd.get(phase).map(|&u| encode_energy(u))
        }
        di::BALANCE => Some(encode_signed((meter.billing.balance * 100.0).round() as i128)),
        di::CLOCK => encode_time(meter.clock).ok(),
        _ if id & 0xFFFF_0000 == di::FREEZE_BASE => {
            let kind = FreezeKind::from_code(((id >> 8) & 0xFF) as u8)?;
            let snap = meter.freezes.recent(kind, (id & 0xFF) as usize)?;
            Some(snapshot_record(snap))
        }
        _ => per_rate(&bank.per_rate_fwd, di::ACTIVE_FWD)
            .or_else(|| per_rate(&bank.per_rate_rev, di::ACTIVE_REV))
            .or_else(|| demand_value(meter, id)),
    }
}

fn event_record(meter: &MeterState, id: u32) -> Option<Vec<u8>> {
    if id & 0xFFFF_FF00 != di::EVENT_BASE {
        return None;
    }
    let rec = meter.events.recent((id & 0xFF) as usize)?;
    let mut out = encode_bcd(rec.seq % 100_000_000, 4).ok()?;
    out.push(rec.kind.code());
    out.extend(encode_time(rec.timestamp).unwrap_or_else(|_| vec![0; 6]));
    out.extend(encode_energy(rec.totals.active_fwd));
    out.extend(encode_energy(rec.totals.active_rev));
    Some(out)
}

fn parse_parameter(id: u32, value: &[u8]) -> Result<Parameter, ErrorReason> {
    let bcd = |b: &[u8]| decode_bcd(b).map_err(ErrorReason::from);
    match id {
        di::DEMAND_CONFIG if value.len() == 3 => {
            let mode = match value[0] {
                0 => DemandMode::Interval,
                1 => DemandMode::Sliding,
                _ => return Err(ErrorReason::Malformed),
            };
            Ok(Parameter::Demand {
                mode,
                window_minutes: bcd(&value[1..2])? as u32,
                slip_minutes: bcd(&value[2..3])? as u32,
            })
        }
        di::REGULAR_FREEZE_MINUTES if value.len() == 2 => {
            let minutes = bcd(value)? as i64;
            Ok(Parameter::RegularFreezePeriod((minutes > 0).then_some(minutes * 60)))
        }
        di::OVERLOAD_W if value.len() == 4 => {
            let w = bcd(value)?;
            Ok(Parameter::OverloadPower((w > 0).then_some(w as f64)))
        }
        di::RECHARGE if value.len() == 4 => Ok(Parameter::Recharge(bcd(value)? as f64 / 100.0)),
        di::DEMAND_CONFIG | di::REGULAR_FREEZE_MINUTES | di::OVERLOAD_W | di::RECHARGE => Err(ErrorReason::Malformed),
        _ => Err(ErrorReason::UnknownIdentifier),
    }
}

pub fn error_frame(address: u64, request_control: u8, reason: ErrorReason) -> Frame {
    Frame::new(address, request_control | control::ERROR, vec![reason as u8])
}

fn ok_frame(address: u64, request_control: u8, payload: Vec<u8>) -> Frame {
    Frame::new(address, request_control | control::RESPONSE, payload)
}

/// Applies one request to the meter. Returns the response, or `None` for
/// frames addressed elsewhere and for broadcasts.
pub fn handle_request(frame: &Frame, meter: &mut MeterState) -> Option<Frame> {
    if frame.is_broadcast() {
        if frame.control == control::TIME_SYNC {
            match decode_time(&frame.payload) {
                Ok(t) => {
                    if let Err(e) = meter.broadcast_sync(t) {
                        log::info!("broadcast time sync ignored: {e}");
                    }
                }
                Err(e) => log::info!("broadcast time sync malformed: {e}"),
            }
        }
        return None;
    }
    if frame.address != meter.address {
        return None;
    }
    let addr = meter.address;
    let ctrl = frame.control;
    let result = dispatch(ctrl, &frame.payload, meter);
    Some(match result {
        Ok(payload) => ok_frame(addr, ctrl, payload),
        Err(reason) => error_frame(addr, ctrl, reason),
    })
}

fn dispatch(ctrl: u8, payload: &[u8], meter: &mut MeterState) -> Result<Vec<u8>, ErrorReason> {
    let with_di = |value: Vec<u8>, id: u32| {
        let mut out = id.to_le_bytes().to_vec();
        out.extend(value);
        out
    };
    match ctrl {
        control::READ_DATA | control::READ_DEMAND | control::READ_EVENT => {
            if payload.len() != 4 {
                return Err(ErrorReason::Malformed);
            }
            let id = read_di(payload).ok_or(ErrorReason::Malformed)?;
            let value = match ctrl {
                control::READ_DATA => read_value(meter, id),
                control::READ_DEMAND => demand_value(meter, id),
                _ => event_record(meter, id),
            };
            value.map(|v| with_di(v, id)).ok_or(ErrorReason::UnknownIdentifier)
        }
        control::WRITE_PARAMETER => {
            let pw = password(payload).ok_or(ErrorReason::Malformed)?;
            let id = payload.get(4..).and_then(read_di).ok_or(ErrorReason::Malformed)?;
            let parameter = parse_parameter(id, &payload[8..])?;
            meter.set_parameter(parameter, pw)?;
            Ok(id.to_le_bytes().to_vec())
        }
        control::FREEZE => {
            let pw = password(payload).ok_or(ErrorReason::Malformed)?;
            if payload.len() != 5 {
                return Err(ErrorReason::Malformed);
            }
            let kind = FreezeKind::from_code(payload[4]).ok_or(ErrorReason::Malformed)?;
            let id = meter.freeze_authorized(kind, pw)?;
            Ok(encode_bcd(id % 100_000_000, 4).expect("eight digits fit"))
        }
        control::DEMAND_ZERO | control::METER_ZERO => {
            if payload.len() != 4 {
                return Err(ErrorReason::Malformed);
            }
            let pw = password(payload).ok_or(ErrorReason::Malformed)?;
            let kind = if ctrl == control::DEMAND_ZERO {
                ZeroKind::Demand
            } else {
                ZeroKind::Meter
            };
            meter.zero(kind, pw)?;
            Ok(Vec::new())
        }
        control::TIME_SYNC => {
            if payload.len() != 10 {
                return Err(ErrorReason::Malformed);
            }
            let pw = password(payload).ok_or(ErrorReason::Malformed)?;
            let t = decode_time(&payload[4..])?;
            meter.set_clock(t, pw)?;
            Ok(encode_time(meter.clock)?)
        }
        _ => Err(ErrorReason::Unsupported),
    }
}

/// Request builders for clients.
pub mod request {
    use super::*;

    pub fn read(address: u64, id: u32) -> Frame {
        Frame::new(address, control::READ_DATA, id.to_le_bytes().to_vec())
    }

    pub fn read_demand(address: u64, id: u32) -> Frame {
        Frame::new(address, control::READ_DEMAND, id.to_le_bytes().to_vec())
    }

    pub fn read_event(address: u64, nth: u8) -> Frame {
        Frame::new(
            address,
            control::READ_EVENT,
            (di::EVENT_BASE | u32::from(nth)).to_le_bytes().to_vec(),
        )
    }

    pub fn write_parameter(address: u64, password: u32, id: u32, value: &[u8]) -> Frame {
        let mut p = password.to_le_bytes().to_vec();
        p.extend(id.to_le_bytes());
        p.extend_from_slice(value);
        Frame::new(address, control::WRITE_PARAMETER, p)
    }

    pub fn freeze(address: u64, password: u32, kind: FreezeKind) -> Frame {
        let mut p = password.to_le_bytes().to_vec();
        p.push(kind.code());
        Frame::new(address, control::FREEZE, p)
    }

    pub fn zero_demand(address: u64, password: u32) -> Frame {
        Frame::new(address, control::DEMAND_ZERO, password.to_le_bytes().to_vec())
    }

    pub fn zero_meter(address: u64, password: u32) -> Frame {
        Frame::new(address, control::METER_ZERO, password.to_le_bytes().to_vec())
    }

    pub fn broadcast_sync(t: Timestamp) -> Result<Frame, FrameError> {
        Ok(Frame::new(
            super::super::frame::BROADCAST,
            control::TIME_SYNC,
            encode_time(t)?,
        ))
    }

    pub fn set_clock(address: u64, password: u32, t: Timestamp) -> Result<Frame, FrameError> {
        let mut p = password.to_le_bytes().to_vec();
        p.extend(encode_time(t)?);
        Ok(Frame::new(address, control::TIME_SYNC, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::PowerReading;
    use crate::protocol::frame::BROADCAST;
    use crate::time::from_fields;

    fn meter() -> MeterState {
        let start = from_fields(2024, 5, 6, 13, 0, 0).unwrap();
        let mut m = MeterState::with_defaults(1, start);
        m.accumulate(
            &PowerReading::from_totals(1_150.0, 0.0, 230.0, 5.0),
            3_600.0,
            start + 3_600,
        )
        .unwrap();
        m
    }

    #[test]
    fn read_forward_total() {
        let mut m = meter();
        let resp = handle_request(&request::read(1, di::ACTIVE_FWD), &mut m).unwrap();
        assert_eq!(resp.control, 0x91);
        assert_eq!(resp.payload, vec![0x00, 0x00, 0x01, 0x00, 0x15, 0x01, 0x00, 0x00]);
        let per_rate = handle_request(&request::read(1, di::ACTIVE_FWD | 3), &mut m).unwrap();
        assert_eq!(per_rate.payload[4..], [0x15, 0x01, 0x00, 0x00]);
    }

    #[test]
    fn unknown_identifier_is_an_error_frame() {
        let mut m = meter();
        let resp = handle_request(&request::read(1, 0x0123_4567), &mut m).unwrap();
        assert_eq!(resp.control, 0x11 | 0xC0);
        assert_eq!(resp.payload, vec![ErrorReason::UnknownIdentifier as u8]);
        let rate_out_of_range = handle_request(&request::read(1, di::ACTIVE_FWD | 9), &mut m).unwrap();
        assert_eq!(rate_out_of_range.payload, vec![0x02]);
    }

    #[test]
    fn wrong_password_counts() {
        let mut m = meter();
        let resp = handle_request(&request::zero_demand(1, 0x99), &mut m).unwrap();
        assert_eq!(resp.control, 0xDD);
        assert_eq!(resp.payload, vec![0x01]);
        assert_eq!(m.security.failed_attempts, 1);
    }

    #[test]
    fn broadcast_sync_is_silent() {
        let mut m = meter();
        let t = m.clock + 30;
        assert!(handle_request(&request::broadcast_sync(t).unwrap(), &mut m).is_none());
        assert_eq!(m.clock, t);
        assert!(handle_request(&request::read(2, di::ACTIVE_FWD), &mut m).is_none());
        assert!(handle_request(&Frame::new(BROADCAST, 0x11, vec![0; 4]), &mut m).is_none());
    }

    #[test]
    fn time_codec() {
        let t = from_fields(2024, 12, 31, 23, 59, 58).unwrap();
        let b = encode_time(t).unwrap();
        assert_eq!(b, vec![0x58, 0x59, 0x23, 0x31, 0x12, 0x24]);
        assert_eq!(decode_time(&b).unwrap(), t);
        assert!(decode_time(&[0x61, 0, 0, 1, 1, 0]).is_err());
    }

    #[test]
    fn signed_values() {
        assert_eq!(decode_signed(&encode_signed(-12_345)).unwrap(), -12_345);
        assert_eq!(decode_signed(&encode_signed(7_999_999)).unwrap(), 7_999_999);
    }

    #[test]
    fn write_demand_window() {
        let mut m = meter();
        let f = request::write_parameter(1, 3, di::DEMAND_CONFIG, &[0x00, 0x30, 0x05]);
        let resp = handle_request(&f, &mut m).unwrap();
        assert_eq!(resp.control, 0x94, "{resp:?}");
        assert_eq!(m.demand.forward.window_minutes, 30);
        assert_eq!(m.demand.mode(), DemandMode::Interval);
        let bad = request::write_parameter(1, 3, di::DEMAND_CONFIG, &[0x00, 0x15, 0x04]);
        assert_eq!(handle_request(&bad, &mut m).unwrap().payload, vec![0x05]);
    }

    #[test]
    fn freeze_needs_programming_password() {
        let mut m = meter();
        let denied = handle_request(&request::freeze(1, 2, FreezeKind::Instantaneous), &mut m).unwrap();
        assert_eq!(denied.payload, vec![ErrorReason::PrivilegeRequired as u8]);
        let ok = handle_request(&request::freeze(1, 4, FreezeKind::Instantaneous), &mut m).unwrap();
        assert_eq!(ok.control, 0x9C);
        let rec = handle_request(&request::read(1, di::FREEZE_BASE | 0x0201), &mut m).unwrap();
        assert_eq!(rec.control, 0x91);
        assert_eq!(rec.payload[9..13], [0x15, 0x01, 0x00, 0x00]);
    }
}
