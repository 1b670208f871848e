//! Bounded event log with FIFO eviction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::bank::RegisterTotals;
use crate::time::Timestamp;

pub const DEFAULT_EVENT_CAPACITY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PowerDown,
    PowerUp,
    PhaseVoltageLoss,
    ReverseFlow,
    DemandZeroed,
    MeterZeroed,
    Programming,
    TimeSet,
    OverloadAlarm,
    BalanceAlarm,
    LoadSwitchOpened,
    ClockRegression,
}

impl EventKind {
    /// Wire code used by the read-events command.
    pub fn code(self) -> u8 {
        match self {
            EventKind::PowerDown => 0x01,
            EventKind::PowerUp => 0x02,
            EventKind::PhaseVoltageLoss => 0x03,
            EventKind::ReverseFlow => 0x04,
            EventKind::DemandZeroed => 0x05,
            EventKind::MeterZeroed => 0x06,
            EventKind::Programming => 0x07,
            EventKind::TimeSet => 0x08,
            EventKind::OverloadAlarm => 0x09,
            EventKind::BalanceAlarm => 0x0A,
            EventKind::LoadSwitchOpened => 0x0B,
            EventKind::ClockRegression => 0x0C,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventDetail {
    None,
    Phase(u8),
    TimeChange { old: Timestamp, new: Timestamp },
    MaxDemandKw(f64),
    Balance(f64),
    Power(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub kind: EventKind,
    pub timestamp: Timestamp,
    pub totals: RegisterTotals,
    pub detail: EventDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    capacity: usize,
    next_seq: u64,
    records: VecDeque<EventRecord>,
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new(DEFAULT_EVENT_CAPACITY)
    }
}

impl EventLog {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            next_seq: 1,
            records: VecDeque::new(),
        }
    }

    pub fn push(&mut self, kind: EventKind, timestamp: Timestamp, totals: RegisterTotals, detail: EventDetail) -> u64 {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.records.push_back(EventRecord {
            seq,
            kind,
            timestamp,
            totals,
            detail,
        });
        seq
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Total events ever written, including evicted ones.
    pub fn written(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &EventRecord> {
        self.records.iter()
    }

    /// `n`-th most recent record, 1-based.
    pub fn recent(&self, n: usize) -> Option<&EventRecord> {
        n.checked_sub(1).and_then(|i| self.records.iter().rev().nth(i))
    }

    pub fn last_of(&self, kind: EventKind) -> Option<&EventRecord> {
        self.records.iter().rev().find(|r| r.kind == kind)
    }

    pub fn count_of(&self, kind: EventKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}
