//! Frozen register snapshots.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::bank::EnergyRegisterBank;
use super::demand::DemandRecord;
use crate::time::Timestamp;

pub const DEFAULT_FREEZE_DEPTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeKind {
    Regular,
    Instantaneous,
    Daily,
    Agreed,
    Hourly,
}

impl FreezeKind {
    pub const ALL: [FreezeKind; 5] = [
        FreezeKind::Regular,
        FreezeKind::Instantaneous,
        FreezeKind::Daily,
        FreezeKind::Agreed,
        FreezeKind::Hourly,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Wire code, 1-based.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        code.checked_sub(1).and_then(|i| Self::ALL.get(usize::from(i)).copied())
    }
}

/// Trigger for the agreed freeze: first instant plus optional daily repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreedTrigger {
    pub at: Timestamp,
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: u64,
    pub kind: FreezeKind,
    pub timestamp: Timestamp,
    pub bank: EnergyRegisterBank,
    pub max_demand_fwd: Option<DemandRecord>,
    pub max_demand_rev: Option<DemandRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeStore {
    depth: usize,
    next_id: u64,
    slots: Vec<VecDeque<Snapshot>>,
}

impl Default for FreezeStore {
    fn default() -> Self {
        Self::new(DEFAULT_FREEZE_DEPTH)
    }
}

impl FreezeStore {
    pub fn new(depth: usize) -> Self {
        Self {
            depth: depth.max(1),
            next_id: 1,
            slots: vec![VecDeque::new(); FreezeKind::ALL.len()],
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Stores a snapshot built by `make(id)`; evicts the oldest of the same
    /// kind past the depth limit.
    pub fn store(&mut self, make: impl FnOnce(u64) -> Snapshot) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let snap = make(id);
        let slot = &mut self.slots[snap.kind.index()];
        if slot.len() == self.depth {
            slot.pop_front();
        }
        slot.push_back(snap);
        id
    }

    pub fn of_kind(&self, kind: FreezeKind) -> impl DoubleEndedIterator<Item = &Snapshot> {
        self.slots[kind.index()].iter()
    }

    /// `n`-th most recent snapshot of `kind`, 1-based.
    pub fn recent(&self, kind: FreezeKind, n: usize) -> Option<&Snapshot> {
        n.checked_sub(1)
            .and_then(|i| self.slots[kind.index()].iter().rev().nth(i))
    }

    pub fn by_id(&self, id: u64) -> Option<&Snapshot> {
        self.slots.iter().flatten().find(|s| s.id == id)
    }

    pub fn count(&self, kind: FreezeKind) -> usize {
        self.slots[kind.index()].len()
    }
}
