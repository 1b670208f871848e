//! Time-of-use calendar: up to 12 rates, a main and a secondary period
//! table with a date-switched activation, and per-date holiday tables.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::RegisterError;
use crate::time::{self, Timestamp};

pub const MAX_RATES: usize = 12;
const MINUTES_PER_DAY: u16 = 1_440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TariffPeriod {
    pub start_minute: u16,
    pub rate: u8,
}

/// Ordered switch points; the first must start at midnight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodTable(pub Vec<TariffPeriod>);

impl PeriodTable {
    pub fn new(points: &[(u16, u8)]) -> Self {
        Self(
            points
                .iter()
                .map(|&(start_minute, rate)| TariffPeriod { start_minute, rate })
                .collect(),
        )
    }

    pub fn flat(rate: u8) -> Self {
        Self::new(&[(0, rate)])
    }

    fn validate(&self, rate_count: u8) -> Result<(), RegisterError> {
        let first = self
            .0
            .first()
            .ok_or_else(|| RegisterError::InvalidConfig("empty period table".into()))?;
        if first.start_minute != 0 {
            return Err(RegisterError::InvalidConfig("period table must start at 00:00".into()));
        }
        if self.0.windows(2).any(|w| w[0].start_minute >= w[1].start_minute) {
            return Err(RegisterError::InvalidConfig(
                "period starts must strictly increase".into(),
            ));
        }
        if let Some(p) = self
            .0
            .iter()
            .find(|p| p.start_minute >= MINUTES_PER_DAY || p.rate >= rate_count)
        {
            return Err(RegisterError::InvalidConfig(format!(
                "period at minute {} with rate {} out of range",
                p.start_minute, p.rate
            )));
        }
        Ok(())
    }

    pub fn rate_at_minute(&self, minute: u32) -> u8 {
        self.0
            .iter()
            .take_while(|p| u32::from(p.start_minute) <= minute)
            .last()
            .map_or(0, |p| p.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffCalendar {
    pub rate_count: u8,
    pub main: PeriodTable,
    pub secondary: PeriodTable,
    /// From this instant on, the secondary table replaces the main one.
    pub secondary_activation: Option<Timestamp>,
    #[serde(default)]
    pub holidays: BTreeMap<NaiveDate, PeriodTable>,
}

impl Default for TariffCalendar {
    /// Four rates: 0 sharp, 1 peak, 2 flat, 3 valley.
    fn default() -> Self {
        let table = PeriodTable::new(&[(0, 3), (480, 1), (600, 0), (720, 2), (1_020, 1), (1_260, 2), (1_380, 3)]);
        Self {
            rate_count: 4,
            main: table.clone(),
            secondary: table,
            secondary_activation: None,
            holidays: BTreeMap::new(),
        }
    }
}

impl TariffCalendar {
    pub fn single_rate() -> Self {
        Self {
            rate_count: 1,
            main: PeriodTable::flat(0),
            secondary: PeriodTable::flat(0),
            secondary_activation: None,
            holidays: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), RegisterError> {
        if self.rate_count == 0 || usize::from(self.rate_count) > MAX_RATES {
            return Err(RegisterError::InvalidConfig(format!(
                "rate count {} outside 1..={MAX_RATES}",
                self.rate_count
            )));
        }
        self.main.validate(self.rate_count)?;
        self.secondary.validate(self.rate_count)?;
        self.holidays.values().try_for_each(|t| t.validate(self.rate_count))
    }

    pub fn active_table(&self, ts: Timestamp) -> &PeriodTable {
        if let Some(t) = self.holidays.get(&time::date(ts)) {
            return t;
        }
        match self.secondary_activation {
            Some(at) if ts >= at => &self.secondary,
            _ => &self.main,
        }
    }

    pub fn rate_at(&self, ts: Timestamp) -> usize {
        usize::from(self.active_table(ts).rate_at_minute(time::minute_of_day(ts)))
    }
}
