//! The meter state machine: tariff energy registers, four-quadrant reactive
//! registers, demand, freezing, events, zeroing, clock, billing and the
//! V²h/I²h extension registers.
//!
//! All mutation goes through [`MeterState`]; time is always injected by the
//! caller.

mod bank;
mod billing;
mod demand;
mod events;
mod freeze;
mod security;
mod tariff;

pub use bank::{
    to_hundredths, to_kwh, CombinedActive, CombinedReactive, EnergyRegisterBank, RegisterTotals, UNITS_PER_HUNDREDTH,
    UNITS_PER_KWH,
};
pub use billing::{ladder_charge, BillOutcome, BillingState, LadderTier, LoadSwitch, Pricing};
pub use demand::{
    update_demand, DemandMode, DemandRecord, DemandState, DemandTracker, DEFAULT_SLIP_MINUTES, DEFAULT_WINDOW_MINUTES,
};
pub use events::{EventDetail, EventKind, EventLog, EventRecord, DEFAULT_EVENT_CAPACITY};
pub use freeze::{AgreedTrigger, FreezeKind, FreezeStore, Snapshot, DEFAULT_FREEZE_DEPTH};
pub use security::{Passwords, Privilege, SecurityState};
pub use tariff::{PeriodTable, TariffCalendar, TariffPeriod, MAX_RATES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrology::{PowerReading, PulseCounter, Quadrant};
use crate::time::{self, Timestamp, DAY, HOUR, MINUTE};

/// Version tag of the exported state document.
pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegisterError {
    #[error("clock regression: meter clock {clock}, step ends at {now}")]
    ClockRegression { clock: Timestamp, now: Timestamp },
    #[error("accumulation interval must be positive")]
    InvalidInterval,
    #[error("authentication failed")]
    AuthFailure,
    #[error("locked out until {until}")]
    LockedOut { until: Timestamp },
    #[error("{0:?} privilege required")]
    PrivilegeRequired(Privilege),
    #[error("clock adjustment of {requested} s exceeds the remaining {limit} s")]
    AdjustmentTooLarge { requested: i64, limit: i64 },
    #[error("no agreed freeze trigger is programmed")]
    NoAgreedTrigger,
    #[error("broadcast time sync already used today")]
    BroadcastNotAllowed,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported state version {0}")]
    UnsupportedVersion(u32),
    #[error("state document: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeterConfig {
    pub phase_count: usize,
    pub nominal_voltage: f64,
    /// Phase-voltage loss when U_rms stays below this fraction of nominal.
    pub voltage_loss_fraction: f64,
    pub voltage_loss_seconds: f64,
    pub overload_power_w: Option<f64>,
    pub combined_active: CombinedActive,
    pub combined_reactive_1: CombinedReactive,
    pub combined_reactive_2: CombinedReactive,
    pub demand_mode: DemandMode,
    pub demand_window_minutes: u32,
    pub demand_slip_minutes: u32,
    pub daily_freeze: bool,
    pub hourly_freeze: bool,
    pub regular_freeze_period_s: Option<i64>,
    pub agreed_trigger: Option<AgreedTrigger>,
    pub freeze_depth: usize,
    pub event_capacity: usize,
    pub meter_constant: f64,
    /// Cumulative authenticated clock adjustment allowed per day, seconds.
    pub clock_daily_limit_s: i64,
    /// Largest adjustment a broadcast sync may apply, seconds.
    pub broadcast_limit_s: i64,
}

impl Default for MeterConfig {
    fn default() -> Self {
        Self {
            phase_count: 3,
            nominal_voltage: 230.0,
            voltage_loss_fraction: 0.6,
            voltage_loss_seconds: 1.0,
            overload_power_w: None,
            combined_active: CombinedActive::default(),
            combined_reactive_1: CombinedReactive::DEFAULT_1,
            combined_reactive_2: CombinedReactive::DEFAULT_2,
            demand_mode: DemandMode::Sliding,
            demand_window_minutes: DEFAULT_WINDOW_MINUTES,
            demand_slip_minutes: DEFAULT_SLIP_MINUTES,
            daily_freeze: true,
            hourly_freeze: true,
            regular_freeze_period_s: None,
            agreed_trigger: None,
            freeze_depth: DEFAULT_FREEZE_DEPTH,
            event_capacity: DEFAULT_EVENT_CAPACITY,
            meter_constant: 6_400.0,
            clock_daily_limit_s: 300,
            broadcast_limit_s: 300,
        }
    }
}

impl MeterConfig {
    pub fn validate(&self) -> Result<(), RegisterError> {
        let bad = |m: &str| Err(RegisterError::InvalidConfig(m.into()));
        if self.phase_count == 0 {
            return bad("phase count must be positive");
        }
        if self.regular_freeze_period_s.is_some_and(|p| p <= 0) {
            return bad("regular freeze period must be positive");
        }
        if self.meter_constant <= 0.0 || !self.meter_constant.is_finite() {
            return bad("meter constant must be positive");
        }
        if self.clock_daily_limit_s < 0 || self.broadcast_limit_s < 0 {
            return bad("clock limits must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroKind {
    Meter,
    Demand,
}

/// Programmable parameters reachable with the parameter-setting password.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Demand {
        mode: DemandMode,
        window_minutes: u32,
        slip_minutes: u32,
    },
    RegularFreezePeriod(Option<i64>),
    AgreedTrigger(Option<AgreedTrigger>),
    Calendar(TariffCalendar),
    Pricing(Pricing),
    CombinedActive(CombinedActive),
    CombinedReactive1(CombinedReactive),
    CombinedReactive2(CombinedReactive),
    OverloadPower(Option<f64>),
    Recharge(f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
struct Monitors {
    low_voltage_s: Vec<f64>,
    voltage_lost: Vec<bool>,
    reverse: bool,
    overload: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
struct ClockBudget {
    day: i64,
    used_s: i64,
    broadcast_day: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterState {
    pub version: u32,
    /// Meter address, twelve decimal digits.
    pub address: u64,
    pub clock: Timestamp,
    pub powered: bool,
    pub config: MeterConfig,
    pub calendar: TariffCalendar,
    pub bank: EnergyRegisterBank,
    pub demand: DemandState,
    pub events: EventLog,
    pub freezes: FreezeStore,
    pub security: SecurityState,
    pub billing: BillingState,
    pub pulses_fwd: PulseCounter,
    pub pulses_rev: PulseCounter,
    monitors: Monitors,
    clock_budget: ClockBudget,
}

impl MeterState {
    pub fn new(
        address: u64,
        config: MeterConfig,
        calendar: TariffCalendar,
        clock: Timestamp,
    ) -> Result<Self, RegisterError> {
        config.validate()?;
        calendar.validate()?;
        let rates = usize::from(calendar.rate_count);
        let phases = config.phase_count;
        Ok(Self {
            version: STATE_VERSION,
            address,
            clock,
            powered: true,
            demand: DemandState::new(
                config.demand_mode,
                config.demand_window_minutes,
                config.demand_slip_minutes,
                rates,
            )?,
            bank: EnergyRegisterBank::new(rates, phases),
            events: EventLog::new(config.event_capacity),
            freezes: FreezeStore::new(config.freeze_depth),
            security: SecurityState::default(),
            billing: BillingState::default(),
            pulses_fwd: PulseCounter::new(config.meter_constant),
            pulses_rev: PulseCounter::new(config.meter_constant),
            monitors: Monitors {
                low_voltage_s: vec![0.0; phases],
                voltage_lost: vec![false; phases],
                ..Monitors::default()
            },
            clock_budget: ClockBudget {
                day: time::day_index(clock),
                ..ClockBudget::default()
            },
            config,
            calendar,
        })
    }

    pub fn with_defaults(address: u64, clock: Timestamp) -> Self {
        Self::new(address, MeterConfig::default(), TariffCalendar::default(), clock)
            .expect("default configuration is valid")
    }

    fn log(&mut self, kind: EventKind, at: Timestamp, detail: EventDetail) {
        let totals = self.bank.totals();
        self.events.push(kind, at, totals, detail);
    }

    pub fn combined_active(&self) -> i128 {
        self.bank.combined_active(self.config.combined_active)
    }

    pub fn combined_reactive_1(&self) -> i128 {
        self.bank.combined_reactive(self.config.combined_reactive_1)
    }

    pub fn combined_reactive_2(&self) -> i128 {
        self.bank.combined_reactive(self.config.combined_reactive_2)
    }

    /// Credits the step of length `dt` seconds ending at `now`.
    pub fn accumulate(&mut self, reading: &PowerReading, dt: f64, now: Timestamp) -> Result<(), RegisterError> {
        if now < self.clock {
            let clock = self.clock;
            self.log(
                EventKind::ClockRegression,
                clock,
                EventDetail::TimeChange { old: clock, new: now },
            );
            return Err(RegisterError::ClockRegression { clock, now });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RegisterError::InvalidInterval);
        }
        let hours = dt / 3_600.0;
        let p = reading.p_active.total;
        let wh = p * hours;
        let start = now as f64 - dt;
        let pieces = self.rate_pieces(start, now);

        for &(share, rate) in &pieces {
            self.bank.credit_active(wh * share, rate);
        }
        for (phase, &pp) in reading.p_active.per_phase.iter().enumerate() {
            self.bank.credit_phase(phase, pp * hours);
        }
        let quadrant = Quadrant::from_signs(p, reading.q_reactive.total);
        self.bank.credit_reactive(quadrant, reading.q_reactive.total * hours);
        self.bank.credit_squares(&reading.u_rms, &reading.i_rms, hours);

        let calendar = &self.calendar;
        self.demand.feed(wh, start, now, |t| calendar.rate_at(t));

        if wh >= 0.0 {
            self.pulses_fwd.feed(wh);
            for &(share, rate) in &pieces {
                let out = self.billing.bill(wh * share / 1_000.0, rate);
                if out.alarm {
                    let balance = self.billing.balance;
                    self.log(EventKind::BalanceAlarm, now, EventDetail::Balance(balance));
                }
                if out.opened {
                    let balance = self.billing.balance;
                    self.log(EventKind::LoadSwitchOpened, now, EventDetail::Balance(balance));
                }
            }
        } else {
            self.pulses_rev.feed(-wh);
        }

        self.monitor(reading, dt, now);
        self.advance_clock(now);
        Ok(())
    }

    /// Splits `(start, end]` at minute boundaries where the tariff rate
    /// changes. Returns `(fraction of the step, rate)` pairs.
    fn rate_pieces(&self, start: f64, end: Timestamp) -> Vec<(f64, usize)> {
        let span = end as f64 - start;
        let mut pieces: Vec<(f64, usize)> = Vec::new();
        let mut a = start;
        while a < end as f64 {
            let minute = (a / MINUTE as f64).floor() as i64;
            let b = (((minute + 1) * MINUTE) as f64).min(end as f64);
            let rate = self.calendar.rate_at(minute * MINUTE);
            let share = (b - a) / span;
            match pieces.last_mut() {
                Some(last) if last.1 == rate => last.0 += share,
                _ => pieces.push((share, rate)),
            }
            a = b;
        }
        if let [only] = pieces.as_mut_slice() {
            only.0 = 1.0;
        }
        pieces
    }

    fn monitor(&mut self, reading: &PowerReading, dt: f64, now: Timestamp) {
        let threshold = self.config.voltage_loss_fraction * self.config.nominal_voltage;
        for phase in 0..self.monitors.voltage_lost.len() {
            let Some(&u) = reading.u_rms.get(phase) else { break };
            if u >= threshold {
                self.monitors.low_voltage_s[phase] = 0.0;
                self.monitors.voltage_lost[phase] = false;
                continue;
            }
            self.monitors.low_voltage_s[phase] += dt;
            if !self.monitors.voltage_lost[phase]
                && self.monitors.low_voltage_s[phase] >= self.config.voltage_loss_seconds
            {
                self.monitors.voltage_lost[phase] = true;
                self.log(EventKind::PhaseVoltageLoss, now, EventDetail::Phase(phase as u8));
            }
        }
        let p = reading.p_active.total;
        let reverse = p < 0.0;
        if reverse && !self.monitors.reverse {
            self.log(EventKind::ReverseFlow, now, EventDetail::Power(p));
        }
        self.monitors.reverse = reverse;
        let overload = self.config.overload_power_w.is_some_and(|limit| p.abs() > limit);
        if overload && !self.monitors.overload {
            self.log(EventKind::OverloadAlarm, now, EventDetail::Power(p));
        }
        self.monitors.overload = overload;
    }

    /// Moves the clock forward to `now`, firing every scheduled freeze whose
    /// boundary lies in `(clock, now]`. Earlier times are ignored.
    pub fn advance_clock(&mut self, now: Timestamp) {
        if now <= self.clock {
            return;
        }
        let prev = self.clock;
        let mut due: Vec<(Timestamp, FreezeKind)> = Vec::new();
        if self.config.daily_freeze {
            due.extend(time::boundaries(prev, now, DAY, 0).map(|t| (t, FreezeKind::Daily)));
        }
        if self.config.hourly_freeze {
            due.extend(time::boundaries(prev, now, HOUR, 0).map(|t| (t, FreezeKind::Hourly)));
        }
        if let Some(period) = self.config.regular_freeze_period_s {
            due.extend(time::boundaries(prev, now, period, 0).map(|t| (t, FreezeKind::Regular)));
        }
        if let Some(trigger) = self.config.agreed_trigger {
            if trigger.repeat {
                let phase = trigger.at.rem_euclid(DAY);
                due.extend(
                    time::boundaries(prev.max(trigger.at - 1), now, DAY, phase).map(|t| (t, FreezeKind::Agreed)),
                );
            } else if prev < trigger.at && trigger.at <= now {
                due.push((trigger.at, FreezeKind::Agreed));
            }
        }
        due.sort();
        for (at, kind) in due {
            self.store_snapshot(kind, at);
        }
        self.clock = now;
    }

    fn store_snapshot(&mut self, kind: FreezeKind, at: Timestamp) -> u64 {
        let bank = self.bank.clone();
        let (fwd, rev) = (self.demand.forward.max, self.demand.reverse.max);
        self.freezes.store(|id| Snapshot {
            id,
            kind,
            timestamp: at,
            bank,
            max_demand_fwd: fwd,
            max_demand_rev: rev,
        })
    }

    /// Takes a snapshot of `kind` at the current clock.
    pub fn freeze(&mut self, kind: FreezeKind) -> Result<u64, RegisterError> {
        if kind == FreezeKind::Agreed && self.config.agreed_trigger.is_none() {
            return Err(RegisterError::NoAgreedTrigger);
        }
        Ok(self.store_snapshot(kind, self.clock))
    }

    /// Password-protected freeze, as issued over the protocol.
    pub fn freeze_authorized(&mut self, kind: FreezeKind, password: u32) -> Result<u64, RegisterError> {
        self.security
            .authenticate(Privilege::Programming, password, self.clock)?;
        self.freeze(kind)
    }

    pub fn zero(&mut self, kind: ZeroKind, password: u32) -> Result<(), RegisterError> {
        let now = self.clock;
        self.security.authenticate(Privilege::Zeroing, password, now)?;
        match kind {
            ZeroKind::Demand => {
                let kw = self.demand.forward.max_kw();
                self.log(EventKind::DemandZeroed, now, EventDetail::MaxDemandKw(kw));
                self.demand.clear_max();
            }
            ZeroKind::Meter => {
                self.log(EventKind::MeterZeroed, now, EventDetail::None);
                self.bank = EnergyRegisterBank::new(self.bank.rate_count(), self.bank.phase_count());
                self.demand.reset();
                self.pulses_fwd = PulseCounter::new(self.config.meter_constant);
                self.pulses_rev = PulseCounter::new(self.config.meter_constant);
                self.billing.start_period();
            }
        }
        Ok(())
    }

    fn clock_budget_for_today(&mut self) -> &mut ClockBudget {
        let today = time::day_index(self.clock);
        if self.clock_budget.day != today {
            self.clock_budget.day = today;
            self.clock_budget.used_s = 0;
        }
        &mut self.clock_budget
    }

    /// Authenticated clock adjustment, limited to a cumulative daily budget.
    pub fn set_clock(&mut self, new_time: Timestamp, password: u32) -> Result<(), RegisterError> {
        self.security
            .authenticate(Privilege::Programming, password, self.clock)?;
        let requested = new_time - self.clock;
        let limit = self.config.clock_daily_limit_s;
        let budget = self.clock_budget_for_today();
        let remaining = (limit - budget.used_s).max(0);
        if requested.abs() > remaining {
            return Err(RegisterError::AdjustmentTooLarge {
                requested,
                limit: remaining,
            });
        }
        budget.used_s += requested.abs();
        self.apply_clock(new_time);
        Ok(())
    }

    /// Unauthenticated broadcast sync: small adjustments, once per day.
    pub fn broadcast_sync(&mut self, new_time: Timestamp) -> Result<(), RegisterError> {
        let requested = new_time - self.clock;
        let limit = self.config.broadcast_limit_s;
        let today = time::day_index(self.clock);
        if self.clock_budget.broadcast_day == Some(today) {
            return Err(RegisterError::BroadcastNotAllowed);
        }
        if requested.abs() > limit {
            return Err(RegisterError::AdjustmentTooLarge { requested, limit });
        }
        self.clock_budget.broadcast_day = Some(today);
        self.apply_clock(new_time);
        Ok(())
    }

    fn apply_clock(&mut self, new_time: Timestamp) {
        let old = self.clock;
        self.log(EventKind::TimeSet, old, EventDetail::TimeChange { old, new: new_time });
        self.clock = new_time;
    }

    pub fn set_parameter(&mut self, parameter: Parameter, password: u32) -> Result<(), RegisterError> {
        self.security
            .authenticate(Privilege::ParameterSetting, password, self.clock)?;
        match parameter {
            Parameter::Demand {
                mode,
                window_minutes,
                slip_minutes,
            } => {
                self.demand.reconfigure(mode, window_minutes, slip_minutes)?;
                self.config.demand_mode = mode;
                self.config.demand_window_minutes = window_minutes;
                self.config.demand_slip_minutes = slip_minutes;
            }
            Parameter::RegularFreezePeriod(period) => {
                if period.is_some_and(|p| p <= 0) {
                    return Err(RegisterError::InvalidConfig(
                        "regular freeze period must be positive".into(),
                    ));
                }
                self.config.regular_freeze_period_s = period;
            }
            Parameter::AgreedTrigger(trigger) => self.config.agreed_trigger = trigger,
            Parameter::Calendar(calendar) => {
                calendar.validate()?;
                if calendar.rate_count != self.calendar.rate_count {
                    return Err(RegisterError::InvalidConfig(
                        "rate count cannot change in service".into(),
                    ));
                }
                self.calendar = calendar;
            }
            Parameter::Pricing(pricing) => {
                let mut next = self.billing.clone();
                next.pricing = pricing;
                next.validate(usize::from(self.calendar.rate_count))?;
                self.billing = next;
            }
            Parameter::CombinedActive(c) => self.config.combined_active = c,
            Parameter::CombinedReactive1(c) => self.config.combined_reactive_1 = c,
            Parameter::CombinedReactive2(c) => self.config.combined_reactive_2 = c,
            Parameter::OverloadPower(limit) => self.config.overload_power_w = limit,
            Parameter::Recharge(amount) => self.billing.recharge(amount),
        }
        let now = self.clock;
        self.log(EventKind::Programming, now, EventDetail::None);
        Ok(())
    }

    pub fn power_down(&mut self, now: Timestamp) {
        if self.powered {
            self.advance_clock(now);
            self.powered = false;
            self.log(EventKind::PowerDown, now.max(self.clock), EventDetail::None);
        }
    }

    pub fn power_up(&mut self, now: Timestamp) {
        if !self.powered {
            self.advance_clock(now);
            self.powered = true;
            self.log(EventKind::PowerUp, now.max(self.clock), EventDetail::None);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("meter state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RegisterError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| RegisterError::Json(e.to_string()))?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != STATE_VERSION {
            return Err(RegisterError::UnsupportedVersion(version));
        }
        serde_json::from_value(value).map_err(|e| RegisterError::Json(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::from_fields;

    fn reading(p: f64, q: f64) -> PowerReading {
        PowerReading::from_totals(p, q, 230.0, 5.0)
    }

    fn single_phase_meter(clock: Timestamp) -> MeterState {
        let config = MeterConfig {
            phase_count: 1,
            ..MeterConfig::default()
        };
        MeterState::new(1, config, TariffCalendar::default(), clock).unwrap()
    }

    #[test]
    fn one_hour_in_flat_period() {
        let start = from_fields(2024, 5, 6, 13, 0, 0).unwrap();
        let mut m = single_phase_meter(start);
        m.accumulate(&reading(1_150.0, 0.0), 3_600.0, start + 3_600).unwrap();
        assert_eq!(m.bank.per_rate_fwd[2], 1_150_000_000);
        assert_eq!(to_hundredths(m.bank.active_fwd), 115);
        assert!(m.bank.rate_partition_holds());
    }

    #[test]
    fn quadrant_one_only() {
        let start = from_fields(2024, 5, 6, 13, 0, 0).unwrap();
        let mut m = single_phase_meter(start);
        m.accumulate(&reading(575.0, 995.9), 3_600.0, start + 3_600).unwrap();
        assert_eq!(m.bank.reactive, [995_900_000, 0, 0, 0]);
    }

    #[test]
    fn clock_regression_is_rejected_and_logged() {
        let mut m = single_phase_meter(1_000);
        let err = m.accumulate(&reading(100.0, 0.0), 1.0, 999).unwrap_err();
        assert_eq!(err, RegisterError::ClockRegression { clock: 1_000, now: 999 });
        assert_eq!(m.events.recent(1).unwrap().kind, EventKind::ClockRegression);
        assert_eq!(m.bank.active_fwd, 0);
    }

    #[test]
    fn regular_freeze_every_quarter_hour() {
        let mut m = single_phase_meter(0);
        m.config.regular_freeze_period_s = Some(900);
        for s in 1..=7_200 {
            m.accumulate(&reading(100.0, 0.0), 1.0, s).unwrap();
        }
        assert_eq!(m.freezes.count(FreezeKind::Regular), 8);
        assert_eq!(m.freezes.count(FreezeKind::Hourly), 2);
    }

    #[test]
    fn daily_freeze_matches_live_registers() {
        let start = from_fields(2024, 5, 6, 23, 0, 0).unwrap();
        let midnight = start + 3_600;
        let mut m = single_phase_meter(start);
        for t in (start + 60..=midnight).step_by(60) {
            m.accumulate(&reading(2_000.0, 300.0), 60.0, t).unwrap();
        }
        let snap = m.freezes.recent(FreezeKind::Daily, 1).unwrap().clone();
        assert_eq!(snap.timestamp, midnight);
        assert_eq!(snap.bank, m.bank);
        m.accumulate(&reading(2_000.0, 300.0), 60.0, midnight + 60).unwrap();
        assert_eq!(m.freezes.by_id(snap.id).unwrap(), &snap);
        assert_ne!(snap.bank, m.bank);
    }

    #[test]
    fn agreed_freeze_needs_trigger() {
        let mut m = single_phase_meter(0);
        assert_eq!(m.freeze(FreezeKind::Agreed), Err(RegisterError::NoAgreedTrigger));
        m.config.agreed_trigger = Some(AgreedTrigger { at: 500, repeat: true });
        m.advance_clock(500 + 2 * DAY);
        let times: Vec<_> = m.freezes.of_kind(FreezeKind::Agreed).map(|s| s.timestamp).collect();
        assert_eq!(times, vec![500, 500 + DAY, 500 + 2 * DAY]);
    }

    #[test]
    fn demand_zero_keeps_energy() {
        let mut m = single_phase_meter(0);
        for t in (60..=1_800).step_by(60) {
            m.accumulate(&reading(12_000.0, 0.0), 60.0, t).unwrap();
        }
        assert!((m.demand.forward.max_kw() - 12.0).abs() < 1e-9);
        let before = m.bank.clone();
        m.zero(ZeroKind::Demand, 2).unwrap();
        assert_eq!(m.demand.forward.max_kw(), 0.0);
        assert_eq!(m.bank, before);
        let ev = m.events.recent(1).unwrap();
        assert_eq!(ev.kind, EventKind::DemandZeroed);
        assert!(matches!(ev.detail, EventDetail::MaxDemandKw(kw) if (kw - 12.0).abs() < 1e-9));
    }

    #[test]
    fn meter_zero_records_pre_zero_totals() {
        let mut m = single_phase_meter(0);
        m.accumulate(&reading(1_000.0, 0.0), 3_600.0, 3_600).unwrap();
        let totals = m.bank.totals();
        assert_eq!(m.zero(ZeroKind::Meter, 9), Err(RegisterError::AuthFailure));
        m.zero(ZeroKind::Meter, 2).unwrap();
        assert_eq!(m.bank.active_fwd, 0);
        let ev = m.events.last_of(EventKind::MeterZeroed).unwrap();
        assert_eq!(ev.totals, totals);
    }

    #[test]
    fn clock_adjustment_limits() {
        let start = from_fields(2024, 5, 6, 12, 0, 0).unwrap();
        let mut m = single_phase_meter(start);
        m.set_clock(start + 2, 4).unwrap();
        assert_eq!(m.events.recent(1).unwrap().kind, EventKind::TimeSet);
        assert!(matches!(
            m.set_clock(m.clock - 600, 4),
            Err(RegisterError::AdjustmentTooLarge { .. })
        ));
        m.broadcast_sync(m.clock + 10).unwrap();
        assert_eq!(m.broadcast_sync(m.clock + 10), Err(RegisterError::BroadcastNotAllowed));
    }

    #[test]
    fn clock_adjust_across_tariff_boundary() {
        let start = from_fields(2024, 5, 6, 7, 58, 0).unwrap();
        let mut m = single_phase_meter(start);
        m.set_clock(start + 180, 4).unwrap();
        // 08:01 is in the peak period
        m.accumulate(&reading(1_000.0, 0.0), 60.0, m.clock + 60).unwrap();
        assert_eq!(m.bank.per_rate_fwd[1], m.bank.active_fwd);
        assert_eq!(m.bank.per_rate_fwd[3], 0);
    }

    #[test]
    fn step_across_tariff_boundary_is_split() {
        let start = from_fields(2024, 5, 6, 7, 30, 0).unwrap();
        let mut m = single_phase_meter(start);
        // 07:30..08:30 at 1 kW: half valley, half peak
        m.accumulate(&reading(1_000.0, 0.0), 3_600.0, start + 3_600).unwrap();
        // one register unit may sit in the carry
        assert!(m.bank.per_rate_fwd[3].abs_diff(500_000_000) <= 1);
        assert!(m.bank.per_rate_fwd[1].abs_diff(500_000_000) <= 1);
        assert!(m.bank.rate_partition_holds());
        // a step ending exactly at 08:00 stays in the valley
        let mut m = single_phase_meter(start);
        m.accumulate(&reading(1_000.0, 0.0), 1_800.0, start + 1_800).unwrap();
        assert_eq!(m.bank.per_rate_fwd[3], m.bank.active_fwd);
    }

    #[test]
    fn voltage_loss_after_one_second() {
        let mut m = single_phase_meter(0);
        let low = PowerReading::from_totals(0.0, 0.0, 100.0, 0.0);
        m.accumulate(&low, 0.5, 1).unwrap();
        assert_eq!(m.events.count_of(EventKind::PhaseVoltageLoss), 0);
        m.accumulate(&low, 0.5, 2).unwrap();
        m.accumulate(&low, 0.5, 3).unwrap();
        assert_eq!(m.events.count_of(EventKind::PhaseVoltageLoss), 1);
    }

    #[test]
    fn prepaid_cutoff_logs_event() {
        let mut m = single_phase_meter(0);
        m.calendar = TariffCalendar::single_rate();
        m.bank = EnergyRegisterBank::new(1, 1);
        m.demand = DemandState::new(DemandMode::Sliding, 15, 1, 1).unwrap();
        m.billing = BillingState::prepaid(Pricing::TimeOfUse(vec![1.5]), 1.0, 0.2);
        m.accumulate(&reading(1_000.0, 0.0), 3_600.0, 3_600).unwrap();
        assert_eq!(m.billing.load_switch, LoadSwitch::Open);
        assert_eq!(m.events.count_of(EventKind::LoadSwitchOpened), 1);
        assert_eq!(m.events.count_of(EventKind::BalanceAlarm), 1);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let mut m = single_phase_meter(0);
        m.accumulate(&reading(1_234.5, -50.0), 10.0, 10).unwrap();
        let text = m.to_json();
        assert_eq!(MeterState::from_json(&text).unwrap(), m);
        let bumped = text.replacen("\"version\": 1", "\"version\": 7", 1);
        assert_eq!(
            MeterState::from_json(&bumped),
            Err(RegisterError::UnsupportedVersion(7))
        );
    }
}
