//! Ladder and time-of-use pricing with a prepaid balance and load switch.

use serde::{Deserialize, Serialize};

use super::RegisterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderTier {
    /// Upper bound of the tier in billing-period kWh; `None` is unbounded.
    pub up_to_kwh: Option<f64>,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pricing {
    Ladder(Vec<LadderTier>),
    /// Price per kWh indexed by rate.
    TimeOfUse(Vec<f64>),
}

impl Default for Pricing {
    fn default() -> Self {
        Pricing::Ladder(vec![LadderTier {
            up_to_kwh: None,
            price: 0.5,
        }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadSwitch {
    #[default]
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BillOutcome {
    pub charge: f64,
    /// The balance fell to or below the alarm threshold during this call.
    pub alarm: bool,
    /// The load switch opened during this call.
    pub opened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingState {
    pub pricing: Pricing,
    pub period_kwh: f64,
    pub prepaid: bool,
    pub balance: f64,
    pub alarm_threshold: f64,
    pub load_switch: LoadSwitch,
    alarm_raised: bool,
}

impl Default for BillingState {
    fn default() -> Self {
        Self {
            pricing: Pricing::default(),
            period_kwh: 0.0,
            prepaid: false,
            balance: 0.0,
            alarm_threshold: 0.0,
            load_switch: LoadSwitch::Closed,
            alarm_raised: false,
        }
    }
}

/// Charge for advancing the period consumption from `start` by `delta` kWh.
pub fn ladder_charge(tiers: &[LadderTier], start: f64, delta: f64) -> f64 {
    let end = start + delta;
    let mut lower = 0.0;
    let mut charge = 0.0;
    for tier in tiers {
        let upper = tier.up_to_kwh.unwrap_or(f64::INFINITY);
        let portion = end.min(upper) - start.max(lower);
        if portion > 0.0 {
            charge += portion * tier.price;
        }
        if upper >= end {
            break;
        }
        lower = upper;
    }
    charge
}

impl BillingState {
    pub fn prepaid(pricing: Pricing, balance: f64, alarm_threshold: f64) -> Self {
        Self {
            pricing,
            prepaid: true,
            balance,
            alarm_threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self, rate_count: usize) -> Result<(), RegisterError> {
        match &self.pricing {
            Pricing::Ladder(tiers) => {
                if tiers.is_empty() {
                    return Err(RegisterError::InvalidConfig("ladder has no tiers".into()));
                }
                let bounds: Vec<f64> = tiers.iter().map(|t| t.up_to_kwh.unwrap_or(f64::INFINITY)).collect();
                if bounds.windows(2).any(|w| w[0] >= w[1]) || bounds[0] <= 0.0 {
                    return Err(RegisterError::InvalidConfig(
                        "ladder thresholds must strictly increase".into(),
                    ));
                }
                if bounds.last() != Some(&f64::INFINITY) {
                    return Err(RegisterError::InvalidConfig(
                        "last ladder tier must be unbounded".into(),
                    ));
                }
            }
            Pricing::TimeOfUse(prices) if prices.len() < rate_count => {
                return Err(RegisterError::InvalidConfig(format!(
                    "{} TOU prices for {rate_count} rates",
                    prices.len()
                )));
            }
            Pricing::TimeOfUse(_) => {}
        }
        Ok(())
    }

    /// Bills `delta_kwh` consumed under `rate`.
    pub fn bill(&mut self, delta_kwh: f64, rate: usize) -> BillOutcome {
        let delta = delta_kwh.max(0.0);
        let charge = match &self.pricing {
            Pricing::Ladder(tiers) => ladder_charge(tiers, self.period_kwh, delta),
            Pricing::TimeOfUse(prices) => delta * prices.get(rate).copied().unwrap_or(0.0),
        };
        self.period_kwh += delta;
        let mut out = BillOutcome {
            charge,
            ..BillOutcome::default()
        };
        if !self.prepaid {
            return out;
        }
        self.balance -= charge;
        if self.balance <= self.alarm_threshold && !self.alarm_raised {
            self.alarm_raised = true;
            out.alarm = true;
        }
        if self.balance <= 0.0 && self.load_switch == LoadSwitch::Closed {
            self.load_switch = LoadSwitch::Open;
            out.opened = true;
        }
        out
    }

    /// Adds credit; the switch recloses once the balance is positive.
    pub fn recharge(&mut self, amount: f64) {
        self.balance += amount;
        if self.balance > self.alarm_threshold {
            self.alarm_raised = false;
        }
        if self.balance > 0.0 {
            self.load_switch = LoadSwitch::Closed;
        }
    }

    pub fn start_period(&mut self) {
        self.period_kwh = 0.0;
    }
}
