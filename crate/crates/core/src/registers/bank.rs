//! Energy registers.
//!
//! Registers count whole micro-watt-hours (µWh, µvarh). Each accumulation
//! step converts its energy once, through a per-register carry, so every
//! register that receives the same step receives the same integer delta
//! and sub-quantum energy is never lost.

use serde::{Deserialize, Serialize};

use crate::metrology::Quadrant;

/// Register units per kWh.
pub const UNITS_PER_KWH: u64 = 1_000_000_000;
/// Units in one displayed quantum (0.01 kWh).
pub const UNITS_PER_HUNDREDTH: u64 = 10_000_000;

/// Converts register units to displayed hundredths of a kWh, rounding half
/// to even.
pub fn to_hundredths(units: u64) -> u64 {
    let (q, r) = (units / UNITS_PER_HUNDREDTH, units % UNITS_PER_HUNDREDTH);
    let half = UNITS_PER_HUNDREDTH / 2;
    if r > half || (r == half && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

pub fn to_kwh(units: u64) -> f64 {
    units as f64 / UNITS_PER_KWH as f64
}

/// Moves `delta` (register units, ≥ 0) through `carry`, returning the whole
/// units to credit.
fn take(carry: &mut f64, delta: f64) -> u64 {
    let t = *carry + delta.max(0.0);
    let whole = t.floor();
    *carry = t - whole;
    whole as u64
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Carries {
    active_fwd: f64,
    active_rev: f64,
    phase_fwd: Vec<f64>,
    phase_rev: Vec<f64>,
    reactive: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRegisterBank {
    pub active_fwd: u64,
    pub active_rev: u64,
    pub per_rate_fwd: Vec<u64>,
    pub per_rate_rev: Vec<u64>,
    pub per_phase_fwd: Vec<u64>,
    pub per_phase_rev: Vec<u64>,
    /// Reactive energy by quadrant I..IV.
    pub reactive: [u64; 4],
    /// Σ U_rms²·t per phase, V²h.
    pub v2h: Vec<f64>,
    /// Σ I_rms²·t per phase, A²h.
    pub i2h: Vec<f64>,
    carries: Carries,
}

/// The headline totals recorded with events and freezes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegisterTotals {
    pub active_fwd: u64,
    pub active_rev: u64,
    pub reactive: [u64; 4],
}

/// Signed combination of the forward and reverse active registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedActive {
    pub forward: i8,
    pub reverse: i8,
}

impl Default for CombinedActive {
    fn default() -> Self {
        Self {
            forward: 1,
            reverse: -1,
        }
    }
}

/// Signed combination of the four quadrant reactive registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedReactive(pub [i8; 4]);

impl CombinedReactive {
    pub const DEFAULT_1: Self = Self([1, 1, 0, 0]);
    pub const DEFAULT_2: Self = Self([0, 0, 1, 1]);
}

impl EnergyRegisterBank {
    pub fn new(rate_count: usize, phase_count: usize) -> Self {
        Self {
            active_fwd: 0,
            active_rev: 0,
            per_rate_fwd: vec![0; rate_count],
            per_rate_rev: vec![0; rate_count],
            per_phase_fwd: vec![0; phase_count],
            per_phase_rev: vec![0; phase_count],
            reactive: [0; 4],
            v2h: vec![0.0; phase_count],
            i2h: vec![0.0; phase_count],
            carries: Carries {
                phase_fwd: vec![0.0; phase_count],
                phase_rev: vec![0.0; phase_count],
                ..Default::default()
            },
        }
    }

    pub fn rate_count(&self) -> usize {
        self.per_rate_fwd.len()
    }

    pub fn phase_count(&self) -> usize {
        self.per_phase_fwd.len()
    }

    pub fn totals(&self) -> RegisterTotals {
        RegisterTotals {
            active_fwd: self.active_fwd,
            active_rev: self.active_rev,
            reactive: self.reactive,
        }
    }

    /// Credits total active energy `wh` (signed by direction) to the total
    /// and to `rate`. Returns the units credited.
    pub(crate) fn credit_active(&mut self, wh: f64, rate: usize) -> u64 {
        let units = wh.abs() * 1e6;
        if wh >= 0.0 {
            let d = take(&mut self.carries.active_fwd, units);
            self.active_fwd += d;
            self.per_rate_fwd[rate] += d;
            d
        } else {
            let d = take(&mut self.carries.active_rev, units);
            self.active_rev += d;
            self.per_rate_rev[rate] += d;
            d
        }
    }

    pub(crate) fn credit_phase(&mut self, phase: usize, wh: f64) {
        if phase >= self.phase_count() {
            return;
        }
        let units = wh.abs() * 1e6;
        if wh >= 0.0 {
            self.per_phase_fwd[phase] += take(&mut self.carries.phase_fwd[phase], units);
        } else {
            self.per_phase_rev[phase] += take(&mut self.carries.phase_rev[phase], units);
        }
    }

    pub(crate) fn credit_reactive(&mut self, quadrant: Quadrant, varh: f64) -> u64 {
        let i = quadrant.index();
        let d = take(&mut self.carries.reactive[i], varh.abs() * 1e6);
        self.reactive[i] += d;
        d
    }

    pub(crate) fn credit_squares(&mut self, u_rms: &[f64], i_rms: &[f64], hours: f64) {
        for (acc, u) in self.v2h.iter_mut().zip(u_rms) {
            *acc += u * u * hours;
        }
        for (acc, i) in self.i2h.iter_mut().zip(i_rms) {
            *acc += i * i * hours;
        }
    }

    pub fn combined_active(&self, cfg: CombinedActive) -> i128 {
        i128::from(cfg.forward) * i128::from(self.active_fwd) + i128::from(cfg.reverse) * i128::from(self.active_rev)
    }

    pub fn combined_reactive(&self, cfg: CombinedReactive) -> i128 {
        cfg.0
            .iter()
            .zip(&self.reactive)
            .map(|(&c, &r)| i128::from(c) * i128::from(r))
            .sum()
    }

    pub fn rate_partition_holds(&self) -> bool {
        self.per_rate_fwd.iter().sum::<u64>() == self.active_fwd
            && self.per_rate_rev.iter().sum::<u64>() == self.active_rev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_display() {
        assert_eq!(to_hundredths(1_150_000_000), 115);
        assert_eq!(to_hundredths(5_000_000), 0);
        assert_eq!(to_hundredths(15_000_000), 2);
        assert_eq!(to_hundredths(5_000_001), 1);
        assert_eq!(to_hundredths(4_999_999), 0);
    }

    #[test]
    fn carry_loses_nothing() {
        let mut b = EnergyRegisterBank::new(2, 1);
        for _ in 0..1000 {
            b.credit_active(0.0003, 1);
        }
        // 0.3 Wh = 300000 µWh
        assert!((b.active_fwd as i64 - 300_000).abs() <= 1);
        assert!(b.rate_partition_holds());
        assert_eq!(b.per_rate_fwd[0], 0);
    }

    #[test]
    fn combined_defaults() {
        let mut b = EnergyRegisterBank::new(1, 1);
        b.credit_active(10.0, 0);
        b.credit_active(-4.0, 0);
        b.credit_reactive(Quadrant::II, 3.0);
        b.credit_reactive(Quadrant::IV, 1.0);
        assert_eq!(b.combined_active(CombinedActive::default()), 6_000_000);
        assert_eq!(b.combined_reactive(CombinedReactive::DEFAULT_1), 3_000_000);
        assert_eq!(b.combined_reactive(CombinedReactive::DEFAULT_2), 1_000_000);
        assert_eq!(b.combined_reactive(CombinedReactive([1, -1, 1, -1])), -4_000_000);
    }
}
