//! Energy-to-pulse conversion for the impulse output.

use serde::{Deserialize, Serialize};

pub const DEFAULT_METER_CONSTANT: f64 = 6400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    /// Impulses per kWh.
    pub meter_constant: f64,
    /// Energy not yet emitted as a pulse, Wh.
    #[serde(default)]
    pub residual: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            meter_constant: DEFAULT_METER_CONSTANT,
            residual: 0.0,
        }
    }
}

impl PulseConfig {
    /// Energy represented by one impulse, Wh.
    pub fn wh_per_pulse(&self) -> f64 {
        1000.0 / self.meter_constant
    }
}

/// Converts `delta_wh` (one direction, ≥ 0) into whole pulses, carrying the
/// remainder in the returned residual.
///
/// The residual is kept in units of pulses internally so that the carried
/// fraction round-trips without drift; exact pulse boundaries are snapped
/// to absorb the last ulp of accumulated rounding.
pub fn energy_to_pulses(delta_wh: f64, cfg: &PulseConfig) -> (u64, f64) {
    let per_pulse = cfg.wh_per_pulse();
    let (pulses, fraction) = split_units((cfg.residual + delta_wh.max(0.0)) / per_pulse);
    (pulses, fraction * per_pulse)
}

/// Whole and fractional pulse units; a fraction within 1e-9 of a whole
/// pulse is rounding noise and completes the pulse.
fn split_units(units: f64) -> (u64, f64) {
    let mut whole = units.floor();
    if units - whole > 1.0 - 1e-9 {
        whole += 1.0;
    }
    (whole as u64, (units - whole).max(0.0))
}

/// Stateful pulse accumulator for one energy direction, counting in
/// pulse units so the carry is exact between calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseCounter {
    pub meter_constant: f64,
    pub pulses: u64,
    /// Fractional pulse carried forward, in [0, 1).
    pub fraction: f64,
}

impl PulseCounter {
    pub fn new(meter_constant: f64) -> Self {
        Self {
            meter_constant,
            pulses: 0,
            fraction: 0.0,
        }
    }

    /// Feeds `delta_wh`; returns the pulses emitted by this call.
    pub fn feed(&mut self, delta_wh: f64) -> u64 {
        let (emitted, fraction) = split_units(self.fraction + delta_wh.max(0.0) * self.meter_constant / 1000.0);
        self.fraction = fraction;
        self.pulses += emitted;
        emitted
    }

    pub fn residual_wh(&self) -> f64 {
        self.fraction * 1000.0 / self.meter_constant
    }
}

impl Default for PulseCounter {
    fn default() -> Self {
        Self::new(DEFAULT_METER_CONSTANT)
    }
}
