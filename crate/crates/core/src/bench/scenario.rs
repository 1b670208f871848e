//! Scenario files: a meter configuration plus a sequence of stationary load
//! segments, replayed through the full measurement chain into the registers.

use std::fmt::Write as _;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::harmonics::{self, FrameSpectrum};
use crate::metrology::{self, CompensationConfig, PowerReading};
use crate::registers::{to_hundredths, BillingState, FreezeKind, MeterConfig, MeterState, TariffCalendar};
use crate::time::{self, Timestamp};
use crate::waveform::{self, FrontEnd, SampleFrame, WaveformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    #[default]
    PointProduct,
    NewtonCotes(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSegment {
    pub duration_s: i64,
    /// Absent for outages.
    #[serde(default)]
    pub waveform: Option<WaveformSpec>,
    /// Supply interrupted for the whole segment.
    #[serde(default)]
    pub outage: bool,
}

fn default_address() -> u64 {
    1
}
fn default_step() -> i64 {
    1
}
fn default_rate() -> f64 {
    waveform::DEFAULT_RATE_HZ
}
fn default_cycles() -> u32 {
    15
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_address")]
    pub address: u64,
    pub start: NaiveDateTime,
    /// Accumulation step, seconds.
    #[serde(default = "default_step")]
    pub step_s: i64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Cycles per measurement frame.
    #[serde(default = "default_cycles")]
    pub frame_cycles: u32,
    #[serde(default)]
    pub adc: Option<FrontEnd>,
    #[serde(default = "default_true")]
    pub hpf: bool,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default)]
    pub compensation: Option<CompensationConfig>,
    #[serde(default)]
    pub config: MeterConfig,
    #[serde(default)]
    pub calendar: TariffCalendar,
    #[serde(default)]
    pub billing: Option<BillingState>,
    pub segments: Vec<LoadSegment>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| BenchError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Scenario(m));
        if self.step_s <= 0 {
            return bad("step_s must be positive".into());
        }
        if self.frame_cycles == 0 {
            return bad("frame_cycles must be positive".into());
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.duration_s <= 0 {
                return bad(format!("segment {k}: duration must be positive"));
            }
            match (&seg.waveform, seg.outage) {
                (None, false) => return bad(format!("segment {k}: waveform required unless outage")),
                (Some(w), _) => {
                    w.validate()?;
                    w.check_sampling(self.rate_hz)?;
                }
                (None, true) => {}
            }
        }
        Ok(())
    }

    pub fn start_timestamp(&self) -> Timestamp {
        time::from_datetime(self.start)
    }

    /// Measurement frame of `spec` after the converter, DC block and
    /// transformer correction.
    pub fn processed_frame(&self, spec: &WaveformSpec) -> Result<SampleFrame, BenchError> {
        let mut frame = waveform::synthesize(spec, self.rate_hz, self.frame_cycles)?;
        if let Some(fe) = &self.adc {
            frame = waveform::quantize(&frame, fe);
        }
        if self.hpf {
            frame = waveform::hpf_dc_block(&frame);
        }
        if let Some(c) = &self.compensation {
            frame = metrology::apply_compensation(&frame, c);
        }
        Ok(frame)
    }

    /// Power reading for one stationary load.
    pub fn reading(&self, spec: &WaveformSpec) -> Result<PowerReading, BenchError> {
        let frame = self.processed_frame(spec)?;
        let p = match self.integration {
            Integration::PointProduct => metrology::active_power_point_product(&frame)?,
            Integration::NewtonCotes(order) => {
                let mut p = metrology::active_power_point_product(&frame)?;
                p.total = metrology::frame_energy_newton_cotes(&frame, order)? / frame.duration();
                p
            }
        };
        let q = metrology::reactive_power_hilbert(&frame)?;
        let mut reading = metrology::derive_aggregates(&frame, &p, &q)?;
        if let Some(c) = &self.compensation {
            reading = metrology::apply_loss_compensation(&reading, c);
        }
        Ok(reading)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub clock: NaiveDateTime,
    pub active_fwd_kwh: f64,
    pub active_rev_kwh: f64,
    pub per_rate_fwd_kwh: Vec<f64>,
    pub reactive_kvarh: [f64; 4],
    pub max_demand_fwd_kw: f64,
    pub max_demand_rev_kw: f64,
    pub pulses_fwd: u64,
    pub pulses_rev: u64,
    pub events: u64,
    pub freezes: usize,
    pub balance: f64,
    pub rate_partition_holds: bool,
}

impl ScenarioSummary {
    pub fn of(name: &str, m: &MeterState) -> Self {
        let kwh = |units: u64| to_hundredths(units) as f64 / 100.0;
        Self {
            name: name.to_string(),
            clock: time::to_datetime(m.clock),
            active_fwd_kwh: kwh(m.bank.active_fwd),
            active_rev_kwh: kwh(m.bank.active_rev),
            per_rate_fwd_kwh: m.bank.per_rate_fwd.iter().map(|&u| kwh(u)).collect(),
            reactive_kvarh: m.bank.reactive.map(kwh),
            max_demand_fwd_kw: m.demand.forward.max_kw(),
            max_demand_rev_kw: m.demand.reverse.max_kw(),
            pulses_fwd: m.pulses_fwd.pulses,
            pulses_rev: m.pulses_rev.pulses,
            events: m.events.written(),
            freezes: FreezeKind::ALL.iter().map(|&k| m.freezes.count(k)).sum(),
            balance: m.billing.balance,
            rate_partition_holds: m.bank.rate_partition_holds(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub state: MeterState,
    pub summary: ScenarioSummary,
}

/// Replays `scenario` into a fresh meter, or continues `resume` from its
/// clock.
pub fn run_scenario(scenario: &Scenario, resume: Option<MeterState>) -> Result<ScenarioOutcome, BenchError> {
    scenario.validate()?;
    let mut meter = match resume {
        Some(m) => m,
        None => {
            let mut m = MeterState::new(
                scenario.address,
                scenario.config.clone(),
                scenario.calendar.clone(),
                scenario.start_timestamp(),
            )?;
            if let Some(b) = &scenario.billing {
                b.validate(usize::from(scenario.calendar.rate_count))?;
                m.billing = b.clone();
            }
            m
        }
    };
    for seg in &scenario.segments {
        let end = meter.clock + seg.duration_s;
        if seg.outage {
            meter.power_down(meter.clock);
            meter.advance_clock(end);
            meter.power_up(end);
            continue;
        }
        let spec = seg.waveform.as_ref().expect("validated");
        let reading = scenario.reading(spec)?;
        let mut t = meter.clock;
        while t < end {
            let dt = scenario.step_s.min(end - t);
            t += dt;
            meter.accumulate(&reading, dt as f64, t)?;
        }
    }
    let summary = ScenarioSummary::of(&scenario.name, &meter);
    Ok(ScenarioOutcome { state: meter, summary })
}

/// Spectrum of every non-outage segment's measurement frame.
pub fn scenario_spectra(scenario: &Scenario) -> Result<Vec<(usize, FrameSpectrum)>, BenchError> {
    scenario.validate()?;
    let mut out = Vec::new();
    for (k, seg) in scenario.segments.iter().enumerate() {
        if let Some(spec) = &seg.waveform {
            let frame = scenario.processed_frame(spec)?;
            out.push((k, harmonics::analyze_spectrum(&frame)?));
        }
    }
    Ok(out)
}

/// CSV with one row per (segment, phase, order).
pub fn spectrum_csv(spectra: &[(usize, FrameSpectrum)]) -> String {
    let mut out = String::from("segment,phase,order,U_rms,I_rms,phase_u,phase_i,P_k\n");
    for (seg, spectrum) in spectra {
        for (ph, p) in spectrum.phases.iter().enumerate() {
            let bd = harmonics::harmonic_power(&p.voltage, &p.current);
            for k in 1..=p.voltage.max_order() {
                let _ = writeln!(
                    out,
                    "{seg},{ph},{k},{:.6},{:.6},{:.4},{:.4},{:.6}",
                    p.voltage.amplitude(k),
                    p.current.amplitude(k),
                    p.voltage.phase(k),
                    p.current.phase(k),
                    bd.order(k)
                );
            }
        }
    }
    out
}
