//! Accuracy-class verification over the current working range, algorithm
//! comparison sweeps, and scenario files for the command-line tools.

mod compare;
mod oracle;
mod scenario;

pub use compare::{
    compare_algorithms, default_comparison_scenarios, rows_to_csv, Algorithm, ComparisonRow, ComparisonScenario,
};
pub use oracle::analytic_energy;
pub use scenario::{
    run_scenario, scenario_spectra, spectrum_csv, Integration, LoadSegment, Scenario, ScenarioOutcome, ScenarioSummary,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmonics::HarmonicsError;
use crate::metrology::{self, MetrologyError};
use crate::registers::RegisterError;
use crate::waveform::{self, AdcConfig, FrontEnd, PhaseSpec, WaveformError, WaveformSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid current range: {0}")]
    RangeInvalid(String),
    #[error("unknown accuracy class {0:?}")]
    UnknownClass(String),
    #[error("invalid pipeline: {0}")]
    Pipeline(String),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentRange {
    pub i_st: f64,
    pub i_min: f64,
    pub i_tr: f64,
    pub i_max: f64,
}

impl Default for CurrentRange {
    /// Harness default for a 5 A meter.
    fn default() -> Self {
        Self {
            i_st: 0.02,
            i_min: 0.05,
            i_tr: 0.25,
            i_max: 10.0,
        }
    }
}

impl CurrentRange {
    pub fn validate(&self) -> Result<(), BenchError> {
        if 0.0 < self.i_st && self.i_st < self.i_min && self.i_min < self.i_tr && self.i_tr < self.i_max {
            Ok(())
        } else {
            Err(BenchError::RangeInvalid(format!(
                "need 0 < I_st < I_min < I_tr < I_max, got {} / {} / {} / {}",
                self.i_st, self.i_min, self.i_tr, self.i_max
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyClassSpec {
    pub name: String,
    pub limit_pct: f64,
    /// Limit multiplier for I_min ≤ I < I_tr.
    pub low_current_factor: f64,
}

impl AccuracyClassSpec {
    pub const NAMES: [&'static str; 5] = ["0.1S", "0.2S", "0.5S", "1", "2"];

    /// One of the standard classes; the limit is the class number in percent.
    pub fn named(name: &str) -> Result<Self, BenchError> {
        let limit_pct = match name {
            "0.1S" => 0.1,
            "0.2S" => 0.2,
            "0.5S" => 0.5,
            "1" => 1.0,
            "2" => 2.0,
            _ => return Err(BenchError::UnknownClass(name.to_string())),
        };
        Ok(Self::custom(name, limit_pct))
    }

    /// Any other class, with a caller-supplied limit.
    pub fn custom(name: &str, limit_pct: f64) -> Self {
        Self {
            name: name.to_string(),
            limit_pct,
            low_current_factor: 2.0,
        }
    }

    pub fn limit_at(&self, current: f64, range: &CurrentRange) -> f64 {
        if current < range.i_tr {
            self.limit_pct * self.low_current_factor
        } else {
            self.limit_pct
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerFactorPoint {
    Unity,
    /// 0.5 inductive.
    Lagging05,
    /// 0.8 capacitive.
    Leading08,
}

impl PowerFactorPoint {
    pub const ALL: [PowerFactorPoint; 3] = [Self::Unity, Self::Lagging05, Self::Leading08];

    /// Angle by which the current lags the voltage.
    pub fn phi_deg(self) -> f64 {
        match self {
            Self::Unity => 0.0,
            Self::Lagging05 => 60.0,
            Self::Leading08 => -(0.8f64.acos().to_degrees()),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Unity => "1.0",
            Self::Lagging05 => "0.5L",
            Self::Leading08 => "0.8C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rate_hz: f64,
    pub fundamental_hz: f64,
    pub voltage_rms: f64,
    pub cycles: u32,
    /// Converter resolution; `None` bypasses quantization.
    pub adc_bits: Option<u32>,
    /// Full scale as a multiple of the largest expected peak.
    pub headroom: f64,
    pub hpf: bool,
    pub integration: Integration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rate_hz: waveform::DEFAULT_RATE_HZ,
            fundamental_hz: 50.0,
            voltage_rms: 230.0,
            cycles: 15,
            adc_bits: Some(24),
            headroom: 1.2,
            hpf: true,
            integration: Integration::PointProduct,
        }
    }
}

impl PipelineConfig {
    pub fn ideal() -> Self {
        Self {
            adc_bits: None,
            hpf: false,
            ..Self::default()
        }
    }

    fn front_end(&self, i_max: f64) -> FrontEnd {
        match self.adc_bits {
            None => FrontEnd::bypass(),
            Some(bits) => FrontEnd::new(
                AdcConfig::new(bits, self.headroom * std::f64::consts::SQRT_2 * self.voltage_rms),
                AdcConfig::new(bits, self.headroom * std::f64::consts::SQRT_2 * i_max),
            ),
        }
    }
}

/// Measured and reference energy (W·s) of one frame through the pipeline.
pub fn measure_point(current: f64, phi_deg: f64, i_max: f64, cfg: &PipelineConfig) -> Result<(f64, f64), BenchError> {
    let spec = WaveformSpec::single(
        cfg.fundamental_hz,
        PhaseSpec::sinusoidal(cfg.voltage_rms, current, phi_deg),
    );
    let frame = waveform::synthesize(&spec, cfg.rate_hz, cfg.cycles)?;
    let duration = frame.duration();
    let mut processed = waveform::quantize(&frame, &cfg.front_end(i_max));
    if cfg.hpf {
        processed = waveform::hpf_dc_block(&processed);
    }
    let measured = cfg.integration.frame_energy(&processed)?;
    Ok((measured, analytic_energy(&spec, duration)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub current: f64,
    pub power_factor: PowerFactorPoint,
    pub error_pct: f64,
    pub limit_pct: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyVerdict {
    pub class: String,
    pub points: Vec<GridPoint>,
    /// Energy registered at I_st.
    pub starting_energy_ws: f64,
    pub starts: bool,
    pub pass: bool,
    /// Index of the point with the largest error-to-limit ratio.
    pub worst: Option<usize>,
}

impl AccuracyVerdict {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,current_a,pf,error_pct,limit_pct,pass\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{:.9},{},{}",
                self.class,
                p.current,
                p.power_factor.label(),
                p.error_pct,
                p.limit_pct,
                p.pass
            );
        }
        out
    }
}

/// Standard grid currents: I_min, I_tr, 0.1·I_max, I_max.
pub fn default_grid(range: &CurrentRange) -> Vec<f64> {
    vec![range.i_min, range.i_tr, 0.1 * range.i_max, range.i_max]
}

/// `count` log-spaced currents from I_max/`span` up to I_max.
pub fn span_grid(range: &CurrentRange, span: f64, count: usize) -> Vec<f64> {
    let lo = range.i_max / span;
    (0..count)
        .map(|k| lo * (span).powf(k as f64 / (count.max(2) - 1) as f64))
        .collect()
}

pub fn run_accuracy_grid(
    range: &CurrentRange,
    class: &AccuracyClassSpec,
    currents: &[f64],
    cfg: &PipelineConfig,
) -> Result<AccuracyVerdict, BenchError> {
    range.validate()?;
    if class.limit_pct.is_nan() || class.limit_pct <= 0.0 {
        return Err(BenchError::Pipeline(format!(
            "class limit {} must be positive",
            class.limit_pct
        )));
    }
    let mut points = Vec::new();
    for &current in currents {
        for pf in PowerFactorPoint::ALL {
            let (measured, reference) = measure_point(current, pf.phi_deg(), range.i_max, cfg)?;
            let error_pct = 100.0 * (measured - reference) / reference;
            let limit_pct = class.limit_at(current, range);
            points.push(GridPoint {
                current,
                power_factor: pf,
                error_pct,
                limit_pct,
                pass: error_pct.abs() < limit_pct,
            });
        }
    }
    let (starting_energy_ws, _) = measure_point(range.i_st, 0.0, range.i_max, cfg)?;
    let starts = starting_energy_ws > 0.0;
    let worst = points
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1.error_pct.abs() / a.1.limit_pct).total_cmp(&(b.1.error_pct.abs() / b.1.limit_pct)))
        .map(|(i, _)| i);
    Ok(AccuracyVerdict {
        class: class.name.clone(),
        pass: starts && points.iter().all(|p| p.pass),
        points,
        starting_energy_ws,
        starts,
        worst,
    })
}

impl Integration {
    /// Frame energy in W·s.
    pub fn frame_energy(&self, frame: &waveform::SampleFrame) -> Result<f64, MetrologyError> {
        match *self {
            Integration::PointProduct => Ok(metrology::active_power_point_product(frame)?.total * frame.duration()),
            Integration::NewtonCotes(order) => metrology::frame_energy_newton_cotes(frame, order),
        }
    }
}
