//! Test-signal synthesis and the sampling front end.
//!
//! Frames produced here always start at a zero crossing of the reference
//! phase and, at nominal frequency, span an exact integer number of
//! fundamental cycles. Off-nominal frames are handled downstream by the
//! resampling step in [`crate::harmonics`].

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest harmonic order the meter resolves.
pub const MAX_ORDER: u32 = 49;

/// Default front-end sampling rate.
pub const DEFAULT_RATE_HZ: f64 = 12_800.0;

/// Phase displacement between consecutive phases of a balanced system.
pub const PHASE_DISPLACEMENT_DEG: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error(
        "sampling too sparse: {points_per_cycle:.3} points per cycle, need more than {required} for order {order}"
    )]
    SamplingTooSparse {
        points_per_cycle: f64,
        required: u32,
        order: u32,
    },
    #[error("harmonic order {0} exceeds the maximum of {MAX_ORDER}")]
    OrderTooHigh(u32),
    #[error("invalid waveform spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicComponent {
    pub order: u32,
    pub amplitude_rms: f64,
    #[serde(rename = "phase_deg")]
    pub phase_deg: f64,
}

impl HarmonicComponent {
    pub fn new(order: u32, amplitude_rms: f64, phase_deg: f64) -> Self {
        Self {
            order,
            amplitude_rms,
            phase_deg,
        }
    }
}

/// One measured quantity (a voltage or a current) of one phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub components: Vec<HarmonicComponent>,
    #[serde(default)]
    pub dc_offset: f64,
}

impl ChannelSpec {
    pub fn new(components: Vec<HarmonicComponent>) -> Self {
        Self {
            components,
            dc_offset: 0.0,
        }
    }

    pub fn sine(amplitude_rms: f64, phase_deg: f64) -> Self {
        Self::new(vec![HarmonicComponent::new(1, amplitude_rms, phase_deg)])
    }

    pub fn with_dc(mut self, dc_offset: f64) -> Self {
        self.dc_offset = dc_offset;
        self
    }

    pub fn max_order(&self) -> u32 {
        self.components.iter().map(|c| c.order).max().unwrap_or(0)
    }

    /// Peak instantaneous magnitude bound (sum of component peaks plus DC).
    pub fn peak_bound(&self) -> f64 {
        self.dc_offset.abs() + self.components.iter().map(|c| SQRT_2 * c.amplitude_rms).sum::<f64>()
    }

    fn validate(&self) -> Result<(), WaveformError> {
        let mut seen = [false; MAX_ORDER as usize + 1];
        for c in &self.components {
            if c.order == 0 {
                return Err(WaveformError::InvalidSpec("harmonic order must be >= 1".into()));
            }
            if c.order > MAX_ORDER {
                return Err(WaveformError::OrderTooHigh(c.order));
            }
            if !c.amplitude_rms.is_finite() || c.amplitude_rms < 0.0 {
                return Err(WaveformError::InvalidSpec(format!(
                    "order {} amplitude must be finite and >= 0",
                    c.order
                )));
            }
            if !c.phase_deg.is_finite() {
                return Err(WaveformError::InvalidSpec(format!(
                    "order {} phase is not finite",
                    c.order
                )));
            }
            if std::mem::replace(&mut seen[c.order as usize], true) {
                return Err(WaveformError::InvalidSpec(format!("duplicate order {}", c.order)));
            }
        }
        if !self.dc_offset.is_finite() {
            return Err(WaveformError::InvalidSpec("dc offset is not finite".into()));
        }
        Ok(())
    }

    /// Instantaneous value at time `t` seconds. `shift_deg` is the phase
    /// displacement of the owning phase, applied as a time shift so that
    /// order k moves by k times the displacement.
    fn value_at(&self, fundamental_hz: f64, t: f64, shift_deg: f64) -> f64 {
        let w = 2.0 * PI * fundamental_hz * t;
        self.dc_offset
            + self
                .components
                .iter()
                .map(|c| {
                    let k = f64::from(c.order);
                    let phase = (c.phase_deg - k * shift_deg).to_radians();
                    SQRT_2 * c.amplitude_rms * (k * w + phase).sin()
                })
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub voltage: ChannelSpec,
    pub current: ChannelSpec,
}

impl PhaseSpec {
    pub fn new(voltage: ChannelSpec, current: ChannelSpec) -> Self {
        Self { voltage, current }
    }

    /// Single-frequency load: `phi_deg` is the angle by which the current
    /// lags the voltage (positive = inductive).
    pub fn sinusoidal(u_rms: f64, i_rms: f64, phi_deg: f64) -> Self {
        Self::new(ChannelSpec::sine(u_rms, 0.0), ChannelSpec::sine(i_rms, -phi_deg))
    }
}

/// Component description for a one- or three-phase waveform.
///
/// Component phases are relative to each phase's own reference; phase `m`
/// is additionally displaced by `m * 120°` of the fundamental.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub fundamental_hz: f64,
    pub phases: Vec<PhaseSpec>,
}

impl WaveformSpec {
    pub fn single(fundamental_hz: f64, phase: PhaseSpec) -> Self {
        Self {
            fundamental_hz,
            phases: vec![phase],
        }
    }

    /// Balanced three-phase system built from one phase description.
    pub fn balanced(fundamental_hz: f64, phase: PhaseSpec) -> Self {
        Self {
            fundamental_hz,
            phases: vec![phase.clone(), phase.clone(), phase],
        }
    }

    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn max_order(&self) -> u32 {
        self.phases
            .iter()
            .flat_map(|p| [p.voltage.max_order(), p.current.max_order()])
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if !(45.0..=65.0).contains(&self.fundamental_hz) {
            return Err(WaveformError::InvalidSpec(format!(
                "fundamental {} Hz outside [45, 65]",
                self.fundamental_hz
            )));
        }
        if !matches!(self.phases.len(), 1 | 3) {
            return Err(WaveformError::InvalidSpec(format!(
                "phase count must be 1 or 3, got {}",
                self.phases.len()
            )));
        }
        for p in &self.phases {
            p.voltage.validate()?;
            p.current.validate()?;
        }
        Ok(())
    }

    /// Rejects rates that give `3 * n` or fewer points per fundamental cycle,
    /// where `n` is the highest order present.
    pub fn check_sampling(&self, rate_hz: f64) -> Result<(), WaveformError> {
        check_sampling_bound(rate_hz, self.fundamental_hz, self.max_order())
    }
}

pub fn check_sampling_bound(rate_hz: f64, fundamental_hz: f64, order: u32) -> Result<(), WaveformError> {
    if !rate_hz.is_finite() || rate_hz <= 0.0 {
        return Err(WaveformError::InvalidSpec(format!(
            "sampling rate {rate_hz} must be > 0"
        )));
    }
    let order = order.max(1);
    let points_per_cycle = rate_hz / fundamental_hz;
    let required = 3 * order;
    if points_per_cycle > f64::from(required) {
        Ok(())
    } else {
        Err(WaveformError::SamplingTooSparse {
            points_per_cycle,
            required,
            order,
        })
    }
}

/// Synchronized per-phase sample blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub rate_hz: f64,
    /// Nominal fundamental the frame was generated for.
    pub fundamental_hz: f64,
    pub samples_u: Vec<Vec<f64>>,
    pub samples_i: Vec<Vec<f64>>,
    /// Simulated time of the first sample, seconds.
    pub start_time: f64,
}

impl SampleFrame {
    pub fn len(&self) -> usize {
        self.samples_u.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phase_count(&self) -> usize {
        self.samples_u.len()
    }

    pub fn step(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    /// Number of nominal fundamental cycles covered (possibly fractional).
    pub fn cycles(&self) -> f64 {
        self.len() as f64 * self.fundamental_hz / self.rate_hz
    }

    /// True when every channel has the same length and phases agree.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.samples_u.len() == self.samples_i.len()
            && self.samples_u.iter().chain(&self.samples_i).all(|c| c.len() == n)
    }

    fn map_channels(&self, mut fu: impl FnMut(&[f64]) -> Vec<f64>, mut fi: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        Self {
            samples_u: self.samples_u.iter().map(|c| fu(c)).collect(),
            samples_i: self.samples_i.iter().map(|c| fi(c)).collect(),
            ..self.clone()
        }
    }
}

/// Synthesizes `cycles` fundamental cycles of `spec` at `rate_hz`.
///
/// Sample `j` of an order-k component is `√2·A·sin(2πk·f·j/rate + φ)`.
pub fn synthesize(spec: &WaveformSpec, rate_hz: f64, cycles: u32) -> Result<SampleFrame, WaveformError> {
    if cycles == 0 {
        return Err(WaveformError::InvalidSpec("cycles must be >= 1".into()));
    }
    spec.validate()?;
    spec.check_sampling(rate_hz)?;
    let n = (f64::from(cycles) * rate_hz / spec.fundamental_hz).round() as usize;
    synthesize_samples(spec, rate_hz, n)
}

/// Synthesizes exactly `n_samples` samples, without the integer-cycle framing.
pub fn synthesize_samples(spec: &WaveformSpec, rate_hz: f64, n_samples: usize) -> Result<SampleFrame, WaveformError> {
    spec.validate()?;
    spec.check_sampling(rate_hz)?;
    let f = spec.fundamental_hz;
    let gen = |ch: &ChannelSpec, m: usize| -> Vec<f64> {
        let shift = PHASE_DISPLACEMENT_DEG * m as f64;
        (0..n_samples)
            .map(|j| ch.value_at(f, j as f64 / rate_hz, shift))
            .collect()
    };
    Ok(SampleFrame {
        rate_hz,
        fundamental_hz: f,
        samples_u: spec
            .phases
            .iter()
            .enumerate()
            .map(|(m, p)| gen(&p.voltage, m))
            .collect(),
        samples_i: spec
            .phases
            .iter()
            .enumerate()
            .map(|(m, p)| gen(&p.current, m))
            .collect(),
        start_time: 0.0,
    })
}

/// Converter model for one channel type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u32,
    pub full_scale: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_true() -> bool {
    true
}

impl AdcConfig {
    pub fn new(bits: u32, full_scale: f64) -> Self {
        Self {
            bits,
            full_scale,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        Self {
            bits: 24,
            full_scale: 1.0,
            enabled: false,
        }
    }

    /// Width of one code.
    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / 2f64.powi(self.bits as i32)
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if !(8..=32).contains(&self.bits) {
            return Err(WaveformError::InvalidSpec(format!(
                "adc bits {} outside 8..=32",
                self.bits
            )));
        }
        if !self.full_scale.is_finite() || self.full_scale <= 0.0 {
            return Err(WaveformError::InvalidSpec("adc full scale must be > 0".into()));
        }
        Ok(())
    }

    /// Rounds to the nearest code (half away from zero), clamping at the
    /// end codes. Returns the value and whether it clamped.
    pub fn convert(&self, x: f64) -> (f64, bool) {
        if !self.enabled {
            return (x, false);
        }
        let step = self.step();
        let top = 2f64.powi(self.bits as i32 - 1);
        let code = (x / step).round();
        let clamped = code.clamp(-top, top - 1.0);
        (clamped * step, clamped != code)
    }

    pub fn quantize_channel(&self, samples: &[f64]) -> (Vec<f64>, usize) {
        let mut overrange = 0;
        let out = samples
            .iter()
            .map(|&x| {
                let (y, clip) = self.convert(x);
                overrange += usize::from(clip);
                y
            })
            .collect();
        (out, overrange)
    }
}

/// Front-end converters for the voltage and current channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub voltage: AdcConfig,
    pub current: AdcConfig,
}

impl FrontEnd {
    pub fn new(voltage: AdcConfig, current: AdcConfig) -> Self {
        Self { voltage, current }
    }

    pub fn bypass() -> Self {
        Self::new(AdcConfig::disabled(), AdcConfig::disabled())
    }
}

/// Quantizes every channel of `frame`; overrange samples clamp and are logged.
pub fn quantize(frame: &SampleFrame, front_end: &FrontEnd) -> SampleFrame {
    let clipped = std::cell::Cell::new(0);
    let out = frame.map_channels(
        |c| {
            let (q, n) = front_end.voltage.quantize_channel(c);
            clipped.set(clipped.get() + n);
            q
        },
        |c| {
            let (q, n) = front_end.current.quantize_channel(c);
            clipped.set(clipped.get() + n);
            q
        },
    );
    let clipped = clipped.get();
    if clipped > 0 {
        log::warn!("adc overrange: {clipped} samples clamped at full scale");
    }
    out
}

/// Removes the per-channel mean. Exact DC rejection on integer-cycle frames.
pub fn hpf_dc_block(frame: &SampleFrame) -> SampleFrame {
    fn remove_mean(c: &[f64]) -> Vec<f64> {
        if c.is_empty() {
            return Vec::new();
        }
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        c.iter().map(|x| x - mean).collect()
    }
    frame.map_channels(remove_mean, remove_mean)
}
