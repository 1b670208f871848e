//! Harmonic analysis: per-order amplitude and phase up to order 49 from a
//! 256-points-per-cycle FFT, per-harmonic active power, and the three
//! harmonic totalization modes for active energy.
//!
//! Off-nominal frames are first resampled onto a grid of exactly 256
//! points per measured fundamental cycle so each harmonic falls on a bin.

mod frequency;
mod resample;

pub use frequency::{estimate_frequency, frame_fundamental, interpolated_peak, MIN_ESTIMATION_CYCLES};
pub use resample::{interpolate, resample_linear_grid, resample_periodic, KERNEL_HALF_WIDTH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral;
use crate::waveform::{SampleFrame, MAX_ORDER};

pub const POINTS_PER_CYCLE: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicsError {
    #[error("analysis block of {0} samples is not a power of two >= 256")]
    NotPowerOfTwo(usize),
    #[error("fundamental estimate {0:.4} Hz outside [45, 65] Hz")]
    FrequencyOutOfRange(f64),
    #[error("no dominant fundamental in frame")]
    NoDominantFundamental,
    #[error("harmonic order {0} exceeds the maximum of {MAX_ORDER}")]
    OrderTooHigh(u32),
    #[error("frame too short for analysis")]
    TooShort,
    #[error("channel length mismatch")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicsConfig {
    pub max_order: u32,
}

impl Default for HarmonicsConfig {
    fn default() -> Self {
        Self { max_order: MAX_ORDER }
    }
}

/// Spectrum of one channel. Index `k - 1` holds order `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpectrum {
    pub amplitude_rms: Vec<f64>,
    pub phase_deg: Vec<f64>,
    pub fundamental_hz_estimate: f64,
    pub thd: f64,
}

impl HarmonicSpectrum {
    pub fn max_order(&self) -> u32 {
        self.amplitude_rms.len() as u32
    }

    pub fn amplitude(&self, order: u32) -> f64 {
        self.amplitude_rms[order as usize - 1]
    }

    pub fn phase(&self, order: u32) -> f64 {
        self.phase_deg[order as usize - 1]
    }

    /// RMS over all resolved orders (DC excluded).
    pub fn total_rms(&self) -> f64 {
        self.amplitude_rms.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

pub fn thd(amplitudes: &[f64]) -> f64 {
    match amplitudes.split_first() {
        Some((&a1, rest)) if a1 > 0.0 => rest.iter().map(|a| a * a).sum::<f64>().sqrt() / a1,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpectrum {
    pub voltage: HarmonicSpectrum,
    pub current: HarmonicSpectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpectrum {
    pub fundamental_hz: f64,
    pub phases: Vec<PhaseSpectrum>,
}

/// Wraps degrees into [-180, 180).
pub fn wrap_deg(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Spectrum of a synchronous block holding exactly `cycles` fundamental
/// cycles. The block length must be a power of two of at least 256.
/// `phase_offset_deg_per_order` re-references phases: order k is shifted
/// by `k` times that amount.
pub fn spectrum_from_block(
    block: &[f64],
    cycles: usize,
    fundamental_hz: f64,
    cfg: &HarmonicsConfig,
    phase_offset_deg_per_order: f64,
) -> Result<HarmonicSpectrum, HarmonicsError> {
    let n = block.len();
    if n < POINTS_PER_CYCLE || !n.is_power_of_two() {
        return Err(HarmonicsError::NotPowerOfTwo(n));
    }
    if cfg.max_order > MAX_ORDER {
        return Err(HarmonicsError::OrderTooHigh(cfg.max_order));
    }
    if cycles == 0 || (cfg.max_order as usize) * cycles >= n / 2 {
        return Err(HarmonicsError::TooShort);
    }
    let bins = spectral::forward(block);
    let scale = std::f64::consts::SQRT_2 / n as f64;
    let (amplitude_rms, phase_deg): (Vec<f64>, Vec<f64>) = (1..=cfg.max_order as usize)
        .map(|k| {
            let b = bins[k * cycles];
            let amp = b.norm() * scale;
            // sin reference: a sine of phase φ lands at arg φ - 90°
            let ph = if amp > 0.0 {
                wrap_deg(b.arg().to_degrees() + 90.0 + k as f64 * phase_offset_deg_per_order)
            } else {
                0.0
            };
            (amp, ph)
        })
        .unzip();
    Ok(HarmonicSpectrum {
        thd: thd(&amplitude_rms),
        amplitude_rms,
        phase_deg,
        fundamental_hz_estimate: fundamental_hz,
    })
}

/// Synchronous analysis block for one channel: `256 * cycles` samples
/// starting `start` input samples into the frame, plus the cycle count.
struct BlockPlan {
    cycles: usize,
    /// `None` when the frame is synchronous and resampled spectrally.
    start: Option<f64>,
    stride: f64,
}

fn plan_blocks(frame: &SampleFrame, f: f64) -> Result<BlockPlan, HarmonicsError> {
    let n = frame.len();
    let frame_cycles = n as f64 * f / frame.rate_hz;
    let whole = frame_cycles.round();
    if whole >= 1.0 && (frame_cycles - whole).abs() < 1e-6 {
        let cycles = prev_power_of_two(whole as usize);
        return Ok(BlockPlan {
            cycles,
            start: None,
            stride: 0.0,
        });
    }
    let stride = frame.rate_hz / (f * POINTS_PER_CYCLE as f64);
    let margin = KERNEL_HALF_WIDTH as f64;
    let usable = (n as f64 - 1.0 - 2.0 * margin) * f / frame.rate_hz;
    if usable < 1.0 {
        return Err(HarmonicsError::TooShort);
    }
    Ok(BlockPlan {
        cycles: prev_power_of_two(usable.floor() as usize),
        start: Some(margin),
        stride,
    })
}

fn prev_power_of_two(x: usize) -> usize {
    1 << (usize::BITS - 1 - x.leading_zeros())
}

fn channel_spectrum(
    samples: &[f64],
    plan: &BlockPlan,
    frame: &SampleFrame,
    f: f64,
    cfg: &HarmonicsConfig,
) -> Result<HarmonicSpectrum, HarmonicsError> {
    let len = plan.cycles * POINTS_PER_CYCLE;
    match plan.start {
        None => {
            let whole = (samples.len() as f64 * f / frame.rate_hz).round() as usize;
            let dense = resample_periodic(samples, whole * POINTS_PER_CYCLE);
            spectrum_from_block(&dense[..len], plan.cycles, f, cfg, 0.0)
        }
        Some(start) => {
            let block = resample_linear_grid(samples, start, plan.stride, len);
            // block starts `start` samples late; refer phases back to t = 0
            let offset = -360.0 * f * start / frame.rate_hz;
            spectrum_from_block(&block, plan.cycles, f, cfg, offset)
        }
    }
}

pub fn analyze_spectrum(frame: &SampleFrame) -> Result<FrameSpectrum, HarmonicsError> {
    analyze_spectrum_with(frame, &HarmonicsConfig::default())
}

/// Per-order spectrum of every channel, phases referred to the first
/// sample of the frame.
pub fn analyze_spectrum_with(frame: &SampleFrame, cfg: &HarmonicsConfig) -> Result<FrameSpectrum, HarmonicsError> {
    if cfg.max_order > MAX_ORDER {
        return Err(HarmonicsError::OrderTooHigh(cfg.max_order));
    }
    if !frame.is_consistent() {
        return Err(HarmonicsError::LengthMismatch);
    }
    if frame.is_empty() {
        return Err(HarmonicsError::TooShort);
    }
    let f = frame_fundamental(frame)?;
    if !(45.0..=65.0).contains(&f) {
        return Err(HarmonicsError::FrequencyOutOfRange(f));
    }
    let plan = plan_blocks(frame, f)?;
    let phases = frame
        .samples_u
        .iter()
        .zip(&frame.samples_i)
        .map(|(u, i)| {
            Ok(PhaseSpectrum {
                voltage: channel_spectrum(u, &plan, frame, f, cfg)?,
                current: channel_spectrum(i, &plan, frame, f, cfg)?,
            })
        })
        .collect::<Result<_, HarmonicsError>>()?;
    Ok(FrameSpectrum {
        fundamental_hz: f,
        phases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPowerBreakdown {
    pub p_fundamental: f64,
    /// Element `j` holds order `j + 2`.
    pub p_harmonic: Vec<f64>,
    pub p_harmonic_sum: f64,
}

impl HarmonicPowerBreakdown {
    pub fn new(p_fundamental: f64, p_harmonic: Vec<f64>) -> Self {
        Self {
            p_fundamental,
            p_harmonic_sum: p_harmonic.iter().sum(),
            p_harmonic,
        }
    }

    /// Active power of order `k` (1 = fundamental).
    pub fn order(&self, k: u32) -> f64 {
        match k {
            1 => self.p_fundamental,
            k => self.p_harmonic.get(k as usize - 2).copied().unwrap_or(0.0),
        }
    }

    pub fn total(&self) -> f64 {
        self.p_fundamental + self.p_harmonic_sum
    }

    fn add(&mut self, other: &HarmonicPowerBreakdown) {
        self.p_fundamental += other.p_fundamental;
        if self.p_harmonic.len() < other.p_harmonic.len() {
            self.p_harmonic.resize(other.p_harmonic.len(), 0.0);
        }
        for (a, b) in self.p_harmonic.iter_mut().zip(&other.p_harmonic) {
            *a += b;
        }
        self.p_harmonic_sum = self.p_harmonic.iter().sum();
    }
}

/// `P_k = U_k · I_k · cos(φu_k − φi_k)` for every order.
pub fn harmonic_power(spec_u: &HarmonicSpectrum, spec_i: &HarmonicSpectrum) -> HarmonicPowerBreakdown {
    let p: Vec<f64> = spec_u
        .amplitude_rms
        .iter()
        .zip(&spec_u.phase_deg)
        .zip(spec_i.amplitude_rms.iter().zip(&spec_i.phase_deg))
        .map(|((u, pu), (i, pi))| u * i * (pu - pi).to_radians().cos())
        .collect();
    match p.split_first() {
        Some((&p1, rest)) => HarmonicPowerBreakdown::new(p1, rest.to_vec()),
        None => HarmonicPowerBreakdown::new(0.0, Vec::new()),
    }
}

/// Per-order power summed over all phases.
pub fn frame_harmonic_power(spectrum: &FrameSpectrum) -> HarmonicPowerBreakdown {
    let mut total = HarmonicPowerBreakdown::new(0.0, Vec::new());
    for ph in &spectrum.phases {
        total.add(&harmonic_power(&ph.voltage, &ph.current));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeteringMode {
    FundamentalOnly,
    #[default]
    SignedTotal,
    FundamentalPlusAbsHarmonic,
}

impl MeteringMode {
    pub const ALL: [MeteringMode; 3] = [
        MeteringMode::FundamentalOnly,
        MeteringMode::SignedTotal,
        MeteringMode::FundamentalPlusAbsHarmonic,
    ];

    /// Active power counted toward total active energy under this mode.
    pub fn active_power(self, bd: &HarmonicPowerBreakdown) -> f64 {
        match self {
            MeteringMode::FundamentalOnly => bd.p_fundamental,
            MeteringMode::SignedTotal => bd.p_fundamental + bd.p_harmonic_sum,
            MeteringMode::FundamentalPlusAbsHarmonic => bd.p_fundamental + bd.p_harmonic_sum.abs(),
        }
    }
}

/// Total active energy in Wh over `dt_seconds`.
pub fn total_active_energy(bd: &HarmonicPowerBreakdown, mode: MeteringMode, dt_seconds: f64) -> f64 {
    mode.active_power(bd) * dt_seconds / 3600.0
}
