//! External instrument-transformer correction and line/transformer loss
//! compensation.
//!
//! Angle errors are the phase lag (degrees) the transformer introduces on
//! its secondary; correction advances every harmonic of the channel by that
//! angle. Ratio errors are per-unit gain errors; correction divides by
//! `1 + err`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PhaseValues, PowerReading, Quadrant};
use crate::spectral;
use crate::waveform::SampleFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSign {
    #[default]
    Add,
    Subtract,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompensationConfig {
    #[serde(default)]
    pub ct_ratio_err: f64,
    #[serde(default)]
    pub pt_ratio_err: f64,
    #[serde(default)]
    pub ct_angle_err: f64,
    #[serde(default)]
    pub pt_angle_err: f64,
    /// Series (copper) resistance per phase, ohms.
    #[serde(default)]
    pub copper_r: f64,
    /// Shunt (iron) conductance per phase, siemens.
    #[serde(default)]
    pub iron_g: f64,
    #[serde(default)]
    pub loss_sign: LossSign,
}

impl CompensationConfig {
    pub fn is_valid(&self) -> bool {
        self.ct_ratio_err.abs() < 0.1
            && self.pt_ratio_err.abs() < 0.1
            && self.ct_angle_err.abs() < 2.0
            && self.pt_angle_err.abs() < 2.0
            && self.copper_r >= 0.0
            && self.iron_g >= 0.0
    }
}

fn correct_channel(samples: &[f64], ratio_err: f64, angle_deg: f64) -> Vec<f64> {
    let gain = 1.0 / (1.0 + ratio_err);
    if angle_deg == 0.0 {
        return samples.iter().map(|x| x * gain).collect();
    }
    let rot = Complex64::from_polar(gain, angle_deg.to_radians());
    let mut bins = spectral::forward(samples);
    spectral::map_positive_bins(&mut bins, |_, b| b * rot, |b| b * gain);
    spectral::inverse_real(bins)
}

/// Corrects ratio and angle errors of the external PT and CT. Loss
/// compensation is applied separately at register level by
/// [`apply_loss_compensation`].
pub fn apply_compensation(frame: &SampleFrame, cfg: &CompensationConfig) -> SampleFrame {
    SampleFrame {
        samples_u: frame
            .samples_u
            .iter()
            .map(|c| correct_channel(c, cfg.pt_ratio_err, cfg.pt_angle_err))
            .collect(),
        samples_i: frame
            .samples_i
            .iter()
            .map(|c| correct_channel(c, cfg.ct_ratio_err, cfg.ct_angle_err))
            .collect(),
        ..frame.clone()
    }
}

/// Copper (I²R) plus iron (U²G) loss per phase, watts.
pub fn loss_power(reading: &PowerReading, cfg: &CompensationConfig) -> Vec<f64> {
    reading
        .u_rms
        .iter()
        .zip(&reading.i_rms)
        .map(|(u, i)| i * i * cfg.copper_r + u * u * cfg.iron_g)
        .collect()
}

/// Adds (or subtracts) the modelled losses to the active power.
pub fn apply_loss_compensation(reading: &PowerReading, cfg: &CompensationConfig) -> PowerReading {
    let sign = match cfg.loss_sign {
        LossSign::Add => 1.0,
        LossSign::Subtract => -1.0,
    };
    let losses = loss_power(reading, cfg);
    let per_phase: Vec<f64> = reading
        .p_active
        .per_phase
        .iter()
        .zip(&losses)
        .map(|(p, l)| p + sign * l)
        .collect();
    let total = reading.p_active.total + sign * losses.iter().sum::<f64>();
    let mut out = reading.clone();
    out.quadrant = per_phase
        .iter()
        .zip(&reading.q_reactive.per_phase)
        .map(|(&p, &q)| Quadrant::from_signs(p, q))
        .collect();
    out.quadrant_total = Quadrant::from_signs(total, reading.q_reactive.total);
    out.power_factor = PhaseValues {
        per_phase: per_phase
            .iter()
            .zip(&reading.s_apparent.per_phase)
            .map(|(&p, &s)| if s > 0.0 { (p / s).clamp(-1.0, 1.0) } else { 1.0 })
            .collect(),
        total: if reading.s_apparent.total > 0.0 {
            (total / reading.s_apparent.total).clamp(-1.0, 1.0)
        } else {
            1.0
        },
    };
    out.p_active = PhaseValues { per_phase, total };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::{measure, rms};
    use crate::waveform::{synthesize, PhaseSpec, WaveformSpec};

    fn frame(phi: f64) -> SampleFrame {
        synthesize(
            &WaveformSpec::single(50.0, PhaseSpec::sinusoidal(230.0, 5.0, phi)),
            12_800.0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn ratio_correction_scales_current() {
        let cfg = CompensationConfig {
            ct_ratio_err: 0.001,
            ..Default::default()
        };
        let out = apply_compensation(&frame(0.0), &cfg);
        assert!((rms(&out.samples_i[0]) - 5.0 / 1.001).abs() < 1e-12);
        assert!((rms(&out.samples_i[0]) - 4.995).abs() < 1e-3);
    }

    #[test]
    fn angle_correction_at_half_pf() {
        let f = frame(60.0);
        let cfg = CompensationConfig {
            ct_angle_err: 0.1,
            ..Default::default()
        };
        let before = measure(&f).unwrap().p_active.total;
        let after = measure(&apply_compensation(&f, &cfg)).unwrap().p_active.total;
        let expected = (59.9f64).to_radians().cos() / 60f64.to_radians().cos();
        assert!((after / before - expected).abs() < 1e-9);
        assert!((after / before - 1.00302).abs() < 1e-5);
    }

    #[test]
    fn copper_loss() {
        let r = measure(&frame(0.0)).unwrap();
        let cfg = CompensationConfig {
            copper_r: 0.5,
            ..Default::default()
        };
        assert!((loss_power(&r, &cfg)[0] - 12.5).abs() < 1e-9);
        let added = apply_loss_compensation(&r, &cfg);
        assert!((added.p_active.total - 1162.5).abs() < 1e-9);
        let sub = apply_loss_compensation(
            &r,
            &CompensationConfig {
                loss_sign: LossSign::Subtract,
                ..cfg
            },
        );
        assert!((sub.p_active.total - 1137.5).abs() < 1e-9);
    }

    #[test]
    fn identity_config_is_noop() {
        let f = frame(30.0);
        let out = apply_compensation(&f, &CompensationConfig::default());
        assert_eq!(out, f);
        assert!(CompensationConfig::default().is_valid());
        assert!(!CompensationConfig {
            ct_angle_err: 3.0,
            ..Default::default()
        }
        .is_valid());
    }
}
