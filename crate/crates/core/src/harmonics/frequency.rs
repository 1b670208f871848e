//! Fundamental-frequency estimation by Hann-windowed two-bin interpolated DFT.

use std::f64::consts::PI;

use super::HarmonicsError;
use crate::spectral;
use crate::waveform::SampleFrame;

/// Frames shorter than this many nominal cycles are assumed synchronous
/// rather than estimated; the interpolation needs the fundamental several
/// bins away from DC and from its second harmonic.
pub const MIN_ESTIMATION_CYCLES: f64 = 4.0;

/// Band the spectral peak must fall in to count as the fundamental.
const PEAK_BAND_HZ: (f64, f64) = (30.0, 100.0);

/// Peak frequency of `samples` by the Hann two-bin interpolation rule
/// `δ = (2α − 1)/(α + 1)`, α being the larger-neighbour magnitude ratio.
pub fn interpolated_peak(samples: &[f64], rate_hz: f64) -> Option<(f64, f64)> {
    let n = samples.len();
    if n < 8 {
        return None;
    }
    let windowed: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(j, x)| x * (0.5 - 0.5 * (2.0 * PI * j as f64 / n as f64).cos()))
        .collect();
    let mag: Vec<f64> = spectral::forward(&windowed)[..n / 2 + 1]
        .iter()
        .map(|c| c.norm())
        .collect();
    let (k, &peak) = mag[1..n / 2]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, m)| (j + 1, m))?;
    if peak.is_nan() || peak <= 0.0 {
        return None;
    }
    let (alpha, dir) = if mag[k + 1] >= mag[k - 1] {
        (mag[k + 1] / peak, 1.0)
    } else {
        (mag[k - 1] / peak, -1.0)
    };
    let delta = dir * (2.0 * alpha - 1.0) / (alpha + 1.0);
    Some(((k as f64 + delta) * rate_hz / n as f64, peak))
}

/// Estimates the fundamental from the first phase voltage (or current,
/// when no voltage is present).
pub fn estimate_frequency(frame: &SampleFrame) -> Result<f64, HarmonicsError> {
    let channel = frame
        .samples_u
        .iter()
        .chain(&frame.samples_i)
        .find(|c| c.iter().any(|&x| x != 0.0))
        .ok_or(HarmonicsError::NoDominantFundamental)?;
    let (f, _) = interpolated_peak(channel, frame.rate_hz).ok_or(HarmonicsError::NoDominantFundamental)?;
    if !(PEAK_BAND_HZ.0..=PEAK_BAND_HZ.1).contains(&f) {
        return Err(HarmonicsError::NoDominantFundamental);
    }
    Ok(f)
}

/// Fundamental used for analysis: estimated on frames long enough, the
/// frame's nominal value otherwise.
pub fn frame_fundamental(frame: &SampleFrame) -> Result<f64, HarmonicsError> {
    if frame.cycles() >= MIN_ESTIMATION_CYCLES {
        estimate_frequency(frame)
    } else {
        Ok(frame.fundamental_hz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{synthesize, ChannelSpec, HarmonicComponent, PhaseSpec, WaveformSpec};

    fn frame(f: f64, comps: Vec<HarmonicComponent>, cycles: u32) -> SampleFrame {
        let spec = WaveformSpec::single(f, PhaseSpec::new(ChannelSpec::new(comps), ChannelSpec::sine(5.0, 0.0)));
        synthesize(&spec, 12_800.0, cycles).unwrap()
    }

    #[test]
    fn on_bin_fifty_hz() {
        let f = estimate_frequency(&frame(50.0, vec![HarmonicComponent::new(1, 230.0, 0.0)], 10)).unwrap();
        assert!((f - 50.0).abs() < 1e-9);
    }

    #[test]
    fn off_grid_with_distortion() {
        // 10% THD spread over 3rd, 5th, 7th
        let comps = vec![
            HarmonicComponent::new(1, 230.0, 0.0),
            HarmonicComponent::new(3, 17.25, 30.0),
            HarmonicComponent::new(5, 13.8, -50.0),
            HarmonicComponent::new(7, 6.9, 110.0),
        ];
        let est = estimate_frequency(&frame(49.8, comps, 10)).unwrap();
        assert!((est - 49.8).abs() < 0.005, "{est}");
    }

    #[test]
    fn sixty_two_and_a_half() {
        let est = estimate_frequency(&frame(62.5, vec![HarmonicComponent::new(1, 230.0, 0.0)], 10)).unwrap();
        assert!((est - 62.5).abs() < 0.005, "{est}");
    }

    #[test]
    fn no_dominant_fundamental() {
        let zero = frame(50.0, vec![], 10);
        let mut silent = zero.clone();
        silent.samples_i[0].iter_mut().for_each(|x| *x = 0.0);
        assert_eq!(estimate_frequency(&silent), Err(HarmonicsError::NoDominantFundamental));
        let fifth = frame(
            50.0,
            vec![
                HarmonicComponent::new(1, 10.0, 0.0),
                HarmonicComponent::new(5, 230.0, 0.0),
            ],
            10,
        );
        assert_eq!(estimate_frequency(&fifth), Err(HarmonicsError::NoDominantFundamental));
    }
}
