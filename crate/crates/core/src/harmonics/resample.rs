//! Resampling onto a grid locked to the measured fundamental.

use rustfft::num_complex::Complex64;

use crate::spectral;

/// Half-width of the interpolation kernel, in input samples.
pub const KERNEL_HALF_WIDTH: usize = 32;
const KAISER_BETA: f64 = 9.0;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kernel(x: f64) -> f64 {
    let hw = KERNEL_HALF_WIDTH as f64;
    if x.abs() >= hw {
        return 0.0;
    }
    let sinc = if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    };
    let r = x / hw;
    sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA)
}

/// Band-limited interpolation of `input` at fractional sample position `x`
/// (Kaiser-windowed sinc, linear phase). Positions closer than the kernel
/// half-width to either end see a truncated kernel.
pub fn interpolate(input: &[f64], x: f64) -> f64 {
    let centre = x.floor() as isize;
    let hw = KERNEL_HALF_WIDTH as isize;
    let lo = (centre - hw + 1).max(0);
    let hi = (centre + hw).min(input.len() as isize - 1);
    (lo..=hi).map(|j| input[j as usize] * kernel(x - j as f64)).sum()
}

/// Samples `input` at `count` positions starting at input index `start`
/// and spaced `stride` input samples apart.
pub fn resample_linear_grid(input: &[f64], start: f64, stride: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|m| interpolate(input, start + m as f64 * stride))
        .collect()
}

/// Exact resampling of one period of a band-limited periodic signal to
/// `len` points by spectral zero-padding or truncation.
pub fn resample_periodic(input: &[f64], len: usize) -> Vec<f64> {
    let n = input.len();
    if n == len {
        return input.to_vec();
    }
    let bins = spectral::forward(input);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let scale = len as f64 / n as f64;
    let keep = (n.min(len) - 1) / 2;
    out[0] = bins[0] * scale;
    for k in 1..=keep {
        out[k] = bins[k] * scale;
        out[len - k] = bins[n - k] * scale;
    }
    spectral::inverse_real(out)
}
