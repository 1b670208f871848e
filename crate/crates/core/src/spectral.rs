//! Thin FFT helpers over rustfft for real-valued channels.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub fn forward(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse transform, normalized, keeping only the real part.
pub fn inverse_real(mut bins: Vec<Complex64>) -> Vec<f64> {
    let n = bins.len();
    if n == 0 {
        return Vec::new();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut bins);
    bins.iter().map(|c| c.re / n as f64).collect()
}

/// Applies `f(k, bin)` to every positive-frequency bin `k` in `1..n/2` and
/// mirrors the result conjugate-symmetrically into the negative half, so a
/// real input stays real. DC and (for even n) Nyquist are passed to
/// `edge` instead.
pub fn map_positive_bins(
    bins: &mut [Complex64],
    mut f: impl FnMut(usize, Complex64) -> Complex64,
    mut edge: impl FnMut(Complex64) -> Complex64,
) {
    let n = bins.len();
    if n == 0 {
        return;
    }
    bins[0] = edge(bins[0]);
    let half = n.div_ceil(2);
    for k in 1..half {
        let v = f(k, bins[k]);
        bins[k] = v;
        bins[n - k] = v.conj();
    }
    if n.is_multiple_of(2) {
        bins[n / 2] = edge(bins[n / 2]);
    }
}
