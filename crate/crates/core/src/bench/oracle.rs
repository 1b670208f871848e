//! Closed-form energy of a synthesized waveform, used as the reference for
//! accuracy measurements.

use std::f64::consts::{PI, SQRT_2};

use crate::waveform::{ChannelSpec, WaveformSpec, PHASE_DISPLACEMENT_DEG};

/// Terms `(amplitude, ω, θ)` of `a·sin(ωt + θ)`; DC appears as ω = 0, θ = π/2.
fn terms(ch: &ChannelSpec, f: f64, shift_deg: f64) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = ch
        .components
        .iter()
        .map(|c| {
            let k = f64::from(c.order);
            (
                SQRT_2 * c.amplitude_rms,
                2.0 * PI * k * f,
                (c.phase_deg - k * shift_deg).to_radians(),
            )
        })
        .collect();
    if ch.dc_offset != 0.0 {
        out.push((ch.dc_offset, 0.0, PI / 2.0));
    }
    out
}

/// ∫₀ᵀ cos(ωt + θ) dt.
fn cos_integral(w: f64, theta: f64, t: f64) -> f64 {
    if w.abs() < 1e-12 {
        t * theta.cos()
    } else {
        ((w * t + theta).sin() - theta.sin()) / w
    }
}

/// ∫₀ᵀ Σ_phases u(t)·i(t) dt in watt-seconds.
pub fn analytic_energy(spec: &WaveformSpec, duration_s: f64) -> f64 {
    let f = spec.fundamental_hz;
    spec.phases
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let shift = PHASE_DISPLACEMENT_DEG * m as f64;
            let u = terms(&p.voltage, f, shift);
            let i = terms(&p.current, f, shift);
            let mut e = 0.0;
            for &(a, wa, ta) in &u {
                for &(b, wb, tb) in &i {
                    // sin x · sin y = ½[cos(x − y) − cos(x + y)]
                    e += 0.5
                        * a
                        * b
                        * (cos_integral(wa - wb, ta - tb, duration_s) - cos_integral(wa + wb, ta + tb, duration_s));
                }
            }
            e
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::PhaseSpec;

    #[test]
    fn sinusoid_over_whole_cycles() {
        let spec = WaveformSpec::single(50.0, PhaseSpec::sinusoidal(230.0, 5.0, 60.0));
        let e = analytic_energy(&spec, 1.0);
        assert!((e - 575.0).abs() < 1e-9);
    }

    #[test]
    fn dc_times_dc() {
        let spec = WaveformSpec::single(
            50.0,
            PhaseSpec::new(ChannelSpec::default().with_dc(2.0), ChannelSpec::default().with_dc(3.0)),
        );
        assert!((analytic_energy(&spec, 0.5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn matches_fine_riemann_sum() {
        let spec = WaveformSpec::balanced(
            50.0,
            PhaseSpec::new(
                ChannelSpec::new(vec![
                    crate::waveform::HarmonicComponent::new(1, 230.0, 0.0),
                    crate::waveform::HarmonicComponent::new(5, 10.0, 40.0),
                ]),
                ChannelSpec::new(vec![
                    crate::waveform::HarmonicComponent::new(1, 5.0, -20.0),
                    crate::waveform::HarmonicComponent::new(5, 1.0, 10.0),
                ])
                .with_dc(0.1),
            ),
        );
        let t = 0.0137;
        let n = 200_000;
        let frame = crate::waveform::synthesize_samples(&spec, n as f64 / t, n + 1).unwrap();
        let p = crate::metrology::instantaneous_power(&frame).unwrap();
        let simpson = crate::metrology::integrate_newton_cotes(&p, t / n as f64, 2).unwrap();
        let exact = analytic_energy(&spec, t);
        assert!((simpson - exact).abs() < 1e-9 * exact.abs(), "{simpson} vs {exact}");
    }
}
