//! Energy algorithms side by side against the closed-form integral.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{analytic_energy, BenchError};
use crate::harmonics;
use crate::metrology::{self, MAX_NEWTON_COTES_ORDER};
use crate::waveform::{self, ChannelSpec, HarmonicComponent, PhaseSpec, WaveformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    PointProduct,
    NewtonCotes(usize),
    FftSum,
}

impl Algorithm {
    pub fn all() -> Vec<Algorithm> {
        let mut v = vec![Algorithm::PointProduct];
        v.extend((1..=MAX_NEWTON_COTES_ORDER).map(Algorithm::NewtonCotes));
        v.push(Algorithm::FftSum);
        v
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::PointProduct => write!(f, "point-product"),
            Algorithm::NewtonCotes(n) => write!(f, "NC-{n}"),
            Algorithm::FftSum => write!(f, "FFT-sum"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonScenario {
    pub name: String,
    pub spec: WaveformSpec,
    pub rate_hz: f64,
    /// Window length in sample intervals; a multiple of 60 so every
    /// composite rule partitions it.
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub rate_hz: f64,
    pub intervals: usize,
    pub energy_ws: f64,
    pub oracle_ws: f64,
    pub rel_error: f64,
}

fn distorted_load(f: f64) -> WaveformSpec {
    WaveformSpec::single(
        f,
        PhaseSpec::new(
            ChannelSpec::new(vec![
                HarmonicComponent::new(1, 230.0, 0.0),
                HarmonicComponent::new(3, 6.9, 15.0),
                HarmonicComponent::new(5, 4.6, -40.0),
            ]),
            ChannelSpec::new(vec![
                HarmonicComponent::new(1, 10.0, -25.0),
                HarmonicComponent::new(3, 2.0, 60.0),
                HarmonicComponent::new(5, 1.2, -10.0),
                HarmonicComponent::new(7, 0.7, 30.0),
            ]),
        ),
    )
}

/// Sweep used by the `bench` report: synchronous and fractional windows of
/// a sine and a distorted load, plus an off-nominal fundamental.
pub fn default_comparison_scenarios() -> Vec<ComparisonScenario> {
    let rate = waveform::DEFAULT_RATE_HZ;
    let sine = WaveformSpec::single(50.0, PhaseSpec::sinusoidal(230.0, 10.0, 30.0));
    vec![
        ComparisonScenario {
            name: "sine-sync-15c".into(),
            spec: sine.clone(),
            rate_hz: rate,
            intervals: 3_840,
        },
        ComparisonScenario {
            name: "distorted-sync-15c".into(),
            spec: distorted_load(50.0),
            rate_hz: rate,
            intervals: 3_840,
        },
        ComparisonScenario {
            name: "distorted-fractional".into(),
            spec: distorted_load(50.0),
            rate_hz: rate,
            intervals: 3_900,
        },
        ComparisonScenario {
            name: "distorted-49.8Hz".into(),
            spec: distorted_load(49.8),
            rate_hz: rate,
            intervals: 3_840,
        },
    ]
}

fn energy(alg: Algorithm, sc: &ComparisonScenario) -> Result<f64, BenchError> {
    let n = sc.intervals;
    let step = 1.0 / sc.rate_hz;
    match alg {
        Algorithm::PointProduct => {
            let frame = waveform::synthesize_samples(&sc.spec, sc.rate_hz, n)?;
            Ok(metrology::active_power_point_product(&frame)?.total * n as f64 * step)
        }
        Algorithm::NewtonCotes(order) => {
            let frame = waveform::synthesize_samples(&sc.spec, sc.rate_hz, n + 1)?;
            let p = metrology::instantaneous_power(&frame)?;
            Ok(metrology::integrate_newton_cotes(&p, step, order)?)
        }
        Algorithm::FftSum => {
            let frame = waveform::synthesize_samples(&sc.spec, sc.rate_hz, n)?;
            let spectrum = harmonics::analyze_spectrum(&frame)?;
            Ok(harmonics::frame_harmonic_power(&spectrum).total() * n as f64 * step)
        }
    }
}

/// One row per (scenario, algorithm), in input order.
pub fn compare_algorithms(scenarios: &[ComparisonScenario]) -> Result<Vec<ComparisonRow>, BenchError> {
    if scenarios.is_empty() {
        return Err(BenchError::Pipeline("no comparison scenarios".into()));
    }
    let mut rows = Vec::new();
    for sc in scenarios {
        if sc.intervals == 0 || sc.intervals % 60 != 0 {
            return Err(BenchError::Pipeline(format!(
                "{}: window of {} intervals is not a multiple of 60",
                sc.name, sc.intervals
            )));
        }
        let oracle = analytic_energy(&sc.spec, sc.intervals as f64 / sc.rate_hz);
        for alg in Algorithm::all() {
            let e = energy(alg, sc)?;
            rows.push(ComparisonRow {
                scenario: sc.name.clone(),
                algorithm: alg,
                rate_hz: sc.rate_hz,
                intervals: sc.intervals,
                energy_ws: e,
                oracle_ws: oracle,
                rel_error: (e - oracle) / oracle,
            });
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("scenario,algorithm,rate_hz,intervals,energy_ws,oracle_ws,rel_error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.12e},{:.12e},{:.6e}",
            r.scenario, r.algorithm, r.rate_hz, r.intervals, r.energy_ws, r.oracle_ws, r.rel_error
        );
    }
    out
}
