//! Software twin of a multi-function electricity meter.
//!
//! The signal path runs [`waveform`] (synthesis, ADC, DC block) into
//! [`metrology`] (point-product active power, Hilbert reactive power,
//! aggregates, compensation, pulses) and [`harmonics`] (FFT spectrum and
//! harmonic totalization). [`registers`] holds the meter state machine,
//! [`protocol`] exposes it over a framed TCP protocol, and [`bench`] runs
//! accuracy-class verification.

pub mod bench;
pub mod harmonics;
pub mod metrology;
pub mod protocol;
pub mod registers;
mod spectral;
pub mod time;
pub mod waveform;
