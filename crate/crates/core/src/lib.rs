//! Chirp-spread-spectrum backscatter: symbol math, tag-side waveform
//! synthesis, LoRa-shaped framing, a two-hop channel model and a TDMA link
//! layer.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `F32` variants for bulk signals.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod css;
pub mod dsp;
pub mod error;
pub mod frame;
pub mod mac;
pub mod scalar;
pub mod signal;
pub mod synth;

pub use css::{Bandwidth, ChirpParams, ChirpSymbol, CodeRate, DemodResult};
pub use error::{ParamError, SignalError};
pub use frame::{FrameError, LoraFrame, ParsedFrame};

pub type IqSignal = signal::IqSignal<f64>;
pub type IqSignalF32 = signal::IqSignal<f32>;
pub type Demodulator = css::Demodulator<f64>;
pub type DemodulatorF32 = css::Demodulator<f32>;
pub type Sample = num_complex::Complex<f64>;
