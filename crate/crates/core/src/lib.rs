//! Enhancement toolkit for G.711-coded narrowband and wideband speech.
//!
//! The library provides the pieces of a coded-speech postprocessing chain:
//!
//! * [`g711`] - bit-exact A-law / mu-law companding plus per-codeword
//!   quantization intervals and the interval-constraint operator,
//! * [`framing`] - block framing front-ends (windowing, overlap-add and
//!   drop-past reconstruction) for several latency/overlap trade-offs,
//! * [`cepstral`] - per-frame cepstral analysis and synthesis used by the
//!   envelope-domain postprocessor,
//! * [`cnn`] - a small convolutional encoder-decoder network with forward,
//!   backward and Adam steps implemented directly on `f64` buffers,
//! * [`postfilter`] - a two-stage Wiener postfilter driven by a measured
//!   quantization-SNR table,
//! * [`metrics`] - instrumental quality measures (LSD, segmental and global
//!   SSDR) with the shared energy-threshold voice activity detector,
//! * [`trainer`] - dataset preparation and the minibatch training loop,
//! * [`pipeline`] - end-to-end enhancement jobs tying the above together,
//! * [`synth`] - a deterministic speech-shaped test-signal generator.
//!
//! Everything is deterministic: fixed seeds give bit-identical models and
//! bit-identical enhanced waveforms.

pub mod audio;
pub mod cepstral;
pub mod cnn;
pub mod error;
pub mod framing;
pub mod g711;
pub mod metrics;
pub mod pipeline;
pub mod postfilter;
pub mod synth;
pub mod trainer;

pub use error::Error;
