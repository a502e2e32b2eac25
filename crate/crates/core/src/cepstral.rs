//! Per-frame cepstral analysis and synthesis.
//!
//! Analysis: zero-pad the processing frame to the FFT length K, take the
//! magnitude/phase spectrum, log10 the floored magnitudes, and apply an
//! unnormalized DCT-II across all K bins. The first K/16 cepstral
//! coefficients carry the spectral envelope and are handed to the
//! enhancement network; the rest (the residual) and the phase are kept
//! untouched for resynthesis.
//!
//! Synthesis inverts each step: inverse DCT back to log magnitudes, power
//! of ten, reattach the original phase, and take the real part of the
//! K-point inverse FFT. With the cepstrum unmodified the roundtrip
//! reproduces the frame to within a few ULP.

use crate::audio::Bandwidth;
use crate::error::Error;
use crate::framing::{FrameworkStructure, Reconstruction, StructureId};
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Fraction of cepstral coefficients that form the envelope.
pub const ENVELOPE_FRACTION: f64 = 1.0 / 16.0;

/// Magnitudes are floored here before the log, so silent bins stay finite.
pub const LOG_FLOOR: f64 = 1e-12;

/// Default quiet-frame threshold and push-down for [`c0_floor`]: frames
/// whose energy coefficient is already below the threshold get shoved far
/// below it, which keeps coding noise in silence from being amplified.
pub const C0_THRESHOLD: f64 = -1650.0;
pub const C0_GAMMA: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CepstralConfig {
    /// FFT length K, twice the processing frame length.
    pub fft_len: usize,
    /// Number of envelope coefficients, K/16.
    pub env_len: usize,
}

impl CepstralConfig {
    pub fn new(fft_len: usize) -> Result<CepstralConfig, Error> {
        if fft_len == 0 || !fft_len.is_multiple_of(16) {
            return Err(Error::bad_config(format!(
                "FFT length {fft_len} must be a positive multiple of 16"
            )));
        }
        Ok(CepstralConfig {
            fft_len,
            env_len: (fft_len as f64 * ENVELOPE_FRACTION) as usize,
        })
    }

    /// Configuration implied by a framework structure: K is twice the
    /// processing length. The time-domain framer has no cepstral side.
    pub fn for_structure(id: StructureId, bw: Bandwidth) -> Result<CepstralConfig, Error> {
        let s = FrameworkStructure::get(id);
        if s.reconstruction == Reconstruction::Concat {
            return Err(Error::bad_config(
                "the time-domain framer is not a cepstral structure",
            ));
        }
        CepstralConfig::new(2 * s.processing_len(bw))
    }
}

/// One analyzed frame: envelope cepstrum (what enhancement modifies),
/// residual cepstrum and phase (reused verbatim at synthesis).
#[derive(Debug, Clone)]
pub struct CepstralFrame {
    pub envelope: Vec<f64>,
    pub residual: Vec<f64>,
    pub phase: Vec<f64>,
}

/// Frame transformer for one fixed FFT length. Owns the FFT plans and the
/// DCT cosine table, so per-frame work is pure arithmetic.
pub struct CepstralProcessor {
    pub config: CepstralConfig,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// cos(pi m (k + 0.5) / K), row-major by m.
    cos: Vec<f64>,
}

impl CepstralProcessor {
    pub fn new(config: CepstralConfig) -> CepstralProcessor {
        let k = config.fft_len;
        let mut planner = FftPlanner::new();
        let mut cos = Vec::with_capacity(k * k);
        for m in 0..k {
            for i in 0..k {
                cos.push((PI * m as f64 * (i as f64 + 0.5) / k as f64).cos());
            }
        }
        CepstralProcessor {
            config,
            fft: planner.plan_fft_forward(k),
            ifft: planner.plan_fft_inverse(k),
            cos,
        }
    }

    pub fn for_structure(id: StructureId, bw: Bandwidth) -> Result<CepstralProcessor, Error> {
        Ok(CepstralProcessor::new(CepstralConfig::for_structure(id, bw)?))
    }

    /// Unnormalized DCT-II: c[m] = sum_k x[k] cos(pi m (k+0.5) / K).
    pub fn dct2(&self, x: &[f64]) -> Vec<f64> {
        let k = self.config.fft_len;
        assert_eq!(x.len(), k);
        let mut c = vec![0.0; k];
        for (m, cm) in c.iter_mut().enumerate() {
            let row = &self.cos[m * k..(m + 1) * k];
            let mut acc = 0.0;
            for i in 0..k {
                acc += x[i] * row[i];
            }
            *cm = acc;
        }
        c
    }

    /// Inverse of [`dct2`]: x[k] = (c[0] + 2 sum_{m>=1} c[m] cos(...)) / K.
    pub fn idct2(&self, c: &[f64]) -> Vec<f64> {
        let k = self.config.fft_len;
        assert_eq!(c.len(), k);
        let mut acc = vec![0.0; k];
        for (m, &cm) in c.iter().enumerate() {
            let row = &self.cos[m * k..(m + 1) * k];
            if cm != 0.0 {
                for i in 0..k {
                    acc[i] += cm * row[i];
                }
            }
        }
        let scale = 1.0 / k as f64;
        for (i, v) in acc.iter_mut().enumerate() {
            *v = (2.0 * *v - c[0]) * scale;
            let _ = i;
        }
        acc
    }

    /// Analyze one processing frame (length at most K; shorter frames are
    /// zero-padded).
    pub fn analyze(&self, frame: &[f64]) -> CepstralFrame {
        let k = self.config.fft_len;
        assert!(frame.len() <= k, "frame longer than the FFT");
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(k)
            .collect();
        self.fft.process(&mut buf);

        let mut logmag = vec![0.0; k];
        let mut phase = vec![0.0; k];
        for i in 0..k {
            let mag = buf[i].norm().max(LOG_FLOOR);
            logmag[i] = mag.log10();
            let mut a = buf[i].im.atan2(buf[i].re);
            if a == -PI {
                a = PI;
            }
            phase[i] = a;
        }

        let mut ceps = self.dct2(&logmag);
        let residual = ceps.split_off(self.config.env_len);
        CepstralFrame {
            envelope: ceps,
            residual,
            phase,
        }
    }

    /// Synthesize a K-length time frame from a (possibly modified)
    /// envelope plus the stored residual and phase.
    pub fn synthesize(&self, frame: &CepstralFrame) -> Vec<f64> {
        let k = self.config.fft_len;
        assert_eq!(frame.envelope.len(), self.config.env_len);
        assert_eq!(frame.residual.len(), k - self.config.env_len);
        assert_eq!(frame.phase.len(), k);

        let mut ceps = Vec::with_capacity(k);
        ceps.extend_from_slice(&frame.envelope);
        ceps.extend_from_slice(&frame.residual);
        let logmag = self.idct2(&ceps);

        let mut buf: Vec<Complex<f64>> = (0..k)
            .map(|i| {
                let mag = 10f64.powf(logmag[i]);
                Complex::from_polar(mag, frame.phase[i])
            })
            .collect();
        self.ifft.process(&mut buf);
        let scale = 1.0 / k as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }
}

/// Quiet-frame energy manipulation: an envelope whose energy coefficient
/// c(0) is below `threshold` gets pushed down by `gamma`; louder frames
/// pass unchanged.
pub fn c0_floor(envelope: &mut [f64], threshold: f64, gamma: f64) {
    if envelope[0] < threshold {
        envelope[0] -= gamma;
    }
}
