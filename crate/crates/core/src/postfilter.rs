//! Two-stage Wiener postfilter against G.711 quantization noise.
//!
//! Per 2 ms block the immediate past 4 ms of signal are Hann-windowed and
//! transformed; the quantization noise variance is predicted from the
//! frame RMS through a measured signal-to-quantization-noise curve of the
//! shipped codec; a decision-directed a-priori SNR drives a first Wiener
//! gain, whose output re-estimates the SNR for the final gain, floored at
//! G_min. The gain curve becomes a linear-phase FIR filter (inverse FFT,
//! circular shift by half the filter length, truncation) applied in the
//! time domain, so the only delay is the 2 ms group delay. Optionally
//! every output sample is constrained to the quantization interval of the
//! codeword it stems from.

use crate::audio::{AudioSignal, Bandwidth};
use crate::error::Error;
use crate::framing::periodic_hann;
use crate::g711::{self, Law};
use rand::SeedableRng;
use rand_distr::Distribution;
use rustfft::num_complex::Complex;
use std::sync::OnceLock;

pub const DEFAULT_BETA: f64 = 0.98;
/// Default lower gain bound, -10 dB.
pub const DEFAULT_G_MIN_DB: f64 = -10.0;

#[derive(Debug, Clone, Copy)]
pub struct PostfilterConfig {
    /// Analysis window length (4 ms).
    pub win: usize,
    /// Block advance (2 ms, 50% overlap).
    pub hop: usize,
    pub fft_len: usize,
    /// FIR length; group delay is half of it.
    pub filter_len: usize,
    /// Decision-directed smoothing weight.
    pub beta: f64,
    /// Wiener gain floor, linear.
    pub g_min: f64,
    pub law: Law,
}

impl PostfilterConfig {
    pub fn for_rate(sample_rate: u32, law: Law) -> Result<PostfilterConfig, Error> {
        let spms = Bandwidth::from_rate(sample_rate)?.samples_per_ms();
        Ok(PostfilterConfig {
            win: 4 * spms,
            hop: 2 * spms,
            fft_len: 8 * spms,
            filter_len: 4 * spms,
            beta: DEFAULT_BETA,
            g_min: 10f64.powf(DEFAULT_G_MIN_DB / 20.0),
            law,
        })
    }

    pub fn delay(&self) -> usize {
        self.filter_len / 2
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::bad_config(format!("beta {} outside (0, 1)", self.beta)));
        }
        if !(self.g_min > 0.0 && self.g_min <= 1.0) {
            return Err(Error::bad_config(format!("gain floor {} outside (0, 1]", self.g_min)));
        }
        if self.filter_len > self.fft_len {
            return Err(Error::bad_config("filter longer than the FFT"));
        }
        Ok(())
    }
}

/// Carry-over between consecutive blocks: the first-stage amplitude
/// estimate |S1|^2 and the noise variance of the previous block.
#[derive(Debug, Clone)]
pub struct PostfilterState {
    prev_s1_sq: Vec<f64>,
    prev_noise_var: f64,
}

impl PostfilterState {
    pub fn new(fft_len: usize) -> PostfilterState {
        PostfilterState {
            prev_s1_sq: vec![0.0; fft_len],
            prev_noise_var: 0.0,
        }
    }
}

/// Measured signal-to-quantization-noise ratio of the codec versus signal
/// RMS, interpolated linearly in the log-log domain and clamped at the
/// ends.
struct SnrTable {
    log_sigma: Vec<f64>,
    log_snr: Vec<f64>,
}

impl SnrTable {
    fn build(law: Law) -> SnrTable {
        const POINTS: usize = 60;
        const SAMPLES: usize = 16384;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(match law {
            Law::ALaw => 0xA1AA,
            Law::MuLaw => 0x301AA,
        });
        let (lo, hi) = (1e-4f64.log10(), 4f64.log10());
        let mut log_sigma = Vec::with_capacity(POINTS);
        let mut log_snr = Vec::with_capacity(POINTS);
        // loads beyond full scale are limited before coding, as an input
        // stage would, so the curve reflects quantization plus limiting
        // loss rather than raw clipping of the test signal itself
        let full = 1.0 - 1.0 / 32768.0;
        for p in 0..POINTS {
            let ls = lo + (hi - lo) * p as f64 / (POINTS - 1) as f64;
            let sigma = 10f64.powf(ls);
            let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
            let x: Vec<f64> = (0..SAMPLES)
                .map(|_| normal.sample(&mut rng).clamp(-1.0, full))
                .collect();
            let codes = g711::encode_signal(&x, law);
            let y = g711::decode_signal(&codes, law);
            let sig: f64 = x.iter().map(|v| v * v).sum();
            let err: f64 = x.iter().zip(&y).map(|(&a, &b)| (b - a) * (b - a)).sum();
            log_sigma.push(ls);
            log_snr.push((sig / err).log10());
        }
        SnrTable { log_sigma, log_snr }
    }

    fn at_sigma(&self, sigma: f64) -> f64 {
        let ls = sigma.log10();
        let n = self.log_sigma.len();
        if ls <= self.log_sigma[0] {
            return 10f64.powf(self.log_snr[0]);
        }
        if ls >= self.log_sigma[n - 1] {
            return 10f64.powf(self.log_snr[n - 1]);
        }
        let i = self.log_sigma.partition_point(|&v| v < ls).max(1);
        let (x0, x1) = (self.log_sigma[i - 1], self.log_sigma[i]);
        let (y0, y1) = (self.log_snr[i - 1], self.log_snr[i]);
        10f64.powf(y0 + (y1 - y0) * (ls - x0) / (x1 - x0))
    }
}

fn snr_table(law: Law) -> &'static SnrTable {
    static ALAW: OnceLock<SnrTable> = OnceLock::new();
    static MULAW: OnceLock<SnrTable> = OnceLock::new();
    match law {
        Law::ALaw => ALAW.get_or_init(|| SnrTable::build(Law::ALaw)),
        Law::MuLaw => MULAW.get_or_init(|| SnrTable::build(Law::MuLaw)),
    }
}

/// Linear signal-to-quantization-noise ratio at load factor gamma = 1/RMS,
/// clamped to the measured table's range.
pub fn snr_q(gamma: f64, law: Law) -> f64 {
    assert!(gamma > 0.0, "load factor must be positive");
    snr_table(law).at_sigma(1.0 / gamma)
}

/// Quantization noise variance predicted for one analysis frame: the frame
/// power divided by the codec's SNR at the frame's load factor. An
/// all-zero frame yields 0.
pub fn estimate_noise_variance(frame: &[f64], law: Law) -> f64 {
    assert!(!frame.is_empty());
    let sigma2 = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
    if sigma2 == 0.0 {
        return 0.0;
    }
    sigma2 / snr_q(1.0 / sigma2.sqrt(), law)
}

/// Final Wiener gains for one block's spectrum. `noise_var` of 0 yields
/// unit gains (nothing to suppress). `spec` must be scaled so that
/// |S(k)|^2 is commensurate with the time-domain power (see `apply`).
pub fn wiener_gains(
    spec: &[Complex<f64>],
    noise_var: f64,
    state: &mut PostfilterState,
    cfg: &PostfilterConfig,
) -> Vec<f64> {
    assert_eq!(spec.len(), state.prev_s1_sq.len());
    if noise_var == 0.0 {
        for (s, p) in spec.iter().zip(state.prev_s1_sq.iter_mut()) {
            *p = s.norm_sqr();
        }
        state.prev_noise_var = 0.0;
        return vec![1.0; spec.len()];
    }
    let mut g2 = vec![0.0; spec.len()];
    for (k, s) in spec.iter().enumerate() {
        let gamma = s.norm_sqr() / noise_var;
        let prior = if state.prev_noise_var > 0.0 {
            state.prev_s1_sq[k] / state.prev_noise_var
        } else {
            0.0
        };
        let xi1 = cfg.beta * prior + (1.0 - cfg.beta) * (gamma - 1.0).max(0.0);
        let g1 = xi1 / (1.0 + xi1);
        let s1_sq = g1 * g1 * s.norm_sqr();
        state.prev_s1_sq[k] = s1_sq;
        let xi2 = s1_sq / noise_var;
        g2[k] = (xi2 / (1.0 + xi2)).max(cfg.g_min);
    }
    state.prev_noise_var = noise_var;
    g2
}

/// Turn a real, symmetric gain curve into a causal linear-phase FIR of
/// `filter_len` taps via inverse FFT and a circular shift by the group
/// delay.
fn fir_from_gains(gains: &[f64], cfg: &PostfilterConfig, inv: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    let k = cfg.fft_len;
    let mut buf: Vec<Complex<f64>> = gains.iter().map(|&g| Complex::new(g, 0.0)).collect();
    inv.process(&mut buf);
    let delay = cfg.delay();
    (0..cfg.filter_len)
        .map(|m| buf[(m + k - delay) % k].re / k as f64)
        .collect()
}

/// Filter a decoded signal given its codewords. The output has the
/// input's length and lags it by the filter group delay; with `constrain`
/// every sample from `delay` on is clamped to the quantization interval of
/// the codeword `delay` samples earlier.
pub fn apply(
    signal: &AudioSignal,
    codewords: &[u8],
    cfg: &PostfilterConfig,
    constrain: bool,
) -> Result<AudioSignal, Error> {
    cfg.validate()?;
    let x = &signal.samples;
    let n = x.len();
    if n != codewords.len() {
        return Err(Error::bad_input(format!(
            "{} samples but {} codewords",
            n,
            codewords.len()
        )));
    }
    if n == 0 {
        return Ok(AudioSignal::new(Vec::new(), signal.sample_rate));
    }
    let k = cfg.fft_len;
    let window = periodic_hann(cfg.win);
    // scale the spectrum so a white frame of variance v shows |S(k)|^2 = v
    let wnorm = 1.0 / window.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut planner = rustfft::FftPlanner::new();
    let fwd = planner.plan_fft_forward(k);
    let inv = planner.plan_fft_inverse(k);

    let mut state = PostfilterState::new(k);
    let mut spec = vec![Complex::new(0.0, 0.0); k];
    let mut h = vec![0.0; cfg.filter_len];
    let delay = cfg.delay();
    let mut y = vec![0.0; n];

    for b in 0..n.div_ceil(cfg.hop) {
        let start = b * cfg.hop;
        let stop = (start + cfg.hop).min(n);

        // the analysis frame is the `win` samples strictly before this
        // block, so the filter never looks ahead
        let mut frame = vec![0.0; cfg.win];
        for (i, f) in frame.iter_mut().enumerate() {
            let idx = start as isize - cfg.win as isize + i as isize;
            if idx >= 0 {
                *f = x[idx as usize];
            }
        }
        let noise_var = estimate_noise_variance(&frame, cfg.law);

        if noise_var == 0.0 {
            h.fill(0.0);
            h[delay] = 1.0;
            state.prev_s1_sq.fill(0.0);
            state.prev_noise_var = 0.0;
        } else {
            for (i, s) in spec.iter_mut().enumerate() {
                *s = if i < cfg.win {
                    Complex::new(frame[i] * window[i] * wnorm, 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            fwd.process(&mut spec);
            let g2 = wiener_gains(&spec, noise_var, &mut state, cfg);
            h = fir_from_gains(&g2, cfg, inv.as_ref());
        }

        for t in start..stop {
            let mut acc = 0.0;
            for (m, &hv) in h.iter().enumerate() {
                if t >= m {
                    acc += hv * x[t - m];
                }
            }
            y[t] = acc;
        }
    }

    if constrain && n > delay {
        g711::constrain(&mut y[delay..], &codewords[..n - delay], cfg.law);
    }
    Ok(AudioSignal::new(y, signal.sample_rate))
}

/// Default postfilter chain for a decoded signal: recover the codewords by
/// re-encoding (exact for signals that came out of this codec), filter,
/// constrain.
pub fn enhance(decoded: &AudioSignal, law: Law) -> Result<AudioSignal, Error> {
    let cfg = PostfilterConfig::for_rate(decoded.sample_rate, law)?;
    let codes = g711::encode_signal(&decoded.samples, law);
    apply(decoded, &codes, &cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::NB_RATE;
    use crate::metrics;
    use crate::synth::speech_like;
    use rand::Rng;

    fn nb_cfg(law: Law) -> PostfilterConfig {
        PostfilterConfig::for_rate(NB_RATE, law).unwrap()
    }

    #[test]
    fn config_tracks_the_rate() {
        let c = nb_cfg(Law::ALaw);
        assert_eq!((c.win, c.hop, c.fft_len, c.filter_len, c.delay()), (32, 16, 64, 32, 16));
        let c = PostfilterConfig::for_rate(16000, Law::ALaw).unwrap();
        assert_eq!((c.win, c.hop, c.fft_len, c.filter_len, c.delay()), (64, 32, 128, 64, 32));
        assert!(PostfilterConfig::for_rate(44100, Law::ALaw).is_err());
    }

    #[test]
    fn snr_curve_plateaus_at_mid_loads() {
        for law in [Law::ALaw, Law::MuLaw] {
            for sigma in [0.02, 0.05, 0.1, 0.2] {
                let db = 10.0 * snr_q(1.0 / sigma, law).log10();
                assert!((33.0..44.0).contains(&db), "{law:?} sigma {sigma}: {db} dB");
            }
        }
        // A-law plateau is commonly quoted near 38 dB
        let db = 10.0 * snr_q(1.0 / 0.05, Law::ALaw).log10();
        assert!((db - 38.0).abs() < 2.0, "A-law plateau {db} dB");
    }

    #[test]
    fn snr_degrades_monotonically_in_overload() {
        for law in [Law::ALaw, Law::MuLaw] {
            let s1 = snr_q(0.3, law);
            let s2 = snr_q(0.6, law);
            let s3 = snr_q(1.2, law);
            assert!(s1 < s2 && s2 < s3, "{law:?}: {s1} {s2} {s3}");
        }
        // outside the table the curve clamps to its endpoints
        assert_eq!(snr_q(1e9, Law::ALaw), snr_q(2e4, Law::ALaw));
        assert_eq!(snr_q(1e-3, Law::ALaw), snr_q(0.2, Law::ALaw));
    }

    #[test]
    fn noise_variance_tracks_measured_codec_noise() {
        // full-load sine: predicted noise variance within a factor of 2 of
        // the actually measured coded-minus-clean variance
        let n = 8000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 8000.0).sin())
            .collect();
        let codes = g711::encode_signal(&x, Law::ALaw);
        let y = g711::decode_signal(&codes, Law::ALaw);
        let measured = x
            .iter()
            .zip(&y)
            .map(|(&a, &b)| (b - a) * (b - a))
            .sum::<f64>()
            / n as f64;
        let predicted = estimate_noise_variance(&x, Law::ALaw);
        assert!(
            predicted / measured < 2.0 && measured / predicted < 2.0,
            "predicted {predicted:e}, measured {measured:e}"
        );
        assert_eq!(estimate_noise_variance(&[0.0; 32], Law::ALaw), 0.0);
    }

    #[test]
    fn gain_floor_engages_at_unit_posterior_snr() {
        let cfg = nb_cfg(Law::ALaw);
        let mut state = PostfilterState::new(cfg.fft_len);
        let noise_var = 0.01;
        // |S|^2 == noise_var in every bin, fresh state: gamma-1 = 0 and no
        // memory leaves xi1 = 0, so the floor engages everywhere
        let spec = vec![Complex::new(0.1, 0.0); cfg.fft_len];
        let g = wiener_gains(&spec, noise_var, &mut state, &cfg);
        assert!(g.iter().all(|&v| v == cfg.g_min), "{:?}", &g[..4]);
    }

    #[test]
    fn high_snr_bins_stay_transparent() {
        let cfg = nb_cfg(Law::ALaw);
        let mut state = PostfilterState::new(cfg.fft_len);
        let noise_var = 1e-6;
        let spec = vec![Complex::new(1.0, 0.0); cfg.fft_len]; // |S|^2 = 1e6 x noise
        let g = wiener_gains(&spec, noise_var, &mut state, &cfg);
        assert!(g.iter().all(|&v| v >= 0.999), "{}", g[0]);
    }

    #[test]
    fn gains_stay_within_bounds_on_random_input() {
        let cfg = nb_cfg(Law::MuLaw);
        let mut state = PostfilterState::new(cfg.fft_len);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let spec: Vec<Complex<f64>> = (0..cfg.fft_len)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let noise_var = rng.gen_range(1e-8..1e-2);
            let g = wiener_gains(&spec, noise_var, &mut state, &cfg);
            assert!(g.iter().all(|&v| v >= cfg.g_min && v <= 1.0));
        }
    }

    #[test]
    fn unit_gains_make_a_pure_delay() {
        let cfg = nb_cfg(Law::ALaw);
        let mut planner = rustfft::FftPlanner::new();
        let inv = planner.plan_fft_inverse(cfg.fft_len);
        let h = fir_from_gains(&vec![1.0; cfg.fft_len], &cfg, inv.as_ref());
        for (m, &hv) in h.iter().enumerate() {
            let want = if m == cfg.delay() { 1.0 } else { 0.0 };
            assert!((hv - want).abs() < 1e-6, "tap {m}: {hv}");
        }
    }

    #[test]
    fn silence_in_silence_out() {
        let s = AudioSignal::new(vec![0.0; 400], NB_RATE);
        let codes = g711::encode_signal(&s.samples, Law::ALaw);
        let cfg = nb_cfg(Law::ALaw);
        let out = apply(&s, &codes, &cfg, false).unwrap();
        assert_eq!(out.samples, vec![0.0; 400]);
    }

    #[test]
    fn white_noise_loses_no_more_than_it_keeps() {
        // gains <= 1 make the filter passive
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let x: Vec<f64> = (0..16000).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let s = AudioSignal::new(x, NB_RATE);
        let codes = g711::encode_signal(&s.samples, Law::ALaw);
        let out = apply(&s, &codes, &nb_cfg(Law::ALaw), false).unwrap();
        let vin = metrics::mean_square(&s.samples);
        let vout = metrics::mean_square(&out.samples);
        assert!(vout <= vin, "in {vin}, out {vout}");
    }

    #[test]
    fn output_aligns_at_the_group_delay() {
        let clean = speech_like(NB_RATE, 8000, 21);
        let coded = AudioSignal::new(
            g711::decode_signal(&g711::encode_signal(&clean.samples, Law::ALaw), Law::ALaw),
            NB_RATE,
        );
        let out = enhance(&coded, Law::ALaw).unwrap();
        let mut best = (0usize, f64::MIN);
        for lag in 0..48 {
            let c: f64 = (lag..8000)
                .map(|t| out.samples[t] * coded.samples[t - lag])
                .sum();
            if c > best.1 {
                best = (lag, c);
            }
        }
        assert_eq!(best.0, 16);
    }

    #[test]
    fn output_respects_the_quantization_intervals() {
        let clean = speech_like(NB_RATE, 8000, 22);
        for law in [Law::ALaw, Law::MuLaw] {
            let codes = g711::encode_signal(&clean.samples, law);
            let coded = AudioSignal::new(g711::decode_signal(&codes, law), NB_RATE);
            let out = enhance(&coded, law).unwrap();
            for (t, &v) in out.samples.iter().enumerate().skip(16) {
                let (lo, hi) = g711::quant_interval(codes[t - 16], law);
                assert!(v >= lo && v < hi, "{law:?} sample {t}: {v} outside [{lo},{hi})");
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let clean = speech_like(NB_RATE, 4000, 29);
        let coded = AudioSignal::new(
            g711::decode_signal(&g711::encode_signal(&clean.samples, Law::ALaw), Law::ALaw),
            NB_RATE,
        );
        let a = enhance(&coded, Law::ALaw).unwrap();
        let b = enhance(&coded, Law::ALaw).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn lowers_the_spectral_distance_of_coded_speech() {
        let clean = speech_like(NB_RATE, NB_RATE as usize * 10, 23);
        let codes = g711::encode_signal(&clean.samples, Law::ALaw);
        let coded = AudioSignal::new(g711::decode_signal(&codes, Law::ALaw), NB_RATE);
        let out = enhance(&coded, Law::ALaw).unwrap();

        let n = clean.samples.len();
        let head = AudioSignal::new(clean.samples[..n - 16].to_vec(), NB_RATE);
        let before = metrics::evaluate(
            &head,
            &AudioSignal::new(coded.samples[..n - 16].to_vec(), NB_RATE),
        )
        .unwrap();
        let after = metrics::evaluate(
            &head,
            &AudioSignal::new(out.samples[16..].to_vec(), NB_RATE),
        )
        .unwrap();
        assert!(
            after.lsd < before.lsd,
            "lsd went from {} to {}",
            before.lsd,
            after.lsd
        );
    }
}
