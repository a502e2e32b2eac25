//! Instrumental quality measures over 32 ms frames hopped by 16 ms:
//! an energy voice-activity gate on the reference, log-spectral distance
//! (LSD) over the telephone band, and segmental plus whole-file
//! signal-to-modified-signal ratios (SSDR). Spectral and segmental
//! averages cover active frames only.

use crate::audio::{AudioSignal, Bandwidth};
use crate::error::Error;
use crate::framing::periodic_hann;
use rustfft::num_complex::Complex;

pub const WINDOW_MS: usize = 32;
pub const HOP_MS: usize = 16;
/// A frame is active when its mean square exceeds this fraction of the
/// whole file's mean square.
pub const VAD_THRESHOLD: f64 = 0.1;
pub const LSD_FFT_LEN: usize = 512;
/// Floor applied to power spectra before the log.
const POWER_FLOOR: f64 = 1e-20;
const SSDR_SEG_MIN: f64 = -10.0;
const SSDR_SEG_MAX: f64 = 40.0;

/// Inclusive FFT bin range evaluated by the LSD, chosen to span roughly
/// 50 Hz to 3.4 kHz at 8 kHz and 30 Hz to 7 kHz at 16 kHz.
pub fn lsd_band(bw: Bandwidth) -> (usize, usize) {
    match bw {
        Bandwidth::Narrowband => (3, 217),
        Bandwidth::Wideband => (1, 224),
    }
}

pub fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn frame_count(len: usize, win: usize, hop: usize) -> usize {
    if len < win {
        0
    } else {
        (len - win) / hop + 1
    }
}

/// Active/inactive flags for the complete metric frames of a reference
/// signal.
pub fn voice_activity(reference: &AudioSignal) -> Vec<bool> {
    voice_activity_with(reference, VAD_THRESHOLD)
}

/// [`voice_activity`] at a caller-chosen energy threshold.
pub fn voice_activity_with(reference: &AudioSignal, threshold: f64) -> Vec<bool> {
    let spms = reference.sample_rate as usize / 1000;
    let win = WINDOW_MS * spms;
    let hop = HOP_MS * spms;
    let file_ms = mean_square(&reference.samples);
    let n = frame_count(reference.samples.len(), win, hop);
    (0..n)
        .map(|l| {
            let frame = &reference.samples[l * hop..l * hop + win];
            file_ms > 0.0 && mean_square(frame) / file_ms > threshold
        })
        .collect()
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EvalReport {
    /// Mean log-spectral distance over active frames, dB.
    pub lsd: f64,
    /// Mean clamped per-frame SSDR over active frames, dB.
    pub ssdr_seg: f64,
    /// Whole-file SSDR, dB (unclamped; +inf for identical signals).
    pub ssdr_global: f64,
    pub active_frames: usize,
    pub total_frames: usize,
}

/// Compare a processed signal against its aligned reference.
pub fn evaluate(reference: &AudioSignal, test: &AudioSignal) -> Result<EvalReport, Error> {
    evaluate_with(reference, test, VAD_THRESHOLD)
}

/// [`evaluate`] at a caller-chosen voice-activity threshold.
pub fn evaluate_with(
    reference: &AudioSignal,
    test: &AudioSignal,
    vad_threshold: f64,
) -> Result<EvalReport, Error> {
    if reference.sample_rate != test.sample_rate {
        return Err(Error::bad_input(format!(
            "sample rates differ: {} vs {}",
            reference.sample_rate, test.sample_rate
        )));
    }
    if reference.samples.len() != test.samples.len() {
        return Err(Error::bad_input(format!(
            "lengths differ: {} vs {} samples",
            reference.samples.len(),
            test.samples.len()
        )));
    }
    let bw = reference.bandwidth()?;
    let spms = reference.sample_rate as usize / 1000;
    let win = WINDOW_MS * spms;
    let hop = HOP_MS * spms;
    let n = frame_count(reference.samples.len(), win, hop);
    if n == 0 {
        return Err(Error::bad_input("signal shorter than one metric frame"));
    }

    let active = voice_activity_with(reference, vad_threshold);
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Err(Error::bad_input("no active frames in the reference"));
    }

    let window = periodic_hann(win);
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(LSD_FFT_LEN);
    let (k_lo, k_hi) = lsd_band(bw);
    let power = |frame: &[f64]| -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex::new(s * w, 0.0))
            .collect();
        buf.resize(LSD_FFT_LEN, Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        buf.iter().map(|c| c.norm_sqr().max(POWER_FLOOR)).collect()
    };

    let mut lsd_sum = 0.0;
    let mut seg_sum = 0.0;
    for (l, _) in active.iter().enumerate().filter(|&(_, &a)| a) {
        let r = &reference.samples[l * hop..l * hop + win];
        let t = &test.samples[l * hop..l * hop + win];

        let pr = power(r);
        let pt = power(t);
        let mut acc = 0.0;
        for k in k_lo..=k_hi {
            let d = 10.0 * (pr[k] / pt[k]).log10();
            acc += d * d;
        }
        lsd_sum += (acc / (k_hi - k_lo + 1) as f64).sqrt();

        let num: f64 = r.iter().map(|v| v * v).sum();
        let den: f64 = r.iter().zip(t).map(|(&a, &b)| (b - a) * (b - a)).sum();
        let ratio_db = 10.0 * (num / den).log10();
        seg_sum += ratio_db.clamp(SSDR_SEG_MIN, SSDR_SEG_MAX);
    }

    let num: f64 = reference.samples.iter().map(|v| v * v).sum();
    let den: f64 = reference
        .samples
        .iter()
        .zip(&test.samples)
        .map(|(&a, &b)| (b - a) * (b - a))
        .sum();
    let ssdr_global = 10.0 * (num / den).log10();

    Ok(EvalReport {
        lsd: lsd_sum / n_active as f64,
        ssdr_seg: seg_sum / n_active as f64,
        ssdr_global,
        active_frames: n_active,
        total_frames: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::NB_RATE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, amp: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-amp..amp)).collect()
    }

    fn sig(samples: Vec<f64>) -> AudioSignal {
        AudioSignal::new(samples, NB_RATE)
    }

    #[test]
    fn activity_follows_energy() {
        // 64 ms of loud noise then 64 ms of silence at 8 kHz
        let mut s = noise(512, 0.3, 1);
        s.extend(std::iter::repeat_n(0.0, 512));
        let active = voice_activity(&sig(s));
        // frames start every 128 samples; the loud half covers 0..512
        assert_eq!(active, vec![true, true, true, true, false, false, false]);
    }

    #[test]
    fn identical_signals_hit_the_clamp() {
        let s = sig(noise(2048, 0.3, 2));
        let rep = evaluate(&s, &s).unwrap();
        assert_eq!(rep.lsd, 0.0);
        assert_eq!(rep.ssdr_seg, 40.0);
        assert!(rep.ssdr_global.is_infinite() && rep.ssdr_global > 0.0);
        assert_eq!(rep.active_frames, rep.total_frames);
    }

    #[test]
    fn doubled_signal_scores_six_db_lsd_and_zero_ssdr() {
        let r = noise(4096, 0.2, 3);
        let t: Vec<f64> = r.iter().map(|&v| 2.0 * v).collect();
        let rep = evaluate(&sig(r), &sig(t)).unwrap();
        // flat 6.0206 dB ratio in every bin; rms over bins returns it exactly
        let want = 10.0 * 4.0f64.log10();
        assert!((rep.lsd - want).abs() < 1e-9, "lsd {}", rep.lsd);
        // error = reference, so both ratios sit at 0 dB
        assert!((rep.ssdr_seg - 0.0).abs() < 1e-9);
        assert!((rep.ssdr_global - 0.0).abs() < 1e-9);
    }

    #[test]
    fn sign_flip_costs_six_db_ssdr() {
        let r = noise(4096, 0.2, 4);
        let t: Vec<f64> = r.iter().map(|&v| -v).collect();
        let rep = evaluate(&sig(r), &sig(t)).unwrap();
        let want = -10.0 * 4.0f64.log10();
        assert!((rep.ssdr_seg - want).abs() < 1e-9);
        assert!((rep.ssdr_global - want).abs() < 1e-9);
    }

    #[test]
    fn heavy_distortion_hits_the_lower_clamp() {
        let r = noise(2048, 0.01, 5);
        let t = noise(2048, 0.9, 6); // error energy  >> 10x reference
        let rep = evaluate(&sig(r), &sig(t)).unwrap();
        assert_eq!(rep.ssdr_seg, -10.0);
        assert!(rep.ssdr_global < -10.0);
    }

    #[test]
    fn inactive_frames_do_not_count() {
        // loud head, silent tail; corrupt only the tail
        let mut r = noise(512, 0.3, 7);
        r.extend(std::iter::repeat_n(0.0, 512));
        let mut t = r.clone();
        for v in t[640..].iter_mut() {
            *v += 0.05;
        }
        // frames 0..=3 (starts 0,128,256,384) end by sample 639: untouched
        let rep = evaluate(&sig(r), &sig(t)).unwrap();
        assert_eq!(rep.active_frames, 4);
        assert_eq!(rep.lsd, 0.0);
        assert_eq!(rep.ssdr_seg, 40.0);
        assert!(rep.ssdr_global.is_finite());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let a = sig(noise(1000, 0.1, 8));
        let b = sig(noise(999, 0.1, 8));
        assert!(matches!(evaluate(&a, &b), Err(Error::BadInput(_))));
        let c = AudioSignal::new(noise(1000, 0.1, 8), 16000);
        assert!(matches!(evaluate(&a, &c), Err(Error::BadInput(_))));
        let silent = sig(vec![0.0; 1000]);
        assert!(matches!(evaluate(&silent, &a), Err(Error::BadInput(_))));
    }
}
