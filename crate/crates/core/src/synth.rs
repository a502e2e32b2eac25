//! Deterministic speech-shaped test signals: alternating voiced segments
//! (jittered impulse trains through formant resonators), fricative-like
//! noise bursts and pauses, leveled to a typical telephony RMS. Used by
//! the test suites wherever real recordings would otherwise be required.

use crate::audio::AudioSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Target level: RMS 0.05 of full scale, about -26 dBFS.
const TARGET_RMS: f64 = 0.05;
const PEAK_LIMIT: f64 = 0.7;

/// Second-order resonator with poles at radius r and the given frequency.
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, r: f64, rate: f64) -> Resonator {
        let theta = 2.0 * std::f64::consts::PI * freq / rate;
        Resonator {
            b0: (1.0 - r) * (1.0 - 2.0 * r * theta.cos() + r * r).sqrt(),
            a1: 2.0 * r * theta.cos(),
            a2: -(r * r),
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Scale a segment to the given RMS so segment kinds keep a stable level
/// balance regardless of resonator gains.
fn level_segment(seg: &mut [f64], rms_target: f64) {
    let ms = seg.iter().map(|v| v * v).sum::<f64>() / seg.len().max(1) as f64;
    if ms > 0.0 {
        let g = rms_target / ms.sqrt();
        for v in seg.iter_mut() {
            *v *= g;
        }
    }
}

/// Raised-cosine fade applied to both ends of a segment.
fn fade(seg: &mut [f64], ramp: usize) {
    let ramp = ramp.min(seg.len() / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos();
        seg[i] *= g;
        let j = seg.len() - 1 - i;
        seg[j] *= g;
    }
}

/// Generate `len` samples of speech-like audio at `sample_rate`, identical
/// for identical arguments.
pub fn speech_like(sample_rate: u32, len: usize, seed: u64) -> AudioSignal {
    let rate = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = Vec::with_capacity(len);

    while out.len() < len {
        let seg_ms = rng.gen_range(80..=280);
        let seg_len = (seg_ms * sample_rate as usize / 1000).min(len - out.len());
        let mut seg = vec![0.0; seg_len];
        let kind: f64 = rng.gen();
        if kind < 0.2 {
            // pause: leave near-silence with a faint noise floor
            for v in seg.iter_mut() {
                *v = rng.gen_range(-1e-4..1e-4);
            }
        } else if kind < 0.45 {
            // fricative-like noise through one broad high resonator
            let fc = rng.gen_range(1400.0..(0.42 * rate));
            let mut res = Resonator::new(fc, 0.9, rate);
            for v in seg.iter_mut() {
                *v = res.tick(rng.gen_range(-1.0..1.0));
            }
            level_segment(&mut seg, 0.35);
            fade(&mut seg, sample_rate as usize / 200);
        } else {
            // voiced: jittered glottal pulses with the usual -12 dB/oct
            // spectral tilt, shaped by three formants
            let f0 = rng.gen_range(90.0..220.0);
            let formants = [
                rng.gen_range(280.0..780.0),
                rng.gen_range(900.0..2200.0),
                rng.gen_range(2300.0..(0.45 * rate).max(2400.0)),
            ];
            let mut res: Vec<Resonator> = formants
                .iter()
                .map(|&f| Resonator::new(f.min(0.46 * rate), 0.97, rate))
                .collect();
            let mut next_pulse = 0.0f64;
            let (mut t1, mut t2) = (0.0f64, 0.0f64); // glottal tilt integrators
            for (i, v) in seg.iter_mut().enumerate() {
                let mut x = rng.gen_range(-0.02..0.02);
                if i as f64 >= next_pulse {
                    x += 1.0;
                    let jitter = rng.gen_range(0.97..1.03);
                    next_pulse += jitter * rate / f0;
                }
                t1 = x + 0.94 * t1;
                t2 = t1 + 0.94 * t2;
                let mut y = t2;
                for r in res.iter_mut() {
                    y = r.tick(y);
                }
                *v = y;
            }
            level_segment(&mut seg, 1.0);
            fade(&mut seg, sample_rate as usize / 200);
        }
        out.extend_from_slice(&seg);
    }

    // level to the target RMS, then keep peaks inside the limit
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
    if rms > 0.0 {
        let mut g = TARGET_RMS / rms;
        let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if peak * g > PEAK_LIMIT {
            g = PEAK_LIMIT / peak;
        }
        for v in out.iter_mut() {
            *v *= g;
        }
    }
    AudioSignal::new(out, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{NB_RATE, WB_RATE};
    use crate::metrics::voice_activity;

    #[test]
    fn deterministic_for_a_seed() {
        let a = speech_like(NB_RATE, 8000, 42);
        let b = speech_like(NB_RATE, 8000, 42);
        assert_eq!(a.samples, b.samples);
        let c = speech_like(NB_RATE, 8000, 43);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn leveled_and_bounded() {
        for rate in [NB_RATE, WB_RATE] {
            let s = speech_like(rate, rate as usize * 5, 7);
            assert_eq!(s.samples.len(), rate as usize * 5);
            let rms = (s.samples.iter().map(|v| v * v).sum::<f64>()
                / s.samples.len() as f64)
                .sqrt();
            assert!(rms > 0.005 && rms <= 0.06, "rms {rms}");
            assert!(s.samples.iter().all(|v| v.abs() <= PEAK_LIMIT));
        }
    }

    #[test]
    fn mixes_active_and_inactive_frames() {
        let s = speech_like(NB_RATE, NB_RATE as usize * 10, 11);
        let act = voice_activity(&s);
        let on = act.iter().filter(|&&a| a).count();
        assert!(on > act.len() / 4, "{on}/{}", act.len());
        assert!(on < act.len(), "{on}/{}", act.len());
    }
}
