//! Block framing front-ends.
//!
//! A framework structure is a (window length, processing length, frame
//! shift, window shape, reconstruction rule) tuple. Seven are built in:
//! six block structures trading latency against overlap, plus the plain
//! time-domain framer that chops the signal into abutting shift-length
//! blocks.
//!
//! Analysis prepends `processing_len - shift` zeros to the signal so the
//! first frame is computable causally, takes `window_len` samples every
//! `shift`, applies the window, then zero-pads each frame up to the
//! processing length. Reconstruction inverts this: overlap-add structures
//! add the windowed portions back at the frame shift and divide by the
//! constant window overlap sum; drop-past structures keep only the newest
//! `shift` samples of every frame; the time framer concatenates. The
//! reconstructed signal is emitted behind `delay_ms()` of exact leading
//! zeros, the algorithmic lookahead of the structure.

use crate::audio::{AudioSignal, Bandwidth};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rect,
    PeriodicHann,
    /// Raised-cosine rise and fall of `window - shift` samples around a
    /// flat top, the flat-top Hann that still overlap-adds to a constant
    /// when the overlap is below 50%.
    FlatTopHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconstruction {
    OverlapAdd,
    DropPast,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    Time,
}

impl StructureId {
    pub const ALL: [StructureId; 7] = [
        StructureId::S1,
        StructureId::S2,
        StructureId::S3,
        StructureId::S4,
        StructureId::S5,
        StructureId::S6,
        StructureId::Time,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureId::S1 => "s1",
            StructureId::S2 => "s2",
            StructureId::S3 => "s3",
            StructureId::S4 => "s4",
            StructureId::S5 => "s5",
            StructureId::S6 => "s6",
            StructureId::Time => "time",
        }
    }
}

impl std::str::FromStr for StructureId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(StructureId::S1),
            "s2" | "2" => Ok(StructureId::S2),
            "s3" | "3" => Ok(StructureId::S3),
            "s4" | "4" => Ok(StructureId::S4),
            "s5" | "5" => Ok(StructureId::S5),
            "s6" | "6" => Ok(StructureId::S6),
            "time" | "td" => Ok(StructureId::Time),
            other => Err(format!("unknown structure '{other}' (s1..s6 or time)")),
        }
    }
}

/// One framing configuration. All lengths are in milliseconds so the same
/// structure serves both bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameworkStructure {
    pub id: StructureId,
    pub window_ms: usize,
    pub processing_ms: usize,
    pub shift_ms: usize,
    pub window: WindowKind,
    pub reconstruction: Reconstruction,
}

impl FrameworkStructure {
    pub fn get(id: StructureId) -> FrameworkStructure {
        use Reconstruction::*;
        use StructureId::*;
        use WindowKind::*;
        let (window_ms, processing_ms, shift_ms, window, reconstruction) = match id {
            S1 => (32, 32, 10, Rect, DropPast),
            S2 => (15, 16, 5, PeriodicHann, OverlapAdd),
            S3 => (20, 32, 10, PeriodicHann, OverlapAdd),
            S4 => (32, 32, 20, Rect, DropPast),
            S5 => (25, 32, 20, FlatTopHann, OverlapAdd),
            S6 => (32, 32, 16, PeriodicHann, OverlapAdd),
            Time => (10, 10, 10, Rect, Concat),
        };
        FrameworkStructure {
            id,
            window_ms,
            processing_ms,
            shift_ms,
            window,
            reconstruction,
        }
    }

    pub fn window_len(&self, bw: Bandwidth) -> usize {
        self.window_ms * bw.samples_per_ms()
    }

    pub fn processing_len(&self, bw: Bandwidth) -> usize {
        self.processing_ms * bw.samples_per_ms()
    }

    pub fn shift(&self, bw: Bandwidth) -> usize {
        self.shift_ms * bw.samples_per_ms()
    }

    /// Zeros prepended to the signal before framing.
    pub fn lead_pad(&self, bw: Bandwidth) -> usize {
        self.processing_len(bw) - self.shift(bw)
    }

    /// Algorithmic delay: how far the analysis window reaches past the
    /// newest frame shift. Zero for the causal (drop-past / concat)
    /// structures.
    pub fn delay_ms(&self) -> usize {
        match self.reconstruction {
            Reconstruction::OverlapAdd => self.window_ms - self.shift_ms,
            Reconstruction::DropPast | Reconstruction::Concat => 0,
        }
    }

    pub fn delay_samples(&self, bw: Bandwidth) -> usize {
        self.delay_ms() * bw.samples_per_ms()
    }

    /// Frames per second of audio.
    pub fn frames_per_second(&self) -> f64 {
        1000.0 / self.shift_ms as f64
    }

    /// The constant the shifted analysis windows sum to, used to normalize
    /// overlap-add reconstruction.
    pub fn overlap_sum(&self, bw: Bandwidth) -> f64 {
        match self.window {
            // hop h dividing the length N makes the cosine terms cancel,
            // leaving N/h copies of the 0.5 mean
            WindowKind::PeriodicHann => {
                self.window_len(bw) as f64 / (2 * self.shift(bw)) as f64
            }
            // complementary crossfade: rise + fall = 1, flat top = 1
            WindowKind::FlatTopHann => 1.0,
            WindowKind::Rect => 1.0,
        }
    }

    /// The analysis window, `window_len` samples.
    pub fn window_values(&self, bw: Bandwidth) -> Vec<f64> {
        let n = self.window_len(bw);
        match self.window {
            WindowKind::Rect => vec![1.0; n],
            WindowKind::PeriodicHann => periodic_hann(n),
            WindowKind::FlatTopHann => {
                let ramp = n - self.shift(bw);
                let flat = n - 2 * ramp;
                // rise and fall are the two halves of a periodic Hann of
                // twice the ramp length, so opposite ramps sum to one
                let h = periodic_hann(2 * ramp);
                let mut w = Vec::with_capacity(n);
                w.extend_from_slice(&h[..ramp]);
                w.extend(std::iter::repeat_n(1.0, flat));
                w.extend_from_slice(&h[ramp..]);
                w
            }
        }
    }
}

/// Periodic Hann window: w[i] = 0.5 (1 - cos(2 pi i / n)).
pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Frames produced by [`analyze`], ready for per-frame processing.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub structure: FrameworkStructure,
    pub sample_rate: u32,
    /// Length of the original signal, which reconstruction restores.
    pub signal_len: usize,
}

/// Slice a signal into windowed, zero-padded processing frames.
pub fn analyze(signal: &AudioSignal, id: StructureId) -> Result<FrameSequence, Error> {
    let bw = signal.bandwidth()?;
    let s = FrameworkStructure::get(id);
    let win = s.window_values(bw);
    let wl = s.window_len(bw);
    let pl = s.processing_len(bw);
    let hop = s.shift(bw);
    let pad = s.lead_pad(bw);
    let n = signal.len();

    let num_frames = n.div_ceil(hop);
    let mut frames = Vec::with_capacity(num_frames);
    for l in 0..num_frames {
        let mut frame = vec![0.0; pl];
        // frame l covers [l*hop, l*hop + wl) of the padded timeline
        for i in 0..wl {
            let padded = l * hop + i;
            if padded >= pad {
                if let Some(&x) = signal.samples.get(padded - pad) {
                    frame[i] = x * win[i];
                }
            }
        }
        frames.push(frame);
    }
    Ok(FrameSequence {
        frames,
        structure: s,
        sample_rate: signal.sample_rate,
        signal_len: n,
    })
}

/// Rebuild a signal from (possibly modified) processing frames.
///
/// The output has the length of the analyzed signal and starts with
/// exactly `delay_ms()` of zeros; the signal content follows shifted by
/// that delay.
pub fn reconstruct(seq: &FrameSequence) -> Result<AudioSignal, Error> {
    let bw = Bandwidth::from_rate(seq.sample_rate)?;
    let s = &seq.structure;
    let wl = s.window_len(bw);
    let pl = s.processing_len(bw);
    let hop = s.shift(bw);
    let pad = s.lead_pad(bw);
    let n = seq.signal_len;
    let delay = s.delay_samples(bw);

    for (l, f) in seq.frames.iter().enumerate() {
        if f.len() != pl {
            return Err(Error::bad_config(format!(
                "frame {l} has length {} but structure {} needs {pl}",
                f.len(),
                s.id.name()
            )));
        }
    }

    // signal on the padded timeline, aligned with the analysis frames
    let mut aligned = vec![0.0; pad + n + pl];
    match s.reconstruction {
        Reconstruction::OverlapAdd => {
            let norm = 1.0 / s.overlap_sum(bw);
            for (l, f) in seq.frames.iter().enumerate() {
                let at = l * hop;
                for i in 0..wl {
                    aligned[at + i] += f[i];
                }
            }
            for v in aligned.iter_mut() {
                *v *= norm;
            }
        }
        Reconstruction::DropPast => {
            // the newest `hop` samples of frame l live at the end of its
            // processing window
            for (l, f) in seq.frames.iter().enumerate() {
                let at = l * hop + (pl - hop);
                aligned[at..at + hop].copy_from_slice(&f[pl - hop..]);
            }
        }
        Reconstruction::Concat => {
            for (l, f) in seq.frames.iter().enumerate() {
                let at = l * hop;
                aligned[at..at + pl].copy_from_slice(f);
            }
        }
    }

    // drop the analysis pad, then emit behind the structure's delay with a
    // hard-zero head
    let mut out = vec![0.0; n];
    if n > delay {
        out[delay..].copy_from_slice(&aligned[pad..pad + n - delay]);
    }
    Ok(AudioSignal::new(out, seq.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioSignal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, rate: u32, seed: u64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), rate)
    }

    #[test]
    fn periodic_hann_endpoints() {
        let w = periodic_hann(160);
        assert_eq!(w[0], 0.0);
        assert!((w[80] - 1.0).abs() < 1e-15);
        // periodic, not symmetric: last sample is nonzero
        assert!(w[159] > 0.0);
    }

    #[test]
    fn table_of_structure_settings() {
        use StructureId::*;
        // (window, processing, shift, delay) in ms
        let want = [
            (S1, 32, 32, 10, 0),
            (S2, 15, 16, 5, 10),
            (S3, 20, 32, 10, 10),
            (S4, 32, 32, 20, 0),
            (S5, 25, 32, 20, 5),
            (S6, 32, 32, 16, 16),
            (Time, 10, 10, 10, 0),
        ];
        for (id, w, p, sh, d) in want {
            let s = FrameworkStructure::get(id);
            assert_eq!((s.window_ms, s.processing_ms, s.shift_ms, s.delay_ms()), (w, p, sh, d));
        }
    }

    #[test]
    fn overlap_sums_match_numeric_window_stacking() {
        let bw = Bandwidth::Narrowband;
        for id in [StructureId::S2, StructureId::S3, StructureId::S5, StructureId::S6] {
            let s = FrameworkStructure::get(id);
            let w = s.window_values(bw);
            let hop = s.shift(bw);
            let wl = s.window_len(bw);
            // stack enough shifted copies and read the sum mid-buffer
            let copies = 8;
            let mut buf = vec![0.0; wl + copies * hop];
            for k in 0..=copies {
                for i in 0..wl {
                    buf[k * hop + i] += w[i];
                }
            }
            let expect = s.overlap_sum(bw);
            for &v in &buf[wl..copies * hop] {
                assert!((v - expect).abs() < 1e-12, "{}: {v} vs {expect}", s.id.name());
            }
        }
    }

    #[test]
    fn s2_overlap_sum_is_three_halves() {
        let s = FrameworkStructure::get(StructureId::S2);
        assert_eq!(s.overlap_sum(Bandwidth::Narrowband), 1.5);
    }

    #[test]
    fn hundred_ms_at_s1_gives_ten_full_frames() {
        let sig = noise(800, 8000, 1);
        let seq = analyze(&sig, StructureId::S1).unwrap();
        assert_eq!(seq.frames.len(), 10);
        assert!(seq.frames.iter().all(|f| f.len() == 256));
    }

    #[test]
    fn constant_input_s3_interior_frame_is_window_then_zeros() {
        let sig = AudioSignal::new(vec![1.0; 1600], 8000);
        let seq = analyze(&sig, StructureId::S3).unwrap();
        let w = FrameworkStructure::get(StructureId::S3).window_values(Bandwidth::Narrowband);
        // frame 4 starts at padded index 320 = signal index 144, well interior
        let f = &seq.frames[4];
        assert_eq!(f.len(), 256);
        for i in 0..160 {
            assert!((f[i] - w[i]).abs() < 1e-15);
        }
        for &v in &f[160..256] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn time_frames_are_raw_blocks() {
        let sig = noise(400, 8000, 2);
        let seq = analyze(&sig, StructureId::Time).unwrap();
        assert_eq!(seq.frames.len(), 5);
        for (l, f) in seq.frames.iter().enumerate() {
            assert_eq!(f[..], sig.samples[l * 80..(l + 1) * 80]);
        }
    }

    #[test]
    fn identity_roundtrip_all_structures() {
        for rate in [8000u32, 16000] {
            let bw = Bandwidth::from_rate(rate).unwrap();
            let sig = noise(rate as usize / 2, rate, 3); // 500 ms
            for id in StructureId::ALL {
                let s = FrameworkStructure::get(id);
                let seq = analyze(&sig, id).unwrap();
                let out = reconstruct(&seq).unwrap();
                assert_eq!(out.samples.len(), sig.samples.len());
                let d = s.delay_samples(bw);
                let wl = s.window_len(bw);
                // interior: clear of startup and tail transients
                for n in (d + wl)..(sig.len() - 2 * wl) {
                    let err = (out.samples[n] - sig.samples[n - d]).abs();
                    assert!(err < 1e-9, "{} rate {rate}: n={n} err={err}", id.name());
                }
            }
        }
    }

    #[test]
    fn delay_head_is_exact_zeros_even_for_modified_frames() {
        let sig = noise(4000, 8000, 4);
        for id in StructureId::ALL {
            let mut seq = analyze(&sig, id).unwrap();
            // simulate a processor that scribbles over every frame
            for f in seq.frames.iter_mut() {
                for (i, v) in f.iter_mut().enumerate() {
                    *v = 0.3 + 0.01 * i as f64;
                }
            }
            let out = reconstruct(&seq).unwrap();
            let d = seq.structure.delay_samples(Bandwidth::Narrowband);
            for n in 0..d {
                assert_eq!(out.samples[n], 0.0, "{} sample {n}", id.name());
            }
            if d > 0 {
                assert!(out.samples[d] != 0.0);
            }
        }
    }

    #[test]
    fn empty_input_yields_no_frames_and_empty_output() {
        let sig = AudioSignal::new(vec![], 8000);
        let seq = analyze(&sig, StructureId::S3).unwrap();
        assert!(seq.frames.is_empty());
        assert!(reconstruct(&seq).unwrap().samples.is_empty());
    }

    #[test]
    fn wrong_frame_length_is_rejected() {
        let sig = noise(800, 8000, 5);
        let mut seq = analyze(&sig, StructureId::S3).unwrap();
        seq.frames[0].pop();
        assert!(reconstruct(&seq).is_err());
    }
}
