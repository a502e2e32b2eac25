//! End-to-end enhancement: frames a decoded signal, runs the chosen
//! processing on each frame (time-domain network, cepstral-envelope
//! network, or the two-stage Wiener baseline) and reconstructs, with
//! optional quantization-interval constraint and peak limiting.

use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{read_wav, write_wav, AudioSignal};
use crate::cepstral::{c0_floor, CepstralFrame, CepstralProcessor, C0_GAMMA, C0_THRESHOLD};
use crate::cnn::CnnModel;
use crate::error::Error;
use crate::framing::{analyze, reconstruct, StructureId};
use crate::g711::{self, Law, LSB};
use crate::metrics;
use crate::postfilter::{self, PostfilterConfig};

/// Which processing runs on the decoded signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMode {
    CnnTime,
    CnnCepstral,
    BaselinePostfilter,
}

impl EnhanceMode {
    pub fn name(self) -> &'static str {
        match self {
            EnhanceMode::CnnTime => "cnn-time",
            EnhanceMode::CnnCepstral => "cnn-cepstral",
            EnhanceMode::BaselinePostfilter => "postfilter",
        }
    }
}

/// Everything an enhancement run needs besides the signal itself.
pub struct EnhanceOptions<'a> {
    pub mode: EnhanceMode,
    /// Framework structure for the cepstral mode; the time mode always
    /// uses the time framer and the baseline does its own framing.
    pub structure: StructureId,
    pub model: Option<&'a CnnModel>,
    /// Codec law, used by the baseline's noise model and by `constrain`.
    pub law: Law,
    /// Clamp each enhanced sample into the quantization interval of the
    /// codeword the decoded input re-encodes to.
    pub constrain: bool,
    /// Push down the energy coefficient of quiet cepstral frames.
    pub c0_floor: bool,
}

fn denormalize(v: &mut [f64], model: &CnnModel) {
    for (x, (&m, &s)) in v
        .iter_mut()
        .zip(model.norm_mean.iter().zip(&model.norm_std))
    {
        *x = *x * s + m;
    }
}

fn require_model<'a>(opts: &EnhanceOptions<'a>) -> Result<&'a CnnModel, Error> {
    opts.model
        .ok_or_else(|| Error::bad_config(format!("mode {} needs a model", opts.mode.name())))
}

/// Enhance a decoded signal. The output keeps the input's length and
/// rate and starts with the processing structure's delay of zeros.
pub fn enhance(input: &AudioSignal, opts: &EnhanceOptions) -> Result<AudioSignal, Error> {
    let bw = input.bandwidth()?;
    if input.is_empty() {
        return Err(Error::bad_input("cannot enhance an empty signal"));
    }

    let (mut out, delay) = match opts.mode {
        EnhanceMode::CnnTime => {
            let model = require_model(opts)?;
            let mut seq = analyze(input, StructureId::Time)?;
            let pl = seq.structure.processing_len(bw);
            if model.config.input_len != pl {
                return Err(Error::bad_config(format!(
                    "model takes frames of {} samples but the time framer yields {pl}",
                    model.config.input_len
                )));
            }
            for frame in seq.frames.iter_mut() {
                let mut y = model.forward(frame);
                denormalize(&mut y, model);
                *frame = y;
            }
            (reconstruct(&seq)?, 0)
        }
        EnhanceMode::CnnCepstral => {
            let model = require_model(opts)?;
            if opts.structure == StructureId::Time {
                return Err(Error::bad_config(
                    "cepstral mode needs a framework structure, not the time framer",
                ));
            }
            let processor = CepstralProcessor::for_structure(opts.structure, bw)?;
            let env_len = processor.config.env_len;
            if model.config.input_len != env_len {
                return Err(Error::bad_config(format!(
                    "model takes envelopes of {} coefficients but structure {} yields {env_len}",
                    model.config.input_len,
                    opts.structure.name()
                )));
            }
            let mut seq = analyze(input, opts.structure)?;
            let pl = seq.structure.processing_len(bw);
            for frame in seq.frames.iter_mut() {
                let cf = processor.analyze(frame);
                let mut envelope = model.forward(&cf.envelope);
                denormalize(&mut envelope, model);
                if opts.c0_floor {
                    c0_floor(&mut envelope, C0_THRESHOLD, C0_GAMMA);
                }
                let y = processor.synthesize(&CepstralFrame {
                    envelope,
                    residual: cf.residual,
                    phase: cf.phase,
                });
                frame.copy_from_slice(&y[..pl]);
            }
            let delay = seq.structure.delay_samples(bw);
            (reconstruct(&seq)?, delay)
        }
        EnhanceMode::BaselinePostfilter => {
            let cfg = PostfilterConfig::for_rate(input.sample_rate, opts.law)?;
            let codewords = g711::encode_signal(&input.samples, opts.law);
            let out = postfilter::apply(input, &codewords, &cfg, opts.constrain)?;
            return Ok(out);
        }
    };

    // network output is unbounded; saturate into the signal range
    for v in out.samples.iter_mut() {
        *v = v.clamp(-1.0, 1.0 - LSB);
    }

    if opts.constrain {
        let codewords = g711::encode_signal(&input.samples, opts.law);
        let n = out.len();
        if delay < n {
            g711::constrain(&mut out.samples[delay..], &codewords[..n - delay], opts.law);
        }
    }
    Ok(out)
}

/// Outcome of a corpus coding run.
#[derive(Debug, Default)]
pub struct PairReport {
    pub written: Vec<PathBuf>,
    /// (path, reason) for inputs that were not coded.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Code every 8 kHz WAV in `clean_dir` through the law and write the
/// decoded result under the same name into `out_dir`. Files at other
/// rates are reported as skipped, not errors.
pub fn make_pairs(clean_dir: &Path, out_dir: &Path, law: Law) -> Result<PairReport, Error> {
    let mut names: Vec<PathBuf> = fs::read_dir(clean_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::bad_input(format!(
            "no .wav files in {}",
            clean_dir.display()
        )));
    }
    fs::create_dir_all(out_dir)?;

    let mut report = PairReport::default();
    for path in names {
        let clean = read_wav(&path)?;
        if clean.sample_rate != 8000 {
            report.skipped.push((
                path,
                format!("sample rate {} Hz, codec runs at 8000", clean.sample_rate),
            ));
            continue;
        }
        let coded = g711::decode_signal(&g711::encode_signal(&clean.samples, law), law);
        let out_path = out_dir.join(path.file_name().unwrap());
        write_wav(&out_path, &AudioSignal::new(coded, 8000))?;
        report.written.push(out_path);
    }
    Ok(report)
}

/// Evaluate enhanced speech against its clean reference, compensating the
/// enhancement delay by trimming the leading zeros of the output and the
/// tail of the reference.
pub fn evaluate_delayed(
    reference: &AudioSignal,
    enhanced: &AudioSignal,
    delay: usize,
) -> Result<metrics::EvalReport, Error> {
    if delay == 0 {
        return metrics::evaluate(reference, enhanced);
    }
    if enhanced.len() <= delay {
        return Err(Error::bad_input("signal shorter than the delay"));
    }
    let r = AudioSignal::new(
        reference.samples[..reference.len() - delay].to_vec(),
        reference.sample_rate,
    );
    let e = AudioSignal::new(enhanced.samples[delay..].to_vec(), enhanced.sample_rate);
    metrics::evaluate(&r, &e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::CnnConfig;
    use crate::framing::FrameworkStructure;
    use crate::g711::quant_interval;
    use crate::synth::speech_like;
    use crate::audio::Bandwidth;

    fn coded_speech(len: usize, seed: u64) -> AudioSignal {
        let clean = speech_like(8000, len, seed);
        let cw = g711::encode_signal(&clean.samples, Law::ALaw);
        AudioSignal::new(g711::decode_signal(&cw, Law::ALaw), 8000)
    }

    fn opts<'a>(mode: EnhanceMode, structure: StructureId, model: Option<&'a CnnModel>) -> EnhanceOptions<'a> {
        EnhanceOptions {
            mode,
            structure,
            model,
            law: Law::ALaw,
            constrain: false,
            c0_floor: false,
        }
    }

    #[test]
    fn identity_model_is_transparent_for_every_structure() {
        let bw = Bandwidth::Narrowband;
        let x = coded_speech(2 * 8000, 31);
        let n = x.len();

        // time mode: concatenation, no delay, no spectral processing
        let time_model = CnnModel::identity(CnnConfig::new(80, 3, 2).unwrap());
        let y = enhance(&x, &opts(EnhanceMode::CnnTime, StructureId::Time, Some(&time_model))).unwrap();
        let err = x
            .samples
            .iter()
            .zip(&y.samples)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-5, "time mode error {err}");

        for id in [
            StructureId::S1,
            StructureId::S2,
            StructureId::S3,
            StructureId::S4,
            StructureId::S5,
            StructureId::S6,
        ] {
            let s = FrameworkStructure::get(id);
            let env_len = 2 * s.processing_len(bw) / 16;
            let model = CnnModel::identity(CnnConfig::new(env_len, 3, 2).unwrap());
            let y = enhance(&x, &opts(EnhanceMode::CnnCepstral, id, Some(&model))).unwrap();
            assert_eq!(y.len(), n);
            let delay = s.delay_samples(bw);
            let margin = s.processing_len(bw) + delay;
            let mut err = 0.0f64;
            for i in margin..n - margin {
                err = err.max((y.samples[i] - x.samples[i - delay]).abs());
            }
            assert!(err < 1e-5, "structure {} error {err}", id.name());
        }
    }

    #[test]
    fn enhancement_is_deterministic() {
        let x = coded_speech(8000, 32);
        let model = CnnModel::init(CnnConfig::new(32, 3, 4).unwrap(), 9);
        let o = opts(EnhanceMode::CnnCepstral, StructureId::S3, Some(&model));
        let a = enhance(&x, &o).unwrap();
        let b = enhance(&x, &o).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let x = coded_speech(4000, 33);
        let m32 = CnnModel::identity(CnnConfig::new(32, 3, 2).unwrap());
        // S2 needs 16-coefficient envelopes
        let err = enhance(&x, &opts(EnhanceMode::CnnCepstral, StructureId::S2, Some(&m32)));
        assert!(matches!(err, Err(Error::BadConfig(_))));
        // the time framer yields 80-sample frames
        let err = enhance(&x, &opts(EnhanceMode::CnnTime, StructureId::Time, Some(&m32)));
        assert!(matches!(err, Err(Error::BadConfig(_))));
        // no model at all
        let err = enhance(&x, &opts(EnhanceMode::CnnTime, StructureId::Time, None));
        assert!(matches!(err, Err(Error::BadConfig(_))));
        // cepstral mode on the time framer
        let err = enhance(&x, &opts(EnhanceMode::CnnCepstral, StructureId::Time, Some(&m32)));
        assert!(matches!(err, Err(Error::BadConfig(_))));
    }

    #[test]
    fn unsupported_rate_is_rejected() {
        let x = AudioSignal::new(vec![0.1; 1000], 11025);
        let m = CnnModel::identity(CnnConfig::new(32, 3, 2).unwrap());
        let err = enhance(&x, &opts(EnhanceMode::CnnCepstral, StructureId::S3, Some(&m)));
        assert!(matches!(err, Err(Error::BadInput(_))));
    }

    #[test]
    fn constraint_pins_output_to_the_transmitted_intervals() {
        let x = coded_speech(8000, 34);
        let model = CnnModel::init(CnnConfig::new(32, 3, 6).unwrap(), 4);
        let mut o = opts(EnhanceMode::CnnCepstral, StructureId::S3, Some(&model));
        o.constrain = true;
        let y = enhance(&x, &o).unwrap();
        let cw = g711::encode_signal(&x.samples, Law::ALaw);
        let delay = FrameworkStructure::get(StructureId::S3).delay_samples(Bandwidth::Narrowband);
        for (i, &code) in cw[..y.len() - delay].iter().enumerate() {
            let (lo, hi) = quant_interval(code, Law::ALaw);
            let v = y.samples[i + delay];
            assert!(v >= lo - 1e-12 && v < hi + 1e-12, "sample {i}: {v} outside [{lo},{hi})");
        }
    }

    #[test]
    fn network_output_is_peak_limited() {
        let x = coded_speech(4000, 35);
        // identity model with the output taps scaled far past full scale
        let mut model = CnnModel::identity(CnnConfig::new(80, 3, 2).unwrap());
        for w in model.layers[9].weights.iter_mut() {
            *w *= 50.0;
        }
        let y = enhance(&x, &opts(EnhanceMode::CnnTime, StructureId::Time, Some(&model))).unwrap();
        let lo = y.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi <= 1.0 - LSB && lo >= -1.0, "range [{lo},{hi}]");
        assert!(hi > 0.9, "the gain boost should actually hit the limiter");
    }

    #[test]
    fn baseline_mode_matches_the_postfilter_module() {
        let x = coded_speech(8000, 36);
        let mut o = opts(EnhanceMode::BaselinePostfilter, StructureId::S3, None);
        o.constrain = true;
        let y = enhance(&x, &o).unwrap();
        let want = postfilter::enhance(&x, Law::ALaw).unwrap();
        assert_eq!(y.samples, want.samples);
    }

    #[test]
    fn make_pairs_codes_a_directory_and_skips_other_rates() {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        let out_dir = dir.path().join("coded");
        fs::create_dir(&clean_dir).unwrap();
        let a = speech_like(8000, 5 * 8000, 41);
        let b = speech_like(8000, 5 * 8000, 42);
        let wb = speech_like(16000, 8000, 43);
        write_wav(&clean_dir.join("a.wav"), &a).unwrap();
        write_wav(&clean_dir.join("b.wav"), &b).unwrap();
        write_wav(&clean_dir.join("wb.wav"), &wb).unwrap();

        let report = make_pairs(&clean_dir, &out_dir, Law::ALaw).unwrap();
        assert_eq!(report.written.len(), 2);
        assert_eq!(report.skipped.len(), 1);

        // coded output aligns sample for sample and scores the expected
        // waveform distortion for this codec on speech-like material
        let coded = read_wav(&out_dir.join("a.wav")).unwrap();
        assert_eq!(coded.len(), a.len());
        let rep = metrics::evaluate(&a, &coded).unwrap();
        assert!(
            (35.0..40.0).contains(&rep.ssdr_seg),
            "coded ssdr_seg {}",
            rep.ssdr_seg
        );
    }
}
