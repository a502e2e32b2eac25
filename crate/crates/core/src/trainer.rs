//! Dataset preparation and the training loop: paired frame extraction with
//! voice-activity gating, normalization statistics, shuffled minibatches,
//! Adam updates, learning-rate halving, early stopping and best-validation
//! checkpointing.
//!
//! Targets are normalized with the input statistics for the loss, and the
//! enhancement pipeline undoes that scaling on the network output. The
//! model file stores exactly one statistics pair, so using it for both
//! sides keeps inference invertible; it also keeps the large-magnitude
//! energy coefficient of cepstral envelopes within reach of the optimizer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioSignal;
use crate::cepstral::CepstralProcessor;
use crate::cnn::{mse, mse_grad, Adam, CnnConfig, CnnModel, Gradients};
use crate::error::Error;
use crate::framing::{analyze, FrameworkStructure, StructureId};

/// Which representation the network is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Time,
    Cepstral,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Time => "time",
            Domain::Cepstral => "cepstral",
        }
    }
}

/// RMS leveling target for training pairs: -26 dB below full scale.
pub fn level_rms() -> f64 {
    10f64.powf(-26.0 / 20.0)
}

/// Aligned input/target frame pairs plus the normalization statistics
/// computed over the inputs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub domain: Domain,
    pub structure: StructureId,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Frame vector length, the network input length this set trains.
    pub fn frame_len(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

/// Per-element mean and standard deviation over a frame list. Deviations
/// are floored to stay positive for constant elements.
pub fn compute_norm_stats(inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len();
    let len = inputs.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; len];
    for v in inputs {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; len];
    for v in inputs {
        for ((s, &m), &x) in var.iter_mut().zip(&mean).zip(v) {
            let d = x - m;
            *s += d * d;
        }
    }
    let std = var
        .iter()
        .map(|&s| (s / n as f64).sqrt().max(1e-12))
        .collect();
    (mean, std)
}

fn normalize(v: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(mean.iter().zip(std))
        .map(|(&x, (&m, &s))| (x - m) / s)
        .collect()
}

/// Active-frame test on the structure's own grid: frame l is active iff
/// the mean square of the clean samples under its analysis window exceeds
/// threshold times the file mean square. Virtual zeros outside the file
/// count toward the window mean, matching the framer's zero padding.
fn frame_activity(clean: &[f64], s: &FrameworkStructure, bw: crate::audio::Bandwidth, threshold: f64) -> Vec<bool> {
    let wl = s.window_len(bw);
    let hop = s.shift(bw);
    let pad = s.lead_pad(bw);
    let n = clean.len();
    let num_frames = n.div_ceil(hop);
    let file_ms = clean.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64;
    (0..num_frames)
        .map(|l| {
            if file_ms == 0.0 {
                return false;
            }
            let mut acc = 0.0;
            for i in 0..wl {
                let padded = l * hop + i;
                if padded >= pad {
                    if let Some(&x) = clean.get(padded - pad) {
                        acc += x * x;
                    }
                }
            }
            acc / wl as f64 / file_ms > threshold
        })
        .collect()
}

/// Build a training set from aligned (clean, coded) signal pairs.
///
/// Each pair is RMS-leveled to -26 dB below full scale with one gain
/// derived from the clean file and applied to both signals, keeping the
/// pair consistent. Voice activity is judged on the clean signal per
/// frame; only active frames contribute. Inputs come from the coded
/// signal, targets from the clean one, both through the same transform:
/// the raw processing frame for the time domain, the cepstral envelope
/// for the cepstral domain.
pub fn prepare_dataset(
    pairs: &[(AudioSignal, AudioSignal)],
    structure: StructureId,
    domain: Domain,
    vad_threshold: f64,
) -> Result<Dataset, Error> {
    match (domain, structure) {
        (Domain::Time, StructureId::Time) => {}
        (Domain::Time, _) => {
            return Err(Error::bad_config(
                "time-domain training uses the time framer, not a framework structure",
            ));
        }
        (Domain::Cepstral, StructureId::Time) => {
            return Err(Error::bad_config(
                "cepstral-domain training needs a framework structure, not the time framer",
            ));
        }
        (Domain::Cepstral, _) => {}
    }

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut processor: Option<CepstralProcessor> = None;

    for (clean, coded) in pairs {
        if clean.sample_rate != coded.sample_rate {
            return Err(Error::bad_input(format!(
                "pair rate mismatch: clean {} Hz, coded {} Hz",
                clean.sample_rate, coded.sample_rate
            )));
        }
        if clean.len() != coded.len() {
            return Err(Error::bad_input(format!(
                "pair length mismatch: clean {} samples, coded {}",
                clean.len(),
                coded.len()
            )));
        }
        if clean.is_empty() {
            continue;
        }
        let bw = clean.bandwidth()?;
        if domain == Domain::Cepstral && processor.is_none() {
            processor = Some(CepstralProcessor::for_structure(structure, bw)?);
        }

        let rms = (clean.samples.iter().map(|x| x * x).sum::<f64>() / clean.len() as f64).sqrt();
        let gain = if rms > 0.0 { level_rms() / rms } else { 1.0 };
        let scale = |sig: &AudioSignal| AudioSignal {
            samples: sig.samples.iter().map(|&x| x * gain).collect(),
            sample_rate: sig.sample_rate,
        };
        let clean_lv = scale(clean);
        let coded_lv = scale(coded);

        let s = FrameworkStructure::get(structure);
        let active = frame_activity(&clean_lv.samples, &s, bw, vad_threshold);
        let clean_frames = analyze(&clean_lv, structure)?;
        let coded_frames = analyze(&coded_lv, structure)?;

        for (l, is_active) in active.iter().enumerate() {
            if !is_active {
                continue;
            }
            match domain {
                Domain::Time => {
                    inputs.push(coded_frames.frames[l].clone());
                    targets.push(clean_frames.frames[l].clone());
                }
                Domain::Cepstral => {
                    let p = processor.as_ref().unwrap();
                    inputs.push(p.analyze(&coded_frames.frames[l]).envelope);
                    targets.push(p.analyze(&clean_frames.frames[l]).envelope);
                }
            }
        }
    }

    if inputs.is_empty() {
        return Err(Error::bad_input(
            "no active speech frames in the dataset (silence or empty input)",
        ));
    }
    let (norm_mean, norm_std) = compute_norm_stats(&inputs);
    Ok(Dataset {
        inputs,
        targets,
        domain,
        structure,
        norm_mean,
        norm_std,
    })
}

/// Optimization schedule. Defaults follow the training recipe: Adam at
/// 5e-4 on minibatches of 16, learning rate halved after 2 stagnant
/// validation epochs, stop after 16 stagnant epochs or 100 total.
#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub lr0: f64,
    pub minibatch: usize,
    pub halve_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            lr0: 5e-4,
            minibatch: 16,
            halve_patience: 2,
            stop_patience: 16,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    fn validate(&self) -> Result<(), Error> {
        if self.lr0 <= 0.0 || !self.lr0.is_finite() {
            return Err(Error::bad_config("learning rate must be positive"));
        }
        if self.minibatch == 0 || self.halve_patience == 0 || self.stop_patience == 0 || self.max_epochs == 0 {
            return Err(Error::bad_config("schedule counts must be positive"));
        }
        Ok(())
    }
}

/// One epoch of the training log.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Learning rate in effect during this epoch's updates.
    pub lr: f64,
    pub updates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_mse, e.val_mse, e.lr));
        }
        out
    }
}

/// Mean loss of a model over a dataset, in the normalized target domain
/// the model was trained in (targets scaled by the model's statistics).
pub fn evaluate_mse(model: &CnnModel, set: &Dataset) -> Result<f64, Error> {
    if set.is_empty() {
        return Err(Error::bad_config("cannot evaluate on an empty dataset"));
    }
    if set.frame_len() != model.config.input_len {
        return Err(Error::bad_config(format!(
            "dataset frames of length {} do not fit a model with input length {}",
            set.frame_len(),
            model.config.input_len
        )));
    }
    let mut acc = 0.0;
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        let out = model.forward(x);
        let tn = normalize(t, &model.norm_mean, &model.norm_std);
        acc += mse(&out, &tn);
    }
    Ok(acc / set.len() as f64)
}

/// Train a freshly initialized model on `train_set`, validating against
/// `val_set` each epoch. Returns the checkpoint with the lowest
/// validation MSE and the per-epoch log.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    config: &CnnConfig,
    sched: &TrainSchedule,
) -> Result<(CnnModel, TrainLog), Error> {
    if val_set.is_empty() {
        return Err(Error::bad_config("validation set is empty"));
    }
    if val_set.frame_len() != config.input_len {
        return Err(Error::bad_config(format!(
            "validation frames of length {} do not fit input length {}",
            val_set.frame_len(),
            config.input_len
        )));
    }
    let val_targets: Vec<Vec<f64>> = val_set
        .targets
        .iter()
        .map(|t| normalize(t, &train_set.norm_mean, &train_set.norm_std))
        .collect();
    train_impl(train_set, config, sched, |model| {
        let mut acc = 0.0;
        for (x, t) in val_set.inputs.iter().zip(&val_targets) {
            acc += mse(&model.forward(x), t);
        }
        acc / val_set.len() as f64
    })
}

/// Core loop with an injectable validation evaluator, so schedule
/// mechanics are testable against scripted loss sequences.
fn train_impl(
    train_set: &Dataset,
    config: &CnnConfig,
    sched: &TrainSchedule,
    mut evaluate: impl FnMut(&CnnModel) -> f64,
) -> Result<(CnnModel, TrainLog), Error> {
    sched.validate()?;
    if train_set.is_empty() {
        return Err(Error::bad_config("training set is empty"));
    }
    if train_set.frame_len() != config.input_len {
        return Err(Error::bad_config(format!(
            "training frames of length {} do not fit input length {}",
            train_set.frame_len(),
            config.input_len
        )));
    }
    let n = train_set.len();
    let mb = sched.minibatch;
    let updates_per_epoch = n / mb;
    if updates_per_epoch == 0 {
        return Err(Error::bad_config(format!(
            "training set of {n} frames is smaller than one minibatch of {mb}"
        )));
    }

    let mut model = CnnModel::init(*config, sched.seed);
    model.norm_mean = train_set.norm_mean.clone();
    model.norm_std = train_set.norm_std.clone();
    let targets: Vec<Vec<f64>> = train_set
        .targets
        .iter()
        .map(|t| normalize(t, &model.norm_mean, &model.norm_std))
        .collect();

    // separate stream from the weight init so adding epochs never
    // perturbs the initialization
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sched.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut lr = sched.lr0;
    let mut order: Vec<usize> = (0..n).collect();

    let mut log = TrainLog::default();
    let mut best: Option<(f64, CnnModel)> = None;
    let mut stagnant = 0usize;
    let mut stagnant_lr = 0usize;

    for epoch in 1..=sched.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_acc = 0.0;
        for b in 0..updates_per_epoch {
            grads.reset();
            for &s in &order[b * mb..(b + 1) * mb] {
                let trace = model.forward_trace(&train_set.inputs[s]);
                let out = trace.output();
                loss_acc += mse(out, &targets[s]);
                let dout = mse_grad(out, &targets[s]);
                model.backward(&trace, &dout, &mut grads);
            }
            grads.scale(1.0 / mb as f64);
            adam.step(&mut model, &grads, lr);
        }
        let train_mse = loss_acc / (updates_per_epoch * mb) as f64;
        let val_mse = evaluate(&model);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::bad_model(format!(
                "training diverged at epoch {epoch}: train mse {train_mse}, val mse {val_mse}"
            )));
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            lr,
            updates: updates_per_epoch,
        });

        // strictly lower counts as improvement; ties keep the earlier model
        let improved = best.as_ref().is_none_or(|(b, _)| val_mse < *b);
        if improved {
            best = Some((val_mse, model.clone()));
            stagnant = 0;
            stagnant_lr = 0;
        } else {
            stagnant += 1;
            stagnant_lr += 1;
        }
        if stagnant >= sched.stop_patience {
            break;
        }
        if stagnant_lr >= sched.halve_patience {
            lr *= 0.5;
            stagnant_lr = 0;
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, log))
}
