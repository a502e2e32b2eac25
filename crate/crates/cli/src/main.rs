//! Batch command line for the toolkit: codec runs, baseline
//! postfiltering, network training, enhancement and evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error
//! (unreadable or mismatched inputs), 4 model error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cepnet_core::audio::{read_wav, write_wav, AudioSignal};
use cepnet_core::cepstral::CepstralConfig;
use cepnet_core::cnn::{CnnConfig, CnnModel};
use cepnet_core::framing::{FrameworkStructure, StructureId};
use cepnet_core::g711::{decode_signal, encode_signal, Law};
use cepnet_core::pipeline::{self, EnhanceMode, EnhanceOptions};
use cepnet_core::postfilter::{self, PostfilterConfig};
use cepnet_core::trainer::{self, Domain, TrainSchedule};
use cepnet_core::{metrics, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cepnet", version, about = "Coded speech enhancement toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enhance a decoded WAV file
    Enhance(EnhanceArgs),
    /// Train an enhancement network on paired clean/coded WAV directories
    Train(TrainArgs),
    /// Score a processed WAV against its clean reference
    Eval(EvalArgs),
    /// Encode a WAV into raw 8-bit codewords
    G711Encode(EncodeArgs),
    /// Decode raw 8-bit codewords into a WAV
    G711Decode(DecodeArgs),
    /// Run the two-stage Wiener baseline postfilter
    Postfilter(PostfilterArgs),
    /// Encode+decode every clean WAV in a directory into coded pairs
    MakePairs(MakePairsArgs),
    /// Print a model file's configuration and complexity
    Info(InfoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Alaw,
    Ulaw,
}

impl From<LawArg> for Law {
    fn from(v: LawArg) -> Law {
        match v {
            LawArg::Alaw => Law::ALaw,
            LawArg::Ulaw => Law::MuLaw,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StructureArg {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl From<StructureArg> for StructureId {
    fn from(v: StructureArg) -> StructureId {
        match v {
            StructureArg::S1 => StructureId::S1,
            StructureArg::S2 => StructureId::S2,
            StructureArg::S3 => StructureId::S3,
            StructureArg::S4 => StructureId::S4,
            StructureArg::S5 => StructureId::S5,
            StructureArg::S6 => StructureId::S6,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Time,
    Cepstral,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    CnnTime,
    CnnCepstral,
    Postfilter,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MetricArg {
    Lsd,
    SsdrSeg,
    Ssdr,
    All,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Decoded input WAV
    #[arg(long)]
    input: PathBuf,
    /// Enhanced output WAV
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Framework structure (cepstral mode)
    #[arg(long, value_enum, default_value = "s3")]
    structure: StructureArg,
    /// Model file (network modes)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Codec law for the noise model and the constraint
    #[arg(long, value_enum, default_value = "alaw")]
    law: LawArg,
    /// Clamp samples into the transmitted quantization intervals
    #[arg(long)]
    constrain: bool,
    /// Push down the energy coefficient of quiet cepstral frames
    #[arg(long = "c0-floor")]
    c0_floor: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "clean-dir")]
    clean_dir: PathBuf,
    #[arg(long = "coded-dir")]
    coded_dir: PathBuf,
    #[arg(long, value_enum, default_value = "s3")]
    structure: StructureArg,
    #[arg(long, value_enum, default_value = "cepstral")]
    domain: DomainArg,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-epochs", default_value_t = 100)]
    max_epochs: usize,
    /// Kernel length (default: scale rule 3L/16)
    #[arg(long)]
    kernel: Option<usize>,
    /// Feature maps (default: scale rule 11L/16)
    #[arg(long)]
    features: Option<usize>,
    /// Voice activity threshold for frame selection
    #[arg(long = "vad-threshold", default_value_t = metrics::VAD_THRESHOLD)]
    vad_threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Clean reference WAV
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Processed WAV
    #[arg(long = "deg")]
    degraded: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    metric: MetricArg,
    /// Print the report as JSON
    #[arg(long)]
    json: bool,
    #[arg(long = "vad-threshold", default_value_t = metrics::VAD_THRESHOLD)]
    vad_threshold: f64,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, value_enum, default_value = "alaw")]
    law: LawArg,
    /// Input WAV (8 kHz)
    input: PathBuf,
    /// Output codeword file, one byte per sample
    output: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, value_enum, default_value = "alaw")]
    law: LawArg,
    /// Sample rate of the decoded WAV
    #[arg(long, default_value_t = 8000)]
    rate: u32,
    /// Input codeword file, one byte per sample
    input: PathBuf,
    /// Output WAV
    output: PathBuf,
}

#[derive(Args)]
struct PostfilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "alaw")]
    law: LawArg,
    /// Decision-directed smoothing weight
    #[arg(long)]
    beta: Option<f64>,
    /// Wiener gain floor in dB
    #[arg(long = "gmin-db")]
    gmin_db: Option<f64>,
    /// Clamp samples into the transmitted quantization intervals
    #[arg(long)]
    constrain: bool,
}

#[derive(Args)]
struct MakePairsArgs {
    #[arg(long = "clean-dir")]
    clean_dir: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "alaw")]
    law: LawArg,
}

#[derive(Args)]
struct InfoArgs {
    /// Model file
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::BadConfig(_) => 2,
                Error::Io(_) | Error::BadInput(_) => 3,
                Error::BadModel(_) => 4,
            })
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Enhance(a) => cmd_enhance(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::G711Encode(a) => cmd_encode(a),
        Cmd::G711Decode(a) => cmd_decode(a),
        Cmd::Postfilter(a) => cmd_postfilter(a),
        Cmd::MakePairs(a) => cmd_make_pairs(a),
        Cmd::Info(a) => cmd_info(a),
    }
}

fn cmd_enhance(a: EnhanceArgs) -> Result<(), Error> {
    let input = read_wav(&a.input)?;
    let model = match &a.model {
        Some(p) => Some(CnnModel::load(p)?),
        None => None,
    };
    let mode = match a.mode {
        ModeArg::CnnTime => EnhanceMode::CnnTime,
        ModeArg::CnnCepstral => EnhanceMode::CnnCepstral,
        ModeArg::Postfilter => EnhanceMode::BaselinePostfilter,
    };
    let structure = match mode {
        EnhanceMode::CnnTime => StructureId::Time,
        _ => a.structure.into(),
    };
    let out = pipeline::enhance(
        &input,
        &EnhanceOptions {
            mode,
            structure,
            model: model.as_ref(),
            law: a.law.into(),
            constrain: a.constrain,
            c0_floor: a.c0_floor,
        },
    )?;
    write_wav(&a.output, &out)
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Deterministic validation split: the last fifth of the file list, or
/// every fifth frame when there are not enough files to hold one out.
fn split_pairs(
    pairs: Vec<(AudioSignal, AudioSignal)>,
    structure: StructureId,
    domain: Domain,
    vad_threshold: f64,
) -> Result<(trainer::Dataset, trainer::Dataset), Error> {
    if pairs.len() >= 2 {
        let n_val = pairs.len().div_ceil(5);
        let (tr, va) = pairs.split_at(pairs.len() - n_val);
        Ok((
            trainer::prepare_dataset(tr, structure, domain, vad_threshold)?,
            trainer::prepare_dataset(va, structure, domain, vad_threshold)?,
        ))
    } else {
        let all = trainer::prepare_dataset(&pairs, structure, domain, vad_threshold)?;
        let mut tr = trainer::Dataset {
            inputs: Vec::new(),
            targets: Vec::new(),
            domain: all.domain,
            structure: all.structure,
            norm_mean: Vec::new(),
            norm_std: Vec::new(),
        };
        let mut va = tr.clone();
        for (i, (x, t)) in all.inputs.into_iter().zip(all.targets).enumerate() {
            let set = if i % 5 == 4 { &mut va } else { &mut tr };
            set.inputs.push(x);
            set.targets.push(t);
        }
        if tr.is_empty() || va.is_empty() {
            return Err(Error::bad_input("too few frames to split off a validation set"));
        }
        let (m, s) = trainer::compute_norm_stats(&tr.inputs);
        tr.norm_mean = m;
        tr.norm_std = s;
        let (m, s) = trainer::compute_norm_stats(&va.inputs);
        va.norm_mean = m;
        va.norm_std = s;
        Ok((tr, va))
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let clean_paths = list_wavs(&a.clean_dir)?;
    if clean_paths.is_empty() {
        return Err(Error::bad_input(format!(
            "no .wav files in {}",
            a.clean_dir.display()
        )));
    }
    let mut pairs = Vec::with_capacity(clean_paths.len());
    for p in &clean_paths {
        let coded_path = a.coded_dir.join(p.file_name().unwrap());
        if !coded_path.exists() {
            return Err(Error::bad_input(format!(
                "no coded counterpart for {}",
                p.display()
            )));
        }
        pairs.push((read_wav(p)?, read_wav(&coded_path)?));
    }
    let bw = pairs[0].0.bandwidth()?;

    let (domain, structure) = match a.domain {
        DomainArg::Time => (Domain::Time, StructureId::Time),
        DomainArg::Cepstral => (Domain::Cepstral, a.structure.into()),
    };
    let input_len = match domain {
        Domain::Time => FrameworkStructure::get(StructureId::Time).processing_len(bw),
        Domain::Cepstral => CepstralConfig::for_structure(structure, bw)?.env_len,
    };
    let config = match (a.kernel, a.features) {
        (None, None) => CnnConfig::scaled(input_len)?,
        (Some(k), Some(f)) => CnnConfig::new(input_len, k, f)?,
        _ => {
            return Err(Error::bad_config(
                "give both --kernel and --features, or neither for the scale rule",
            ));
        }
    };

    let (tr, va) = split_pairs(pairs, structure, domain, a.vad_threshold)?;
    let sched = TrainSchedule {
        seed: a.seed,
        max_epochs: a.max_epochs,
        ..TrainSchedule::default()
    };
    eprintln!(
        "training {} frames, validating {}, input length {}, {} parameters",
        tr.len(),
        va.len(),
        config.input_len,
        config.param_count()
    );
    let (model, log) = trainer::train(&tr, &va, &config, &sched)?;
    model.save(&a.out)?;
    print!("{}", log.to_csv());
    eprintln!("saved {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Error> {
    let reference = read_wav(&a.reference)?;
    let degraded = read_wav(&a.degraded)?;
    let rep = metrics::evaluate_with(&reference, &degraded, a.vad_threshold)?;
    let rows: Vec<(&str, String)> = [
        (MetricArg::Lsd, "lsd_db", format!("{:.6}", rep.lsd)),
        (MetricArg::SsdrSeg, "ssdr_seg_db", format!("{:.6}", rep.ssdr_seg)),
        (MetricArg::Ssdr, "ssdr_db", format!("{:.6}", rep.ssdr_global)),
    ]
    .into_iter()
    .filter(|(m, _, _)| a.metric == MetricArg::All || a.metric == *m)
    .map(|(_, k, v)| (k, v))
    .collect();

    if a.json {
        let mut obj = serde_json::Map::new();
        for (k, v) in &rows {
            let num: f64 = v.parse().unwrap();
            obj.insert((*k).into(), serde_json::json!(num));
        }
        if a.metric == MetricArg::All {
            obj.insert("active_frames".into(), serde_json::json!(rep.active_frames));
            obj.insert("total_frames".into(), serde_json::json!(rep.total_frames));
        }
        println!("{}", serde_json::Value::Object(obj));
    } else {
        for (k, v) in &rows {
            println!("{k}={v}");
        }
        if a.metric == MetricArg::All {
            println!("active_frames={}", rep.active_frames);
            println!("total_frames={}", rep.total_frames);
        }
    }
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<(), Error> {
    let input = read_wav(&a.input)?;
    if input.sample_rate != 8000 {
        return Err(Error::bad_input(format!(
            "the codec runs at 8000 Hz, got {} Hz",
            input.sample_rate
        )));
    }
    fs::write(&a.output, encode_signal(&input.samples, a.law.into()))?;
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<(), Error> {
    let bytes = fs::read(&a.input)?;
    let samples = decode_signal(&bytes, a.law.into());
    write_wav(&a.output, &AudioSignal::new(samples, a.rate))
}

fn cmd_postfilter(a: PostfilterArgs) -> Result<(), Error> {
    let input = read_wav(&a.input)?;
    let law: Law = a.law.into();
    let mut cfg = PostfilterConfig::for_rate(input.sample_rate, law)?;
    if let Some(beta) = a.beta {
        cfg.beta = beta;
    }
    if let Some(db) = a.gmin_db {
        cfg.g_min = 10f64.powf(db / 20.0);
    }
    let codewords = encode_signal(&input.samples, law);
    let out = postfilter::apply(&input, &codewords, &cfg, a.constrain)?;
    write_wav(&a.output, &out)
}

fn cmd_make_pairs(a: MakePairsArgs) -> Result<(), Error> {
    let report = pipeline::make_pairs(&a.clean_dir, &a.out_dir, a.law.into())?;
    for (path, reason) in &report.skipped {
        eprintln!("warning: skipping {}: {}", path.display(), reason);
    }
    println!(
        "coded {} files into {}",
        report.written.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_info(a: InfoArgs) -> Result<(), Error> {
    let model = CnnModel::load(&a.model)?;
    let c = &model.config;
    println!("input_len: {}", c.input_len);
    println!("kernel_len: {}", c.kernel_len);
    println!("feature_maps: {}", c.feature_maps);
    println!("leaky_slope: {}", c.leaky_slope);
    println!("params: {}", c.param_count());
    println!("macs_per_frame: {}", c.macs_per_frame());
    Ok(())
}
