//! Mono 16-bit PCM WAV input/output.
//!
//! Samples live in memory as `f64` normalized by 1/32768, so the value
//! range of legal 16-bit audio is [-1.0, 1.0). Only 8 kHz and 16 kHz files
//! are accepted; everything in this crate is mono.

use crate::error::Error;
use std::fs;
use std::path::Path;

pub const NB_RATE: u32 = 8000;
pub const WB_RATE: u32 = 16000;

/// Operating bandwidth, tied one-to-one to the sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bandwidth {
    Narrowband,
    Wideband,
}

impl Bandwidth {
    pub fn from_rate(rate: u32) -> Result<Self, Error> {
        match rate {
            NB_RATE => Ok(Bandwidth::Narrowband),
            WB_RATE => Ok(Bandwidth::Wideband),
            other => Err(Error::bad_input(format!(
                "unsupported sample rate {other} Hz (need 8000 or 16000)"
            ))),
        }
    }

    pub fn rate(self) -> u32 {
        match self {
            Bandwidth::Narrowband => NB_RATE,
            Bandwidth::Wideband => WB_RATE,
        }
    }

    /// Samples per millisecond at this rate.
    pub fn samples_per_ms(self) -> usize {
        (self.rate() / 1000) as usize
    }
}

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioSignal {
            samples,
            sample_rate,
        }
    }

    pub fn bandwidth(&self) -> Result<Bandwidth, Error> {
        Bandwidth::from_rate(self.sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn read_u16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_le_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

fn read_u32(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes([
        *b.get(at)?,
        *b.get(at + 1)?,
        *b.get(at + 2)?,
        *b.get(at + 3)?,
    ]))
}

/// Read a mono 16-bit PCM WAV file at 8 or 16 kHz.
pub fn read_wav(path: &Path) -> Result<AudioSignal, Error> {
    let bytes = fs::read(path)?;
    parse_wav(&bytes).map_err(|msg| Error::bad_input(format!("{}: {msg}", path.display())))
}

fn parse_wav(bytes: &[u8]) -> Result<AudioSignal, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // tag, channels, rate, bits
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4).ok_or("truncated chunk header")? as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).ok_or("chunk size overflow")?;
        if body_end > bytes.len() {
            return Err("truncated chunk body".into());
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err("fmt chunk too short".into());
                }
                fmt = Some((
                    read_u16(body, 0).unwrap(),
                    read_u16(body, 2).unwrap(),
                    read_u32(body, 4).unwrap(),
                    read_u16(body, 14).unwrap(),
                ));
            }
            b"data" => {
                data = Some(body);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (tag, channels, rate, bits) = fmt.ok_or("missing fmt chunk")?;
    if tag != 1 {
        return Err(format!("unsupported WAV format tag {tag} (need PCM)"));
    }
    if channels != 1 {
        return Err(format!("need mono input, file has {channels} channels"));
    }
    if bits != 16 {
        return Err(format!("need 16-bit samples, file has {bits}"));
    }
    Bandwidth::from_rate(rate).map_err(|e| e.to_string())?;

    let data = data.ok_or("missing data chunk")?;
    if data.len() % 2 != 0 {
        return Err("data chunk has an odd byte count".into());
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioSignal::new(samples, rate))
}

/// Quantize a normalized sample to int16: round half away from zero, clamp.
pub fn sample_to_i16(s: f64) -> i16 {
    let v = (s * 32768.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Write a mono 16-bit PCM WAV file.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<(), Error> {
    Bandwidth::from_rate(signal.sample_rate)?;
    let n = signal.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &signal.samples {
        out.extend_from_slice(&sample_to_i16(s).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}
