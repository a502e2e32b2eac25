//! Bit-exact G.711 A-law / mu-law companding.
//!
//! Samples are normalized floats (1.0 = 32768). Internally the encoder
//! works on the 16-bit fixed-point grid: A-law quantizes the top 13 bits,
//! mu-law the top 14, exactly like the reference companders, so codewords
//! agree byte-for-byte with the standard tables.
//!
//! On top of encode/decode this module exposes the per-codeword
//! quantization interval [low, high) and the interval-constraint operator
//! used by enhancement postprocessors: a processed sample that left the
//! interval of its source codeword is pulled back to the nearest decision
//! boundary, which bounds the error a postprocessor can introduce.

use std::sync::OnceLock;

pub const LSB: f64 = 1.0 / 32768.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    ALaw,
    MuLaw,
}

impl Law {
    pub fn name(self) -> &'static str {
        match self {
            Law::ALaw => "a-law",
            Law::MuLaw => "mu-law",
        }
    }
}

impl std::str::FromStr for Law {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "alaw" | "a-law" => Ok(Law::ALaw),
            "u" | "mu" | "ulaw" | "mulaw" | "mu-law" | "u-law" => Ok(Law::MuLaw),
            other => Err(format!("unknown law '{other}' (use a-law or mu-law)")),
        }
    }
}

/// Encode one 16-bit sample. `x` must be in -32768..=32767.
fn encode_i32(x: i32, law: Law) -> u8 {
    debug_assert!((-32768..=32767).contains(&x));
    match law {
        Law::ALaw => {
            // 1's complement folds negatives onto 0..2047 half-step units
            let mut ix = if x < 0 { (!x) >> 4 } else { x >> 4 };
            if ix > 15 {
                let mut iexp = 1;
                while ix > 16 + 15 {
                    ix >>= 1;
                    iexp += 1;
                }
                ix -= 16;
                ix += iexp << 4;
            }
            if x >= 0 {
                ix |= 0x80;
            }
            (ix ^ 0x55) as u8
        }
        Law::MuLaw => {
            let mag = if x < 0 { (!x) >> 2 } else { x >> 2 };
            let absno = (mag + 33).min(8191);
            let mut seg = 1;
            let mut i = absno >> 6;
            while i != 0 {
                seg += 1;
                i >>= 1;
            }
            let high = 8 - seg; // 0..=7
            let low = 15 - ((absno >> seg) & 0xF);
            let mut cw = (high << 4) | low;
            if x >= 0 {
                cw |= 0x80;
            }
            cw as u8
        }
    }
}

/// Encode one normalized sample. Values outside [-1, 1) hit the overload
/// region and map to the outermost codeword of their sign.
pub fn encode_sample(s: f64, law: Law) -> u8 {
    let v = (s * 32768.0).floor();
    let mut x = v.clamp(-32768.0, 32767.0) as i32;
    if x == 0 && s.is_sign_negative() {
        // mu-law keeps a distinct "negative zero" codeword; an exact -0.0
        // belongs on the negative side so decode/encode stays an identity
        x = -1;
    }
    encode_i32(x, law)
}

/// Decode one codeword to the standard reconstruction level.
pub fn decode_sample(cw: u8, law: Law) -> f64 {
    let (positive, level) = match law {
        Law::ALaw => {
            let ix = (cw ^ 0x55) as i32;
            let positive = ix > 127;
            let mut m = ix & 0x7F;
            let iexp = m >> 4;
            m &= 0x0F;
            if iexp > 0 {
                m += 16;
            }
            m = (m << 4) + 8;
            if iexp > 1 {
                m <<= iexp - 1;
            }
            (positive, m)
        }
        Law::MuLaw => {
            let positive = cw >= 0x80;
            let m = !(cw as i32) & 0xFF;
            let exp = (m >> 4) & 0x7;
            let mant = m & 0xF;
            let step = 4 << (exp + 1);
            (positive, (0x80 << exp) + step * mant + step / 2 - 132)
        }
    };
    let mag = level as f64 / 32768.0;
    // negating the float keeps mu-law's negative zero distinct (-0.0)
    if positive {
        mag
    } else {
        -mag
    }
}

pub fn encode_signal(samples: &[f64], law: Law) -> Vec<u8> {
    samples.iter().map(|&s| encode_sample(s, law)).collect()
}

pub fn decode_signal(codewords: &[u8], law: Law) -> Vec<f64> {
    codewords.iter().map(|&c| decode_sample(c, law)).collect()
}

/// Quantization intervals of all 256 codewords, normalized: sample `s`
/// encodes to codeword `c` exactly when `low(c) <= s < high(c)`.
pub struct QuantTable {
    intervals: [(f64, f64); 256],
}

impl QuantTable {
    fn build(law: Law) -> QuantTable {
        let mut lo = [i32::MAX; 256];
        let mut hi = [i32::MIN; 256];
        for x in -32768..=32767i32 {
            let c = encode_i32(x, law) as usize;
            lo[c] = lo[c].min(x);
            hi[c] = hi[c].max(x);
        }
        let mut intervals = [(0.0, 0.0); 256];
        for c in 0..256 {
            debug_assert!(lo[c] <= hi[c], "codeword {c:#04x} never produced");
            // the fixed-point cell [x, x+1) owns the real values above x
            intervals[c] = (lo[c] as f64 / 32768.0, (hi[c] + 1) as f64 / 32768.0);
        }
        QuantTable { intervals }
    }

    pub fn get(law: Law) -> &'static QuantTable {
        static A: OnceLock<QuantTable> = OnceLock::new();
        static MU: OnceLock<QuantTable> = OnceLock::new();
        match law {
            Law::ALaw => A.get_or_init(|| QuantTable::build(Law::ALaw)),
            Law::MuLaw => MU.get_or_init(|| QuantTable::build(Law::MuLaw)),
        }
    }

    pub fn interval(&self, cw: u8) -> (f64, f64) {
        self.intervals[cw as usize]
    }
}

/// Quantization interval [low, high) of a codeword, normalized.
pub fn quant_interval(cw: u8, law: Law) -> (f64, f64) {
    QuantTable::get(law).interval(cw)
}

/// Pull every sample back into the quantization interval of its codeword.
///
/// A sample below the interval lands on the lower decision boundary; one at
/// or above the upper boundary lands one 16-bit LSB inside it, the largest
/// representable value still owned by the codeword. Samples already inside
/// are untouched, so the operator is idempotent.
pub fn constrain(samples: &mut [f64], codewords: &[u8], law: Law) {
    assert_eq!(
        samples.len(),
        codewords.len(),
        "constrain needs one codeword per sample"
    );
    let table = QuantTable::get(law);
    for (s, &cw) in samples.iter_mut().zip(codewords) {
        let (lo, hi) = table.interval(cw);
        if *s < lo {
            *s = lo;
        } else if *s >= hi {
            *s = hi - LSB;
        }
    }
}
