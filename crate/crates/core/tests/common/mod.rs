//! Independent companding reference shared by integration tests.
//!
//! The library implements encode/decode with the classic shift-loop
//! algorithms. This module rebuilds the same mapping a different way:
//! explicit segment boundary tables, mantissa extraction by table lookup
//! and division, and reconstruction levels as closed-form interval
//! midpoints.

/// Reference A-law encoder. Works in half-step units (16-bit >> 4), where
/// the eight segments are [0,16), [16,32), [32,64), ... [1024,2048) with
/// code widths 1, 1, 2, 4, ... 64.
pub fn ref_alaw_encode(x: i32) -> u8 {
    const SEG: [i32; 9] = [0, 16, 32, 64, 128, 256, 512, 1024, 2048];
    let ix = if x >= 0 { x >> 4 } else { (-x - 1) >> 4 };
    let s = (0..8).find(|&s| ix < SEG[s + 1]).unwrap();
    let width = if s <= 1 { 1 } else { 1 << (s - 1) };
    let mant = (ix - SEG[s]) / width;
    let mut code = ((s as i32) << 4) | mant;
    if x >= 0 {
        code |= 0x80;
    }
    (code ^ 0x55) as u8
}

/// Reference A-law level: the midpoint of the code's cell, in 16-bit units.
pub fn ref_alaw_level(code: u8) -> f64 {
    const SEG: [i32; 9] = [0, 16, 32, 64, 128, 256, 512, 1024, 2048];
    let ix = (code ^ 0x55) as i32;
    let positive = ix & 0x80 != 0;
    let s = ((ix >> 4) & 0x7) as usize;
    let mant = ix & 0xF;
    let width = if s <= 1 { 1 } else { 1 << (s - 1) };
    let level = 16 * SEG[s] + 16 * width * mant + 8 * width;
    let v = level as f64 / 32768.0;
    if positive {
        v
    } else {
        -v
    }
}

/// Reference mu-law encoder on the biased 14-bit magnitude, with the
/// segment found by scanning the upper-end table.
pub fn ref_mulaw_encode(x: i32) -> u8 {
    const SEG_END: [i32; 8] = [63, 127, 255, 511, 1023, 2047, 4095, 8191];
    let mag = if x >= 0 { x >> 2 } else { (-x - 1) >> 2 };
    let biased = (mag + 33).min(8191);
    let s = (0..8).find(|&s| biased <= SEG_END[s]).unwrap();
    let mant = (biased >> (s + 1)) & 0xF;
    let mut code = ((7 - s as i32) << 4) | (15 - mant);
    if x >= 0 {
        code |= 0x80;
    }
    code as u8
}

/// Reference mu-law level: midpoint of the biased cell, unbiased, with the
/// two zero codewords mapping to +-0.
pub fn ref_mulaw_level(code: u8) -> f64 {
    let positive = code & 0x80 != 0;
    let s = (7 - ((code >> 4) & 0x7)) as i32;
    let mant = (15 - (code & 0xF)) as i32;
    // biased cell [2^(s+5) + mant*2^(s+1), +2^(s+1)), midpoint minus bias,
    // then back to 16-bit units (x4)
    let level = (1 << (s + 7)) + mant * (1 << (s + 3)) + (1 << (s + 2)) - 132;
    let v = level as f64 / 32768.0;
    if positive {
        v
    } else {
        -v
    }
}
