//! Exhaustive check of the companders against an independently constructed
//! segment-table reference (see tests/common). Every 16-bit input and every
//! codeword must agree between the two implementations.

mod common;

use cepnet_core::g711::{decode_sample, encode_sample, quant_interval, Law};
use common::{ref_alaw_encode, ref_alaw_level, ref_mulaw_encode, ref_mulaw_level};
use proptest::prelude::*;

#[test]
fn alaw_encode_matches_reference_for_every_i16() {
    for x in -32768..=32767i32 {
        let got = encode_sample(x as f64 / 32768.0, Law::ALaw);
        let want = ref_alaw_encode(x);
        assert_eq!(got, want, "A-law mismatch at {x}");
    }
}

#[test]
fn mulaw_encode_matches_reference_for_every_i16() {
    for x in -32768..=32767i32 {
        let got = encode_sample(x as f64 / 32768.0, Law::MuLaw);
        let want = ref_mulaw_encode(x);
        assert_eq!(got, want, "mu-law mismatch at {x}");
    }
}

#[test]
fn decode_levels_match_reference_for_every_codeword() {
    for c in 0..=255u8 {
        assert_eq!(decode_sample(c, Law::ALaw), ref_alaw_level(c), "A-law {c:#04x}");
        assert_eq!(decode_sample(c, Law::MuLaw), ref_mulaw_level(c), "mu-law {c:#04x}");
    }
}

#[test]
fn known_extreme_levels() {
    // outermost A-law magnitude: segment 7, mantissa 15 -> 4032 in 13-bit
    assert_eq!(decode_sample(encode_sample(0.9999, Law::ALaw), Law::ALaw), 32256.0 / 32768.0);
    // outermost mu-law magnitude: 8031 in 14-bit -> 32124 in 16-bit
    assert_eq!(decode_sample(encode_sample(0.9999, Law::MuLaw), Law::MuLaw), 32124.0 / 32768.0);
}

#[test]
fn every_i16_lies_in_the_interval_of_its_codeword() {
    for law in [Law::ALaw, Law::MuLaw] {
        for x in -32768..=32767i32 {
            let s = x as f64 / 32768.0;
            let (lo, hi) = quant_interval(encode_sample(s, law), law);
            assert!(lo <= s && s < hi, "{}: {x} outside [{lo},{hi})", law.name());
        }
    }
}

proptest! {
    // companding must be monotone: the decoded level never decreases as the
    // input grows
    #[test]
    fn requantized_level_is_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for law in [Law::ALaw, Law::MuLaw] {
            let la = decode_sample(encode_sample(lo, law), law);
            let lb = decode_sample(encode_sample(hi, law), law);
            prop_assert!(la <= lb, "{}: {lo} -> {la}, {hi} -> {lb}", law.name());
        }
    }
}
