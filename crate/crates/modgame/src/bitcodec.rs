//! Variable-length prefix code for integers, fixed-width refinement words,
//! and bit-string plumbing with exact length accounting.
//!
//! The integer code `g` maps 0 to "0"; a positive x to "1", then k zeros,
//! then the k-bit binary of x; a negative x to "11", then k-1 zeros, then the
//! k-bit binary of -x. It is prefix-free and its length is at most
//! 2*log2(|x|+1) + 3 bits.

use crate::error::{Error, Result};
use std::fmt;

/// An ordered sequence of bits. Concatenation is associative and
/// `len(a || b) == len(a) + len(b)`; cost accounting is always `len()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        BitString { bits: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn bit(&self, i: usize) -> Option<bool> {
        self.bits.get(i).copied()
    }

    /// Appends `other` onto the end of `self`.
    pub fn extend(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn concat(mut self, other: &BitString) -> BitString {
        self.extend(other);
        self
    }

    /// ASCII '0'/'1' rendering, the external text form used by the framed
    /// transcript format and golden tests.
    pub fn to_ascii(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    pub fn from_ascii(s: &str) -> Result<BitString> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(Error::Parse(format!("invalid bit character {c:?}"))),
            }
        }
        Ok(BitString { bits })
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ascii())
    }
}

/// Cursor over a `BitString` for sequential decoding.
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn next_bit(&mut self) -> Result<bool> {
        match self.bits.bit(self.pos) {
            Some(b) => {
                self.pos += 1;
                Ok(b)
            }
            None => Err(Error::MalformedCode(
                "stream exhausted mid code word".into(),
            )),
        }
    }
}

fn bit_length(x: u64) -> u32 {
    debug_assert!(x >= 1);
    64 - x.leading_zeros()
}

/// Encodes an integer with the localization prefix code.
pub fn encode_g(x: i64) -> BitString {
    let mut out = BitString::new();
    if x == 0 {
        out.push(false);
        return out;
    }
    let mag = x.unsigned_abs();
    let k = bit_length(mag);
    out.push(true);
    if x > 0 {
        // "1", k zeros, binary(x)
        for _ in 0..k {
            out.push(false);
        }
    } else {
        // "11", k-1 zeros, binary(-x)
        out.push(true);
        for _ in 0..k - 1 {
            out.push(false);
        }
    }
    for i in (0..k).rev() {
        out.push(mag >> i & 1 == 1);
    }
    out
}

/// Decodes one `g` code word from the front of the reader, returning the
/// integer. The reader is left positioned after the code word.
pub fn decode_g_from(reader: &mut BitReader<'_>) -> Result<i64> {
    if !reader.next_bit()? {
        return Ok(0);
    }
    // After the leading '1', an immediate second '1' marks a negative code;
    // otherwise the zero run has length k and the terminating '1' is the
    // most significant bit of binary(x).
    let mut zeros: u32 = 0;
    let negative = loop {
        if reader.next_bit()? {
            break zeros == 0;
        }
        zeros += 1;
        if zeros > 64 {
            return Err(Error::MalformedCode("zero run exceeds 64 bits".into()));
        }
    };
    let (k, mut mag): (u32, u64) = if negative {
        // saw "11"; count k-1 zeros then read k bits starting at the next '1'
        let mut z: u32 = 0;
        loop {
            if reader.next_bit()? {
                break;
            }
            z += 1;
            if z > 64 {
                return Err(Error::MalformedCode("zero run exceeds 64 bits".into()));
            }
        }
        (z + 1, 1)
    } else {
        // saw "1", `zeros` zeros, then the '1' that opens binary(x)
        (zeros, 1)
    };
    if k > 63 {
        return Err(Error::MalformedCode(format!(
            "magnitude of {k} bits overflows i64"
        )));
    }
    for _ in 1..k {
        mag = mag << 1 | reader.next_bit()? as u64;
    }
    Ok(if negative { -(mag as i64) } else { mag as i64 })
}

/// Decodes the unique `g` code word prefixing `stream`, returning the integer
/// and the number of bits consumed.
pub fn decode_g(stream: &BitString) -> Result<(i64, usize)> {
    let mut reader = stream.reader();
    let x = decode_g_from(&mut reader)?;
    Ok((x, reader.position()))
}

/// Fixed 3-bit big-endian word for a refinement residue in [0, 8).
pub fn encode_fixed3(r: u8) -> Result<BitString> {
    if r >= 8 {
        return Err(Error::OutOfRange(format!("residue {r} not in [0, 8)")));
    }
    let mut out = BitString::new();
    for i in (0..3).rev() {
        out.push(r >> i & 1 == 1);
    }
    Ok(out)
}

/// Reads back a fixed 3-bit word.
pub fn decode_fixed3_from(reader: &mut BitReader<'_>) -> Result<u8> {
    let mut r = 0u8;
    for _ in 0..3 {
        r = r << 1 | reader.next_bit()? as u8;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g_ascii(x: i64) -> String {
        encode_g(x).to_ascii()
    }

    #[test]
    fn worked_codewords() {
        assert_eq!(g_ascii(0), "0");
        assert_eq!(g_ascii(1), "101");
        assert_eq!(g_ascii(8), "100001000");
        assert_eq!(g_ascii(-1), "111");
        assert_eq!(g_ascii(-8), "110001000");
    }

    #[test]
    fn decode_examples() {
        // g(0) followed by arbitrary tail consumes exactly one bit
        let stream = encode_g(0).concat(&BitString::from_ascii("1101").unwrap());
        assert_eq!(decode_g(&stream).unwrap(), (0, 1));

        let stream = BitString::from_ascii("100001000").unwrap();
        assert_eq!(decode_g(&stream).unwrap(), (8, 9));
    }

    #[test]
    fn exhaustive_round_trip_small() {
        for x in -4096i64..=4096 {
            let code = encode_g(x);
            let (y, used) = decode_g(&code).unwrap();
            assert_eq!(y, x);
            assert_eq!(used, code.len());
        }
    }

    #[test]
    fn prefix_free_small() {
        let mut words: Vec<String> = (-4096i64..=4096).map(g_ascii).collect();
        words.sort();
        // after sorting, any prefix pair must be adjacent
        for pair in words.windows(2) {
            assert!(
                !pair[1].starts_with(&pair[0]),
                "{} is a prefix of {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn length_bound() {
        let check = |x: i64| {
            let bound = 2.0 * ((x.unsigned_abs() as f64) + 1.0).log2() + 3.0;
            assert!(
                encode_g(x).len() as f64 <= bound + 1e-9,
                "len(g({x})) = {} exceeds {bound}",
                encode_g(x).len()
            );
        };
        for x in -4096i64..=4096 {
            check(x);
        }
        for &x in &[
            -1_000_000i64,
            -999_999,
            -65536,
            65536,
            999_999,
            1_000_000,
            i64::MAX / 2,
            i64::MIN / 2,
        ] {
            check(x);
        }
    }

    #[test]
    fn round_trip_large_values() {
        for &x in &[
            -1_000_000i64,
            -123_456_789,
            1_000_000,
            987_654_321,
            (1i64) << 52,
            -((1i64) << 52),
        ] {
            let (y, used) = decode_g(&encode_g(x)).unwrap();
            assert_eq!(y, x);
            assert_eq!(used, encode_g(x).len());
        }
    }

    #[test]
    fn truncated_stream_is_malformed() {
        for x in [1i64, 8, -8, 300] {
            let code = encode_g(x);
            for cut in 0..code.len() {
                let mut partial = BitString::new();
                for i in 0..cut {
                    partial.push(code.bit(i).unwrap());
                }
                assert!(
                    matches!(decode_g(&partial), Err(Error::MalformedCode(_))),
                    "truncation of g({x}) at {cut} bits decoded"
                );
            }
        }
    }

    #[test]
    fn fixed3_words() {
        assert_eq!(encode_fixed3(0).unwrap().to_ascii(), "000");
        assert_eq!(encode_fixed3(7).unwrap().to_ascii(), "111");
        assert_eq!(encode_fixed3(4).unwrap().to_ascii(), "100");
        assert!(matches!(encode_fixed3(8), Err(Error::OutOfRange(_))));
        for r in 0..8u8 {
            let w = encode_fixed3(r).unwrap();
            assert_eq!(w.len(), 3);
            assert_eq!(decode_fixed3_from(&mut w.reader()).unwrap(), r);
        }
    }

    #[test]
    fn concat_lengths_add() {
        let a = encode_g(37);
        let b = encode_g(-99);
        let c = a.clone().concat(&b);
        assert_eq!(c.len(), a.len() + b.len());
    }

    proptest! {
        #[test]
        fn round_trip_with_tail(x in -1_000_000i64..=1_000_000, tail in proptest::collection::vec(any::<bool>(), 0..32)) {
            let mut stream = encode_g(x);
            let expect = stream.len();
            for b in tail {
                stream.push(b);
            }
            let (y, used) = decode_g(&stream).unwrap();
            prop_assert_eq!(y, x);
            prop_assert_eq!(used, expect);
        }

        #[test]
        fn stream_of_codewords_splits_back(xs in proptest::collection::vec(-100_000i64..=100_000, 1..100)) {
            let mut stream = BitString::new();
            for &x in &xs {
                stream.extend(&encode_g(x));
            }
            let mut reader = stream.reader();
            let mut decoded = Vec::with_capacity(xs.len());
            for _ in 0..xs.len() {
                decoded.push(decode_g_from(&mut reader).unwrap());
            }
            prop_assert_eq!(decoded, xs);
            prop_assert_eq!(reader.remaining(), 0);
        }

        #[test]
        fn ascii_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..64)) {
            let mut s = BitString::new();
            for b in bits {
                s.push(b);
            }
            prop_assert_eq!(BitString::from_ascii(&s.to_ascii()).unwrap(), s);
        }
    }
}
