//! Text-to-bit extraction, block parity, XOR combining and bias checks for
//! classical setting bits.

use crate::error::{Error, Result};
use crate::exact::fisher_exact_two_sided;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

/// Default message length limit, in characters.
pub const MAX_MESSAGE_CHARS: usize = 140;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub label: String,
}

impl BitStream {
    pub fn new(bits: Vec<u8>, label: impl Into<String>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::domain(format!("bit value {b} not in {{0,1}}")));
        }
        Ok(BitStream {
            bits,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn truncated(&self, len: usize) -> BitStream {
        BitStream {
            bits: self.bits[..len.min(self.bits.len())].to_vec(),
            label: self.label.clone(),
        }
    }
}

/// Parity of the total number of one bits over the code points of `text`.
///
/// `max_chars = None` disables the length check. Empty messages give 0.
pub fn message_to_bit(text: &str, max_chars: Option<usize>) -> Result<u8> {
    if let Some(limit) = max_chars {
        let len = text.chars().count();
        if len > limit {
            return Err(Error::domain(format!(
                "message has {len} characters, limit is {limit}"
            )));
        }
    }
    if text.is_empty() {
        log::warn!("empty message mapped to bit 0");
        return Ok(0);
    }
    Ok(text
        .chars()
        .fold(0u32, |acc, c| acc ^ (u32::from(c).count_ones() & 1)) as u8)
}

/// One bit per line of UTF-8 text.
pub fn extract_lines<R: BufRead>(reader: R, max_chars: Option<usize>) -> Result<Vec<u8>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line?;
            message_to_bit(&line, max_chars).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// XOR of each consecutive group of 8 bits; a trailing partial group is dropped.
pub fn block8(bits: &BitStream) -> Result<BitStream> {
    if bits.len() < 8 {
        return Err(Error::domain(format!(
            "block parity needs at least 8 bits, got {}",
            bits.len()
        )));
    }
    let out = bits
        .bits
        .chunks_exact(8)
        .map(|c| c.iter().fold(0, |acc, b| acc ^ b))
        .collect();
    Ok(BitStream {
        bits: out,
        label: format!("{}/block8", bits.label),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    /// `|mean - 1/2|`
    pub bias: f64,
    /// `1 / (2 sqrt(n))`
    pub uncertainty: f64,
    pub n: u64,
}

pub fn estimate_bias(bits: &BitStream) -> Result<BiasEstimate> {
    if bits.is_empty() {
        return Err(Error::domain("bias of an empty stream"));
    }
    let n = bits.len() as u64;
    let ones: u64 = bits.bits.iter().map(|&b| u64::from(b)).sum();
    Ok(BiasEstimate {
        bias: (ones as f64 / n as f64 - 0.5).abs(),
        uncertainty: 1.0 / (2.0 * (n as f64).sqrt()),
        n,
    })
}

/// XOR of eight classical bits and one quantum bit.
pub fn xor_combine(classical: &[u8], quantum: u8) -> Result<u8> {
    if classical.len() != 8 {
        return Err(Error::domain(format!(
            "combiner takes 8 classical bits, got {}",
            classical.len()
        )));
    }
    if quantum > 1 || classical.iter().any(|&b| b > 1) {
        return Err(Error::domain("combiner inputs must be bits"));
    }
    Ok(classical.iter().fold(quantum, |acc, b| acc ^ b))
}

/// Combines consecutive 8-bit blocks of `classical` with one quantum bit each.
pub fn xor_combine_streams(classical: &BitStream, quantum: &BitStream) -> Result<BitStream> {
    let blocks = classical.len() / 8;
    if quantum.len() < blocks {
        return Err(Error::domain(format!(
            "{} classical blocks but only {} quantum bits",
            blocks,
            quantum.len()
        )));
    }
    let bits = classical
        .bits
        .chunks_exact(8)
        .zip(&quantum.bits)
        .map(|(c, &q)| xor_combine(c, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(BitStream {
        bits,
        label: format!("{}^{}", classical.label, quantum.label),
    })
}

/// Two-sided Fisher exact test of independence between index-paired bits.
pub fn independence_test(a: &BitStream, b: &BitStream) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "stream lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::domain("independence test of empty streams"));
    }
    Ok(fisher_exact_two_sided(pair_table(a, b)))
}

/// Joint counts `[[#(0,0), #(0,1)], [#(1,0), #(1,1)]]` of index-paired bits.
pub fn pair_table(a: &BitStream, b: &BitStream) -> [[u64; 2]; 2] {
    let mut t = [[0u64; 2]; 2];
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        t[x as usize][y as usize] += 1;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitFormat {
    /// One ASCII `0`/`1` per line.
    #[default]
    Ascii,
    /// Eight bits per byte, most significant first, last byte zero-padded.
    Packed,
}

pub fn write_bits<W: Write>(mut w: W, bits: &[u8], format: BitFormat) -> Result<()> {
    match format {
        BitFormat::Ascii => {
            for &b in bits {
                w.write_all(if b == 0 { b"0\n" } else { b"1\n" })?;
            }
        }
        BitFormat::Packed => {
            for chunk in bits.chunks(8) {
                let byte = chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (b << (7 - i)));
                w.write_all(&[byte])?;
            }
        }
    }
    Ok(())
}

/// Reads a bit file. Packed input yields a multiple of 8 bits, padding included.
pub fn read_bits<R: Read>(mut r: R, format: BitFormat) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    match format {
        BitFormat::Packed => Ok(raw
            .iter()
            .flat_map(|&byte| (0..8).rev().map(move |i| (byte >> i) & 1))
            .collect()),
        BitFormat::Ascii => {
            let text = String::from_utf8(raw).map_err(|e| Error::domain(e.to_string()))?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| match l.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected 0 or 1, got {other:?}"),
                    }),
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(bits: Vec<u8>) -> BitStream {
        BitStream::new(bits, "t").unwrap()
    }

    #[test]
    fn message_examples() {
        assert_eq!(message_to_bit("A", Some(140)).unwrap(), 0);
        assert_eq!(message_to_bit("a", Some(140)).unwrap(), 1);
        assert_eq!(message_to_bit("", Some(140)).unwrap(), 0);
        // U+1F600 = 1_1111_0110_0000_0000: seven ones
        assert_eq!(message_to_bit("😀", None).unwrap(), 1);
        assert!(message_to_bit(&"x".repeat(141), Some(140)).is_err());
        assert!(message_to_bit(&"é".repeat(140), Some(140)).is_ok());
    }

    #[test]
    fn extract_reports_line() {
        let text = format!("a\nA\n{}\n", "z".repeat(5));
        match extract_lines(text.as_bytes(), Some(3)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(extract_lines("a\nA\n".as_bytes(), None).unwrap(), vec![1, 0]);
    }

    #[test]
    fn block8_examples() {
        assert_eq!(block8(&stream(vec![0; 16])).unwrap().bits, vec![0, 0]);
        assert_eq!(block8(&stream(vec![1; 8])).unwrap().bits, vec![0]);
        assert_eq!(block8(&stream(vec![1; 139_952])).unwrap().len(), 17_494);
        assert_eq!(block8(&stream(vec![0; 134_501])).unwrap().len(), 16_812);
        assert!(block8(&stream(vec![1; 7])).is_err());
    }

    #[test]
    fn bias_examples() {
        let b = estimate_bias(&stream(vec![0; 4])).unwrap();
        assert_eq!((b.bias, b.uncertainty), (0.5, 0.25));
        let b = estimate_bias(&stream(vec![0, 1, 0, 1])).unwrap();
        assert_eq!((b.bias, b.uncertainty), (0.0, 0.25));
        let b = estimate_bias(&stream(vec![0; 16_812])).unwrap();
        assert!((b.uncertainty - 0.003856).abs() < 1e-6);
        assert!(estimate_bias(&stream(vec![])).is_err());
        let quad = estimate_bias(&stream(vec![1; 400])).unwrap();
        let single = estimate_bias(&stream(vec![1; 100])).unwrap();
        assert_eq!(quad.uncertainty * 2.0, single.uncertainty);
    }

    #[test]
    fn xor_examples() {
        assert_eq!(xor_combine(&[0; 8], 0).unwrap(), 0);
        assert_eq!(xor_combine(&[1, 0, 0, 0, 0, 0, 0, 0], 0).unwrap(), 1);
        assert_eq!(xor_combine(&[0; 8], 1).unwrap(), 1);
        assert!(xor_combine(&[0; 7], 0).is_err());
        assert!(xor_combine(&[0; 9], 0).is_err());
        assert!(xor_combine(&[0; 8], 2).is_err());
    }

    #[test]
    fn independence_examples() {
        let t = stream([vec![0; 10], vec![1; 10]].concat());
        let same = independence_test(&t, &t).unwrap();
        assert!(same < 1e-4, "{same}");
        let a = stream([vec![0; 10], vec![1; 10]].concat());
        let b = stream([vec![0; 5], vec![1; 5], vec![0; 5], vec![1; 5]].concat());
        assert_eq!(pair_table(&a, &b), [[5, 5], [5, 5]]);
        assert!((independence_test(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(independence_test(&a, &a.truncated(19)).is_err());
    }

    #[test]
    fn bit_files_round_trip() {
        let bits = vec![1, 0, 1, 1, 0, 0, 0, 1, 1, 1];
        for fmt in [BitFormat::Ascii, BitFormat::Packed] {
            let mut buf = Vec::new();
            write_bits(&mut buf, &bits, fmt).unwrap();
            let back = read_bits(&buf[..], fmt).unwrap();
            assert_eq!(&back[..bits.len()], &bits[..]);
        }
        assert!(read_bits("0\n2\n".as_bytes(), BitFormat::Ascii).is_err());
    }

    proptest! {
        #[test]
        fn parity_ignores_character_order(s in "\\PC{0,40}") {
            let mut chars: Vec<char> = s.chars().collect();
            chars.reverse();
            let rev: String = chars.into_iter().collect();
            prop_assert_eq!(message_to_bit(&s, None).unwrap(), message_to_bit(&rev, None).unwrap());
        }

        #[test]
        fn combine_with_zero_quantum_is_block_parity(bits in proptest::collection::vec(0u8..2, 8..200)) {
            let s = stream(bits.clone());
            let direct: Vec<u8> = bits.chunks_exact(8).map(|c| xor_combine(c, 0).unwrap()).collect();
            prop_assert_eq!(block8(&s).unwrap().bits, direct);
        }

        #[test]
        fn quantum_bit_always_flips(classical in proptest::collection::vec(0u8..2, 8)) {
            let a = xor_combine(&classical, 0).unwrap();
            let b = xor_combine(&classical, 1).unwrap();
            prop_assert_eq!(a ^ b, 1);
        }
    }
}
