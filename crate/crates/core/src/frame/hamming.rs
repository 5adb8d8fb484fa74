//! Hamming block codes over 4-bit data blocks.
//!
//! A codeword holds `n` bits, data first: `d3 d2 d1 d0 p1 p2 p3 p4`,
//! transmitted most significant bit first. Parity equations (d0 = LSB):
//!
//! - `p1 = d0 ^ d1 ^ d3`
//! - `p2 = d0 ^ d2 ^ d3`
//! - `p3 = d1 ^ d2 ^ d3`
//! - `p4` = parity of the seven preceding bits (4/8 only)
//!
//! 4/5 carries a single even-parity bit over the data instead.

use crate::css::CodeRate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    Clean,
    Corrected,
    /// Errors detected that the code cannot repair; data bits are passed
    /// through as received.
    Uncorrectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedBlock {
    pub nibble: u8,
    pub status: BlockStatus,
}

/// Syndrome columns `(p1 p2 p3)` for data bits d0..d3.
const DATA_COLUMNS: [u8; 4] = [0b110, 0b101, 0b011, 0b111];

fn bit(x: u8, i: u32) -> u8 {
    (x >> i) & 1
}

fn parity3(nibble: u8) -> u8 {
    let (d0, d1, d2, d3) = (bit(nibble, 0), bit(nibble, 1), bit(nibble, 2), bit(nibble, 3));
    let p1 = d0 ^ d1 ^ d3;
    let p2 = d0 ^ d2 ^ d3;
    let p3 = d1 ^ d2 ^ d3;
    (p1 << 2) | (p2 << 1) | p3
}

/// Encodes one nibble into the low `cr.codeword_bits()` bits of a byte.
pub fn encode_nibble(nibble: u8, cr: CodeRate) -> u8 {
    let d = nibble & 0x0F;
    match cr {
        CodeRate::Cr4_5 => (d << 1) | (d.count_ones() as u8 & 1),
        CodeRate::Cr4_6 => (d << 2) | (parity3(d) >> 1),
        CodeRate::Cr4_7 => (d << 3) | parity3(d),
        CodeRate::Cr4_8 => {
            let seven = (d << 3) | parity3(d);
            (seven << 1) | (seven.count_ones() as u8 & 1)
        }
    }
}

pub fn decode_codeword(cw: u8, cr: CodeRate) -> DecodedBlock {
    let n = cr.codeword_bits() as u32;
    let cw = cw & ((1u16 << n) - 1) as u8;
    let data = cw >> (n - 4);
    let clean = |nibble| DecodedBlock {
        nibble,
        status: BlockStatus::Clean,
    };
    let bad = DecodedBlock {
        nibble: data,
        status: BlockStatus::Uncorrectable,
    };
    match cr {
        CodeRate::Cr4_5 => {
            if cw.count_ones().is_multiple_of(2) {
                clean(data)
            } else {
                bad
            }
        }
        CodeRate::Cr4_6 => {
            if (cw & 0b11) == parity3(data) >> 1 {
                clean(data)
            } else {
                bad
            }
        }
        CodeRate::Cr4_7 => {
            let syndrome = (cw & 0b111) ^ parity3(data);
            correct(data, syndrome)
        }
        CodeRate::Cr4_8 => {
            let seven = cw >> 1;
            let syndrome = (seven & 0b111) ^ parity3(seven >> 3);
            let overall_ok = cw.count_ones().is_multiple_of(2);
            match (syndrome, overall_ok) {
                (0, true) => clean(data),
                // error confined to the overall parity bit
                (0, false) => DecodedBlock {
                    nibble: data,
                    status: BlockStatus::Corrected,
                },
                (s, false) => correct(data, s),
                (_, true) => bad,
            }
        }
    }
}

/// Single-error correction from a nonzero (p1 p2 p3) syndrome.
fn correct(data: u8, syndrome: u8) -> DecodedBlock {
    if syndrome == 0 {
        return DecodedBlock {
            nibble: data,
            status: BlockStatus::Clean,
        };
    }
    let nibble = match DATA_COLUMNS.iter().position(|&c| c == syndrome) {
        Some(i) => data ^ (1 << i),
        // a parity bit flipped; data is intact
        None => data,
    };
    DecodedBlock {
        nibble,
        status: BlockStatus::Corrected,
    }
}

/// Encodes nibbles into a codeword bit stream, MSB first per codeword.
pub fn hamming_encode(nibbles: &[u8], cr: CodeRate) -> Vec<bool> {
    let n = cr.codeword_bits();
    let mut bits = Vec::with_capacity(nibbles.len() * n);
    for &nib in nibbles {
        let cw = encode_nibble(nib, cr);
        bits.extend((0..n).rev().map(|i| (cw >> i) & 1 == 1));
    }
    bits
}

/// Decodes whole codewords; trailing bits short of a codeword are ignored.
pub fn hamming_decode(bits: &[bool], cr: CodeRate) -> Vec<DecodedBlock> {
    bits.chunks_exact(cr.codeword_bits())
        .map(|chunk| {
            let cw = chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
            decode_codeword(cw, cr)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_nibble_is_zero_codeword() {
        for cr in CodeRate::ALL {
            assert_eq!(encode_nibble(0, cr), 0);
        }
    }

    #[test]
    fn clean_decode_all_rates() {
        for cr in CodeRate::ALL {
            for nib in 0..16u8 {
                let d = decode_codeword(encode_nibble(nib, cr), cr);
                assert_eq!(d, DecodedBlock { nibble: nib, status: BlockStatus::Clean });
            }
        }
    }

    #[test]
    fn hamming74_corrects_every_single_error() {
        for nib in 0..16u8 {
            let cw = encode_nibble(nib, CodeRate::Cr4_7);
            for pos in 0..7 {
                let d = decode_codeword(cw ^ (1 << pos), CodeRate::Cr4_7);
                assert_eq!(d.nibble, nib);
                assert_eq!(d.status, BlockStatus::Corrected);
            }
        }
    }

    #[test]
    fn parity_rates_detect_single_errors() {
        for cr in [CodeRate::Cr4_5, CodeRate::Cr4_6] {
            for nib in 0..16u8 {
                let cw = encode_nibble(nib, cr);
                for pos in 0..cr.codeword_bits() {
                    let d = decode_codeword(cw ^ (1 << pos), cr);
                    assert_eq!(d.status, BlockStatus::Uncorrectable, "{cr} {nib} {pos}");
                }
            }
        }
    }

    #[test]
    fn bit_stream_layout() {
        // nibble 0b1000 under 4/8: d3 set, p1 p2 p3 set, overall parity 0
        assert_eq!(encode_nibble(0b1000, CodeRate::Cr4_8), 0b1000_1110);
        let bits = hamming_encode(&[0b1000], CodeRate::Cr4_8);
        assert_eq!(
            bits,
            vec![true, false, false, false, true, true, true, false]
        );
        let back = hamming_decode(&bits, CodeRate::Cr4_8);
        assert_eq!(back[0].nibble, 0b1000);
    }
}
