//! LoRa-shaped frames: preamble, sync pair, 2.25 down-chirps, then the
//! Hamming-coded payload with an optional CRC-16.
//!
//! Layout choices that a chipset would pin down are fixed here instead:
//! implicit header only, sync symbols `(8, 16)` by default, low nibble of
//! each byte first, CRC appended big-endian, zero bits padding the last
//! payload symbol.

pub mod crc;
pub mod hamming;
pub mod hopping;

use num_complex::Complex;
use thiserror::Error;

use crate::css::{
    base_chirp, bits_to_symbols, symbols_to_bits, ChirpParams, ChirpSymbol, CodeRate,
    Demodulator, Direction,
};
use crate::error::ParamError;
use crate::scalar::Scalar;
use crate::signal::IqSignal;

pub use crc::crc16;
pub use hamming::{hamming_decode, hamming_encode, BlockStatus, DecodedBlock};
pub use hopping::{channel_plan, hop_sequence, ChannelPlan, HopSequence};

pub const MIN_PREAMBLE: u32 = 6;
pub const MAX_PREAMBLE: u32 = 65_535;
pub const MAX_PAYLOAD: usize = 255;
pub const DEFAULT_PREAMBLE: u32 = 8;
pub const DEFAULT_SYNC: [u32; 2] = [8, 16];
/// Consecutive matching windows needed to declare a preamble.
pub const PREAMBLE_DETECT_RUN: usize = 4;
/// Peak-to-mean floor for a window to count toward preamble detection.
pub const DETECT_PEAK_TO_MEAN: f64 = 3.0;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("no preamble found")]
    NoPreamble,
    #[error("sync mismatch: expected {expected:?}, found {found:?}")]
    SyncMismatch { expected: [u32; 2], found: [u32; 2] },
    #[error("CRC check failed")]
    CrcFail(Box<ParsedFrame>),
    #[error("signal ends before the payload does")]
    Truncated(Box<ParsedFrame>),
    #[error("unsupported bandwidth {0} Hz")]
    UnsupportedBandwidth(f64),
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraFrame {
    pub params: ChirpParams,
    pub preamble_len: u32,
    pub sync: [ChirpSymbol; 2],
    pub payload: Vec<u8>,
    pub crc_present: bool,
}

impl LoraFrame {
    /// Frame with the default preamble length and sync word.
    pub fn new(params: ChirpParams, payload: Vec<u8>, crc_present: bool) -> Result<Self, ParamError> {
        let sync = default_sync(params.sf());
        let frame = Self {
            params,
            preamble_len: DEFAULT_PREAMBLE,
            sync,
            payload,
            crc_present,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(MIN_PREAMBLE..=MAX_PREAMBLE).contains(&self.preamble_len) {
            return Err(ParamError::invalid(
                "preamble_len",
                format!("{} outside 6..=65535", self.preamble_len),
            ));
        }
        if self.payload.len() > MAX_PAYLOAD {
            return Err(ParamError::invalid(
                "payload",
                format!("{} bytes exceeds 255", self.payload.len()),
            ));
        }
        let n = self.params.chips() as u32;
        if self.sync.iter().any(|s| s.value() >= n) {
            return Err(ParamError::invalid("sync", "symbol out of range"));
        }
        Ok(())
    }

    pub fn format(&self) -> FrameFormat {
        FrameFormat {
            payload_len: self.payload.len(),
            crc_present: self.crc_present,
            sync: self.sync,
        }
    }

    /// Payload plus the big-endian CRC when present.
    pub fn coded_bytes(&self) -> Vec<u8> {
        let mut bytes = self.payload.clone();
        if self.crc_present {
            bytes.extend_from_slice(&crc16(&self.payload).to_be_bytes());
        }
        bytes
    }

    pub fn payload_symbols(&self) -> Vec<ChirpSymbol> {
        let nibbles = bytes_to_nibbles(&self.coded_bytes());
        let bits = hamming_encode(&nibbles, self.params.cr());
        bits_to_symbols(&bits, self.params.sf())
    }

    /// Total on-air time in seconds.
    pub fn duration(&self) -> f64 {
        let symbols = self.preamble_len as f64 + 2.0 + 2.25 + self.format().payload_symbol_count(&self.params) as f64;
        symbols * self.params.symbol_duration()
    }
}

/// Sync pair used when none is configured.
pub fn default_sync(sf: u32) -> [ChirpSymbol; 2] {
    DEFAULT_SYNC.map(|v| ChirpSymbol::new(v, sf).expect("default sync fits sf >= 6"))
}

/// What the receiver must know in implicit-header mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFormat {
    pub payload_len: usize,
    pub crc_present: bool,
    pub sync: [ChirpSymbol; 2],
}

impl FrameFormat {
    pub fn coded_len(&self) -> usize {
        self.payload_len + if self.crc_present { 2 } else { 0 }
    }

    pub fn coded_bits(&self, cr: CodeRate) -> usize {
        self.coded_len() * 2 * cr.codeword_bits()
    }

    pub fn payload_symbol_count(&self, p: &ChirpParams) -> usize {
        self.coded_bits(p.cr()).div_ceil(p.sf() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameChirp {
    Up(ChirpSymbol),
    Down,
    /// The first quarter of a down-chirp.
    QuarterDown,
}

impl FrameChirp {
    /// Length in symbol durations.
    pub fn symbols(self) -> f64 {
        match self {
            FrameChirp::QuarterDown => 0.25,
            _ => 1.0,
        }
    }
}

pub fn build_frame(frame: &LoraFrame) -> Vec<FrameChirp> {
    let zero = ChirpSymbol::new(0, frame.params.sf()).expect("zero is a symbol");
    let mut out = Vec::with_capacity(frame.preamble_len as usize + 5);
    out.extend(std::iter::repeat_n(FrameChirp::Up(zero), frame.preamble_len as usize));
    out.extend(frame.sync.iter().map(|&s| FrameChirp::Up(s)));
    out.extend([FrameChirp::Down, FrameChirp::Down, FrameChirp::QuarterDown]);
    out.extend(frame.payload_symbols().into_iter().map(FrameChirp::Up));
    out
}

/// Renders a chirp sequence at `osf * bw`, rotating each element so the
/// phase runs on continuously from the previous one.
pub fn chirps_to_signal<T: Scalar>(chirps: &[FrameChirp], p: &ChirpParams) -> IqSignal<T> {
    let base = base_chirp::<T>(p, Direction::Up).into_samples();
    let m = base.len();
    let osf = p.osf() as usize;
    let total: usize = chirps
        .iter()
        .map(|c| match c {
            FrameChirp::QuarterDown => m / 4,
            _ => m,
        })
        .sum();
    let mut out = Vec::with_capacity(total);
    let mut next_phase = Complex::new(T::one(), T::zero());
    for &c in chirps {
        // (source sample at index, sequence start index, length, conjugate?)
        let (start, len, down) = match c {
            FrameChirp::Up(s) => (s.value() as usize * osf, m, false),
            FrameChirp::Down => (0, m, true),
            FrameChirp::QuarterDown => (0, m / 4, true),
        };
        let at = |i: usize| {
            let v = base[i % m];
            if down {
                v.conj()
            } else {
                v
            }
        };
        let rot = next_phase * at(start).conj();
        out.extend((0..len).map(|n| at(start + n) * rot));
        next_phase = at(start + len) * rot;
        // keep the running phasor on the unit circle
        next_phase = next_phase / next_phase.norm();
    }
    IqSignal::from_parts(out, p.sample_rate())
}

pub fn frame_signal<T: Scalar>(frame: &LoraFrame) -> IqSignal<T> {
    chirps_to_signal(&build_frame(frame), &frame.params)
}

pub fn bytes_to_nibbles(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|b| [b & 0x0F, b >> 4]).collect()
}

pub fn nibbles_to_bytes(nibbles: &[u8]) -> Vec<u8> {
    nibbles
        .chunks(2)
        .map(|c| (c[0] & 0x0F) | (c.get(1).copied().unwrap_or(0) << 4))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFrame {
    pub payload: Vec<u8>,
    pub crc_ok: bool,
    /// Peak-to-mean ratio of each payload symbol.
    pub confidence: Vec<f64>,
    pub symbols: Vec<ChirpSymbol>,
    pub corrected_blocks: usize,
    pub uncorrectable_blocks: usize,
    /// Sample index (at the input rate) where the payload starts.
    pub payload_start: usize,
}

/// Finds the preamble, checks the sync pair, aligns on the down-chirps and
/// decodes the payload.
///
/// The signal must start inside (or just before) the preamble. Oversampled
/// input is folded by keeping every `osf`-th sample, so pass it through a
/// channel filter first when it carries out-of-band energy.
pub fn parse_frame<T: Scalar>(
    sig: &IqSignal<T>,
    p: &ChirpParams,
    format: &FrameFormat,
) -> Result<ParsedFrame, FrameError> {
    let osf = p.osf() as usize;
    let nyquist = p.with_osf(1)?;
    let folded = sig.pick_every(osf, 0);
    let x = folded.samples();
    let n = p.chips();
    let demod = Demodulator::<T>::new(&nyquist);
    let window = |start: usize| x.get(start..start + n);
    let up_at = |start: usize| window(start).map(|w| demod.demodulate(w).expect("window length"));

    // Coarse search: a run of windows agreeing on the same bin.
    let mut run_value = u32::MAX;
    let mut run = 0usize;
    let mut aligned = None;
    let mut k = 0usize;
    while let Some(r) = up_at(k * n) {
        if r.peak_to_mean >= DETECT_PEAK_TO_MEAN && r.value == run_value {
            run += 1;
        } else if r.peak_to_mean >= DETECT_PEAK_TO_MEAN {
            run_value = r.value;
            run = 1;
        } else {
            run = 0;
            run_value = u32::MAX;
        }
        if run >= PREAMBLE_DETECT_RUN {
            // A window lagging the symbol grid by `o` samples reads value `o`.
            let first = (k + 1 - run) * n;
            aligned = Some(first + (n - run_value as usize) % n);
            break;
        }
        k += 1;
    }
    let mut pos = aligned.ok_or(FrameError::NoPreamble)?;

    // Walk the remaining preamble to the sync pair, tolerating an
    // isolated corrupted preamble symbol.
    let sync = format.sync.map(|s| s.value());
    let mut slips = 0;
    let found = loop {
        let Some(a) = up_at(pos) else {
            return Err(FrameError::NoPreamble);
        };
        if a.value == 0 {
            pos += n;
            continue;
        }
        let b = up_at(pos + n).ok_or(FrameError::NoPreamble)?;
        if [a.value, b.value] == sync {
            break pos;
        }
        let down_follows = down_offset(&demod, x, pos + 2 * n).is_some();
        if b.value == 0 && !down_follows && slips < 2 {
            slips += 1;
            pos += n;
            continue;
        }
        return Err(FrameError::SyncMismatch {
            expected: sync,
            found: [a.value, b.value],
        });
    };

    // Fine alignment: both full down-chirps must agree on the offset.
    let mut start = found + 4 * n + n / 4;
    let d1 = down_offset(&demod, x, found + 2 * n);
    let d2 = down_offset(&demod, x, found + 3 * n);
    if let (Some(a), Some(b)) = (d1, d2) {
        if a == b && a != 0 {
            start = (start as isize + a) as usize;
        }
    }

    let count = format.payload_symbol_count(p);
    let mut symbols = Vec::with_capacity(count);
    let mut confidence = Vec::with_capacity(count);
    let mut truncated = false;
    for i in 0..count {
        match up_at(start + i * n) {
            Some(r) => {
                symbols.push(ChirpSymbol::new(r.value, p.sf()).expect("bin < 2^sf"));
                confidence.push(r.peak_to_mean);
            }
            None => {
                truncated = true;
                symbols.push(ChirpSymbol::new(0, p.sf()).expect("zero"));
                confidence.push(0.0);
            }
        }
    }

    let bits = symbols_to_bits(&symbols, p.sf());
    let coded_bits = format.coded_bits(p.cr());
    let blocks = hamming_decode(&bits[..coded_bits], p.cr());
    let corrected_blocks = blocks.iter().filter(|b| b.status == BlockStatus::Corrected).count();
    let uncorrectable_blocks = blocks
        .iter()
        .filter(|b| b.status == BlockStatus::Uncorrectable)
        .count();
    let nibbles: Vec<u8> = blocks.iter().map(|b| b.nibble).collect();
    let bytes = nibbles_to_bytes(&nibbles);
    let (payload, crc_bytes) = bytes.split_at(format.payload_len);
    let crc_ok = if format.crc_present {
        crc16(payload).to_be_bytes() == crc_bytes
    } else {
        uncorrectable_blocks == 0
    };
    let parsed = ParsedFrame {
        payload: payload.to_vec(),
        crc_ok: crc_ok && !truncated,
        confidence,
        symbols,
        corrected_blocks,
        uncorrectable_blocks,
        payload_start: start * osf,
    };
    if truncated {
        if format.crc_present {
            return Err(FrameError::CrcFail(Box::new(parsed)));
        }
        return Err(FrameError::Truncated(Box::new(parsed)));
    }
    if format.crc_present && !crc_ok {
        return Err(FrameError::CrcFail(Box::new(parsed)));
    }
    Ok(parsed)
}

/// Signed sample offset implied by a down-chirp window, or `None` when the
/// window holds no convincing down-chirp.
fn down_offset<T: Scalar>(demod: &Demodulator<T>, x: &[Complex<T>], start: usize) -> Option<isize> {
    let n = demod.params().chips();
    let w = x.get(start..start + n)?;
    let r = demod.demodulate_as(w, Direction::Down).ok()?;
    if r.peak_to_mean < DETECT_PEAK_TO_MEAN {
        return None;
    }
    // A down-chirp arriving `e` samples late peaks in bin e.
    let v = r.value as isize;
    let e = if v > n as isize / 2 { v - n as isize } else { v };
    // Only small corrections are trusted; larger ones are noise.
    (e.abs() <= 2).then_some(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sf: u32, cr: CodeRate) -> ChirpParams {
        ChirpParams::from_hz(sf, 125_000.0, cr, 1).unwrap()
    }

    #[test]
    fn empty_frame_layout() {
        let mut f = LoraFrame::new(params(7, CodeRate::Cr4_8), vec![], false).unwrap();
        f.preamble_len = 6;
        let chirps = build_frame(&f);
        let total: f64 = chirps.iter().map(|c| c.symbols()).sum();
        assert_eq!(total, 10.25);
        let sig = frame_signal::<f64>(&f);
        assert_eq!(sig.len(), 6 * 128 + 2 * 128 + 2 * 128 + 32);
        assert!((f.duration() - 10.25 * f.params.symbol_duration()).abs() < 1e-15);
    }

    #[test]
    fn payload_symbol_counts() {
        let p = params(12, CodeRate::Cr4_8);
        let f = LoraFrame::new(p, vec![1, 2, 3], false).unwrap();
        assert_eq!(f.payload_symbols().len(), 4);
        let f = LoraFrame::new(p, vec![0; 8], true).unwrap();
        assert_eq!(f.payload_symbols().len(), 14);
    }

    #[test]
    fn nibble_order_is_low_first() {
        assert_eq!(bytes_to_nibbles(&[0xA5]), vec![0x5, 0xA]);
        assert_eq!(nibbles_to_bytes(&[0x5, 0xA]), vec![0xA5]);
    }

    #[test]
    fn validation() {
        let p = params(7, CodeRate::Cr4_5);
        assert!(LoraFrame::new(p, vec![0; 256], true).is_err());
        let mut f = LoraFrame::new(p, vec![], true).unwrap();
        f.preamble_len = 5;
        assert!(f.validate().is_err());
    }

    #[test]
    fn frame_is_phase_continuous() {
        let p = params(7, CodeRate::Cr4_5).with_osf(4).unwrap();
        let f = LoraFrame::new(p, b"hello".to_vec(), true).unwrap();
        let sig = frame_signal::<f64>(&f);
        let limit = std::f64::consts::PI * (1.0 + 1.0 / 4.0);
        for w in sig.samples().windows(2) {
            let step = (w[1] * w[0].conj()).arg().abs();
            assert!(step <= limit + 1e-9, "{step}");
        }
    }

    #[test]
    fn parse_roundtrip_with_offset_start() {
        let p = params(8, CodeRate::Cr4_7);
        let f = LoraFrame::new(p, b"DEADBEEF".to_vec(), true).unwrap();
        let sig = frame_signal::<f64>(&f);
        for skip in [0usize, 1, 37, 255, 300] {
            let cut = sig.slice(skip, sig.len());
            let parsed = parse_frame(&cut, &p, &f.format()).unwrap();
            assert_eq!(parsed.payload, f.payload);
            assert!(parsed.crc_ok);
        }
    }

    #[test]
    fn truncation_is_a_crc_failure() {
        let p = params(7, CodeRate::Cr4_8);
        let f = LoraFrame::new(p, b"truncate me".to_vec(), true).unwrap();
        let sig = frame_signal::<f64>(&f);
        let cut = sig.slice(0, sig.len() - 3 * 128);
        assert!(matches!(parse_frame(&cut, &p, &f.format()), Err(FrameError::CrcFail(_))));
    }

    #[test]
    fn wrong_sync_is_reported() {
        let p = params(7, CodeRate::Cr4_8);
        let mut f = LoraFrame::new(p, b"x".to_vec(), true).unwrap();
        let fmt = f.format();
        f.sync = [ChirpSymbol::new(20, 7).unwrap(), ChirpSymbol::new(40, 7).unwrap()];
        let sig = frame_signal::<f64>(&f);
        assert!(matches!(
            parse_frame(&sig, &p, &fmt),
            Err(FrameError::SyncMismatch { found: [20, 40], .. })
        ));
    }
}
