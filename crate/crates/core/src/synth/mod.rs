//! Backscatter-side waveform synthesis.
//!
//! The tag cannot generate a carrier; it multiplies the incident tone by a
//! reflection coefficient chosen from a small set of impedance states. To
//! place a chirp at `delta_f + f_chirp` it steps through a frequency plan
//! and, at each instant, picks the switch state that approximates
//! `exp(j 2 pi phase)`.
//!
//! Two approximations are provided:
//!
//! - [`Waveform::Square`]: independent two-level I and Q rails, i.e. four
//!   states `(+-1 +-j)`. No mirror image, but every harmonic with order
//!   `h = 1 (mod 4)` lands above the carrier and `h = 3 (mod 4)` below it,
//!   at `1/h` amplitude.
//! - [`Waveform::MultiLevel`]: `L` cosine levels, i.e. `2L` states
//!   `exp(j (2k+1) pi / 2L)` held for `1/(2L)` of a period each. For `L = 4`
//!   the cosine rail takes `{+-0.9239, +-0.3827}` and only orders
//!   `h = 1 (mod 8)` survive: 9, 17, ... above and 7, 15, ... below.
//!   Five and six levels push the first surviving pair out to 9/11 and
//!   11/13.
//!
//! The carrier is modelled at complex baseband (DC), so every product shows
//! up at its offset from the carrier.

pub mod spectrum;

use num_complex::Complex;
use thiserror::Error;

use crate::css::{ChirpParams, ChirpSymbol};
use crate::frame::FrameChirp;
use crate::scalar::Scalar;
use crate::signal::IqSignal;

pub use spectrum::{spectrum, spectrum_with, SpectrumOptions, SpectrumReport};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("unsupported level count {0}; expected 4, 5 or 6")]
    UnsupportedLevels(u32),
    #[error("sample rate {actual} Hz below the required {required} Hz")]
    SampleRateTooLow { required: f64, actual: f64 },
    #[error("invalid frequency plan: {0}")]
    InvalidPlan(String),
    #[error("signal of {0} samples is shorter than the 16384 needed for a spectrum")]
    SignalTooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub duration: f64,
    /// Baseband chirp frequency, relative to the band centre.
    pub freq: f64,
}

/// Piecewise-constant frequency schedule plus the fixed tag offset.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPlan {
    steps: Vec<PlanStep>,
    delta_f: f64,
    bw: f64,
}

impl FrequencyPlan {
    pub fn new(steps: Vec<PlanStep>, delta_f: f64, bw: f64) -> Result<Self, SynthError> {
        if steps.iter().any(|s| !(s.duration > 0.0)) {
            return Err(SynthError::InvalidPlan("step durations must be positive".into()));
        }
        if steps.iter().any(|s| s.freq.abs() > bw / 2.0) {
            return Err(SynthError::InvalidPlan("step frequency outside +-bw/2".into()));
        }
        if !(delta_f > bw / 2.0) {
            return Err(SynthError::InvalidPlan(format!(
                "delta_f {delta_f} Hz must exceed bw/2 = {} Hz",
                bw / 2.0
            )));
        }
        Ok(Self { steps, delta_f, bw })
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn bw(&self) -> f64 {
        self.bw
    }

    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }

    /// Highest instantaneous switching frequency, `delta_f + max |f|`.
    pub fn max_frequency(&self) -> f64 {
        self.delta_f + self.steps.iter().map(|s| s.freq.abs()).fold(0.0, f64::max)
    }
}

/// Chip-centred frequency of chip `k` of an up-chirp with `n` chips.
fn chip_freq(k: usize, n: usize, bw: f64) -> f64 {
    -bw / 2.0 + (k as f64 + 0.5) * bw / n as f64
}

/// One step per chip: the frequency the cyclically shifted chirp holds at
/// the centre of that chip.
pub fn frequency_plan(
    p: &ChirpParams,
    symbols: &[ChirpSymbol],
    delta_f: f64,
) -> Result<FrequencyPlan, SynthError> {
    let chirps: Vec<FrameChirp> = symbols.iter().map(|&s| FrameChirp::Up(s)).collect();
    frame_plan(p, &chirps, delta_f)
}

/// Frequency plan for a full frame, down-chirps included.
pub fn frame_plan(
    p: &ChirpParams,
    chirps: &[FrameChirp],
    delta_f: f64,
) -> Result<FrequencyPlan, SynthError> {
    let n = p.chips();
    let bw = p.bw();
    let chip = 1.0 / bw;
    let mut steps = Vec::new();
    for &c in chirps {
        match c {
            FrameChirp::Up(s) => steps.extend((0..n).map(|k| PlanStep {
                duration: chip,
                freq: chip_freq((k + s.value() as usize) % n, n, bw),
            })),
            FrameChirp::Down | FrameChirp::QuarterDown => {
                let len = if c == FrameChirp::Down { n } else { n / 4 };
                steps.extend((0..len).map(|k| PlanStep {
                    duration: chip,
                    freq: -chip_freq(k, n, bw),
                }))
            }
        }
    }
    FrequencyPlan::new(steps, delta_f, bw)
}

/// One of the eight impedance states of the 4-level synthesizer,
/// `exp(j (pi/8 + k pi/4))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SwitchState(u8);

impl SwitchState {
    pub fn new(index: u8) -> Option<Self> {
        (index < 8).then_some(Self(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn value(self) -> Complex<f64> {
        state_value(8, self.0 as u32, 1.0)
    }

    pub fn all() -> [SwitchState; 8] {
        std::array::from_fn(|k| SwitchState(k as u8))
    }
}

fn state_value(phases: u32, index: u32, amplitude: f64) -> Complex<f64> {
    let angle = (2 * index + 1) as f64 * std::f64::consts::PI / phases as f64;
    Complex::from_polar(amplitude, angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    /// Two-level rails; the single-sideband baseline without cancellation.
    Square,
    /// Staircase with this many cosine levels (4, 5 or 6).
    MultiLevel(u32),
}

impl Waveform {
    /// Switch states per period.
    pub fn phases(self) -> Result<u32, SynthError> {
        match self {
            Waveform::Square => Ok(4),
            Waveform::MultiLevel(l @ 4..=6) => Ok(2 * l),
            Waveform::MultiLevel(l) => Err(SynthError::UnsupportedLevels(l)),
        }
    }

    fn amplitude(self) -> f64 {
        match self {
            Waveform::Square => std::f64::consts::SQRT_2,
            Waveform::MultiLevel(_) => 1.0,
        }
    }
}

/// Switch-state sequence sampled at `sample_rate`.
///
/// State `k` of a `P`-phase wave has complex value
/// `A exp(j (2k+1) pi / P)`; `A = 1` for staircases and `sqrt 2` for the
/// square rails. Values are kept on the alphabet rather than rescaled; use
/// [`MultiLevelWave::fundamental_amplitude`] for the gain of the wanted tone.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelWave {
    waveform: Waveform,
    phases: u32,
    indices: Vec<u16>,
    sample_rate: f64,
}

impl MultiLevelWave {
    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    pub fn phases(&self) -> u32 {
        self.phases
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The state sequence as 8-state switch settings (4-level waves only).
    pub fn states(&self) -> Option<Vec<SwitchState>> {
        (self.phases == 8 && self.waveform != Waveform::Square)
            .then(|| self.indices.iter().map(|&i| SwitchState(i as u8)).collect())
    }

    pub fn value_of(&self, index: u16) -> Complex<f64> {
        state_value(self.phases, index as u32, self.waveform.amplitude())
    }

    /// Distinct complex values the wave can take.
    pub fn alphabet(&self) -> Vec<Complex<f64>> {
        (0..self.phases as u16).map(|i| self.value_of(i)).collect()
    }

    /// Amplitude of the `+f` component: `A sinc(1/P)`.
    pub fn fundamental_amplitude(&self) -> f64 {
        let x = std::f64::consts::PI / self.phases as f64;
        self.waveform.amplitude() * x.sin() / x
    }

    pub fn to_signal<T: Scalar>(&self) -> IqSignal<T> {
        let table: Vec<Complex<T>> = self
            .alphabet()
            .into_iter()
            .map(|c| Complex::new(T::lit(c.re), T::lit(c.im)))
            .collect();
        IqSignal::from_parts(
            self.indices.iter().map(|&i| table[i as usize]).collect(),
            self.sample_rate,
        )
    }

    /// True when every transition advances the phase counter by at most one
    /// state, i.e. the counter never resets or skips.
    pub fn counter_is_continuous(&self) -> bool {
        let p = self.phases as u16;
        self.indices.windows(2).all(|w| {
            let step = (w[1] + p - w[0]) % p;
            step <= 1
        })
    }
}

/// Running phase in cycles; the state index is the current `1/P` sector.
struct PhaseCounter {
    cycles: f64,
}

impl PhaseCounter {
    fn sector(&self, phases: u32) -> u16 {
        ((self.cycles * phases as f64).floor() as u32 % phases) as u16
    }

    fn advance(&mut self, cycles: f64) {
        self.cycles = (self.cycles + cycles).rem_euclid(1.0);
    }
}

fn check_rate(max_freq: f64, sample_rate: f64) -> Result<(), SynthError> {
    let required = 16.0 * max_freq;
    if sample_rate < required {
        return Err(SynthError::SampleRateTooLow {
            required,
            actual: sample_rate,
        });
    }
    Ok(())
}

fn constant_wave(
    waveform: Waveform,
    freq: f64,
    duration: f64,
    sample_rate: f64,
) -> Result<MultiLevelWave, SynthError> {
    let phases = waveform.phases()?;
    check_rate(freq.abs(), sample_rate)?;
    let n = (duration * sample_rate).round() as usize;
    let mut counter = PhaseCounter { cycles: 0.0 };
    let step = freq / sample_rate;
    let indices = (0..n)
        .map(|_| {
            let s = counter.sector(phases);
            counter.advance(step);
            s
        })
        .collect();
    Ok(MultiLevelWave {
        waveform,
        phases,
        indices,
        sample_rate,
    })
}

/// Two-level square-rail approximation of `exp(j 2 pi delta_f t)`; values
/// are always one of `+-1 +-j`.
pub fn square_exponent<T: Scalar>(
    delta_f: f64,
    duration: f64,
    sample_rate: f64,
) -> Result<IqSignal<T>, SynthError> {
    Ok(constant_wave(Waveform::Square, delta_f, duration, sample_rate)?.to_signal())
}

/// Staircase approximation of `exp(j 2 pi delta_f t)` with `levels` cosine
/// levels.
pub fn multilevel_exponent(
    delta_f: f64,
    duration: f64,
    sample_rate: f64,
    levels: u32,
) -> Result<MultiLevelWave, SynthError> {
    constant_wave(Waveform::MultiLevel(levels), delta_f, duration, sample_rate)
}

/// Switch schedule for a whole plan: each step runs at `delta_f + freq` and
/// the phase counter carries across step boundaries.
pub fn switch_schedule(
    plan: &FrequencyPlan,
    waveform: Waveform,
    sample_rate: f64,
) -> Result<MultiLevelWave, SynthError> {
    let phases = waveform.phases()?;
    check_rate(plan.max_frequency(), sample_rate)?;
    let total = (plan.duration() * sample_rate).round() as usize;
    let mut indices = Vec::with_capacity(total);
    let mut counter = PhaseCounter { cycles: 0.0 };
    let mut steps = plan.steps().iter();
    let mut current = steps.next();
    // Step boundaries in samples, accumulated from durations so long plans
    // do not drift.
    let mut boundary = current.map(|s| s.duration * sample_rate).unwrap_or(0.0);
    for n in 0..total {
        while current.is_some() && (n as f64) + 1e-9 >= boundary {
            current = steps.next();
            if let Some(s) = current {
                boundary += s.duration * sample_rate;
            }
        }
        let freq = plan.delta_f() + current.map(|s| s.freq).unwrap_or(0.0);
        indices.push(counter.sector(phases));
        counter.advance(freq / sample_rate);
    }
    Ok(MultiLevelWave {
        waveform,
        phases,
        indices,
        sample_rate,
    })
}

/// Finite switching speed, modelled as a single-pole low-pass with time
/// constant `tau_s` on the reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchSettle {
    pub tau_s: f64,
}

/// Reflects a unit carrier (at DC) off the switch sequence, scaled by
/// `carrier_amplitude`.
pub fn backscatter_mix<T: Scalar>(
    wave: &MultiLevelWave,
    carrier_amplitude: f64,
    settle: Option<SwitchSettle>,
) -> IqSignal<T> {
    let mut sig = wave.to_signal::<T>();
    sig.scale(T::lit(carrier_amplitude));
    if let Some(SwitchSettle { tau_s }) = settle {
        let alpha = T::lit(1.0 - (-1.0 / (tau_s * wave.sample_rate())).exp());
        let mut y = sig.samples().first().copied().unwrap_or_default();
        for s in sig.samples_mut() {
            y = y + (*s - y) * alpha;
            *s = y;
        }
    }
    sig
}

/// Frame rendered the way the tag would emit it.
pub fn synthesize_frame<T: Scalar>(
    chirps: &[FrameChirp],
    p: &ChirpParams,
    delta_f: f64,
    waveform: Waveform,
    sample_rate: f64,
) -> Result<IqSignal<T>, SynthError> {
    let plan = frame_plan(p, chirps, delta_f)?;
    let wave = switch_schedule(&plan, waveform, sample_rate)?;
    Ok(backscatter_mix(&wave, 1.0, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::css::CodeRate;

    #[test]
    fn plan_for_one_chip_shift_rotates_frequencies() {
        let p = ChirpParams::from_hz(6, 125_000.0, CodeRate::Cr4_5, 1).unwrap();
        let plan = frequency_plan(&p, &[ChirpSymbol::new(1, 6).unwrap()], 1e6).unwrap();
        let f: Vec<f64> = plan.steps().iter().map(|s| s.freq).collect();
        assert_eq!(f.len(), 64);
        assert_eq!(f[0], chip_freq(1, 64, 125_000.0));
        assert_eq!(f[62], chip_freq(63, 64, 125_000.0));
        assert_eq!(f[63], chip_freq(0, 64, 125_000.0));
    }

    #[test]
    fn zero_symbol_plan_is_increasing() {
        let p = ChirpParams::from_hz(7, 125_000.0, CodeRate::Cr4_5, 1).unwrap();
        let plan = frequency_plan(&p, &[ChirpSymbol::new(0, 7).unwrap()], 1e6).unwrap();
        assert!(plan.steps().windows(2).all(|w| w[1].freq > w[0].freq));
        assert!((plan.duration() - p.symbol_duration()).abs() < 1e-15);
    }

    #[test]
    fn offset_must_clear_the_band() {
        let p = ChirpParams::from_hz(7, 125_000.0, CodeRate::Cr4_5, 1).unwrap();
        let s = [ChirpSymbol::new(0, 7).unwrap()];
        assert!(matches!(frequency_plan(&p, &s, 62_500.0), Err(SynthError::InvalidPlan(_))));
    }

    #[test]
    fn level_counts_are_checked() {
        assert_eq!(
            multilevel_exponent(1e3, 1e-2, 64e3, 3),
            Err(SynthError::UnsupportedLevels(3))
        );
        assert_eq!(
            multilevel_exponent(1e3, 1e-2, 64e3, 7),
            Err(SynthError::UnsupportedLevels(7))
        );
        assert!(matches!(
            multilevel_exponent(1e3, 1e-2, 15e3, 4),
            Err(SynthError::SampleRateTooLow { .. })
        ));
    }

    #[test]
    fn square_values_are_two_level_rails() {
        let sig = square_exponent::<f64>(1e3, 1e-2, 64e3).unwrap();
        for s in sig.samples() {
            assert!((s.re.abs() - 1.0).abs() < 1e-12 && (s.im.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn four_level_constellation() {
        let wave = multilevel_exponent(1e3, 1e-2, 64e3, 4).unwrap();
        let rails = [0.9239, 0.3827, -0.3827, -0.9239];
        for v in wave.to_signal::<f64>().samples() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(rails.iter().any(|r| (v.re - r).abs() < 1e-4));
            assert!(rails.iter().any(|r| (v.im - r).abs() < 1e-4));
        }
        let mut seen = [false; 8];
        for s in wave.states().unwrap().iter().take(64) {
            seen[s.index() as usize] = true;
        }
        assert!(seen.iter().all(|&x| x));
        let ratio = SwitchState::new(0).unwrap().value().re / SwitchState::new(1).unwrap().value().re;
        assert!((ratio - (1.0 + std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn constant_plan_matches_single_segment() {
        let steps = vec![PlanStep { duration: 1e-3, freq: 200.0 }; 4];
        let plan = FrequencyPlan::new(steps, 1_000.0, 500.0).unwrap();
        let a = switch_schedule(&plan, Waveform::MultiLevel(4), 64e3).unwrap();
        let b = multilevel_exponent(1_200.0, 4e-3, 64e3, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn counter_carries_across_steps() {
        let p = ChirpParams::from_hz(6, 125_000.0, CodeRate::Cr4_5, 1).unwrap();
        let syms: Vec<_> = [0, 17, 63].iter().map(|&v| ChirpSymbol::new(v, 6).unwrap()).collect();
        let plan = frequency_plan(&p, &syms, 500e3).unwrap();
        let wave = switch_schedule(&plan, Waveform::MultiLevel(4), 16.0 * 562.5e3).unwrap();
        assert!(wave.counter_is_continuous());
        assert_eq!(wave.len(), 3 * 64 * 72);
    }

    #[test]
    fn constant_state_mix_is_a_scaled_constant() {
        let wave = MultiLevelWave {
            waveform: Waveform::MultiLevel(4),
            phases: 8,
            indices: vec![0; 16],
            sample_rate: 1.0,
        };
        let out = backscatter_mix::<f64>(&wave, 0.5, None);
        let expect = SwitchState::new(0).unwrap().value() * 0.5;
        assert!(out.samples().iter().all(|s| (s - expect).norm() < 1e-15));
    }
}
