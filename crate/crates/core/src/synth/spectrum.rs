//! Harmonic audit of a synthesized waveform.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::SynthError;
use crate::dsp::{welch, Psd, Window};
use crate::scalar::Scalar;
use crate::signal::{write_atomic, IqSignal};

pub const MIN_SPECTRUM_LEN: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Welch segment length; at least [`MIN_SPECTRUM_LEN`].
    pub nperseg: usize,
    /// Half-width of the search window around each harmonic; `delta_f / 2`
    /// when unset.
    pub half_width: Option<f64>,
    /// Largest harmonic order reported on each side of the carrier.
    pub max_order: u32,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            nperseg: MIN_SPECTRUM_LEN,
            half_width: None,
            max_order: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub psd: Psd,
    pub delta_f: f64,
    /// Peak level around `n * delta_f` relative to the `+delta_f` peak, in
    /// dB, keyed by signed order. Orders whose window falls outside the
    /// Nyquist band are omitted.
    pub harmonic_levels: BTreeMap<i32, f64>,
}

impl SpectrumReport {
    pub fn level(&self, order: i32) -> Option<f64> {
        self.harmonic_levels.get(&order).copied()
    }

    /// Power in dB relative to the `+delta_f` peak, one row per bin.
    pub fn to_csv(&self) -> String {
        let reference = self.reference_power();
        let mut out = String::new();
        for (n, db) in &self.harmonic_levels {
            let _ = writeln!(out, "# harmonic,{n},{db:.3}");
        }
        out.push_str("freq_hz,power_db\n");
        for (f, p) in self.psd.freqs.iter().zip(&self.psd.power) {
            let db = 10.0 * (p.max(1e-300) / reference).log10();
            let _ = writeln!(out, "{f:.3},{db:.3}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    fn reference_power(&self) -> f64 {
        let w = self.delta_f / 2.0;
        self.psd.peak_in(self.delta_f - w, self.delta_f + w).max(1e-300)
    }
}

pub fn spectrum<T: Scalar>(sig: &IqSignal<T>, delta_f: f64) -> Result<SpectrumReport, SynthError> {
    spectrum_with(sig, delta_f, SpectrumOptions::default())
}

pub fn spectrum_with<T: Scalar>(
    sig: &IqSignal<T>,
    delta_f: f64,
    opts: SpectrumOptions,
) -> Result<SpectrumReport, SynthError> {
    let nperseg = opts.nperseg.max(MIN_SPECTRUM_LEN);
    if sig.len() < nperseg {
        return Err(SynthError::SignalTooShort(sig.len()));
    }
    let psd = welch(sig, nperseg, Window::BlackmanHarris);
    let w = opts.half_width.unwrap_or(delta_f / 2.0);
    let nyquist = sig.sample_rate() / 2.0;
    let reference = psd.peak_in(delta_f - w, delta_f + w).max(1e-300);
    let mut harmonic_levels = BTreeMap::new();
    let max = opts.max_order as i32;
    for n in (-max..=max).filter(|&n| n != 0) {
        let centre = n as f64 * delta_f;
        if centre.abs() + w > nyquist {
            continue;
        }
        let peak = psd.peak_in(centre - w, centre + w).max(1e-300);
        harmonic_levels.insert(n, 10.0 * (peak / reference).log10());
    }
    Ok(SpectrumReport {
        psd,
        delta_f,
        harmonic_levels,
    })
}
