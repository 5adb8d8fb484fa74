//! Spectral helpers: FFT-domain filtering and Welch power spectra.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;
use crate::signal::IqSignal;

/// Signed frequency of FFT bin `k` for an `n`-point transform at `fs`.
pub fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k >= n.div_ceil(2) { k as f64 - n as f64 } else { k as f64 };
    k * fs / n as f64
}

/// Applies a zero-phase amplitude response `gain(freq_hz)` by circular
/// filtering over the whole buffer.
pub fn fft_filter<T: Scalar>(sig: &IqSignal<T>, gain: impl Fn(f64) -> f64) -> IqSignal<T> {
    let n = sig.len();
    if n == 0 {
        return sig.clone();
    }
    let fs = sig.sample_rate();
    let mut planner = FftPlanner::<T>::new();
    let mut buf = sig.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    let norm = 1.0 / n as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        *b = *b * T::lit(gain(bin_freq(k, n, fs)) * norm);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    IqSignal::from_parts(buf, fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    /// 4-term Blackman-Harris, about -92 dB sidelobes.
    BlackmanHarris,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI;
        (0..n)
            .map(|i| {
                let x = tau * i as f64 / n as f64;
                match self {
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::BlackmanHarris => {
                        0.35875 - 0.48829 * x.cos() + 0.14128 * (2.0 * x).cos()
                            - 0.01168 * (3.0 * x).cos()
                    }
                }
            })
            .collect()
    }
}

/// Two-sided averaged power spectrum, DC-centred.
///
/// `power[k]` uses amplitude-spectrum scaling: a complex tone of amplitude
/// `A` centred on a bin reads `A^2`. Broadband power over a band is the sum
/// of bins divided by [`Psd::enbw_bins`].
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    /// Equivalent noise bandwidth of the window, in bins.
    pub enbw_bins: f64,
    pub resolution_hz: f64,
}

impl Psd {
    /// Integrated power of broadband content in `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let sum: f64 = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p)
            .sum();
        sum / self.enbw_bins
    }

    /// Largest bin power in `[lo, hi]`.
    pub fn peak_in(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max)
    }
}

/// Welch estimate with 50 % overlap. Segments shorter than `nperseg` are
/// dropped, so the signal must hold at least one full segment.
pub fn welch<T: Scalar>(sig: &IqSignal<T>, nperseg: usize, window: Window) -> Psd {
    assert!(nperseg > 0 && sig.len() >= nperseg, "signal shorter than one segment");
    let w = window.coefficients(nperseg);
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nperseg);
    let step = (nperseg / 2).max(1);
    let mut acc = vec![0.0f64; nperseg];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nperseg];
    let x = sig.samples();
    let mut start = 0;
    while start + nperseg <= x.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            let s = x[start + i];
            *b = Complex::new(s.re.as_f64() * w[i], s.im.as_f64() * w[i]);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (segments as f64 * sum_w * sum_w);
    let fs = sig.sample_rate();
    let half = nperseg / 2;
    let mut freqs = Vec::with_capacity(nperseg);
    let mut power = Vec::with_capacity(nperseg);
    // reorder to ascending frequency
    for i in 0..nperseg {
        let k = (i + nperseg - half) % nperseg;
        freqs.push(bin_freq(k, nperseg, fs));
        power.push(acc[k] * scale);
    }
    Psd {
        freqs,
        power,
        enbw_bins: nperseg as f64 * sum_w2 / (sum_w * sum_w),
        resolution_hz: fs / nperseg as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, n: usize, amp: f64) -> IqSignal<f64> {
        let mut s = IqSignal::new(vec![Complex::new(amp, 0.0); n], fs).unwrap();
        s.shift_frequency(freq);
        s
    }

    #[test]
    fn on_bin_tone_reads_its_power() {
        let sig = tone(1000.0, 16_384.0, 16_384, 0.5);
        for window in [Window::Hann, Window::BlackmanHarris] {
            let psd = welch(&sig, 4096, window);
            let peak = psd.peak_in(900.0, 1100.0);
            assert!((peak - 0.25).abs() < 1e-9, "{window:?} {peak}");
        }
    }

    #[test]
    fn filter_removes_out_of_band_tone() {
        let mut sig = tone(100.0, 1024.0, 1024, 1.0);
        sig.add_at(&tone(300.0, 1024.0, 1024, 1.0), 0);
        let out = fft_filter(&sig, |f| if f.abs() < 200.0 { 1.0 } else { 0.0 });
        let expect = tone(100.0, 1024.0, 1024, 1.0);
        for (a, b) in out.samples().iter().zip(expect.samples()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn bin_frequencies_are_signed() {
        assert_eq!(bin_freq(0, 8, 8.0), 0.0);
        assert_eq!(bin_freq(3, 8, 8.0), 3.0);
        assert_eq!(bin_freq(4, 8, 8.0), -4.0);
        assert_eq!(bin_freq(7, 8, 8.0), -1.0);
    }
}
