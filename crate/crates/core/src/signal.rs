//! Complex baseband sample buffers and their on-disk format.
//!
//! Files hold little-endian `f32` I/Q pairs with no header. The sample rate
//! lives in a sidecar text file next to the data (`<data path>.meta`) holding
//! one `sample_rate_hz=<float>` line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;

use crate::error::SignalError;
use crate::scalar::Scalar;

/// Complex baseband samples at a fixed sample rate.
///
/// Amplitudes are in units of sqrt(mW): `|x|^2` averaged over a buffer is its
/// power in milliwatts. Signals produced by the modulators have unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal<T> {
    samples: Vec<Complex<T>>,
    sample_rate: f64,
}

impl<T: Scalar> IqSignal<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_rate: f64) -> Result<Self, SignalError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SignalError::SampleRate(sample_rate));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a signal from samples the caller knows to be finite.
    pub(crate) fn from_parts(samples: Vec<Complex<T>>, sample_rate: f64) -> Self {
        debug_assert!(sample_rate > 0.0);
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self::from_parts(vec![Complex::new(T::zero(), T::zero()); len], sample_rate)
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex<T>> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Mean power, `mean |x|^2`.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| s.norm_sqr().as_f64()).sum();
        sum / self.samples.len() as f64
    }

    pub fn scale(&mut self, gain: T) {
        for s in &mut self.samples {
            *s = *s * gain;
        }
    }

    /// Multiplies by `exp(j 2 pi f t)`, moving the spectrum up by `freq_hz`.
    pub fn shift_frequency(&mut self, freq_hz: f64) {
        let step = 2.0 * std::f64::consts::PI * freq_hz / self.sample_rate;
        for (n, s) in self.samples.iter_mut().enumerate() {
            // Reduce in f64 so long f32 buffers keep an accurate phase.
            let phase = (step * n as f64).rem_euclid(2.0 * std::f64::consts::PI);
            *s = *s * Complex::from_polar(T::one(), T::lit(phase));
        }
    }

    /// Adds `other` sample-by-sample starting at `offset`, growing as needed.
    pub fn add_at(&mut self, other: &IqSignal<T>, offset: usize) {
        let end = offset + other.len();
        if end > self.samples.len() {
            self.samples
                .resize(end, Complex::new(T::zero(), T::zero()));
        }
        for (dst, src) in self.samples[offset..end].iter_mut().zip(&other.samples) {
            *dst = *dst + *src;
        }
    }

    pub fn extend_from(&mut self, other: &[Complex<T>]) {
        self.samples.extend_from_slice(other);
    }

    pub fn slice(&self, start: usize, end: usize) -> IqSignal<T> {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Self::from_parts(self.samples[start..end].to_vec(), self.sample_rate)
    }

    /// Keeps every `factor`-th sample, starting at `phase`.
    pub fn pick_every(&self, factor: usize, phase: usize) -> IqSignal<T> {
        assert!(factor >= 1);
        let samples = self.samples.iter().skip(phase).step_by(factor).copied().collect();
        Self::from_parts(samples, self.sample_rate / factor as f64)
    }

    pub fn write_cf32(&self, path: impl AsRef<Path>) -> Result<(), SignalError> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.samples.len() * 8);
        for s in &self.samples {
            bytes.extend_from_slice(&(s.re.as_f64() as f32).to_le_bytes());
            bytes.extend_from_slice(&(s.im.as_f64() as f32).to_le_bytes());
        }
        write_atomic(path, &bytes)?;
        let meta = format!("sample_rate_hz={}\n", self.sample_rate);
        write_atomic(&sidecar_path(path), meta.as_bytes())?;
        Ok(())
    }

    pub fn read_cf32(path: impl AsRef<Path>) -> Result<Self, SignalError> {
        let path = path.as_ref();
        let meta = fs::read_to_string(sidecar_path(path))?;
        let sample_rate = parse_sidecar(&meta)?;
        let bytes = fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(SignalError::Io(io::Error::new(
                io::ErrorKind::InvalidData,
                "cf32 file length is not a multiple of 8 bytes",
            )));
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex::new(T::lit(re as f64), T::lit(im as f64))
            })
            .collect();
        Self::new(samples, sample_rate)
    }
}

/// Path of the sample-rate sidecar for a cf32 data file.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

fn parse_sidecar(text: &str) -> Result<f64, SignalError> {
    for line in text.lines() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("sample_rate_hz=") {
            let rate: f64 = v
                .trim()
                .parse()
                .map_err(|_| SignalError::Sidecar(format!("bad sample rate {v:?}")))?;
            if !(rate.is_finite() && rate > 0.0) {
                return Err(SignalError::SampleRate(rate));
            }
            return Ok(rate);
        }
    }
    Err(SignalError::Sidecar("missing sample_rate_hz line".into()))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = match dir {
        Some(d) => d.join(tmp_name),
        None => PathBuf::from(tmp_name),
    };
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rate_and_nan() {
        assert!(IqSignal::<f64>::new(vec![], 0.0).is_err());
        let bad = vec![Complex::new(f64::NAN, 0.0)];
        assert!(matches!(
            IqSignal::new(bad, 1.0),
            Err(SignalError::NonFinite(0))
        ));
    }

    #[test]
    fn cf32_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.cf32");
        let sig = IqSignal::new(
            vec![Complex::new(0.5f64, -0.25), Complex::new(1.0, 2.0)],
            125_000.0,
        )
        .unwrap();
        sig.write_cf32(&path).unwrap();
        let raw = fs::read(&path).unwrap();
        assert_eq!(raw.len(), 16);
        assert_eq!(&raw[0..4], &0.5f32.to_le_bytes());
        assert_eq!(&raw[4..8], &(-0.25f32).to_le_bytes());
        let meta = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert_eq!(meta, "sample_rate_hz=125000\n");
        let back = IqSignal::<f64>::read_cf32(&path).unwrap();
        assert_eq!(back, sig);
    }

    #[test]
    fn frequency_shift_moves_dc_to_tone() {
        let mut sig = IqSignal::<f64>::new(vec![Complex::new(1.0, 0.0); 8], 8.0).unwrap();
        sig.shift_frequency(1.0);
        let s = sig.samples();
        assert!((s[2] - Complex::new(0.0, 1.0)).norm() < 1e-12);
        assert!((s[4] - Complex::new(-1.0, 0.0)).norm() < 1e-12);
    }
}
