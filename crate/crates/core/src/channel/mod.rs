//! Channel physics between tag and receiver: scaling to the link budget,
//! thermal noise, a single out-of-band tone, and the receiver's channel
//! selectivity.

pub mod budget;
pub mod per;
pub mod scenario;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::css::ChirpParams;
use crate::dsp::fft_filter;
use crate::error::ParamError;
use crate::scalar::Scalar;
use crate::signal::IqSignal;

pub use budget::{backscatter_rssi, free_space_path_loss, LinkBudget};
pub use per::{run_per_experiment, PerCurve, PerPoint};
pub use scenario::{scenario1, scenario2, ScenarioCurve, ScenarioPoint, SensitivityTable};

pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
pub const DEFAULT_NOISE_FIGURE_DB: f64 = 6.0;

/// Thermal noise power over `bandwidth_hz` in dBm.
pub fn noise_power_dbm(noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + noise_figure_db + 10.0 * bandwidth_hz.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Single tone at `offset_hz` from the receiver's channel centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub offset_hz: f64,
    pub power_dbm: f64,
}

/// Receiver channel filter: flat over the LoRa channel, then a straight
/// (in dB) skirt reaching the stopband floor at `transition_factor * bw / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendConfig {
    pub enabled: bool,
    pub transition_factor: f64,
    pub rejection_db: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            transition_factor: 4.0,
            rejection_db: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub noise_figure_db: f64,
    /// Thermal noise on or off; off gives pure scaling.
    pub noise: bool,
    pub interferer: Option<Interferer>,
    pub frontend: FrontendConfig,
    pub rng_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            noise_figure_db: DEFAULT_NOISE_FIGURE_DB,
            noise: true,
            interferer: None,
            frontend: FrontendConfig::default(),
            rng_seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.noise_figure_db >= 0.0 && self.noise_figure_db.is_finite()) {
            return Err(ParamError::invalid("channel.noise_figure_db", "must be >= 0"));
        }
        if let Some(i) = self.interferer {
            if !(i.offset_hz.is_finite() && i.power_dbm.is_finite()) {
                return Err(ParamError::invalid("channel.interferer", "non-finite value"));
            }
        }
        let fe = self.frontend;
        if !(fe.transition_factor > 1.0) {
            return Err(ParamError::invalid("frontend.transition_factor", "must exceed 1"));
        }
        if !(fe.rejection_db >= 0.0) {
            return Err(ParamError::invalid("frontend.rejection_db", "must be >= 0"));
        }
        Ok(())
    }

    /// Checks the interferer is representable at this sample rate.
    pub fn validate_for(&self, p: &ChirpParams) -> Result<(), ParamError> {
        self.validate()?;
        if let Some(i) = self.interferer {
            if i.offset_hz.abs() >= p.sample_rate() / 2.0 {
                return Err(ParamError::invalid(
                    "channel.interferer",
                    format!(
                        "offset {} Hz needs osf above {}",
                        i.offset_hz,
                        (2.0 * i.offset_hz.abs() / p.bw()).ceil()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Scales a unit-power signal to the budget's RSSI and adds the configured
/// impairments, seeded from `cfg.rng_seed`.
pub fn apply_channel<T: Scalar>(sig: &IqSignal<T>, cfg: &ChannelConfig, budget: &LinkBudget) -> IqSignal<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    apply_channel_with(sig, cfg, backscatter_rssi(budget), &mut rng)
}

/// As [`apply_channel`] with an explicit received power and random source.
///
/// Noise is white over the full simulated band (the sample rate) at
/// `-174 dBm/Hz + NF`. The interferer gets a random starting phase.
pub fn apply_channel_with<T: Scalar, R: Rng + ?Sized>(
    sig: &IqSignal<T>,
    cfg: &ChannelConfig,
    rssi_dbm: f64,
    rng: &mut R,
) -> IqSignal<T> {
    let fs = sig.sample_rate();
    let gain = dbm_to_mw(rssi_dbm).sqrt();
    let mut out: Vec<Complex<f64>> = sig
        .samples()
        .iter()
        .map(|s| Complex::new(s.re.as_f64() * gain, s.im.as_f64() * gain))
        .collect();
    if cfg.noise {
        let sigma = (dbm_to_mw(noise_power_dbm(cfg.noise_figure_db, fs)) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for s in &mut out {
            *s += Complex::new(normal.sample(rng), normal.sample(rng));
        }
    }
    if let Some(i) = cfg.interferer {
        let amp = dbm_to_mw(i.power_dbm).sqrt();
        let phase0 = rng.random::<f64>() * std::f64::consts::TAU;
        let step = std::f64::consts::TAU * i.offset_hz / fs;
        for (n, s) in out.iter_mut().enumerate() {
            let ph = (phase0 + step * n as f64).rem_euclid(std::f64::consts::TAU);
            *s += Complex::from_polar(amp, ph);
        }
    }
    IqSignal::from_parts(
        out.into_iter()
            .map(|c| Complex::new(T::lit(c.re), T::lit(c.im)))
            .collect(),
        fs,
    )
}

/// Frontend gain in dB at `freq_hz` from the channel centre.
pub fn frontend_gain_db(freq_hz: f64, bw: f64, fe: &FrontendConfig) -> f64 {
    let f = freq_hz.abs();
    let edge = bw / 2.0;
    let stop = fe.transition_factor * edge;
    if !fe.enabled || f <= edge {
        0.0
    } else if f >= stop {
        -fe.rejection_db
    } else {
        -fe.rejection_db * (f - edge) / (stop - edge)
    }
}

/// Applies the channel filter for `p`; identity when disabled or when the
/// signal is already at the Nyquist rate.
pub fn receiver_frontend<T: Scalar>(sig: &IqSignal<T>, p: &ChirpParams, fe: &FrontendConfig) -> IqSignal<T> {
    if !fe.enabled || p.osf() == 1 {
        return sig.clone();
    }
    let bw = p.bw();
    fft_filter(sig, |f| 10f64.powf(frontend_gain_db(f, bw, fe) / 20.0))
}
