//! US 902-928 MHz channel plans and single-tone hop sequences.
//!
//! Only the carrier source hops. The tag applies the same offset on every
//! hop, so the source tone sits at `center - delta_f` for each channel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::css::Bandwidth;
use super::FrameError;

pub const BAND_LOW_HZ: f64 = 902e6;
pub const BAND_HIGH_HZ: f64 = 928e6;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    pub band_start: f64,
    pub channel_count: usize,
    pub spacing: f64,
}

impl ChannelPlan {
    pub fn center(&self, k: usize) -> f64 {
        self.band_start + k as f64 * self.spacing
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.channel_count).map(|k| self.center(k)).collect()
    }
}

/// 64 channels of 125 kHz from 902.3 MHz every 200 kHz, or 8 channels of
/// 500 kHz from 903.0 MHz every 1.6 MHz.
pub fn channel_plan(bw: Bandwidth) -> Result<ChannelPlan, FrameError> {
    match bw {
        Bandwidth::Khz125 => Ok(ChannelPlan {
            band_start: 902.3e6,
            channel_count: 64,
            spacing: 200e3,
        }),
        Bandwidth::Khz500 => Ok(ChannelPlan {
            band_start: 903.0e6,
            channel_count: 8,
            spacing: 1.6e6,
        }),
        other => Err(FrameError::UnsupportedBandwidth(other.hz())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopSequence {
    /// Channel indices in hop order.
    pub channel_order: Vec<usize>,
    /// Source tone per hop, `centers[channel_order[i]] - delta_f`.
    pub tone_freqs: Vec<f64>,
    pub delta_f: f64,
    centers: Vec<f64>,
}

impl HopSequence {
    /// Channel center reached by the backscattered signal on hop `i`.
    pub fn backscatter_center(&self, i: usize) -> f64 {
        self.tone_freqs[i] + self.delta_f
    }

    pub fn channel_center(&self, i: usize) -> f64 {
        self.centers[self.channel_order[i]]
    }

    pub fn len(&self) -> usize {
        self.channel_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_order.is_empty()
    }
}

/// Seeded pseudo-random permutation over every channel of `plan`.
pub fn hop_sequence(plan: &ChannelPlan, delta_f: f64, seed: u64) -> HopSequence {
    let mut order: Vec<usize> = (0..plan.channel_count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let centers = plan.centers();
    let tone_freqs = order.iter().map(|&k| centers[k] - delta_f).collect();
    HopSequence {
        channel_order: order,
        tone_freqs,
        delta_f,
        centers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_125k() {
        let plan = channel_plan(Bandwidth::Khz125).unwrap();
        let c = plan.centers();
        assert_eq!(c.len(), 64);
        assert_eq!(c[0], 902.3e6);
        assert!((c[63] - 914.9e6).abs() < 1e-3);
        assert!(c.iter().all(|&f| (BAND_LOW_HZ..=BAND_HIGH_HZ).contains(&f)));
    }

    #[test]
    fn plan_500k() {
        let c = channel_plan(Bandwidth::Khz500).unwrap().centers();
        assert_eq!(c.len(), 8);
        assert!((c[1] - c[0] - 1.6e6).abs() < 1e-3);
        assert!(c.iter().all(|&f| (BAND_LOW_HZ..=BAND_HIGH_HZ).contains(&f)));
    }

    #[test]
    fn other_bandwidths_rejected() {
        assert!(channel_plan(Bandwidth::Khz31_25).is_err());
    }

    #[test]
    fn tones_sit_delta_f_below_each_center() {
        let plan = channel_plan(Bandwidth::Khz125).unwrap();
        let hops = hop_sequence(&plan, 3e6, 7);
        let mut seen = hops.channel_order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..64).collect::<Vec<_>>());
        for i in 0..hops.len() {
            assert_eq!(hops.backscatter_center(i), hops.channel_center(i));
        }
        let first = hops.channel_order.iter().position(|&k| k == 0).unwrap();
        assert_eq!(hops.tone_freqs[first], 899.3e6);
        assert_eq!(hop_sequence(&plan, 3e6, 7), hops);
        assert_ne!(hop_sequence(&plan, 3e6, 8).channel_order, hops.channel_order);
    }
}
