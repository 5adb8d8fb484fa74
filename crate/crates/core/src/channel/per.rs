//! Packet error rate against received power.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{apply_channel_with, receiver_frontend, ChannelConfig};
use crate::css::{Bandwidth, ChirpParams, CodeRate};
use crate::error::ParamError;
use crate::frame::{frame_signal, parse_frame, LoraFrame};
use crate::signal::IqSignal;

/// Payload bytes per test packet; a two-byte CRC follows.
pub const PER_PAYLOAD_LEN: usize = 8;
/// PER at which a curve's decode threshold is read.
pub const PER_TARGET: f64 = 0.1;
pub const MIN_PACKETS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerPoint {
    pub rssi_dbm: f64,
    pub per: f64,
    pub n_packets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerCurve {
    pub label: String,
    pub points: Vec<PerPoint>,
}

impl PerCurve {
    /// Lowest RSSI from which the PER stays at or below `target`,
    /// interpolated linearly between the bracketing points. `None` when no
    /// point reaches the target or the lowest point already does.
    pub fn threshold(&self, target: f64) -> Option<f64> {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.rssi_dbm.total_cmp(&b.rssi_dbm));
        let i = pts.iter().rposition(|p| p.per > target)?;
        let (lo, hi) = (pts[i], *pts.get(i + 1)?);
        let t = (lo.per - target) / (lo.per - hi.per);
        Some(lo.rssi_dbm + t * (hi.rssi_dbm - lo.rssi_dbm))
    }

    /// True when no point exceeds an earlier (lower-RSSI) one by more than
    /// `sigmas` binomial standard deviations.
    pub fn is_monotone(&self, sigmas: f64) -> bool {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.rssi_dbm.total_cmp(&b.rssi_dbm));
        pts.windows(2).all(|w| {
            let sd = |p: &PerPoint| (p.per * (1.0 - p.per) / p.n_packets as f64).sqrt();
            let tol = sigmas * (sd(&w[0]).powi(2) + sd(&w[1]).powi(2)).sqrt();
            w[1].per <= w[0].per + tol.max(1.0 / w[1].n_packets as f64)
        })
    }
}

/// The seven configurations of the wired PER test, fastest first.
pub fn paper_rate_configs() -> [ChirpParams; 7] {
    use Bandwidth::*;
    use CodeRate::*;
    [
        (7, Khz500, Cr4_5),
        (8, Khz250, Cr4_5),
        (9, Khz125, Cr4_5),
        (10, Khz125, Cr4_5),
        (11, Khz125, Cr4_5),
        (12, Khz62_5, Cr4_8),
        (12, Khz31_25, Cr4_8),
    ]
    .map(|(sf, bw, cr)| ChirpParams::new(sf, bw, cr, 1).expect("valid table entry"))
}

/// Independent stream for one packet at one sweep point, so results do not
/// depend on evaluation order.
pub fn packet_rng(master: u64, point: usize, packet: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((point as u64) << 32) | packet as u64);
    rng
}

/// Sends `n_packets` random 8-byte frames per RSSI point through the channel
/// and receiver. A packet counts as lost unless it parses with a good CRC
/// and the original payload.
pub fn run_per_experiment(
    p: &ChirpParams,
    rssi_dbm: &[f64],
    cfg: &ChannelConfig,
    n_packets: usize,
) -> Result<PerCurve, ParamError> {
    if n_packets < MIN_PACKETS {
        return Err(ParamError::invalid(
            "n_packets",
            format!("{n_packets} below the minimum of {MIN_PACKETS}"),
        ));
    }
    cfg.validate_for(p)?;
    let points = rssi_dbm
        .iter()
        .enumerate()
        .map(|(i, &rssi)| {
            let lost = (0..n_packets)
                .filter(|&k| !packet_survives(p, rssi, cfg, &mut packet_rng(cfg.rng_seed, i, k)))
                .count();
            PerPoint {
                rssi_dbm: rssi,
                per: lost as f64 / n_packets as f64,
                n_packets,
            }
        })
        .collect();
    Ok(PerCurve {
        label: p.to_string(),
        points,
    })
}

fn packet_survives(p: &ChirpParams, rssi_dbm: f64, cfg: &ChannelConfig, rng: &mut ChaCha8Rng) -> bool {
    let mut payload = vec![0u8; PER_PAYLOAD_LEN];
    rng.fill(&mut payload[..]);
    let frame = LoraFrame::new(*p, payload, true).expect("valid test frame");
    let tx = frame_signal::<f32>(&frame);
    // Unknown arrival time: up to one symbol of silence before the frame,
    // and one symbol after.
    let sps = p.samples_per_symbol();
    let lead = rng.random_range(0..p.chips()) * p.osf() as usize;
    let mut air = IqSignal::<f32>::zeros(lead, p.sample_rate());
    air.extend_from(tx.samples());
    air.extend_from(&vec![Default::default(); sps]);
    let rx = apply_channel_with(&air, cfg, rssi_dbm, rng);
    let rx = receiver_frontend(&rx, p, &cfg.frontend);
    match parse_frame(&rx, p, &frame.format()) {
        Ok(parsed) => parsed.crc_ok && parsed.payload == frame.payload,
        Err(_) => false,
    }
}

/// `x,value,n` rows for several curves under one `# config` header.
pub fn curves_to_csv(header: &[(String, String)], curves: &[PerCurve]) -> String {
    let mut out = String::from("# config\n");
    for (k, v) in header {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for c in curves {
        let _ = writeln!(out, "# curve={}", c.label);
        out.push_str("x,value,n\n");
        for p in &c.points {
            let _ = writeln!(out, "{},{},{}", p.rssi_dbm, p.per, p.n_packets);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pts: &[(f64, f64)]) -> PerCurve {
        PerCurve {
            label: "t".into(),
            points: pts
                .iter()
                .map(|&(rssi_dbm, per)| PerPoint {
                    rssi_dbm,
                    per,
                    n_packets: 1000,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_interpolates() {
        let c = curve(&[(-130.0, 1.0), (-129.0, 0.5), (-128.0, 0.0), (-127.0, 0.0)]);
        assert!((c.threshold(0.1).unwrap() + 128.2).abs() < 1e-12);
        assert_eq!(curve(&[(-1.0, 0.0)]).threshold(0.1), None);
        assert_eq!(curve(&[(-1.0, 0.5)]).threshold(0.1), None);
    }

    #[test]
    fn late_bump_moves_threshold_up() {
        let c = curve(&[(-130.0, 1.0), (-129.0, 0.05), (-128.0, 0.2), (-127.0, 0.0)]);
        assert!((c.threshold(0.1).unwrap() + 127.5).abs() < 1e-12);
        assert!(!c.is_monotone(2.0));
    }

    #[test]
    fn table_is_ordered_by_rate() {
        let rates: Vec<f64> = paper_rate_configs().iter().map(|p| p.bit_rate()).collect();
        assert!(rates.windows(2).all(|w| w[0] > w[1]));
        assert!((rates[0] - 21_875.0).abs() < 1e-9);
        assert!((rates[6] - 45.776).abs() < 1e-3);
    }

    #[test]
    fn too_few_packets_rejected() {
        let p = paper_rate_configs()[0];
        let err = run_per_experiment(&p, &[-100.0], &ChannelConfig::default(), 10).unwrap_err();
        assert!(err.to_string().starts_with("n_packets"));
    }
}
