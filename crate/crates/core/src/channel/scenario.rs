//! Deployment geometries: tag moving between source and receiver, and
//! receiver walking away from a tag parked near the source.

use std::fmt::Write as _;

use super::{noise_power_dbm, LinkBudget};
use crate::css::{rate_settings, ChirpParams, CodeRate};

/// SNR (dB, over the channel bandwidth) at which this receiver reaches 10 %
/// PER on 8-byte packets, indexed by `sf - 6` then code rate 4/5..4/8.
///
/// Measured with `examples/calibrate_sensitivity.rs` (200 packets, 0.5 dB
/// steps, 125 kHz) and frozen so rate annotations need no simulation run.
/// Code rate barely matters: without interleaving a symbol error lands
/// several bit errors in one codeword.
const SNR_REQUIRED_DB: [[f64; 4]; 7] = [
    [-6.1, -5.8, -5.7, -5.8],
    [-8.7, -8.6, -8.5, -8.5],
    [-11.3, -11.4, -11.2, -11.2],
    [-14.3, -14.3, -14.0, -14.1],
    [-17.1, -16.9, -17.0, -16.9],
    [-19.8, -19.7, -19.7, -19.7],
    [-22.5, -22.8, -22.5, -22.5],
];

/// Decode sensitivity per rate setting for a given noise figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityTable {
    pub noise_figure_db: f64,
}

impl Default for SensitivityTable {
    fn default() -> Self {
        Self {
            noise_figure_db: super::DEFAULT_NOISE_FIGURE_DB,
        }
    }
}

impl SensitivityTable {
    pub fn snr_required_db(sf: u32, cr: CodeRate) -> f64 {
        let col = CodeRate::ALL.iter().position(|&c| c == cr).expect("code rate listed");
        SNR_REQUIRED_DB[(sf - 6) as usize][col]
    }

    pub fn sensitivity_dbm(&self, p: &ChirpParams) -> f64 {
        noise_power_dbm(self.noise_figure_db, p.bw()) + Self::snr_required_db(p.sf(), p.cr())
    }

    /// Fastest setting whose sensitivity is at or below `rssi_dbm`.
    pub fn best_rate(&self, rssi_dbm: f64) -> Option<ChirpParams> {
        rate_settings()
            .into_iter()
            .filter(|p| self.sensitivity_dbm(p) <= rssi_dbm)
            .max_by(|a, b| a.bit_rate().total_cmp(&b.bit_rate()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPoint {
    pub d1_m: f64,
    pub d2_m: f64,
    pub rssi_dbm: f64,
    pub best_rate: Option<ChirpParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCurve {
    /// Which distance the `x` column carries.
    pub x_is_d1: bool,
    pub points: Vec<ScenarioPoint>,
}

impl ScenarioCurve {
    pub fn x(&self, p: &ScenarioPoint) -> f64 {
        if self.x_is_d1 {
            p.d1_m
        } else {
            p.d2_m
        }
    }

    /// `x,value,n` (n = 1 budget evaluation) plus the other distance and
    /// the fastest decodable rate.
    pub fn to_csv(&self, header: &[(String, String)]) -> String {
        let mut out = String::from("# config\n");
        for (k, v) in header {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out.push_str("x,value,n,d1_m,d2_m,best_sf,best_bw_hz,best_cr,best_bps\n");
        for p in &self.points {
            let _ = write!(out, "{},{},1,{},{},", self.x(p), p.rssi_dbm, p.d1_m, p.d2_m);
            match p.best_rate {
                Some(r) => {
                    let _ = writeln!(out, "{},{},{},{}", r.sf(), r.bw(), r.cr(), r.bit_rate());
                }
                None => out.push_str(",,,\n"),
            }
        }
        out
    }
}

fn point(template: &LinkBudget, d1: f64, d2: f64, table: &SensitivityTable) -> ScenarioPoint {
    let rssi = template.with_distances(d1, d2).rssi_dbm();
    ScenarioPoint {
        d1_m: d1,
        d2_m: d2,
        rssi_dbm: rssi,
        best_rate: table.best_rate(rssi),
    }
}

/// Tag at `positions` evenly spaced points strictly between source and
/// receiver, `d_total` apart.
pub fn scenario1(template: &LinkBudget, d_total: f64, positions: usize, table: &SensitivityTable) -> ScenarioCurve {
    let points = (1..=positions)
        .map(|i| {
            let d1 = d_total * i as f64 / (positions + 1) as f64;
            point(template, d1, d_total - d1, table)
        })
        .collect();
    ScenarioCurve {
        x_is_d1: true,
        points,
    }
}

/// Tag fixed `d1` from the source; receiver at each of `d2`.
pub fn scenario2(template: &LinkBudget, d1: f64, d2: &[f64], table: &SensitivityTable) -> ScenarioCurve {
    ScenarioCurve {
        x_is_d1: false,
        points: d2.iter().map(|&d| point(template, d1, d, table)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario1_is_symmetric_with_midpoint_minimum() {
        let b = LinkBudget::calibrated(1.0, 1.0);
        let c = scenario1(&b, 475.0, 19, &SensitivityTable::default());
        let r: Vec<f64> = c.points.iter().map(|p| p.rssi_dbm).collect();
        for i in 0..r.len() {
            assert!((r[i] - r[r.len() - 1 - i]).abs() < 1e-9);
        }
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, r[9]);
        assert!((c.points[9].d1_m - 237.5).abs() < 1e-9);
    }

    #[test]
    fn faster_rates_near_the_ends() {
        let b = LinkBudget::calibrated(1.0, 1.0);
        let c = scenario1(&b, 475.0, 9, &SensitivityTable::default());
        let edge = c.points[0].best_rate.unwrap().bit_rate();
        let mid = c.points[4].best_rate.unwrap().bit_rate();
        assert!(edge > mid);
    }

    #[test]
    fn csv_columns() {
        let b = LinkBudget::free_space(5.0, 1.0);
        let c = scenario2(&b, 5.0, &[100.0, 1e9], &SensitivityTable::default());
        let csv = c.to_csv(&[("scenario".into(), "2".into())]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "# scenario = 2");
        assert!(lines[2].starts_with("x,value,n,"));
        assert!(lines[3].starts_with("100,"));
        assert!(lines[4].ends_with(",,,"));
    }
}
