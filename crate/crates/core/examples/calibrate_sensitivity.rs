//! Re-measures the SNR each spreading factor and code rate needs for 10 %
//! PER, for refreshing the frozen sensitivity table.
//!
//!     cargo run --release -p chirpscatter --example calibrate_sensitivity [packets]

use chirpscatter::channel::per::PER_TARGET;
use chirpscatter::channel::{noise_power_dbm, run_per_experiment, ChannelConfig};
use chirpscatter::css::{Bandwidth, ChirpParams, CodeRate};

fn main() {
    let packets: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let cfg = ChannelConfig {
        rng_seed: 2024,
        ..Default::default()
    };
    for sf in 6..=12u32 {
        let mut row = Vec::new();
        for cr in CodeRate::ALL {
            let p = ChirpParams::new(sf, Bandwidth::Khz125, cr, 1).unwrap();
            let floor = noise_power_dbm(cfg.noise_figure_db, p.bw());
            let guess = -2.5 * (sf as f64 - 6.0) - 6.0;
            let snrs: Vec<f64> = (-10..=6).map(|k| guess + 0.5 * k as f64).collect();
            let rssi: Vec<f64> = snrs.iter().map(|s| floor + s).collect();
            let curve = run_per_experiment(&p, &rssi, &cfg, packets).unwrap();
            let t = curve.threshold(PER_TARGET).map(|r| r - floor);
            row.push(t);
        }
        println!("sf{sf}: {row:?}");
    }
}
