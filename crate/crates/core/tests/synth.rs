use std::f64::consts::PI;

use chirpscatter::channel::{receiver_frontend, FrontendConfig};
use chirpscatter::css::{ChirpParams, CodeRate};
use chirpscatter::frame::{build_frame, parse_frame, LoraFrame};
use chirpscatter::synth::{
    backscatter_mix, multilevel_exponent, spectrum, square_exponent, switch_schedule, synthesize_frame,
    frame_plan, SwitchSettle, Waveform,
};
use num_complex::Complex;

const DELTA_F: f64 = 1e3;
const FS: f64 = 64e3;

/// Fourier coefficient of order `h` of one period of a `phases`-state
/// staircase held for `samples` samples per state, by direct summation.
fn staircase_coefficient(phases: usize, samples: usize, amplitude: f64, h: i32) -> Complex<f64> {
    let period = phases * samples;
    let mut acc = Complex::new(0.0, 0.0);
    for n in 0..period {
        let k = n / samples;
        let v = Complex::from_polar(amplitude, (2 * k + 1) as f64 * PI / phases as f64);
        acc += v * Complex::from_polar(1.0, -2.0 * PI * h as f64 * n as f64 / period as f64);
    }
    acc / period as f64
}

fn oracle_db(phases: usize, h: i32) -> f64 {
    let s = (FS / DELTA_F) as usize / phases;
    let c1 = staircase_coefficient(phases, s, 1.0, 1).norm();
    20.0 * (staircase_coefficient(phases, s, 1.0, h).norm() / c1).log10()
}

#[test]
fn square_harmonics_match_direct_fourier_sum() {
    let sig = square_exponent::<f64>(DELTA_F, 1.0, FS).unwrap();
    let r = spectrum(&sig, DELTA_F).unwrap();
    for h in [-3, 5, -7, 9] {
        let got = r.level(h).unwrap();
        assert!((got - oracle_db(4, h)).abs() < 0.05, "order {h}: {got} vs {}", oracle_db(4, h));
    }
    // Sampled closed form sin(pi/PS)/sin(h pi/PS).
    let closed = |h: f64| 20.0 * ((PI / 64.0).sin() / (h * PI / 64.0).sin()).abs().log10();
    assert!((r.level(-3).unwrap() - closed(3.0)).abs() < 0.05);
    assert!((r.level(5).unwrap() - closed(5.0)).abs() < 0.05);
    for h in [-1, 3, -5] {
        assert!(r.level(h).unwrap() < -60.0, "order {h}");
    }
}

#[test]
fn four_level_keeps_only_one_mod_eight() {
    let sig = multilevel_exponent(DELTA_F, 1.0, FS, 4).unwrap().to_signal::<f64>();
    let r = spectrum(&sig, DELTA_F).unwrap();
    for (&h, &db) in &r.harmonic_levels {
        if (h - 1).rem_euclid(8) == 0 && h != 1 {
            assert!((db - oracle_db(8, h)).abs() < 0.05, "order {h}: {db} vs {}", oracle_db(8, h));
        } else if h != 1 {
            assert!(db < -60.0, "order {h}: {db}");
        }
    }
}

#[test]
fn more_levels_push_the_residue_out() {
    // 120 samples per period keeps every state an integer number of samples.
    for (levels, first) in [(5, [-9, 11]), (6, [-11, 13])] {
        let sig = multilevel_exponent(DELTA_F, 1.0, 120e3, levels).unwrap().to_signal::<f64>();
        let r = spectrum(&sig, DELTA_F).unwrap();
        for h in [-3, 3, -5, 5, -7, 7] {
            assert!(r.level(h).unwrap() < -60.0, "levels {levels} order {h}");
        }
        for h in first {
            assert!(r.level(h).unwrap() > -25.0, "levels {levels} order {h}");
        }
    }
}

#[test]
fn fundamental_gain_matches_sinc() {
    let wave = multilevel_exponent(DELTA_F, 0.064, FS, 4).unwrap();
    let c1 = staircase_coefficient(8, 8, 1.0, 1).norm();
    // Sampled staircase: sin(pi/8) / (8 sin(pi/64)) against the ideal sinc.
    assert!((wave.fundamental_amplitude() - (PI / 8.0).sin() / (PI / 8.0)).abs() < 1e-12);
    assert!((c1 - wave.fundamental_amplitude()).abs() < 2e-3);
}

#[test]
fn synthesized_frame_decodes_after_downconversion() {
    let p = ChirpParams::from_hz(7, 125_000.0, CodeRate::Cr4_6, 1).unwrap();
    let delta_f = 1e6;
    let osf = 136;
    let p_rx = p.with_osf(osf).unwrap();
    let frame = LoraFrame::new(p, b"backscatter".to_vec(), true).unwrap();
    let chirps = build_frame(&frame);
    for waveform in [Waveform::MultiLevel(4), Waveform::Square] {
        let mut sig = synthesize_frame::<f32>(&chirps, &p, delta_f, waveform, p_rx.sample_rate()).unwrap();
        sig.shift_frequency(-delta_f);
        let rx = receiver_frontend(&sig, &p_rx, &FrontendConfig::default());
        let parsed = parse_frame(&rx, &p_rx, &frame.format()).unwrap();
        assert_eq!(parsed.payload, frame.payload, "{waveform:?}");
        assert!(parsed.crc_ok);
    }
}

#[test]
fn settle_smooths_transitions() {
    let p = ChirpParams::from_hz(6, 125_000.0, CodeRate::Cr4_5, 1).unwrap();
    let frame = LoraFrame::new(p, vec![1, 2], false).unwrap();
    let plan = frame_plan(&p, &build_frame(&frame), 500e3).unwrap();
    let wave = switch_schedule(&plan, Waveform::MultiLevel(4), 16.0 * 562.5e3).unwrap();
    let hard = backscatter_mix::<f64>(&wave, 1.0, None);
    let soft = backscatter_mix::<f64>(&wave, 1.0, Some(SwitchSettle { tau_s: 20e-9 }));
    let jump = |s: &[Complex<f64>]| s.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
    assert!(jump(soft.samples()) < jump(hard.samples()));
    assert_eq!(soft.len(), hard.len());
}
