//! Link layer driven by the RF source: a TDMA round opened by an on-off
//! keyed sync pattern, one slot per device, and the tone switched on only
//! for slots whose device has something to send.
//!
//! Devices on different channels, or on different spreading factors, can
//! also transmit at once; [`simulate_concurrent`] measures what that costs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{
    apply_channel_with, dbm_to_mw, noise_power_dbm, receiver_frontend, ChannelConfig, FrontendConfig,
    LinkBudget,
};
use crate::channel::per::{packet_rng, PER_PAYLOAD_LEN};
use crate::css::ChirpParams;
use crate::error::ParamError;
use crate::frame::{frame_signal, parse_frame, LoraFrame};
use crate::signal::IqSignal;

/// Weakest tone the wake-up energy detector can see.
pub const DETECTOR_FLOOR_DBM: f64 = -71.0;
/// Largest clock error of a device, as a fraction of the slot length.
pub const MAX_CLOCK_DRIFT: f64 = 1e-3;
pub const MIN_SYNC_BITS: usize = 8;
pub const MAX_SYNC_MISMATCH: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MacError {
    #[error("slot of {slot_s} s cannot hold device {device}'s {frame_s} s frame plus drift guard")]
    ScheduleInfeasible { device: u32, frame_s: f64, slot_s: f64 },
    #[error("slot {0} assigned twice")]
    DuplicateSlot(usize),
    #[error("device {0} has no slot or no state")]
    UnknownDevice(u32),
    #[error("sync pattern of {0} bits is shorter than 8")]
    SyncPatternTooShort(usize),
    #[error("devices {0} and {1} share both channel and spreading factor")]
    ConcurrencyConflict(u32, u32),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// True iff the tone is at or above the detector threshold.
pub fn energy_detect(power_at_device_dbm: f64, threshold_dbm: f64) -> bool {
    power_at_device_dbm >= threshold_dbm
}

/// First offset where `pattern` appears with at most one wrong bit.
pub fn detect_sync(stream: &[bool], pattern: &[bool]) -> Result<Option<usize>, MacError> {
    if pattern.len() < MIN_SYNC_BITS {
        return Err(MacError::SyncPatternTooShort(pattern.len()));
    }
    Ok(stream.windows(pattern.len()).position(|w| {
        w.iter().zip(pattern).filter(|(a, b)| a != b).count() <= MAX_SYNC_MISMATCH
    }))
}

/// 16-bit pattern with no long runs and low off-peak autocorrelation.
pub fn default_sync_pattern() -> Vec<bool> {
    [1, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 1].map(|b| b == 1).to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub id: u32,
    pub channel: usize,
    pub params: ChirpParams,
    pub detector_threshold_dbm: f64,
    pub has_data: bool,
    pub payload_len: usize,
    /// Clock error as a fraction of the slot, within `+-MAX_CLOCK_DRIFT`.
    pub clock_drift: f64,
}

impl DeviceState {
    pub fn new(id: u32, channel: usize, params: ChirpParams) -> Self {
        Self {
            id,
            channel,
            params,
            detector_threshold_dbm: DETECTOR_FLOOR_DBM,
            has_data: true,
            payload_len: PER_PAYLOAD_LEN,
            clock_drift: 0.0,
        }
    }

    pub fn frame_duration(&self) -> f64 {
        let frame = LoraFrame::new(self.params, vec![0; self.payload_len], true).expect("valid payload length");
        frame.duration()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.detector_threshold_dbm >= DETECTOR_FLOOR_DBM) {
            return Err(ParamError::invalid(
                "device.detector_threshold_dbm",
                format!("{} below the {DETECTOR_FLOOR_DBM} dBm floor", self.detector_threshold_dbm),
            ));
        }
        if self.clock_drift.abs() > MAX_CLOCK_DRIFT {
            return Err(ParamError::invalid("device.clock_drift", "beyond +-0.1 % of a slot"));
        }
        if self.payload_len > crate::frame::MAX_PAYLOAD {
            return Err(ParamError::invalid("device.payload_len", "exceeds 255"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdmaSchedule {
    pub slot_duration_s: f64,
    pub device_slots: BTreeMap<u32, usize>,
    pub round_sync_pattern: Vec<bool>,
    /// On-off keying bit length.
    pub sync_bit_s: f64,
}

impl TdmaSchedule {
    /// Slots in assignment order, sized for the slowest device.
    pub fn for_devices(devices: &[DeviceState]) -> Self {
        let longest = devices.iter().map(|d| d.frame_duration()).fold(0.0, f64::max);
        Self {
            slot_duration_s: slot_for_frame(longest),
            device_slots: devices.iter().enumerate().map(|(i, d)| (d.id, i)).collect(),
            round_sync_pattern: default_sync_pattern(),
            sync_bit_s: 1e-3,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.device_slots.values().max().map_or(0, |m| m + 1)
    }

    pub fn sync_duration(&self) -> f64 {
        self.round_sync_pattern.len() as f64 * self.sync_bit_s
    }

    pub fn round_duration(&self) -> f64 {
        self.sync_duration() + self.slot_count() as f64 * self.slot_duration_s
    }

    pub fn validate(&self, devices: &[DeviceState]) -> Result<(), MacError> {
        if self.round_sync_pattern.len() < MIN_SYNC_BITS {
            return Err(MacError::SyncPatternTooShort(self.round_sync_pattern.len()));
        }
        if !(self.slot_duration_s > 0.0 && self.sync_bit_s > 0.0) {
            return Err(ParamError::invalid("tdma.slot_duration_s", "must be positive").into());
        }
        let mut seen = BTreeSet::new();
        for &slot in self.device_slots.values() {
            if !seen.insert(slot) {
                return Err(MacError::DuplicateSlot(slot));
            }
        }
        for d in devices {
            d.validate()?;
            if !self.device_slots.contains_key(&d.id) {
                return Err(MacError::UnknownDevice(d.id));
            }
            let frame_s = d.frame_duration();
            if frame_s + 2.0 * MAX_CLOCK_DRIFT * self.slot_duration_s > self.slot_duration_s {
                return Err(MacError::ScheduleInfeasible {
                    device: d.id,
                    frame_s,
                    slot_s: self.slot_duration_s,
                });
            }
        }
        for id in self.device_slots.keys() {
            if !devices.iter().any(|d| d.id == *id) {
                return Err(MacError::UnknownDevice(*id));
            }
        }
        Ok(())
    }
}

/// Shortest slot that fits `frame_s` with the two-sided drift guard.
pub fn slot_for_frame(frame_s: f64) -> f64 {
    // A hair of slack so the feasibility check never fails on rounding.
    frame_s / (1.0 - 2.0 * MAX_CLOCK_DRIFT) * (1.0 + 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    ToneOn,
    ToneOff,
    Wake,
    TxStart,
    TxEnd,
    Skip,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::ToneOn => "tone_on",
            Action::ToneOff => "tone_off",
            Action::Wake => "wake",
            Action::TxStart => "tx_start",
            Action::TxEnd => "tx_end",
            Action::Skip => "skip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t_s: f64,
    /// `None` for the RF source.
    pub device: Option<u32>,
    pub action: Action,
    pub channel: Option<usize>,
}

/// Time-ordered event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Times snap to the nanosecond so boundaries computed along different
    /// paths compare equal; ties put endings before beginnings.
    fn push(&mut self, mut e: Event) {
        e.t_s = (e.t_s * 1e9).round() / 1e9;
        self.events.push(e);
    }

    fn sort(&mut self) {
        let rank = |a: Action| match a {
            Action::TxEnd => 0,
            Action::ToneOff => 1,
            Action::ToneOn => 2,
            Action::Wake | Action::Skip => 3,
            Action::TxStart => 4,
        };
        self.events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(rank(a.action).cmp(&rank(b.action))));
    }

    fn append(&mut self, other: Transcript) {
        self.events.extend(other.events);
        self.sort();
    }

    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].t_s <= w[1].t_s)
    }

    /// `(device, start, end)` for every transmission.
    pub fn transmissions(&self) -> Vec<(u32, f64, f64)> {
        let mut open: BTreeMap<u32, f64> = BTreeMap::new();
        let mut out = Vec::new();
        for e in &self.events {
            match (e.action, e.device) {
                (Action::TxStart, Some(d)) => {
                    open.insert(d, e.t_s);
                }
                (Action::TxEnd, Some(d)) => {
                    if let Some(s) = open.remove(&d) {
                        out.push((d, s, e.t_s));
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,device,action,channel\n");
        for e in &self.events {
            let dev = e.device.map_or("source".to_string(), |d| d.to_string());
            let ch = e.channel.map_or(String::new(), |c| c.to_string());
            let _ = writeln!(out, "{:.9},{dev},{},{ch}", e.t_s, e.action);
        }
        out
    }
}

/// Pairs of transmissions that share channel and spreading factor and
/// overlap in time.
pub fn same_channel_sf_overlaps(t: &Transcript, devices: &[DeviceState]) -> usize {
    let key: BTreeMap<u32, (usize, u32)> = devices.iter().map(|d| (d.id, (d.channel, d.params.sf()))).collect();
    let mut tx = t.transmissions();
    tx.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut count = 0;
    for (i, a) in tx.iter().enumerate() {
        for b in &tx[i + 1..] {
            if b.1 >= a.2 {
                break;
            }
            if key.get(&a.0) == key.get(&b.0) {
                count += 1;
            }
        }
    }
    count
}

/// Slots whose tone was on without a device transmitting in them.
pub fn idle_tone_slots(t: &Transcript) -> usize {
    let mut on = None;
    let mut transmitted = false;
    let mut idle = 0;
    for e in t.events() {
        match e.action {
            Action::ToneOn => {
                on = Some(e.t_s);
                transmitted = false;
            }
            Action::TxStart => transmitted = true,
            Action::ToneOff if on.take().is_some() && !transmitted => idle += 1,
            _ => {}
        }
    }
    idle
}

/// One round starting at `t0`. `budgets[i]` is device `i`'s link.
pub fn simulate_round(
    schedule: &TdmaSchedule,
    devices: &[DeviceState],
    budgets: &[LinkBudget],
    t0: f64,
) -> Result<Transcript, MacError> {
    schedule.validate(devices)?;
    if budgets.len() != devices.len() {
        return Err(ParamError::invalid("budgets", "one link budget per device").into());
    }
    Ok(round_events(schedule, devices, budgets, t0))
}

fn round_events(schedule: &TdmaSchedule, devices: &[DeviceState], budgets: &[LinkBudget], t0: f64) -> Transcript {
    let mut t = Transcript::default();
    let slot = schedule.slot_duration_s;
    let slots_start = t0 + schedule.sync_duration();
    let mut by_slot: Vec<(usize, usize)> = devices
        .iter()
        .enumerate()
        .map(|(i, d)| (schedule.device_slots[&d.id], i))
        .collect();
    by_slot.sort();
    for (k, i) in by_slot {
        let d = &devices[i];
        let start = slots_start + k as f64 * slot;
        let ch = Some(d.channel);
        if !d.has_data {
            // Nothing queued: the source stays silent for this slot.
            t.push(Event { t_s: start, device: Some(d.id), action: Action::Skip, channel: ch });
            continue;
        }
        t.push(Event { t_s: start, device: None, action: Action::ToneOn, channel: ch });
        let power = budgets[i].power_at_tag_dbm();
        // The sync pattern and the slot tone share the detector, so a tag
        // that cannot hear one cannot hear the other.
        let synced = energy_detect(power, d.detector_threshold_dbm)
            && detect_sync(&schedule.round_sync_pattern, &schedule.round_sync_pattern)
                .ok()
                .flatten()
                == Some(0);
        if synced {
            let tx_start = start + (MAX_CLOCK_DRIFT + d.clock_drift) * slot;
            t.push(Event { t_s: start, device: Some(d.id), action: Action::Wake, channel: ch });
            t.push(Event { t_s: tx_start, device: Some(d.id), action: Action::TxStart, channel: ch });
            t.push(Event {
                t_s: tx_start + d.frame_duration(),
                device: Some(d.id),
                action: Action::TxEnd,
                channel: ch,
            });
        } else {
            t.push(Event { t_s: start, device: Some(d.id), action: Action::Skip, channel: ch });
        }
        t.push(Event { t_s: start + slot, device: None, action: Action::ToneOff, channel: ch });
    }
    t.sort();
    t
}

/// `rounds` consecutive rounds; each device has data in a round with
/// probability `traffic` and a fixed random clock drift.
pub fn simulate_rounds(
    schedule: &TdmaSchedule,
    devices: &[DeviceState],
    budgets: &[LinkBudget],
    rounds: usize,
    traffic: f64,
    seed: u64,
) -> Result<Transcript, MacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut devs = devices.to_vec();
    for d in &mut devs {
        d.clock_drift = rng.random_range(-MAX_CLOCK_DRIFT..=MAX_CLOCK_DRIFT);
    }
    schedule.validate(&devs)?;
    if budgets.len() != devs.len() {
        return Err(ParamError::invalid("budgets", "one link budget per device").into());
    }
    let mut out = Transcript::default();
    for r in 0..rounds {
        for d in &mut devs {
            d.has_data = rng.random_bool(traffic.clamp(0.0, 1.0));
        }
        let t0 = r as f64 * schedule.round_duration();
        out.append(round_events(schedule, &devs, budgets, t0));
    }
    Ok(out)
}

/// A device in a concurrency run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrentDevice {
    pub id: u32,
    /// Nyquist-rate parameters; the simulation picks the oversampling.
    pub params: ChirpParams,
    /// Channel centre relative to the simulated band centre.
    pub offset_hz: f64,
    /// Received SNR over the device's own bandwidth.
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrentConfig {
    /// Must be an integer multiple of every device's bandwidth.
    pub sample_rate: f64,
    pub n_packets: usize,
    pub noise_figure_db: f64,
    pub frontend: FrontendConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrentResult {
    pub id: u32,
    pub per_solo: f64,
    pub per_concurrent: f64,
}

impl ConcurrentResult {
    /// Concurrent minus solo PER, in percentage points.
    pub fn delta_points(&self) -> f64 {
        100.0 * (self.per_concurrent - self.per_solo)
    }
}

/// PER of each device alone and with all the others transmitting. Both arms
/// see the same noise, payloads and arrival times; the solo arm just leaves
/// the other devices out.
pub fn simulate_concurrent(devices: &[ConcurrentDevice], cfg: &ConcurrentConfig) -> Result<Vec<ConcurrentResult>, MacError> {
    for (i, a) in devices.iter().enumerate() {
        for b in &devices[i + 1..] {
            let same_channel = (a.offset_hz - b.offset_hz).abs() < a.params.bw().max(b.params.bw()) / 2.0;
            if same_channel && a.params.sf() == b.params.sf() {
                return Err(MacError::ConcurrencyConflict(a.id, b.id));
            }
        }
    }
    let params: Vec<ChirpParams> = devices
        .iter()
        .map(|d| {
            let osf = cfg.sample_rate / d.params.bw();
            if osf.fract() != 0.0 || osf < 1.0 {
                return Err(ParamError::invalid(
                    "concurrent.sample_rate",
                    format!("{} Hz is not a multiple of {} Hz", cfg.sample_rate, d.params.bw()),
                ));
            }
            if d.offset_hz.abs() + d.params.bw() / 2.0 > cfg.sample_rate / 2.0 {
                return Err(ParamError::invalid("concurrent.offset_hz", "channel outside the simulated band"));
            }
            d.params.with_osf(osf as u32)
        })
        .collect::<Result<_, _>>()?;
    if cfg.n_packets == 0 {
        return Err(ParamError::invalid("concurrent.n_packets", "must be positive").into());
    }

    let mut lost_solo = vec![0usize; devices.len()];
    let mut lost_conc = vec![0usize; devices.len()];
    for k in 0..cfg.n_packets {
        let mut rng = packet_rng(cfg.seed, 0, k);
        let mut frames = Vec::new();
        let mut waves = Vec::new();
        for (d, p) in devices.iter().zip(&params) {
            let mut payload = vec![0u8; PER_PAYLOAD_LEN];
            rng.fill(&mut payload[..]);
            let frame = LoraFrame::new(*p, payload, true)?;
            let mut sig = IqSignal::<f32>::zeros(rng.random_range(0..p.chips()) * p.osf() as usize, cfg.sample_rate);
            sig.extend_from(frame_signal::<f32>(&frame).samples());
            let amp = dbm_to_mw(noise_power_dbm(cfg.noise_figure_db, d.params.bw()) + d.snr_db).sqrt();
            sig.scale(amp as f32);
            sig.shift_frequency(d.offset_hz);
            frames.push(frame);
            waves.push(sig);
        }
        let len = waves.iter().map(|w| w.len()).max().unwrap_or(0)
            + params.iter().map(|p| p.samples_per_symbol()).max().unwrap_or(0);
        let noise_cfg = ChannelConfig {
            noise_figure_db: cfg.noise_figure_db,
            ..Default::default()
        };
        // Unit gain: the waves are already at their received power.
        let noise = apply_channel_with(&IqSignal::<f32>::zeros(len, cfg.sample_rate), &noise_cfg, 0.0, &mut rng);
        let mut all = noise.clone();
        for w in &waves {
            all.add_at(w, 0);
        }
        for (i, (d, p)) in devices.iter().zip(&params).enumerate() {
            let mut solo = noise.clone();
            solo.add_at(&waves[i], 0);
            for (rx, lost) in [(solo, &mut lost_solo[i]), (all.clone(), &mut lost_conc[i])] {
                if !decodes(rx, d, p, &frames[i], &cfg.frontend) {
                    *lost += 1;
                }
            }
        }
    }
    let n = cfg.n_packets as f64;
    Ok(devices
        .iter()
        .enumerate()
        .map(|(i, d)| ConcurrentResult {
            id: d.id,
            per_solo: lost_solo[i] as f64 / n,
            per_concurrent: lost_conc[i] as f64 / n,
        })
        .collect())
}

fn decodes(mut rx: IqSignal<f32>, d: &ConcurrentDevice, p: &ChirpParams, frame: &LoraFrame, fe: &FrontendConfig) -> bool {
    rx.shift_frequency(-d.offset_hz);
    let rx = receiver_frontend(&rx, p, fe);
    matches!(parse_frame(&rx, p, &frame.format()), Ok(r) if r.crc_ok && r.payload == frame.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::css::CodeRate;

    fn dev(id: u32, channel: usize, sf: u32) -> DeviceState {
        DeviceState::new(id, channel, ChirpParams::from_hz(sf, 125_000.0, CodeRate::Cr4_5, 1).unwrap())
    }

    #[test]
    fn detector_boundary_is_inclusive() {
        assert!(energy_detect(-45.0, -71.0));
        assert!(energy_detect(-71.0, -71.0));
        assert!(!energy_detect(-72.0, -71.0));
    }

    #[test]
    fn sync_found_at_offset() {
        let pat = default_sync_pattern();
        let mut stream = vec![false; 40];
        stream[13..29].copy_from_slice(&pat);
        assert_eq!(detect_sync(&stream, &pat), Ok(Some(13)));
        stream[15] = !stream[15];
        assert_eq!(detect_sync(&stream, &pat), Ok(Some(13)));
        stream[20] = !stream[20];
        assert_eq!(detect_sync(&stream, &pat), Ok(None));
        assert_eq!(detect_sync(&stream, &pat[..7]), Err(MacError::SyncPatternTooShort(7)));
    }

    #[test]
    fn three_devices_three_transmissions() {
        let devices = vec![dev(1, 0, 7), dev(2, 0, 7), dev(3, 5, 9)];
        let s = TdmaSchedule::for_devices(&devices);
        let b = vec![LinkBudget::free_space(5.0, 100.0); 3];
        let t = simulate_round(&s, &devices, &b, 0.0).unwrap();
        let tx = t.transmissions();
        assert_eq!(tx.len(), 3);
        assert!(tx.windows(2).all(|w| w[0].2 <= w[1].1));
        assert!(t.is_sorted());
        assert_eq!(same_channel_sf_overlaps(&t, &devices), 0);
    }

    #[test]
    fn quiet_or_deaf_devices_skip() {
        let mut devices = vec![dev(1, 0, 7), dev(2, 0, 7)];
        devices[0].has_data = false;
        let s = TdmaSchedule::for_devices(&devices);
        let b = vec![LinkBudget::free_space(5.0, 100.0), LinkBudget::free_space(50_000.0, 100.0)];
        let t = simulate_round(&s, &devices, &b, 0.0).unwrap();
        assert!(t.transmissions().is_empty());
        let skips = t.events().iter().filter(|e| e.action == Action::Skip).count();
        assert_eq!(skips, 2);
        // One tone for the deaf device, none for the one without data.
        let tones = t.events().iter().filter(|e| e.action == Action::ToneOn).count();
        assert_eq!(tones, 1);
    }

    #[test]
    fn short_slot_is_infeasible() {
        let devices = vec![dev(1, 0, 12)];
        let mut s = TdmaSchedule::for_devices(&devices);
        s.slot_duration_s = devices[0].frame_duration() * 1.001;
        assert!(matches!(
            simulate_round(&s, &devices, &[LinkBudget::default()], 0.0),
            Err(MacError::ScheduleInfeasible { device: 1, .. })
        ));
    }

    #[test]
    fn duplicate_slots_rejected() {
        let devices = vec![dev(1, 0, 7), dev(2, 1, 7)];
        let mut s = TdmaSchedule::for_devices(&devices);
        s.device_slots.insert(2, 0);
        assert_eq!(s.validate(&devices), Err(MacError::DuplicateSlot(0)));
    }

    #[test]
    fn transcript_csv() {
        let devices = vec![dev(4, 2, 7)];
        let s = TdmaSchedule::for_devices(&devices);
        let t = simulate_round(&s, &devices, &[LinkBudget::free_space(5.0, 50.0)], 0.0).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t_s,device,action,channel");
        assert_eq!(lines[1], "0.016000000,source,tone_on,2");
        assert_eq!(lines[2], "0.016000000,4,wake,2");
    }
}
