//! One function per experiment kind, plus the loopback pipeline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chirpscatter::channel::per::{curves_to_csv, paper_rate_configs, packet_rng, PER_TARGET};
use chirpscatter::channel::{
    apply_channel_with, receiver_frontend, run_per_experiment, scenario1, scenario2, ChannelConfig, FrontendConfig,
    Interferer, LinkBudget, SensitivityTable,
};
use chirpscatter::css::{Bandwidth, ChirpParams, CodeRate};
use chirpscatter::frame::{build_frame, default_sync, frame_signal, parse_frame, FrameFormat, LoraFrame};
use chirpscatter::mac::{
    idle_tone_slots, same_channel_sf_overlaps, simulate_concurrent, simulate_rounds, ConcurrentConfig,
    ConcurrentDevice, DeviceState, TdmaSchedule,
};
use chirpscatter::signal::{write_atomic, IqSignal};
use chirpscatter::synth::{
    multilevel_exponent, spectrum_with, square_exponent, synthesize_frame, SpectrumOptions, Waveform,
};
use clap::Args;

use crate::{resolve_seed, CliError, Config};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Modulate,
    Demodulate,
    Spectrum,
    PerSweep,
    RangeScenario1,
    RangeScenario2,
    MacSim,
    Concurrent,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Modulate,
        Experiment::Demodulate,
        Experiment::Spectrum,
        Experiment::PerSweep,
        Experiment::RangeScenario1,
        Experiment::RangeScenario2,
        Experiment::MacSim,
        Experiment::Concurrent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Modulate => "modulate",
            Experiment::Demodulate => "demodulate",
            Experiment::Spectrum => "spectrum",
            Experiment::PerSweep => "per-sweep",
            Experiment::RangeScenario1 => "range-scenario1",
            Experiment::RangeScenario2 => "range-scenario2",
            Experiment::MacSim => "mac-sim",
            Experiment::Concurrent => "concurrent",
        }
    }
}

/// Runs one experiment from config text. Relative input paths resolve
/// against `base`; artifacts go to `out` (or `output.dir`, else the current
/// directory). Returns the artifact paths.
pub fn run_experiment(
    kind: Experiment,
    config_text: &str,
    base: &Path,
    seed_flag: Option<u64>,
    seed_env: Option<&str>,
    out: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::parse(config_text)?;
    cfg.note("experiment", kind.name());
    if let Some(k) = cfg.get_opt::<String>("experiment.kind")? {
        if k != kind.name() {
            return Err(CliError::validation(format!(
                "experiment.kind: file is for {k:?}, not {:?}",
                kind.name()
            )));
        }
    }
    // The output location is not part of the experiment, so it stays out of
    // the header and two runs into different directories compare equal.
    let dir = match (out, cfg.contains("output.dir")) {
        (Some(d), _) => d.to_path_buf(),
        (None, true) => PathBuf::from(cfg.get::<String>("output.dir", String::new())?),
        (None, false) => PathBuf::from("."),
    };
    let seed = resolve_seed(seed_flag, seed_env, &cfg)?;
    let job = match kind {
        Experiment::Modulate => modulate(&cfg)?,
        Experiment::Demodulate => demodulate(&cfg, base)?,
        Experiment::Spectrum => spectrum(&cfg)?,
        Experiment::PerSweep => per_sweep(&cfg, seed)?,
        Experiment::RangeScenario1 => range_scenario1(&cfg)?,
        Experiment::RangeScenario2 => range_scenario2(&cfg)?,
        Experiment::MacSim => mac_sim(&cfg, seed)?,
        Experiment::Concurrent => concurrent(&cfg, seed)?,
    };
    cfg.finish()?;
    std::fs::create_dir_all(&dir)?;
    job(&cfg, &dir)
}

/// Work that runs only after every key has been read and checked.
type Job<'a> = Box<dyn FnOnce(&Config, &Path) -> Result<Vec<PathBuf>, CliError> + 'a>;

fn header(cfg: &Config) -> String {
    let mut out = String::from("# config\n");
    for (k, v) in cfg.resolved() {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

fn write_csv(dir: &Path, name: &str, body: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect()
}

pub fn from_hex(field: &str, s: &str) -> Result<Vec<u8>, CliError> {
    let s = s.trim();
    let s = s.strip_prefix("0x").unwrap_or(s);
    if !s.len().is_multiple_of(2) || !s.is_ascii() {
        return Err(CliError::validation(format!("{field}: {s:?} is not whole hex bytes")));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| CliError::validation(format!("{field}: {s:?} is not hex")))
        })
        .collect()
}

fn parse_cr(field: &str, s: &str) -> Result<CodeRate, CliError> {
    s.parse()
        .map_err(|e: chirpscatter::ParamError| CliError::validation(format!("{field}: {e}")))
}

fn chirp(cfg: &Config, prefix: &str, osf_default: u32) -> Result<ChirpParams, CliError> {
    let sf = cfg.get(&format!("{prefix}.sf"), 7u32)?;
    let bw = cfg.get(&format!("{prefix}.bw"), 125_000u64)?;
    let cr_key = format!("{prefix}.cr");
    let cr = parse_cr(&cr_key, &cfg.get::<String>(&cr_key, "4/5".into())?)?;
    let osf = cfg.get(&format!("{prefix}.osf"), osf_default)?;
    Ok(ChirpParams::from_hz(sf, bw as f64, cr, osf)?)
}

fn budget(cfg: &Config) -> Result<LinkBudget, CliError> {
    let d = LinkBudget::default();
    let mut b = LinkBudget {
        tx_power_dbm: cfg.get("budget.tx_power_dbm", d.tx_power_dbm)?,
        src_antenna_gain_dbi: cfg.get("budget.src_antenna_gain_dbi", d.src_antenna_gain_dbi)?,
        tag_antenna_gain_dbi: cfg.get("budget.tag_antenna_gain_dbi", d.tag_antenna_gain_dbi)?,
        rx_antenna_gain_dbi: cfg.get("budget.rx_antenna_gain_dbi", d.rx_antenna_gain_dbi)?,
        switch_loss_db: cfg.get("budget.switch_loss_db", d.switch_loss_db)?,
        excess_loss_db: 0.0,
        carrier_freq_hz: cfg.get("budget.carrier_freq_hz", 915_000_000u64)? as f64,
        d1_m: d.d1_m,
        d2_m: d.d2_m,
    };
    // Unset means "fit to the -134 dBm anchor at 200 m / 200 m".
    b.excess_loss_db = match cfg.get_opt("budget.excess_loss_db")? {
        Some(v) => v,
        None => {
            let v = b.calibrate_excess_loss();
            cfg.note("budget.excess_loss_db", v);
            v
        }
    };
    b.validate()?;
    Ok(b)
}

fn channel(cfg: &Config, seed: u64) -> Result<ChannelConfig, CliError> {
    let offset: Option<i64> = cfg.get_opt("channel.interferer_offset_hz")?;
    let power: Option<f64> = cfg.get_opt("channel.interferer_power_dbm")?;
    let interferer = match (offset, power) {
        (Some(o), Some(p)) => Some(Interferer {
            offset_hz: o as f64,
            power_dbm: p,
        }),
        (None, None) => None,
        _ => {
            return Err(CliError::validation(
                "channel.interferer_offset_hz: set together with channel.interferer_power_dbm",
            ))
        }
    };
    let fe = FrontendConfig::default();
    let c = ChannelConfig {
        noise_figure_db: cfg.get("channel.noise_figure_db", chirpscatter::channel::DEFAULT_NOISE_FIGURE_DB)?,
        noise: cfg.get("channel.noise", true)?,
        interferer,
        frontend: FrontendConfig {
            enabled: cfg.get("frontend.enabled", fe.enabled)?,
            transition_factor: cfg.get("frontend.transition_factor", fe.transition_factor)?,
            rejection_db: cfg.get("frontend.rejection_db", fe.rejection_db)?,
        },
        rng_seed: seed,
    };
    c.validate()?;
    Ok(c)
}

fn waveform(cfg: &Config, key: &str, default: &str) -> Result<Option<Waveform>, CliError> {
    let name = cfg.get::<String>(key, default.into())?;
    match name.as_str() {
        "none" => Ok(None),
        "square" => Ok(Some(Waveform::Square)),
        "multilevel" => {
            let levels = cfg.get("synth.levels", 4u32)?;
            let w = Waveform::MultiLevel(levels);
            w.phases()?;
            Ok(Some(w))
        }
        other => Err(CliError::validation(format!(
            "{key}: {other:?} is not none, square or multilevel"
        ))),
    }
}

fn modulate(cfg: &Config) -> Result<Job<'static>, CliError> {
    let p = chirp(cfg, "chirp", 1)?;
    let payload = from_hex("frame.payload", &cfg.get::<String>("frame.payload", "48656C6C6F".into())?)?;
    let crc = cfg.get("frame.crc", true)?;
    let frame = LoraFrame::new(p, payload, crc)?;
    let wave = waveform(cfg, "synth.waveform", "none")?;
    let delta_f = match wave {
        Some(_) => cfg.get("synth.delta_f_hz", 4 * p.bw() as u64)? as f64,
        None => 0.0,
    };
    let chirps = build_frame(&frame);
    let sig: IqSignal<f64> = match wave {
        None => frame_signal(&frame),
        Some(w) => synthesize_frame(&chirps, &p, delta_f, w, p.sample_rate())?,
    };
    Ok(Box::new(move |cfg, dir| {
        let iq = dir.join("frame.cf32");
        sig.write_cf32(&iq)?;
        let mut csv = header(cfg);
        let _ = writeln!(csv, "# duration_s = {}", frame.duration());
        csv.push_str("index,symbol\n");
        for (i, s) in frame.payload_symbols().iter().enumerate() {
            let _ = writeln!(csv, "{i},{}", s.value());
        }
        Ok(vec![iq, write_csv(dir, "symbols.csv", &csv)?])
    }))
}

fn demodulate(cfg: &Config, base: &Path) -> Result<Job<'static>, CliError> {
    let p = chirp(cfg, "chirp", 1)?;
    let input = cfg
        .get_opt::<String>("demodulate.input")?
        .ok_or_else(|| CliError::validation("demodulate.input: required"))?;
    let payload_len = cfg.get("frame.payload_len", 5usize)?;
    let crc = cfg.get("frame.crc", true)?;
    let shift = cfg.get("demodulate.shift_hz", 0i64)? as f64;
    let fe = FrontendConfig {
        enabled: cfg.get("frontend.enabled", true)?,
        ..Default::default()
    };
    let format = FrameFormat {
        payload_len,
        crc_present: crc,
        sync: default_sync(p.sf()),
    };
    let path = base.join(input);
    Ok(Box::new(move |cfg, dir| {
        let mut sig = IqSignal::<f32>::read_cf32(&path)?;
        if (sig.sample_rate() - p.sample_rate()).abs() > 1e-6 * p.sample_rate() {
            return Err(CliError::validation(format!(
                "chirp.osf: file is at {} Hz, parameters give {} Hz",
                sig.sample_rate(),
                p.sample_rate()
            )));
        }
        if shift != 0.0 {
            sig.shift_frequency(shift);
        }
        let sig = receiver_frontend(&sig, &p, &fe);
        let parsed = parse_frame(&sig, &p, &format)?;
        let mut csv = header(cfg);
        let _ = writeln!(csv, "# payload = {}", to_hex(&parsed.payload));
        let _ = writeln!(csv, "# crc_ok = {}", parsed.crc_ok);
        csv.push_str("index,symbol,peak_to_mean\n");
        for (i, (s, c)) in parsed.symbols.iter().zip(&parsed.confidence).enumerate() {
            let _ = writeln!(csv, "{i},{},{c:.4}", s.value());
        }
        Ok(vec![write_csv(dir, "demodulate.csv", &csv)?])
    }))
}

fn spectrum(cfg: &Config) -> Result<Job<'static>, CliError> {
    let delta_f = cfg.get("synth.delta_f_hz", 1_000_000u64)? as f64;
    let fs = cfg.get("synth.sample_rate_hz", 64 * delta_f as u64)? as f64;
    let samples = cfg.get("synth.samples", 1usize << 17)?;
    let levels = cfg.get("synth.levels", 4u32)?;
    let opts = SpectrumOptions {
        nperseg: cfg.get("spectrum.nperseg", SpectrumOptions::default().nperseg)?,
        ..Default::default()
    };
    let duration = samples as f64 / fs;
    let square = square_exponent::<f64>(delta_f, duration, fs)?;
    let multi = multilevel_exponent(delta_f, duration, fs, levels)?.to_signal::<f64>();
    let reports = [
        ("spectrum_square.csv", spectrum_with(&square, delta_f, opts)?),
        ("spectrum_multilevel.csv", spectrum_with(&multi, delta_f, opts)?),
    ];
    Ok(Box::new(move |cfg, dir| {
        reports
            .iter()
            .map(|(name, r)| {
                let mut csv = header(cfg);
                let _ = writeln!(csv, "# waveform = {}", if name.contains("square") { "square" } else { "multilevel" });
                csv.push_str(&r.to_csv());
                write_csv(dir, name, &csv)
            })
            .collect()
    }))
}

fn per_sweep(cfg: &Config, seed: u64) -> Result<Job<'static>, CliError> {
    let set = cfg.get::<String>("per.configs", "paper".into())?;
    let osf = cfg.get("per.osf", 1u32)?;
    let configs: Vec<ChirpParams> = match set.as_str() {
        "paper" => paper_rate_configs().iter().map(|p| p.with_osf(osf)).collect::<Result<_, _>>()?,
        "chirp" => vec![chirp(cfg, "chirp", osf)?],
        other => return Err(CliError::validation(format!("per.configs: {other:?} is not paper or chirp"))),
    };
    let packets = cfg.get("per.packets", 100usize)?;
    let ch = channel(cfg, seed)?;
    let table = SensitivityTable {
        noise_figure_db: ch.noise_figure_db,
    };
    let absolute: Option<Vec<f64>> = if cfg.contains("per.rssi_dbm") {
        Some(cfg.get_list("per.rssi_dbm", &[])?)
    } else {
        None
    };
    let grids: Vec<Vec<f64>> = match absolute {
        Some(g) => vec![g; configs.len()],
        None => {
            // Centred on each setting's predicted sensitivity.
            let span: f64 = cfg.get("per.span_db", 6.0)?;
            let step: f64 = cfg.get("per.step_db", 1.0)?;
            if !(step > 0.0 && span >= 0.0) {
                return Err(CliError::validation("per.step_db: must be positive"));
            }
            configs
                .iter()
                .map(|p| {
                    let c = table.sensitivity_dbm(p).round();
                    let n = (span / step).floor() as i64;
                    (-n..=n).map(|k| c + k as f64 * step).collect()
                })
                .collect()
        }
    };
    if grids.iter().any(|g| g.is_empty()) {
        return Err(CliError::validation("per.rssi_dbm: empty grid"));
    }
    for p in &configs {
        ch.validate_for(p)?;
    }
    if packets < chirpscatter::channel::per::MIN_PACKETS {
        return Err(CliError::validation(format!(
            "per.packets: {packets} below the minimum of {}",
            chirpscatter::channel::per::MIN_PACKETS
        )));
    }
    Ok(Box::new(move |cfg, dir| {
        let mut curves = Vec::new();
        for (p, grid) in configs.iter().zip(&grids) {
            let c = run_per_experiment(p, grid, &ch, packets)?;
            match c.threshold(PER_TARGET) {
                Some(t) => println!("{}: 10% PER at {t:.2} dBm", c.label),
                None => println!("{}: 10% PER not bracketed by the grid", c.label),
            }
            curves.push(c);
        }
        Ok(vec![write_csv(dir, "per_sweep.csv", &curves_to_csv(&cfg.resolved(), &curves))?])
    }))
}

fn range_scenario1(cfg: &Config) -> Result<Job<'static>, CliError> {
    let b = budget(cfg)?;
    let d_total: f64 = cfg.get("scenario.d_total_m", 475.0)?;
    let positions = cfg.get("scenario.positions", 19usize)?;
    if d_total.is_nan() || d_total <= 0.0 || positions == 0 {
        return Err(CliError::validation("scenario.d_total_m: need a positive span and positions"));
    }
    let table = SensitivityTable {
        noise_figure_db: cfg.get("channel.noise_figure_db", chirpscatter::channel::DEFAULT_NOISE_FIGURE_DB)?,
    };
    Ok(Box::new(move |cfg, dir| {
        let c = scenario1(&b, d_total, positions, &table);
        Ok(vec![write_csv(dir, "scenario1.csv", &c.to_csv(&cfg.resolved()))?])
    }))
}

fn range_scenario2(cfg: &Config) -> Result<Job<'static>, CliError> {
    let b = budget(cfg)?;
    let d1: f64 = cfg.get("scenario.d1_m", 5.0)?;
    let d2 = cfg.get_list(
        "scenario.d2_m",
        &[10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 2800.0, 5000.0],
    )?;
    if [d1].iter().chain(&d2).any(|d| d.is_nan() || *d <= 0.0) {
        return Err(CliError::validation("scenario.d2_m: distances must be positive"));
    }
    let table = SensitivityTable {
        noise_figure_db: cfg.get("channel.noise_figure_db", chirpscatter::channel::DEFAULT_NOISE_FIGURE_DB)?,
    };
    Ok(Box::new(move |cfg, dir| {
        let c = scenario2(&b, d1, &d2, &table);
        Ok(vec![write_csv(dir, "scenario2.csv", &c.to_csv(&cfg.resolved()))?])
    }))
}

fn mac_sim(cfg: &Config, seed: u64) -> Result<Job<'static>, CliError> {
    let template = budget(cfg)?;
    let rounds = cfg.get("mac.rounds", 100usize)?;
    let traffic = cfg.get("mac.traffic", 0.5)?;
    if !(0.0..=1.0).contains(&traffic) {
        return Err(CliError::validation("mac.traffic: must lie in [0, 1]"));
    }
    let mut ids = cfg.indices("device")?;
    if ids.is_empty() {
        ids = vec![1, 2, 3, 4];
    }
    let mut devices = Vec::new();
    let mut budgets = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        let k = |f: &str| format!("device.{id}.{f}");
        let p = chirp(cfg, &format!("device.{id}"), 1)?;
        let mut d = DeviceState::new(id, cfg.get(&k("channel"), i)?, p);
        d.payload_len = cfg.get(&k("payload_len"), d.payload_len)?;
        d.detector_threshold_dbm = cfg.get(&k("detector_threshold_dbm"), d.detector_threshold_dbm)?;
        d.validate()?;
        let b = template.with_distances(cfg.get(&k("d1_m"), 5.0)?, cfg.get(&k("d2_m"), 100.0)?);
        b.validate()?;
        devices.push(d);
        budgets.push(b);
    }
    let schedule = TdmaSchedule::for_devices(&devices);
    schedule.validate(&devices)?;
    cfg.note("mac.slot_duration_s", schedule.slot_duration_s);
    Ok(Box::new(move |cfg, dir| {
        let t = simulate_rounds(&schedule, &devices, &budgets, rounds, traffic, seed)?;
        println!(
            "{} transmissions, {} same-channel same-sf overlaps, {} idle tone slots",
            t.transmissions().len(),
            same_channel_sf_overlaps(&t, &devices),
            idle_tone_slots(&t)
        );
        let csv = header(cfg) + &t.to_csv();
        Ok(vec![write_csv(dir, "mac_transcript.csv", &csv)?])
    }))
}

fn concurrent(cfg: &Config, seed: u64) -> Result<Job<'static>, CliError> {
    let mut ids = cfg.indices("device")?;
    let defaults = [(1u32, 750_000i64), (2, 1_000_000)];
    if ids.is_empty() {
        ids = defaults.iter().map(|d| d.0).collect();
    }
    let mut devices = Vec::new();
    for &id in &ids {
        let k = |f: &str| format!("device.{id}.{f}");
        let default_offset = defaults.iter().find(|d| d.0 == id).map_or(0, |d| d.1);
        let params = chirp(cfg, &format!("device.{id}"), 1)?;
        devices.push(ConcurrentDevice {
            id,
            params,
            offset_hz: cfg.get(&k("offset_hz"), default_offset)? as f64,
            snr_db: cfg.get(&k("snr_db"), 20.0)?,
        });
    }
    // Offsets are relative to the carrier; simulate around their midpoint.
    let mid = {
        let lo = devices.iter().map(|d| d.offset_hz).fold(f64::INFINITY, f64::min);
        let hi = devices.iter().map(|d| d.offset_hz).fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    };
    let centre = cfg.get("concurrent.center_hz", mid.round() as i64)? as f64;
    for d in &mut devices {
        d.offset_hz -= centre;
    }
    let sim = ConcurrentConfig {
        sample_rate: cfg.get("concurrent.sample_rate_hz", 500_000u64)? as f64,
        n_packets: cfg.get("concurrent.packets", 200usize)?,
        noise_figure_db: cfg.get("channel.noise_figure_db", chirpscatter::channel::DEFAULT_NOISE_FIGURE_DB)?,
        frontend: FrontendConfig {
            enabled: cfg.get("frontend.enabled", true)?,
            transition_factor: cfg.get("frontend.transition_factor", 4.0)?,
            rejection_db: cfg.get("frontend.rejection_db", 50.0)?,
        },
        seed,
    };
    Ok(Box::new(move |cfg, dir| {
        let results = simulate_concurrent(&devices, &sim)?;
        let mut csv = header(cfg);
        csv.push_str("device,per_solo,per_concurrent,delta_points,n\n");
        for r in &results {
            let _ = writeln!(
                csv,
                "{},{},{},{:.3},{}",
                r.id,
                r.per_solo,
                r.per_concurrent,
                r.delta_points(),
                sim.n_packets
            );
        }
        Ok(vec![write_csv(dir, "concurrent.csv", &csv)?])
    }))
}

#[derive(Debug, Clone, Args)]
pub struct LoopbackArgs {
    /// Payload bytes as hex.
    #[arg(long)]
    pub payload: String,
    #[arg(long, default_value_t = 7)]
    pub sf: u32,
    /// Bandwidth in Hz.
    #[arg(long, default_value_t = 125_000)]
    pub bw: u64,
    #[arg(long, default_value = "4/5")]
    pub cr: String,
    /// Skip the channel entirely.
    #[arg(long)]
    pub noiseless: bool,
    /// Received power in dBm; defaults to 10 dB above the setting's
    /// predicted sensitivity.
    #[arg(long, allow_negative_numbers = true)]
    pub rssi: Option<f64>,
    /// Tag switching waveform: none, square or multilevel.
    #[arg(long, default_value = "multilevel")]
    pub waveform: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopbackOutcome {
    pub payload: Vec<u8>,
    pub crc_ok: bool,
}

/// Frame, tag synthesis at a `4 bw` offset, channel, shift back, channel
/// filter, parse. Fails unless the frame decodes with a good CRC.
pub fn loopback(args: &LoopbackArgs, seed_env: Option<&str>) -> Result<LoopbackOutcome, CliError> {
    let cr = parse_cr("cr", &args.cr)?;
    Bandwidth::from_hz(args.bw as f64)?;
    let nyquist = ChirpParams::from_hz(args.sf, args.bw as f64, cr, 1)?;
    let payload = from_hex("payload", &args.payload)?;
    let seed = match (args.seed, seed_env) {
        (Some(s), _) => s,
        (None, Some(e)) => e
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("{}: cannot parse {e:?}", crate::SEED_ENV)))?,
        (None, None) => crate::DEFAULT_SEED,
    };
    let wave = match args.waveform.as_str() {
        "none" => None,
        "square" => Some(Waveform::Square),
        "multilevel" => Some(Waveform::MultiLevel(4)),
        other => return Err(CliError::validation(format!("waveform: {other:?} is not none, square or multilevel"))),
    };
    let bw = nyquist.bw();
    let delta_f = 4.0 * bw;
    // Sixteen samples per period of the fastest switching tone.
    let p = match wave {
        Some(_) => nyquist.with_osf((16.0 * (delta_f + bw / 2.0) / bw).ceil() as u32)?,
        None => nyquist,
    };
    let frame = LoraFrame::new(p, payload, true)?;
    let mut rx: IqSignal<f32> = match wave {
        Some(w) => synthesize_frame(&build_frame(&frame), &p, delta_f, w, p.sample_rate())?,
        None => frame_signal(&frame),
    };
    if !args.noiseless {
        let table = SensitivityTable::default();
        let rssi = args.rssi.unwrap_or(table.sensitivity_dbm(&nyquist) + 10.0);
        let ch = ChannelConfig {
            rng_seed: seed,
            ..Default::default()
        };
        rx = apply_channel_with(&rx, &ch, rssi, &mut packet_rng(seed, 0, 0));
    }
    if wave.is_some() {
        rx.shift_frequency(-delta_f);
    }
    let rx = receiver_frontend(&rx, &p, &FrontendConfig::default());
    let parsed = parse_frame(&rx, &p, &frame.format())?;
    if !parsed.crc_ok {
        return Err(CliError::runtime(format!(
            "decode failed: CRC mismatch, payload {}",
            to_hex(&parsed.payload)
        )));
    }
    Ok(LoopbackOutcome {
        payload: parsed.payload,
        crc_ok: parsed.crc_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        assert_eq!(from_hex("p", "deadBE").unwrap(), vec![0xDE, 0xAD, 0xBE]);
        assert_eq!(to_hex(&[0xDE, 0xAD, 0xBE]), "DEADBE");
        assert!(from_hex("p", "abc").is_err());
        assert!(from_hex("p", "zz").is_err());
        assert!(from_hex("p", "").unwrap().is_empty());
    }

    #[test]
    fn names_are_unique() {
        let mut n: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), 8);
    }
}
