use std::f64::consts::FRAC_PI_2;

use log::info;
use serde_json::json;

use ringwave_core::circuit::RingSpec;
use ringwave_core::coupler;
use ringwave_core::localization::{compare_schemes, trial_errors, RangingScheme, SchemeKind};
use ringwave_core::parametric::{self, PumpState, StandingWaveMode};
use ringwave_core::smallsignal::{self, ResonanceKind};
use ringwave_core::transient::{
    self, power_range, run_point_with_series, FrequencyResponse, Mode, NrrSetup, Probe, SweepResult, PORT_D, PORT_M,
};

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::{Outputs, Table};

type Result<T> = std::result::Result<T, CliError>;

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Divider => "divider",
        Mode::Doubler => "doubler",
    }
}

pub fn drive_frequency(cfg: &ScenarioConfig, setup: &NrrSetup, mode: Mode) -> Result<f64> {
    if let Some(f) = cfg.drive.f_in {
        return Ok(f);
    }
    let f = match mode {
        Mode::Divider => setup.divider_frequency()?,
        Mode::Doubler => setup.doubler_frequency()?,
    };
    info!("drive.f_in not set; using the ring's {} at {f} Hz", if mode == Mode::Divider { "pole" } else { "zero" });
    Ok(f)
}

pub fn dispersion(cfg: &ScenarioConfig) -> Result<Outputs> {
    let ring = cfg.ring()?;
    let cell = ring.cell;
    let mut t = Table::new(&["freq_hz", "beta_d", "alpha_d", "beta_d_unloaded"]);
    for f in cfg.scan.grid() {
        let b = smallsignal::loaded_phase(f, &cell);
        t.push(&[f, b.beta_d, b.alpha_d, smallsignal::unloaded_phase(f, &cell.line, cell.d)]);
    }
    let mut out = Outputs::default();
    out.csv("dispersion", &t);
    out.json(
        "dispersion",
        &json!({
            "z0": cell.line.z0,
            "eps_eff": cell.line.eps_eff,
            "cutoff_hz": smallsignal::cutoff_frequency(&cell),
        }),
    );
    Ok(out)
}

fn impedance_table(ring: &RingSpec, freqs: &[f64]) -> Table {
    let mut t = Table::new(&["freq_hz", "re_z", "im_z", "abs_z"]);
    for &f in freqs {
        let z = smallsignal::ring_input_impedance(f, ring);
        t.push(&[f, z.re, z.im, z.norm()]);
    }
    t
}

pub fn resonances(cfg: &ScenarioConfig) -> Result<Outputs> {
    let ring = cfg.ring()?;
    let found = smallsignal::find_resonances(&ring, cfg.scan.f_start, cfg.scan.f_stop);
    let count = |k| found.iter().filter(|r| r.kind == k).count();
    let mut out = Outputs::default();
    out.csv("impedance", &impedance_table(&ring, &cfg.scan.grid()));
    out.json(
        "resonances",
        &json!({
            "n_cells": ring.n_cells,
            "f_start": cfg.scan.f_start,
            "f_stop": cfg.scan.f_stop,
            "zeros": count(ResonanceKind::Zero),
            "poles": count(ResonanceKind::Pole),
            "resonances": found,
        }),
    );
    Ok(out)
}

pub fn standing_wave(cfg: &ScenarioConfig) -> Result<Outputs> {
    let setup = cfg.setup()?;
    let ring = setup.ring;
    let f_pump = match (cfg.pump.f_pump, cfg.pump.mode) {
        (Some(f), _) => f,
        (None, Mode::Divider) => setup.divider_frequency()?,
        (None, Mode::Doubler) => 2.0 * setup.doubler_frequency()?,
    };
    let pump = PumpState::on_ring(&ring, cfg.pump.v_p0, f_pump)?;
    let mode = match cfg.pump.mode {
        Mode::Divider => StandingWaveMode::Divider,
        Mode::Doubler => StandingWaveMode::Doubler,
    };
    let profile = parametric::standing_wave_profile(mode, &ring, &pump, cfg.pump.x_points)?;
    let mut t = Table::new(&["x_m", "subharmonic", "harmonic"]);
    for i in 0..profile.x.len() {
        t.push(&[profile.x[i], profile.subharmonic[i], profile.harmonic[i]]);
    }
    let tc = ring.cell.varactor.taylor_coefficients();
    let nodes = (1..=ring.n_cells)
        .map(|n| {
            let amplitude = parametric::node_pump_amplitude(&ring, n, &pump)?;
            Ok(json!({
                "n": n,
                "position": ring.varactor_position(n),
                "x_m": ring.coordinate(ring.varactor_position(n)),
                "amplitude_v": amplitude,
                "amplitude_over_vp0": if pump.v_p0 > 0.0 { amplitude / pump.v_p0 } else { f64::NAN },
                "r_e": parametric::node_negative_resistance(&ring, n, &pump, &tc)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::default();
    out.csv("standing_wave", &t);
    out.json(
        "standing_wave",
        &json!({ "mode": mode, "f_pump": f_pump, "v_p0": pump.v_p0, "beta2_d": pump.beta2_d, "nodes": nodes }),
    );
    Ok(out)
}

pub fn bpf(cfg: &ScenarioConfig) -> Result<Outputs> {
    let spec = cfg.coupler();
    let z_ref = cfg.ports.z_ref;
    let n = cfg.scan.points;
    let mut t = Table::new(&["freq_hz", "theta", "z_i_re", "z_i_im", "z_d_re", "z_d_im", "rejection_db", "passband"]);
    for k in 1..=n {
        let f = 2.0 * spec.f_design * k as f64 / (n + 1) as f64;
        let theta = spec.theta_at(f);
        let z = coupler::image_impedances(theta, &spec)?;
        let pass = if z.is_passband() { 1.0 } else { 0.0 };
        t.push(&[f, theta, z.z_i.re, z.z_i.im, z.z_d.re, z.z_d.im, coupler::rejection_estimate(f, &spec, z_ref), pass]);
    }
    let (lo, hi) = coupler::passband_edges(&spec);
    let to_hz = |theta: f64| theta / FRAC_PI_2 * spec.f_design;
    let centre = coupler::image_impedances(FRAC_PI_2, &spec)?;
    let mut out = Outputs::default();
    out.csv("bpf", &t);
    out.json(
        "bpf",
        &json!({
            "passband_theta": [lo, hi],
            "passband_hz": [to_hz(lo), to_hz(hi)],
            "z_i_centre": centre.z_i.re,
            "z_d_centre": centre.z_d.re,
            "rejection_at_2f_db": coupler::rejection_estimate(2.0 * spec.f_design, &spec, z_ref),
        }),
    );
    Ok(out)
}

pub fn calibrate(cfg: &ScenarioConfig) -> Result<Outputs> {
    let anchors = cfg.anchors();
    let line = ringwave_core::circuit::calibrate_line(&anchors, cfg.varactor.c0, cfg.ring.d)?;
    let cell = ringwave_core::circuit::UnitCell { d: cfg.ring.d, line, varactor: cfg.varactor() };
    let beta_d = smallsignal::loaded_phase(anchors.at_freq, &cell).beta_d;
    let fc = smallsignal::cutoff_frequency(&cell);
    let mut out = Outputs::default();
    out.json(
        "calibration",
        &json!({
            "z0": line.z0,
            "eps_eff": line.eps_eff,
            "anchors": anchors,
            "beta_d": beta_d,
            "f_cutoff": fc,
            "beta_d_rel_error": (beta_d - anchors.beta_d).abs() / anchors.beta_d,
            "f_cutoff_rel_error": fc.map(|f| (f - anchors.f_cutoff).abs() / anchors.f_cutoff),
        }),
    );
    Ok(out)
}

fn probe(mode: Mode, f_in: f64, net: &transient::CircuitNetwork) -> Probe {
    match mode {
        Mode::Divider => Probe { port: PORT_D.into(), out_freq: 0.5 * f_in, seed_node: net.node("D") },
        Mode::Doubler => Probe { port: PORT_M.into(), out_freq: 2.0 * f_in, seed_node: None },
    }
}

pub fn transient_run(cfg: &ScenarioConfig) -> Result<Outputs> {
    let setup = cfg.setup()?;
    let mode = cfg.drive.mode;
    let f_in = drive_frequency(cfg, &setup, mode)?;
    let net = setup.network(mode)?;
    let probe = probe(mode, f_in, &net);
    let (point, spec, ts) = run_point_with_series(&net, &probe, f_in, cfg.drive.p_in, &setup.run)?;
    let mut waveform = Vec::new();
    ts.write_csv(&mut waveform).map_err(|e| CliError::Write { path: "waveform.csv".into(), source: e })?;
    let mut out = Outputs::default();
    out.text("waveform.csv", String::from_utf8(waveform).expect("csv is utf-8"));
    out.json(
        "transient",
        &json!({
            "mode": mode,
            "f_in": f_in,
            "f_out": probe.out_freq,
            "output_port": probe.port,
            "point": point,
            "output_spectrum": spec,
        }),
    );
    Ok(out)
}

pub fn sweep_table(r: &SweepResult) -> Table {
    let mut t = Table::new(&["p_in_dbm", "p_out_dbm", "p_leak_dbm", "oscillating", "pump_rejection_db"]);
    for (i, p) in r.points.iter().enumerate() {
        let rej = r.pump_rejection_db.get(i).copied().unwrap_or(f64::NAN);
        t.push(&[p.p_in, p.p_out, p.p_leak, if p.oscillating { 1.0 } else { 0.0 }, rej]);
    }
    t
}

pub fn run_sweep(cfg: &ScenarioConfig, mode: Mode) -> Result<SweepResult> {
    let setup = cfg.setup()?;
    let f_in = drive_frequency(cfg, &setup, mode)?;
    let d = &cfg.drive;
    let powers = power_range(d.p_start, d.p_stop, d.p_step);
    Ok(match mode {
        Mode::Divider => transient::divider_sweep(&setup, f_in, &powers)?,
        Mode::Doubler => transient::doubler_sweep(&setup, f_in, &powers)?,
    })
}

fn sweep_summary(r: &SweepResult) -> serde_json::Value {
    json!({
        "mode": r.mode,
        "f_in": r.f_in,
        "f_out": r.f_out,
        "threshold": r.threshold,
        "conversion_loss_db": r.conversion_loss_db,
        "small_signal_slope": r.small_signal_slope,
        "p_sat_dbm": r.p_sat_dbm,
    })
}

pub fn sweep(cfg: &ScenarioConfig, mode: Mode) -> Result<Outputs> {
    let r = run_sweep(cfg, mode)?;
    let name = format!("{}_sweep", mode_name(mode));
    let mut out = Outputs::default();
    out.csv(&name, &sweep_table(&r));
    out.json(&name, &sweep_summary(&r));
    Ok(out)
}

pub fn run_response(cfg: &ScenarioConfig, mode: Mode, p_in: f64) -> Result<FrequencyResponse> {
    let setup = cfg.setup()?;
    let f_center = drive_frequency(cfg, &setup, mode)?;
    Ok(transient::frequency_response(&setup, mode, p_in, f_center, cfg.drive.span, cfg.drive.points)?)
}

pub fn response_table(r: &FrequencyResponse) -> Table {
    let mut t = Table::new(&["f_in_hz", "p_out_dbm", "p_leak_dbm", "oscillating"]);
    for p in &r.points {
        t.push(&[p.f_in, p.p_out, p.p_leak, if p.oscillating { 1.0 } else { 0.0 }]);
    }
    t
}

pub fn response_summary(r: &FrequencyResponse) -> serde_json::Value {
    json!({
        "mode": r.mode,
        "p_in": r.p_in,
        "peak_freq": r.peak_freq,
        "peak_dbm": r.peak_dbm,
        "bandwidth": r.bandwidth,
        "band": r.band,
    })
}

pub fn freq_response(cfg: &ScenarioConfig) -> Result<Outputs> {
    let r = run_response(cfg, cfg.drive.mode, cfg.drive.p_in)?;
    let mut out = Outputs::default();
    out.csv("freq_response", &response_table(&r));
    out.json("freq_response", &response_summary(&r));
    Ok(out)
}

pub fn localize(cfg: &ScenarioConfig) -> Result<Outputs> {
    let l = &cfg.localization;
    let model = cfg.channel_model();
    let cmp = compare_schemes(l.f_base, &model, l.n_paths, l.trials, l.seed)?;
    let single = RangingScheme { kind: SchemeKind::SingleBand, f_base: l.f_base };
    let dual = RangingScheme { kind: SchemeKind::DualBand, f_base: l.f_base };
    let a = trial_errors(&single, &model, l.n_paths, l.trials, l.seed)?;
    let b = trial_errors(&dual, &model, l.n_paths, l.trials, l.seed)?;
    let mut t = Table::new(&["trial", "single_band_rad", "dual_band_rad"]);
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        t.push(&[i as f64, *x, *y]);
    }
    let mut out = Outputs::default();
    out.csv("localize_trials", &t);
    out.json(
        "localize",
        &json!({
            "n_paths": cmp.n_paths,
            "trials": l.trials,
            "seed": l.seed,
            "f_base": l.f_base,
            "single_band_variance": cmp.single_band,
            "dual_band_variance": cmp.dual_band,
        }),
    );
    Ok(out)
}

pub fn variance_sweep(cfg: &ScenarioConfig) -> Result<Table> {
    let l = &cfg.localization;
    let model = cfg.channel_model();
    let mut t = Table::new(&["n_paths", "single_band_variance", "dual_band_variance"]);
    for n in 0..=l.max_paths {
        let c = compare_schemes(l.f_base, &model, n, l.trials, l.seed)?;
        t.push(&[n as f64, c.single_band, c.dual_band]);
    }
    Ok(t)
}

pub fn lossless_impedance_sweep(cfg: &ScenarioConfig, max_cells: usize) -> Result<(Table, serde_json::Value)> {
    let base = cfg.ring()?;
    let freqs = cfg.scan.grid();
    let mut header = vec!["freq_hz".to_string()];
    let mut rings = Vec::new();
    let mut found = serde_json::Map::new();
    for n in 1..=max_cells {
        let mut ring = RingSpec::new(n, base.cell);
        ring.cell.varactor.r_s = 0.0;
        ring.cell.line.alpha = 0.0;
        header.push(format!("im_z_n{n}"));
        found.insert(format!("n{n}"), json!(smallsignal::find_resonances(&ring, cfg.scan.f_start, cfg.scan.f_stop)));
        rings.push(ring);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for &f in &freqs {
        let mut row = vec![f];
        row.extend(rings.iter().map(|r| smallsignal::ring_input_impedance(f, r).im));
        t.push(&row);
    }
    Ok((t, serde_json::Value::Object(found)))
}
