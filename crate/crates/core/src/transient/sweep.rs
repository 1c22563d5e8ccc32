//! Divider and doubler experiments: power sweeps, thresholds, conversion loss and
//! frequency response, each point a full transient run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{transient_run_with, SimOptions, TimeSeries};
use super::network::{build_nrr_network_with, CircuitNetwork, Mode, NetworkOptions, NodeId, PORT_D, PORT_M};
use super::spectrum::{spectrum_with_floor, ToneSpectrum, DEFAULT_FLOOR_DBM};
use crate::circuit::{PortPair, RingSpec};
use crate::coupler::{self, CoupledLineSpec};
use crate::error::{Error, Result};
use crate::smallsignal::{self, ResonanceKind};

/// Time grid, detector and solver settings shared by every point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drive periods simulated; the spectrum uses the second half.
    pub cycles: usize,
    pub steps_per_cycle: usize,
    /// Initial voltage on the seed node.
    pub seed_volts: f64,
    pub floor_dbm: f64,
    /// A subharmonic counts as oscillation this far above the floor.
    pub detect_margin_db: f64,
    pub reltol: f64,
    pub max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cycles: 200,
            steps_per_cycle: 64,
            seed_volts: 1e-6,
            floor_dbm: DEFAULT_FLOOR_DBM,
            detect_margin_db: 20.0,
            reltol: 1e-9,
            max_iter: 50,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycles < 4 * super::spectrum::MIN_PERIODS {
            return Err(Error::invalid("sim.cycles", "too few cycles for the analysis window"));
        }
        if self.steps_per_cycle < 64 {
            return Err(Error::invalid("sim.steps_per_cycle", "must be >= 64"));
        }
        if !(self.reltol > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("sim.reltol", "Newton settings must be positive"));
        }
        Ok(())
    }

    pub fn detect_level(&self) -> f64 {
        self.floor_dbm + self.detect_margin_db
    }
}

/// Everything needed to build and run the ring in either mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrrSetup {
    pub ring: RingSpec,
    pub ports: PortPair,
    pub network: NetworkOptions,
    pub run: RunConfig,
    pub coupler: CoupledLineSpec,
}

impl NrrSetup {
    /// Three-cell calibrated ring with the default ports.
    pub fn calibrated() -> Result<Self> {
        Ok(NrrSetup {
            ring: RingSpec::calibrated(3)?,
            ports: PortPair::default(),
            network: NetworkOptions::default(),
            run: RunConfig::default(),
            coupler: CoupledLineSpec::default(),
        })
    }

    pub fn network(&self, mode: Mode) -> Result<CircuitNetwork> {
        build_nrr_network_with(&self.ring, &self.ports, mode, &self.network)
    }

    /// Default divider input: the ring's first impedance pole.
    pub fn divider_frequency(&self) -> Result<f64> {
        first_resonance(&self.ring, ResonanceKind::Pole)
    }

    /// Default doubler input: the ring's first impedance zero.
    pub fn doubler_frequency(&self) -> Result<f64> {
        first_resonance(&self.ring, ResonanceKind::Zero)
    }
}

fn first_resonance(ring: &RingSpec, kind: ResonanceKind) -> Result<f64> {
    let f_hi = smallsignal::cutoff_frequency(&ring.cell).map_or(20e9, |fc| 2.0 * fc);
    smallsignal::find_resonances(ring, 0.1e9, f_hi)
        .into_iter()
        .find(|r| r.kind == kind)
        .map(|r| r.freq)
        .ok_or_else(|| Error::NumericFailure { message: format!("ring has no {kind:?} resonance"), residuals: vec![] })
}

/// Which tone of which port an experiment reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub port: String,
    pub out_freq: f64,
    /// Node given the start-up perturbation.
    pub seed_node: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p_in: f64,
    pub f_in: f64,
    /// Target tone at the output port (dBm); the floor when absent.
    pub p_out: f64,
    /// Drive tone leaking to the output port (dBm).
    pub p_leak: f64,
    pub oscillating: bool,
}

/// Runs one drive level and returns the output-port spectrum.
pub fn run_point(
    net: &CircuitNetwork,
    probe: &Probe,
    f_in: f64,
    p_in: f64,
    cfg: &RunConfig,
) -> Result<(SweepPoint, ToneSpectrum)> {
    run_point_with_series(net, probe, f_in, p_in, cfg).map(|(point, spec, _)| (point, spec))
}

/// [`run_point`], also returning the simulated waveforms.
pub fn run_point_with_series(
    net: &CircuitNetwork,
    probe: &Probe,
    f_in: f64,
    p_in: f64,
    cfg: &RunConfig,
) -> Result<(SweepPoint, ToneSpectrum, TimeSeries)> {
    cfg.validate()?;
    if !(f_in > 0.0) {
        return Err(Error::invalid("f_in", "must be > 0"));
    }
    let mut net = net.clone();
    net.set_drive(p_in, f_in);
    let tap = net.port(&probe.port).ok_or_else(|| Error::invalid("probe.port", "no such port"))?.clone();
    let dt = 1.0 / (cfg.steps_per_cycle as f64 * f_in);
    let t_end = cfg.cycles as f64 / f_in;
    let opts = SimOptions {
        reltol: cfg.reltol,
        max_iter: cfg.max_iter,
        seed: probe.seed_node.map(|n| (n, cfg.seed_volts)),
        base_freq: Some(f_in.min(probe.out_freq)),
        ..SimOptions::default()
    };
    let ts = transient_run_with(&net, t_end, dt, &opts)?;
    let spec = spectrum_with_floor(&ts, tap.node, tap.z_ref, cfg.floor_dbm)?;
    let tol = 0.25 * ts.base_freq;
    let p_out = spec.power_at(probe.out_freq, tol);
    let point = SweepPoint {
        p_in,
        f_in,
        p_out,
        p_leak: spec.power_at(f_in, tol),
        oscillating: p_out > cfg.detect_level(),
    };
    Ok((point, spec, ts))
}

/// Runs every drive level concurrently; results come back in input order.
pub fn sweep_network(
    net: &CircuitNetwork,
    probe: &Probe,
    f_in: f64,
    powers: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<SweepPoint>> {
    powers.par_iter().map(|&p| run_point(net, probe, f_in, p, cfg).map(|r| r.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Threshold {
    /// Midpoint of the bracketing pair; `uncertainty` is the sweep step.
    Found { p_th: f64, uncertainty: f64 },
    /// Already oscillating at the lowest drive.
    BelowRange { p_min: f64 },
    /// No oscillation anywhere in the sweep.
    AboveRange { p_max: f64 },
}

impl Threshold {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Threshold::Found { p_th, .. } => Some(p_th),
            _ => None,
        }
    }
}

/// First upward crossing of the oscillation detector.
pub fn detect_threshold(points: &[SweepPoint]) -> Option<Threshold> {
    let first = points.first()?;
    if first.oscillating {
        return Some(Threshold::BelowRange { p_min: first.p_in });
    }
    for w in points.windows(2) {
        if !w[0].oscillating && w[1].oscillating {
            return Some(Threshold::Found { p_th: 0.5 * (w[0].p_in + w[1].p_in), uncertainty: w[1].p_in - w[0].p_in });
        }
    }
    Some(Threshold::AboveRange { p_max: points.last()?.p_in })
}

/// Least-squares slope of `p_out` against `p_in` over points with `p_in` in `[lo, hi]`.
pub fn small_signal_slope(points: &[SweepPoint], lo: f64, hi: f64) -> Option<f64> {
    let sel: Vec<&SweepPoint> = points.iter().filter(|p| p.p_in >= lo - 1e-9 && p.p_in <= hi + 1e-9).collect();
    if sel.len() < 2 {
        return None;
    }
    let n = sel.len() as f64;
    let mx = sel.iter().map(|p| p.p_in).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.p_out).sum::<f64>() / n;
    let sxy: f64 = sel.iter().map(|p| (p.p_in - mx) * (p.p_out - my)).sum();
    let sxx: f64 = sel.iter().map(|p| (p.p_in - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `p_in - p_out` at `p_in = at`, interpolated linearly between sweep points.
pub fn conversion_loss_at(points: &[SweepPoint], at: f64) -> Option<f64> {
    points.windows(2).find(|w| w[0].p_in <= at && at <= w[1].p_in).map(|w| {
        let t = if w[1].p_in > w[0].p_in { (at - w[0].p_in) / (w[1].p_in - w[0].p_in) } else { 0.0 };
        at - (w[0].p_out + t * (w[1].p_out - w[0].p_out))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mode: Mode,
    pub f_in: f64,
    pub f_out: f64,
    pub points: Vec<SweepPoint>,
    /// Divider only.
    pub threshold: Option<Threshold>,
    /// Doubler: loss at 0 dBm drive.
    pub conversion_loss_db: Option<f64>,
    /// Doubler: slope over -20..-10 dBm drive.
    pub small_signal_slope: Option<f64>,
    pub p_sat_dbm: Option<f64>,
    /// Divider: output tone over pump leakage after the coupler, per point (dB).
    pub pump_rejection_db: Vec<f64>,
}

fn check_powers(powers: &[f64]) -> Result<()> {
    if powers.is_empty() {
        return Err(Error::invalid("p_in", "empty power range"));
    }
    if powers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("p_in", "powers must be strictly increasing"));
    }
    Ok(())
}

/// Evenly spaced powers from `start` to `stop` inclusive.
pub fn power_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return vec![start];
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Pump at M, subharmonic read at D.
pub fn divider_sweep(setup: &NrrSetup, f_in: f64, powers: &[f64]) -> Result<SweepResult> {
    check_powers(powers)?;
    let net = setup.network(Mode::Divider)?;
    let probe = Probe { port: PORT_D.into(), out_freq: 0.5 * f_in, seed_node: net.node("D") };
    let points = sweep_network(&net, &probe, f_in, powers, &setup.run)?;
    let coupler_db = coupler::rejection_estimate(f_in, &setup.coupler, setup.ports.d_port.z_ref)
        - coupler::rejection_estimate(probe.out_freq, &setup.coupler, setup.ports.d_port.z_ref);
    let pump_rejection_db = points.iter().map(|p| p.p_out - (p.p_leak - coupler_db)).collect();
    let p_sat_dbm = points.iter().filter(|p| p.oscillating).map(|p| p.p_out).reduce(f64::max);
    Ok(SweepResult {
        mode: Mode::Divider,
        f_in,
        f_out: probe.out_freq,
        threshold: detect_threshold(&points),
        conversion_loss_db: None,
        small_signal_slope: None,
        p_sat_dbm,
        pump_rejection_db,
        points,
    })
}

/// Fundamental at D, second harmonic read at M.
pub fn doubler_sweep(setup: &NrrSetup, f_in: f64, powers: &[f64]) -> Result<SweepResult> {
    check_powers(powers)?;
    let net = setup.network(Mode::Doubler)?;
    let probe = Probe { port: PORT_M.into(), out_freq: 2.0 * f_in, seed_node: None };
    let points = sweep_network(&net, &probe, f_in, powers, &setup.run)?;
    Ok(SweepResult {
        mode: Mode::Doubler,
        f_in,
        f_out: probe.out_freq,
        threshold: None,
        conversion_loss_db: conversion_loss_at(&points, 0.0),
        small_signal_slope: small_signal_slope(&points, -20.0, -10.0),
        p_sat_dbm: points.iter().map(|p| p.p_out).reduce(f64::max),
        pump_rejection_db: Vec::new(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub mode: Mode,
    pub p_in: f64,
    pub points: Vec<SweepPoint>,
    pub peak_freq: f64,
    pub peak_dbm: f64,
    /// Input-frequency span of the contiguous run around the peak (Hz).
    pub bandwidth: f64,
    pub band: (f64, f64),
}

/// Output tone versus input frequency at fixed drive.
///
/// Divider: the band is where the subharmonic is detected. Doubler: where the output is within
/// 3 dB of its peak.
pub fn frequency_response(
    setup: &NrrSetup,
    mode: Mode,
    p_in: f64,
    f_center: f64,
    span: f64,
    points: usize,
) -> Result<FrequencyResponse> {
    if !(span >= 0.0) || !(f_center > 0.0) {
        return Err(Error::invalid("span", "need f_center > 0 and span >= 0"));
    }
    let freqs: Vec<f64> = if span == 0.0 {
        vec![f_center]
    } else {
        if points < 11 {
            return Err(Error::invalid("points", "must be >= 11"));
        }
        (0..points).map(|i| f_center - 0.5 * span + span * i as f64 / (points - 1) as f64).collect()
    };
    if freqs[0] <= 0.0 {
        return Err(Error::invalid("span", "sweep reaches non-positive frequencies"));
    }
    let net = setup.network(mode)?;
    let results: Vec<SweepPoint> = freqs
        .par_iter()
        .map(|&f| {
            let probe = match mode {
                Mode::Divider => Probe { port: PORT_D.into(), out_freq: 0.5 * f, seed_node: net.node("D") },
                Mode::Doubler => Probe { port: PORT_M.into(), out_freq: 2.0 * f, seed_node: None },
            };
            run_point(&net, &probe, f, p_in, &setup.run).map(|r| r.0)
        })
        .collect::<Result<_>>()?;

    let (peak_idx, peak) = results
        .iter()
        .enumerate()
        .fold((0, &results[0]), |best, (i, p)| if p.p_out > best.1.p_out { (i, p) } else { best });
    let inside = |p: &SweepPoint| match mode {
        Mode::Divider => p.oscillating,
        Mode::Doubler => p.p_out >= peak.p_out - 3.0,
    };
    let (bandwidth, band) = if inside(peak) {
        let mut lo = peak_idx;
        while lo > 0 && inside(&results[lo - 1]) {
            lo -= 1;
        }
        let mut hi = peak_idx;
        while hi + 1 < results.len() && inside(&results[hi + 1]) {
            hi += 1;
        }
        (freqs[hi] - freqs[lo], (freqs[lo], freqs[hi]))
    } else {
        (0.0, (peak.f_in, peak.f_in))
    };
    Ok(FrequencyResponse { mode, p_in, peak_freq: peak.f_in, peak_dbm: peak.p_out, bandwidth, band, points: results })
}
