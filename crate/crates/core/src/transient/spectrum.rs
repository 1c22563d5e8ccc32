//! Tone extraction from the steady-state part of a [`TimeSeries`].

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::engine::TimeSeries;
use super::network::NodeId;
use crate::error::{Error, Result};

/// Default absolute floor below which tones are not reported.
pub const DEFAULT_FLOOR_DBM: f64 = -100.0;

/// Minimum analysis window, in periods of the base tone.
pub const MIN_PERIODS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub freq: f64,
    pub power_dbm: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSpectrum {
    /// Ascending in frequency.
    pub tones: Vec<Tone>,
    pub noise_floor: f64,
    /// Mean power of the analysed window (dBm).
    pub total_power_dbm: f64,
    /// Power not attributed to any reported tone (watts).
    pub residual_w: f64,
}

impl ToneSpectrum {
    /// Power of the tone nearest to `freq` within `tol`, or the noise floor if none.
    pub fn power_at(&self, freq: f64, tol: f64) -> f64 {
        self.tones
            .iter()
            .filter(|t| (t.freq - freq).abs() <= tol)
            .map(|t| t.power_dbm)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(self.noise_floor)
    }

    pub fn has_tone(&self, freq: f64, tol: f64) -> bool {
        self.tones.iter().any(|t| (t.freq - freq).abs() <= tol)
    }
}

pub fn dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Spectrum of `v(node)` across `z_ref` with the default floor.
pub fn spectrum(ts: &TimeSeries, node: NodeId, z_ref: f64) -> Result<ToneSpectrum> {
    spectrum_with_floor(ts, node, z_ref, DEFAULT_FLOOR_DBM)
}

/// Hann-windowed DFT over the last half of the record, trimmed to a whole number of
/// base-tone periods. Each tone's power is the energy in its main lobe.
pub fn spectrum_with_floor(ts: &TimeSeries, node: NodeId, z_ref: f64, floor_dbm: f64) -> Result<ToneSpectrum> {
    if !(z_ref > 0.0) {
        return Err(Error::invalid("z_ref", "must be > 0"));
    }
    if node == 0 || node > ts.voltages.len() {
        return Err(Error::invalid("node", "not a recorded node"));
    }
    if !(ts.base_freq > 0.0) {
        return Err(Error::invalid("base_freq", "the record has no base tone"));
    }
    let samples = ts.voltage(node);
    let half = samples.len() / 2;
    let available = (samples.len() - half) as f64 * ts.dt;
    let periods = (available * ts.base_freq * (1.0 + 1e-9)).floor();
    if periods < MIN_PERIODS as f64 {
        return Err(Error::WindowTooShort { periods: available * ts.base_freq, required: MIN_PERIODS });
    }
    let len = ((periods / ts.base_freq) / ts.dt).round() as usize;
    let window = &samples[samples.len() - len..];
    analyse(window, ts.dt, periods as usize, z_ref, floor_dbm)
}

fn analyse(x: &[f64], dt: f64, periods: usize, z_ref: f64, floor_dbm: f64) -> Result<ToneSpectrum> {
    let n = x.len();
    let w: Vec<f64> = (0..n).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos()).collect();
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let mut buf: Vec<Complex<f64>> = x.iter().zip(&w).map(|(v, w)| Complex::new(v * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    // One-sided power per bin, normalised so a bin-centred sinusoid's lobe sums to A^2 / (2 R).
    let bins = n / 2 + 1;
    let power: Vec<f64> = (0..bins)
        .map(|k| {
            let scale = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
            scale * buf[k].norm_sqr() / (n as f64 * w2) / z_ref
        })
        .collect();
    let mean_power = x.iter().map(|v| v * v).sum::<f64>() / n as f64 / z_ref;
    let spectral_total: f64 = power.iter().sum();
    let df = 1.0 / (n as f64 * dt);

    // Tones sit on multiples of `periods` bins; the lobe spans two bins either side.
    let lobe = 2usize;
    let mut tones = Vec::new();
    let mut claimed = 0.0;
    let mut k = 0;
    while k < bins {
        let lo = k.saturating_sub(lobe);
        let hi = (k + lobe).min(bins - 1);
        let p: f64 = power[lo..=hi].iter().sum();
        let p = if k == 0 { power[0] + power[1..=hi].iter().sum::<f64>() } else { p };
        if p > 0.0 && dbm(p) > floor_dbm {
            tones.push(Tone { freq: k as f64 * df, power_dbm: dbm(p), phase: buf[k].arg() });
            claimed += p;
        }
        k += periods.max(1);
    }
    let scale = mean_power / spectral_total.max(f64::MIN_POSITIVE);
    Ok(ToneSpectrum {
        tones,
        noise_floor: floor_dbm,
        total_power_dbm: dbm(mean_power),
        residual_w: (spectral_total - claimed) * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(dt: f64, base: f64, n: usize, f: impl Fn(f64) -> f64) -> TimeSeries {
        let v: Vec<f64> = (0..n).map(|k| f(k as f64 * dt)).collect();
        TimeSeries {
            dt,
            base_freq: base,
            node_names: vec!["out".into()],
            voltages: vec![v],
            inductor_currents: vec![],
            port_names: vec![],
            port_currents: vec![],
        }
    }

    #[test]
    fn zero_dbm_sinusoid() {
        let f = 1e9;
        let ts = series(1.0 / (64.0 * f), f / 2.0, 64 * 80, |t| 0.316_227_766 * (2.0 * PI * f * t).sin());
        let s = spectrum(&ts, 1, 50.0).unwrap();
        assert_eq!(s.tones.len(), 1, "{:?}", s.tones);
        assert!((s.tones[0].freq - f).abs() < 1.0);
        assert!(s.tones[0].power_dbm.abs() < 0.05, "{}", s.tones[0].power_dbm);
    }

    #[test]
    fn two_tones_no_spurs() {
        let base = 0.1e9;
        let ts = series(1.0 / (64.0 * 1.7e9), base, 40_000, |t| {
            0.1 * (2.0 * PI * 1.0e9 * t).sin() + 0.05 * (2.0 * PI * 1.7e9 * t + 0.3).cos()
        });
        let s = spectrum(&ts, 1, 50.0).unwrap();
        let freqs: Vec<f64> = s.tones.iter().map(|t| (t.freq / 1e6).round()).collect();
        assert_eq!(freqs, vec![1000.0, 1700.0]);
        assert!((s.power_at(1.0e9, 1e6) - dbm(0.01 / 100.0)).abs() < 0.05);
        assert!((s.power_at(1.7e9, 1e6) - dbm(0.0025 / 100.0)).abs() < 0.05);
    }

    #[test]
    fn parseval() {
        let f = 1e9;
        let ts = series(1.0 / (64.0 * f), f / 2.0, 64 * 64, |t| {
            0.2 * (2.0 * PI * f * t).sin() + 0.07 * (2.0 * PI * 1.5 * f * t).cos() + 0.01
        });
        let s = spectrum(&ts, 1, 50.0).unwrap();
        let tones: f64 = s.tones.iter().map(|t| 1e-3 * 10f64.powf(t.power_dbm / 10.0)).sum();
        let total = 1e-3 * 10f64.powf(s.total_power_dbm / 10.0);
        assert!(((tones + s.residual_w) - total).abs() / total < 5e-3);
    }

    #[test]
    fn short_window_is_rejected() {
        let f = 1e9;
        let ts = series(1.0 / (64.0 * f), f / 2.0, 64 * 10, |t| (2.0 * PI * f * t).sin());
        assert!(matches!(spectrum(&ts, 1, 50.0), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn silence_reports_nothing() {
        let ts = series(1e-12, 1e9, 40_000, |_| 0.0);
        let s = spectrum(&ts, 1, 50.0).unwrap();
        assert!(s.tones.is_empty());
        assert_eq!(s.power_at(1e9, 1e6), DEFAULT_FLOOR_DBM);
    }
}
