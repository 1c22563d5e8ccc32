//! Multipath phase-of-arrival error for single-band and dual-band round trips,
//! and a free-space link budget.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::C_LIGHT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub delay: f64,
    pub gain: Complex64,
}

/// Tapped-delay channel. `paths[0]` is the line of sight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathChannel {
    pub paths: Vec<Path>,
}

impl MultipathChannel {
    pub fn line_of_sight(distance: f64) -> Self {
        MultipathChannel { paths: vec![Path { delay: distance / C_LIGHT, gain: Complex64::new(1.0, 0.0) }] }
    }

    pub fn with_reflector(mut self, excess_delay: f64, gain: Complex64) -> Self {
        let delay = self.paths[0].delay + excess_delay;
        self.paths.push(Path { delay, gain });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let Some(los) = self.paths.first() else {
            return Err(Error::invalid("channel.paths", "at least one path is required"));
        };
        if self.paths.iter().any(|p| p.delay < los.delay) {
            return Err(Error::invalid("channel.paths", "no path may arrive before the line of sight"));
        }
        Ok(())
    }
}

pub fn channel_response(ch: &MultipathChannel, f: f64) -> Complex64 {
    ch.paths.iter().map(|p| p.gain * Complex64::from_polar(1.0, -2.0 * PI * f * p.delay)).sum()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Phase of `H(f)` relative to the line-of-sight phase `-2 pi f tau_0`.
///
/// `|H|` below `1e-12` of the summed path magnitudes counts as a null.
pub fn phase_error(ch: &MultipathChannel, f: f64) -> Result<f64> {
    let los = ch.paths.first().ok_or_else(|| Error::invalid("channel.paths", "empty channel"))?;
    let h = channel_response(ch, f);
    let scale: f64 = ch.paths.iter().map(|p| p.gain.norm()).sum();
    if h.norm() <= 1e-12 * scale {
        return Err(Error::UndefinedPhase);
    }
    let reference = Complex64::from_polar(1.0, -2.0 * PI * f * los.delay);
    Ok(wrap_phase((h / reference).arg() - los.gain.arg()))
}

/// Round-trip error for an `(f_up, f_down)` plan.
pub fn round_trip_phase_error(up: &MultipathChannel, down: &MultipathChannel, plan: (f64, f64)) -> Result<f64> {
    Ok(wrap_phase(phase_error(up, plan.0)? + phase_error(down, plan.1)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Uplink `f`, downlink `2f`.
    SingleBand,
    /// Both plans, `f -> 2f` and `2f -> f`, averaged.
    DualBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangingScheme {
    pub kind: SchemeKind,
    pub f_base: f64,
}

impl RangingScheme {
    pub fn error(&self, up: &MultipathChannel, down: &MultipathChannel) -> Result<f64> {
        let f = self.f_base;
        let a = round_trip_phase_error(up, down, (f, 2.0 * f))?;
        match self.kind {
            SchemeKind::SingleBand => Ok(a),
            SchemeKind::DualBand => {
                let b = round_trip_phase_error(up, down, (2.0 * f, f))?;
                Ok(0.5 * (a + b))
            }
        }
    }
}

/// Random indoor channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub distance: f64,
    pub max_excess_delay: f64,
    pub max_gain: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { distance: 2.0, max_excess_delay: 20e-9, max_gain: 0.4 }
    }
}

impl ChannelModel {
    fn reflector(&self, rng: &mut ChaCha8Rng) -> (f64, Complex64) {
        // (0, max] rather than [0, max)
        let delay = self.max_excess_delay * (1.0 - rng.random::<f64>());
        let mag = self.max_gain * rng.random::<f64>();
        let phase = 2.0 * PI * rng.random::<f64>();
        (delay, Complex64::from_polar(mag, phase))
    }

    /// Up and down channels of trial `trial`.
    ///
    /// Trial `i` draws from ChaCha8 seeded with `seed` on stream `i`; reflectors are drawn as
    /// (up, down) pairs, so the first `n` pairs do not depend on `n_paths`.
    pub fn draw(&self, n_paths: usize, seed: u64, trial: u64) -> (MultipathChannel, MultipathChannel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let mut up = MultipathChannel::line_of_sight(self.distance);
        let mut down = up.clone();
        for _ in 0..n_paths {
            let (d, g) = self.reflector(&mut rng);
            up = up.with_reflector(d, g);
            let (d, g) = self.reflector(&mut rng);
            down = down.with_reflector(d, g);
        }
        (up, down)
    }
}

pub const MIN_TRIALS: usize = 1000;

/// Per-trial round-trip errors, in trial order.
pub fn trial_errors(
    scheme: &RangingScheme,
    model: &ChannelModel,
    n_paths: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(scheme.f_base > 0.0) {
        return Err(Error::invalid("localization.f_base", "must be > 0"));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (up, down) = model.draw(n_paths, seed, i);
            scheme.error(&up, &down)
        })
        .collect()
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Sample variance (rad²) of the scheme's round-trip error over `trials` random channels.
pub fn monte_carlo_variance(scheme: &RangingScheme, n_paths: usize, trials: usize, seed: u64) -> Result<f64> {
    monte_carlo_variance_with(scheme, &ChannelModel::default(), n_paths, trials, seed)
}

pub fn monte_carlo_variance_with(
    scheme: &RangingScheme,
    model: &ChannelModel,
    n_paths: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid("localization.trials", format!("must be >= {MIN_TRIALS}")));
    }
    Ok(sample_variance(&trial_errors(scheme, model, n_paths, trials, seed)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub n_paths: usize,
    pub single_band: f64,
    pub dual_band: f64,
}

/// Both schemes evaluated on the same channel draws.
pub fn compare_schemes(
    f_base: f64,
    model: &ChannelModel,
    n_paths: usize,
    trials: usize,
    seed: u64,
) -> Result<VarianceComparison> {
    let single = RangingScheme { kind: SchemeKind::SingleBand, f_base };
    let dual = RangingScheme { kind: SchemeKind::DualBand, f_base };
    Ok(VarianceComparison {
        n_paths,
        single_band: monte_carlo_variance_with(&single, model, n_paths, trials, seed)?,
        dual_band: monte_carlo_variance_with(&dual, model, n_paths, trials, seed)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRange {
    pub range_m: f64,
    pub margin_db: f64,
    /// False when the transmit power does not exceed the sensitivity.
    pub closes: bool,
}

/// Free-space (Friis) range at which the received power falls to `sensitivity`.
pub fn link_range(p_tx: f64, g_tx: f64, g_rx: f64, f: f64, sensitivity: f64) -> Result<LinkRange> {
    if !(f > 0.0) {
        return Err(Error::invalid("f", "must be > 0"));
    }
    let margin_db = p_tx + g_tx + g_rx - sensitivity;
    if p_tx <= sensitivity {
        return Ok(LinkRange { range_m: 0.0, margin_db, closes: false });
    }
    let range_m = C_LIGHT / (4.0 * PI * f) * 10f64.powf(margin_db / 20.0);
    Ok(LinkRange { range_m, margin_db, closes: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_of_sight_response() {
        let ch = MultipathChannel::line_of_sight(3.0);
        let f = 2.4e9;
        let h = channel_response(&ch, f);
        assert!((h.norm() - 1.0).abs() < 1e-12);
        let expect = wrap_phase(-2.0 * PI * f * 3.0 / C_LIGHT);
        assert!((wrap_phase(h.arg() - expect)).abs() < 1e-9);
        assert_eq!(phase_error(&ch, f).unwrap(), 0.0);
    }

    #[test]
    fn superposition() {
        let a = MultipathChannel::line_of_sight(2.0).with_reflector(3e-9, Complex64::new(0.2, 0.1));
        let b = MultipathChannel::line_of_sight(5.0).with_reflector(1e-9, Complex64::new(-0.3, 0.0));
        let joined = MultipathChannel { paths: a.paths.iter().chain(&b.paths).copied().collect() };
        let f = 1.7e9;
        let diff = channel_response(&joined, f) - channel_response(&a, f) - channel_response(&b, f);
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn fading_null() {
        let f = 2.4e9;
        let ch = MultipathChannel::line_of_sight(2.0).with_reflector(1.0 / (2.0 * f), Complex64::new(1.0, 0.0));
        assert!(channel_response(&ch, f).norm() < 1e-9);
        let exact = MultipathChannel {
            paths: vec![
                Path { delay: 0.0, gain: Complex64::new(1.0, 0.0) },
                Path { delay: 0.5, gain: Complex64::new(1.0, 0.0) },
            ],
        };
        assert_eq!(phase_error(&exact, 1.0), Err(Error::UndefinedPhase));
    }

    #[test]
    fn weak_quadrature_reflector() {
        let f = 2.4e9;
        // excess delay of 3/4 period turns the reflection into +j relative to the LOS
        let ch = MultipathChannel::line_of_sight(2.0).with_reflector(0.75 / f, Complex64::new(0.1, 0.0));
        let e = phase_error(&ch, f).unwrap();
        assert!((e - 0.1f64.atan()).abs() < 1e-9, "{e}");
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_composition() {
        let los = MultipathChannel::line_of_sight(2.0);
        assert_eq!(round_trip_phase_error(&los, &los, (2.4e9, 4.8e9)).unwrap(), 0.0);
        let model = ChannelModel::default();
        let (up, down) = model.draw(3, 9, 0);
        let a = round_trip_phase_error(&up, &down, (2.4e9, 4.8e9)).unwrap();
        let b = round_trip_phase_error(&up, &down, (4.8e9, 2.4e9)).unwrap();
        assert!((a - b).abs() > 1e-6);
    }

    #[test]
    fn small_errors_scale_with_gain() {
        let f = 2.4e9;
        let ch = |g: f64| MultipathChannel::line_of_sight(2.0).with_reflector(1.3e-9, Complex64::from_polar(g, 0.7));
        let e1 = phase_error(&ch(0.005), f).unwrap();
        let e2 = phase_error(&ch(0.01), f).unwrap();
        assert!((e2 / e1 - 2.0).abs() < 0.02, "{}", e2 / e1);
    }

    #[test]
    fn positive_scaling_leaves_phase_error_alone() {
        let (up, _) = ChannelModel::default().draw(4, 3, 11);
        let scaled = MultipathChannel { paths: up.paths.iter().map(|p| Path { gain: p.gain * 3.7, ..*p }).collect() };
        for f in [2.4e9, 4.8e9] {
            assert!((phase_error(&up, f).unwrap() - phase_error(&scaled, f).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn los_only_has_no_variance() {
        let c = compare_schemes(2.4e9, &ChannelModel::default(), 0, 1000, 1).unwrap();
        assert_eq!(c.single_band, 0.0);
        assert_eq!(c.dual_band, 0.0);
    }

    #[test]
    fn too_few_trials() {
        let s = RangingScheme { kind: SchemeKind::SingleBand, f_base: 2.4e9 };
        assert!(monte_carlo_variance(&s, 2, 999, 1).is_err());
    }

    #[test]
    fn dual_band_beats_single_band() {
        let c = compare_schemes(2.4e9, &ChannelModel::default(), 4, 10_000, 7).unwrap();
        assert!(c.dual_band < c.single_band, "{c:?}");
    }

    #[test]
    fn reproducible() {
        let s = RangingScheme { kind: SchemeKind::DualBand, f_base: 2.4e9 };
        let a = monte_carlo_variance(&s, 3, 2000, 42).unwrap();
        let b = monte_carlo_variance(&s, 3, 2000, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn friis_range() {
        let r = link_range(-9.0, 0.0, 0.0, 2.4e9, -50.0).unwrap();
        assert!((r.range_m - 1.115).abs() < 0.01, "{}", r.range_m);
        let r6 = link_range(-3.0, 0.0, 0.0, 2.4e9, -50.0).unwrap();
        assert!((r6.range_m / r.range_m - 10f64.powf(0.3)).abs() < 1e-12);
        let dead = link_range(-50.0, 0.0, 0.0, 2.4e9, -50.0).unwrap();
        assert!(!dead.closes && dead.range_m == 0.0);
    }
}
