//! Closed-form parametric theory: pumped varactor elements, standing-wave node
//! swings around the ring, and harmonic growth along a travelling-wave NLTL.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{RingSpec, TaylorCoeffs};
use crate::error::{Error, Result};
use crate::smallsignal;

/// Pump drive at node M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpState {
    pub v_p0: f64,
    pub f_pump: f64,
    /// Loaded phase per cell at `f_pump` (rad).
    pub beta2_d: f64,
}

impl PumpState {
    /// Pump state with `beta2_d` taken from the ring's dispersion at `f_pump`.
    pub fn on_ring(ring: &RingSpec, v_p0: f64, f_pump: f64) -> Result<Self> {
        let state = PumpState { v_p0, f_pump, beta2_d: smallsignal::loaded_phase(f_pump, &ring.cell).beta_d };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_p0 >= 0.0 && self.v_p0.is_finite()) {
            return Err(Error::invalid("pump.v_p0", "must be >= 0"));
        }
        if !(self.f_pump > 0.0) {
            return Err(Error::invalid("pump.f_pump", "must be > 0"));
        }
        Ok(())
    }
}

/// Travelling-wave NLTL description for harmonic growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NltlSpec {
    pub beta1_d: f64,
    pub beta2_d: f64,
    pub alpha2_d: f64,
    /// Lumped nonlinearity coefficient (1/V).
    pub k_nl: f64,
    pub d: f64,
}

impl NltlSpec {
    /// Spec with a given phase mismatch `delta_beta_d = beta2_d - 2 beta1_d`.
    pub fn with_mismatch(beta1_d: f64, delta_beta_d: f64, alpha2_d: f64) -> Self {
        NltlSpec { beta1_d, beta2_d: 2.0 * beta1_d + delta_beta_d, alpha2_d, k_nl: 0.5, d: 4e-3 }
    }

    pub fn delta_beta_d(&self) -> f64 {
        self.beta2_d - 2.0 * self.beta1_d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta2_d > 0.0) {
            return Err(Error::invalid("nltl.beta2_d", "must be > 0"));
        }
        if !(self.alpha2_d >= 0.0) {
            return Err(Error::invalid("nltl.alpha2_d", "must be >= 0"));
        }
        if !(self.k_nl >= 0.0) {
            return Err(Error::invalid("nltl.k_nl", "must be >= 0"));
        }
        Ok(())
    }
}

/// Pumped varactor seen at the signal frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveElements {
    pub c_e: f64,
    /// Negative; `-inf` when unpumped.
    pub r_e: f64,
}

/// Effective capacitance and negative resistance of a varactor pumped with amplitude `v_p`.
pub fn effective_elements(tc: &TaylorCoeffs, v_p: f64, f_signal: f64) -> EffectiveElements {
    let c_e = tc.c0 + 0.5 * tc.c2 * v_p * v_p;
    let g = 2.0 * PI * f_signal * tc.c1.abs() * v_p;
    let r_e = if g > 0.0 { -2.0 / g } else { f64::NEG_INFINITY };
    EffectiveElements { c_e, r_e }
}

fn node_cos(ring: &RingSpec, n: usize, pump: &PumpState) -> Result<f64> {
    if n < 1 || n > ring.n_cells {
        return Err(Error::invalid("n", format!("node index must lie in 1..={}", ring.n_cells)));
    }
    Ok(wave_cos(ring.coordinate(ring.varactor_position(n)), ring, pump))
}

fn wave_cos(x: f64, ring: &RingSpec, pump: &PumpState) -> f64 {
    (pump.beta2_d * x / ring.cell.d).cos().abs()
}

/// Pump swing at the `n`-th varactor counted from M.
///
/// `2 v_p0 |cos(beta2 x)|` with `x` the distance from M the short way round, so
/// the first diodes on either side share `x = d/2` and the swing peaks at D.
pub fn node_pump_amplitude(ring: &RingSpec, n: usize, pump: &PumpState) -> Result<f64> {
    Ok(2.0 * pump.v_p0 * node_cos(ring, n, pump)?)
}

/// Negative resistance of the `n`-th diode at the subharmonic `f_pump / 2`.
pub fn node_negative_resistance(ring: &RingSpec, n: usize, pump: &PumpState, tc: &TaylorCoeffs) -> Result<f64> {
    let g = PI * pump.f_pump * tc.c1.abs() * pump.v_p0 * node_cos(ring, n, pump)?;
    Ok(if g > 0.0 { -1.0 / g } else { f64::NEG_INFINITY })
}

/// Second-harmonic phasor after `n` NLTL stages for a fundamental of amplitude `v_s`.
///
/// `|V| = k v_s² (beta2 d / |dbd|) |sin(dbd n / 2)| exp(-alpha2 d n)`; at `dbd = 0` the
/// growth is linear, `k v_s² beta2 d n / 2`.
pub fn nltl_harmonic_amplitude(n: usize, v_s: f64, spec: &NltlSpec) -> Complex64 {
    let nf = n as f64;
    let dbd = spec.delta_beta_d();
    let half = 0.5 * dbd * nf;
    // sin(half) / dbd, continued through dbd = 0
    let ratio = if half.abs() < 1e-4 { 0.5 * nf * (1.0 - half * half / 6.0) } else { half.sin() / dbd };
    let mag = spec.k_nl * v_s * v_s * spec.beta2_d * ratio.abs() * (-spec.alpha2_d * nf).exp();
    Complex64::from_polar(mag, -(spec.beta2_d - half) * nf)
}

/// Stage count in `1..=n_max` maximising the second-harmonic amplitude; ties go to fewer stages.
pub fn optimal_stage_count(spec: &NltlSpec, n_max: usize) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for n in 1..=n_max.max(1) {
        let a = nltl_harmonic_amplitude(n, 1.0, spec).norm();
        if a > best.1 * (1.0 + 1e-12) {
            best = (n, a);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandingWaveMode {
    Divider,
    Doubler,
}

/// Standing-wave magnitudes sampled along the ring.
///
/// `x` runs from `-L/2` to `L/2` with M at 0 and D at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandingWaveProfile {
    pub x: Vec<f64>,
    /// Wave at `f_pump / 2`.
    pub subharmonic: Vec<f64>,
    /// Wave at `f_pump`.
    pub harmonic: Vec<f64>,
}

/// Magnitude profiles of both tones.
///
/// Divider: the harmonic is the pump in volts, `2 v_p0 |cos(beta2 x)|`, and the subharmonic is
/// `|sin(beta1 x)|` normalised to its value at D. Doubler: the subharmonic is the drive, scaled to
/// `v_p0` at D, and the harmonic is normalised so its value at M is 1.
pub fn standing_wave_profile(
    mode: StandingWaveMode,
    ring: &RingSpec,
    pump: &PumpState,
    x_points: usize,
) -> Result<StandingWaveProfile> {
    if x_points < 8 {
        return Err(Error::invalid("x_points", "must be >= 8"));
    }
    let d = ring.cell.d;
    let half_length = 0.5 * ring.n_cells as f64 * d;
    let beta1 = smallsignal::loaded_phase(0.5 * pump.f_pump, &ring.cell).beta_d / d;
    let beta2 = pump.beta2_d / d;
    let sub_at_d = (beta1 * half_length).sin().abs();

    let x: Vec<f64> = (0..x_points)
        .map(|i| -half_length + 2.0 * half_length * i as f64 / (x_points - 1) as f64)
        .collect();
    let sub_shape = |x: f64| (beta1 * x).sin().abs() / sub_at_d.max(f64::MIN_POSITIVE);
    let harm_shape = |x: f64| (beta2 * x).cos().abs();
    let (sub_scale, harm_scale) = match mode {
        StandingWaveMode::Divider => (1.0, 2.0 * pump.v_p0),
        StandingWaveMode::Doubler => (pump.v_p0, 1.0),
    };
    Ok(StandingWaveProfile {
        subharmonic: x.iter().map(|&x| sub_scale * sub_shape(x)).collect(),
        harmonic: x.iter().map(|&x| harm_scale * harm_shape(x)).collect(),
        x,
    })
}

/// Pump swing at an arbitrary ring coordinate, consistent with [`standing_wave_profile`].
pub fn pump_amplitude_at(x: f64, ring: &RingSpec, pump: &PumpState) -> f64 {
    2.0 * pump.v_p0 * wave_cos(x, ring, pump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Varactor;

    const PF: f64 = 1e-12;

    fn ring() -> RingSpec {
        RingSpec::calibrated(3).unwrap()
    }

    #[test]
    fn unpumped_varactor() {
        let tc = Varactor::default().taylor_coefficients();
        let e = effective_elements(&tc, 0.0, 2.4e9);
        assert_eq!(e.c_e, tc.c0);
        assert_eq!(e.r_e, f64::NEG_INFINITY);
    }

    #[test]
    fn pumped_effective_elements() {
        let tc = TaylorCoeffs { c0: 2.67 * PF, c1: -1.907 * PF, c2: 2.04 * PF };
        let e = effective_elements(&tc, 0.5, 2.4e9);
        assert!((e.c_e - 2.925 * PF).abs() < 0.01 * PF, "{}", e.c_e);
        assert!((e.r_e + 139.1).abs() < 0.5, "{}", e.r_e);
        let e2 = effective_elements(&tc, 1.0, 2.4e9);
        assert!((e2.r_e - e.r_e / 2.0).abs() < 1e-12 * e.r_e.abs());
    }

    #[test]
    fn node_resistance_matches_effective_elements() {
        let ring = ring();
        let tc = ring.cell.varactor.taylor_coefficients();
        let pump = PumpState::on_ring(&ring, 0.4, 4.8e9).unwrap();
        for n in 1..=3 {
            let vn = node_pump_amplitude(&ring, n, &pump).unwrap();
            let direct = node_negative_resistance(&ring, n, &pump, &tc).unwrap();
            let via = effective_elements(&tc, vn, 2.4e9).r_e;
            assert!((direct - via).abs() <= 1e-12 * direct.abs(), "{direct} {via}");
        }
    }

    #[test]
    fn standing_wave_null() {
        let ring = ring();
        let pump = PumpState { v_p0: 1.0, f_pump: 4.8e9, beta2_d: PI };
        // first diode sits at d/2, so beta2 d = pi puts it on a null
        assert!(node_pump_amplitude(&ring, 1, &pump).unwrap() < 1e-12);
        let tc = ring.cell.varactor.taylor_coefficients();
        let r = node_negative_resistance(&ring, 1, &pump, &tc).unwrap();
        assert!(r.is_infinite() || r < -1e12, "{r}");
    }

    #[test]
    fn node_d_swings_harder_than_a_single_diode() {
        let ring = ring();
        let tc = ring.cell.varactor.taylor_coefficients();
        let pump = PumpState::on_ring(&ring, 0.3, 4.8e9).unwrap();
        let single = effective_elements(&tc, pump.v_p0, 2.4e9).r_e;
        let at_d = node_negative_resistance(&ring, 2, &pump, &tc).unwrap();
        assert!(at_d.abs() < single.abs(), "{at_d} {single}");
    }

    #[test]
    fn index_outside_ring() {
        let ring = ring();
        let pump = PumpState::on_ring(&ring, 1.0, 4.8e9).unwrap();
        assert!(node_pump_amplitude(&ring, 0, &pump).is_err());
        assert!(node_pump_amplitude(&ring, 4, &pump).is_err());
    }

    #[test]
    fn harmonic_growth_limits() {
        let spec = NltlSpec::with_mismatch(0.5, 0.0, 0.0);
        assert_eq!(nltl_harmonic_amplitude(0, 1.0, &spec).norm(), 0.0);
        let a1 = nltl_harmonic_amplitude(1, 1.0, &spec).norm();
        for n in 2..20 {
            let an = nltl_harmonic_amplitude(n, 1.0, &spec).norm();
            assert!((an - n as f64 * a1).abs() < 1e-9 * an);
        }
        let near = NltlSpec { beta1_d: 0.5 - 0.5e-6, ..spec };
        for n in [1, 7, 30] {
            let a = nltl_harmonic_amplitude(n, 1.0, &spec).norm();
            let b = nltl_harmonic_amplitude(n, 1.0, &near).norm();
            assert!((a - b).abs() < 1e-9 * a.max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn optimum_stage_count() {
        let lossless = NltlSpec::with_mismatch(0.4, PI / 10.0, 0.0);
        assert_eq!(optimal_stage_count(&lossless, 30), 10);
        let lossy = NltlSpec::with_mismatch(0.4, PI / 10.0, 0.2);
        assert!(optimal_stage_count(&lossy, 30) < 10);
        assert_eq!(optimal_stage_count(&lossless, 1), 1);
    }

    #[test]
    fn profile_shape() {
        let ring = ring();
        let pump = PumpState::on_ring(&ring, 0.5, 4.8e9).unwrap();
        let p = standing_wave_profile(StandingWaveMode::Divider, &ring, &pump, 121).unwrap();
        assert_eq!(p.subharmonic[60], 0.0);
        assert!(p.x[60].abs() < 1e-15);
        for i in 0..121 {
            assert!((p.subharmonic[i] - p.subharmonic[120 - i]).abs() < 1e-12);
            assert!((p.harmonic[i] - p.harmonic[120 - i]).abs() < 1e-12);
        }
        assert!((p.subharmonic[0] - 1.0).abs() < 1e-12);
        assert!(standing_wave_profile(StandingWaveMode::Doubler, &ring, &pump, 7).is_err());
    }

    #[test]
    fn profile_samples_match_node_amplitudes() {
        let ring = ring();
        let pump = PumpState::on_ring(&ring, 0.7, 4.8e9).unwrap();
        for n in 1..=3 {
            let x = ring.coordinate(ring.varactor_position(n));
            let a = pump_amplitude_at(x, &ring, &pump);
            assert_eq!(a, node_pump_amplitude(&ring, n, &pump).unwrap());
        }
    }
}
