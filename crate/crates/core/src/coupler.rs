//! Centre-fed arc coupler treated as a quarter-wave coupled-line band-pass section.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default stopband rejection reported where the image impedance is not real.
pub const DEFAULT_REJECTION_FLOOR_DB: f64 = 40.0;

/// Coupled pair with `theta = pi/2` at `f_design`, linear in frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledLineSpec {
    pub z_even: f64,
    pub z_odd: f64,
    pub f_design: f64,
}

impl Default for CoupledLineSpec {
    fn default() -> Self {
        CoupledLineSpec { z_even: 70.0, z_odd: 40.0, f_design: 2.4e9 }
    }
}

impl CoupledLineSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_odd > 0.0) {
            return Err(Error::invalid("coupler.z_odd", "must be > 0"));
        }
        if !(self.z_even > self.z_odd) {
            return Err(Error::invalid("coupler.z_even", "must exceed z_odd"));
        }
        if !(self.f_design > 0.0) {
            return Err(Error::invalid("coupler.f_design", "must be > 0"));
        }
        Ok(())
    }

    pub fn theta_at(&self, f: f64) -> f64 {
        FRAC_PI_2 * f / self.f_design
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageImpedances {
    pub z_i: Complex64,
    pub z_d: Complex64,
}

impl ImageImpedances {
    pub fn is_passband(&self) -> bool {
        self.z_i.im == 0.0 && self.z_i.re > 0.0
    }
}

/// Image impedances of the section at electrical length `theta`.
///
/// Real inside the passband, purely imaginary outside.
pub fn image_impedances(theta: f64, spec: &CoupledLineSpec) -> Result<ImageImpedances> {
    let s = theta.sin();
    if !(theta > 0.0 && theta < PI) || s.abs() < 1e-12 {
        return Err(Error::Domain(format!("theta = {theta} is outside (0, pi)")));
    }
    let (ze, zo) = (spec.z_even, spec.z_odd);
    let c = theta.cos();
    let arg = (zo - ze).powi(2) - (zo + ze).powi(2) * c * c;
    let root = if arg >= 0.0 { Complex64::new(arg.sqrt(), 0.0) } else { Complex64::new(0.0, (-arg).sqrt()) };
    let z_i = (zo * ze).sqrt() * root / ((zo + ze) * s);
    let z_d = if z_i.norm() == 0.0 { Complex64::new(f64::INFINITY, 0.0) } else { zo * ze / z_i };
    Ok(ImageImpedances { z_i, z_d })
}

/// Electrical lengths bounding the passband, symmetric about `pi/2`.
pub fn passband_edges(spec: &CoupledLineSpec) -> (f64, f64) {
    let k = (spec.z_even - spec.z_odd) / (spec.z_even + spec.z_odd);
    let half_width = FRAC_PI_2 - k.acos();
    (FRAC_PI_2 - half_width, FRAC_PI_2 + half_width)
}

fn mismatch_loss_db(z: Complex64, z_ref: f64) -> Option<f64> {
    if z.im != 0.0 || !(z.re > 0.0) {
        return None;
    }
    let gamma = (z.re - z_ref) / (z.re + z_ref);
    let t = 1.0 - gamma * gamma;
    (t > 0.0).then(|| -10.0 * t.log10())
}

/// Rejection (dB) at `f` relative to the passband centre, from the mismatch between the
/// image impedance and `z_ref`. Outside the passband the result is `floor_db`.
pub fn rejection_estimate_with_floor(f: f64, spec: &CoupledLineSpec, z_ref: f64, floor_db: f64) -> f64 {
    let theta = spec.theta_at(f);
    let centre = image_impedances(FRAC_PI_2, spec).ok().and_then(|z| mismatch_loss_db(z.z_i, z_ref));
    let here = image_impedances(theta, spec).ok().and_then(|z| mismatch_loss_db(z.z_i, z_ref));
    match (here, centre) {
        (Some(l), Some(l0)) => (l - l0).max(0.0).min(floor_db),
        _ => floor_db,
    }
}

pub fn rejection_estimate(f: f64, spec: &CoupledLineSpec, z_ref: f64) -> f64 {
    rejection_estimate_with_floor(f, spec, z_ref, DEFAULT_REJECTION_FLOOR_DB)
}
