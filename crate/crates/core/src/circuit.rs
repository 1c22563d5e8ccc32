//! Device and geometry types shared by every analysis: the junction varactor,
//! the transmission-line unit cell, the closed ring and its port networks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallsignal::{self, TwoPortMatrix};

/// Speed of light in vacuum (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;

/// Fraction of `vj` beyond which the forward-bias capacitance is continued
/// linearly in the transient model (SPICE `FC`).
pub const FORWARD_KNEE: f64 = 0.5;

/// Reverse-biased junction capacitor, `C(v) = c0 (1 + (v_bias + v)/vj)^-m`.
///
/// Positive `v` is reverse bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Varactor {
    pub c0: f64,
    pub vj: f64,
    pub m: f64,
    pub v_bias: f64,
    pub r_s: f64,
}

impl Default for Varactor {
    fn default() -> Self {
        Self::silicon_abrupt(2.67e-12)
    }
}

impl Varactor {
    /// Abrupt silicon junction: `m = 0.5`, `vj = 0.7 V`, zero bias, 0.5 Ω series loss.
    pub fn silicon_abrupt(c0: f64) -> Self {
        Varactor { c0, vj: 0.7, m: 0.5, v_bias: 0.0, r_s: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(Error::invalid("varactor.c0", format!("must be >= 0, got {}", self.c0)));
        }
        if !(self.vj > 0.0) {
            return Err(Error::invalid("varactor.vj", format!("must be > 0, got {}", self.vj)));
        }
        if !(self.m >= 0.0 && self.m < 1.5) {
            return Err(Error::invalid("varactor.m", format!("must lie in [0, 1.5), got {}", self.m)));
        }
        if !(self.v_bias >= 0.0) {
            return Err(Error::invalid("varactor.v_bias", format!("must be >= 0, got {}", self.v_bias)));
        }
        if !(self.r_s >= 0.0) {
            return Err(Error::invalid("varactor.r_s", format!("must be >= 0, got {}", self.r_s)));
        }
        Ok(())
    }

    fn check_domain(&self, v: f64) -> Result<f64> {
        let x = 1.0 + (self.v_bias + v) / self.vj;
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "varactor voltage {v} V is at or beyond the junction potential (-{} V)",
                self.vj + self.v_bias
            )));
        }
        Ok(x)
    }

    /// Junction capacitance at incremental voltage `v` on top of `v_bias`.
    pub fn capacitance(&self, v: f64) -> Result<f64> {
        let x = self.check_domain(v)?;
        Ok(self.c0 * x.powf(-self.m))
    }

    /// Small-signal capacitance at the bias point.
    pub fn bias_capacitance(&self) -> f64 {
        self.c0 * (1.0 + self.v_bias / self.vj).powf(-self.m)
    }

    /// Stored charge relative to the bias point, `Q(0) = 0`, `dQ/dv = C(v)`.
    pub fn charge(&self, v: f64) -> Result<f64> {
        let x = self.check_domain(v)?;
        let x0 = 1.0 + self.v_bias / self.vj;
        Ok(self.charge_between(x0, x))
    }

    fn charge_between(&self, x0: f64, x: f64) -> f64 {
        let scale = self.c0 * self.vj;
        if (self.m - 1.0).abs() < 1e-12 {
            scale * (x / x0).ln()
        } else {
            let p = 1.0 - self.m;
            scale / p * (x.powf(p) - x0.powf(p))
        }
    }

    /// Second-order expansion of `C(v)` about the bias point.
    pub fn taylor_coefficients(&self) -> TaylorCoeffs {
        let c_bias = self.bias_capacitance();
        let v_eff = self.vj + self.v_bias;
        TaylorCoeffs {
            c0: c_bias,
            c1: -self.m * c_bias / v_eff,
            c2: self.m * (self.m + 1.0) * c_bias / (2.0 * v_eff * v_eff),
        }
    }

    // Voltage at which the forward-bias continuation starts.
    fn knee(&self) -> f64 {
        -FORWARD_KNEE * (self.vj + self.v_bias)
    }

    /// Capacitance with a linear continuation past the forward knee, defined for all `v`.
    /// Identical to [`Varactor::capacitance`] above the knee and C¹ at the join.
    pub fn capacitance_extended(&self, v: f64) -> f64 {
        let knee = self.knee();
        if v >= knee {
            return self.c0 * (1.0 + (self.v_bias + v) / self.vj).powf(-self.m);
        }
        let xk = 1.0 + (self.v_bias + knee) / self.vj;
        let ck = self.c0 * xk.powf(-self.m);
        let slope = -self.m * ck / (self.vj * xk);
        ck + slope * (v - knee)
    }

    /// Charge consistent with [`Varactor::capacitance_extended`].
    pub fn charge_extended(&self, v: f64) -> f64 {
        let knee = self.knee();
        let x0 = 1.0 + self.v_bias / self.vj;
        if v >= knee {
            return self.charge_between(x0, 1.0 + (self.v_bias + v) / self.vj);
        }
        let xk = 1.0 + (self.v_bias + knee) / self.vj;
        let qk = self.charge_between(x0, xk);
        let ck = self.c0 * xk.powf(-self.m);
        let slope = -self.m * ck / (self.vj * xk);
        let dv = v - knee;
        qk + ck * dv + 0.5 * slope * dv * dv
    }
}

/// `C(v) ≈ c0 + c1 v + c2 v²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TaylorCoeffs {
    pub fn eval(&self, v: f64) -> f64 {
        self.c0 + self.c1 * v + self.c2 * v * v
    }
}

/// Unloaded microstrip parameters of the ring line.
///
/// `alpha` is the attenuation in Np/m at `alpha_ref_hz`; it scales with `sqrt(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub z0: f64,
    pub eps_eff: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_alpha_ref")]
    pub alpha_ref_hz: f64,
}

fn default_alpha_ref() -> f64 {
    2.4e9
}

impl LineSpec {
    pub fn lossless(z0: f64, eps_eff: f64) -> Self {
        LineSpec { z0, eps_eff, alpha: 0.0, alpha_ref_hz: default_alpha_ref() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::invalid("line.z0", format!("must be > 0, got {}", self.z0)));
        }
        if !(self.eps_eff >= 1.0 && self.eps_eff.is_finite()) {
            return Err(Error::invalid("line.eps_eff", format!("must be >= 1, got {}", self.eps_eff)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid("line.alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(self.alpha_ref_hz > 0.0) {
            return Err(Error::invalid("line.alpha_ref_hz", "must be > 0"));
        }
        Ok(())
    }

    /// Attenuation (Np/m) at frequency `f`.
    pub fn attenuation(&self, f: f64) -> f64 {
        self.alpha * (f.abs() / self.alpha_ref_hz).sqrt()
    }

    /// Sets `alpha` so that a line of length `length` loses `db` at the reference frequency.
    pub fn with_loss_db(mut self, db: f64, length: f64) -> Self {
        self.alpha = db / (20.0 * std::f64::consts::LOG10_E) / length;
        self
    }
}

/// One varactor-loaded cell: half-line, shunt varactor, half-line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCell {
    pub d: f64,
    pub line: LineSpec,
    pub varactor: Varactor,
}

impl UnitCell {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid("ring.d", format!("must be > 0, got {}", self.d)));
        }
        self.line.validate()?;
        self.varactor.validate()
    }

    /// Series inductance of one half-line section (H).
    pub fn half_line_inductance(&self) -> f64 {
        self.line.z0 * self.line.eps_eff.sqrt() * (0.5 * self.d) / C_LIGHT
    }

    /// Shunt capacitance of one half-line section (F).
    pub fn half_line_capacitance(&self) -> f64 {
        self.line.eps_eff.sqrt() * (0.5 * self.d) / (C_LIGHT * self.line.z0)
    }

    /// Same cell with the varactor removed.
    pub fn unloaded(&self) -> Self {
        let mut cell = *self;
        cell.varactor.c0 = 0.0;
        cell
    }
}

/// Closed ring of `n_cells` unit cells.
///
/// Ring positions are counted in half-cells, `0..2 * n_cells`. Even positions are
/// cell boundaries, odd positions carry a varactor. `node_m` and `node_d` are
/// positions; the default places M at 0 and D diametrically opposite at `n_cells`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub n_cells: usize,
    pub cell: UnitCell,
    pub node_m: usize,
    pub node_d: usize,
}

impl RingSpec {
    pub fn new(n_cells: usize, cell: UnitCell) -> Self {
        RingSpec { n_cells, cell, node_m: 0, node_d: n_cells }
    }

    /// Ring of `n_cells` 4 mm cells with 2.67 pF varactors, line fitted to the default anchors.
    pub fn calibrated(n_cells: usize) -> Result<Self> {
        let varactor = Varactor::default();
        let d = 4e-3;
        let line = calibrate_line(&CalibrationAnchors::default(), varactor.c0, d)?;
        Ok(RingSpec::new(n_cells, UnitCell { d, line, varactor }))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 1 {
            return Err(Error::invalid("ring.n_cells", "must be >= 1"));
        }
        let positions = self.positions();
        if self.node_m >= positions || self.node_d >= positions {
            return Err(Error::invalid("ring.node", format!("node positions must be < {positions}")));
        }
        if self.node_m == self.node_d {
            return Err(Error::invalid("ring.node_d", "must differ from node_m"));
        }
        self.cell.validate()
    }

    /// Number of half-cell positions around the ring.
    pub fn positions(&self) -> usize {
        2 * self.n_cells
    }

    pub fn has_varactor(position: usize) -> bool {
        position % 2 == 1
    }

    pub fn varactor_positions(&self) -> impl Iterator<Item = usize> {
        (0..self.positions()).filter(|&p| Self::has_varactor(p))
    }

    /// Signed distance (m) from node M to `position`, folded into `(-L/2, L/2]`
    /// where `L` is the ring circumference.
    pub fn coordinate(&self, position: usize) -> f64 {
        let n = self.positions() as i64;
        let mut k = (position as i64 - self.node_m as i64).rem_euclid(n);
        if 2 * k > n {
            k -= n;
        }
        k as f64 * 0.5 * self.cell.d
    }

    /// Position of the `n`-th varactor counted from M (`n = 1..=n_cells`).
    pub fn varactor_position(&self, n: usize) -> usize {
        (self.node_m + 2 * n - 1) % self.positions()
    }
}

/// Matching network between a ring node and a 50 Ω port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PortKind {
    /// `l1` on the port side, `c1` on the ring side (node M).
    DoublerLc { l1: f64, c1: f64 },
    /// `l2` on the port side, `l3` on the ring side (node D).
    DividerLl { l2: f64, l3: f64 },
}

/// How the two matching elements are arranged between the port and the ring node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortLayout {
    /// Both elements in series: port, first element, internal node, second element, ring.
    #[default]
    Series,
    /// First element shunts the port node to ground, second is in series to the ring.
    ShuntAtPort,
    /// First element in series from the port, second shunts the ring node to ground.
    ShuntAtRing,
}

/// A lumped matching element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Inductor(f64),
    Capacitor(f64),
}

impl Element {
    pub fn impedance(&self, f: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f;
        match *self {
            Element::Inductor(l) => Complex64::new(0.0, w * l),
            Element::Capacitor(c) => Complex64::new(0.0, -1.0 / (w * c)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortNetwork {
    pub kind: PortKind,
    #[serde(default)]
    pub layout: PortLayout,
    pub z_ref: f64,
}

impl PortNetwork {
    pub fn doubler_port(l1: f64, c1: f64) -> Self {
        PortNetwork { kind: PortKind::DoublerLc { l1, c1 }, layout: PortLayout::Series, z_ref: 50.0 }
    }

    pub fn divider_port(l2: f64, l3: f64) -> Self {
        PortNetwork { kind: PortKind::DividerLl { l2, l3 }, layout: PortLayout::Series, z_ref: 50.0 }
    }

    pub fn with_layout(mut self, layout: PortLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = match self.kind {
            PortKind::DoublerLc { l1, c1 } => (l1, c1),
            PortKind::DividerLl { l2, l3 } => (l2, l3),
        };
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::invalid("ports", "element values must be finite and > 0"));
        }
        if !(self.z_ref > 0.0) {
            return Err(Error::invalid("ports.z_ref", "must be > 0"));
        }
        Ok(())
    }

    /// The port-side and ring-side elements.
    pub fn elements(&self) -> (Element, Element) {
        match self.kind {
            PortKind::DoublerLc { l1, c1 } => (Element::Inductor(l1), Element::Capacitor(c1)),
            PortKind::DividerLl { l2, l3 } => (Element::Inductor(l2), Element::Inductor(l3)),
        }
    }

    /// Transmission matrix from the port terminals to the ring node.
    pub fn abcd(&self, f: f64) -> TwoPortMatrix {
        let (first, second) = self.elements();
        let (z1, z2) = (first.impedance(f), second.impedance(f));
        match self.layout {
            PortLayout::Series => TwoPortMatrix::series(z1 + z2),
            PortLayout::ShuntAtPort => TwoPortMatrix::shunt(1.0 / z1) * TwoPortMatrix::series(z2),
            PortLayout::ShuntAtRing => TwoPortMatrix::series(z1) * TwoPortMatrix::shunt(1.0 / z2),
        }
    }

    /// Impedance the ring node sees with the port terminated in `z_ref`.
    pub fn loading_impedance(&self, f: f64) -> Complex64 {
        self.abcd(f).reversed().input_impedance(Complex64::new(self.z_ref, 0.0))
    }

    /// Impedance at the port terminals when the ring node presents `z_ring`.
    pub fn input_impedance(&self, f: f64, z_ring: Complex64) -> Complex64 {
        self.abcd(f).input_impedance(z_ring)
    }
}

/// The two ports of the ring: the LC port at M and the LL port at D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortPair {
    pub m_port: PortNetwork,
    pub d_port: PortNetwork,
}

impl Default for PortPair {
    fn default() -> Self {
        PortPair {
            m_port: PortNetwork::doubler_port(2e-9, 0.7e-12).with_layout(PortLayout::ShuntAtPort),
            d_port: PortNetwork::divider_port(0.5e-9, 1e-9).with_layout(PortLayout::ShuntAtPort),
        }
    }
}

/// Targets for [`calibrate_line`]: one Bloch-phase anchor and the cutoff frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAnchors {
    pub beta_d: f64,
    pub at_freq: f64,
    pub f_cutoff: f64,
}

impl Default for CalibrationAnchors {
    fn default() -> Self {
        CalibrationAnchors { beta_d: std::f64::consts::FRAC_PI_3, at_freq: 2.4e9, f_cutoff: 5.4e9 }
    }
}

/// Relative tolerance on both anchors after a fit.
pub const CALIBRATION_TOLERANCE: f64 = 5e-3;

const CALIBRATION_MAX_ITER: usize = 100;

/// Finds `(z0, eps_eff)` such that the loaded dispersion relation hits both anchors.
///
/// For each candidate `eps_eff` the phase anchor fixes `z0`; the cutoff anchor is then bracketed and bisected.
pub fn calibrate_line(anchors: &CalibrationAnchors, c0: f64, d: f64) -> Result<LineSpec> {
    if !(d > 0.0) {
        return Err(Error::invalid("ring.d", "must be > 0"));
    }
    if !(anchors.at_freq > 0.0 && anchors.f_cutoff > anchors.at_freq) {
        return Err(Error::invalid("calibration", "anchor frequency must lie below the cutoff"));
    }
    if !(anchors.beta_d > 0.0 && anchors.beta_d < std::f64::consts::PI) {
        return Err(Error::invalid("calibration.beta_d", "must lie in (0, pi)"));
    }
    if c0 <= 0.0 {
        return Err(Error::Underdetermined(
            "without shunt loading the dispersion depends on eps_eff only; z0 is not identifiable".into(),
        ));
    }

    let target = anchors.beta_d.cos();
    let kd_at = |n: f64| 2.0 * std::f64::consts::PI * anchors.at_freq * n * d / C_LIGHT;
    // z0 from the phase anchor alone; None when no positive z0 reproduces it
    let z0_for = |n: f64| -> Option<f64> {
        let kd = kd_at(n);
        let z0 = (kd.cos() - target) / (std::f64::consts::PI * anchors.at_freq * c0 * kd.sin());
        (kd < anchors.beta_d && z0.is_finite() && z0 > 0.0).then_some(z0)
    };
    let cutoff_error = |n: f64| -> Option<f64> {
        let line = LineSpec::lossless(z0_for(n)?, n * n);
        let cell = UnitCell { d, line, varactor: Varactor { c0, ..Varactor::default() } };
        Some(smallsignal::cutoff_frequency(&cell)? - anchors.f_cutoff)
    };

    // n ranges from 1 up to the value where kd reaches beta_d at the anchor frequency
    let n_max = anchors.beta_d * C_LIGHT / (2.0 * std::f64::consts::PI * anchors.at_freq * d);
    let steps = 400;
    let mut prev: Option<(f64, f64)> = None;
    let mut last = vec![f64::NAN, f64::NAN];
    for i in 0..=steps {
        let n = 1.0 + (n_max - 1.0) * (i as f64 / steps as f64) * (1.0 - 1e-9);
        let Some(e) = cutoff_error(n) else { continue };
        last = vec![0.0, e / anchors.f_cutoff];
        if let Some((n_lo, e_lo)) = prev {
            if e_lo.signum() != e.signum() {
                let (mut lo, mut hi, mut e_lo) = (n_lo, n, e_lo);
                for _ in 0..CALIBRATION_MAX_ITER {
                    let mid = 0.5 * (lo + hi);
                    let Some(em) = cutoff_error(mid) else { break };
                    if em.signum() == e_lo.signum() {
                        lo = mid;
                        e_lo = em;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-12 * hi {
                        break;
                    }
                }
                let n = 0.5 * (lo + hi);
                if let Some(z0) = z0_for(n) {
                    let line = LineSpec::lossless(z0, n * n);
                    let cell = UnitCell { d, line, varactor: Varactor { c0, ..Varactor::default() } };
                    let beta = smallsignal::loaded_phase(anchors.at_freq, &cell).beta_d;
                    let fc = smallsignal::cutoff_frequency(&cell).unwrap_or(f64::NAN);
                    let beta_err = (beta - anchors.beta_d).abs() / anchors.beta_d;
                    let fc_err = (fc - anchors.f_cutoff).abs() / anchors.f_cutoff;
                    if line.validate().is_ok() && beta_err <= CALIBRATION_TOLERANCE && fc_err <= CALIBRATION_TOLERANCE {
                        return Ok(line);
                    }
                    last = vec![beta_err, fc_err];
                }
            }
        }
        prev = Some((n, e));
    }
    Err(Error::NumericFailure {
        message: "no line reproduces both calibration anchors".into(),
        residuals: last,
    })
}
