//! Linear analysis of the loaded ring: Bloch dispersion, cutoff, ABCD cascades,
//! driving-point impedance, resonance search and port reflection.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{PortPair, RingSpec, UnitCell, C_LIGHT, LineSpec};

/// 2×2 transmission matrix. `b` is in ohms, `c` in siemens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPortMatrix {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl TwoPortMatrix {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        TwoPortMatrix { a: one, b: zero, c: zero, d: one }
    }

    pub fn shunt(y: Complex64) -> Self {
        TwoPortMatrix { c: y, ..Self::identity() }
    }

    pub fn series(z: Complex64) -> Self {
        TwoPortMatrix { b: z, ..Self::identity() }
    }

    /// Uniform line section with total propagation `gamma_l = (alpha + j beta) l`.
    pub fn line(gamma_l: Complex64, z0: f64) -> Self {
        let (ch, sh) = (gamma_l.cosh(), gamma_l.sinh());
        TwoPortMatrix { a: ch, b: sh * z0, c: sh / z0, d: ch }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn pow(&self, n: usize) -> Self {
        let mut result = Self::identity();
        let mut base = *self;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            k >>= 1;
        }
        result
    }

    /// Same network seen from port 2.
    pub fn reversed(&self) -> Self {
        let det = self.det();
        TwoPortMatrix { a: self.d / det, b: self.b / det, c: self.c / det, d: self.a / det }
    }

    /// Input impedance with port 2 terminated in `z_load`.
    pub fn input_impedance(&self, z_load: Complex64) -> Complex64 {
        (self.a * z_load + self.b) / (self.c * z_load + self.d)
    }

    /// Input impedance with port 2 open.
    pub fn open_circuit_impedance(&self) -> Complex64 {
        self.a / self.c
    }

    /// Two networks sharing both port pairs.
    pub fn parallel(&self, other: &Self) -> Self {
        let y = |m: &Self| {
            let det = m.det();
            [m.d / m.b, -det / m.b, -Complex64::new(1.0, 0.0) / m.b, m.a / m.b]
        };
        let (p, q) = (y(self), y(other));
        let (y11, y12, y21, y22) = (p[0] + q[0], p[1] + q[1], p[2] + q[2], p[3] + q[3]);
        let det_y = y11 * y22 - y12 * y21;
        TwoPortMatrix { a: -y22 / y21, b: -1.0 / y21, c: -det_y / y21, d: -y11 / y21 }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [(self.a - other.a), (self.b - other.b), (self.c - other.c), (self.d - other.d)]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl Mul for TwoPortMatrix {
    type Output = TwoPortMatrix;

    fn mul(self, r: TwoPortMatrix) -> TwoPortMatrix {
        TwoPortMatrix {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

/// Right-hand side of the loaded dispersion relation
/// `cos(beta d) = cos(kd) - pi f C0 Z0 sin(kd)` with `kd = 2 pi f n d / c`.
pub(crate) fn dispersion_rhs(f: f64, z0: f64, n_eff: f64, c0: f64, d: f64) -> f64 {
    let kd = 2.0 * PI * f * n_eff * d / C_LIGHT;
    kd.cos() - PI * f * c0 * z0 * kd.sin()
}

fn cell_rhs(f: f64, cell: &UnitCell) -> f64 {
    dispersion_rhs(f, cell.line.z0, cell.line.eps_eff.sqrt(), cell.varactor.bias_capacitance(), cell.d)
}

/// Phase of the unloaded line over length `d`.
pub fn unloaded_phase(f: f64, line: &LineSpec, d: f64) -> f64 {
    2.0 * PI * f * line.eps_eff.sqrt() / C_LIGHT * d
}

/// Bloch phase per cell, `gamma d = beta d + j alpha d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochPhase {
    pub beta_d: f64,
    pub alpha_d: f64,
}

impl BlochPhase {
    pub fn is_evanescent(&self) -> bool {
        self.alpha_d != 0.0
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.beta_d, self.alpha_d)
    }
}

/// Solves the loaded dispersion relation (lossless, varactor at its bias capacitance).
///
/// Inside the passband the result is real in `[0, pi]`. In the stopband above cutoff
/// `beta d = pi` and `alpha d = acosh(-rhs)`.
pub fn loaded_phase(f: f64, cell: &UnitCell) -> BlochPhase {
    let rhs = cell_rhs(f, cell);
    if rhs > 1.0 {
        BlochPhase { beta_d: 0.0, alpha_d: rhs.acosh() }
    } else if rhs < -1.0 {
        BlochPhase { beta_d: PI, alpha_d: (-rhs).acosh() }
    } else {
        BlochPhase { beta_d: rhs.acos(), alpha_d: 0.0 }
    }
}

/// Lowest frequency at which `beta d` reaches `pi`. `None` for an unloaded line.
pub fn cutoff_frequency(cell: &UnitCell) -> Option<f64> {
    if cell.varactor.bias_capacitance() <= 0.0 {
        return None;
    }
    // The first crossing lies below kd = pi.
    let f_top = C_LIGHT / (2.0 * cell.d * cell.line.eps_eff.sqrt());
    let steps = 4000;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=steps {
        let f = f_top * i as f64 / steps as f64;
        if cell_rhs(f, cell) <= -1.0 {
            hi = Some(f);
            break;
        }
        lo = f;
    }
    let mut hi = hi?;
    while hi - lo > 1e3 {
        let mid = 0.5 * (lo + hi);
        if cell_rhs(mid, cell) <= -1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn half_line(f: f64, cell: &UnitCell) -> TwoPortMatrix {
    let beta_l = 0.5 * unloaded_phase(f, &cell.line, cell.d);
    let alpha_l = cell.line.attenuation(f) * 0.5 * cell.d;
    TwoPortMatrix::line(Complex64::new(alpha_l, beta_l), cell.line.z0)
}

/// Admittance of the varactor branch (series `r_s`) linearised at its bias point.
pub fn varactor_admittance(f: f64, cell: &UnitCell) -> Complex64 {
    let c = cell.varactor.bias_capacitance();
    if c <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let zc = Complex64::new(cell.varactor.r_s, -1.0 / (2.0 * PI * f * c));
    1.0 / zc
}

/// Half-line, shunt varactor, half-line.
pub fn unit_cell_abcd(f: f64, cell: &UnitCell) -> TwoPortMatrix {
    let h = half_line(f, cell);
    h * TwoPortMatrix::shunt(varactor_admittance(f, cell)) * h
}

// Elements met walking from `from` to `to` in direction `step` (+1 or -1),
// excluding the shunts at both end positions.
fn arc_abcd(f: f64, ring: &RingSpec, from: usize, to: usize, step: i64) -> TwoPortMatrix {
    let n = ring.positions() as i64;
    let h = half_line(f, &ring.cell);
    let y = TwoPortMatrix::shunt(varactor_admittance(f, &ring.cell));
    let mut m = TwoPortMatrix::identity();
    let mut p = from as i64;
    loop {
        m = m * h;
        p = (p + step).rem_euclid(n);
        if p as usize == to {
            break;
        }
        if RingSpec::has_varactor(p as usize) {
            m = m * y;
        }
    }
    m
}

fn node_shunt(f: f64, ring: &RingSpec, position: usize) -> TwoPortMatrix {
    if RingSpec::has_varactor(position) {
        TwoPortMatrix::shunt(varactor_admittance(f, &ring.cell))
    } else {
        TwoPortMatrix::identity()
    }
}

/// The ring as a two-port from node M (port 1) to node D (port 2): both arcs in
/// parallel, with the shunt elements sitting on M and D included.
pub fn ring_two_port(f: f64, ring: &RingSpec) -> TwoPortMatrix {
    let fwd = arc_abcd(f, ring, ring.node_m, ring.node_d, 1);
    let bwd = arc_abcd(f, ring, ring.node_m, ring.node_d, -1);
    let both = if fwd.max_abs_diff(&bwd) <= 1e-12 * (fwd.a.norm() + fwd.b.norm()) {
        let two = Complex64::new(2.0, 0.0);
        TwoPortMatrix { a: fwd.a, b: fwd.b / two, c: fwd.c * two, d: fwd.d }
    } else {
        fwd.parallel(&bwd)
    };
    node_shunt(f, ring, ring.node_m) * both * node_shunt(f, ring, ring.node_d)
}

fn finite_or_pole(z: Complex64, retry: impl Fn() -> Complex64) -> Complex64 {
    if z.re.is_finite() && z.im.is_finite() {
        z
    } else {
        let near = retry();
        Complex64::new(0.0, f64::INFINITY.copysign(near.im))
    }
}

/// Driving-point impedance of the closed ring at node M.
///
/// The two arcs from M meet again at D; with D unloaded this is the parallel
/// combination of the two open-ended arcs. An exact pole is returned as
/// `0 ± j inf`, the sign taken from the approach from below.
pub fn ring_input_impedance(f: f64, ring: &RingSpec) -> Complex64 {
    let z = ring_two_port(f, ring).open_circuit_impedance();
    finite_or_pole(z, || ring_two_port(f * (1.0 - 1e-9), ring).open_circuit_impedance())
}

/// Driving-point impedance at an arbitrary ring position from the periodic
/// boundary condition of the whole loop, `Z = B / (A + D - 2)` plus the local shunt.
pub fn loop_input_impedance(f: f64, ring: &RingSpec, position: usize) -> Complex64 {
    let n = ring.positions();
    let h = half_line(f, &ring.cell);
    let y = TwoPortMatrix::shunt(varactor_admittance(f, &ring.cell));
    let mut m = TwoPortMatrix::identity();
    for k in 1..=n {
        m = m * h;
        let p = (position + k) % n;
        if p != position && RingSpec::has_varactor(p) {
            m = m * y;
        }
    }
    let mut admittance = (m.a + m.d - 2.0) / m.b;
    if RingSpec::has_varactor(position) {
        admittance += varactor_admittance(f, &ring.cell);
    }
    1.0 / admittance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceKind {
    /// Series-type, |Z| -> 0.
    Zero,
    /// Parallel-type, |Z| -> inf.
    Pole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq: f64,
    pub kind: ResonanceKind,
    pub q_estimate: f64,
}

const RESONANCE_GRID: usize = 2000;
const RESONANCE_RESOLUTION: f64 = 100e3;

fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let g_lo = g(lo);
    while hi - lo > RESONANCE_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Zeros and poles of the M-node impedance in `[f_lo, f_hi]`, ascending.
///
/// Only the Bloch passband is searched: the scan stops just short of cutoff,
/// where every ring length shows a degenerate band-edge zero. Reactance rises
/// through a zero (− to +) and falls through a pole (+ to −).
pub fn find_resonances(ring: &RingSpec, f_lo: f64, f_hi: f64) -> Vec<Resonance> {
    let upper = match cutoff_frequency(&ring.cell) {
        Some(fc) => f_hi.min(fc * 0.999),
        None => f_hi,
    };
    if !(upper > f_lo) {
        return Vec::new();
    }
    let z = |f: f64| ring_input_impedance(f, ring);
    let grid: Vec<f64> =
        (0..RESONANCE_GRID).map(|i| f_lo + (upper - f_lo) * i as f64 / (RESONANCE_GRID - 1) as f64).collect();
    let reactance: Vec<f64> = grid.iter().map(|&f| z(f).im).collect();

    let mut out = Vec::new();
    for i in 0..grid.len() - 1 {
        let (x0, x1) = (reactance[i], reactance[i + 1]);
        // A grid point sitting exactly on zero belongs to the interval below it.
        let rising = x0 < 0.0 && x1 >= 0.0;
        let falling = x0 > 0.0 && x1 <= 0.0;
        if rising {
            let f = bisect(grid[i], grid[i + 1], |f| z(f).im);
            out.push(Resonance { freq: f, kind: ResonanceKind::Zero, q_estimate: zero_q(f, &z) });
        } else if falling {
            let y = |f: f64| 1.0 / z(f);
            let f = bisect(grid[i], grid[i + 1], |f| y(f).im);
            out.push(Resonance { freq: f, kind: ResonanceKind::Pole, q_estimate: pole_q(f, &y) });
        }
    }
    out
}

fn zero_q(f: f64, z: &impl Fn(f64) -> Complex64) -> f64 {
    let h = f * 1e-5;
    let slope = (z(f + h).im - z(f - h).im) / (2.0 * h);
    let r = z(f).re;
    if r > 0.0 {
        f * slope.abs() / (2.0 * r)
    } else {
        f64::INFINITY
    }
}

fn pole_q(f: f64, y: &impl Fn(f64) -> Complex64) -> f64 {
    let h = f * 1e-5;
    let slope = (y(f + h).im - y(f - h).im) / (2.0 * h);
    let g = y(f).re;
    if g > 0.0 {
        f * slope.abs() / (2.0 * g)
    } else {
        f64::INFINITY
    }
}

/// Reflection coefficients at the M port (`s11`) and the D port (`s22`), each
/// looking through its matching network into the ring while the other port is
/// terminated in its reference impedance.
pub fn port_reflection(f: f64, ring: &RingSpec, ports: &PortPair) -> (Complex64, Complex64) {
    let ring2 = ring_two_port(f, ring);
    let z_m = ports.m_port.input_impedance(f, ring2.input_impedance(ports.d_port.loading_impedance(f)));
    let z_d = ports.d_port.input_impedance(f, ring2.reversed().input_impedance(ports.m_port.loading_impedance(f)));
    let gamma = |z: Complex64, z_ref: f64| (z - z_ref) / (z + z_ref);
    (gamma(z_m, ports.m_port.z_ref), gamma(z_d, ports.d_port.z_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{calibrate_line, CalibrationAnchors, Varactor};

    fn calibrated_cell() -> UnitCell {
        let line = calibrate_line(&CalibrationAnchors::default(), 2.67e-12, 4e-3).unwrap();
        UnitCell { d: 4e-3, line, varactor: Varactor { r_s: 0.0, ..Varactor::default() } }
    }

    #[test]
    fn unloaded_phase_examples() {
        let line = LineSpec::lossless(50.0, 2.56);
        assert_eq!(unloaded_phase(0.0, &line, 4e-3), 0.0);
        let kd = unloaded_phase(2.4e9, &line, 4e-3);
        assert!((kd - 0.3219).abs() < 1e-3, "{kd}");
        assert_eq!(unloaded_phase(4.8e9, &line, 4e-3), 2.0 * kd);
    }

    #[test]
    fn unloaded_cell_has_line_dispersion() {
        let cell = calibrated_cell().unloaded();
        for f in [0.5e9, 2.4e9, 5e9] {
            let kd = unloaded_phase(f, &cell.line, cell.d);
            assert!((loaded_phase(f, &cell).beta_d - kd).abs() < 1e-9);
        }
        assert_eq!(cutoff_frequency(&cell), None);
    }

    #[test]
    fn loading_slows_the_line_below_cutoff() {
        let cell = calibrated_cell();
        let fc = cutoff_frequency(&cell).unwrap();
        let mut prev = 0.0;
        for i in 1..200 {
            let f = fc * i as f64 / 200.0;
            let b = loaded_phase(f, &cell);
            assert!(!b.is_evanescent());
            assert!(b.beta_d > unloaded_phase(f, &cell.line, cell.d));
            assert!(b.beta_d > prev);
            prev = b.beta_d;
        }
        let above = loaded_phase(fc * 1.05, &cell);
        assert!(above.is_evanescent());
        assert_eq!(above.beta_d, PI);
    }

    #[test]
    fn heavier_loading_lowers_cutoff() {
        let cell = calibrated_cell();
        let mut heavy = cell;
        heavy.varactor.c0 *= 4.0;
        assert!(cutoff_frequency(&heavy).unwrap() < cutoff_frequency(&cell).unwrap());
    }

    #[test]
    fn unit_cell_is_symmetric_and_reciprocal() {
        let mut cell = calibrated_cell();
        cell.varactor.r_s = 0.5;
        cell.line = cell.line.with_loss_db(0.1, cell.d);
        for i in 1..100 {
            let f = 6e9 * i as f64 / 100.0;
            let m = unit_cell_abcd(f, &cell);
            assert!((m.det() - 1.0).norm() < 1e-9);
            assert!((m.a - m.d).norm() < 1e-12);
        }
        let dc = unit_cell_abcd(1.0, &calibrated_cell());
        assert!(dc.max_abs_diff(&TwoPortMatrix::identity()) < 1e-6, "{dc:?}");
    }

    #[test]
    fn unit_cell_reproduces_printed_form_in_normalised_units() {
        // With kd the line phase and load = pi f C0 Z0:
        // A = D = cos kd - load sin kd, B/Z0 = j (sin kd + load cos kd - load),
        // C Z0 = j (sin kd + load cos kd + load).
        let cell = calibrated_cell();
        let f = 2.4e9;
        let kd = unloaded_phase(f, &cell.line, cell.d);
        let load = PI * f * cell.varactor.c0 * cell.line.z0;
        let m = unit_cell_abcd(f, &cell);
        let z0 = cell.line.z0;
        assert!((m.a.re - (kd.cos() - load * kd.sin())).abs() < 1e-12);
        assert!((m.b.im / z0 - (kd.sin() + load * kd.cos() - load)).abs() < 1e-12);
        assert!((m.c.im * z0 - (kd.sin() + load * kd.cos() + load)).abs() < 1e-12);
        assert!((m.a.re - loaded_phase(f, &cell).beta_d.cos()).abs() < 1e-12);
    }

    #[test]
    fn cascade_is_associative() {
        let cell = calibrated_cell();
        let m = unit_cell_abcd(3.1e9, &cell);
        let whole = m.pow(7);
        for split in 1..7 {
            let parts = m.pow(split) * m.pow(7 - split);
            assert!(whole.max_abs_diff(&parts) < 1e-9);
        }
    }

    #[test]
    fn arc_parallel_matches_periodic_loop() {
        let cell = calibrated_cell();
        for n in [1, 2, 3, 4, 5] {
            let ring = RingSpec::new(n, cell);
            for f in [0.7e9, 1.9e9, 3.3e9, 4.1e9] {
                let a = ring_input_impedance(f, &ring);
                let b = loop_input_impedance(f, &ring, 0);
                assert!((a - b).norm() / b.norm() < 1e-8, "n={n} f={f}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn lossless_ring_is_reactive() {
        let ring = RingSpec::new(3, calibrated_cell());
        for i in 1..60 {
            let z = ring_input_impedance(0.1e9 * i as f64, &ring);
            assert!(z.re.abs() < 1e-6, "{z}");
        }
    }

    #[test]
    fn three_cell_ring_has_one_zero_and_one_pole() {
        let ring = RingSpec::new(3, calibrated_cell());
        let res = find_resonances(&ring, 0.5e9, 6e9);
        assert_eq!(res.len(), 2, "{res:?}");
        assert_eq!(res[0].kind, ResonanceKind::Zero);
        assert!((res[0].freq - 2.4e9).abs() < 0.05e9);
        assert_eq!(res[1].kind, ResonanceKind::Pole);
        assert!((res[1].freq - 4.8e9).abs() < 0.48e9);
    }

    #[test]
    fn short_rings_have_no_zero_pole_pair() {
        for n in [1, 2] {
            let res = find_resonances(&RingSpec::new(n, calibrated_cell()), 0.5e9, 6e9);
            let zeros = res.iter().filter(|r| r.kind == ResonanceKind::Zero).count();
            let poles = res.iter().filter(|r| r.kind == ResonanceKind::Pole).count();
            assert!(zeros == 0 || poles == 0, "n={n}: {res:?}");
        }
        assert!(find_resonances(&RingSpec::new(1, calibrated_cell()), 0.1e9, 6e9).is_empty());
    }

    #[test]
    fn longer_rings_interlace() {
        let three = find_resonances(&RingSpec::new(3, calibrated_cell()), 0.5e9, 6e9).len();
        for n in [5, 6, 7] {
            let res = find_resonances(&RingSpec::new(n, calibrated_cell()), 0.5e9, 6e9);
            assert!(res.len() > three);
            for w in res.windows(2) {
                assert_ne!(w[0].kind, w[1].kind, "n={n}: {res:?}");
                assert!(w[0].freq < w[1].freq);
            }
        }
    }

    #[test]
    fn q_reflects_loss() {
        let mut cell = calibrated_cell();
        let lossless = find_resonances(&RingSpec::new(3, cell), 0.5e9, 6e9);
        assert!(lossless[0].q_estimate.is_infinite());
        cell.varactor.r_s = 0.5;
        cell.line = cell.line.with_loss_db(0.1, cell.d);
        let lossy = find_resonances(&RingSpec::new(3, cell), 0.5e9, 6e9);
        assert!(lossy[0].q_estimate.is_finite() && lossy[0].q_estimate > 5.0, "{lossy:?}");
    }

    #[test]
    fn ports_are_passive_and_the_pump_port_matches() {
        let mut cell = calibrated_cell();
        cell.varactor.r_s = 0.5;
        cell.line = cell.line.with_loss_db(0.1, cell.d);
        let ring = RingSpec::new(3, cell);
        let ports = PortPair::default();
        let db = |s: Complex64| 20.0 * s.norm().log10();
        let mut best11: f64 = 0.0;
        for i in 0..=500 {
            let f = 1e9 + 5e9 * i as f64 / 500.0;
            let (s11, s22) = port_reflection(f, &ring, &ports);
            assert!(s11.norm() <= 1.0 + 1e-12 && s22.norm() <= 1.0 + 1e-12);
            if (4.0e9..=5.3e9).contains(&f) {
                best11 = best11.min(db(s11));
            }
        }
        assert!(best11 < -10.0, "s11 {best11}");
    }

    #[test]
    fn detuned_ring_loses_the_pump_match() {
        let mut cell = calibrated_cell();
        cell.varactor.r_s = 0.5;
        let ports = PortPair::default();
        let best = |ring: &RingSpec| {
            (0..=130)
                .map(|i| 4.0e9 + 1e7 * i as f64)
                .map(|f| 20.0 * port_reflection(f, ring, &ports).0.norm().log10())
                .fold(0.0, f64::min)
        };
        let tuned = best(&RingSpec::new(3, cell));
        cell.varactor.c0 = 1e-15;
        let detuned = best(&RingSpec::new(3, cell));
        assert!(tuned < -10.0 && detuned > -3.0, "{tuned} {detuned}");
    }
}
