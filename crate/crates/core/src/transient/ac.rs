//! Small-signal phasor solve of a [`CircuitNetwork`], varactors linearised at bias.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::network::{Branch, CircuitNetwork, NodeId, GROUND};
use crate::error::{Error, Result};

fn admittance(b: &Branch, w: f64) -> Complex64 {
    match *b {
        Branch::Inductor { l, r, .. } => 1.0 / Complex64::new(r, w * l),
        Branch::Capacitor { c, .. } => Complex64::new(0.0, w * c),
        Branch::Varactor { device, .. } => Complex64::new(0.0, w * device.bias_capacitance()),
        Branch::Resistor { r, .. } | Branch::Source { r, .. } => Complex64::new(1.0 / r, 0.0),
    }
}

fn solve(net: &CircuitNetwork, f: f64, rhs: DVector<Complex64>) -> Result<Vec<Complex64>> {
    let n = net.node_count();
    let w = 2.0 * PI * f;
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for b in net.branches() {
        let (a, c) = b.terminals();
        let g = admittance(b, w);
        if a != GROUND {
            y[(a - 1, a - 1)] += g;
        }
        if c != GROUND {
            y[(c - 1, c - 1)] += g;
        }
        if a != GROUND && c != GROUND {
            y[(a - 1, c - 1)] -= g;
            y[(c - 1, a - 1)] -= g;
        }
    }
    let v = y.lu().solve(&rhs).ok_or_else(|| Error::NumericFailure {
        message: format!("singular nodal matrix at {f} Hz"),
        residuals: vec![],
    })?;
    Ok(v.iter().copied().collect())
}

/// Node phasors (index `node - 1`) with every source running at `f`.
///
/// A source `A sin(w t + phi)` has phasor `A e^{j phi}`; node voltages follow the same convention.
pub fn ac_node_voltages(net: &CircuitNetwork, f: f64) -> Result<Vec<Complex64>> {
    let mut rhs = DVector::<Complex64>::zeros(net.node_count());
    for b in net.branches() {
        if let Branch::Source { a, b, amplitude, phase, r, .. } = *b {
            let i = Complex64::from_polar(amplitude / r, phase);
            if a != GROUND {
                rhs[a - 1] += i;
            }
            if b != GROUND {
                rhs[b - 1] -= i;
            }
        }
    }
    solve(net, f, rhs)
}

/// Impedance between `node` and ground with every source replaced by its series resistance.
pub fn ac_driving_point_impedance(net: &CircuitNetwork, node: NodeId, f: f64) -> Result<Complex64> {
    if node == GROUND || node > net.node_count() {
        return Err(Error::invalid("node", "must name a non-ground node"));
    }
    let mut rhs = DVector::<Complex64>::zeros(net.node_count());
    rhs[node - 1] = Complex64::new(1.0, 0.0);
    Ok(solve(net, f, rhs)?[node - 1])
}
