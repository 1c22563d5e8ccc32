//! Trapezoidal integration of a [`CircuitNetwork`] with Newton iteration on varactor charge.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::network::{Branch, CircuitNetwork, NodeId, GROUND};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub reltol: f64,
    pub abstol: f64,
    pub max_iter: usize,
    /// How many times a failing step may be split in half.
    pub max_halvings: u32,
    /// Initial voltage perturbation placed on one node.
    pub seed: Option<(NodeId, f64)>,
    /// Fundamental of the analysis grid; defaults to half the lowest source frequency.
    pub base_freq: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { reltol: 1e-9, abstol: 1e-12, max_iter: 50, max_halvings: 4, seed: None, base_freq: None }
    }
}

/// Uniformly sampled node voltages and branch currents, sample 0 at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    /// Every tone of interest is a multiple of this frequency.
    pub base_freq: f64,
    pub node_names: Vec<String>,
    /// `voltages[k]` belongs to node `k + 1`.
    pub voltages: Vec<Vec<f64>>,
    /// Currents of the inductor branches, in branch order, flowing `a -> b`.
    pub inductor_currents: Vec<Vec<f64>>,
    pub port_names: Vec<String>,
    /// Current flowing from each port node into its termination (negative when the port delivers power).
    pub port_currents: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.voltages.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voltage(&self, node: NodeId) -> &[f64] {
        &self.voltages[node - 1]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.node_names.iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn port_current(&self, name: &str) -> Option<&[f64]> {
        self.port_names.iter().position(|n| n == name).map(|i| self.port_currents[i].as_slice())
    }

    /// Plain CSV: `time` then one column per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "time")?;
        for n in &self.node_names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{:e}", k as f64 * self.dt)?;
            for v in &self.voltages {
                write!(w, ",{:e}", v[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates `net` from rest up to `t_end` with step `dt`, default options.
pub fn transient_run(net: &CircuitNetwork, t_end: f64, dt: f64) -> Result<TimeSeries> {
    transient_run_with(net, t_end, dt, &SimOptions::default())
}

pub fn transient_run_with(net: &CircuitNetwork, t_end: f64, dt: f64, opts: &SimOptions) -> Result<TimeSeries> {
    net.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    if !(t_end >= dt) {
        return Err(Error::invalid("t_end", "must cover at least one step"));
    }
    let freqs = net.source_frequencies();
    let f_max = freqs.iter().cloned().fold(0.0, f64::max);
    if f_max > 0.0 && dt > 1.0 / (64.0 * f_max) * (1.0 + 1e-12) {
        return Err(Error::invalid("dt", format!("must be <= 1/(64 f_max) = {:e} s", 1.0 / (64.0 * f_max))));
    }
    let base_freq = opts
        .base_freq
        .or_else(|| freqs.iter().cloned().filter(|&f| f > 0.0).reduce(f64::min).map(|f| f / 2.0))
        .unwrap_or(0.0);

    let mut sim = Integrator::new(net, opts);
    if let Some((node, v)) = opts.seed {
        if node == GROUND || node > net.node_count() {
            return Err(Error::invalid("seed", "must name a non-ground node"));
        }
        sim.v[node - 1] = v;
    }
    let steps = (t_end / dt).round() as usize;
    let n = net.node_count();
    let mut voltages = vec![Vec::with_capacity(steps + 1); n];
    let mut inductor_currents = vec![Vec::with_capacity(steps + 1); sim.inductors.len()];
    let mut port_currents = vec![Vec::with_capacity(steps + 1); net.ports().len()];
    sim.record(0.0, &mut voltages, &mut inductor_currents, &mut port_currents);
    for k in 0..steps {
        let t = k as f64 * dt;
        sim.advance(t, dt, opts.max_halvings)?;
        sim.record(t + dt, &mut voltages, &mut inductor_currents, &mut port_currents);
    }
    Ok(TimeSeries {
        dt,
        base_freq,
        node_names: (1..=n).map(|i| net.node_name(i).to_string()).collect(),
        voltages,
        inductor_currents,
        port_names: net.ports().iter().map(|p| p.name.clone()).collect(),
        port_currents,
    })
}

struct Integrator<'a> {
    net: &'a CircuitNetwork,
    opts: SimOptions,
    v: Vec<f64>,
    /// Branch current at the last accepted step, for every branch.
    i: Vec<f64>,
    /// Charge of varactor branches at the last accepted step.
    q: Vec<f64>,
    inductors: Vec<usize>,
    has_nonlinear: bool,
    cached: Option<(f64, DMatrix<f64>)>,
}

impl<'a> Integrator<'a> {
    fn new(net: &'a CircuitNetwork, opts: &SimOptions) -> Self {
        let nb = net.branches().len();
        let inductors = (0..nb).filter(|&k| matches!(net.branches()[k], Branch::Inductor { .. })).collect();
        let has_nonlinear = net.branches().iter().any(|b| matches!(b, Branch::Varactor { .. }));
        Integrator {
            net,
            opts: *opts,
            v: vec![0.0; net.node_count()],
            i: vec![0.0; nb],
            q: vec![0.0; nb],
            inductors,
            has_nonlinear,
            cached: None,
        }
    }

    fn node_v(v: &[f64], node: NodeId) -> f64 {
        if node == GROUND {
            0.0
        } else {
            v[node - 1]
        }
    }

    fn record(&self, t: f64, volts: &mut [Vec<f64>], il: &mut [Vec<f64>], ports: &mut [Vec<f64>]) {
        for (k, v) in self.v.iter().enumerate() {
            volts[k].push(*v);
        }
        for (slot, &b) in il.iter_mut().zip(&self.inductors) {
            slot.push(self.i[b]);
        }
        for (slot, port) in ports.iter_mut().zip(self.net.ports()) {
            let vp = Self::node_v(&self.v, port.node);
            let current = match self.net.branches()[port.branch] {
                Branch::Resistor { r, .. } => vp / r,
                Branch::Source { amplitude, freq, phase, r, .. } => {
                    (vp - amplitude * (2.0 * PI * freq * t + phase).sin()) / r
                }
                _ => 0.0,
            };
            slot.push(current);
        }
    }

    // Conductance matrix of the linear elements for step `h`.
    fn linear_matrix(&mut self, h: f64) -> DMatrix<f64> {
        if let Some((hc, m)) = &self.cached {
            if *hc == h {
                return m.clone();
            }
        }
        let n = self.net.node_count();
        let mut g = DMatrix::zeros(n, n);
        for b in self.net.branches() {
            let (a, c) = b.terminals();
            let cond = match *b {
                Branch::Inductor { l, r, .. } => 1.0 / (r + 2.0 * l / h),
                Branch::Capacitor { c, .. } => 2.0 * c / h,
                Branch::Resistor { r, .. } | Branch::Source { r, .. } => 1.0 / r,
                Branch::Varactor { .. } => continue,
            };
            stamp(&mut g, a, c, cond);
        }
        self.cached = Some((h, g.clone()));
        g
    }

    fn advance(&mut self, t: f64, h: f64, halvings_left: u32) -> Result<()> {
        match self.step(t, h) {
            Ok(()) => Ok(()),
            Err(e) if halvings_left > 0 && e.is_numeric_failure() => {
                self.advance(t, h / 2.0, halvings_left - 1)?;
                self.advance(t + h / 2.0, h / 2.0, halvings_left - 1)
            }
            Err(e) => Err(e),
        }
    }

    fn step(&mut self, t: f64, h: f64) -> Result<()> {
        let n = self.net.node_count();
        let t1 = t + h;
        let g_lin = self.linear_matrix(h);
        // History currents of the linear elements; current flowing a -> b is `g v + hist`.
        let mut rhs_lin = DVector::zeros(n);
        for (k, b) in self.net.branches().iter().enumerate() {
            let (a, c) = b.terminals();
            let vb = Self::node_v(&self.v, a) - Self::node_v(&self.v, c);
            match *b {
                Branch::Inductor { l, r, .. } => {
                    let g = 1.0 / (r + 2.0 * l / h);
                    inject(&mut rhs_lin, a, c, -g * (vb + self.i[k] * (2.0 * l / h - r)));
                }
                Branch::Capacitor { c: cap, .. } => {
                    let g = 2.0 * cap / h;
                    inject(&mut rhs_lin, a, c, g * vb + self.i[k]);
                }
                Branch::Source { amplitude, freq, phase, r, .. } => {
                    let e = amplitude * (2.0 * PI * freq * t1 + phase).sin();
                    inject(&mut rhs_lin, a, c, e / r);
                }
                _ => {}
            }
        }

        let mut v_new = DVector::from_column_slice(&self.v);
        let mut last_delta = Vec::new();
        let mut converged = false;
        for _ in 0..self.opts.max_iter.max(1) {
            let mut g = g_lin.clone();
            let mut rhs = rhs_lin.clone();
            for (k, b) in self.net.branches().iter().enumerate() {
                if let Branch::Varactor { a, b: c, device } = *b {
                    let vs = Self::node_v(v_new.as_slice(), a) - Self::node_v(v_new.as_slice(), c);
                    let cap = device.capacitance_extended(vs);
                    let q = device.charge_extended(vs);
                    let geq = 2.0 * cap / h;
                    let ieq = 2.0 / h * (q - cap * vs - self.q[k]) - self.i[k];
                    stamp(&mut g, a, c, geq);
                    inject(&mut rhs, a, c, -ieq);
                }
            }
            let solved = g
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NumericFailure { message: format!("singular matrix at t = {t1:e} s"), residuals: vec![] })?;
            let delta = (&solved - &v_new).amax();
            let scale = solved.amax();
            v_new = solved;
            last_delta.push(delta);
            if !self.has_nonlinear || delta <= self.opts.reltol * scale + self.opts.abstol {
                converged = true;
                break;
            }
        }
        if !converged || v_new.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure {
                message: format!("Newton iteration did not converge at t = {t1:e} s with step {h:e} s"),
                residuals: last_delta,
            });
        }

        for (k, b) in self.net.branches().iter().enumerate() {
            let (a, c) = b.terminals();
            let v_old = Self::node_v(&self.v, a) - Self::node_v(&self.v, c);
            let v1 = Self::node_v(v_new.as_slice(), a) - Self::node_v(v_new.as_slice(), c);
            self.i[k] = match *b {
                Branch::Inductor { l, r, .. } => (v1 + v_old + self.i[k] * (2.0 * l / h - r)) / (r + 2.0 * l / h),
                Branch::Capacitor { c: cap, .. } => 2.0 * cap / h * (v1 - v_old) - self.i[k],
                Branch::Varactor { device, .. } => {
                    let q1 = device.charge_extended(v1);
                    let i1 = 2.0 / h * (q1 - self.q[k]) - self.i[k];
                    self.q[k] = q1;
                    i1
                }
                Branch::Resistor { r, .. } => v1 / r,
                Branch::Source { amplitude, freq, phase, r, .. } => {
                    (v1 - amplitude * (2.0 * PI * freq * t1 + phase).sin()) / r
                }
            };
        }
        self.v.copy_from_slice(v_new.as_slice());
        Ok(())
    }
}

fn stamp(g: &mut DMatrix<f64>, a: NodeId, b: NodeId, cond: f64) {
    if a != GROUND {
        g[(a - 1, a - 1)] += cond;
    }
    if b != GROUND {
        g[(b - 1, b - 1)] += cond;
    }
    if a != GROUND && b != GROUND {
        g[(a - 1, b - 1)] -= cond;
        g[(b - 1, a - 1)] -= cond;
    }
}

// Adds a current source pushing `i` into node `a` and out of node `b`.
fn inject(rhs: &mut DVector<f64>, a: NodeId, b: NodeId, i: f64) {
    if a != GROUND {
        rhs[a - 1] += i;
    }
    if b != GROUND {
        rhs[b - 1] -= i;
    }
}

/// Energy stored in capacitors, varactors and inductors at sample `k`.
pub fn stored_energy(net: &CircuitNetwork, ts: &TimeSeries, k: usize) -> f64 {
    let v = |node: NodeId| if node == GROUND { 0.0 } else { ts.voltages[node - 1][k] };
    let mut inductor = 0;
    let mut e = 0.0;
    for b in net.branches() {
        match *b {
            Branch::Capacitor { a, b, c } => e += 0.5 * c * (v(a) - v(b)).powi(2),
            Branch::Varactor { a, b, device } => {
                // Integral of v dq from the bias point.
                let vb = v(a) - v(b);
                let steps = 200;
                let mut acc = 0.0;
                for s in 0..steps {
                    let x = vb * (s as f64 + 0.5) / steps as f64;
                    acc += x * device.capacitance_extended(x) * vb / steps as f64;
                }
                e += acc;
            }
            Branch::Inductor { l, .. } => {
                e += 0.5 * l * ts.inductor_currents[inductor][k].powi(2);
                inductor += 1;
            }
            _ => {}
        }
    }
    e
}
