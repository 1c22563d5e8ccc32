//! Lumped circuit description of the ring with its two ports.

use serde::{Deserialize, Serialize};

use crate::circuit::{Element, PortLayout, PortNetwork, PortPair, RingSpec, Varactor};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// The reference node.
pub const GROUND: NodeId = 0;

/// A two-terminal element between nodes `a` and `b`. Branch voltage is `v(a) - v(b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    /// Inductor with series resistance `r`.
    Inductor { a: NodeId, b: NodeId, l: f64, r: f64 },
    Capacitor { a: NodeId, b: NodeId, c: f64 },
    /// Junction capacitance only; the device's `r_s` is a separate resistor branch.
    Varactor { a: NodeId, b: NodeId, device: Varactor },
    Resistor { a: NodeId, b: NodeId, r: f64 },
    /// `amplitude * sin(2 pi freq t + phase)` behind a series resistance `r`.
    Source { a: NodeId, b: NodeId, amplitude: f64, freq: f64, phase: f64, r: f64 },
}

impl Branch {
    pub fn terminals(&self) -> (NodeId, NodeId) {
        match *self {
            Branch::Inductor { a, b, .. }
            | Branch::Capacitor { a, b, .. }
            | Branch::Varactor { a, b, .. }
            | Branch::Resistor { a, b, .. }
            | Branch::Source { a, b, .. } => (a, b),
        }
    }

    fn conducts_dc(&self) -> bool {
        matches!(self, Branch::Inductor { .. } | Branch::Resistor { .. } | Branch::Source { .. })
    }
}

/// Which port is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Pump into the M port, subharmonic out of the D port.
    Divider,
    /// Fundamental into the D port, second harmonic out of the M port.
    Doubler,
}

/// A 50 Ω port: the node carrying the port voltage and the branch terminating or driving it.
#[derive(Debug, Clone, PartialEq)]
pub struct PortTap {
    pub name: String,
    pub node: NodeId,
    pub branch: usize,
    pub z_ref: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CircuitNetwork {
    names: Vec<String>,
    branches: Vec<Branch>,
    ports: Vec<PortTap>,
}

impl CircuitNetwork {
    pub fn new() -> Self {
        CircuitNetwork { names: vec!["gnd".to_string()], branches: Vec::new(), ports: Vec::new() }
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn add(&mut self, branch: Branch) -> usize {
        self.branches.push(branch);
        self.branches.len() - 1
    }

    /// Registers `branch` (a resistor or source to ground at `node`) as a named port.
    pub fn add_port(&mut self, name: impl Into<String>, node: NodeId, branch: usize, z_ref: f64) {
        self.ports.push(PortTap { name: name.into(), node, branch, z_ref });
    }

    /// Number of non-ground nodes.
    pub fn node_count(&self) -> usize {
        self.names.len() - 1
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.names[node]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branches_mut(&mut self) -> &mut [Branch] {
        &mut self.branches
    }

    pub fn ports(&self) -> &[PortTap] {
        &self.ports
    }

    pub fn port(&self, name: &str) -> Option<&PortTap> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn inductor_count(&self) -> usize {
        self.branches.iter().filter(|b| matches!(b, Branch::Inductor { .. })).count()
    }

    /// Nodes with a capacitive element attached.
    pub fn reactive_node_count(&self) -> usize {
        let mut seen = vec![false; self.names.len()];
        for b in &self.branches {
            if let Branch::Capacitor { a, b, .. } | Branch::Varactor { a, b, .. } = *b {
                seen[a] = true;
                seen[b] = true;
            }
        }
        seen[1..].iter().filter(|&&s| s).count()
    }

    /// Frequencies of all sources with nonzero amplitude.
    pub fn source_frequencies(&self) -> Vec<f64> {
        self.branches
            .iter()
            .filter_map(|b| match *b {
                Branch::Source { freq, amplitude, .. } if amplitude != 0.0 => Some(freq),
                _ => None,
            })
            .collect()
    }

    /// Sets every source to deliver `power_dbm` into a matched load at `freq`.
    pub fn set_drive(&mut self, power_dbm: f64, freq: f64) {
        for b in &mut self.branches {
            if let Branch::Source { amplitude, freq: f, r, .. } = b {
                *amplitude = emf_for_power(power_dbm, *r);
                *f = freq;
            }
        }
    }

    /// Checks terminals, element values, connectivity and that every node has a DC path to ground.
    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        let mut all = UnionFind::new(n);
        let mut dc = UnionFind::new(n);
        for (i, b) in self.branches.iter().enumerate() {
            let (a, c) = b.terminals();
            if a >= n || c >= n || a == c {
                return Err(Error::Topology(format!("branch {i} has invalid terminals ({a}, {c})")));
            }
            let ok = match *b {
                Branch::Inductor { l, r, .. } => l > 0.0 && r >= 0.0,
                Branch::Capacitor { c, .. } => c > 0.0,
                Branch::Varactor { device, .. } => device.validate().is_ok() && device.c0 > 0.0,
                Branch::Resistor { r, .. } => r > 0.0,
                Branch::Source { r, freq, .. } => r > 0.0 && freq >= 0.0,
            };
            if !ok {
                return Err(Error::Topology(format!("branch {i} has a non-physical value: {b:?}")));
            }
            all.union(a, c);
            if b.conducts_dc() {
                dc.union(a, c);
            }
        }
        for node in 1..n {
            if all.find(node) != all.find(GROUND) {
                return Err(Error::Topology(format!("node '{}' is not connected to ground", self.names[node])));
            }
            if dc.find(node) != dc.find(GROUND) {
                return Err(Error::Topology(format!("node '{}' has no DC path to ground", self.names[node])));
            }
        }
        Ok(())
    }
}

/// Source EMF whose available power into a matched load is `power_dbm`.
pub fn emf_for_power(power_dbm: f64, r: f64) -> f64 {
    let watts = 1e-3 * 10f64.powf(power_dbm / 10.0);
    (8.0 * r * watts).sqrt()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

/// Knobs for [`build_nrr_network_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkOptions {
    /// Quality factor of every inductor at `q_ref_freq`; `None` for lossless inductors.
    pub inductor_q: Option<f64>,
    pub q_ref_freq: f64,
    /// Replace the driven port's source resistance (the port keeps `z_ref` for power bookkeeping).
    pub source_resistance: Option<f64>,
    /// Replace every varactor by a linear capacitor of its bias capacitance.
    pub linear_varactors: bool,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions { inductor_q: Some(40.0), q_ref_freq: 2.4e9, source_resistance: None, linear_varactors: false }
    }
}

impl NetworkOptions {
    pub fn lossless() -> Self {
        NetworkOptions { inductor_q: None, ..Self::default() }
    }

    fn series_r(&self, l: f64) -> f64 {
        match self.inductor_q {
            Some(q) => 2.0 * std::f64::consts::PI * self.q_ref_freq * l / q,
            None => 0.0,
        }
    }
}

/// Port names used by [`build_nrr_network`].
pub const PORT_M: &str = "port_m";
pub const PORT_D: &str = "port_d";

/// Lumped ring with both ports, default options.
pub fn build_nrr_network(ring: &RingSpec, ports: &PortPair, mode: Mode) -> Result<CircuitNetwork> {
    build_nrr_network_with(ring, ports, mode, &NetworkOptions::default())
}

/// Lumped ring: one inductor per half-cell with the half-line capacitance split to its ends,
/// a varactor (through `r_s`) at every odd position, and the port networks at M and D.
pub fn build_nrr_network_with(
    ring: &RingSpec,
    ports: &PortPair,
    mode: Mode,
    opts: &NetworkOptions,
) -> Result<CircuitNetwork> {
    ring.validate()?;
    ports.m_port.validate()?;
    ports.d_port.validate()?;
    if let Some(q) = opts.inductor_q {
        if !(q > 0.0) {
            return Err(Error::invalid("inductor_q", "must be > 0"));
        }
    }
    let cell = &ring.cell;
    if !(cell.varactor.c0 > 0.0) {
        return Err(Error::Topology("the ring needs loaded cells (c0 > 0)".into()));
    }
    let mut net = CircuitNetwork::new();
    let ring_nodes = add_ring(&mut net, ring, opts);

    attach_port(&mut net, PORT_M, "x_m", &ports.m_port, ring_nodes[ring.node_m], mode == Mode::Divider, opts);
    attach_port(&mut net, PORT_D, "x_d", &ports.d_port, ring_nodes[ring.node_d], mode == Mode::Doubler, opts);
    net.validate()?;
    Ok(net)
}

/// The bare lumped ring, without ports. Its only paths to ground are capacitive, so it
/// does not pass [`CircuitNetwork::validate`]; it is meant for frequency-domain use.
pub fn build_ring_network(ring: &RingSpec, opts: &NetworkOptions) -> Result<CircuitNetwork> {
    ring.validate()?;
    let mut net = CircuitNetwork::new();
    add_ring(&mut net, ring, opts);
    Ok(net)
}

/// Adds the ring's nodes and branches; returns the node of every ring position.
fn add_ring(net: &mut CircuitNetwork, ring: &RingSpec, opts: &NetworkOptions) -> Vec<NodeId> {
    let cell = &ring.cell;
    let n_pos = ring.positions();
    let ring_nodes: Vec<NodeId> = (0..n_pos)
        .map(|p| {
            let name = if p == ring.node_m {
                "M".to_string()
            } else if p == ring.node_d {
                "D".to_string()
            } else {
                format!("n{p}")
            };
            net.add_node(name)
        })
        .collect();

    let l_h = cell.half_line_inductance();
    let c_h = cell.half_line_capacitance();
    for p in 0..n_pos {
        let (a, b) = (ring_nodes[p], ring_nodes[(p + 1) % n_pos]);
        net.add(Branch::Inductor { a, b, l: l_h, r: opts.series_r(l_h) });
        net.add(Branch::Capacitor { a: ring_nodes[p], b: GROUND, c: c_h });
    }
    for p in ring.varactor_positions() {
        let node = ring_nodes[p];
        let v = cell.varactor;
        let junction = if v.r_s > 0.0 {
            let j = net.add_node(format!("j{p}"));
            net.add(Branch::Resistor { a: node, b: j, r: v.r_s });
            j
        } else {
            node
        };
        if opts.linear_varactors {
            net.add(Branch::Capacitor { a: junction, b: GROUND, c: v.bias_capacitance() });
        } else {
            net.add(Branch::Varactor { a: junction, b: GROUND, device: v });
        }
    }
    ring_nodes
}

fn attach_port(
    net: &mut CircuitNetwork,
    name: &str,
    inner: &str,
    port: &PortNetwork,
    ring_node: NodeId,
    driven: bool,
    opts: &NetworkOptions,
) {
    let port_node = net.add_node(name);
    let element = |net: &mut CircuitNetwork, e: Element, a: NodeId, b: NodeId| match e {
        Element::Inductor(l) => net.add(Branch::Inductor { a, b, l, r: opts.series_r(l) }),
        Element::Capacitor(c) => net.add(Branch::Capacitor { a, b, c }),
    };
    let (first, second) = port.elements();
    match port.layout {
        PortLayout::Series => {
            let x = net.add_node(inner);
            element(net, first, port_node, x);
            element(net, second, x, ring_node);
        }
        PortLayout::ShuntAtPort => {
            element(net, first, port_node, GROUND);
            element(net, second, port_node, ring_node);
        }
        PortLayout::ShuntAtRing => {
            element(net, first, port_node, ring_node);
            element(net, second, ring_node, GROUND);
        }
    }
    let branch = if driven {
        let r = opts.source_resistance.unwrap_or(port.z_ref);
        net.add(Branch::Source { a: port_node, b: GROUND, amplitude: 0.0, freq: 0.0, phase: 0.0, r })
    } else {
        net.add(Branch::Resistor { a: port_node, b: GROUND, r: port.z_ref })
    };
    net.add_port(name, port_node, branch, port.z_ref);
}
