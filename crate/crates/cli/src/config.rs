//! Scenario files: TOML (or JSON) with one block per model, every field optional.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ringwave_core::circuit::{
    calibrate_line, CalibrationAnchors, LineSpec, PortKind, PortLayout, PortNetwork, PortPair, RingSpec, UnitCell,
    Varactor,
};
use ringwave_core::coupler::CoupledLineSpec;
use ringwave_core::localization::ChannelModel;
use ringwave_core::transient::{Mode, NetworkOptions, NrrSetup, RunConfig};

use crate::error::CliError;
use crate::quantity;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub varactor: VaractorConfig,
    pub line: LineConfig,
    pub ring: RingConfig,
    pub ports: PortsConfig,
    pub coupler: CouplerConfig,
    pub sim: SimConfig,
    pub localization: LocalizationConfig,
    pub scan: ScanConfig,
    pub pump: PumpConfig,
    pub drive: DriveConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaractorConfig {
    #[serde(deserialize_with = "quantity::de")]
    pub c0: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub vj: f64,
    pub m: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub v_bias: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub r_s: f64,
}

impl Default for VaractorConfig {
    fn default() -> Self {
        let v = Varactor::default();
        VaractorConfig { c0: v.c0, vj: v.vj, m: v.m, v_bias: v.v_bias, r_s: v.r_s }
    }
}

/// Either `z0` and `eps_eff` directly, or fitted to `calibration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineConfig {
    #[serde(deserialize_with = "quantity::de_opt", skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_eff: Option<f64>,
    /// Np/m at `alpha_ref_hz`.
    pub alpha: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub alpha_ref_hz: f64,
    pub calibration: AnchorConfig,
}

impl Default for LineConfig {
    fn default() -> Self {
        LineConfig { z0: None, eps_eff: None, alpha: 0.0, alpha_ref_hz: 2.4e9, calibration: AnchorConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub beta_d: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub at_freq: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub f_cutoff: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        let a = CalibrationAnchors::default();
        AnchorConfig { beta_d: a.beta_d, at_freq: a.at_freq, f_cutoff: a.f_cutoff }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingConfig {
    pub n_cells: usize,
    #[serde(deserialize_with = "quantity::de")]
    pub d: f64,
    /// Half-cell positions; M defaults to 0 and D to `n_cells`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_d: Option<usize>,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig { n_cells: 3, d: 4e-3, node_m: None, node_d: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortsConfig {
    #[serde(deserialize_with = "quantity::de")]
    pub l1: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub c1: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub l2: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub l3: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub z_ref: f64,
    pub layout_m: PortLayout,
    pub layout_d: PortLayout,
}

impl Default for PortsConfig {
    fn default() -> Self {
        let p = PortPair::default();
        let (PortKind::DoublerLc { l1, c1 }, PortKind::DividerLl { l2, l3 }) = (p.m_port.kind, p.d_port.kind) else {
            unreachable!("default ports are an LC pair at M and an LL pair at D")
        };
        PortsConfig { l1, c1, l2, l3, z_ref: p.m_port.z_ref, layout_m: p.m_port.layout, layout_d: p.d_port.layout }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplerConfig {
    #[serde(deserialize_with = "quantity::de")]
    pub z_even: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub z_odd: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub f_design: f64,
}

impl Default for CouplerConfig {
    fn default() -> Self {
        let c = CoupledLineSpec::default();
        CouplerConfig { z_even: c.z_even, z_odd: c.z_odd, f_design: c.f_design }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub cycles: usize,
    /// Time steps per drive period.
    pub steps_per_cycle: usize,
    pub newton_reltol: f64,
    pub max_iter: usize,
    #[serde(deserialize_with = "quantity::de")]
    pub seed_volts: f64,
    pub floor_dbm: f64,
    pub detect_margin_db: f64,
    /// Inductor quality factor at `q_ref_freq`; 0 for lossless inductors.
    pub inductor_q: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub q_ref_freq: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let r = RunConfig::default();
        let n = NetworkOptions::default();
        SimConfig {
            cycles: r.cycles,
            steps_per_cycle: r.steps_per_cycle,
            newton_reltol: r.reltol,
            max_iter: r.max_iter,
            seed_volts: r.seed_volts,
            floor_dbm: r.floor_dbm,
            detect_margin_db: r.detect_margin_db,
            inductor_q: n.inductor_q.unwrap_or(0.0),
            q_ref_freq: n.q_ref_freq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub n_paths: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(deserialize_with = "quantity::de")]
    pub f_base: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub distance: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub max_excess_delay: f64,
    pub max_gain: f64,
    /// Largest reflector count in the variance-versus-paths recipe.
    pub max_paths: usize,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        let m = ChannelModel::default();
        LocalizationConfig {
            n_paths: 3,
            trials: 2000,
            seed: 1,
            f_base: 2.4e9,
            distance: m.distance,
            max_excess_delay: m.max_excess_delay,
            max_gain: m.max_gain,
            max_paths: 8,
        }
    }
}

/// Frequency grid for the small-signal subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(deserialize_with = "quantity::de")]
    pub f_start: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub f_stop: f64,
    pub points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { f_start: 0.5e9, f_stop: 6e9, points: 551 }
    }
}

impl ScanConfig {
    pub fn grid(&self) -> Vec<f64> {
        linspace(self.f_start, self.f_stop, self.points)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpConfig {
    pub mode: Mode,
    #[serde(deserialize_with = "quantity::de")]
    pub v_p0: f64,
    /// Harmonic frequency; defaults to the ring's pole (divider) or twice its zero (doubler).
    #[serde(deserialize_with = "quantity::de_opt", skip_serializing_if = "Option::is_none")]
    pub f_pump: Option<f64>,
    pub x_points: usize,
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig { mode: Mode::Divider, v_p0: 1.0, f_pump: None, x_points: 201 }
    }
}

/// Drive settings for the transient subcommands. Powers in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub mode: Mode,
    /// Defaults to the ring's pole (divider) or zero (doubler).
    #[serde(deserialize_with = "quantity::de_opt", skip_serializing_if = "Option::is_none")]
    pub f_in: Option<f64>,
    pub p_in: f64,
    pub p_start: f64,
    pub p_stop: f64,
    pub p_step: f64,
    #[serde(deserialize_with = "quantity::de")]
    pub span: f64,
    pub points: usize,
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig { mode: Mode::Divider, f_in: None, p_in: 0.0, p_start: -20.0, p_stop: 20.0, p_step: 1.0, span: 800e6, points: 21 }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.into(), message: message.into() }
}

impl ScenarioConfig {
    /// Reads a TOML or JSON scenario as an untyped tree. A run manifest is accepted too: its
    /// `config` is returned.
    pub fn read_raw(path: &Path) -> Result<Value, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Read { path: path.display().to_string(), source: e })?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let raw: Value = if is_json {
            serde_json::from_str(&text).map_err(|e| invalid("<file>", e.to_string()))?
        } else {
            let t: toml::Table = toml::from_str(&text).map_err(|e| invalid("<file>", e.to_string()))?;
            serde_json::to_value(t).map_err(|e| invalid("<file>", e.to_string()))?
        };
        if raw.get("tool").and_then(Value::as_str) == Some("ringwave") {
            return raw.get("config").cloned().ok_or_else(|| invalid("config", "manifest has no config"));
        }
        Ok(raw)
    }

    pub fn from_value(raw: Value) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(&raw).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        log_defaults(&raw, &serde_json::to_value(&cfg).expect("config serializes"), "");
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.varactor().validate()?;
        let l = &self.line;
        match (l.z0, l.eps_eff) {
            (Some(_), None) => return Err(invalid("line.eps_eff", "required when line.z0 is given")),
            (None, Some(_)) => return Err(invalid("line.z0", "required when line.eps_eff is given")),
            (Some(z0), Some(eps)) => LineSpec::lossless(z0, eps).validate()?,
            (None, None) => {}
        }
        if !(l.alpha >= 0.0) {
            return Err(invalid("line.alpha", "must be >= 0"));
        }
        if !(self.ring.d > 0.0) {
            return Err(invalid("ring.d", format!("must be > 0, got {}", self.ring.d)));
        }
        if self.ring.n_cells == 0 {
            return Err(invalid("ring.n_cells", "must be >= 1"));
        }
        for (name, pos) in [("ring.node_m", self.ring.node_m), ("ring.node_d", self.ring.node_d)] {
            if pos.is_some_and(|p| p >= 2 * self.ring.n_cells) {
                return Err(invalid(name, "must be a half-cell position below 2 * n_cells"));
            }
        }
        let p = &self.ports;
        for (name, v) in [("ports.l1", p.l1), ("ports.c1", p.c1), ("ports.l2", p.l2), ("ports.l3", p.l3), ("ports.z_ref", p.z_ref)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        self.coupler().validate()?;
        self.run_config().validate()?;
        if !(self.sim.inductor_q >= 0.0) {
            return Err(invalid("sim.inductor_q", "must be >= 0"));
        }
        let loc = &self.localization;
        if !(loc.f_base > 0.0) {
            return Err(invalid("localization.f_base", "must be > 0"));
        }
        if !(loc.distance > 0.0 && loc.max_excess_delay >= 0.0 && loc.max_gain >= 0.0) {
            return Err(invalid("localization", "distance must be > 0, delays and gains >= 0"));
        }
        let s = &self.scan;
        if !(s.f_start > 0.0 && s.f_stop > s.f_start) {
            return Err(invalid("scan.f_stop", "need 0 < f_start < f_stop"));
        }
        if s.points < 2 {
            return Err(invalid("scan.points", "must be >= 2"));
        }
        if !(self.pump.v_p0 >= 0.0) {
            return Err(invalid("pump.v_p0", "must be >= 0"));
        }
        if self.pump.f_pump.is_some_and(|f| !(f > 0.0)) {
            return Err(invalid("pump.f_pump", "must be > 0"));
        }
        let d = &self.drive;
        if d.f_in.is_some_and(|f| !(f > 0.0)) {
            return Err(invalid("drive.f_in", "must be > 0"));
        }
        if !(d.p_step > 0.0 && d.p_stop >= d.p_start) {
            return Err(invalid("drive.p_step", "need p_step > 0 and p_stop >= p_start"));
        }
        if !(d.span >= 0.0) {
            return Err(invalid("drive.span", "must be >= 0"));
        }
        Ok(())
    }

    pub fn varactor(&self) -> Varactor {
        let v = &self.varactor;
        Varactor { c0: v.c0, vj: v.vj, m: v.m, v_bias: v.v_bias, r_s: v.r_s }
    }

    pub fn anchors(&self) -> CalibrationAnchors {
        let a = &self.line.calibration;
        CalibrationAnchors { beta_d: a.beta_d, at_freq: a.at_freq, f_cutoff: a.f_cutoff }
    }

    pub fn line(&self) -> Result<LineSpec, CliError> {
        let mut line = match (self.line.z0, self.line.eps_eff) {
            (Some(z0), Some(eps)) => LineSpec::lossless(z0, eps),
            _ => calibrate_line(&self.anchors(), self.varactor.c0, self.ring.d)?,
        };
        line.alpha = self.line.alpha;
        line.alpha_ref_hz = self.line.alpha_ref_hz;
        Ok(line)
    }

    pub fn ring(&self) -> Result<RingSpec, CliError> {
        let cell = UnitCell { d: self.ring.d, line: self.line()?, varactor: self.varactor() };
        let mut ring = RingSpec::new(self.ring.n_cells, cell);
        ring.node_m = self.ring.node_m.unwrap_or(ring.node_m);
        ring.node_d = self.ring.node_d.unwrap_or(ring.node_d);
        ring.validate()?;
        Ok(ring)
    }

    pub fn ports(&self) -> PortPair {
        let p = &self.ports;
        let mut m_port = PortNetwork::doubler_port(p.l1, p.c1).with_layout(p.layout_m);
        let mut d_port = PortNetwork::divider_port(p.l2, p.l3).with_layout(p.layout_d);
        m_port.z_ref = p.z_ref;
        d_port.z_ref = p.z_ref;
        PortPair { m_port, d_port }
    }

    pub fn coupler(&self) -> CoupledLineSpec {
        let c = &self.coupler;
        CoupledLineSpec { z_even: c.z_even, z_odd: c.z_odd, f_design: c.f_design }
    }

    pub fn run_config(&self) -> RunConfig {
        let s = &self.sim;
        RunConfig {
            cycles: s.cycles,
            steps_per_cycle: s.steps_per_cycle,
            seed_volts: s.seed_volts,
            floor_dbm: s.floor_dbm,
            detect_margin_db: s.detect_margin_db,
            reltol: s.newton_reltol,
            max_iter: s.max_iter,
        }
    }

    pub fn setup(&self) -> Result<NrrSetup, CliError> {
        Ok(NrrSetup {
            ring: self.ring()?,
            ports: self.ports(),
            network: NetworkOptions {
                inductor_q: (self.sim.inductor_q > 0.0).then_some(self.sim.inductor_q),
                q_ref_freq: self.sim.q_ref_freq,
                ..NetworkOptions::default()
            },
            run: self.run_config(),
            coupler: self.coupler(),
        })
    }

    pub fn channel_model(&self) -> ChannelModel {
        let l = &self.localization;
        ChannelModel { distance: l.distance, max_excess_delay: l.max_excess_delay, max_gain: l.max_gain }
    }
}

/// Logs every leaf present in `resolved` but absent from `raw`.
fn log_defaults(raw: &Value, resolved: &Value, prefix: &str) {
    let Value::Object(fields) = resolved else { return };
    for (key, value) in fields {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (raw.get(key), value) {
            (Some(r), Value::Object(_)) => log_defaults(r, value, &path),
            (None, Value::Object(_)) => log_defaults(&Value::Null, value, &path),
            (None, _) => info!("default {path} = {value}"),
            (Some(_), _) => {}
        }
    }
}
