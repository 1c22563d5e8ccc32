//! Time-domain simulation of the lumped ring and the divider/doubler experiments.

pub mod ac;
pub mod engine;
pub mod network;
pub mod spectrum;
pub mod sweep;

pub use ac::{ac_driving_point_impedance, ac_node_voltages};
pub use engine::{stored_energy, transient_run, transient_run_with, SimOptions, TimeSeries};
pub use network::{
    build_nrr_network, build_nrr_network_with, build_ring_network, emf_for_power, Branch, CircuitNetwork, Mode,
    NetworkOptions, NodeId, PortTap, GROUND, PORT_D, PORT_M,
};
pub use spectrum::{spectrum, spectrum_with_floor, Tone, ToneSpectrum};
pub use sweep::{
    divider_sweep, doubler_sweep, frequency_response, power_range, run_point_with_series, FrequencyResponse, NrrSetup,
    Probe, RunConfig, SweepPoint, SweepResult, Threshold,
};
