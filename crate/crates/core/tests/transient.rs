use std::f64::consts::PI;

use num_complex::Complex64;

use ringwave_core::circuit::{PortPair, RingSpec, Varactor};
use ringwave_core::smallsignal::{self, ResonanceKind};
use ringwave_core::transient::sweep::{detect_threshold, run_point, sweep_network, Probe};
use ringwave_core::transient::{
    ac_driving_point_impedance, ac_node_voltages, build_nrr_network_with, build_ring_network, doubler_sweep,
    frequency_response, spectrum, transient_run, transient_run_with, Branch, CircuitNetwork, Mode, NetworkOptions,
    NrrSetup, RunConfig, SimOptions, Threshold, GROUND, PORT_D, PORT_M,
};

fn lossless_ring() -> RingSpec {
    let mut ring = RingSpec::calibrated(3).unwrap();
    ring.cell.varactor.r_s = 0.0;
    ring
}

fn linear() -> NetworkOptions {
    NetworkOptions { linear_varactors: true, ..NetworkOptions::lossless() }
}

/// Magnitude of the DFT of `x` at `f` (direct sum).
fn dft_mag(x: &[f64], dt: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f * dt;
    x.iter().enumerate().map(|(k, v)| Complex64::from_polar(*v, -w * k as f64)).sum::<Complex64>().norm()
}

#[test]
fn lumped_ring_impedance_tracks_the_distributed_model() {
    let ring = lossless_ring();
    let net = build_ring_network(&ring, &linear()).unwrap();
    let m = net.node("M").unwrap();
    for i in 1..=17 {
        let f = 0.1e9 * (i + 1) as f64;
        let lumped = ac_driving_point_impedance(&net, m, f).unwrap();
        let exact = smallsignal::ring_input_impedance(f, &ring);
        let err = (lumped - exact).norm() / exact.norm();
        assert!(err < 0.01, "{f:e}: {lumped} vs {exact} ({err:.3e})");
    }
}

#[test]
fn shorted_ring_rings_at_the_impedance_zero() {
    let ring = lossless_ring();
    let zero = smallsignal::find_resonances(&ring, 0.5e9, 6e9)
        .into_iter()
        .find(|r| r.kind == ResonanceKind::Zero)
        .unwrap()
        .freq;
    let mut net = build_ring_network(&ring, &linear()).unwrap();
    let m = net.node("M").unwrap();
    let d = net.node("D").unwrap();
    net.add(Branch::Resistor { a: m, b: GROUND, r: 1e-6 });
    let dt = 1.0 / (256.0 * zero);
    let ts = transient_run_with(&net, 400.0 / zero, dt, &SimOptions { seed: Some((d, 1e-3)), ..SimOptions::default() })
        .unwrap();
    let v = ts.voltage(d);
    // fine scan around the lowest mode
    let (mut best_f, mut best) = (0.0, 0.0);
    for i in 0..=4000 {
        let f = zero * (0.8 + 0.4 * i as f64 / 4000.0);
        let a = dft_mag(v, dt, f);
        if a > best {
            best = a;
            best_f = f;
        }
    }
    assert!((best_f - zero).abs() / zero < 0.01, "{best_f:e} vs {zero:e}");
}

#[test]
fn driven_linear_run_matches_phasor_solve() {
    let ring = RingSpec::calibrated(3).unwrap();
    let opts = NetworkOptions { linear_varactors: true, ..NetworkOptions::default() };
    let mut net = build_nrr_network_with(&ring, &PortPair::default(), Mode::Doubler, &opts).unwrap();
    let f = 2.4e9;
    net.set_drive(-10.0, f);
    let dt = 1.0 / (128.0 * f);
    let ts = transient_run(&net, 400.0 / f, dt).unwrap();
    let ac = ac_node_voltages(&net, f).unwrap();
    for name in [PORT_M, PORT_D, "D"] {
        let node = ts.node(name).unwrap();
        let s = spectrum(&ts, node, 50.0).unwrap();
        let expect = 10.0 * (ac[node - 1].norm_sqr() / (2.0 * 50.0) / 1e-3).log10();
        let got = s.power_at(f, 1e6);
        // 1 % in amplitude
        assert!((got - expect).abs() < 20.0 * 1.01f64.log10(), "{name}: {got} vs {expect}");
    }
}

#[test]
fn output_power_never_exceeds_input() {
    let setup = NrrSetup::calibrated().unwrap();
    for (mode, f, p) in [(Mode::Doubler, 2.4e9, 0.0), (Mode::Divider, 4.46e9, 10.0)] {
        let mut net = setup.network(mode).unwrap();
        net.set_drive(p, f);
        let dt = 1.0 / (64.0 * f);
        let ts = transient_run(&net, 200.0 / f, dt).unwrap();
        let half = ts.len() / 2;
        let mean_power = |port: &str| {
            let node = ts.node(port).unwrap();
            let v = &ts.voltage(node)[half..];
            let i = &ts.port_current(port).unwrap()[half..];
            v.iter().zip(i).map(|(v, i)| v * i).sum::<f64>() / v.len() as f64
        };
        let (driven, load) = match mode {
            Mode::Divider => (PORT_M, PORT_D),
            Mode::Doubler => (PORT_D, PORT_M),
        };
        let net_in = -mean_power(driven);
        let out = mean_power(load);
        assert!(out >= 0.0 && out <= 1.01 * net_in, "{mode:?}: in {net_in:e} out {out:e}");
    }
}

fn single_varactor_divider() -> (CircuitNetwork, usize) {
    let mut net = CircuitNetwork::new();
    let v = net.add_node("v");
    net.add(Branch::Varactor { a: v, b: GROUND, device: Varactor { r_s: 0.0, ..Varactor::default() } });
    net.add(Branch::Inductor { a: v, b: GROUND, l: 1.647e-9, r: 0.0 });
    net.add(Branch::Source { a: v, b: GROUND, amplitude: 0.0, freq: 0.0, phase: 0.0, r: 1000.0 });
    let term = net.add(Branch::Resistor { a: v, b: GROUND, r: 1000.0 });
    net.add_port("out", v, term, 1000.0);
    (net, v)
}

#[test]
fn no_subharmonic_well_below_threshold() {
    let (net, v) = single_varactor_divider();
    let probe = Probe { port: "out".into(), out_freq: 2.4e9, seed_node: Some(v) };
    let cfg = RunConfig::default();
    let powers: Vec<f64> = (0..=30).map(|i| i as f64).collect();
    let pts = sweep_network(&net, &probe, 4.8e9, &powers, &cfg).unwrap();
    let Some(Threshold::Found { p_th, .. }) = detect_threshold(&pts) else { panic!("{pts:?}") };
    let (below, _) = run_point(&net, &probe, 4.8e9, p_th - 6.0, &cfg).unwrap();
    assert!(below.p_out < cfg.floor_dbm + 3.0, "{below:?}");
    // above threshold the subharmonic grows and then flattens
    let above: Vec<f64> = pts.iter().filter(|p| p.oscillating).map(|p| p.p_out).collect();
    assert!(above.len() >= 3);
    assert!(above.last().unwrap() > above.first().unwrap());
}

#[test]
fn doubler_response_peaks_near_the_zero() {
    let setup = NrrSetup::calibrated().unwrap();
    let zero = setup.doubler_frequency().unwrap();
    let r = frequency_response(&setup, Mode::Doubler, -10.0, zero, 800e6, 17).unwrap();
    assert!((r.peak_freq - zero).abs() <= 0.15 * zero, "{:e} vs {zero:e}", r.peak_freq);
    assert!(r.bandwidth > 0.0);
    let single = frequency_response(&setup, Mode::Doubler, -10.0, zero, 0.0, 1).unwrap();
    assert_eq!(single.points.len(), 1);
    assert_eq!(single.bandwidth, 0.0);
}

#[test]
fn tiny_drive_leaves_no_harmonic() {
    let setup = NrrSetup::calibrated().unwrap();
    let r = doubler_sweep(&setup, 2.4e9, &[-60.0]).unwrap();
    assert_eq!(r.points[0].p_out, setup.run.floor_dbm);
}
