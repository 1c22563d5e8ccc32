use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ringwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringwave"))
        .current_dir(dir)
        .env_remove("RINGWAVE_THREADS")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = ringwave(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

/// Shortened transient settings so sweeps finish quickly.
const QUICK: &str = "[sim]\ncycles = 64\n\n[drive]\np_start = -10\np_stop = 0\np_step = 5\npoints = 11\nspan = \"400MHz\"\n";

#[test]
fn resonances_of_the_calibrated_ring() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["resonances", "--out", "o"]);
    let r = json(&tmp.path().join("o/resonances.json"));
    assert_eq!(r["zeros"], 1);
    assert_eq!(r["poles"], 1);
    let list = r["resonances"].as_array().unwrap();
    let zero = list.iter().find(|x| x["kind"] == "zero").unwrap()["freq"].as_f64().unwrap();
    let pole = list.iter().find(|x| x["kind"] == "pole").unwrap()["freq"].as_f64().unwrap();
    assert!((zero - 2.4e9).abs() < 0.1 * 2.4e9, "{zero}");
    assert!((pole - 4.8e9).abs() < 0.1 * 4.8e9, "{pole}");
    let csv = fs::read_to_string(tmp.path().join("o/impedance.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "freq_hz,re_z,im_z,abs_z");
    assert_eq!(csv.lines().count(), 552);
}

#[test]
fn shipped_scenario_equals_the_defaults() {
    let tmp = TempDir::new().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/calibrated.toml");
    ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "calibrate", "--out", "a"]);
    ok(tmp.path(), &["calibrate", "--out", "b"]);
    let config = |d: &str| json(&tmp.path().join(d).join("manifest.json"))["config"].clone();
    assert_eq!(config("a"), config("b"));
    assert_eq!(fs::read(tmp.path().join("a/calibration.json")).unwrap(), fs::read(tmp.path().join("b/calibration.json")).unwrap());
}

#[test]
fn no_reflectors_no_variance() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["localize", "--paths", "0", "--out", "o"]);
    let r = json(&tmp.path().join("o/localize.json"));
    assert_eq!(r["single_band_variance"], 0.0);
    assert_eq!(r["dual_band_variance"], 0.0);
}

#[test]
fn seed_flag_is_recorded_and_changes_draws() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["localize", "--seed", "7", "--trials", "1000", "--out", "a"]);
    ok(tmp.path(), &["localize", "--seed", "8", "--trials", "1000", "--out", "b"]);
    let a = json(&tmp.path().join("a/localize.json"));
    let b = json(&tmp.path().join("b/localize.json"));
    assert_eq!(json(&tmp.path().join("a/manifest.json"))["config"]["localization"]["seed"], 7);
    assert_ne!(a["single_band_variance"], b["single_band_variance"]);
}

#[test]
fn negative_c0_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[varactor]\nc0 = -1e-12\n");
    let out = ringwave(tmp.path(), &["--config", &cfg, "dispersion"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("varactor.c0"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_key_is_rejected_with_its_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[coupler]\nz_evn = 70\n");
    let out = ringwave(tmp.path(), &["--config", &cfg, "bpf"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("coupler") && err.contains("z_evn"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = ringwave(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(ringwave(tmp.path(), &["--config", "nope.toml", "bpf"]).status.code(), Some(2));
    assert_eq!(ringwave(tmp.path(), &["--threads", "0", "bpf"]).status.code(), Some(2));
    assert_eq!(ringwave(tmp.path(), &["figure", "7"]).status.code(), Some(2));
}

#[test]
fn unreachable_anchors_are_a_numeric_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "anchors.toml",
        "[varactor]\nc0 = \"2.2pF\"\n[line.calibration]\nbeta_d = 0.95\nat_freq = \"2.2GHz\"\nf_cutoff = \"4.62GHz\"\n",
    );
    let out = ringwave(tmp.path(), &["--config", &cfg, "calibrate"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn calibrate_hits_the_anchors() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["calibrate", "--out", "o"]);
    let r = json(&tmp.path().join("o/calibration.json"));
    assert!(r["beta_d_rel_error"].as_f64().unwrap() < 5e-3);
    assert!(r["f_cutoff_rel_error"].as_f64().unwrap() < 5e-3);
}

#[test]
fn suffixed_values_match_plain_si() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.toml", "[varactor]\nc0 = \"2.67pF\"\n[ring]\nd = \"4mm\"\n[scan]\nf_stop = \"6GHz\"\n");
    let b = write(tmp.path(), "b.json", r#"{"varactor": {"c0": 2.67e-12}, "ring": {"d": 0.004}, "scan": {"f_stop": 6e9}}"#);
    ok(tmp.path(), &["--config", &a, "dispersion", "--out", "a"]);
    ok(tmp.path(), &["--config", &b, "dispersion", "--out", "b"]);
    assert_eq!(fs::read(tmp.path().join("a/dispersion.csv")).unwrap(), fs::read(tmp.path().join("b/dispersion.csv")).unwrap());
}

#[test]
fn outputs_are_byte_reproducible_and_manifest_replays() {
    let tmp = TempDir::new().unwrap();
    for d in ["a", "b"] {
        ok(tmp.path(), &["standing-wave", "--mode", "doubler", "--v-p0", "500mV", "--out", d]);
    }
    let read = |p: &str| fs::read(tmp.path().join(p)).unwrap();
    assert_eq!(read("a/standing_wave.csv"), read("b/standing_wave.csv"));
    assert_eq!(read("a/standing_wave.json"), read("b/standing_wave.json"));

    let m = json(&tmp.path().join("a/manifest.json"));
    assert_eq!(m["tool"], "ringwave");
    assert_eq!(m["command"], "standing-wave");
    assert_eq!(m["config"]["pump"]["v_p0"], 0.5);
    assert!(m["runtime_s"].as_f64().unwrap() >= 0.0);
    assert!(m["version"].is_string());

    ok(tmp.path(), &["--config", "a/manifest.json", "standing-wave", "--out", "c"]);
    assert_eq!(read("a/standing_wave.csv"), read("c/standing_wave.csv"));
}

#[test]
fn bpf_reports_passband_and_rejection() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["bpf", "--out", "o"]);
    let r = json(&tmp.path().join("o/bpf.json"));
    let band = r["passband_hz"].as_array().unwrap();
    let (lo, hi) = (band[0].as_f64().unwrap(), band[1].as_f64().unwrap());
    assert!(((lo + hi) / 2.0 - 2.4e9).abs() < 1.0);
    assert!(r["rejection_at_2f_db"].as_f64().unwrap() >= 15.0);
}

#[test]
fn impedance_figure_has_script_and_columns() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["figure", "4", "--out", "o"]);
    let csv = fs::read_to_string(tmp.path().join("o/fig4.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "freq_hz,im_z_n1,im_z_n2,im_z_n3,im_z_n4,im_z_n5");
    let gp = fs::read_to_string(tmp.path().join("o/fig4.gp")).unwrap();
    assert!(gp.contains("\"fig4.csv\" using 1:6"));
}

#[test]
fn localization_figure_is_ordered() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[localization]\ntrials = 1000\nmax_paths = 3\n");
    ok(tmp.path(), &["--config", &cfg, "figure", "1c", "--out", "o"]);
    let csv = fs::read_to_string(tmp.path().join("o/fig1c.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert!(r[2] < r[1], "{r:?}");
    }
}

#[test]
fn doubler_sweep_csv_shape() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "q.toml", QUICK);
    ok(tmp.path(), &["--config", &cfg, "doubler-sweep", "--out", "o"]);
    let csv = fs::read_to_string(tmp.path().join("o/doubler_sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "p_in_dbm,p_out_dbm,p_leak_dbm,oscillating,pump_rejection_db");
    assert_eq!(csv.lines().count(), 4);
    let r = json(&tmp.path().join("o/doubler_sweep.json"));
    assert!(r["conversion_loss_db"].as_f64().is_some());
}

#[test]
fn divider_response_figure_writes_both_drives() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "q.toml", QUICK);
    ok(tmp.path(), &["--config", &cfg, "--threads", "2", "figure", "10", "--out", "o"]);
    for p in ["fig10_2dbm.csv", "fig10_4dbm.csv", "fig10.gp", "fig10.json"] {
        assert!(tmp.path().join("o").join(p).exists(), "{p}");
    }
    let r = json(&tmp.path().join("o/fig10.json"));
    assert_eq!(r["responses"].as_array().unwrap().len(), 2);
    assert!(r["wider_at_higher_drive"].is_boolean());
}

#[test]
fn transient_writes_waveforms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "q.toml", QUICK);
    ok(tmp.path(), &["--config", &cfg, "transient", "--mode", "doubler", "--f-in", "2.4GHz", "--p-in", "-5", "--out", "o"]);
    let wave = fs::read_to_string(tmp.path().join("o/waveform.csv")).unwrap();
    assert!(wave.starts_with("time,"));
    assert_eq!(wave.lines().count(), 64 * 64 + 2);
    let r = json(&tmp.path().join("o/transient.json"));
    assert_eq!(r["f_out"], 4.8e9);
    assert!(r["point"]["p_out"].as_f64().unwrap() > -100.0);
}
