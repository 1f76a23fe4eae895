use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qil::commands::ideal_single_photon_counts;
use qil::io;
use qil::linops::{symmetric_bs_4, ComplexMatrix};
use qil::sim::CircuitConfig;
use qil::tomography::{real_border_gauge, synthesize_measurements};
use serde_json::Value;

fn qil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qil"))
        .args(args)
        .env("QIL_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qil(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn err(args: &[&str]) -> String {
    let out = qil(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ideal_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("ideal.json");
    io::write_json(&p, &CircuitConfig::ideal()).unwrap();
    p
}

#[test]
fn ideal_simulation_is_one_perfect_zone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ideal_config(dir.path());
    let out = dir.path().join("run");
    ok(&["--config", s(&cfg), "--duration", "1", "--out", s(&out), "simulate"]);
    let summary = json(&out.join("summary.json"));
    let zones = summary["zones"].as_array().unwrap();
    assert_eq!(zones.len(), 1);
    assert_eq!(summary["overall_p_bar"].as_f64(), Some(1.0));
    assert_eq!(summary["realignments"].as_u64(), Some(0));
    assert!(out.join("zones/zone_000.csv").exists());
    io::read_runlog(&out.join("runlog.jsonl")).unwrap();
}

#[test]
fn bad_durations_and_epsilons_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    err(&["--duration", "-1", "--out", s(&out), "simulate"]);
    err(&["--duration", "0.01", "--out", s(&out), "simulate"]);
    let f = dir.path().join("f.csv");
    fs::write(&f, io::frequency_csv(&ideal_single_photon_counts(1000))).unwrap();
    let msg = err(&["--epsilon", "1", "--out", s(&out), "certify", "--frequencies", s(&f)]);
    assert!(msg.contains("epsilon"), "{msg}");
    err(&["--mu", "0", "--out", s(&out), "certify", "--frequencies", s(&f)]);
}

#[test]
fn exact_ideal_table_certifies_two_bits() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ideal.csv");
    fs::write(&f, io::frequency_csv(&ideal_single_photon_counts(1_000_000))).unwrap();
    let out = dir.path().join("cert");
    ok(&["--out", s(&out), "certify", "--frequencies", s(&f), "--exact"]);
    let cert = json(&out.join("certification.json"));
    let h = cert["certificates"][0]["h_min"].as_f64().unwrap();
    assert!((h - 2.0).abs() < 1e-3, "{h}");

    // finite statistics pay for the confidence interval
    ok(&["--out", s(&out), "certify", "--frequencies", s(&f)]);
    let finite = json(&out.join("certification.json"))["certificates"][0]["h_min"].as_f64().unwrap();
    assert!(finite > 1.0 && finite < h, "{finite}");
}

#[test]
fn certify_reads_a_simulated_runlog() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ideal_config(dir.path());
    let run = dir.path().join("run");
    ok(&["--config", s(&cfg), "--duration", "1", "--out", s(&run), "simulate"]);
    let out = dir.path().join("cert");
    ok(&["--out", s(&out), "certify", "--runlog", s(&run.join("runlog.jsonl"))]);
    let cert = json(&out.join("certification.json"));
    assert_eq!(cert["certificates"].as_array().unwrap().len(), 1);
    let h = cert["summary"]["mean_h_min"].as_f64().unwrap();
    assert!(h > 1.0 && h < 2.0, "{h}");
}

#[test]
fn rerun_reproduces_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    ok(&["--seed", "11", "--duration", "8", "--out", s(&a), "simulate"]);
    let b = dir.path().join("b");
    ok(&["--out", s(&b), "rerun", s(&a.join("manifest.json"))]);
    let outputs = json(&a.join("manifest.json"))["outputs"].as_array().unwrap().clone();
    assert!(outputs.len() >= 3);
    for name in outputs {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    let f1 = dir.path().join("f1");
    ok(&["--seed", "3", "--out", s(&f1), "fringe", "--pulses", "20000"]);
    let f2 = dir.path().join("f2");
    ok(&["--out", s(&f2), "rerun", s(&f1.join("manifest.json"))]);
    assert_eq!(fs::read(f1.join("fringe.csv")).unwrap(), fs::read(f2.join("fringe.csv")).unwrap());
}

#[test]
fn different_seeds_give_different_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["--seed", "1", "--duration", "1", "--out", s(&a), "simulate"]);
    ok(&["--seed", "2", "--duration", "1", "--out", s(&b), "simulate"]);
    assert_ne!(fs::read(a.join("runlog.jsonl")).unwrap(), fs::read(b.join("runlog.jsonl")).unwrap());
}

#[test]
fn fringe_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    ok(&["--out", s(&out), "fringe", "--aligned"]);
    let scan = io::read_fringe_csv(&out.join("fringe.csv")).unwrap();
    assert_eq!(io::fringe_csv(&scan), fs::read_to_string(out.join("fringe.csv")).unwrap());
    let report = json(&out.join("fringe.json"));
    let v = report["average_visibility"].as_f64().unwrap();
    assert!((scan.average_visibility() - v).abs() < 1e-9);
    assert!(v > 0.99, "{v}");
}

#[test]
fn empty_and_malformed_tables_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    err(&["--out", s(&out), "certify", "--frequencies", s(&empty)]);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,a,count\n0,0,12\n0,1,oops\n").unwrap();
    let msg = err(&["--out", s(&out), "certify", "--frequencies", s(&bad)]);
    assert!(msg.contains("line 3"), "{msg}");
    err(&["--out", s(&out), "tomography", "--intensity", s(&empty), "--scans", s(&empty)]);
    assert!(!out.join("certification.json").exists());
}

#[test]
fn tomography_recovers_a_synthetic_device() {
    let dir = tempfile::tempdir().unwrap();
    let w = ComplexMatrix::new(real_border_gauge(symmetric_bs_4(0.4).matrix().as_matrix())).unwrap();
    let (table, scans) = synthesize_measurements(&w, 17).unwrap();
    let (ip, sp) = (dir.path().join("intensity.csv"), dir.path().join("scans.csv"));
    fs::write(&ip, io::intensity_csv(&table)).unwrap();
    fs::write(&sp, io::scans_csv(&scans)).unwrap();
    assert_eq!(io::read_intensity_csv(&ip).unwrap(), table);
    assert_eq!(io::read_scans_csv(&sp).unwrap(), scans);
    let out = dir.path().join("t");
    ok(&["--out", s(&out), "tomography", "--intensity", s(&ip), "--scans", s(&sp), "--samples", "0"]);
    let t = json(&out.join("tomography.json"));
    let f = t["result"]["fidelity_exp_unitary"].as_f64().unwrap();
    assert!(f > 1.0 - 1e-8, "{f}");
}

#[test]
fn fixture_tomography_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let report = ok(&["--fixture", "paper-4x4", "--out", s(&out), "tomography", "--samples", "200"]);
    assert!(!report.is_empty());
    let t = json(&out.join("tomography.json"));
    let f = t["result"]["model"]["fidelity"].as_f64().unwrap();
    assert!((f - 0.995).abs() < 0.003, "{f}");
    let msg = err(&["--fixture", "paper-5x5", "--out", s(&out), "tomography"]);
    assert!(msg.contains("paper-4x4"), "{msg}");
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"stabilizer": {"stepp": 0.1}}"#).unwrap();
    let msg = err(&["--config", s(&cfg), "--out", s(&out), "simulate"]);
    assert!(msg.contains("stabilizer.stepp"), "{msg}");
    fs::write(&cfg, r#"{"mu": -0.4}"#).unwrap();
    let msg = err(&["--config", s(&cfg), "--out", s(&out), "simulate"]);
    assert!(msg.contains("mu"), "{msg}");
}

#[test]
fn reproduce_lists_targets_and_checks_ideal_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let msg = err(&["--out", s(&out), "reproduce", "fidelity-9x9"]);
    for t in ["fidelity-4x4", "fidelity-7x7", "ideal-entropy", "entropy-band"] {
        assert!(msg.contains(t), "{msg}");
    }
    let report = ok(&["--out", s(&out), "reproduce", "ideal-entropy"]);
    assert!(report.starts_with("PASS H_min"), "{report}");
    let saved = json(&out.join("reproduce.json"));
    assert_eq!(saved["checks"][0]["pass"], Value::Bool(true));
}

#[test]
fn variant_flag_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    err(&["--two-photon-variant", "classical", "--out", s(&out), "reproduce", "ideal-entropy"]);
    ok(&["--two-photon-variant", "bosonic", "--out", s(&out), "reproduce", "ideal-entropy"]);
}
