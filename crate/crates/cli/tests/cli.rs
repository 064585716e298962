use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn echobp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echobp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn synth_run_eval_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&echobp(d, &["synth", "-o", "rf.bin", "--truth", "truth.json"]));
    let stdout = ok(&echobp(
        d,
        &["run", "-i", "rf.bin", "--dbp", "63", "-o", "bp.csv", "--beats", "beats.json", "--summary", "summary.json"],
    ));
    assert!(stdout.starts_with("PWV "), "{stdout}");
    std::fs::remove_file(d.join("rf.bin")).unwrap();

    let csv = std::fs::read_to_string(d.join("bp.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("time_s,pressure_mmHg,diameter_mm"));
    assert_eq!(csv.lines().count(), 2001);

    let summary = read_json(&d.join("summary.json"));
    let pwv = summary["pwv_mean_mps"].as_f64().unwrap();
    assert!((pwv - 8.03).abs() <= 0.5, "{pwv}");
    let beats = read_json(&d.join("beats.json"));
    assert!(beats.as_array().unwrap().len() >= 7);

    ok(&echobp(d, &["eval", "--measured", "bp.csv", "--reference", "truth.json", "-o", "report.json"]));
    let report = read_json(&d.join("report.json"));
    assert_eq!(report["alignment"], "first-cycle-minimum");
    assert!(report["rmse"].as_f64().unwrap() <= 2.0, "{report}");
    assert!(report["pearson_r"].as_f64().unwrap() >= 0.99, "{report}");
    assert!(report["beats"]["pp"]["max_abs_error"].as_f64().unwrap() <= 3.0, "{report}");
    let ba = &report["bland_altman"];
    let (m, s) = (ba["mean_diff"].as_f64().unwrap(), ba["sd_diff"].as_f64().unwrap());
    assert!((ba["loa_low"].as_f64().unwrap() - (m - 1.96 * s)).abs() < 1e-9);
}

#[test]
fn pwv_on_noiseless_stream() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"snr_db": null, "pwv_true_mps": 8.0, "duration_s": 6.0}"#).unwrap();
    ok(&echobp(d, &["synth", "--config", "cfg.json", "-o", "rf.bin"]));
    let stdout = ok(&echobp(d, &["pwv", "-i", "rf.bin", "--assess", "6"]));
    let (mean, sd) = stdout.trim().trim_end_matches(" m/s").split_once(" ± ").expect("mean ± sd");
    assert_eq!(mean, "8.00");
    assert!(sd.parse::<f64>().unwrap() <= 0.10, "{stdout}");
}

#[test]
fn synth_seed_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"duration_s": 0.05}"#).unwrap();
    for (name, seed) in [("a.bin", "7"), ("b.bin", "7"), ("c.bin", "8")] {
        ok(&echobp(d, &["synth", "--config", "cfg.json", "--seed", seed, "-o", name]));
    }
    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_ne!(read("a.bin"), read("c.bin"));
}

#[test]
fn truncated_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"duration_s": 0.05}"#).unwrap();
    ok(&echobp(d, &["synth", "--config", "cfg.json", "-o", "rf.bin"]));
    let bytes = std::fs::read(d.join("rf.bin")).unwrap();
    std::fs::write(d.join("cut.bin"), &bytes[..bytes.len() - 3]).unwrap();
    let out = echobp(d, &["run", "-i", "cut.bin", "--dbp", "63"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unexpected end of stream"));
}

#[test]
fn structured_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"duration_s": 0.05, "snr_db": 12.0}"#).unwrap();
    ok(&echobp(d, &["synth", "--config", "cfg.json", "-o", "rf.bin"]));
    let out = echobp(d, &["run", "-i", "rf.bin", "--dbp", "63"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("channel") && err.contains("dB"), "{err}");

    let out = echobp(d, &["run", "-i", "rf.bin", "--dbp=-5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dbp_input_mmHg"));

    std::fs::write(d.join("bad.bin"), b"RIFF0000000000000000000000000").unwrap();
    let out = echobp(d, &["pwv", "-i", "bad.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}
