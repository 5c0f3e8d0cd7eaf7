use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nlos_track(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlos-track"))
        .args(args)
        .env("NLOS_TRACK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_config_echoes_noise_variance() {
    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml");
    let out = nlos_track(&["validate-config", "--config", shipped]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("noise_var = 5.12\n"), "{text}");
    assert!(text.contains("wavelength_m"));
    assert!(text.contains("change_test_dof = 1024"));
}

#[test]
fn overrides_show_up_in_effective_config() {
    let out = nlos_track(&["validate-config", "--snr-db", "10", "--a1", "1", "--steps", "42", "--seed", "9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("noise_var = 51.2"), "{text}");
    assert!(text.contains("ar = [1.0]"));
    assert!(text.contains("n_steps = 42"));
    assert!(text.contains("seed = 9"));
}

#[test]
fn malformed_config_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n\n[arrays]\nn_tx = 64\nn_tz = 8\n").unwrap();
    let out = nlos_track(&["validate-config", "--config", path(&cfg)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 5"), "{err}");
    assert!(err.contains("n_tz"), "{err}");
}

#[test]
fn invalid_values_are_rejected() {
    let out = nlos_track(&["validate-config", "--steps", "0"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let out = nlos_track(&["simulate", "--mode", "three_stage"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a/nested"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = nlos_track(&["simulate", "--seed", "7", "--steps", "40", "--out", path(out)]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["trace.csv", "scene.csv"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn report_on_empty_trace_fails_with_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = nlos_track(&["report", path(&empty)]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("no records"));
}

#[test]
fn report_reproduces_campaign_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("camp");
    let res = nlos_track(&["campaign", "--seeds", "2", "--steps", "40", "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_dir(out.join("traces")).unwrap().count(), 4);
    let again = dir.path().join("re/summary.json");
    let res = nlos_track(&["report", path(&out.join("traces")), "--out", path(&again)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read(out.join("summary.json")).unwrap(), fs::read(&again).unwrap());

    let json: serde_json::Value = serde_json::from_slice(&fs::read(&again).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["modes"].as_array().unwrap().len(), 2);
}

#[test]
fn campaign_with_one_mode() {
    let dir = tempfile::tempdir().unwrap();
    let res = nlos_track(&["campaign", "--seeds", "1", "--steps", "20", "--mode", "single_stage", "--out", path(dir.path())]);
    assert!(res.status.success());
    let names: Vec<String> = fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names, ["single_stage_run000.csv"]);
}
