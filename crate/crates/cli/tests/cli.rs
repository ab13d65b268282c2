use std::path::Path;
use std::process::{Command, Output};

fn smol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smol"))
        .current_dir(dir)
        .env_remove("SMOL_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

const FRAME: &str = "seed = 3\n[pose]\nposition_mm = [2.0, -1.0, 80.0]\n";

#[test]
fn simulate_is_deterministic_and_writes_a_manifest() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "f.toml", FRAME);
    for out in ["a", "b"] {
        let o = smol(d.path(), &["simulate", "f.toml", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        std::fs::read(d.path().join("a/frame.csv")).unwrap(),
        std::fs::read(d.path().join("b/frame.csv")).unwrap()
    );
    let m: serde_json::Value = serde_json::from_str(&read(d.path(), "a/manifest.json")).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 3);
    let files: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["frame.csv", "truth.json"]);
    let mb: serde_json::Value = serde_json::from_str(&read(d.path(), "b/manifest.json")).unwrap();
    assert_eq!(m["config_sha256"], mb["config_sha256"]);
    assert_eq!(m["outputs"], mb["outputs"]);
}

#[test]
fn config_hash_ignores_formatting() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "a.toml", FRAME);
    write(
        d.path(),
        "b.toml",
        &format!("# same settings\n\n{}", FRAME.replace(" = ", "=")),
    );
    let hash = |name: &str, out: &str| {
        assert!(smol(d.path(), &["simulate", name, "--out", out])
            .status
            .success());
        let m: serde_json::Value =
            serde_json::from_str(&read(d.path(), &format!("{out}/manifest.json"))).unwrap();
        m["config_sha256"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("a.toml", "a"), hash("b.toml", "b"));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "f.toml", FRAME);
    let o = Command::new(env!("CARGO_BIN_EXE_smol"))
        .current_dir(d.path())
        .env("SMOL_OUT_DIR", "from-env")
        .args(["simulate", "f.toml"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.path().join("from-env/frame.csv").exists());
}

#[test]
fn missing_layout_file_names_the_path() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "f.toml",
        "[array]\nlayout = \"layouts/missing.json\"\n",
    );
    let o = smol(d.path(), &["simulate", "f.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("layouts/missing.json"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn invalid_fields_are_named() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "f.toml", "n = 0\n");
    let o = smol(d.path(), &["simulate", "f.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`n`"), "{}", stderr(&o));

    write(
        d.path(),
        "g.toml",
        "[device]\nf_res_hz = 103.5\nspring = 2\n",
    );
    let o = smol(d.path(), &["simulate", "g.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("spring"), "{}", stderr(&o));
}

#[test]
fn localize_recovers_the_simulated_pose() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "f.toml", FRAME);
    assert!(smol(d.path(), &["simulate", "f.toml", "--out", "sim"])
        .status
        .success());
    let o = smol(
        d.path(),
        &[
            "localize",
            "f.toml",
            "--frame",
            "sim/frame.csv",
            "--out",
            "loc",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let line = read(d.path(), "loc/localize.jsonl");
    let rec: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let p: Vec<f64> = rec["position_mm"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let err = ((p[0] - 2.0).powi(2) + (p[1] + 1.0).powi(2) + (p[2] - 80.0).powi(2)).sqrt();
    assert!(err < 2.0, "{p:?}");
    assert!(read(d.path(), "loc/localize_summary.csv").starts_with("x_mm,y_mm,z_mm,"));
}

#[test]
fn localizing_an_all_zero_frame_fails() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "f.toml", FRAME);
    let mut csv = String::from("time_s");
    for s in 0..10 {
        csv.push_str(&format!(",s{s}_T"));
    }
    csv.push('\n');
    for k in 0..2000 {
        csv.push_str(&format!("{:.9}", k as f64 / 10_000.0));
        csv.push_str(&",0".repeat(10));
        csv.push('\n');
    }
    write(d.path(), "zero.csv", &csv);
    let o = smol(
        d.path(),
        &["localize", "f.toml", "--frame", "zero.csv", "--out", "o"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no usable signal"), "{}", stderr(&o));
}

#[test]
fn uncalibrated_device_is_refused_until_calibrated() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "sim.toml",
        "seed = 5\nn = 20\n[noise]\npreset = \"none\"\n",
    );
    write(d.path(), "dev.toml", "seed = 5\nn = 20\nknown_z_mm = 80.0\n[device]\ntheta_max_deg = 12.0\neta_per_s = 3.0\ncalibrated = false\n");
    assert!(smol(d.path(), &["simulate", "sim.toml", "--out", "sim"])
        .status
        .success());

    let o = smol(
        d.path(),
        &[
            "localize",
            "dev.toml",
            "--frame",
            "sim/frame.csv",
            "--out",
            "o",
        ],
    );
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("calibration protocol"),
        "{}",
        stderr(&o)
    );

    let o = smol(
        d.path(),
        &[
            "calibrate",
            "dev.toml",
            "--frame",
            "sim/frame.csv",
            "--out",
            "cal",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dev: toml::Value = toml::from_str(&read(d.path(), "cal/device.toml")).unwrap();
    assert_eq!(dev["calibrated"].as_bool(), Some(true));
    let theta = dev["theta_max_deg"].as_float().unwrap();
    let eta = dev["eta_per_s"].as_float().unwrap();
    assert!((theta - 17.8).abs() < 0.2, "{theta}");
    assert!((eta - 1.1).abs() < 0.3, "{eta}");

    let o = smol(
        d.path(),
        &[
            "localize",
            "dev.toml",
            "--device",
            "cal/device.toml",
            "--frame",
            "sim/frame.csv",
            "--out",
            "loc",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn precision_sweep_has_one_row_per_n() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "p.toml",
        "seed = 2\nrepeats = 3\n[campaign]\nkind = \"precision_vs_n\"\nns = [1, 2, 4, 6, 10, 20]\n",
    );
    let o = smol(d.path(), &["sweep", "p.toml", "--out", "o", "--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(d.path(), "o/precision_vs_n_summary.csv");
    let ns: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ns, ["1", "2", "4", "6", "10", "20"]);
    assert_eq!(
        read(d.path(), "o/precision_vs_n_trials.jsonl")
            .lines()
            .count(),
        18
    );
}

#[test]
fn job_count_does_not_change_outputs() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "t.toml", "seed = 4\nrepeats = 2\n[campaign]\nkind = \"translation\"\naxis = \"x\"\nrange_mm = { start = 0.0, stop = 2.0, step = 1.0 }\n");
    for (jobs, out) in [("1", "a"), ("3", "b")] {
        assert!(
            smol(d.path(), &["sweep", "t.toml", "--jobs", jobs, "--out", out])
                .status
                .success()
        );
    }
    for f in [
        "translation_summary.csv",
        "translation_trials.jsonl",
        "translation_report.json",
    ] {
        assert_eq!(
            read(d.path(), &format!("a/{f}")),
            read(d.path(), &format!("b/{f}")),
            "{f}"
        );
    }
}

#[test]
fn commands_reject_other_campaign_kinds() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "s.toml", "[campaign]\nkind = \"superfast\"\n");
    let o = smol(d.path(), &["sweep", "s.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("superfast"), "{}", stderr(&o));
}

#[test]
fn failed_trials_need_partial() {
    let d = tempfile::tempdir().unwrap();
    // at 20 m the noiseless signal quantizes to zero, so the far point cannot be localized
    write(
        d.path(),
        "far.toml",
        "seed = 1\nrepeats = 2\n[noise]\npreset = \"none\"\n[campaign]\nkind = \"translation\"\naxis = \"z\"\nrange_mm = { start = 80.0, stop = 20080.0, step = 20000.0 }\n",
    );
    let o = smol(d.path(), &["sweep", "far.toml", "--out", "o"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--partial"), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&read(d.path(), "o/translation_report.json")).unwrap();
    assert_eq!(report["failed_trials"], 2);
    assert!(d.path().join("o/manifest.json").exists());
    assert!(
        smol(d.path(), &["sweep", "far.toml", "--out", "p", "--partial"])
            .status
            .success()
    );
}

#[test]
fn control_follows_the_bundled_path() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "c.toml",
        "seed = 1\n[campaign]\nkind = \"closed_loop\"\n",
    );
    let o = smol(d.path(), &["control", "c.toml", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(d.path(), "o/closed_loop_summary.csv");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "30", "{csv}");
    assert_eq!(row[3], "0", "{csv}");
    assert_eq!(row[4], "true", "{csv}");
    let log = read(d.path(), "o/closed_loop_trials.jsonl");
    assert!(log.lines().count() > 30);
}

#[test]
fn version_prints_the_package_version() {
    let d = tempfile::tempdir().unwrap();
    let o = smol(d.path(), &["version"]);
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).trim(),
        format!("smol {}", env!("CARGO_PKG_VERSION"))
    );
}
