use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_gmtlab");

const DENSITY_CONTROL: &str = r#"
[field]
kind = "constant"
n = 2
angle = 0.3
domain = { lo = [0.0, 0.0], hi = [1.0, 1.0] }

[set]
kind = "box"
lo = [0.0, 0.0]
hi = [1.0, 1.0]

[params]
points = 50
"#;

fn run(dir: &Path, experiment: &str, config: &str, extra: &[&str]) -> (i32, String) {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(BIN)
        .arg(experiment)
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn density_control_passes_with_zero_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(dir.path(), "density", DENSITY_CONTROL, &[]);
    assert_eq!(code, 0, "{err}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["stats"]["below_threshold_fraction"], 0.0);
    assert_eq!(summary["passed"], true);
    for a in summary["assertions"].as_array().unwrap() {
        assert!(!a["anchor"].as_str().unwrap().is_empty());
    }
    let csv = fs::read_to_string(dir.path().join("out/density.csv")).unwrap();
    assert!(csv.starts_with("index,x_0,x_1,theta_0,theta_1,theta_2,theta_3,max_theta\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 51);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["set"]["kind"], "box");
}

#[test]
fn failed_assertion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DENSITY_CONTROL.replace("points = 50", "points = 50\nmax_fraction = -1.0");
    let (code, err) = run(dir.path(), "density", &cfg, &[]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("density failure fraction at the finest radius"));
    let summary = fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert!(summary.contains("\"failures\": 1"));
}

#[test]
fn wide_frame_ball_exits_one_citing_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[field]
kind = "rotation_2d"
kappa = 1.0
a = [1.0, 0.0]
domain = { lo = [-1.0, -1.0], hi = [1.0, 1.0] }

[frame]
x0 = [0.0, 0.0]
radius = 0.3
"#;
    let (code, err) = run(dir.path(), "jacobians", cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("Lambda * radius = 0.3"), "{err}");
    assert!(err.contains("d(W(x), W_0(x0)) < 1/4"), "{err}");
}

#[test]
fn hypothesis_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[field]
kind = "rotation_2d"
kappa = 1.0
a = [0.6, 0.8]
domain = { lo = [-1.0, -1.0], hi = [1.0, 1.0] }

[frame]
x0 = [0.0, 0.0]
radius = 0.2

[set]
kind = "box"
lo = [-0.1, -0.1]
hi = [0.1, 0.1]

[params]
points = 2
samples = 100
"#;
    let (code, err) = run(dir.path(), "sandwich", cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("small-diameter gate"), "{err}");
}

#[test]
fn csv_is_identical_across_reruns_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DENSITY_CONTROL.replace("angle = 0.3", "angle = 0.7");
    let mut outputs = Vec::new();
    for threads in ["1", "1", "3"] {
        let (code, err) = run(dir.path(), "density", &cfg, &["--threads", threads]);
        assert_eq!(code, 0, "{err}");
        outputs.push(fs::read(dir.path().join("out/density.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn samples_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(dir.path(), "bowtie", "[params]\npoints = 3\n", &["--samples", "500"]);
    assert_eq!(code, 0, "{err}");
    let meta = fs::read_to_string(dir.path().join("out/metadata.json")).unwrap();
    assert!(meta.contains("\"samples\": 500"));
}
