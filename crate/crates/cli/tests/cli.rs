use std::path::{Path, PathBuf};
use std::process::Command;

const CONFIG: &str = r#"{
    "geometry": {"r0": 0.9, "cuts": [0.5]},
    "pairs": [
        {"gamma": [{"offset": 1.0, "gradient": [0, 0, 0]}, {"offset": 2.0, "gradient": [0, 0, 0]}],
         "q": [{"offset": 0.0, "gradient": [0, 0, 0]}, {"offset": 0.0, "gradient": [0, 0, 0]}]},
        {"gamma": [{"offset": 1.05, "gradient": [0, 0, 0]}, {"offset": 2.0, "gradient": [0, 0, 0]}],
         "q": [{"offset": 0.0, "gradient": [0, 0, 0]}, {"offset": 0.0, "gradient": [0, 0, 0]}]}
    ],
    "grids": [16],
    "output_dir": "OUT",
    "sweep": {"m": 8, "samples": 6}
}"#;

fn setup(dir: &Path, text: &str) -> PathBuf {
    let out = dir.join("out");
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, text.replace("OUT", &out.display().to_string())).unwrap();
    cfg
}

fn lipstab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lipstab")).args(args).output().unwrap()
}

#[test]
fn validate_passes_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let o = lipstab(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/validate.json")).unwrap()).unwrap();
    assert_eq!(v["headline"]["passed"], true);
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let low = setup(dir.path(), &CONFIG.replace("[16]", "[8]"));
    assert_eq!(lipstab(&["validate", "--config", low.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("absent.json");
    assert_eq!(lipstab(&["sweep", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    // An assumption violation: gamma below the lower bound.
    let weak = setup(dir.path(), &CONFIG.replacen(r#""offset": 1.0"#, r#""offset": 0.01"#, 1));
    assert_eq!(lipstab(&["validate", "--config", weak.to_str().unwrap()]).status.code(), Some(2));
    let mut v: serde_json::Value = serde_json::from_str(CONFIG).unwrap();
    v["pairs"].as_array_mut().unwrap().truncate(1);
    let one = setup(dir.path(), &v.to_string());
    assert_eq!(lipstab(&["cauchy-distance", "--config", one.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_csv_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let cfg = cfg.to_str().unwrap();
    let mut csvs = Vec::new();
    for (jobs, name) in [("1", "a.csv"), ("2", "b.csv"), ("2", "c.csv")] {
        let out = dir.path().join(name);
        let o = lipstab(&["sweep", "--config", cfg, "--seed", "42", "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out).unwrap());
    }
    assert!(csvs[0].starts_with(b"sample_id,perturbation,E,d,ratio\n"));
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[1], csvs[2]);
    let other = dir.path().join("d.csv");
    lipstab(&["sweep", "--config", cfg, "--seed", "7", "--out", other.to_str().unwrap()]);
    assert_ne!(std::fs::read(other).unwrap(), csvs[0]);
}

#[test]
fn report_collates_available_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(lipstab(&["kernel-probe", "--config", cfg]).status.code(), Some(0));
    assert_eq!(lipstab(&["report", "--config", cfg]).status.code(), Some(0));
    let md = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.contains("## Biphase kernel\n\n| quantity | value |"));
    assert!(md.contains("No output found"));
}
