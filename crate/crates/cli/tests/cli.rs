use std::path::Path;
use std::process::{Command, Output};

const DISK: &str = r#"
mode = "disk-theorem1"
depth = 12
[measure]
kind = "stress"
delta = 1.6e5
[resolution]
angles = 16
square = 24
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diskapprox")).args(args).env("DISKAPPROX_THREADS", "1").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(dir: &Path) -> (String, String) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, DISK).unwrap();
    (cfg.display().to_string(), dir.join("out").display().to_string())
}

#[test]
fn approximate_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path());
    let o = bin(&["approximate", "--config", &cfg, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scheme.csv", "leaves.csv", "atoms.csv", "field.csv", "heatmap.csv", "heatmap.pgm", "radial_profile.csv", "summary.json"] {
        assert!(Path::new(&out).join(f).exists(), "{f}");
    }
    let o = bin(&["verify", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS criterion 1"));
}

#[test]
fn corrupted_atoms_exit_one_naming_the_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path());
    assert!(bin(&["approximate", "--config", &cfg, "--out", &out]).status.success());
    let path = Path::new(&out).join("atoms.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.contains(",annular,")).unwrap();
    let mut fields: Vec<String> = lines[row].split(',').map(String::from).collect();
    for f in &mut fields[..2] {
        *f = (f.parse::<f64>().unwrap() * 0.97).to_string();
    }
    lines[row] = fields.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = bin(&["verify", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL criterion 1"), "{}", stdout(&o));
}

#[test]
fn missing_input_is_a_usage_error() {
    let o = bin(&["approximate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
    let o = bin(&["approximate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "mode = \"disk-theorem1\"\nq = \"x\"\n[measure]\nkind = \"atoms\"\natoms = []\n").unwrap();
    let o = bin(&["approximate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn scheme_prints_csv_and_writes_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = bin(&["scheme", "--q", "0.99", "--depth", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("n,r_lo,r_hi,sectors"));
    assert_eq!(std::fs::read_to_string(out.join("scheme.csv")).unwrap(), text);
    assert_eq!(bin(&["scheme", "--q", "0.5"]).status.code(), Some(2));
}

#[test]
fn report_prints_summary_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path());
    assert_eq!(bin(&["report", "--config", &cfg, "--out", &out]).status.code(), Some(2));
    assert!(bin(&["approximate", "--config", &cfg, "--out", &out, "--seed", "7"]).status.success());
    let o = bin(&["report", "--config", &cfg, "--out", &out]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("\"seed\": 7") && text.contains("round_trip_max_difference = 0e0"), "{text}");
}

#[test]
fn suite_mode_runs_selected_criteria() {
    let o = bin(&["verify", "--criteria", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("seed 20240601") && text.contains("PASS criterion 9"));
    assert!(!text.contains("criterion 1 "));
}
