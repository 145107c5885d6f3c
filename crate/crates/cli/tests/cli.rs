use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
master_seed = 3
n_drops = 2
schemes = ["full_evd", "lazy_evd"]

[sweep]
variable = "ue_speed_kmh"
values = [30.0, 120.0]
"#;

fn egvp(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_egvp"));
    cmd.args(args).env_remove("EGVP_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("EGVP_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o =
        egvp(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv", "--format", "json"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let table = egvp::results::ResultTable::from_csv(&csv).unwrap();
    // 2 values × 2 drops × 2 schemes × 7 buckets.
    assert_eq!(table.rows.len(), 56);
    let json = std::fs::read_to_string(out.join("results.json")).unwrap();
    assert_eq!(egvp::results::ResultTable::from_json(&json).unwrap().rows.len(), 56);
}

#[test]
fn env_overrides_config_dir_and_seed_changes_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(egvp(&["run", "--config", &cfg], Some(&a)).status.success());
    assert!(egvp(&["run", "--config", &cfg, "--seed", "4"], Some(&b)).status.success());
    let ta = egvp::results::ResultTable::from_csv(&std::fs::read_to_string(a.join("results.csv")).unwrap()).unwrap();
    let tb = egvp::results::ResultTable::from_csv(&std::fs::read_to_string(b.join("results.csv")).unwrap()).unwrap();
    assert_ne!(ta.config_hash, tb.config_hash);
}

#[test]
fn sweep_aggregates_existing_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(egvp(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], None).status.success());
    let input = out.join("results.csv");
    let o = egvp(
        &[
            "sweep",
            "--config",
            &cfg,
            "--figure",
            "speed",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("sweep_variable,sweep_value,scheme,n,"), "{}", lines[0]);
    assert_eq!(lines.len(), 1 + 4);
    assert_eq!(std::fs::read_to_string(out.join("speed.csv")).unwrap(), stdout);

    let o = egvp(&["sweep", "--config", &cfg, "--figure", "noise", "--input", input.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n_drops = 1\nschemes = []\n");
    let o = egvp(&["run", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schemes"));

    let cfg = write_config(tmp.path(), "schemes = [\"full_evd\"]\n[scenario]\nn_pathz = 3\n");
    let o = egvp(&["run", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario"));

    let missing = tmp.path().join("absent.toml");
    assert_eq!(egvp(&["run", "--config", missing.to_str().unwrap()], None).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = egvp(&["run", "--config", &cfg, "--out", blocker.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}
