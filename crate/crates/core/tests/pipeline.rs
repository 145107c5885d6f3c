use egvp::config::{parse_config, OutputFormat, RunConfig, Scheme, SweepVariable};
use egvp::experiment::build_drop;
use egvp::results::{emit_results, run_experiment, ResultRow, ResultTable};
use std::path::Path;

const CONFIG: &str = r#"
master_seed = 11
n_drops = 2
schemes = ["egvp_wcm", "egvp_cgm", "wiener"]

[scheme]
t_evd = 2

[sweep]
variable = "ue_speed_kmh"
values = [30.0, 250.0]
"#;

fn key(r: &ResultRow) -> String {
    format!("{}|{}|{}|{}|{:?}|{:?}|{:?}", r.sweep_value, r.scheme, r.drop, r.subframe_bucket, r.se, r.pe, r.flags)
}

#[test]
fn emitted_files_read_back_to_the_same_rows() {
    let config = parse_config(CONFIG).unwrap();
    let table = run_experiment(&config).unwrap();
    assert_eq!(table.rows.len(), 2 * 2 * 3 * 7);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_results(&table, dir.path(), &[OutputFormat::Csv, OutputFormat::Json]).unwrap();
    assert_eq!(written.len(), 2);

    let mut expected: Vec<String> = table.rows.iter().map(key).collect();
    expected.sort();
    for (path, parse) in [
        ("results.csv", ResultTable::from_csv as fn(&str) -> egvp::Result<ResultTable>),
        ("results.json", ResultTable::from_json),
    ] {
        let back = parse(&std::fs::read_to_string(dir.path().join(path)).unwrap()).unwrap();
        assert_eq!(back.config_hash, config.hash());
        let mut got: Vec<String> = back.rows.iter().map(key).collect();
        got.sort();
        assert_eq!(got, expected, "{path}");
    }
}

#[test]
fn emit_into_a_file_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("taken");
    std::fs::write(&blocker, "").unwrap();
    let table = ResultTable::new("0".repeat(16));
    assert!(emit_results(&table, &blocker, &[OutputFormat::Csv]).is_err());
}

#[test]
fn runs_are_byte_identical() {
    let config = parse_config(CONFIG).unwrap();
    let a = run_experiment(&config).unwrap().to_csv().unwrap();
    let b = run_experiment(&config).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
}

#[test]
fn paired_sweep_reuses_geometry() {
    let config = parse_config(CONFIG).unwrap();
    let slow = config.at_sweep_value(SweepVariable::UeSpeedKmh, 30.0).unwrap();
    let fast = config.at_sweep_value(SweepVariable::UeSpeedKmh, 250.0).unwrap();
    let (a, b) = (build_drop(&slow, 0, 1).unwrap(), build_drop(&fast, 1, 1).unwrap());
    for (ua, ub) in a.ues.iter().zip(&b.ues) {
        for (pa, pb) in ua.paths.antennas.iter().flatten().zip(ub.paths.antennas.iter().flatten()) {
            assert_eq!(
                (pa.amplitude, pa.delay, pa.zenith, pa.azimuth),
                (pb.amplitude, pb.delay, pb.zenith, pb.azimuth)
            );
            assert_eq!(pa.doppler_direction, pb.doppler_direction);
        }
        assert_ne!(ua.paths.ue_speed, ub.paths.ue_speed);
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for dir in [root.clone(), root.join("acceptance")] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let text = std::fs::read_to_string(&path).unwrap();
                let config: RunConfig = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                assert!(!config.schemes.is_empty());
                seen += 1;
            }
        }
    }
    assert!(seen >= 8, "found {seen} configs");
}

#[test]
fn acceptance_profiles_are_on_grid_twins() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["speed", "cycle", "noise"] {
        let read = |p: std::path::PathBuf| parse_config(&std::fs::read_to_string(p).unwrap()).unwrap();
        let mut off = read(root.join(format!("{name}.toml")));
        let on = read(root.join("acceptance").join(format!("{name}.toml")));
        assert!(on.scenario.on_grid && !off.scenario.on_grid);
        off.scenario.on_grid = true;
        off.output = on.output.clone();
        assert_eq!(off, on, "{name}");
    }
    let _ = Scheme::ALL;
}
