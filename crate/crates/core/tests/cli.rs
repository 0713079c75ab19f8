use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mumimo_core::cli::{parse_config, parse_results_csv, results_csv, COMPLEXITY_HEADER, CSV_HEADER};
use mumimo_core::run_experiment;

const SMALL: &str = "\
# desk-scale smoke run
algorithms = zf, bd, so-thp-sgmi
snr_db_list = 0:10:20
frames_per_point = 40
symbols_per_frame = 4
seed = 5
";

fn mumimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mumimo")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn csv_reloads_to_the_same_cells() {
    let cfg = parse_config(SMALL).unwrap();
    let result = run_experiment(&cfg).unwrap();
    let rows = parse_results_csv(&results_csv(&result)).unwrap();
    assert_eq!(rows.len(), result.cells.len());
    for (row, cell) in rows.iter().zip(&result.cells) {
        assert!(row.matches(cell), "{row:?} vs {cell:?}");
    }
}

#[test]
fn ber_sweep_writes_outputs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut csvs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = mumimo(&["ber-sweep", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["ber.csv", "ber_detail.csv", "ber_manifest.json"] {
            assert!(out.join(f).is_file(), "{f} missing");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("ber_manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 5);
        assert_eq!(manifest["command"], "ber-sweep");
        csvs.push((fs::read(out.join("ber.csv")).unwrap(), fs::read(out.join("ber_detail.csv")).unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].0.clone()).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    let o = mumimo(&["ber-sweep", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let manifest = fs::read_to_string(out.join("ber_manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 9"), "{manifest}");
}

#[test]
fn bad_config_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nbogus_key = 3\n");
    let o = mumimo(&["ber-sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("bogus_key"), "{err}");
    assert!(!dir.path().join("ber.csv").exists());

    let cfg = write_config(dir.path(), "rho = 1.5\n");
    let o = mumimo(&["secrecy-sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho"));

    let o = mumimo(&["ber-sweep", "--config", "/nonexistent/run.cfg"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/run.cfg"));
}

#[test]
fn unknown_figure_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = mumimo(&["reproduce-figure", "9", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn figure_two_and_complexity_write_flop_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(mumimo(&["reproduce-figure", "2", "--out", d]).status.success());
    assert!(mumimo(&["complexity", "--out", d]).status.success());
    let fig = fs::read_to_string(dir.path().join("fig2_complexity.csv")).unwrap();
    let plain = fs::read_to_string(dir.path().join("complexity.csv")).unwrap();
    assert_eq!(fig, plain);
    assert_eq!(fig.lines().next(), Some(COMPLEXITY_HEADER));
    assert!(fig.lines().any(|l| l.starts_with("bd,8,4,2,2,")));
}

#[test]
fn secrecy_figure_runs_at_small_scale() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = mumimo(&["reproduce-figure", "5", "--frames", "4", "--threads", "2", "--out", d]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for stem in ["fig5_an", "fig5_no_an"] {
        let text = fs::read_to_string(dir.path().join(format!("{stem}.csv"))).unwrap();
        let rows = parse_results_csv(&text).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.frames == 4 && r.secrecy_rate_bits >= 0.0));
    }
}
