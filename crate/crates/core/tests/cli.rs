use std::process::{Command, Output};

use thermal_filtering::io::{Cell, Format, Table};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermal-filter"))
        .args(args)
        .env("THERMAL_FILTER_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn table(out: &Output, format: Format) -> Table {
    Table::parse(&String::from_utf8_lossy(&out.stdout), format).expect("parsable table")
}

fn check_row(t: &Table, name: &str) -> bool {
    let names = t.column("check").unwrap();
    let passed = t.column("passed").unwrap();
    let k = names
        .iter()
        .position(|c| **c == Cell::Text(name.into()))
        .unwrap();
    *passed[k] == Cell::Bool(true)
}

#[test]
fn sweep_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = cli(&[
        "sweep",
        "--n-grid",
        "1",
        "--gamma-grid",
        "0,1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let t = Table::read(&path, Format::Csv).unwrap();
    assert_eq!(t.kind, "sweep");
    let v = t.reals("Vx_ss_integrated").unwrap();
    assert!((v[0] - 3.0).abs() < 1e-5 && (v[1] - 1.0 / 3.0).abs() < 1e-5);
    assert_eq!(t.reals("bound").unwrap(), vec![1.0 / 3.0; 2]);
}

#[test]
fn vmin_writes_infinity_as_text() {
    let out = cli(&["vmin", "--gamma-grid", "0.5,1", "--format", "json"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"N_opt\": \"inf\""), "{text}");
    let t = table(&out, Format::Json);
    assert_eq!(t.reals("N_opt").unwrap(), vec![0.0, f64::INFINITY]);
}

#[test]
fn bad_input_exits_with_two() {
    assert_eq!(cli(&["sweep", "--gamma-grid", ""]).status.code(), Some(2));
    assert_eq!(
        cli(&["sweep", "--gamma-grid", "0.5,0.2"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cli(&["trajectory", "--gamma", "1.5"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cli(&["threshold", "--n-grid", "-1,2"]).status.code(),
        Some(2)
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"n_grid": [2.0, 3.0], "gamma_grid": "0:1:0.5"}"#).unwrap();
    let out = cli(&["sweep", "--config", path.to_str().unwrap(), "--n-grid", "1"]);
    assert!(out.status.success());
    let t = table(&out, Format::Csv);
    assert_eq!(t.reals("N").unwrap(), vec![1.0; 3]);
    assert_eq!(t.reals("gamma").unwrap(), vec![0.0, 0.5, 1.0]);

    std::fs::write(&path, r#"{"gamma_grd": "0:1:0.5"}"#).unwrap();
    let out = cli(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flipped_noise_sign_breaks_closure() {
    let args = [
        "oracle-check",
        "--n-traj",
        "4",
        "--t-final",
        "0.5",
        "--dim",
        "20",
    ];
    let good = cli(&args);
    assert!(check_row(&table(&good, Format::Csv), "gaussian_closure"));
    assert!(check_row(&table(&good, Format::Csv), "sme_equivalence"));

    let mut flipped = args.to_vec();
    flipped.push("--flip-a2-sign");
    let bad = cli(&flipped);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!check_row(&table(&bad, Format::Csv), "gaussian_closure"));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL gaussian_closure"));
}

#[test]
fn small_truncation_fails_the_gauge() {
    let out = cli(&[
        "oracle-check",
        "--n-traj",
        "2",
        "--t-final",
        "0.2",
        "--dim",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!check_row(&table(&out, Format::Csv), "truncation_gauge"));
}

#[test]
fn uncorrelated_bath_leaves_records_independent() {
    let out = cli(&["trajectory", "--n", "1", "--gamma", "0", "--seed", "11"]);
    assert!(out.status.success());
    let t = table(&out, Format::Csv);
    let a = t.reals("qA_scaled").unwrap();
    let b = t.reals("qB_scaled").unwrap();
    let n = a.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let corr = cov / (var(&a, ma) * var(&b, mb)).sqrt();
    assert!(corr.abs() < 5.0 / n.sqrt(), "corr = {corr}");
}

#[test]
fn vacuum_bath_keeps_vacuum_variances() {
    let out = cli(&["trajectory", "--n", "0", "--gamma", "0.5", "--t-final", "2"]);
    assert!(out.status.success());
    let t = table(&out, Format::Csv);
    for col in ["var_x", "var_p"] {
        assert!(t
            .reals(col)
            .unwrap()
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-12));
    }
    assert!(t.reals("cov_xp").unwrap().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn csv_and_json_carry_the_same_table() {
    let args = [
        "ensemble",
        "--n-traj",
        "20",
        "--t-final",
        "1",
        "--seed",
        "5",
    ];
    let csv = table(&cli(&args), Format::Csv);
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let json = table(&cli(&json_args), Format::Json);
    assert_eq!(csv, json);
    assert_eq!(csv.kind, "ensemble");
}
