use std::path::Path;
use std::process::{Command, Output};

fn mfermions(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfermions"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn oracle_check_passes_on_small_chains() {
    for (args, tol) in [
        (
            vec![
                "--L",
                "6",
                "--N",
                "3",
                "--gamma",
                "1",
                "--theta-over-pi",
                "1",
                "--dt",
                "0.02",
            ],
            "1e-8",
        ),
        (
            vec![
                "--L",
                "4",
                "--N",
                "2",
                "--gamma",
                "1",
                "--theta-over-pi",
                "0",
            ],
            "1e-8",
        ),
        (
            vec![
                "--L",
                "6",
                "--N",
                "3",
                "--gamma",
                "0",
                "--theta-over-pi",
                "1",
            ],
            "1e-10",
        ),
    ] {
        let mut full = vec!["oracle-check", "--steps", "50", "--tolerance", tol];
        full.extend(args);
        let out = mfermions(&full);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let report = stdout_json(&out);
        assert_eq!(report["steps"], 50);
        assert!(report["max_deviation"].as_f64().unwrap() < tol.parse::<f64>().unwrap());
        assert!(report["params"].is_object());
    }
}

#[test]
fn oracle_check_failure_exit_code() {
    let out = mfermions(&[
        "oracle-check",
        "--L",
        "4",
        "--gamma",
        "1",
        "--theta-over-pi",
        "1",
        "--steps",
        "5",
        "--tolerance",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(
        mfermions(&["run", "--L", "8", "--gamma", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mfermions(&["run", "--L", "8,10", "--gamma", "1", "--theta-over-pi", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mfermions(&["run", "--L", "8", "--gamma", "-1", "--theta-over-pi", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(mfermions(&["run", "--no-such-flag"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"L": 8, "gamma": 1, "theta_over_pi": 1, "unknown": 3}"#,
    )
    .unwrap();
    assert_eq!(
        mfermions(&["run", "-c", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn failed_fit_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "L,S_half\n8,1.0\n16,0.9\n24,1.2\n32,1.3\n").unwrap();
    let out = mfermions(&["fit", path.to_str().unwrap(), "--model", "corrected"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fit_reads_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let mut text = String::from("L,G_AB\n");
    for l in [32, 48, 64, 96] {
        text.push_str(&format!("{l},{}\n", (-(l as f64) / 20.0).exp()));
    }
    std::fs::write(&path, text).unwrap();
    let out = mfermions(&["fit", path.to_str().unwrap(), "--model", "exponential"]);
    assert_eq!(out.status.code(), Some(0));
    let fit = stdout_json(&out);
    let ell = fit["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "ell_loc")
        .unwrap();
    assert!((ell["value"].as_f64().unwrap() - 5.0).abs() < 1e-9);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        r#"{"L": 12, "gamma": 2, "theta_over_pi": 0.5, "n_traj": 2, "t_equil_factor": 0.02, "t_avg_window": 1}"#,
    )
    .unwrap();
    let out = mfermions(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "--L",
        "10",
        "--master-seed",
        "9",
        "--output-path",
        out_dir.to_str().unwrap(),
        "--theory",
        "--sequential",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result = stdout_json(&out);
    assert_eq!(result["config"]["L"], 10);
    assert_eq!(result["config"]["gamma"], 2.0);
    assert_eq!(result["n_traj"], 2);
    for f in [
        "ensemble.json",
        "observables.csv",
        "cq.csv",
        "cq_theory.csv",
        "theory.csv",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let cq = std::fs::read_to_string(out_dir.join("cq.csv")).unwrap();
    assert_eq!(cq.lines().count(), 11);

    let again = mfermions(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "--L",
        "10",
        "--master-seed",
        "9",
        "--threads",
        "2",
    ]);
    assert_eq!(stdout_json(&again)["S_half"], result["S_half"]);
}

fn rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfermions(&[
        "sweep",
        "--L",
        "6,8",
        "--gamma",
        "1",
        "--theta-over-pi",
        "0,1",
        "--t-equil-factor",
        "0.05",
        "--t-avg-window",
        "0",
        "--output-path",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(printed.len(), 5);
    assert!(printed[0].starts_with("L,gamma,theta_over_pi,J,dt,n_traj,S_half"));
    assert_eq!(rows(&dir.path().join("observables.csv")), printed);
    assert!(dir
        .path()
        .join("L8_gamma1_theta0")
        .join("ensemble.json")
        .exists());
}

#[test]
fn theory_tables() {
    let out = mfermions(&["theory", "--gamma", "4", "--theta-over-pi", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("quantity,formula,value"));
    let out = mfermions(&[
        "theory",
        "--L",
        "16",
        "--gamma",
        "4",
        "--theta-over-pi",
        "1",
        "--cq",
    ]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 17);
}
