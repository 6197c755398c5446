use std::process::{Command, Output};

use serde_json::Value;

const COARSE: [&str; 6] = [
    "--set",
    "quadrature.rel_tol=1e-4",
    "--set",
    "quadrature.distance_panels=32",
    "--set",
    "quadrature.ase_step=1.0",
];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-stogeo"))
        .args(args)
        .env_remove("RIS_STOGEO_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

/// CSV rows without the wall-time column.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let wall = r.headers().unwrap().iter().position(|h| h == "wall_time_s").unwrap();
    r.records()
        .map(|rec| {
            rec.unwrap().iter().enumerate().filter(|(i, _)| *i != wall).map(|(_, s)| s.to_string()).collect()
        })
        .collect()
}

#[test]
fn analytic_writes_json_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = run(&["analytic", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let cov = v["coverage"].as_f64().unwrap();
    assert!((cov - 0.8656).abs() < 1e-3, "{cov}");
    let a = &v["association"];
    let s = a["p_direct"].as_f64().unwrap() + a["p_reflected"].as_f64().unwrap() + a["p_outage"].as_f64().unwrap();
    assert!((s - 1.0).abs() < 1e-9);
}

#[test]
fn config_file_units_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"units": {"density": "per_m2"}, "lambda_b": 1e-5, "mu": 0.0}"#).unwrap();
    let p = path.to_str().unwrap();
    let v = json(&run(&["analytic", "--config", p]));
    assert_eq!(v["association"]["p_reflected"].as_f64().unwrap(), 0.0);
    let v = json(&run(&["analytic", "--config", p, "--set", "mu=0.6"]));
    assert!(v["association"]["p_reflected"].as_f64().unwrap() > 0.3);
}

#[test]
fn invalid_configurations_exit_with_code_2() {
    assert_eq!(run(&["analytic", "--set", "gamma=1.5"]).status.code(), Some(2));
    assert_eq!(run(&["validate", "--trials", "100", "--set", "gamma=1.5"]).status.code(), Some(2));
    assert_eq!(run(&["analytic", "--set", "unknown_field=1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--variable", "mu", "--values", "0.5"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["analytic", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn monte_carlo_is_reproducible_across_thread_counts() {
    let a = run(&["mc", "--trials", "3000", "--seed", "42", "--threads", "1"]);
    let b = run(&["mc", "--trials", "3000", "--seed", "42", "--threads", "8"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["mc", "--trials", "3000", "--seed", "43", "--threads", "1"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn beta_sweep_is_monotone_and_deterministic() {
    let mut args = vec!["sweep", "--variable", "beta", "--range", "0:1.4:4", "--engine", "both", "--mc-trials", "2000"];
    args.extend(COARSE);
    let a = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8(a.stdout).unwrap();
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 8);
    let analytic: Vec<f64> = rows.iter().filter(|r| r[2] == "analytic").map(|r| r[3].parse().unwrap()).collect();
    assert!(analytic.windows(2).all(|w| w[1] >= w[0]), "{analytic:?}");
    assert!(rows.iter().filter(|r| r[2] == "montecarlo").all(|r| !r[4].is_empty()));

    let b = run(&args);
    assert_eq!(rows, csv_rows(&String::from_utf8(b.stdout).unwrap()));

    // a different seed changes only the Monte Carlo rows
    let mut other = args.clone();
    other.extend(["--seed", "99"]);
    let c = csv_rows(&String::from_utf8(run(&other).stdout).unwrap());
    for (x, y) in rows.iter().zip(&c) {
        if x[2] == "analytic" {
            assert_eq!(x, y);
        }
    }
    assert!(rows.iter().zip(&c).any(|(x, y)| x[2] == "montecarlo" && x != y));
}

#[test]
fn sweep_records_point_failures() {
    let out = run(&["sweep", "--variable", "mu", "--values", "0.5,1.5", "--outputs", "assoc"]);
    assert!(out.status.success());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    assert!(rows[0].last().unwrap().is_empty());
    assert!(rows[1].last().unwrap().contains("mu"));
}

#[test]
fn optimize_beta_reports_interior_optimum() {
    let v = json(&run(&["optimize", "--target", "beta"]));
    assert_eq!(v["target"], "beta");
    let b = v["value"].as_f64().unwrap();
    let bmax = v["diagnostics"]["beta_max"].as_f64().unwrap();
    assert!(b > 0.0 && b < bmax);
    assert_eq!(v["method"], "root");
}

#[test]
fn ee_optimal_mu_decreases_with_bs_density() {
    let mu_star = |lb: &str| {
        let set = format!("lambda_b={lb}");
        let mut args = vec!["optimize", "--target", "mu", "--metric", "ee", "--resolution", "11", "--set", &set];
        args.extend(COARSE);
        json(&run(&args))["value"].as_f64().unwrap()
    };
    let (sparse, dense) = (mu_star("10"), mu_star("30"));
    assert!(dense <= sparse, "{dense} > {sparse}");
}
