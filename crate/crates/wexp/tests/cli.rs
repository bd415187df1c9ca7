use std::process::{Command, Output};

fn wexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wexp"))
        .args(args)
        .env("WEXP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_csv_with_manifest(text: &str, header: &str, command: &str) {
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.first().copied(), Some(header), "{text}");
    let last = lines.last().expect("non-empty output");
    let json = last.strip_prefix("# manifest: ").expect("manifest line");
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(v["tool"], "wexp");
    assert_eq!(v["command"], command);
    assert!(lines.len() > 2);
}

#[test]
fn coeff_table() {
    let o = wexp(&["coeff", "--max-q", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_csv_with_manifest(&stdout(&o), "q1,q2,q3,nu,c", "coeff");
    assert!(stdout(&o).lines().any(|l| l == "1,1,2,1,5"));
}

#[test]
fn exponent_rows() {
    let o = wexp(&["exponent", "--alpha", "1/2", "--orders", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_csv_with_manifest(&out, "quantity,value,decimal", "exponent");
    assert!(out.lines().any(|l| l.starts_with("exponent,0,")), "{out}");
}

#[test]
fn simulate_and_rates_emit_csv() {
    let o = wexp(&["simulate", "--n", "32", "--reps", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_csv_with_manifest(&stdout(&o), "rep,n,v_n,m_n,n_n,z_n,G_inf,w1", "simulate");

    let o = wexp(&[
        "rates", "--form", "chaos2", "--n-min", "16", "--n-max", "64", "--reps", "200",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_csv_with_manifest(&stdout(&o), "n,norm,se", "rates");
}

#[test]
fn output_is_reproducible() {
    let args = ["simulate", "--n", "16", "--reps", "10", "--seed", "3"];
    assert_eq!(stdout(&wexp(&args)), stdout(&wexp(&args)));
}

#[test]
fn unknown_weight_names_the_catalog() {
    let o = wexp(&[
        "expand",
        "--weight",
        "cubic",
        "--n",
        "16",
        "--reps",
        "10",
        "--approx-reps",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("cubic") && err.contains(wexp::weights::WEIGHT_CATALOG),
        "{err}"
    );
}

#[test]
fn compare_needs_three_grid_points() {
    let o = wexp(&[
        "compare",
        "--n-grid",
        "64",
        "--reps",
        "10",
        "--approx-reps",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unknown_filter_and_config_key_are_usage_errors() {
    let o = wexp(&["robustvol", "--phi", "median", "--reps", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(wexp::volatility::FILTER_CATALOG));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 32\nbogus_key = 1\n").unwrap();
    let o = wexp(&["--config", cfg.to_str().unwrap(), "simulate", "--reps", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn config_file_feeds_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("sim.csv");
    std::fs::write(&cfg, "# small run\nn = 24\nreps = 5\n").unwrap();
    let o = wexp(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "simulate",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let manifest = text.lines().last().unwrap();
    assert!(
        manifest.contains("\"n\":\"24\"") || manifest.contains("\"n\":24"),
        "{manifest}"
    );
    assert!(!manifest.contains("sim.csv"));
}
