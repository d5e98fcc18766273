use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uniqtest"));
    c.env_remove("UNIQTEST_THREADS");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"generated_unix\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn turtles_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let turtles = data("turtles.csv");
    let mut texts = Vec::new();
    let out_path = dir.path().join("report.json");
    for _ in 0..2 {
        let out = run(&[
            "test",
            turtles.to_str().unwrap(),
            "--kind",
            "circle",
            "--unit",
            "deg",
            "-B",
            "500",
            "--seed",
            "3",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let line = stdout(&out);
        assert!(line.starts_with("p_d=") && line.contains(" p_ell=") && line.contains(" reject@0.05="), "{line}");
        texts.push(std::fs::read_to_string(&out_path).unwrap());
    }
    let v: serde_json::Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(v["invocation"]["seed"], 3);
    assert_eq!(v["invocation"]["B"], 500);
    assert_eq!(v["result"]["n"], 76);
    assert!(v["invocation"]["args"].as_array().unwrap().iter().any(|a| a == "--unit"));
    assert_eq!(without_timestamp(&texts[0]), without_timestamp(&texts[1]));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["test", "x.csv", "--kind", "circle", "--bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn euclidean_data_needs_component_count() {
    let out = run(&["test", data("iris.csv").to_str().unwrap(), "--kind", "euclidean", "-B", "100"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--gmm-k"));
}

#[test]
fn schema_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
    let out = run(&["test", path.to_str().unwrap(), "--kind", "curve", "-B", "100"]);
    assert_eq!(code(&out), 2);
    let missing = run(&["test", "/nonexistent/file.csv", "--kind", "circle"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn curve_flag_on_other_kinds_is_rejected() {
    let out = run(&["test", data("turtles.csv").to_str().unwrap(), "--kind", "circle", "--constrain"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn single_trial_size_study() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "size",
        "--n",
        "30",
        "--trials",
        "1",
        "-B",
        "200",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("size_p1_n30.csv")).unwrap();
    assert!(text.starts_with("# invocation: "));
    assert!(text.contains("# seed: 1\n# B: 200\n"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "rank,uniform,p_d");
    assert_eq!(rows.len(), 2);
    let p: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn size_study_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec![
            "simulate".to_string(),
            "size".into(),
            "--dim".into(),
            "2".into(),
            "--n".into(),
            "20,25".into(),
            "--trials".into(),
            "3".into(),
            "-B".into(),
            "100".into(),
            "--out".into(),
            d.to_str().unwrap().to_string(),
        ]
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = bin().args(args(d)).output().unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["size_p2_n20.csv", "size_p2_n25.csv"] {
        let strip = |p: PathBuf| -> String {
            std::fs::read_to_string(p)
                .unwrap()
                .lines()
                .filter(|l| !l.starts_with("# invocation"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(a.join(file)), strip(b.join(file)));
    }
}

#[test]
fn invalid_power_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "power", "--n-grid", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn power_table_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "power",
        "--a-grid",
        "-0.1,0.1",
        "--n-grid",
        "40",
        "--trials",
        "2",
        "-B",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("power.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["a,n,trials,rate,se", rows[1], rows[2]]);
    assert!(rows[1].starts_with("-0.1,40,2,"));
}

#[test]
fn quantile_sum_verification_passes() {
    let out = run(&["verify", "quantile-sum", "--m", "2", "--mc-reps", "200000", "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["pass"], true);
    assert_eq!(v["invocation"]["seed"], 4);
}

#[test]
fn non_spd_covariance_is_rejected() {
    let out = run(&["verify", "quantile-sum", "--m", "2", "--sigma", "1,2,2,1", "--mc-reps", "1000"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn calibration_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cal.txt");
    let args = ["calibrate", "--n", "200", "--mc-reps", "1000", "--cache", cache.to_str().unwrap()];
    let first = run(&args);
    assert_eq!(code(&first), 0);
    let stored = std::fs::read_to_string(&cache).unwrap();
    assert_eq!(stored.lines().filter(|l| !l.starts_with('#')).count(), 1);
    let second = run(&args);
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(std::fs::read_to_string(&cache).unwrap(), stored);
}

#[test]
fn generated_platelets_read_back_as_curve_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("platelets.csv");
    let out = run(&["generate", "platelets", "--t-max", "100", "--seed", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let test = run(&["test", path.to_str().unwrap(), "--kind", "curve", "-B", "100", "--seed", "1"]);
    assert_eq!(code(&test), 0, "{}", String::from_utf8_lossy(&test.stderr));
    assert!(stdout(&test).contains("p_ell=NA"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = bin()
        .env("UNIQTEST_THREADS", "0")
        .args(["calibrate", "--n", "50"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
