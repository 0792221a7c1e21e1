use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn rdqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdqc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = rdqc(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn plan_counts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bench = problem("benchmark.toml");
    let bench = bench.to_str().unwrap();
    let first = ok(&["plan", "--problem", bench, "--out", out]);
    assert!(first.starts_with("sequences: 308\n"), "{first}");
    let plan = read(dir.path(), "plan.csv");
    assert!(plan.starts_with("# config_hash: "));
    ok(&["plan", "--problem", bench, "--out", out]);
    assert_eq!(plan, read(dir.path(), "plan.csv"));

    let reduced = problem("reduced.toml");
    let small = ok(&["plan", "--problem", reduced.to_str().unwrap(), "--out", out]);
    assert!(small.starts_with("sequences: 2\n"), "{small}");
}

#[test]
fn exact_run_selects_the_expected_phase() {
    let dir = tempfile::tempdir().unwrap();
    let bench = problem("benchmark.toml");
    let text = ok(&["run", "--problem", bench.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(text.contains("theta_opt: 2.79\n"), "{text}");
    for f in ["derivatives.csv", "losses.csv", "extremum.csv", "qel_candidates.csv", "evaluations.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let again = ok(&["run", "--problem", bench.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(again.contains("(cached)"), "{again}");
}

#[test]
fn sampled_run_is_byte_identical_across_dirs_and_jobs() {
    let bench = problem("benchmark.toml");
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let args = ["run", "--problem", bench.to_str().unwrap(), "--mode", "sampled", "--seed", "11", "--jobs", jobs, "--out"];
        let mut full: Vec<&str> = args.to_vec();
        full.push(dir.path().to_str().unwrap());
        ok(&full);
        outputs.push((read(dir.path(), "evaluations.csv"), read(dir.path(), "losses.csv"), read(dir.path(), "summary.json")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn calibrate_rejects_empty_data_and_recovers_injection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bench = problem("benchmark.toml");
    let bench = bench.to_str().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x,theta,value,std_error\n").unwrap();
    let o = rdqc(&["calibrate", "--problem", bench, "--data", empty.to_str().unwrap(), "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[calibrate]"));

    let o = rdqc(&["calibrate", "--problem", bench, "--inject", "-1.0", "--out", out]);
    assert!(!o.status.success(), "injection needs sampled mode");

    ok(&["calibrate", "--problem", bench, "--mode", "sampled", "--shots", "10000", "--inject", "-1.0", "--out", out]);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "calibration.json")).unwrap();
    let text = report.to_string();
    let offset = find_number(&report, "delta_offset").unwrap_or_else(|| panic!("{text}"));
    assert!((offset + 1.0).abs() < 2.0 * std::f64::consts::PI * 0.005, "{offset}");

    // The synthetic data written alongside can be fed back in.
    let data = dir.path().join("calibration_data.csv");
    ok(&["calibrate", "--problem", bench, "--data", data.to_str().unwrap(), "--out", out]);
}

fn find_number(v: &serde_json::Value, key: &str) -> Option<f64> {
    match v {
        serde_json::Value::Object(m) => m.get(key).and_then(|x| x.as_f64()).or_else(|| m.values().find_map(|x| find_number(x, key))),
        serde_json::Value::Array(a) => a.iter().find_map(|x| find_number(x, key)),
        _ => None,
    }
}

#[test]
fn derive_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bench = problem("benchmark.toml");
    let bench = bench.to_str().unwrap();
    let json: serde_json::Value = serde_json::from_str(&ok(&["derive", "--problem", bench, "--x", "5.0", "--theta", "2.79", "--out", out])).unwrap();
    assert!(json.is_object());

    let o = rdqc(&["report", "--problem", bench, "--out", out]);
    assert!(!o.status.success(), "no summary and no --theta");
    ok(&["report", "--problem", bench, "--theta", "2.79", "--points", "41", "--out", out]);
    assert!(read(dir.path(), "baseline.csv").lines().count() > 40);
    assert!(read(dir.path(), "solution.csv").starts_with("# config_hash: "));
}

#[test]
fn missing_problem_file_is_a_load_error() {
    let o = rdqc(&["plan", "--problem", "/nonexistent.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[load]"));
}
