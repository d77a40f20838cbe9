use std::path::PathBuf;
use std::process::{Command, Output};

use fblcrd::math::binary_entropy;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fblcrd"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn rd_curve_matches_binary_closed_form() {
    let model = data("binary.json");
    let o = run(&["rd-curve", "--model", model.to_str().unwrap(), "--D", "0.02,0.1,0.19"]);
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header, ["D", "R", "slope", "V", "V_within", "V_between"]);
    for row in rows {
        let expect = binary_entropy(0.2) - binary_entropy(row[0]);
        assert!((row[1] - expect).abs() < 1e-8, "{row:?}");
        assert!((row[4] + row[5] - row[3]).abs() < 1e-10);
    }
}

#[test]
fn json_echoes_config_and_provenance() {
    let model = data("binary.json");
    let o = run(&["fbl", "--model", model.to_str().unwrap(), "--D", "0.1", "--n", "300", "--trials", "200", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["tool"], "fblcrd");
    assert_eq!(doc["config"]["command"], "fbl");
    assert_eq!(doc["config"]["trials"], 200);
    assert_eq!(doc["config"]["n"][0], 300);
    assert!(doc.get("wall_clock_s").is_none());
    let columns = doc["columns"].as_array().unwrap();
    for c in columns {
        assert!(doc["provenance"][c.as_str().unwrap()].is_string(), "{c}");
    }
    let row = doc["rows"][0].as_array().unwrap();
    assert_eq!(row.len(), columns.len());
}

#[test]
fn timing_is_opt_in() {
    let args = ["gaussian", "--D", "0.25", "--n", "50", "--trials", "200"];
    assert!(!stdout(&run(&args)).contains("wall_clock_s"));
    let mut timed = args.to_vec();
    timed.push("--timing");
    assert!(stdout(&run(&timed)).contains("# wall_clock_s:"));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.json");
    let model = data("binary.json");
    let o = run(&[
        "rd-curve",
        "--model",
        model.to_str().unwrap(),
        "--D",
        "0.1",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn markov_iid_kernel_has_no_memory_correction() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("iid.json");
    std::fs::write(&path, r#"{"x_size": 2, "s_size": 1, "xi": [[0.7, 0.3], [0.7, 0.3]], "d": [[0, 1], [1, 0]]}"#).unwrap();
    let o = run(&["markov", "--model", path.to_str().unwrap(), "--D", "0.1", "--n", "100,1000"]);
    let (header, rows) = csv_rows(&stdout(&o));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for row in rows {
        assert!((row[col("v_inf_ladder")] - row[col("lag0")]).abs() < 1e-12);
        assert!((row[col("v_inf_spectral")] - row[col("lag0")]).abs() < 1e-9);
        assert!((row[col("second_order_rate")] - row[col("second_order_rate_iid")]).abs() < 1e-9);
    }
}

fn exit_code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };
    let good = data("binary.json");
    let good = good.to_str().unwrap();
    let malformed = write("bad.json", "{ not json");
    let unnormalized = write(
        "mass.json",
        r#"{"x_size": 2, "s_size": 1, "y_size": 2, "pmf": [[0.5], [0.6]], "d": [[0, 1], [1, 0]]}"#,
    );
    let rows = write("rows.json", r#"{"x_size": 2, "s_size": 1, "xi": [[0.9, 0.2], [0.2, 0.8]], "d": [[0, 1], [1, 0]]}"#);

    assert_eq!(exit_code(&["rd-curve", "--model", good, "--D", "0.1"]), 0);
    assert_eq!(exit_code(&["no-such-command"]), 2);
    assert_eq!(exit_code(&["rd-curve", "--model", &malformed, "--D", "0.1"]), 2);
    assert_eq!(exit_code(&["rd-curve", "--model", "/nonexistent/model.json", "--D", "0.1"]), 2);
    assert_eq!(exit_code(&["rd-curve", "--model", &unnormalized, "--D", "0.1"]), 3);
    assert_eq!(exit_code(&["fbl", "--model", good, "--D", "0.1", "--n", "100", "--eps", "1.5"]), 2);
    assert_eq!(exit_code(&["fbl", "--model", good, "--D", "0.1", "--n", "100", "--trials", "0"]), 2);
    assert_eq!(exit_code(&["rd-curve", "--model", good, "--D=-0.1"]), 3);
    assert_eq!(exit_code(&["markov", "--model", &rows, "--D", "0.1", "--n", "100"]), 3);
}
