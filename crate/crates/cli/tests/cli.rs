use std::process::{Command, Output};

use pinbridge_cli::error::{EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
use pinbridge_cli::output::{parse_paths_csv, strip_preamble};
use serde_json::Value;

fn pinbridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinbridge"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> u8 {
    out.status.code().unwrap() as u8
}

fn json(out: &Output) -> Value {
    assert_eq!(
        code(out),
        EXIT_OK,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn zero_paths_is_a_config_error_naming_n() {
    let out = pinbridge(&["simulate", "--family", "brownian_bridge", "--paths", "0"]);
    assert_eq!(code(&out), EXIT_CONFIG);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`N`"), "{err}");
}

#[test]
fn identify_linear_density_is_a_bridge_family() {
    let v = json(&pinbridge(&[
        "identify",
        "--family",
        r#"{"name": "f_wiener", "params": {"slope": 1}}"#,
    ]));
    assert_eq!(v["identification"]["verdict"], "is_bridge_family");
}

#[test]
fn remark24_satisfies_a2_but_not_a2_prime() {
    let v = json(&pinbridge(&["check-pinning", "--family", "remark24"]));
    assert_eq!(v["pinning"]["a2"], "finite");
    assert_eq!(v["pinning"]["a2_prime"], "fails");
}

#[test]
fn bad_family_parameter_names_field() {
    let out = pinbridge(&[
        "check-pinning",
        "--family",
        r#"{"name": "alpha_pinned", "params": {"alpha": -1}}"#,
    ]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("family.params.alpha"));
}

#[test]
fn unstable_uniform_euler_is_a_numerical_failure() {
    let spec = r#"{"name": "alpha_pinned", "params": {"alpha": 2}}"#;
    let args = [
        "simulate",
        "--family",
        spec,
        "--grid-mode",
        "uniform",
        "--n",
        "100",
        "--method",
        "euler",
    ];
    assert_eq!(code(&pinbridge(&args)), EXIT_NUMERICAL);
}

#[test]
fn negative_endpoints_parse() {
    let v = json(&pinbridge(&[
        "simulate",
        "--family",
        "brownian_bridge",
        "--x",
        "-1.5",
        "--y",
        "-2",
        "--n",
        "8",
    ]));
    assert_eq!(v["report"]["x"], -1.5);
    assert_eq!(v["report"]["y"], -2.0);
}

#[test]
fn simulate_writes_reproducible_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let spec = r#"{"name": "alpha_pinned", "params": {"alpha": 2}}"#;
        let args = [
            "simulate",
            "--family",
            spec,
            "--x",
            "1",
            "--paths",
            "3000",
            "--csv-paths",
            "5",
            "--seed",
            "9",
        ];
        let out = Command::new(env!("CARGO_BIN_EXE_pinbridge"))
            .args(args)
            .arg("--out")
            .arg(d.path())
            .output()
            .unwrap();
        assert_eq!(
            code(&out),
            EXIT_OK,
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let read =
        |d: &tempfile::TempDir, name: &str| std::fs::read_to_string(d.path().join(name)).unwrap();
    assert_eq!(read(&dirs[0], "report.json"), read(&dirs[1], "report.json"));
    let (a, b) = (read(&dirs[0], "paths.csv"), read(&dirs[1], "paths.csv"));
    assert_eq!(strip_preamble(&a), strip_preamble(&b));
    assert!(a.lines().any(|l| l.starts_with("# generated_unix: ")));
    let rows = parse_paths_csv(&a).unwrap();
    assert_eq!(rows.len(), 5 * 513);
    let report: Value = serde_json::from_str(&read(&dirs[0], "report.json")).unwrap();
    assert_eq!(report["report"]["n_paths"], 3000);
    assert_eq!(rows[0], (0, 0.0, 1.0));
}

#[test]
fn list_families_json() {
    let v = json(&pinbridge(&["list-families", "--json"]));
    assert!(v
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["name"] == "remark24"));
}

#[test]
fn reproduce_subset_is_byte_identical() {
    let a = pinbridge(&["reproduce", "--only", "1,7,8"]);
    let b = pinbridge(&["reproduce", "--only", "1,7,8"]);
    assert_eq!(code(&a), EXIT_OK);
    let (a, b) = (
        String::from_utf8(a.stdout).unwrap(),
        String::from_utf8(b.stdout).unwrap(),
    );
    assert_eq!(strip_preamble(&a), strip_preamble(&b));
    assert!(strip_preamble(&a).ends_with("passed 3/3\n"));
}

#[test]
fn reproduce_rejects_unknown_criterion() {
    assert_eq!(
        code(&pinbridge(&["reproduce", "--only", "12"])),
        EXIT_CONFIG
    );
}
