//! End-to-end tests of the `dzpbc` binary and the scenario file schema.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dzpbc_cli::document::ScenarioDocument;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dzpbc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const INLINE_SCALAR: &str = r#"
label = "critical"

[system]
mass = [[1.0]]
damping = [[0.0]]

[gains]
K_P = [2.0]
K_I = [0.5]
K_Z = [0.5]
mu = 1.0
q_star = [0.0]
"#;

#[test]
fn simulate_builtin_case_i() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "case_i",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("case_i.csv")).unwrap();
    assert!(csv.starts_with("t,q1,q2,p1,p2,v1,v2,tau1,tau2,Hd\n"));
    let metrics = fs::read_to_string(dir.path().join("case_i.metrics.txt")).unwrap();
    assert!(metrics.contains("settled = true"));
    assert!(metrics.contains("wiring = physical"));
    assert!(metrics.contains("normalization = percent of |q_star_i|"));
}

#[test]
fn simulate_rejects_non_pd_stiffness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    write(
        &path,
        r#"
label = "bad"

[system]
builtin = "planar2dof"

[gains]
K_P = [1.5, 1.0]
K_I = [[1.0, 2.0], [2.0, 1.0]]
K_Z = [0.13, 0.35]
mu = 10.0
q_star = [0.6, 0.8]
"#,
    );
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("gains.K_I"), "diagnostic was: {err}");
}

#[test]
fn simulate_rejects_unknown_keys_and_bad_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unknown.toml");
    write(
        &path,
        r#"
label = "x"

[system]
builtin = "planar2dof"
typo_key = 1

[gains]
K_P = [1.5, 1.0]
K_I = [5.0, 3.0]
K_Z = [0.13, 0.35]
mu = 10.0
q_star = [0.6, 0.8]
"#,
    );
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));

    let path = dir.path().join("short.toml");
    write(
        &path,
        r#"
label = "x"

[system]
builtin = "planar2dof"

[gains]
K_P = [1.5, 1.0]
K_I = [5.0, 3.0]
K_Z = [0.13]
mu = 10.0
q_star = [0.6, 0.8]
"#,
    );
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("gains.K_Z"), "{}", stderr(&out));
}

#[test]
fn simulate_rejects_asymmetric_inline_mass() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("asym.toml");
    write(
        &path,
        r#"
label = "asym"

[system]
mass = [[1.0, 0.3], [0.0, 1.0]]
damping = [[0.1, 0.0], [0.0, 0.1]]

[gains]
K_P = [1.0, 1.0]
K_I = [2.0, 2.0]
K_Z = [0.1, 0.1]
q_star = [0.0, 0.0]
"#,
    );
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("symmetric"), "{}", stderr(&out));
}

#[test]
fn simulate_unknown_source_lists_builtins() {
    let out = run(&["simulate", "no_such_scenario"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("builtin"), "{}", stderr(&out));
}

#[test]
fn simulate_physical_needs_dead_zone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nodz.toml");
    write(
        &path,
        r#"
label = "nodz"

[system]
builtin = "planar2dof"

[gains]
K_P = [1.5, 1.0]
K_I = [5.0, 3.0]
K_Z = [0.13, 0.35]
mu = 10.0
q_star = [0.6, 0.8]

[sim]
wiring = "physical"
"#,
    );
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("dead_zone"), "{}", stderr(&out));
}

#[test]
fn simulate_reports_integration_abort() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unstable.toml");
    write(
        &path,
        r#"
label = "unstable"

[system]
mass = [[1.0]]
damping = [[0.0]]
stiffness = [[-5.0]]

[gains]
K_P = [1.0]
K_I = [1.0]
K_Z = [0.1]
mu = 1.0
q_star = [0.0]

[sim]
controller = "none"
horizon = 20.0
x0 = [1.0, 0.0]
"#,
    );
    let out = run(&[
        "simulate",
        path.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("aborted") || err.contains("exceeded"), "{err}");
    // No partial CSV may be left behind.
    assert!(!dir.path().join("unstable.csv").exists());
}

#[test]
fn simulate_two_controllers_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "setpoint_a_pi",
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--controller",
        "pi",
        "--controller",
        "pidz",
        "--horizon",
        "6",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(dir.path().join("setpoint_a_pi_pi.csv").exists());
    assert!(dir.path().join("setpoint_a_pi_pidz.csv").exists());
    let text = stdout(&out);
    assert!(text.contains("u_pi (%L1/%L2)"), "{text}");
    assert!(text.contains("u_pidz (%L1/%L2)"), "{text}");
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "simulate",
            "case_ii",
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--horizon",
            "3",
        ]);
        assert!(out.status.success());
    }
    let a = fs::read(dir_a.path().join("case_ii.csv")).unwrap();
    let b = fs::read(dir_b.path().join("case_ii.csv")).unwrap();
    assert_eq!(a, b, "CSV output is not byte-identical");
}

#[test]
fn analyze_case_ii_reports_reference_number() {
    let out = run(&["analyze", "case_ii"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lhs: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("lhs_4_lmaxP_lmaxM = "))
        .expect("lhs line present")
        .parse()
        .unwrap();
    assert!((lhs - 9.9883).abs() <= 0.01 * 9.9883, "lhs = {lhs}");
    assert!(text.contains("satisfied = false"));
    assert!(text.contains("csv_header = lhs,rhs,satisfied,max_im,min_re"));
}

#[test]
fn analyze_critical_scalar_case() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("critical.toml");
    write(&path, INLINE_SCALAR);
    let out = run(&["analyze", path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("satisfied = true"), "{text}");
    assert!(text.contains("spectrum_real = true"), "{text}");
    let lhs: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("lhs_4_lmaxP_lmaxM = "))
        .unwrap()
        .parse()
        .unwrap();
    let rhs: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("rhs_lminR_squared = "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(lhs, 4.0);
    assert_eq!(rhs, 4.0);
}

#[test]
fn analyze_rescale_flips_rule_to_satisfied() {
    // An unsatisfied configuration reports alpha; scaling the dissipation by
    // alpha and re-analyzing must flip the flag.
    let dir = tempfile::tempdir().unwrap();
    let base = r#"
label = "unsat"

[system]
mass = [[0.8, 0.1], [0.1, 0.5]]
damping = [[0.3, 0.0], [0.0, 0.2]]

[gains]
K_P = [K_P_ROW_1, K_P_ROW_2]
K_I = [6.0, 4.0]
K_Z = [0.2, 0.4]
mu = 12.0
q_star = [0.3, -0.2]
"#;
    let path = dir.path().join("unsat.toml");
    write(
        &path,
        &base.replace("K_P_ROW_1", "0.4").replace("K_P_ROW_2", "0.6"),
    );
    let out = run(&["analyze", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("satisfied = false"), "{text}");
    let alpha: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("rescale_alpha = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(alpha > 1.0);

    // R = D + K_P channel-wise (all diagonal here); K_P' = alpha R - D.
    let (d1, d2) = (0.3, 0.2);
    let (kp1, kp2) = (0.4, 0.6);
    let scaled_1 = alpha * (d1 + kp1) - d1;
    let scaled_2 = alpha * (d2 + kp2) - d2;
    let path2 = dir.path().join("rescaled.toml");
    write(
        &path2,
        &base
            .replace("K_P_ROW_1", &format!("{scaled_1}"))
            .replace("K_P_ROW_2", &format!("{scaled_2}")),
    );
    let out = run(&["analyze", path2.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("satisfied = true"), "{text}");
    assert!(text.contains("spectrum_real = true"), "{text}");
}

#[test]
fn analyze_writes_csv_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        "case_i",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("case_i.analysis.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "lhs,rhs,satisfied,max_im,min_re");
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
}

#[test]
fn report_renders_comparison_and_handles_missing() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in ["setpoint_a_pi", "setpoint_a_pidz", "setpoint_e_pi"] {
        let out = run(&[
            "simulate",
            scenario,
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--horizon",
            "4",
        ]);
        assert!(out.status.success());
    }
    let out = run(&["report", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("u_pi (%L1/%L2)"), "{table}");
    assert!(
        table.contains("—"),
        "missing run must render a dash: {table}"
    );
    assert!(stderr(&out).contains("missing one controller run"));
    assert!(dir.path().join("report.txt").exists());
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("case,position,pi_l1,pi_l2,pidz_l1,pidz_l2"));
}

#[test]
fn report_single_controller_layout() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in ["case_i", "case_ii", "case_iii"] {
        let out = run(&[
            "simulate",
            scenario,
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--horizon",
            "4",
        ]);
        assert!(out.status.success());
    }
    let out = run(&["report", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let table = stdout(&out);
    assert!(table.contains("%Link1"), "{table}");
    assert!(table.contains("case_iii"), "{table}");
    // Rows sorted by label.
    let i1 = table.find("case_i ").unwrap();
    let i2 = table.find("case_ii ").unwrap();
    let i3 = table.find("case_iii").unwrap();
    assert!(i1 < i2 && i2 < i3);
}

#[test]
fn report_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["report", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no metrics files"));
}

#[test]
fn sharpness_defaults_to_ten() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nomu.toml");
    write(
        &path,
        r#"
label = "nomu"

[system]
builtin = "planar2dof"

[gains]
K_P = [1.5, 1.0]
K_I = [5.0, 3.0]
K_Z = [0.13, 0.35]
q_star = [0.6, 0.8]
"#,
    );
    let scenario = dzpbc_cli::document::load_scenario(path.to_str().unwrap()).unwrap();
    assert_eq!(scenario.gains.mu(), &nalgebra::dvector![10.0, 10.0]);
}

#[test]
fn scenario_documents_round_trip() {
    for scenario in dzpbc::scenarios::experiment_suite::<f64>() {
        let doc = ScenarioDocument::from_scenario(&scenario);
        let text = doc.to_toml().unwrap();
        let parsed = ScenarioDocument::parse(&text).unwrap();
        let back = parsed.to_scenario().unwrap();
        assert_eq!(back, scenario, "round-trip changed `{}`", scenario.label);
    }
}

#[test]
fn inline_document_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scalar.toml");
    write(&path, INLINE_SCALAR);
    let first = dzpbc_cli::document::load_scenario(path.to_str().unwrap()).unwrap();
    let text = ScenarioDocument::from_scenario(&first).to_toml().unwrap();
    let path2 = dir.path().join("scalar2.toml");
    write(&path2, &text);
    let second = dzpbc_cli::document::load_scenario(path2.to_str().unwrap()).unwrap();
    assert_eq!(first, second);
}
