use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eflow_cli::config::{load_config, parse_config, ConfigError};
use eflow_cli::run::{run, verify_outputs, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED};
use eflow_core::topology::{check_flow_conservation, FlowVector};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn eflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eflow"))
        .args(args)
        .output()
        .unwrap()
}

fn read_column(path: &Path, column: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == column)
        .unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].parse().unwrap())
        .collect()
}

#[test]
fn fixtures_validate() {
    for name in ["topology1.cfg", "topology2.cfg", "diamond.cfg"] {
        let out = eflow(&["validate", fixture(name).to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
    }
}

#[test]
fn topology2_run_reports_reference_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let out = eflow(&[
        "run",
        fixture("topology2.cfg").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let y = read_column(&dir.path().join("transfers.csv"), "transfer");
    let p = read_column(&dir.path().join("powers.csv"), "power");
    for (got, want) in y.iter().zip([11.92, 0.0, 9.66, 16.29, 0.0]) {
        assert!((got - want).abs() <= 0.02, "y {got} vs {want}");
    }
    for (got, want) in p.iter().zip([3.07, 20.96, 5.33, 3.53, 23.15]) {
        assert!((got - want).abs() <= 0.02, "p {got} vs {want}");
    }
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(
        summary.contains("11.92") && summary.contains("23.1498"),
        "{summary}"
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);
}

#[test]
fn infeasible_config_exits_2_with_deficits() {
    let text = fs::read_to_string(fixture("topology2.cfg"))
        .unwrap()
        .replace(
            "[[15.0], [15.0], [15.0], [15.0], [15.0], [15.0]]",
            "[[15.0], [0.5], [0.5], [0.5], [0.5], [0.0]]",
        );
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("starved.cfg");
    fs::write(&cfg_path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = eflow(&[
        "run",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_INFEASIBLE));
    let stderr = String::from_utf8_lossy(&out.stderr);
    // node 2 is rescued by node 1; node 5 only hears from node 4, which is starved too
    assert!(
        stderr.contains("deficits") && stderr.contains("node 5"),
        "{stderr}"
    );
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("status: infeasible"));
}

#[test]
fn iteration_limit_exits_3() {
    let cfg = load_config(&fixture("topology1.cfg")).unwrap();
    let mut cfg = cfg.clone();
    cfg.options.max_iters = Some(2);
    let dir = tempfile::tempdir().unwrap();
    let report = run(&cfg, dir.path()).unwrap();
    assert_eq!(report.exit_code, EXIT_NOT_CONVERGED);
    assert!(report.summary.contains("NOT converged"));
}

#[test]
fn bad_configs_are_rejected_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    let text = fs::read_to_string(fixture("topology2.cfg")).unwrap();
    fs::write(
        &path,
        text.replace(
            r#"{"id": 3, "src": 3, "dst": 6, "sigma": 0.1}"#,
            r#"{"id": 3, "src": 3, "dst": 6}"#,
        ),
    )
    .unwrap();
    let out = eflow(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data link 3 has no sigma"));
}

#[test]
fn conservation_violation_carries_residual_vector() {
    // link 6 (3 -> 5) carries 0.5 more than node 3 receives
    let text = fs::read_to_string(fixture("topology1.cfg"))
        .unwrap()
        .replace(
            "[2.0, 1.0, 0.5, 0.125, 2.125, 0.375, 0.5]",
            "[2.0, 1.0, 0.5, 0.125, 2.125, 0.875, 0.5]",
        );
    let good = load_config(&fixture("topology1.cfg")).unwrap();
    let bad_flows = FlowVector::new(vec![2.0, 1.0, 0.5, 0.125, 2.125, 0.875, 0.5]).unwrap();
    let residual = check_flow_conservation(&good.network, &bad_flows).unwrap();
    assert!((residual[2] - 0.5).abs() < 1e-12);
    match parse_config(&text) {
        Err(ConfigError::Validation { field, message }) => {
            assert_eq!(field, "flows");
            assert!(message.contains(&format!("{residual:?}")), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    for (name, sub) in [
        ("topology1.cfg", "run"),
        ("topology2.cfg", "run"),
        ("diamond.cfg", "pareto"),
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let out = eflow(&[
                sub,
                fixture(name).to_str().unwrap(),
                "--seed",
                "11",
                "--out",
                d.path().to_str().unwrap(),
            ]);
            assert_eq!(out.status.code(), Some(0), "{name}");
        }
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()), "{name}");
    }
}

#[test]
fn parallel_sweep_matches_serial() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let f = fixture("diamond.cfg");
    eflow(&[
        "pareto",
        f.to_str().unwrap(),
        "--out",
        a.path().to_str().unwrap(),
    ]);
    eflow(&[
        "pareto",
        f.to_str().unwrap(),
        "--parallel",
        "--out",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
}

#[test]
fn emitted_solutions_revalidate() {
    for name in ["topology1.cfg", "topology2.cfg", "diamond.cfg"] {
        let cfg = load_config(&fixture(name)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run(&cfg, dir.path()).unwrap();
        assert_eq!(report.exit_code, 0, "{name}");
        let problems = verify_outputs(&cfg, dir.path()).unwrap();
        assert!(problems.is_empty(), "{name}: {problems:?}");
    }
}

#[test]
fn tampered_output_fails_revalidation() {
    let cfg = load_config(&fixture("topology2.cfg")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, dir.path()).unwrap();
    let path = dir.path().join("transfers.csv");
    let text = fs::read_to_string(&path).unwrap();
    let tampered: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 1 {
                "1,1,14.5,14.5".to_string()
            } else {
                l.to_string()
            }
        })
        .collect();
    fs::write(&path, tampered.join("\n") + "\n").unwrap();
    let problems = verify_outputs(&cfg, dir.path()).unwrap();
    assert!(
        problems.iter().any(|p| p.contains("node 1")),
        "{problems:?}"
    );
}

#[test]
fn pareto_writes_both_frontiers() {
    let dir = tempfile::tempdir().unwrap();
    let out = eflow(&[
        "pareto",
        fixture("diamond.cfg").to_str().unwrap(),
        "--grid",
        "200",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "frontier_cooperative.csv",
        "frontier_standalone.csv",
        "joint_runs.csv",
        "paths.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let coop = read_column(&dir.path().join("frontier_cooperative.csv"), "delay_path1");
    let alone = read_column(&dir.path().join("frontier_standalone.csv"), "delay_path1");
    assert!(coop.len() > 20 && alone.len() > 20);
    // the 5 runs: default start, two explicit, two random
    let converged = read_column(&dir.path().join("joint_runs.csv"), "objective");
    assert_eq!(converged.len(), 5);
    for w in converged.windows(2) {
        assert!((w[0] - w[1]).abs() < 1e-4 * w[0]);
    }
}

#[test]
fn pareto_subcommand_needs_supply() {
    let out = eflow(&[
        "pareto",
        fixture("topology2.cfg")
            .to_str()
            .unwrap()
            .replace("topology2", "missing")
            .as_str(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nosupply.cfg");
    let text = fs::read_to_string(fixture("topology2.cfg")).unwrap();
    fs::write(
        &path,
        text.replace("\"supply\": [0.5, 2.0, 0.5, 0.5, 2.0, -5.5],", ""),
    )
    .unwrap();
    let out = eflow(&[
        "pareto",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("supply"));
}
