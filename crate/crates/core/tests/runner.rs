use std::path::{Path, PathBuf};

use multitime_core::runner::{
    self, LoadOptions, ReportFormat, ScenarioKind, EXIT_CHECK_FAILED, EXIT_LOAD_ERROR, EXIT_PASS,
};
use multitime_core::Error;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/golden")
}

fn golden(name: &str) -> PathBuf {
    golden_dir().join(format!("{name}.json"))
}

fn check<'a>(r: &'a runner::Report, name: &str) -> &'a runner::Check {
    r.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn block_commutator_golden_is_a_partition_scenario() {
    let s = runner::load_scenario(&golden("block_commutator"), LoadOptions::default()).unwrap();
    assert_eq!(s.kind, ScenarioKind::PartitionFeshbach);
    assert_eq!(s.seed, Some(11));
    let r = runner::run_scenario(&s);
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["reassembly", "block_commutator", "eigen_consistency", "dirac_frenkel_bound"]);
    assert!(r.overall_passed);
}

#[test]
fn seed_override_changes_random_inputs() {
    let base = runner::load_scenario(&golden("block_commutator"), LoadOptions::default()).unwrap();
    let other = runner::load_scenario(
        &golden("block_commutator"),
        LoadOptions {
            seed: Some(12),
            ..LoadOptions::default()
        },
    )
    .unwrap();
    let (a, b) = (runner::run_scenario(&base), runner::run_scenario(&other));
    assert_ne!(check(&a, "block_commutator").detail, check(&b, "block_commutator").detail);
    assert!(b.overall_passed);
}

#[test]
fn commuting_golden_has_zero_residual() {
    let s = runner::load_scenario(&golden("commuting_integrability"), LoadOptions::default()).unwrap();
    let r = runner::run_scenario(&s);
    assert!(r.overall_passed);
    assert_eq!(check(&r, "max_residual").value, 0.0);
}

#[test]
fn path_golden_matches_commutator_estimate() {
    let s = runner::load_scenario(&golden("path_dependence"), LoadOptions::default()).unwrap();
    let r = runner::run_scenario(&s);
    let c = check(&r, "path_residual_vs_expected");
    assert!(c.passed && c.value <= 0.05 && c.tolerance == 0.05);
}

#[test]
fn feshbach_golden_meets_tightened_tolerance() {
    let s = runner::load_scenario(&golden("feshbach_two_level"), LoadOptions::default()).unwrap();
    let r = runner::run_scenario(&s);
    let c = check(&r, "eigen_consistency");
    assert_eq!(c.tolerance, 1e-10);
    assert!(c.passed);
    assert!(check(&r, "bare_block_gap").passed);
}

#[test]
fn loading_errors_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };

    let shape = write(
        "shape.json",
        r#"{"schema_version": 1, "name": "s", "kind": "spectrum", "payload": {
            "hamiltonian": {"dim": 3, "entries": [[[1,0],[0,0]],[[0,0],[1,0]],[[0,0],[0,0]]]},
            "psi0": [[1,0],[0,0],[0,0]], "t_grid": [0.0]}}"#,
    );
    match runner::load_scenario(&shape, LoadOptions::default()).unwrap_err() {
        Error::Schema { field, message } => {
            assert_eq!(field, "payload.hamiltonian");
            assert!(message.contains("entries shape"));
        }
        other => panic!("unexpected {other:?}"),
    }

    let missing = write("missing.json", r#"{"schema_version": 1, "name": "m", "kind": "tensor_product", "payload": {}}"#);
    assert!(matches!(
        runner::load_scenario(&missing, LoadOptions::default()).unwrap_err(),
        Error::Schema { field, .. } if field == "payload.h_a"
    ));

    let parse = write("parse.json", "{\"schema_version\": 1,\n\"name\": }");
    match runner::load_scenario(&parse, LoadOptions::default()).unwrap_err() {
        Error::Parse { path, line, .. } => {
            assert_eq!(path, parse);
            assert_eq!(line, 2);
        }
        other => panic!("unexpected {other:?}"),
    }

    let gated = write(
        "gated.json",
        r#"{"schema_version": 1, "name": "g", "kind": "diagonal_consistency", "payload": {
            "family": {"n_times": 1, "hermitian_required": false, "members": [{"n_times": 1, "dim": 2, "terms": [
                {"coeff": {"kind": "constant", "params": [1.0]},
                 "op": {"dim": 2, "entries": [[[1,-0.5],[0,0]],[[0,0],[2,0]]]}}]}]},
            "initial": [[1,0],[0,0]], "t": 1.0, "steps": 4}}"#,
    );
    match runner::load_scenario(&gated, LoadOptions::default()).unwrap_err() {
        Error::GateRefusal { matrix, defect } => {
            assert_eq!(matrix, "payload.family.members[0].terms[0].op");
            assert!(defect > 1e-12);
        }
        other => panic!("unexpected {other:?}"),
    }
    let allowed = LoadOptions {
        allow_non_hermitian: true,
        seed: None,
    };
    let r = runner::run_scenario(&runner::load_scenario(&gated, allowed).unwrap());
    assert!(r.checks.iter().all(|c| c.value.is_finite()));

    assert!(matches!(
        runner::load_scenario(&dir.path().join("absent.json"), LoadOptions::default()).unwrap_err(),
        Error::Io { .. }
    ));
}

#[test]
fn emitted_reports_round_trip() {
    let s = runner::load_scenario(&golden("interaction_sweep"), LoadOptions::default()).unwrap();
    let report = runner::run_scenario(&s);
    let dir = tempfile::tempdir().unwrap();

    let json = dir.path().join("r.json");
    runner::emit_report(&report, ReportFormat::Json, Some(&json)).unwrap();
    let back: runner::Report = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, report);

    let csv = dir.path().join("r.csv");
    runner::emit_report(&report, ReportFormat::Csv, Some(&csv)).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), report.checks.len() + 1);
    assert!(text.starts_with("name,value,tolerance,passed\n"));

    let bad = dir.path().join("no_such_dir").join("r.json");
    let err = runner::emit_report(&report, ReportFormat::Json, Some(&bad)).unwrap_err();
    assert!(err.to_string().contains("no_such_dir"), "{err}");
}

#[test]
fn suite_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["gamow_decay", "diagonal_gap"] {
        std::fs::copy(golden(name), dir.path().join(format!("{name}.json"))).unwrap();
    }
    let failing = std::fs::read_to_string(golden("noncommuting_integrability"))
        .unwrap()
        .replace("\"noncommuting_integrability\"", "\"wrong_expectation\"")
        .replace("2.8284271247461903", "1.0");
    std::fs::write(dir.path().join("wrong.json"), failing).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let out = runner::run_suite(dir.path(), 2, LoadOptions::default()).unwrap();
    assert_eq!(out.exit_code, EXIT_CHECK_FAILED);
    let names: Vec<&str> = out.reports.iter().map(|r| r.scenario_name.as_str()).collect();
    assert_eq!(names, ["diagonal_gap", "gamow_decay", "wrong_expectation"]);

    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let out = runner::run_suite(dir.path(), 2, LoadOptions::default()).unwrap();
    assert_eq!(out.exit_code, EXIT_LOAD_ERROR);
    assert_eq!(out.reports.len(), 4);
    let broken = out.reports.iter().find(|r| r.scenario_name == "broken").unwrap();
    assert_eq!(broken.checks[0].name, "load");
}

#[test]
fn empty_suite_passes_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = runner::run_suite(dir.path(), 1, LoadOptions::default()).unwrap();
    assert_eq!(out.exit_code, EXIT_PASS);
    assert!(out.reports.is_empty());
    assert_eq!(out.warnings.len(), 1);
    assert!(runner::run_suite(dir.path(), 0, LoadOptions::default()).is_err());
}
