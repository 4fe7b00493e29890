//! The documented schemas against the example configs and the reports they
//! produce.

use std::path::{Path, PathBuf};

use feller_uniq_cli::{parse_config, run, Mode};
use jsonschema::{Resource, Validator};
use serde_json::Value;

const MODES: [&str; 6] = ["classify_1d", "classify_nd", "entrance", "fokker_planck", "feynman_kac", "cross_validate"];

fn docs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs")
}

fn load(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

fn config_schema() -> Value {
    load(&docs().join("config.schema.json"))
}

fn config_validator() -> Validator {
    jsonschema::validator_for(&config_schema()).unwrap()
}

fn report_validator() -> Validator {
    let config = config_schema();
    let id = config["$id"].as_str().unwrap().to_owned();
    jsonschema::options()
        .with_resource(id, Resource::from_contents(config).unwrap())
        .build(&load(&docs().join("report.schema.json")))
        .unwrap()
}

fn assert_valid(v: &Validator, instance: &Value, what: &str) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{what}: {errors:#?}");
}

fn example(mode: &str) -> Value {
    load(&docs().join("examples").join(format!("{mode}.json")))
}

#[test]
fn one_example_per_mode_and_all_valid() {
    let v = config_validator();
    for mode in MODES {
        let ex = example(mode);
        assert_eq!(ex["mode"], mode);
        assert!(ex["description"].as_str().is_some_and(|d| !d.is_empty()), "{mode} lacks a description");
        assert_valid(&v, &ex, mode);
        let cfg = parse_config(&ex.to_string()).unwrap();
        assert_eq!(cfg.mode.name(), mode);
        cfg.resolve().unwrap();
    }
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let v = config_validator();
    let bad = [
        r#"{"mode": "classify_1d", "operator": {"a": "1", "b": "0"}, "extra": 1}"#,
        r#"{"mode": "classify_2d", "operator": {"a": "1", "b": "0"}}"#,
        r#"{"mode": "classify_1d", "operator": {"a": "1"}}"#,
        r#"{"mode": "classify_1d", "operator": {"a": "1", "b": "0", "interval": [0, "infinity"]}}"#,
        r#"{"mode": "classify_1d", "operator": {"a": "1", "b": "0"}, "numerics": {"fp": {"bc": "periodic"}}}"#,
        r#"{"mode": "classify_1d", "operator": {"a": "1", "b": "0"}, "lambdas": [1, "x"]}"#,
    ];
    for text in bad {
        let value: Value = serde_json::from_str(text).unwrap();
        assert!(!v.is_valid(&value), "schema accepted {text}");
        let parsed = parse_config(text).and_then(|c| c.resolve());
        assert!(parsed.is_err(), "parser accepted {text}");
    }
}

#[test]
fn schema_enforces_operator_choice() {
    let v = config_validator();
    let nd_for_1d: Value =
        serde_json::from_str(r#"{"mode": "entrance", "operator_nd": {"drift": ["0", "0"]}}"#).unwrap();
    assert!(!v.is_valid(&nd_for_1d));
    let both: Value = serde_json::from_str(
        r#"{"mode": "feynman_kac", "operator": {"a": "1", "b": "0"}, "operator_nd": {"drift": ["0", "0"]}}"#,
    )
    .unwrap();
    assert!(!v.is_valid(&both));
    assert!(parse_config(&both.to_string()).unwrap().resolve().is_err());
}

#[test]
fn example_reports_match_report_schema() {
    let v = report_validator();
    let dir = tempfile::tempdir().unwrap();
    for mode in MODES {
        let mut cfg = parse_config(&example(mode).to_string()).unwrap();
        if cfg.mode == Mode::FokkerPlanck {
            cfg.output.mass_csv = Some(dir.path().join("mass.csv").display().to_string());
            cfg.output.profile_csv = Some(dir.path().join("profile.csv").display().to_string());
        }
        let report = run(cfg).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_valid(&v, &json, mode);
        assert_eq!(json["result"]["kind"], mode);
        let back: feller_uniq_cli::Report = serde_json::from_value(json).unwrap();
        assert_eq!(back.deterministic_json(), report.deterministic_json());
    }
}
