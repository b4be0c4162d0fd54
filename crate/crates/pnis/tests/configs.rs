//! The shipped JSON profiles must stay in lock-step with the in-code
//! constructors: the CLI reads the files, the tests use the constructors,
//! and a digest mismatch would silently split the two worlds.

use std::path::Path;

use pnis::ScenarioConfig;

fn shipped(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ScenarioConfig::from_path(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn shipped_profiles_match_constructors() {
    for (name, cfg) in [
        ("desk.json", ScenarioConfig::desk()),
        ("desk-sense.json", ScenarioConfig::desk_sense()),
        ("table1.json", ScenarioConfig::table1()),
    ] {
        assert_eq!(shipped(name).digest(), cfg.digest(), "{name} drifted");
    }
}

#[test]
fn shipped_profiles_validate() {
    for name in ["desk.json", "desk-sense.json", "table1.json"] {
        shipped(name).validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json"),
        )
        .unwrap(),
    )
    .unwrap();
    v["system"]["typo_field"] = serde_json::json!(1);
    let err = serde_json::from_value::<ScenarioConfig>(v);
    assert!(err.is_err());
}
