use std::path::Path;

use serde_json::Value;

use shotchain::providers::{PromptKind, ScriptedProvider};

fn root() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

#[test]
fn schema_lists_every_prompt_kind() {
    let text = std::fs::read_to_string(root().join("schemas/scripted_rules.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let kinds: Vec<&str> = schema["$defs"]["chatRule"]["properties"]["kind"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let expected: Vec<&str> = PromptKind::ALL.iter().map(|k| k.as_str()).collect();
    assert_eq!(kinds, expected);
}

#[test]
fn bundled_rule_file_loads() {
    let p = ScriptedProvider::from_file(root().join("data/mock_bench/scripted.json")).unwrap();
    assert!(!p.rules().rules.is_empty());
}
