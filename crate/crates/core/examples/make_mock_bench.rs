//! Writes the bundled six-question synthetic benchmark:
//!
//!     cargo run -p shotchain --example make_mock_bench -- data/mock_bench
//!
//! Produces the videos, the question file, the scripted rule file and the
//! expected report.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use shotchain::frames::{write_feature_file, FEATURE_FILE_NAME};
use shotchain::harness::synthetic::{scene_direction, scene_video};
use shotchain::harness::{load_dataset, run_benchmark};
use shotchain::orchestrator::AgentConfig;
use shotchain::providers::ScriptedProvider;

const DIM: usize = 8;

fn rule(kind: &str, contains: &str, round: Option<u32>, attempt: Option<u32>, response: &str) -> Value {
    let mut r = json!({"kind": kind, "contains": contains, "response": response});
    if let Some(n) = round {
        r["round"] = json!(n);
    }
    if let Some(a) = attempt {
        r["attempt"] = json!(a);
    }
    r
}

fn conf(level: u8) -> String {
    format!("{{'confidence': '{level}'}}")
}

/// Rules for a chain-path question: one (answer, confidence) pair per round.
fn chain(needle: &str, key_info: &str, rounds: &[(&str, u8)]) -> Vec<Value> {
    let mut rules = vec![
        rule("glance_decision", needle, None, None, "No."),
        rule("key_info_initial", needle, None, None, key_info),
        rule("key_info_update", needle, None, None, key_info),
    ];
    for (i, (answer, level)) in rounds.iter().enumerate() {
        let r = Some(i as u32 + 1);
        rules.push(rule("answer", needle, r, None, answer));
        rules.push(rule("confidence", needle, r, None, &conf(*level)));
    }
    rules
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/mock_bench".into()));
    let videos = [("city", 360, 6, 11), ("kitchen", 120, 4, 12), ("clip", 5, 2, 13)];
    for (name, len, scenes, seed) in videos {
        let dir = out.join("videos").join(name);
        std::fs::create_dir_all(&dir)?;
        write_feature_file(dir.join(FEATURE_FILE_NAME), &scene_video(len, DIM, scenes, 0.05, seed)?)?;
    }

    let questions = [
        json!({"id": "city-1", "video": "videos/city", "question": "How many people cross the street?",
               "options": ["A. two", "B. three", "C. four", "D. five"], "answer": "A"}),
        json!({"id": "city-2", "video": "videos/city", "question": "What colour is the parked car?",
               "options": ["A. red", "B. blue", "C. white", "D. black"], "answer": "B"}),
        json!({"id": "kitchen-1", "video": "videos/kitchen", "question": "What does the cook add to the pot?",
               "options": ["A. salt", "B. water", "C. onions", "D. rice"], "answer": "C",
               "subtitles": "Now we chop the onions and let them sweat."}),
        json!({"id": "city-3", "video": "videos/city", "question": "Where does the cyclist turn?",
               "options": ["A. left", "B. right", "C. straight on"], "answer": "B"}),
        json!({"id": "clip-1", "video": "videos/clip", "question": "What happens at the end of the clip?",
               "options": ["A. a door opens", "B. the light goes out", "C. a dog barks", "D. nothing"], "answer": "D"}),
        json!({"id": "kitchen-2", "video": "videos/kitchen", "question": "Which utensil is used first?",
               "options": ["A. a knife", "B. a spoon", "C. a whisk"], "answer": "A"}),
    ];
    let lines: Vec<String> = questions.iter().map(Value::to_string).collect();
    std::fs::write(out.join("dataset.jsonl"), lines.join("\n") + "\n")?;

    let mut rules = vec![
        rule("glance_decision", "cross the street", None, None, "Yes"),
        rule("answer", "cross the street", Some(0), None, "A"),
    ];
    rules.extend(chain("parked car", "find the parked car", &[("B", 3)]));
    // the second-round confidence reply is unusable once, then answered
    rules.push(rule("confidence", "add to the pot", Some(2), Some(0), "high"));
    rules.extend(chain("add to the pot", "look at the pot on the stove", &[("A", 1), ("C", 3)]));
    rules.extend(chain("cyclist", "follow the cyclist", &[("B", 1), ("B", 1), ("C", 1)]));
    rules.extend(chain("end of the clip", "watch the last seconds", &[("A", 1), ("B", 2), ("C", 1)]));
    rules.push(rule("glance_decision", "utensil", None, None, "No"));
    rules.push(json!({"kind": "key_info_initial", "contains": "utensil", "error": "transport"}));
    rules.push(json!({"kind": "reason", "response": "The frames show it clearly."}));

    let embeddings = json!([
        {"contains": "parked car", "vector": scene_direction(DIM, 3)},
        {"contains": "pot", "vector": scene_direction(DIM, 2)},
        {"contains": "cyclist", "vector": scene_direction(DIM, 1)},
        {"contains": "last seconds", "vector": scene_direction(DIM, 1)},
    ]);
    let scripted = json!({
        "rules": rules,
        "embeddings": embeddings,
        "default_embedding": scene_direction(DIM, 0),
    });
    let scripted_path = out.join("scripted.json");
    std::fs::write(&scripted_path, serde_json::to_string_pretty(&scripted)? + "\n")?;

    write_expected(&out, &scripted_path)
}

fn write_expected(out: &Path, scripted: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let ds = load_dataset(out.join("dataset.jsonl"))?;
    let provider = ScriptedProvider::from_file(scripted)?;
    let (report, _) = run_benchmark(&ds, &AgentConfig::default(), &provider, &provider, 1)?;
    std::fs::write(
        out.join("expected_report.json"),
        serde_json::to_string_pretty(&report.scores)? + "\n",
    )?;
    println!("{report}");
    Ok(())
}
