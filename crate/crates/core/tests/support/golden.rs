//! Renders every template with sentinel values and maps them back to the
//! placeholder names used in the golden files.

#![allow(dead_code)]

use std::path::PathBuf;

use shotchain::model::{Confidence, QaItem, RoundRecord};
use shotchain::providers::prompt::{render_options, FRAME_TOKENS};
use shotchain::providers::{render_prompt, PromptContext, PromptKind};

pub fn golden_path(kind: PromptKind) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{}.txt", kind.as_str()))
}

pub fn golden(kind: PromptKind) -> String {
    std::fs::read_to_string(golden_path(kind)).expect("golden file")
}

fn round(n: u32, choice: char) -> RoundRecord {
    RoundRecord {
        round: n,
        key_info: format!("{{Key Info in Round {n}}}"),
        candidates: vec![],
        new_frames: vec![],
        answer: choice,
        reason: format!("{{Reason in Round {n}}}"),
        confidence: Confidence::new(1).unwrap(),
    }
}

/// The rendered prompt with each substituted value replaced by its
/// placeholder name.
pub fn rendered_with_placeholders(kind: PromptKind) -> String {
    let options = QaItem::lettered(["first", "second", "third", "fourth"]);
    let history = [round(1, 'ℵ'), round(2, 'ℶ')];
    let ctx = PromptContext {
        question: Some("{Question}"),
        options: &options,
        subtitles: Some("{Subtitiles}"),
        key_info: Some("{Key Info}"),
        history: &history,
        choice: Some('ג'),
        reason: Some("{Reason}"),
    };
    render_prompt(kind, &ctx)
        .expect("render")
        .replace(FRAME_TOKENS, "{Frame tokens}")
        .replace(&render_options(&options), "{Options}")
        .replace('ℵ', "{Choice in Round 1}")
        .replace('ℶ', "{Choice in Round 2}")
        .replace('ג', "{Choice}")
}
