//! The six dialogue templates and their renderer.
//!
//! Placeholders are written `{name}`; `{name?}` marks an optional value
//! whose whole line is dropped when the value is absent. Frame images are
//! referenced in the text by [`FRAME_TOKENS`], which HTTP backends replace
//! with the actual image parts.

use crate::error::{Error, Result};
use crate::model::{AnswerOption, RoundRecord};

use super::PromptKind;

/// Marks where the frame images go in a rendered prompt.
pub const FRAME_TOKENS: &str = "<video_frames>";

const GLANCE_DECISION: &str = "\
You are given a single-choice question, options, subtitles, and some frames of the long video. You should not only look at the textual information but also consider the input visual information, taking everything into account. If you can answer the question accurately and comprehensively based on the existing information, especially the visual information, and further watching the entire video will not significantly improve the quality of the answer, then you don't need to watch the entire video and can answer 'No.'. However, if the existing information is not sufficient to fully answer the question, and watching the entire video may obtain information crucial for answering the question, please reply 'Yes'.
The frame tokens: {frames}
The question is:{question}
The options is:{options}
The subtitiles is:{subtitles?}
Output:";

const KEY_INFO_INITIAL: &str = "\
Given some frames from a long video, subtitles, a single-choice question, and options, identify the key information needed to answer the question. Focus on visual cues, context, and temporal relationships within the frames. Limit your response to 50 words.
The frame tokens: {frames}
The question is:{question}
The options is:{options}
The subtitiles is:{subtitles?}";

const ANSWER: &str = "\
Given some frames from a long video, subtitles, a single-choice question, and options, select the best answer to the following question based on the video and the subtitles. Respond with only the letter ({letters}) of the correct option.
The frame tokens: {frames}
The question is:{question}
The options is:{options}
The subtitiles is:{subtitles?}
The Key Info is:{key_info?}
The best answer is:";

const REASON: &str = "\
You are given a single-choice question, options, some frames of the long video, the key information of the question and the choice you have made. You should not only look at the textual information but also consider the input visual information, taking everything into account. Base on the provided information, your task is to explain the reason behind your choice.
The frame tokens: {frames}
The question is: {question}
The options is:{options}
The Key Info is:{key_info?}
Your choice is {choice}";

const CONFIDENCE: &str = "\
You are given a single-choice question, options, some frames of the long video, your choice for the question and the reason. Your task is to evaluate whether the selected choice is correct. Criteria for Evaluation: Insufficient Information (Confidence Level: 1): There isn’t enough clear information to be sure. Partial Information (Confidence Level: 2): The decision is likely correct, but there’s some uncertainty. Sufficient Information (Confidence Level: 3): The decision is clearly supported by the given information. You need to provide the Confidence Level (a number of 1 or 2 or 3) according to the Criteria for Evaluation. Choose the confidence level that best reflects how clearly the input supports your choice. Respond with only the JSON format: {’confidence’: 'x'}, where 'x' is Confidence Level, without any additional text, explanation, or formatting.
The frame tokens: {frames}
The question is: {question}
The options is:{options}
Your choice is {choice}
Your reason is {reason}";

const KEY_INFO_UPDATE: &str = "\
Given some frames from a long video, subtitles, a single-choice question, and options, the old key information and the old choices and reasons, identify the key information needed to answer the question. Focus on visual cues, context, and temporal relationships within the frames. Limit your response to 50 words.
The frame tokens: {frames}
The question is: {question}
{history}";

pub fn template(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::GlanceDecision => GLANCE_DECISION,
        PromptKind::KeyInfoInitial => KEY_INFO_INITIAL,
        PromptKind::KeyInfoUpdate => KEY_INFO_UPDATE,
        PromptKind::Answer => ANSWER,
        PromptKind::Reason => REASON,
        PromptKind::Confidence => CONFIDENCE,
    }
}

/// Values available to a template. Unused fields are ignored.
#[derive(Debug, Clone, Default)]
pub struct PromptContext<'a> {
    pub question: Option<&'a str>,
    pub options: &'a [AnswerOption],
    pub subtitles: Option<&'a str>,
    pub key_info: Option<&'a str>,
    pub history: &'a [RoundRecord],
    pub choice: Option<char>,
    pub reason: Option<&'a str>,
}

/// "A or B", "A, B, or C", "A, B, C, or D", ...
pub fn letter_range(options: &[AnswerOption]) -> String {
    let letters: Vec<String> = options.iter().map(|o| o.letter.to_string()).collect();
    match letters.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} or {b}"),
        [init @ .., last] => format!("{}, or {last}", init.join(", ")),
    }
}

pub fn render_options(options: &[AnswerOption]) -> String {
    options
        .iter()
        .map(|o| format!("{}. {}", o.letter, o.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_history(history: &[RoundRecord]) -> String {
    history
        .iter()
        .map(|r| {
            format!(
                "Round {n} Key Info: {}\nRound {n} Choice: {}\nRound {n} Reason: {}",
                r.key_info,
                r.answer,
                r.reason,
                n = r.round
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn lookup(name: &str, ctx: &PromptContext<'_>) -> Result<Option<String>> {
    let non_empty = |s: Option<&str>| s.filter(|v| !v.is_empty()).map(str::to_string);
    Ok(match name {
        "frames" => Some(FRAME_TOKENS.to_string()),
        "question" => non_empty(ctx.question),
        "options" => (!ctx.options.is_empty()).then(|| render_options(ctx.options)),
        "letters" => (!ctx.options.is_empty()).then(|| letter_range(ctx.options)),
        "subtitles" => non_empty(ctx.subtitles),
        "key_info" => non_empty(ctx.key_info),
        "history" => (!ctx.history.is_empty()).then(|| render_history(ctx.history)),
        "choice" => ctx.choice.map(String::from),
        "reason" => non_empty(ctx.reason),
        other => return Err(Error::invalid(format!("unknown template placeholder {other}"))),
    })
}

fn static_name(name: &str) -> &'static str {
    match name {
        "frames" => "frames",
        "question" => "question",
        "options" => "options",
        "letters" => "letters",
        "subtitles" => "subtitles",
        "key_info" => "key_info",
        "history" => "history",
        "choice" => "choice",
        "reason" => "reason",
        _ => "unknown",
    }
}

/// Renders `kind` with the values in `ctx`.
pub fn render_prompt(kind: PromptKind, ctx: &PromptContext<'_>) -> Result<String> {
    let mut lines = Vec::new();
    'lines: for line in template(kind).lines() {
        let mut out = String::with_capacity(line.len());
        let mut rest = line;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let Some(close) = after.find('}') else { break };
            let raw = &after[..close];
            let (name, optional) = match raw.strip_suffix('?') {
                Some(n) => (n, true),
                None => (raw, false),
            };
            if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
                // literal braces such as the JSON example
                out.push_str(&rest[..open + 1]);
                rest = after;
                continue;
            }
            out.push_str(&rest[..open]);
            match lookup(name, ctx)? {
                Some(v) => out.push_str(&v),
                None if optional => continue 'lines,
                None => return Err(Error::MissingPlaceholder(static_name(name))),
            }
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        lines.push(out);
    }
    Ok(lines.join("\n"))
}
