//! Parsers for model replies. None of them panic; every failure is a typed
//! error carrying the offending text.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Confidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlanceDecision {
    /// Watch the whole video: answer from a dense uniform sample.
    Global,
    /// Proceed with chain-of-shot reasoning.
    Local,
}

const DECISION_WINDOW: usize = 16;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// "Yes" routes to [`GlanceDecision::Global`], "No" to
/// [`GlanceDecision::Local`]; whichever word appears first within the first
/// 16 characters wins.
pub fn parse_glance_decision(text: &str) -> Result<GlanceDecision> {
    let head: String = text
        .trim_start()
        .chars()
        .take(DECISION_WINDOW)
        .flat_map(char::to_lowercase)
        .collect();
    let chars: Vec<char> = head.chars().collect();
    for i in 0..chars.len() {
        if i > 0 && is_word_char(chars[i - 1]) {
            continue;
        }
        for (word, decision) in [("yes", GlanceDecision::Global), ("no", GlanceDecision::Local)] {
            let w: Vec<char> = word.chars().collect();
            let end = i + w.len();
            if end <= chars.len()
                && chars[i..end] == w[..]
                && chars.get(end).is_none_or(|&c| !is_word_char(c))
            {
                return Ok(decision);
            }
        }
    }
    Err(Error::UnparseableDecision(text.to_string()))
}

/// The first standalone character of `text` that is one of `allowed`.
pub fn parse_answer_letter(text: &str, allowed: &[char]) -> Result<char> {
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !allowed.contains(&c) {
            continue;
        }
        let before_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let after_ok = chars.get(i + 1).is_none_or(|n| !n.is_alphanumeric());
        if before_ok && after_ok {
            return Ok(c);
        }
    }
    Err(Error::UnparseableAnswer(text.to_string()))
}

fn is_quote(c: char) -> bool {
    matches!(c, '\'' | '"' | '‘' | '’' | '“' | '”' | '`')
}

/// Reads the `confidence` field of the first `{...}` object in `text`.
/// Single, double and typographic quotes are accepted, as are bare digits.
pub fn parse_confidence(text: &str) -> Result<Confidence> {
    let fail = || Error::UnparseableConfidence(text.to_string());
    let open = text.find('{').ok_or_else(fail)?;
    let body = &text[open + 1..];
    let close = body.find('}').ok_or_else(fail)?;
    let body = &body[..close];

    const KEY: &[u8] = b"confidence";
    let key = body
        .as_bytes()
        .windows(KEY.len())
        .position(|w| w.eq_ignore_ascii_case(KEY))
        .ok_or_else(fail)?;
    // an ASCII match always ends on a char boundary
    let rest = &body[key + KEY.len()..];
    let mut chars = rest.chars().skip_while(|&c| is_quote(c) || c.is_whitespace());
    if chars.next() != Some(':') {
        return Err(fail());
    }
    let value: String = chars
        .skip_while(|&c| is_quote(c) || c.is_whitespace())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let level: u8 = value.parse().map_err(|_| fail())?;
    Confidence::new(level).map_err(|_| fail())
}
