//! Question files: one JSON object per line.
//!
//! ```json
//! {"id": "q1", "video": "videos/v1", "question": "...", "options": ["A. red", "B. blue"], "answer": "A"}
//! ```
//!
//! `video` is a directory holding `features.vcf` (and optionally `frames/`)
//! or a `.vcf` file, relative to the question file. `subtitles` is either
//! text or the relative path of a text file.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::VideoSource;
use crate::model::{AnswerOption, QaItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub video: String,
    pub question: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// Directory that relative video and subtitle paths resolve against.
    pub root: PathBuf,
    pub items: Vec<QaItem>,
}

/// Splits `"B. a blue car"` into `('B', "a blue car")`.
pub fn parse_option(raw: &str) -> Option<AnswerOption> {
    let mut chars = raw.chars();
    let letter = chars.next().filter(char::is_ascii_uppercase)?;
    let rest = chars.as_str();
    let text = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some(AnswerOption {
        letter,
        text: text.trim().to_string(),
    })
}

fn parse_letter(raw: &str) -> Option<char> {
    let t = raw.trim().trim_end_matches(['.', ')']).trim_start_matches('(');
    let mut chars = t.chars();
    let c = chars.next()?;
    (chars.next().is_none() && c.is_ascii_uppercase()).then_some(c)
}

impl DatasetRecord {
    pub fn into_item(self, root: &Path) -> Result<QaItem> {
        let options = self
            .options
            .iter()
            .map(|o| {
                parse_option(o).ok_or_else(|| {
                    Error::InvariantViolation(format!(
                        "item {}: option {o:?} does not start with a letter and a period",
                        self.id
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let gold = match self.answer.as_deref() {
            None => None,
            Some(a) => Some(parse_letter(a).ok_or_else(|| {
                Error::InvariantViolation(format!("item {}: answer {a:?} is not a letter", self.id))
            })?),
        };
        let subtitles = match self.subtitles {
            Some(s) => {
                let path = root.join(&s);
                if s.len() < 4096 && !s.contains('\n') && path.is_file() {
                    Some(std::fs::read_to_string(path)?)
                } else {
                    Some(s)
                }
            }
            None => None,
        };
        QaItem::new(self.id, self.video, self.question, options, gold, subtitles)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| parse_err(line_no, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::InvariantViolation(format!(
                "{}:{line_no}: duplicate item id {}",
                path.display(),
                record.id
            )));
        }
        let item = record.into_item(&root).map_err(|e| match e {
            Error::InvariantViolation(m) => Error::InvariantViolation(format!("{}:{line_no}: {m}", path.display())),
            other => other,
        })?;
        items.push(item);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Dataset { name, root, items })
}

impl Dataset {
    pub fn video_path(&self, video: &str) -> PathBuf {
        self.root.join(video)
    }

    /// Loads every distinct video referenced by the dataset. Failures are
    /// kept per video so that only the affected questions fail.
    pub fn load_videos(&self) -> BTreeMap<String, std::result::Result<VideoSource, String>> {
        let mut out = BTreeMap::new();
        for item in &self.items {
            if out.contains_key(&item.video) {
                continue;
            }
            let loaded = open_video(&self.video_path(&item.video)).map_err(|e| e.to_string());
            out.insert(item.video.clone(), loaded);
        }
        out
    }
}

/// Opens a video directory or a bare feature file.
pub fn open_video(path: &Path) -> Result<VideoSource> {
    if path.is_dir() {
        VideoSource::open(path)
    } else {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        VideoSource::from_parts(id, path.to_path_buf(), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, lines: &[&str]) -> PathBuf {
        let p = dir.join("qa.jsonl");
        std::fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    const A: &str = r#"{"id":"a","video":"v","question":"q?","options":["A. x","B. y"],"answer":"B"}"#;
    const B: &str = r#"{"id":"b","video":"v","question":"q?","options":["A. x","B. y","C. z"]}"#;

    #[test]
    fn loads_valid_file() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(write(dir.path(), &[A, "", B])).unwrap();
        assert_eq!(ds.items.len(), 2);
        assert_eq!(ds.name, "qa");
        assert_eq!(ds.items[0].gold, Some('B'));
        assert_eq!(ds.items[1].options[2].text, "z");
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(write(dir.path(), &[A, A])).unwrap_err();
        assert!(matches!(&err, Error::InvariantViolation(m) if m.contains("duplicate item id a") && m.contains(":2:")));
    }

    #[test]
    fn letter_gap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let gap = r#"{"id":"g","video":"v","question":"q","options":["A. x","C. y"]}"#;
        assert!(matches!(
            load_dataset(write(dir.path(), &[gap])),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(write(dir.path(), &[A, "{not json"])).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn subtitles_from_file_or_inline() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("subs.txt"), "hello from a file").unwrap();
        let f = r#"{"id":"f","video":"v","question":"q","options":["A. x","B. y"],"subtitles":"subs.txt"}"#;
        let t = r#"{"id":"t","video":"v","question":"q","options":["A. x","B. y"],"subtitles":"inline words"}"#;
        let ds = load_dataset(write(dir.path(), &[f, t])).unwrap();
        assert_eq!(ds.items[0].subtitles.as_deref(), Some("hello from a file"));
        assert_eq!(ds.items[1].subtitles.as_deref(), Some("inline words"));
    }

    #[test]
    fn option_parsing() {
        assert_eq!(parse_option("D. four").unwrap().letter, 'D');
        assert_eq!(parse_option("E) five").unwrap().text, "five");
        assert!(parse_option("four").is_none());
        assert!(parse_option("").is_none());
        assert_eq!(parse_letter("(C)"), Some('C'));
        assert_eq!(parse_letter("CD"), None);
    }
}
