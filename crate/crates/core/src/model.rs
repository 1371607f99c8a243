//! Shared domain types: shots, shot sets, feature matrices, QA items and
//! the per-round reasoning records.
//!
//! All frame indices live on the 1 FPS timeline: frame `t` is the frame
//! sampled at second `t`, and row `t` of a [`FeatureMatrix`] is its
//! embedding.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShotId(pub u64);

impl fmt::Display for ShotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Per-question id allocator. Ids are handed out in increasing order and
/// never reused.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ShotIdGen {
    next: u64,
}

impl ShotIdGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self) -> ShotId {
        let id = ShotId(self.next);
        self.next += 1;
        id
    }
}

/// A contiguous, inclusive interval `[start, end]` of the frame timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub id: ShotId,
    pub start: usize,
    pub end: usize,
    pub depth: u32,
    pub parent: Option<ShotId>,
}

impl Shot {
    /// The depth-0 shot covering a whole video of `video_len` frames.
    pub fn whole(id: ShotId, video_len: usize) -> Result<Self> {
        if video_len == 0 {
            return Err(Error::invalid("video has no frames"));
        }
        Ok(Self {
            id,
            start: 0,
            end: video_len - 1,
            depth: 0,
            parent: None,
        })
    }

    /// A child of `self` spanning `[start, end]`.
    pub fn child(&self, id: ShotId, start: usize, end: usize) -> Self {
        debug_assert!(self.start <= start && start <= end && end <= self.end);
        Self {
            id,
            start,
            end,
            depth: self.depth + 1,
            parent: Some(self.id),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_atomic(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl fmt::Display for Shot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}..{}]", self.id, self.start, self.end)
    }
}

/// An ordered partition of the timeline `[0, video_len - 1]` into shots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub shots: Vec<Shot>,
    pub video_len: usize,
}

impl ShotSet {
    /// Builds a shot set and checks every partition invariant.
    pub fn new(shots: Vec<Shot>, video_len: usize) -> Result<Self> {
        let set = Self { shots, video_len };
        let report = validate_shot_set(&set);
        if report.is_ok() {
            Ok(set)
        } else {
            Err(Error::InvariantViolation(report.to_string()))
        }
    }

    /// The single-shot set used before the first round.
    pub fn whole_video(video_len: usize, ids: &mut ShotIdGen) -> Result<Self> {
        let shot = Shot::whole(ids.next_id(), video_len)?;
        Ok(Self {
            shots: vec![shot],
            video_len,
        })
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn get(&self, id: ShotId) -> Option<&Shot> {
        self.shots.iter().find(|s| s.id == id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Shot> {
        self.shots.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    Inverted { shot: ShotId },
    OutOfRange { shot: ShotId },
    Unsorted { first: ShotId, second: ShotId },
    Overlap { first: ShotId, second: ShotId, frame: usize },
    Gap { after: Option<ShotId>, from: usize, to: usize },
    DuplicateId { shot: ShotId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "shot set is empty"),
            Violation::Inverted { shot } => write!(f, "{shot} has start > end"),
            Violation::OutOfRange { shot } => write!(f, "{shot} extends past the video end"),
            Violation::Unsorted { first, second } => {
                write!(f, "{second} starts before {first}")
            }
            Violation::Overlap {
                first,
                second,
                frame,
            } => write!(f, "overlap at frame {frame} ({first}, {second})"),
            Violation::Gap { after, from, to } => match after {
                Some(id) => write!(f, "gap at frames {from}..{to} after {id}"),
                None => write!(f, "gap at frames {from}..{to} at video start"),
            },
            Violation::DuplicateId { shot } => write!(f, "duplicate shot id {shot}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks that `set` is a sorted, disjoint, exact cover of the timeline and
/// lists every violation found.
pub fn validate_shot_set(set: &ShotSet) -> ValidationReport {
    let mut violations = Vec::new();
    if set.shots.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }

    let mut seen = BTreeSet::new();
    for shot in &set.shots {
        if !seen.insert(shot.id) {
            violations.push(Violation::DuplicateId { shot: shot.id });
        }
        if shot.start > shot.end {
            violations.push(Violation::Inverted { shot: shot.id });
        }
        if shot.end >= set.video_len || shot.start >= set.video_len {
            violations.push(Violation::OutOfRange { shot: shot.id });
        }
    }

    // `covered` is one past the last frame claimed so far.
    let mut covered = 0usize;
    let mut prev: Option<&Shot> = None;
    for shot in &set.shots {
        if let Some(p) = prev {
            if shot.start < p.start {
                violations.push(Violation::Unsorted {
                    first: p.id,
                    second: shot.id,
                });
            }
        }
        if shot.start < covered {
            violations.push(Violation::Overlap {
                first: prev.map(|p| p.id).unwrap_or(shot.id),
                second: shot.id,
                frame: shot.start,
            });
        } else if shot.start > covered {
            violations.push(Violation::Gap {
                after: prev.map(|p| p.id),
                from: covered,
                to: shot.start - 1,
            });
        }
        covered = covered.max(shot.end.saturating_add(1));
        prev = Some(shot);
    }
    if covered < set.video_len {
        violations.push(Violation::Gap {
            after: prev.map(|p| p.id),
            from: covered,
            to: set.video_len - 1,
        });
    }

    ValidationReport { violations }
}

/// Per-frame embeddings on the 1 FPS timeline, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    count: usize,
    fps: f32,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub const DEFAULT_FPS: f32 = 1.0;

    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_fps(dim, data, Self::DEFAULT_FPS)
    }

    pub fn with_fps(dim: usize, data: Vec<f32>, fps: f32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "feature data length {} is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        if !fps.is_finite() || fps <= 0.0 {
            return Err(Error::invalid(format!("invalid fps {fps}")));
        }
        Ok(Self {
            dim,
            count: data.len() / dim,
            fps,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::invalid("ragged feature rows"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn check_shot(&self, shot: &Shot) -> Result<()> {
        if shot.start > shot.end || shot.end >= self.count {
            return Err(Error::invalid(format!(
                "shot {shot} lies outside the {}-frame feature matrix",
                self.count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub letter: char,
    pub text: String,
}

/// One multiple-choice question about a video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub video: String,
    pub question: String,
    pub options: Vec<AnswerOption>,
    pub gold: Option<char>,
    pub subtitles: Option<String>,
}

impl QaItem {
    pub const MIN_OPTIONS: usize = 2;
    pub const MAX_OPTIONS: usize = 5;

    pub fn new(
        id: impl Into<String>,
        video: impl Into<String>,
        question: impl Into<String>,
        options: Vec<AnswerOption>,
        gold: Option<char>,
        subtitles: Option<String>,
    ) -> Result<Self> {
        let item = Self {
            id: id.into(),
            video: video.into(),
            question: question.into(),
            options,
            gold,
            subtitles,
        };
        item.validate()?;
        Ok(item)
    }

    /// Builds options lettered A, B, C, ... from plain texts.
    pub fn lettered<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Vec<AnswerOption> {
        texts
            .into_iter()
            .zip('A'..)
            .map(|(text, letter)| AnswerOption {
                letter,
                text: text.into(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.options.len();
        if !(Self::MIN_OPTIONS..=Self::MAX_OPTIONS).contains(&n) {
            return Err(Error::InvariantViolation(format!(
                "item {}: expected 2 to 5 options, found {n}",
                self.id
            )));
        }
        for (opt, expected) in self.options.iter().zip('A'..) {
            if opt.letter != expected {
                return Err(Error::InvariantViolation(format!(
                    "item {}: option letters must run contiguously from A; found {} where {} was expected",
                    self.id, opt.letter, expected
                )));
            }
        }
        if let Some(g) = self.gold {
            if !self.letters().contains(&g) {
                return Err(Error::InvariantViolation(format!(
                    "item {}: gold answer {g} is not one of the options",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn letters(&self) -> Vec<char> {
        self.options.iter().map(|o| o.letter).collect()
    }
}

/// Self-assessed answer confidence, one of the levels 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Confidence(u8);

impl Confidence {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 3;

    pub fn new(level: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&level) {
            Ok(Self(level))
        } else {
            Err(Error::invalid(format!("confidence {level} outside 1..=3")))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Confidence {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Confidence> for u8 {
    fn from(c: Confidence) -> u8 {
        c.0
    }
}

/// Everything one chain-of-shot round produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub key_info: String,
    pub candidates: Vec<ShotId>,
    pub new_frames: Vec<usize>,
    pub answer: char,
    pub reason: String,
    pub confidence: Confidence,
}

/// The accumulated evidence frames, kept sorted and unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameSet {
    indices: BTreeSet<usize>,
}

impl FrameSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.indices.contains(&frame)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn is_subset(&self, other: &FrameSet) -> bool {
        self.indices.is_subset(&other.indices)
    }

    pub(crate) fn with_added(&self, extra: impl IntoIterator<Item = usize>) -> Self {
        let mut indices = self.indices.clone();
        indices.extend(extra);
        Self { indices }
    }
}

impl FromIterator<usize> for FrameSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self {
            indices: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerPath {
    /// Answered from a uniform sample of the whole video after the glance.
    Global,
    /// A round reached the confidence threshold.
    Chain,
    /// No round was confident; majority vote over all rounds.
    Vote,
}

impl fmt::Display for AnswerPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerPath::Global => "global",
            AnswerPath::Chain => "chain",
            AnswerPath::Vote => "vote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub answer: char,
    pub rounds: Vec<RoundRecord>,
    pub path: AnswerPath,
    pub frames_used: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shot(id: u64, start: usize, end: usize) -> Shot {
        Shot {
            id: ShotId(id),
            start,
            end,
            depth: 1,
            parent: Some(ShotId(0)),
        }
    }

    #[test]
    fn single_shot_partition_is_valid() {
        let set = ShotSet {
            shots: vec![shot(1, 0, 9)],
            video_len: 10,
        };
        assert!(validate_shot_set(&set).is_ok());
    }

    #[test]
    fn exact_cover_is_valid() {
        let set = ShotSet {
            shots: vec![shot(1, 0, 4), shot(2, 5, 9)],
            video_len: 10,
        };
        assert!(validate_shot_set(&set).is_ok());
    }

    #[test]
    fn overlap_is_reported_with_frame() {
        let set = ShotSet {
            shots: vec![shot(1, 0, 5), shot(2, 5, 9)],
            video_len: 10,
        };
        let report = validate_shot_set(&set);
        assert_eq!(
            report.violations,
            vec![Violation::Overlap {
                first: ShotId(1),
                second: ShotId(2),
                frame: 5
            }]
        );
        assert!(report.to_string().contains("overlap at frame 5"));
    }

    #[test]
    fn every_violation_is_listed() {
        let set = ShotSet {
            shots: vec![shot(3, 4, 6), shot(3, 2, 3), shot(4, 9, 12)],
            video_len: 12,
        };
        let report = validate_shot_set(&set);
        let v = &report.violations;
        assert!(v.contains(&Violation::DuplicateId { shot: ShotId(3) }));
        assert!(v.contains(&Violation::OutOfRange { shot: ShotId(4) }));
        assert!(v.iter().any(|x| matches!(x, Violation::Unsorted { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::Gap { from: 0, to: 3, .. })));
    }

    #[test]
    fn trailing_gap_and_empty() {
        let set = ShotSet {
            shots: vec![shot(1, 0, 4)],
            video_len: 10,
        };
        assert_eq!(
            validate_shot_set(&set).violations,
            vec![Violation::Gap {
                after: Some(ShotId(1)),
                from: 5,
                to: 9
            }]
        );
        let empty = ShotSet {
            shots: vec![],
            video_len: 3,
        };
        assert_eq!(validate_shot_set(&empty).violations, vec![Violation::Empty]);
    }

    #[test]
    fn qa_item_rules() {
        let ok = QaItem::new("q", "v", "?", QaItem::lettered(["x", "y", "z"]), Some('C'), None);
        assert!(ok.is_ok());
        let too_few = QaItem::new("q", "v", "?", QaItem::lettered(["x"]), None, None);
        assert!(too_few.is_err());
        let gap = vec![
            AnswerOption { letter: 'A', text: "x".into() },
            AnswerOption { letter: 'C', text: "y".into() },
        ];
        assert!(QaItem::new("q", "v", "?", gap, None, None).is_err());
        let bad_gold = QaItem::new("q", "v", "?", QaItem::lettered(["x", "y"]), Some('D'), None);
        assert!(bad_gold.is_err());
    }

    #[test]
    fn feature_matrix_rejects_non_finite() {
        assert!(FeatureMatrix::new(2, vec![0.0, f32::NAN]).is_err());
        assert!(FeatureMatrix::new(2, vec![0.0, 1.0, 2.0]).is_err());
        let m = FeatureMatrix::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.count(), 2);
        assert_eq!(m.row(1), &[2.0, 3.0]);
    }

    #[test]
    fn confidence_range() {
        assert!(Confidence::new(0).is_err());
        assert!(Confidence::new(4).is_err());
        assert_eq!(Confidence::new(3).unwrap().level(), 3);
        let parsed: std::result::Result<Confidence, _> = serde_json::from_str("5");
        assert!(parsed.is_err());
    }
}
