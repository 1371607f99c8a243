use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnswerPath, Verdict};
use crate::orchestrator::{AgentConfig, TraceEvent};

/// One line of a trace file: everything that happened for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTrace {
    pub id: String,
    pub video: String,
    pub gold: Option<char>,
    pub config: AgentConfig,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub elapsed_ms: u64,
    pub events: Vec<TraceEvent>,
}

impl QuestionTrace {
    pub fn is_correct(&self) -> bool {
        matches!((&self.verdict, self.gold), (Some(v), Some(g)) if v.answer == g)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCounts {
    pub global: usize,
    pub chain: usize,
    pub vote: usize,
    /// Questions aborted by a provider, parse or input error.
    pub failed: usize,
}

impl PathCounts {
    pub fn sum(&self) -> usize {
        self.global + self.chain + self.vote + self.failed
    }
}

/// The deterministic part of a run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub total: usize,
    /// Questions that carry a gold answer.
    pub scored: usize,
    pub correct: usize,
    /// `correct / total`; failed and unscored questions count as wrong.
    pub accuracy: f64,
    pub paths: PathCounts,
    /// Averages over answered questions.
    pub mean_frames_used: f64,
    pub mean_rounds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTiming {
    pub id: String,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    #[serde(flatten)]
    pub scores: Scores,
    pub mean_seconds_per_question: f64,
    pub timings: Vec<QuestionTiming>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl RunReport {
    /// Scores a run from its traces alone.
    pub fn from_traces(dataset: impl Into<String>, traces: &[QuestionTrace]) -> Self {
        let mut paths = PathCounts::default();
        for t in traces {
            match t.verdict.as_ref().map(|v| v.path) {
                Some(AnswerPath::Global) => paths.global += 1,
                Some(AnswerPath::Chain) => paths.chain += 1,
                Some(AnswerPath::Vote) => paths.vote += 1,
                None => paths.failed += 1,
            }
        }
        let total = traces.len();
        let correct = traces.iter().filter(|t| t.is_correct()).count();
        let answered = || traces.iter().filter_map(|t| t.verdict.as_ref());
        let scores = Scores {
            total,
            scored: traces.iter().filter(|t| t.gold.is_some()).count(),
            correct,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            paths,
            mean_frames_used: mean(answered().map(|v| v.frames_used as f64)),
            mean_rounds: mean(answered().map(|v| v.rounds.len() as f64)),
        };
        Self {
            dataset: dataset.into(),
            scores,
            mean_seconds_per_question: mean(traces.iter().map(|t| t.elapsed_ms as f64 / 1000.0)),
            timings: traces
                .iter()
                .map(|t| QuestionTiming {
                    id: t.id.clone(),
                    elapsed_ms: t.elapsed_ms,
                })
                .collect(),
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scores;
        writeln!(f, "dataset            {}", self.dataset)?;
        writeln!(f, "questions          {} ({} with gold)", s.total, s.scored)?;
        writeln!(f, "correct            {}", s.correct)?;
        writeln!(f, "accuracy           {:.4}", s.accuracy)?;
        writeln!(
            f,
            "paths              global {}  chain {}  vote {}  failed {}",
            s.paths.global, s.paths.chain, s.paths.vote, s.paths.failed
        )?;
        writeln!(f, "mean frames used   {:.2}", s.mean_frames_used)?;
        writeln!(f, "mean rounds        {:.2}", s.mean_rounds)?;
        write!(f, "mean seconds/q     {:.3}", self.mean_seconds_per_question)
    }
}

pub fn write_trace(path: impl AsRef<Path>, traces: &[QuestionTrace]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<QuestionTrace>> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut traces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        traces.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Confidence, RoundRecord};

    fn trace(id: &str, gold: Option<char>, verdict: Option<(char, AnswerPath, usize)>) -> QuestionTrace {
        let round = RoundRecord {
            round: 1,
            key_info: String::new(),
            candidates: vec![],
            new_frames: vec![],
            answer: 'A',
            reason: String::new(),
            confidence: Confidence::new(1).unwrap(),
        };
        QuestionTrace {
            id: id.into(),
            video: "v".into(),
            gold,
            config: AgentConfig::default(),
            verdict: verdict.map(|(answer, path, rounds)| Verdict {
                answer,
                rounds: vec![round.clone(); rounds],
                path,
                frames_used: 10 * rounds,
            }),
            error: None,
            elapsed_ms: 1000,
            events: vec![],
        }
    }

    #[test]
    fn counting() {
        let traces = vec![
            trace("a", Some('A'), Some(('A', AnswerPath::Chain, 1))),
            trace("b", Some('B'), Some(('B', AnswerPath::Vote, 3))),
            trace("c", Some('C'), Some(('C', AnswerPath::Chain, 2))),
            trace("d", Some('D'), Some(('A', AnswerPath::Vote, 3))),
        ];
        let r = RunReport::from_traces("t", &traces);
        assert_eq!(r.scores.accuracy, 0.75);
        assert_eq!(r.scores.paths.sum(), 4);
        assert_eq!(r.scores.mean_rounds, 2.25);
        assert_eq!(r.mean_seconds_per_question, 1.0);
    }

    #[test]
    fn global_and_failed_paths() {
        let traces = vec![
            trace("a", Some('A'), Some(('A', AnswerPath::Global, 0))),
            trace("b", Some('A'), Some(('A', AnswerPath::Global, 0))),
            trace("c", None, None),
        ];
        let r = RunReport::from_traces("t", &traces);
        let p = r.scores.paths;
        assert_eq!((p.global, p.chain, p.vote, p.failed), (2, 0, 0, 1));
        assert_eq!((r.scores.scored, r.scores.correct), (2, 2));
        assert_eq!(r.scores.mean_rounds, 0.0);
        assert!(r.to_string().contains("accuracy           0.6667"));
    }

    #[test]
    fn trace_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let traces = vec![trace("a", Some('A'), Some(('B', AnswerPath::Vote, 3))), trace("b", None, None)];
        write_trace(&p, &traces).unwrap();
        assert_eq!(read_trace(&p).unwrap(), traces);
    }
}
