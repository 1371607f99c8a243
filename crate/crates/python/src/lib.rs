//! Python bindings for the shotchain engine.
//!
//! ```python
//! import shotchain_py as sc
//! m = sc.FeatureMatrix([[0.0], [0.1], [5.0], [5.1]])
//! [ (s.start, s.end) for s in sc.partition_shot(m, 0, 3, k=2) ]   # [(0, 0), (1, 3)]
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};
use serde::de::DeserializeOwned;
use serde::Serialize;

use shotchain::frames::{merge_with_diversity as merge_frames, read_feature_file, sample_uniform as sample, write_feature_file};
use shotchain::harness::{self, DatasetRecord};
use shotchain::model::{self, Confidence, FrameSet, RoundRecord, Shot, ShotId, ShotIdGen, ShotSet};
use shotchain::orchestrator::{Agent, AgentConfig};
use shotchain::partition::{self, PartitionOptions};
use shotchain::providers::{self, GlanceDecision, PromptContext, PromptKind, ScriptedProvider};
use shotchain::retrieval;

create_exception!(shotchain_py, ShotchainError, PyException);

fn err(e: shotchain::Error) -> PyErr {
    ShotchainError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn agent_config(config: Option<&Bound<'_, PyDict>>) -> PyResult<AgentConfig> {
    let cfg: AgentConfig = match config {
        Some(d) => from_py(d.as_any())?,
        None => AgentConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Per-second frame features, one row per second.
#[pyclass(name = "FeatureMatrix", frozen)]
struct PyFeatureMatrix(model::FeatureMatrix);

#[pymethods]
impl PyFeatureMatrix {
    #[new]
    #[pyo3(signature = (rows, fps = 1.0))]
    fn new(rows: Vec<Vec<f32>>, fps: f32) -> PyResult<Self> {
        let m = model::FeatureMatrix::from_rows(&rows).map_err(err)?;
        let m = model::FeatureMatrix::with_fps(m.dim(), m.as_slice().to_vec(), fps).map_err(err)?;
        Ok(Self(m))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        read_feature_file(path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_feature_file(path, &self.0).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn count(&self) -> usize {
        self.0.count()
    }

    #[getter]
    fn fps(&self) -> f32 {
        self.0.fps()
    }

    fn row(&self, t: usize) -> PyResult<Vec<f32>> {
        if t >= self.0.count() {
            return Err(PyValueError::new_err(format!("row {t} out of range")));
        }
        Ok(self.0.row(t).to_vec())
    }

    fn to_rows(&self) -> Vec<Vec<f32>> {
        (0..self.0.count()).map(|t| self.0.row(t).to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.count()
    }

    fn __repr__(&self) -> String {
        format!("FeatureMatrix(count={}, dim={}, fps={})", self.0.count(), self.0.dim(), self.0.fps())
    }
}

/// An inclusive frame interval.
#[pyclass(name = "Shot", frozen, eq)]
#[derive(PartialEq)]
struct PyShot(Shot);

#[pymethods]
impl PyShot {
    #[new]
    #[pyo3(signature = (id, start, end))]
    fn new(id: u64, start: usize, end: usize) -> PyResult<Self> {
        if start > end {
            return Err(PyValueError::new_err(format!("shot start {start} is after its end {end}")));
        }
        Ok(Self(Shot {
            id: ShotId(id),
            start,
            end,
            depth: 0,
            parent: None,
        }))
    }

    #[getter]
    fn id(&self) -> u64 {
        self.0.id.0
    }

    #[getter]
    fn start(&self) -> usize {
        self.0.start
    }

    #[getter]
    fn end(&self) -> usize {
        self.0.end
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.0.depth
    }

    #[getter]
    fn parent(&self) -> Option<u64> {
        self.0.parent.map(|p| p.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Shot(id={}, start={}, end={})", self.0.id.0, self.0.start, self.0.end)
    }
}

fn shots_of(shots: &[PyRef<'_, PyShot>]) -> Vec<Shot> {
    shots.iter().map(|s| s.0).collect()
}

/// Splits frames `start..=end` into subshots.
#[pyfunction]
#[pyo3(signature = (features, start, end, k, seed = 42, normalize = false))]
fn partition_shot(
    features: &PyFeatureMatrix,
    start: usize,
    end: usize,
    k: usize,
    seed: u64,
    normalize: bool,
) -> PyResult<Vec<PyShot>> {
    let mut ids = ShotIdGen::new();
    let parent = PyShot::new(ids.next_id().0, start, end)?.0;
    let opts = PartitionOptions {
        normalize,
        ..Default::default()
    };
    let subs = partition::partition_shot_with(&parent, &features.0, k, seed, &mut ids, &opts).map_err(err)?;
    Ok(subs.into_iter().map(PyShot).collect())
}

/// Key frames of a k-means clustering of frames `start..=end`, in time order.
#[pyfunction]
#[pyo3(signature = (features, start, end, k, seed = 42))]
fn key_frames(features: &PyFeatureMatrix, start: usize, end: usize, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let shot = PyShot::new(0, start, end)?.0;
    let clustering = partition::kmeans(&features.0, &shot, k, seed).map_err(err)?;
    Ok(partition::select_key_frames(&features.0, &clustering).indices)
}

#[pyfunction]
fn find_boundary(features: &PyFeatureMatrix, left: usize, right: usize) -> PyResult<usize> {
    partition::find_boundary(&features.0, left, right).map_err(err)
}

/// Checks that `shots` partition `0..video_len`; returns the violations.
#[pyfunction]
fn validate_shot_set(shots: Vec<PyRef<'_, PyShot>>, video_len: usize) -> Vec<String> {
    let set = ShotSet {
        shots: shots_of(&shots),
        video_len,
    };
    model::validate_shot_set(&set)
        .violations
        .iter()
        .map(ToString::to_string)
        .collect()
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    retrieval::cosine_similarity(&a, &b).map_err(err)
}

/// `(shot id, score)` pairs, best first.
#[pyfunction]
#[pyo3(signature = (query, shots, features, n_frames = 16))]
fn rank_shots(
    query: Vec<f64>,
    shots: Vec<PyRef<'_, PyShot>>,
    features: &PyFeatureMatrix,
    n_frames: usize,
) -> PyResult<Vec<(u64, f64)>> {
    let set = ShotSet::new(shots_of(&shots), features.0.count()).map_err(err)?;
    let ranked = retrieval::rank_shots(&query, &set, &features.0, n_frames).map_err(err)?;
    Ok(ranked.iter().map(|r| (r.shot.0, r.score)).collect())
}

#[pyfunction]
fn sample_uniform(start: usize, end: usize, n: usize) -> PyResult<Vec<usize>> {
    Ok(sample(&PyShot::new(0, start, end)?.0, n))
}

#[pyfunction]
fn merge_with_diversity(existing: BTreeSet<usize>, new: Vec<usize>, start: usize, end: usize) -> PyResult<Vec<usize>> {
    let shot = PyShot::new(0, start, end)?.0;
    let existing: FrameSet = existing.into_iter().collect();
    Ok(merge_frames(&existing, &new, &shot).to_vec())
}

fn prompt_kind(name: &str) -> PyResult<PromptKind> {
    PromptKind::ALL
        .into_iter()
        .find(|k| k.as_str() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown prompt kind {name:?}")))
}

/// Renders one dialogue template. `history` holds `(key_info, choice,
/// reason)` triples, one per earlier round.
#[pyfunction]
#[pyo3(signature = (kind, question, options, subtitles = None, key_info = None, choice = None, reason = None, history = None))]
#[allow(clippy::too_many_arguments)]
fn render_prompt(
    kind: &str,
    question: &str,
    options: Vec<String>,
    subtitles: Option<&str>,
    key_info: Option<&str>,
    choice: Option<char>,
    reason: Option<&str>,
    history: Option<Vec<(String, char, String)>>,
) -> PyResult<String> {
    let options = model::QaItem::lettered(options);
    let history: Vec<RoundRecord> = history
        .unwrap_or_default()
        .into_iter()
        .zip(1..)
        .map(|((key_info, answer, reason), round)| RoundRecord {
            round,
            key_info,
            candidates: Vec::new(),
            new_frames: Vec::new(),
            answer,
            reason,
            confidence: Confidence::new(1).expect("valid level"),
        })
        .collect();
    let ctx = PromptContext {
        question: Some(question),
        options: &options,
        subtitles,
        key_info,
        history: &history,
        choice,
        reason,
    };
    providers::render_prompt(prompt_kind(kind)?, &ctx).map_err(err)
}

/// `"global"` for a yes (watch everything), `"local"` for a no.
#[pyfunction]
fn parse_glance_decision(text: &str) -> PyResult<&'static str> {
    Ok(match providers::parse_glance_decision(text).map_err(err)? {
        GlanceDecision::Global => "global",
        GlanceDecision::Local => "local",
    })
}

#[pyfunction]
#[pyo3(signature = (text, letters = "ABCD"))]
fn parse_answer_letter(text: &str, letters: &str) -> PyResult<char> {
    let allowed: Vec<char> = letters.chars().collect();
    providers::parse_answer_letter(text, &allowed).map_err(err)
}

#[pyfunction]
fn parse_confidence(text: &str) -> PyResult<u8> {
    providers::parse_confidence(text).map(Confidence::level).map_err(err)
}

#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &AgentConfig::default())
}

/// Runs a question file against a scripted rule file and returns the report.
#[pyfunction]
#[pyo3(signature = (dataset, scripted, parallelism = 1, config = None, trace = None))]
fn run_benchmark<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    scripted: PathBuf,
    parallelism: usize,
    config: Option<&Bound<'py, PyDict>>,
    trace: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = agent_config(config)?;
    let ds = harness::load_dataset(&dataset).map_err(err)?;
    let provider = ScriptedProvider::from_file(&scripted).map_err(err)?;
    let (report, traces) = py
        .detach(|| harness::run_benchmark(&ds, &cfg, &provider, &provider, parallelism))
        .map_err(err)?;
    if let Some(path) = trace {
        harness::write_trace(path, &traces).map_err(err)?;
    }
    to_py(py, &report)
}

/// Answers one question with a scripted rule file. Returns a dict with
/// `verdict`, `error` and `trace`.
#[pyfunction]
#[pyo3(signature = (video, question, options, scripted, subtitles = None, config = None))]
fn ask<'py>(
    py: Python<'py>,
    video: PathBuf,
    question: String,
    options: Vec<String>,
    scripted: PathBuf,
    subtitles: Option<String>,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = agent_config(config)?;
    let source = harness::open_video(&video).map_err(err)?;
    let item = DatasetRecord {
        id: "ask".into(),
        video: video.display().to_string(),
        question,
        options,
        answer: None,
        subtitles,
    }
    .into_item(std::path::Path::new("."))
    .map_err(err)?;
    let provider = ScriptedProvider::from_file(&scripted).map_err(err)?;
    let run = py.detach(|| Agent::new(&cfg, &provider, &provider).run_question(&source, &item));
    to_py(py, &run)
}

#[pymodule]
fn shotchain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ShotchainError", m.py().get_type::<ShotchainError>())?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyShot>()?;
    m.add_function(wrap_pyfunction!(partition_shot, m)?)?;
    m.add_function(wrap_pyfunction!(key_frames, m)?)?;
    m.add_function(wrap_pyfunction!(find_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(validate_shot_set, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(rank_shots, m)?)?;
    m.add_function(wrap_pyfunction!(sample_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(merge_with_diversity, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_glance_decision, m)?)?;
    m.add_function(wrap_pyfunction!(parse_answer_letter, m)?)?;
    m.add_function(wrap_pyfunction!(parse_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(ask, m)?)?;
    Ok(())
}
