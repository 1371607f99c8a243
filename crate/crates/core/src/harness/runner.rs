use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::frames::VideoSource;
use crate::model::QaItem;
use crate::orchestrator::{Agent, AgentConfig, QuestionRun};
use crate::providers::{ChatProvider, EmbeddingProvider};

use super::dataset::Dataset;
use super::report::{QuestionTrace, RunReport};

fn to_trace(item: &QaItem, cfg: &AgentConfig, run: QuestionRun) -> QuestionTrace {
    QuestionTrace {
        id: item.id.clone(),
        video: item.video.clone(),
        gold: item.gold,
        config: cfg.clone(),
        verdict: run.verdict,
        error: run.error,
        elapsed_ms: run.elapsed_ms,
        events: run.trace,
    }
}

fn failed_trace(item: &QaItem, cfg: &AgentConfig, error: String) -> QuestionTrace {
    to_trace(
        item,
        cfg,
        QuestionRun {
            verdict: None,
            error: Some(error),
            trace: Vec::new(),
            elapsed_ms: 0,
        },
    )
}

/// Answers every question of `dataset` on up to `parallelism` worker
/// threads. Traces come back in dataset order; failed questions are
/// recorded and scored as wrong.
pub fn run_benchmark(
    dataset: &Dataset,
    cfg: &AgentConfig,
    chat: &dyn ChatProvider,
    embed: &dyn EmbeddingProvider,
    parallelism: usize,
) -> Result<(RunReport, Vec<QuestionTrace>)> {
    cfg.validate()?;
    if parallelism == 0 {
        return Err(Error::InvalidInput("parallelism must be at least 1".into()));
    }
    let videos: BTreeMap<String, std::result::Result<VideoSource, String>> = dataset.load_videos();
    let agent = Agent::new(cfg, chat, embed);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<QuestionTrace>>> = Mutex::new(vec![None; dataset.items.len()]);

    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(dataset.items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = dataset.items.get(i) else { break };
                let trace = match &videos[&item.video] {
                    Ok(video) => to_trace(item, cfg, agent.run_question(video, item)),
                    Err(e) => failed_trace(item, cfg, format!("video {}: {e}", item.video)),
                };
                slots.lock().expect("result slots poisoned")[i] = Some(trace);
            });
        }
    });

    let traces: Vec<QuestionTrace> = slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|t| t.expect("every question produces a trace"))
        .collect();
    Ok((RunReport::from_traces(&dataset.name, &traces), traces))
}
