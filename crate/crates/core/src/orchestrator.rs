//! The chain-of-shot loop: glance, then rounds of key-info summary, shot
//! selection, shot partition, answering and confidence reflection, ending
//! on a confident round or a majority vote.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{load_frame_images, merge_with_diversity, sample_uniform, VideoSource};
use crate::model::{
    AnswerPath, Confidence, FrameSet, QaItem, RoundRecord, Shot, ShotId, ShotIdGen, ShotSet, Verdict,
};
use crate::partition::{partition_shot_with, KMeansOptions, PartitionOptions, DEFAULT_MAX_ITER};
use crate::providers::{
    embed_text, parse_answer_letter, parse_confidence, parse_glance_decision, render_prompt, ChatProvider,
    ChatRequest, EmbeddingProvider, GlanceDecision, PromptContext, PromptKind,
};
use crate::retrieval::{rank_shots, select_candidates, select_initial_subshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub glance_frames: usize,
    pub global_frames: usize,
    pub init_top: usize,
    pub init_frames: usize,
    pub round_top_n: usize,
    pub round_subshots: usize,
    pub frames_per_subshot: usize,
    pub k_round1: usize,
    pub k_later: usize,
    pub sim_threshold: f64,
    pub confident_level: u8,
    pub max_rounds: u32,
    pub retrieval_frames_per_shot: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub normalize_features: bool,
    pub use_subtitles: bool,
    /// Subtitles are cut to this many characters.
    pub subtitle_budget: usize,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            glance_frames: 4,
            global_frames: 32,
            init_top: 1,
            init_frames: 16,
            round_top_n: 2,
            round_subshots: 2,
            frames_per_subshot: 8,
            k_round1: 6,
            k_later: 2,
            sim_threshold: 0.8,
            confident_level: 3,
            max_rounds: 3,
            retrieval_frames_per_shot: 16,
            seed: 42,
            kmeans_restarts: crate::partition::DEFAULT_RESTARTS,
            normalize_features: false,
            use_subtitles: true,
            subtitle_budget: 4000,
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("glance_frames", self.glance_frames),
            ("global_frames", self.global_frames),
            ("init_top", self.init_top),
            ("init_frames", self.init_frames),
            ("round_top_n", self.round_top_n),
            ("round_subshots", self.round_subshots),
            ("frames_per_subshot", self.frames_per_subshot),
            ("k_round1", self.k_round1),
            ("k_later", self.k_later),
            ("max_rounds", self.max_rounds as usize),
            ("retrieval_frames_per_shot", self.retrieval_frames_per_shot),
            ("kmeans_restarts", self.kmeans_restarts),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if !(-1.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::invalid("sim_threshold must lie in [-1, 1]"));
        }
        if !(2..=3).contains(&self.confident_level) {
            return Err(Error::invalid("confident_level must be 2 or 3"));
        }
        if self.round_subshots != self.k_later {
            return Err(Error::invalid(format!(
                "round_subshots ({}) must equal k_later ({}): later-round candidates are split into k_later subshots",
                self.round_subshots, self.k_later
            )));
        }
        Ok(())
    }

    pub fn partition_options(&self) -> PartitionOptions {
        PartitionOptions {
            kmeans: KMeansOptions {
                max_iter: DEFAULT_MAX_ITER,
                restarts: self.kmeans_restarts,
            },
            normalize: self.normalize_features,
        }
    }

    /// Upper bound on evidence frames after `rounds` chain rounds.
    pub fn frame_budget(&self, rounds: u32) -> usize {
        self.init_top * self.init_frames
            + rounds.saturating_sub(1) as usize * self.round_top_n * self.round_subshots * self.frames_per_subshot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Exchange {
        round: u32,
        kind: PromptKind,
        attempt: u32,
        frames: Vec<usize>,
        prompt: String,
        response: Option<String>,
        error: Option<String>,
        elapsed_ms: u64,
    },
    Glance {
        frames: Vec<usize>,
        decision: GlanceDecision,
    },
    ShotSet {
        round: u32,
        candidates: Vec<ShotId>,
        shots: Vec<Shot>,
    },
    Frames {
        round: u32,
        frames: Vec<usize>,
        new_frames: Vec<usize>,
    },
    Round {
        record: RoundRecord,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GlanceOutcome {
    GlobalAnswer { answer: char, frames: Vec<usize> },
    ProceedToChain { glance_frames: Vec<usize> },
}

/// Everything carried from one round to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub shot_set: ShotSet,
    pub frame_set: FrameSet,
    pub history: Vec<RoundRecord>,
    pub round: u32,
    /// Frames shown at the glance; they stand in for the evidence set when
    /// the first round's key information is summarised.
    pub glance_frames: Vec<usize>,
    pub ids: ShotIdGen,
}

impl AgentState {
    pub fn initial(video_len: usize, glance_frames: Vec<usize>) -> Result<Self> {
        let mut ids = ShotIdGen::new();
        let shot_set = ShotSet::whole_video(video_len, &mut ids)?;
        Ok(Self {
            shot_set,
            frame_set: FrameSet::new(),
            history: Vec::new(),
            round: 0,
            glance_frames,
            ids,
        })
    }
}

/// Outcome of one question: a verdict, or the error that aborted it, plus
/// the full trace either way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRun {
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub trace: Vec<TraceEvent>,
    pub elapsed_ms: u64,
}

pub struct Agent<'a> {
    pub cfg: &'a AgentConfig,
    pub chat: &'a dyn ChatProvider,
    pub embed: &'a dyn EmbeddingProvider,
}

fn truncate_chars(s: &str, budget: usize) -> &str {
    match s.char_indices().nth(budget) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl<'a> Agent<'a> {
    pub fn new(cfg: &'a AgentConfig, chat: &'a dyn ChatProvider, embed: &'a dyn EmbeddingProvider) -> Self {
        Self { cfg, chat, embed }
    }

    fn subtitles<'q>(&self, qa: &'q QaItem) -> Option<&'q str> {
        if !self.cfg.use_subtitles {
            return None;
        }
        qa.subtitles
            .as_deref()
            .map(|s| truncate_chars(s, self.cfg.subtitle_budget))
    }

    fn base_context<'q>(&self, qa: &'q QaItem) -> PromptContext<'q> {
        PromptContext {
            question: Some(&qa.question),
            options: &qa.options,
            subtitles: self.subtitles(qa),
            ..Default::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn exchange(
        &self,
        video: &VideoSource,
        kind: PromptKind,
        round: u32,
        attempt: u32,
        prompt: &str,
        frames: &[usize],
        trace: &mut Vec<TraceEvent>,
    ) -> Result<String> {
        let mut frames = frames.to_vec();
        frames.sort_unstable();
        frames.dedup();
        let started = Instant::now();
        let result = load_frame_images(video, &frames).and_then(|images| {
            self.chat.chat(&ChatRequest {
                kind,
                round,
                attempt,
                prompt_text: prompt.to_string(),
                frames: frames.clone(),
                images,
                temperature: self.cfg.temperature,
                max_tokens: self.cfg.max_tokens,
            })
        });
        trace.push(TraceEvent::Exchange {
            round,
            kind,
            attempt,
            frames,
            prompt: prompt.to_string(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
            elapsed_ms: started.elapsed().as_millis() as u64,
        });
        result
    }

    /// Asks once and, when the reply does not parse, asks exactly once more.
    #[allow(clippy::too_many_arguments)]
    fn ask_parsed<T>(
        &self,
        video: &VideoSource,
        kind: PromptKind,
        round: u32,
        prompt: &str,
        frames: &[usize],
        trace: &mut Vec<TraceEvent>,
        parse: impl Fn(&str) -> Result<T>,
    ) -> Result<T> {
        let first = self.exchange(video, kind, round, 0, prompt, frames, trace)?;
        match parse(&first) {
            Ok(v) => Ok(v),
            Err(_) => {
                let second = self.exchange(video, kind, round, 1, prompt, frames, trace)?;
                parse(&second)
            }
        }
    }

    /// Looks at a handful of frames and decides between answering from a
    /// dense global sample and running the chain.
    pub fn glance(&self, video: &VideoSource, qa: &QaItem, trace: &mut Vec<TraceEvent>) -> Result<GlanceOutcome> {
        let whole = Shot::whole(ShotId(0), video.duration)?;
        let frames = sample_uniform(&whole, self.cfg.glance_frames);
        let ctx = self.base_context(qa);
        let prompt = render_prompt(PromptKind::GlanceDecision, &ctx)?;
        let reply = self.exchange(video, PromptKind::GlanceDecision, 0, 0, &prompt, &frames, trace)?;
        let decision = parse_glance_decision(&reply)?;
        trace.push(TraceEvent::Glance {
            frames: frames.clone(),
            decision,
        });
        match decision {
            GlanceDecision::Local => Ok(GlanceOutcome::ProceedToChain { glance_frames: frames }),
            GlanceDecision::Global => {
                let global = sample_uniform(&whole, self.cfg.global_frames);
                let prompt = render_prompt(PromptKind::Answer, &ctx)?;
                let letters = qa.letters();
                let answer = self.ask_parsed(video, PromptKind::Answer, 0, &prompt, &global, trace, |t| {
                    parse_answer_letter(t, &letters)
                })?;
                Ok(GlanceOutcome::GlobalAnswer { answer, frames: global })
            }
        }
    }

    /// Key information for the round after `state.round`.
    pub fn summarize_key_info(
        &self,
        video: &VideoSource,
        qa: &QaItem,
        state: &AgentState,
        trace: &mut Vec<TraceEvent>,
    ) -> Result<String> {
        let round = state.round + 1;
        let mut ctx = self.base_context(qa);
        let (kind, frames) = if state.history.is_empty() {
            (PromptKind::KeyInfoInitial, state.glance_frames.clone())
        } else {
            ctx.history = &state.history;
            (PromptKind::KeyInfoUpdate, state.frame_set.to_vec())
        };
        let prompt = render_prompt(kind, &ctx)?;
        self.exchange(video, kind, round, 0, &prompt, &frames, trace)
    }

    /// Runs one selection, partition and reflection round.
    pub fn run_round(
        &self,
        video: &VideoSource,
        qa: &QaItem,
        state: &AgentState,
        trace: &mut Vec<TraceEvent>,
    ) -> Result<(RoundRecord, AgentState)> {
        let cfg = self.cfg;
        if state.round >= cfg.max_rounds {
            return Err(Error::invalid(format!("round budget of {} exhausted", cfg.max_rounds)));
        }
        let round = state.round + 1;
        let features = &video.features;
        let popts = cfg.partition_options();
        let mut ids = state.ids.clone();

        let key_info = self.summarize_key_info(video, qa, state, trace)?;
        let query = embed_text(self.embed, &key_info, features.dim())?;

        let first_round = state.history.is_empty();
        let candidates: Vec<ShotId> = if first_round {
            state.shot_set.iter().map(|s| s.id).collect()
        } else {
            let ranked = rank_shots(&query, &state.shot_set, features, cfg.retrieval_frames_per_shot)?;
            select_candidates(&ranked, cfg.sim_threshold, cfg.round_top_n)
        };
        let k = if first_round { cfg.k_round1 } else { cfg.k_later };

        let mut replacements = BTreeMap::new();
        for id in &candidates {
            let shot = state
                .shot_set
                .get(*id)
                .ok_or_else(|| Error::invalid(format!("candidate {id} vanished from the shot set")))?;
            let subs = if shot.is_atomic() {
                vec![*shot]
            } else {
                partition_shot_with(shot, features, k, cfg.seed, &mut ids, &popts)?
            };
            replacements.insert(*id, subs);
        }
        let shot_set = crate::partition::update_shot_set(&state.shot_set, &candidates, &replacements)?;
        trace.push(TraceEvent::ShotSet {
            round,
            candidates: candidates.clone(),
            shots: shot_set.shots.clone(),
        });

        // (subshot, frames to sample from it)
        let sources: Vec<(Shot, usize)> = if first_round {
            let subs: Vec<Shot> = candidates.iter().flat_map(|id| replacements[id].clone()).collect();
            let chosen: Vec<ShotId> = if cfg.init_top == 1 {
                vec![select_initial_subshot(&query, &subs, features, cfg.retrieval_frames_per_shot)?]
            } else {
                let set = ShotSet::new(subs.clone(), shot_set.video_len)?;
                rank_shots(&query, &set, features, cfg.retrieval_frames_per_shot)?
                    .iter()
                    .take(cfg.init_top)
                    .map(|r| r.shot)
                    .collect()
            };
            let by_id: HashMap<ShotId, Shot> = subs.iter().map(|s| (s.id, *s)).collect();
            chosen.iter().map(|id| (by_id[id], cfg.init_frames)).collect()
        } else {
            candidates
                .iter()
                .flat_map(|id| replacements[id].iter().map(|s| (*s, cfg.frames_per_subshot)))
                .collect()
        };

        let mut frame_set = state.frame_set.clone();
        for (shot, n) in &sources {
            frame_set = merge_with_diversity(&frame_set, &sample_uniform(shot, *n), shot);
        }
        let new_frames: Vec<usize> = frame_set.iter().filter(|f| !state.frame_set.contains(*f)).collect();
        let evidence = frame_set.to_vec();
        trace.push(TraceEvent::Frames {
            round,
            frames: evidence.clone(),
            new_frames: new_frames.clone(),
        });

        let letters = qa.letters();
        let mut ctx = self.base_context(qa);
        ctx.key_info = Some(&key_info);
        let prompt = render_prompt(PromptKind::Answer, &ctx)?;
        let answer = self.ask_parsed(video, PromptKind::Answer, round, &prompt, &evidence, trace, |t| {
            parse_answer_letter(t, &letters)
        })?;

        ctx.choice = Some(answer);
        let prompt = render_prompt(PromptKind::Reason, &ctx)?;
        let reason = self.exchange(video, PromptKind::Reason, round, 0, &prompt, &evidence, trace)?;

        ctx.reason = Some(&reason);
        let prompt = render_prompt(PromptKind::Confidence, &ctx)?;
        let confidence = self.ask_parsed(
            video,
            PromptKind::Confidence,
            round,
            &prompt,
            &evidence,
            trace,
            parse_confidence,
        )?;

        let record = RoundRecord {
            round,
            key_info: key_info.clone(),
            candidates,
            new_frames,
            answer,
            reason: reason.clone(),
            confidence,
        };
        trace.push(TraceEvent::Round { record: record.clone() });

        let mut history = state.history.clone();
        history.push(record.clone());
        let next = AgentState {
            shot_set,
            frame_set,
            history,
            round,
            glance_frames: state.glance_frames.clone(),
            ids,
        };
        Ok((record, next))
    }

    /// Answers one question end to end.
    pub fn run_question(&self, video: &VideoSource, qa: &QaItem) -> QuestionRun {
        let started = Instant::now();
        let mut trace = Vec::new();
        let result = self.run_inner(video, qa, &mut trace);
        let elapsed_ms = started.elapsed().as_millis() as u64;
        match result {
            Ok(verdict) => QuestionRun {
                verdict: Some(verdict),
                error: None,
                trace,
                elapsed_ms,
            },
            Err(e) => QuestionRun {
                verdict: None,
                error: Some(e.to_string()),
                trace,
                elapsed_ms,
            },
        }
    }

    fn run_inner(&self, video: &VideoSource, qa: &QaItem, trace: &mut Vec<TraceEvent>) -> Result<Verdict> {
        self.cfg.validate()?;
        qa.validate()?;
        let glance_frames = match self.glance(video, qa, trace)? {
            GlanceOutcome::GlobalAnswer { answer, frames } => {
                return Ok(Verdict {
                    answer,
                    rounds: Vec::new(),
                    path: AnswerPath::Global,
                    frames_used: frames.len(),
                })
            }
            GlanceOutcome::ProceedToChain { glance_frames } => glance_frames,
        };

        let mut state = AgentState::initial(video.duration, glance_frames)?;
        while state.round < self.cfg.max_rounds {
            let (record, next) = self.run_round(video, qa, &state, trace)?;
            state = next;
            if record.confidence.level() >= self.cfg.confident_level {
                break;
            }
        }
        Ok(finalize(&state.history, self.cfg))
    }
}

/// The first confident round's answer, or a majority vote over all rounds.
/// Vote ties go to the answer with the highest confidence, then to the one
/// given most recently.
pub fn finalize(records: &[RoundRecord], cfg: &AgentConfig) -> Verdict {
    assert!(!records.is_empty(), "finalize needs at least one round");
    let frames_used = records
        .iter()
        .flat_map(|r| r.new_frames.iter().copied())
        .collect::<FrameSet>()
        .len();

    if let Some(confident) = records
        .iter()
        .find(|r| r.confidence.level() >= cfg.confident_level)
    {
        let used = records.iter().take_while(|r| r.round <= confident.round).cloned().collect();
        return Verdict {
            answer: confident.answer,
            rounds: used,
            path: AnswerPath::Chain,
            frames_used,
        };
    }

    // answer -> (votes, best confidence, latest round)
    let mut tally: BTreeMap<char, (usize, Confidence, u32)> = BTreeMap::new();
    for r in records {
        let e = tally.entry(r.answer).or_insert((0, r.confidence, r.round));
        e.0 += 1;
        e.1 = e.1.max(r.confidence);
        e.2 = e.2.max(r.round);
    }
    let (answer, _) = tally
        .into_iter()
        .max_by_key(|&(_, key)| key)
        .expect("non-empty tally");
    Verdict {
        answer,
        rounds: records.to_vec(),
        path: AnswerPath::Vote,
        frames_used,
    }
}
