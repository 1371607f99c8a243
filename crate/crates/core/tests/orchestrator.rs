use shotchain::frames::VideoSource;
use shotchain::harness::synthetic::{scene_direction, scene_video};
use shotchain::model::{validate_shot_set, AnswerPath, FrameSet, QaItem};
use shotchain::orchestrator::{Agent, AgentConfig, AgentState, GlanceOutcome, TraceEvent};
use shotchain::providers::scripted::{ChatRule, EmbeddingRule, ScriptedRules};
use shotchain::providers::{PromptKind, ScriptedProvider};

fn video(len: usize) -> VideoSource {
    VideoSource::from_features("v", scene_video(len, 8, 6.min(len), 0.05, 3).unwrap())
}

fn qa() -> QaItem {
    QaItem::new(
        "q",
        "v",
        "What colour is the car?",
        QaItem::lettered(["red", "blue", "green", "black"]),
        Some('B'),
        None,
    )
    .unwrap()
}

/// Chain path with the given per-round answers and confidences.
fn chain_rules(answers: &[char], confidences: &[u8]) -> ScriptedRules {
    let mut rules = vec![ChatRule::reply(PromptKind::GlanceDecision, "No.")];
    for (i, (a, c)) in answers.iter().zip(confidences).enumerate() {
        let r = i as u32 + 1;
        rules.push(ChatRule::reply(PromptKind::Answer, a.to_string()).in_round(r));
        rules.push(ChatRule::reply(PromptKind::Confidence, format!("{{'confidence': '{c}'}}")).in_round(r));
    }
    rules.push(ChatRule::reply(PromptKind::KeyInfoInitial, "locate the scene with the red car"));
    rules.push(ChatRule::reply(PromptKind::KeyInfoUpdate, "look closer at the car"));
    rules.push(ChatRule::reply(PromptKind::Reason, "the car is visible"));
    ScriptedRules {
        rules,
        embeddings: vec![EmbeddingRule {
            text: None,
            contains: Some("red car".into()),
            vector: scene_direction(8, 3),
        }],
        default_embedding: Some(scene_direction(8, 4)),
    }
}

fn prompts(trace: &[TraceEvent], kind: PromptKind) -> Vec<String> {
    trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Exchange { kind: k, prompt, .. } if *k == kind => Some(prompt.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn glance_yes_answers_from_32_frames() {
    let p = ScriptedProvider::new(ScriptedRules {
        rules: vec![
            ChatRule::reply(PromptKind::GlanceDecision, "Yes"),
            ChatRule::reply(PromptKind::Answer, "C"),
        ],
        ..Default::default()
    });
    let cfg = AgentConfig::default();
    let agent = Agent::new(&cfg, &p, &p);
    let mut trace = Vec::new();
    match agent.glance(&video(360), &qa(), &mut trace).unwrap() {
        GlanceOutcome::GlobalAnswer { answer, frames } => {
            assert_eq!(answer, 'C');
            assert_eq!(frames.len(), 32);
        }
        other => panic!("expected a global answer, got {other:?}"),
    }
    let run = agent.run_question(&video(360), &qa());
    let v = run.verdict.unwrap();
    assert_eq!((v.path, v.rounds.len(), v.frames_used), (AnswerPath::Global, 0, 32));
}

#[test]
fn glance_no_proceeds_and_short_videos_use_every_frame() {
    let p = ScriptedProvider::new(chain_rules(&['A'], &[3]));
    let cfg = AgentConfig::default();
    let agent = Agent::new(&cfg, &p, &p);
    let mut trace = Vec::new();
    let out = agent.glance(&video(3), &qa(), &mut trace).unwrap();
    assert_eq!(out, GlanceOutcome::ProceedToChain { glance_frames: vec![0, 1, 2] });
}

#[test]
fn first_round_splits_whole_video_into_six() {
    let p = ScriptedProvider::new(chain_rules(&['B'], &[1]));
    let cfg = AgentConfig::default();
    let agent = Agent::new(&cfg, &p, &p);
    let v = video(360);
    let state = AgentState::initial(360, vec![45, 135, 225, 315]).unwrap();
    let mut trace = Vec::new();
    let key = agent.summarize_key_info(&v, &qa(), &state, &mut trace).unwrap();
    assert_eq!(key, "locate the scene with the red car");

    let (record, next) = agent.run_round(&v, &qa(), &state, &mut trace).unwrap();
    assert_eq!(next.shot_set.len(), 6);
    assert!(validate_shot_set(&next.shot_set).is_ok());
    assert_eq!(record.new_frames.len(), 16);
    assert_eq!(next.frame_set.len(), 16);
    // the query points at scene 3, which spans frames 180..240
    assert!(record.new_frames.iter().all(|f| (180..240).contains(f)));
}

#[test]
fn later_rounds_grow_by_at_most_32_frames() {
    let p = ScriptedProvider::new(chain_rules(&['A', 'A', 'A'], &[1, 1, 1]));
    let cfg = AgentConfig::default();
    let agent = Agent::new(&cfg, &p, &p);
    let v = video(360);
    let mut state = AgentState::initial(360, vec![45, 135, 225, 315]).unwrap();
    let mut trace = Vec::new();
    let mut prev = FrameSet::new();
    for round in 1..=3 {
        let (record, next) = agent.run_round(&v, &qa(), &state, &mut trace).unwrap();
        assert!(prev.is_subset(&next.frame_set));
        assert!(next.frame_set.len() <= cfg.frame_budget(round));
        if round > 1 {
            assert!(record.candidates.len() <= 2);
            assert!(record.new_frames.len() <= 32);
        }
        assert!(validate_shot_set(&next.shot_set).is_ok());
        prev = next.frame_set.clone();
        state = next;
    }
    assert!(agent.run_round(&v, &qa(), &state, &mut trace).is_err());

    let updates = prompts(&trace, PromptKind::KeyInfoUpdate);
    assert_eq!(updates.len(), 2);
    assert!(updates[0].contains("Round 1 Choice: A"));
    assert!(updates[1].contains("Round 1 Key Info:") && updates[1].contains("Round 2 Reason:"));
}

#[test]
fn confident_first_round_stops() {
    let p = ScriptedProvider::new(chain_rules(&['B'], &[3]));
    let cfg = AgentConfig::default();
    let run = Agent::new(&cfg, &p, &p).run_question(&video(360), &qa());
    let v = run.verdict.unwrap();
    assert_eq!((v.answer, v.path, v.rounds.len()), ('B', AnswerPath::Chain, 1));
    assert!(p.calls().iter().all(|c| c.round <= 1));
}

#[test]
fn three_unsure_rounds_vote() {
    let p = ScriptedProvider::new(chain_rules(&['B', 'B', 'C'], &[1, 1, 1]));
    let cfg = AgentConfig::default();
    let run = Agent::new(&cfg, &p, &p).run_question(&video(360), &qa());
    let v = run.verdict.unwrap();
    assert_eq!((v.answer, v.path, v.rounds.len()), ('B', AnswerPath::Vote, 3));
    assert!(v.frames_used <= 80);
}

#[test]
fn degenerate_short_video_completes() {
    let p = ScriptedProvider::new(chain_rules(&['A', 'A', 'D'], &[1, 2, 1]));
    let cfg = AgentConfig::default();
    let v = VideoSource::from_features("tiny", scene_video(5, 8, 2, 0.0, 1).unwrap());
    let run = Agent::new(&cfg, &p, &p).run_question(&v, &qa());
    assert!(run.error.is_none(), "{:?}", run.error);
    let verdict = run.verdict.unwrap();
    assert_eq!(verdict.rounds.len(), 3);
    assert!(verdict.frames_used <= 5);
    let shots = run.trace.iter().find_map(|e| match e {
        TraceEvent::ShotSet { round: 1, shots, .. } => Some(shots.len()),
        _ => None,
    });
    assert!(shots.unwrap() < 6);
}

#[test]
fn unparseable_reply_is_asked_once_more() {
    let mut rules = chain_rules(&['C'], &[3]);
    rules.rules.insert(
        0,
        ChatRule {
            attempt: Some(0),
            ..ChatRule::reply(PromptKind::Answer, "hmm, hard to say")
        },
    );
    let p = ScriptedProvider::new(rules);
    let cfg = AgentConfig::default();
    let run = Agent::new(&cfg, &p, &p).run_question(&video(60), &qa());
    assert_eq!(run.verdict.unwrap().answer, 'C');
    let answers: Vec<u32> = p
        .calls()
        .iter()
        .filter(|c| c.kind == PromptKind::Answer)
        .map(|c| c.attempt)
        .collect();
    assert_eq!(answers, vec![0, 1]);

    let always_bad = ScriptedProvider::new(ScriptedRules {
        rules: vec![ChatRule {
            kind: Some(PromptKind::Confidence),
            ..ChatRule::reply(PromptKind::Confidence, "very sure")
        }]
        .into_iter()
        .chain(chain_rules(&['C'], &[3]).rules)
        .collect(),
        ..chain_rules(&['C'], &[3])
    });
    let run = Agent::new(&cfg, &always_bad, &always_bad).run_question(&video(60), &qa());
    assert!(run.verdict.is_none());
    assert!(run.error.unwrap().contains("confidence"));
}

#[test]
fn provider_failure_is_recorded() {
    let rules = ScriptedRules {
        rules: vec![ChatRule {
            kind: Some(PromptKind::Reason),
            error: Some(shotchain::providers::scripted::SimulatedError::Auth),
            ..Default::default()
        }]
        .into_iter()
        .chain(chain_rules(&['C'], &[3]).rules)
        .collect(),
        ..chain_rules(&['C'], &[3])
    };
    let p = ScriptedProvider::new(rules);
    let cfg = AgentConfig::default();
    let run = Agent::new(&cfg, &p, &p).run_question(&video(60), &qa());
    assert!(run.verdict.is_none());
    assert!(run.trace.iter().any(|e| matches!(e, TraceEvent::Exchange { error: Some(_), .. })));
}
