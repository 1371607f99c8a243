//! Text-to-shot retrieval over mean-pooled frame embeddings.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::sample_uniform;
use crate::model::{FeatureMatrix, Shot, ShotId, ShotSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedShot {
    pub shot: ShotId,
    pub start: usize,
    pub score: f64,
}

/// Mean of up to `n_frames` uniformly sampled rows of `shot`, L2-normalised.
/// A zero mean stays zero.
pub fn aggregate_shot_embedding(features: &FeatureMatrix, shot: &Shot, n_frames: usize) -> Result<Vec<f64>> {
    features.check_shot(shot)?;
    let picks = sample_uniform(shot, n_frames.max(1));
    let mut mean = vec![0.0f64; features.dim()];
    for &f in &picks {
        for (m, &v) in mean.iter_mut().zip(features.row(f)) {
            *m += v as f64;
        }
    }
    let n = picks.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let norm = l2_norm(&mean);
    if norm > 0.0 {
        mean.iter_mut().for_each(|m| *m /= norm);
    }
    Ok(mean)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn by_score_then_start(a: &RankedShot, b: &RankedShot) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.start.cmp(&b.start))
}

fn rank<'a>(
    query: &[f64],
    shots: impl Iterator<Item = &'a Shot>,
    features: &FeatureMatrix,
    n_frames: usize,
) -> Result<Vec<RankedShot>> {
    if query.len() != features.dim() {
        return Err(Error::DimMismatch {
            expected: features.dim(),
            got: query.len(),
        });
    }
    let mut ranked = shots
        .map(|shot| {
            let emb = aggregate_shot_embedding(features, shot, n_frames)?;
            Ok(RankedShot {
                shot: shot.id,
                start: shot.start,
                score: cosine_similarity(query, &emb)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(by_score_then_start);
    Ok(ranked)
}

/// Scores every shot of `set` against the query, best first; earlier shots
/// win ties.
pub fn rank_shots(
    query: &[f64],
    set: &ShotSet,
    features: &FeatureMatrix,
    n_frames: usize,
) -> Result<Vec<RankedShot>> {
    rank(query, set.iter(), features, n_frames)
}

/// Shots scoring at least `threshold`, capped at `top_n`. Falls back to the
/// plain top `top_n` when nothing clears the threshold.
pub fn select_candidates(ranked: &[RankedShot], threshold: f64, top_n: usize) -> Vec<ShotId> {
    let passing: Vec<ShotId> = ranked
        .iter()
        .filter(|r| r.score >= threshold)
        .take(top_n)
        .map(|r| r.shot)
        .collect();
    if !passing.is_empty() {
        return passing;
    }
    ranked.iter().take(top_n.max(1)).map(|r| r.shot).collect()
}

/// The best-matching subshot for the first round.
pub fn select_initial_subshot(
    query: &[f64],
    subshots: &[Shot],
    features: &FeatureMatrix,
    n_frames: usize,
) -> Result<ShotId> {
    rank(query, subshots.iter(), features, n_frames)?
        .first()
        .map(|r| r.shot)
        .ok_or_else(|| Error::invalid("no subshots to choose from"))
}
