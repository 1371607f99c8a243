//! Shot partition: K-means key-frame discovery, deviation-based boundary
//! search between adjacent key frames, and the shot-set replacement step.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, Shot, ShotId, ShotIdGen, ShotSet};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Independent k-means++ initialisations; the lowest-SSE run wins.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub kmeans: KMeansOptions,
    /// Cluster and measure deviations on L2-normalised rows.
    pub normalize: bool,
}

/// Result of clustering the frames of one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Effective cluster count after collapsing for short or homogeneous shots.
    pub k: usize,
    /// Absolute frame indices that were clustered, ascending.
    pub frames: Vec<usize>,
    /// Cluster id of `frames[i]`.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.frames
            .iter()
            .zip(&self.assignment)
            .filter(move |(_, &c)| c == cluster)
            .map(|(&f, _)| f)
    }

    /// Within-cluster sum of squared distances.
    pub fn sse(&self, features: &FeatureMatrix) -> f64 {
        self.frames
            .iter()
            .zip(&self.assignment)
            .map(|(&f, &c)| sq_dist(features.row(f), &self.centroids[c]))
            .sum()
    }
}

/// Key frames in temporal order, at most one per cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyFrameList {
    pub indices: Vec<usize>,
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

/// Euclidean distance between two feature rows, accumulated in f64.
pub fn row_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn row_f64(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| v as f64).collect()
}

struct Run {
    assignment: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    sse: f64,
}

/// Clusters the frames of `shot` into at most `k` groups.
pub fn kmeans(features: &FeatureMatrix, shot: &Shot, k: usize, seed: u64) -> Result<Clustering> {
    kmeans_with(features, shot, k, seed, &KMeansOptions::default())
}

pub fn kmeans_with(
    features: &FeatureMatrix,
    shot: &Shot,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    features.check_shot(shot)?;
    let frames: Vec<usize> = shot.frames().collect();
    let rows: Vec<&[f32]> = frames.iter().map(|&f| features.row(f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Run> = None;
    for _ in 0..opts.restarts.max(1) {
        let run = lloyd(&rows, k.min(rows.len()), opts.max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(Clustering {
        k: best.centroids.len(),
        frames,
        assignment: best.assignment,
        centroids: best.centroids,
        seed,
    })
}

/// k-means++ seeding. Stops early once every point coincides with a chosen
/// centre, which collapses `k` for shots with fewer distinct rows.
fn seed_centres(rows: &[&[f32]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let first = rng.random_range(0..n);
    let mut centres = vec![row_f64(rows[first])];
    let mut nearest: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in nearest.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let Some(pick) = pick else { break };
        let centre = row_f64(rows[pick]);
        for (d, r) in nearest.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &centre));
        }
        centres.push(centre);
    }
    centres
}

fn nearest_centre(row: &[f32], centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centres.iter().enumerate() {
        let d = sq_dist(row, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn recompute_centres(rows: &[&[f32]], assignment: &[usize], centres: &mut [Vec<f64>]) -> Vec<usize> {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0f64; dim]; centres.len()];
    let mut sizes = vec![0usize; centres.len()];
    for (r, &c) in rows.iter().zip(assignment) {
        sizes[c] += 1;
        for (s, &v) in sums[c].iter_mut().zip(r.iter()) {
            *s += v as f64;
        }
    }
    for (c, centre) in centres.iter_mut().enumerate() {
        if sizes[c] > 0 {
            for (dst, s) in centre.iter_mut().zip(&sums[c]) {
                *dst = s / sizes[c] as f64;
            }
        }
    }
    sizes
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(rows: &[&[f32]], assignment: &mut [usize], centres: &mut [Vec<f64>]) {
    loop {
        let sizes = recompute_centres(rows, assignment, centres);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, (r, &c)) in rows.iter().zip(assignment.iter()).enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(r, &centres[c]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { return };
        assignment[i] = empty;
        centres[empty] = row_f64(rows[i]);
    }
}

fn lloyd(rows: &[&[f32]], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> Run {
    let mut centres = seed_centres(rows, k, rng);
    let mut assignment: Vec<usize> = rows.iter().map(|r| nearest_centre(r, &centres).0).collect();
    repair_empty(rows, &mut assignment, &mut centres);
    for _ in 0..max_iter {
        let next: Vec<usize> = rows.iter().map(|r| nearest_centre(r, &centres).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        repair_empty(rows, &mut assignment, &mut centres);
    }
    hartigan_refine(rows, &mut assignment, &mut centres);
    let sse = rows
        .iter()
        .zip(&assignment)
        .map(|(r, &c)| sq_dist(r, &centres[c]))
        .sum();
    Run {
        assignment,
        centroids: centres,
        sse,
    }
}

/// Single-point transfers that strictly lower the SSE, applied until none is
/// left. A Hartigan fixed point is also a Lloyd fixed point, so this only
/// ever escapes local optima that Lloyd iterations stop in.
fn hartigan_refine(rows: &[&[f32]], assignment: &mut [usize], centres: &mut [Vec<f64>]) {
    let k = centres.len();
    if k < 2 {
        return;
    }
    let mut sizes = recompute_centres(rows, assignment, centres);
    let mut moved = true;
    while moved {
        moved = false;
        for (i, row) in rows.iter().enumerate() {
            let from = assignment[i];
            if sizes[from] < 2 {
                continue;
            }
            let n_from = sizes[from] as f64;
            let removal_gain = n_from / (n_from - 1.0) * sq_dist(row, &centres[from]);
            let mut best: Option<(usize, f64)> = None;
            for to in 0..k {
                if to == from {
                    continue;
                }
                let n_to = sizes[to] as f64;
                let cost = n_to / (n_to + 1.0) * sq_dist(row, &centres[to]);
                let delta = cost - removal_gain;
                if delta < -1e-12 * removal_gain.max(f64::MIN_POSITIVE)
                    && best.is_none_or(|(_, bd)| delta < bd)
                {
                    best = Some((to, delta));
                }
            }
            if let Some((to, _)) = best {
                move_point(row, &mut centres[from], sizes[from], -1.0);
                move_point(row, &mut centres[to], sizes[to], 1.0);
                sizes[from] -= 1;
                sizes[to] += 1;
                assignment[i] = to;
                moved = true;
            }
        }
    }
    recompute_centres(rows, assignment, centres);
}

/// Adds (`sign = 1`) or removes (`sign = -1`) `row` from a centroid of
/// `size` members.
fn move_point(row: &[f32], centre: &mut [f64], size: usize, sign: f64) {
    let n = size as f64;
    let m = n + sign;
    for (c, &x) in centre.iter_mut().zip(row) {
        *c = (*c * n + sign * x as f64) / m;
    }
}

/// Picks, for every cluster, the member closest to its centroid (earliest
/// frame on ties) and returns them in temporal order.
pub fn select_key_frames(features: &FeatureMatrix, clustering: &Clustering) -> KeyFrameList {
    let mut keys = BTreeSet::new();
    for (c, centre) in clustering.centroids.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for f in clustering.members(c) {
            let d = sq_dist(features.row(f), centre);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((f, d));
            }
        }
        if let Some((f, _)) = best {
            keys.insert(f);
        }
    }
    KeyFrameList {
        indices: keys.into_iter().collect(),
    }
}

/// Returns the frame in `(left_key, right_key]` whose summed distance to the
/// two key frames is largest; the earliest such frame on ties.
pub fn find_boundary(features: &FeatureMatrix, left_key: usize, right_key: usize) -> Result<usize> {
    if left_key >= right_key || right_key >= features.count() {
        return Err(Error::invalid(format!(
            "boundary search needs left < right < {}; got {left_key}, {right_key}",
            features.count()
        )));
    }
    let left = features.row(left_key);
    let right = features.row(right_key);
    let mut best = (right_key, f64::NEG_INFINITY);
    for f in left_key + 1..=right_key {
        let row = features.row(f);
        let d = row_distance(row, left) + row_distance(row, right);
        if d > best.1 {
            best = (f, d);
        }
    }
    Ok(best.0)
}

/// Splits `shot` into temporally ordered subshots, one per distinct key frame.
pub fn partition_shot(
    shot: &Shot,
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    ids: &mut ShotIdGen,
) -> Result<Vec<Shot>> {
    partition_shot_with(shot, features, k, seed, ids, &PartitionOptions::default())
}

pub fn partition_shot_with(
    shot: &Shot,
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    ids: &mut ShotIdGen,
    opts: &PartitionOptions,
) -> Result<Vec<Shot>> {
    features.check_shot(shot)?;
    if shot.is_atomic() {
        return Ok(vec![*shot]);
    }
    let normalized;
    let features = if opts.normalize {
        normalized = l2_normalized(features)?;
        &normalized
    } else {
        features
    };

    let clustering = kmeans_with(features, shot, k, seed, &opts.kmeans)?;
    let keys = select_key_frames(features, &clustering).indices;
    if keys.len() < 2 {
        return Ok(vec![shot.child(ids.next_id(), shot.start, shot.end)]);
    }

    let mut starts = vec![shot.start];
    for pair in keys.windows(2) {
        starts.push(find_boundary(features, pair[0], pair[1])?);
    }
    let mut subshots = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(shot.end, |&next| next - 1);
        subshots.push(shot.child(ids.next_id(), start, end));
    }
    Ok(subshots)
}

fn l2_normalized(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let dim = features.dim();
    let mut data = Vec::with_capacity(features.as_slice().len());
    for t in 0..features.count() {
        let row = features.row(t);
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
        } else {
            data.extend_from_slice(row);
        }
    }
    FeatureMatrix::with_fps(dim, data, features.fps())
}

/// Replaces each candidate shot with its subshots and returns the new set.
pub fn update_shot_set(
    set: &ShotSet,
    candidates: &[ShotId],
    replacements: &BTreeMap<ShotId, Vec<Shot>>,
) -> Result<ShotSet> {
    let wanted: BTreeSet<ShotId> = candidates.iter().copied().collect();
    let given: BTreeSet<ShotId> = replacements.keys().copied().collect();
    if wanted != given {
        return Err(Error::invalid(format!(
            "replacements cover {given:?} but candidates are {wanted:?}"
        )));
    }

    let mut shots = Vec::with_capacity(set.len() + replacements.values().map(Vec::len).sum::<usize>());
    for shot in set.iter() {
        if !wanted.contains(&shot.id) {
            shots.push(*shot);
            continue;
        }
        let subs = &replacements[&shot.id];
        check_cover(shot, subs)?;
        shots.extend_from_slice(subs);
    }
    if let Some(missing) = wanted.iter().find(|id| set.get(**id).is_none()) {
        return Err(Error::invalid(format!("candidate {missing} is not in the shot set")));
    }
    shots.sort_by_key(|s| s.start);
    ShotSet::new(shots, set.video_len)
}

fn check_cover(parent: &Shot, subs: &[Shot]) -> Result<()> {
    let mut next = parent.start;
    for s in subs {
        if s.start != next || s.end < s.start || s.end > parent.end {
            return Err(Error::invalid(format!(
                "subshot {s} does not continue the cover of {parent} at frame {next}"
            )));
        }
        next = s.end + 1;
    }
    if subs.is_empty() || next != parent.end + 1 {
        return Err(Error::invalid(format!(
            "replacement for {parent} does not reach its end frame {}",
            parent.end
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(values: &[f32]) -> FeatureMatrix {
        FeatureMatrix::new(1, values.to_vec()).unwrap()
    }

    fn span(features: &FeatureMatrix) -> Shot {
        Shot::whole(ShotId(0), features.count()).unwrap()
    }

    // Expected clusters come from enumerating all 2^4 labelings of the four
    // points and keeping the SSE minimiser: {0,1} and {2,3}, SSE 0.01.
    #[test]
    fn kmeans_two_separated_pairs() {
        let f = one_d(&[0.0, 0.1, 5.0, 5.1]);
        let c = kmeans(&f, &span(&f), 2, DEFAULT_SEED).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.assignment[2], c.assignment[3]);
        assert_ne!(c.assignment[0], c.assignment[2]);
        let low = c.assignment[0];
        assert!((c.centroids[low][0] - 0.05).abs() < 1e-6);
        assert!((c.centroids[1 - low][0] - 5.05).abs() < 1e-6);
    }

    #[test]
    fn kmeans_k1_is_mean() {
        let f = FeatureMatrix::new(2, vec![1.0, 0.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        let c = kmeans(&f, &span(&f), 1, 7).unwrap();
        assert_eq!(c.k, 1);
        assert_eq!(c.assignment, vec![0, 0, 0]);
        assert_eq!(c.centroids[0], vec![3.0, 2.0]);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let f = one_d(&[0.0, 1.0, 4.0, 9.0]);
        let c = kmeans(&f, &span(&f), 4, 3).unwrap();
        let distinct: BTreeSet<_> = c.assignment.iter().collect();
        assert_eq!(distinct.len(), 4);
        assert!(c.sse(&f) < 1e-12);
    }

    #[test]
    fn kmeans_lowers_k_to_frame_count() {
        let f = one_d(&[0.0, 1.0]);
        let c = kmeans(&f, &span(&f), 6, 0).unwrap();
        assert_eq!(c.k, 2);
    }

    #[test]
    fn kmeans_rejects_zero_k() {
        let f = one_d(&[0.0, 1.0]);
        assert!(kmeans(&f, &span(&f), 0, 0).is_err());
    }

    #[test]
    fn key_frames_prefer_earliest_on_ties() {
        let f = one_d(&[0.0, 0.1, 5.0, 5.1]);
        let c = kmeans(&f, &span(&f), 2, DEFAULT_SEED).unwrap();
        assert_eq!(select_key_frames(&f, &c).indices, vec![0, 2]);
    }

    #[test]
    fn key_frames_single_frame_cluster() {
        let f = one_d(&[3.0]);
        let c = kmeans(&f, &span(&f), 1, 0).unwrap();
        assert_eq!(select_key_frames(&f, &c).indices, vec![0]);
    }

    #[test]
    fn identical_frames_collapse_to_one_key() {
        let f = one_d(&[2.0; 5]);
        let c = kmeans(&f, &span(&f), 2, 0).unwrap();
        assert_eq!(c.k, 1);
        assert_eq!(select_key_frames(&f, &c).indices, vec![0]);
    }

    #[test]
    fn boundary_two_dimensional_example() {
        // d(1) = 0.5 + 0.5 = 1.0, d(2) = 2 * sqrt(1.25) ~ 2.236, d(3) = 1.0
        let f = FeatureMatrix::new(2, vec![0.0, 0.0, 0.5, 0.0, 0.5, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(find_boundary(&f, 0, 3).unwrap(), 2);
    }

    #[test]
    fn boundary_identical_frames_is_left_plus_one() {
        let f = one_d(&[1.0; 6]);
        assert_eq!(find_boundary(&f, 1, 5).unwrap(), 2);
    }

    #[test]
    fn boundary_adjacent_keys() {
        let f = one_d(&[0.0, 9.0, 1.0]);
        assert_eq!(find_boundary(&f, 1, 2).unwrap(), 2);
        assert!(find_boundary(&f, 2, 2).is_err());
        assert!(find_boundary(&f, 0, 3).is_err());
    }

    #[test]
    fn partition_one_dimensional_example() {
        let f = one_d(&[0.0, 0.1, 5.0, 5.1]);
        let mut ids = ShotIdGen::new();
        let parent = Shot::whole(ids.next_id(), 4).unwrap();
        let subs = partition_shot(&parent, &f, 2, DEFAULT_SEED, &mut ids).unwrap();
        let spans: Vec<_> = subs.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(0, 0), (1, 3)]);
        assert!(subs.iter().all(|s| s.depth == 1 && s.parent == Some(parent.id)));
    }

    #[test]
    fn partition_homogeneous_shot_is_single_child() {
        let f = one_d(&[1.0; 8]);
        let mut ids = ShotIdGen::new();
        let parent = Shot::whole(ids.next_id(), 8).unwrap();
        let subs = partition_shot(&parent, &f, 2, 1, &mut ids).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!((subs[0].start, subs[0].end), (0, 7));
    }

    #[test]
    fn partition_two_frames() {
        let f = one_d(&[0.0, 1.0, 2.0, 3.0]);
        let mut ids = ShotIdGen::new();
        let parent = Shot {
            id: ids.next_id(),
            start: 2,
            end: 3,
            depth: 2,
            parent: None,
        };
        let subs = partition_shot(&parent, &f, 2, 9, &mut ids).unwrap();
        let spans: Vec<_> = subs.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(2, 2), (3, 3)]);
        assert!(subs.iter().all(|s| s.depth == 3));
    }

    #[test]
    fn partition_atomic_and_out_of_range() {
        let f = one_d(&[0.0, 1.0]);
        let mut ids = ShotIdGen::new();
        let atom = Shot::whole(ids.next_id(), 1).unwrap();
        assert_eq!(partition_shot(&atom, &f, 2, 0, &mut ids).unwrap(), vec![atom]);
        let outside = Shot::whole(ids.next_id(), 5).unwrap();
        assert!(partition_shot(&outside, &f, 2, 0, &mut ids).is_err());
    }

    fn s(id: u64, start: usize, end: usize) -> Shot {
        Shot {
            id: ShotId(id),
            start,
            end,
            depth: 1,
            parent: None,
        }
    }

    #[test]
    fn update_replaces_candidate() {
        let set = ShotSet::new(vec![s(1, 0, 4), s(2, 5, 9), s(3, 10, 14)], 15).unwrap();
        let mut rep = BTreeMap::new();
        rep.insert(ShotId(2), vec![s(4, 5, 7), s(5, 8, 9)]);
        let out = update_shot_set(&set, &[ShotId(2)], &rep).unwrap();
        let spans: Vec<_> = out.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(0, 4), (5, 7), (8, 9), (10, 14)]);
    }

    #[test]
    fn update_all_candidates() {
        let set = ShotSet::new(vec![s(1, 0, 1), s(2, 2, 3)], 4).unwrap();
        let mut rep = BTreeMap::new();
        rep.insert(ShotId(1), vec![s(3, 0, 0), s(4, 1, 1)]);
        rep.insert(ShotId(2), vec![s(5, 2, 3)]);
        let out = update_shot_set(&set, &[ShotId(1), ShotId(2)], &rep).unwrap();
        let ids: Vec<_> = out.iter().map(|s| s.id.0).collect();
        assert_eq!(ids, vec![3, 4, 5]);
    }

    #[test]
    fn update_rejects_bad_cover() {
        let set = ShotSet::new(vec![s(1, 0, 4), s(2, 5, 9)], 10).unwrap();
        let mut rep = BTreeMap::new();
        rep.insert(ShotId(2), vec![s(4, 5, 7)]);
        assert!(update_shot_set(&set, &[ShotId(2)], &rep).is_err());

        let mut gap = BTreeMap::new();
        gap.insert(ShotId(2), vec![s(4, 5, 6), s(5, 8, 9)]);
        assert!(update_shot_set(&set, &[ShotId(2)], &gap).is_err());

        let mut wrong_key = BTreeMap::new();
        wrong_key.insert(ShotId(1), vec![s(4, 0, 4)]);
        assert!(update_shot_set(&set, &[ShotId(2)], &wrong_key).is_err());

        let mut unknown = BTreeMap::new();
        unknown.insert(ShotId(7), vec![s(4, 0, 4)]);
        assert!(update_shot_set(&set, &[ShotId(7)], &unknown).is_err());
    }
}
