//! Brute-force reference implementations used to check the engine.
//!
//! Nothing here calls into the partition or retrieval code paths it checks;
//! everything is recomputed from raw rows with plain loops.

#![allow(dead_code)]

pub fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn sq_dist_to(a: &[f32], c: &[f64]) -> f64 {
    a.iter().zip(c).map(|(&x, &y)| (x as f64 - y).powi(2)).sum()
}

/// Every labeling of `n` points into exactly `k` non-empty clusters, in
/// restricted-growth form (first occurrence of label j precedes label j+1).
fn labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, k: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        if k - used > n - i {
            return;
        }
        for l in 0..(used + 1).min(k) {
            cur.push(l);
            rec(i + 1, n, k, used.max(l + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, 0, &mut Vec::new(), &mut out);
    out
}

fn centroids(rows: &[Vec<f32>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for d in 0..dim {
            sums[l][d] += r[d] as f64;
        }
    }
    for l in 0..k {
        for d in 0..dim {
            sums[l][d] /= counts[l] as f64;
        }
    }
    sums
}

/// Globally SSE-optimal clustering by exhaustive enumeration.
pub fn optimal_clustering(rows: &[Vec<f32>], k: usize) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let k = k.min(rows.len());
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64)> = None;
    for labels in labelings(rows.len(), k) {
        let cents = centroids(rows, &labels, k);
        let sse: f64 = rows
            .iter()
            .zip(&labels)
            .map(|(r, &l)| sq_dist_to(r, &cents[l]))
            .sum();
        if best.as_ref().map_or(true, |b| sse < b.2) {
            best = Some((labels, cents, sse));
        }
    }
    best.unwrap()
}

/// Deviation-maximising boundary between two key frames, by direct loop.
pub fn boundary(rows: &[Vec<f32>], left: usize, right: usize) -> usize {
    let mut best_f = right;
    let mut best_d = f64::NEG_INFINITY;
    let mut f = left + 1;
    while f <= right {
        let d = dist(&rows[f], &rows[left]) + dist(&rows[f], &rows[right]);
        if d > best_d {
            best_d = d;
            best_f = f;
        }
        f += 1;
    }
    best_f
}

/// Subshot `(start, end)` spans (relative to the rows) from the optimal
/// clustering and the literal deviation rule.
pub fn partition_spans(rows: &[Vec<f32>], k: usize) -> Vec<(usize, usize)> {
    let n = rows.len();
    if n == 1 {
        return vec![(0, 0)];
    }
    let (labels, cents, _) = optimal_clustering(rows, k);
    let mut keys = Vec::new();
    for (c, cent) in cents.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if labels[i] != c {
                continue;
            }
            let d = sq_dist_to(&rows[i], cent);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        keys.push(best.unwrap().0);
    }
    keys.sort();
    keys.dedup();
    let mut starts = vec![0];
    for w in keys.windows(2) {
        starts.push(boundary(rows, w[0], w[1]));
    }
    let mut spans = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let e = if i + 1 < starts.len() { starts[i + 1] - 1 } else { n - 1 };
        spans.push((s, e));
    }
    spans
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

/// Bin-centre sample of `n` indices from `[start, end]`.
pub fn bin_centres(start: usize, end: usize, n: usize) -> Vec<usize> {
    let len = end - start + 1;
    if n >= len {
        return (start..=end).collect();
    }
    (0..n)
        .map(|i| start + ((i as f64 + 0.5) * len as f64 / n as f64).floor() as usize)
        .collect()
}

/// Mean-pool of sampled rows followed by cosine against `query`.
pub fn shot_score(rows: &[Vec<f32>], start: usize, end: usize, n_frames: usize, query: &[f64]) -> f64 {
    let picks = bin_centres(start, end, n_frames);
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for &p in &picks {
        for d in 0..dim {
            mean[d] += rows[p][d] as f64;
        }
    }
    for m in &mut mean {
        *m /= picks.len() as f64;
    }
    cosine(&mean, query)
}
