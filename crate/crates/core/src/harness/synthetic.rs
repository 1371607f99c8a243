//! Synthetic feature matrices with known scene structure, for offline runs
//! and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::FeatureMatrix;

/// Unit vector for `scene`. The last dimension is reserved for cut frames.
pub fn scene_direction(dim: usize, scene: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[scene % (dim - 1)] = 1.0;
    v
}

/// First frame of every scene when `len` frames are split into `scenes`
/// near-equal scenes.
pub fn scene_starts(len: usize, scenes: usize) -> Vec<usize> {
    (0..scenes).map(|j| j * len / scenes).collect()
}

/// A `len`-second video made of `scenes` consecutive scenes. Every scene's
/// frames sit near its own direction; the first frame of each scene after
/// the first is a cut frame pointing along the last dimension. Noise is
/// uniform in `[-noise, noise]` per component.
pub fn scene_video(len: usize, dim: usize, scenes: usize, noise: f32, seed: u64) -> Result<FeatureMatrix> {
    if dim < 2 || scenes == 0 || len < scenes {
        return Err(Error::InvalidInput(format!(
            "scene video needs dim >= 2 and 1 <= scenes <= len (got dim {dim}, {scenes} scenes, {len} frames)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = scene_starts(len, scenes);
    let mut data = Vec::with_capacity(len * dim);
    let mut scene = 0;
    for t in 0..len {
        while scene + 1 < scenes && t >= starts[scene + 1] {
            scene += 1;
        }
        let base = if scene > 0 && t == starts[scene] {
            let mut cut = vec![0.0; dim];
            cut[dim - 1] = 1.0;
            cut
        } else {
            scene_direction(dim, scene)
        };
        for b in base {
            let jitter = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
            data.push(b + jitter);
        }
    }
    FeatureMatrix::new(dim, data)
}
