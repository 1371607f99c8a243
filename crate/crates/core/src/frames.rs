//! Frame sampling, the evidence frame set, VCF1 feature files and the
//! on-disk frame image directory.
//!
//! A video directory holds `features.vcf` (one embedding row per second)
//! and optionally `frames/frame_%06d.jpg`, one image per second, numbered
//! from zero.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, FrameSet, Shot};

pub const VCF_MAGIC: &[u8; 4] = b"VCF1";
pub const FEATURE_FILE_NAME: &str = "features.vcf";
pub const FRAME_DIR_NAME: &str = "frames";

/// `n` indices from `shot` by the bin-centre rule, or every frame when the
/// shot is no longer than `n`.
pub fn sample_uniform(shot: &Shot, n: usize) -> Vec<usize> {
    let len = shot.len();
    if n == 0 {
        return Vec::new();
    }
    if n >= len {
        return shot.frames().collect();
    }
    // floor((i + 0.5) * len / n) in exact integer arithmetic
    (0..n)
        .map(|i| shot.start + ((2 * i + 1) * len) / (2 * n))
        .collect()
}

/// Adds `new` to `existing`. Each index already present is replaced by the
/// nearest unused frame of `source_shot` (the smaller index on a distance
/// tie); nothing is added for it once the shot is exhausted.
pub fn merge_with_diversity(existing: &FrameSet, new: &[usize], source_shot: &Shot) -> FrameSet {
    let mut taken = existing.clone();
    let mut duplicates = Vec::new();
    for &f in new {
        if taken.contains(f) || !source_shot.contains(f) {
            duplicates.push(f);
        } else {
            taken = taken.with_added([f]);
        }
    }
    for f in duplicates {
        let f = f.clamp(source_shot.start, source_shot.end);
        if let Some(sub) = nearest_unused(&taken, f, source_shot) {
            taken = taken.with_added([sub]);
        }
    }
    taken
}

fn nearest_unused(taken: &FrameSet, around: usize, shot: &Shot) -> Option<usize> {
    let max_step = (around - shot.start).max(shot.end - around);
    for step in 0..=max_step {
        if let Some(lo) = around.checked_sub(step) {
            if lo >= shot.start && !taken.contains(lo) {
                return Some(lo);
            }
        }
        let hi = around + step;
        if hi <= shot.end && !taken.contains(hi) {
            return Some(hi);
        }
    }
    None
}

/// Reads a VCF1 feature file.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_features(&bytes, path)
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    const HEADER: usize = 16;
    if bytes.len() < 4 || &bytes[..4] != VCF_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < HEADER {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: HEADER,
            found: bytes.len(),
        });
    }
    let word = |at: usize| <[u8; 4]>::try_from(&bytes[at..at + 4]).expect("4-byte slice");
    let dim = u32::from_le_bytes(word(4)) as usize;
    let count = u32::from_le_bytes(word(8)) as usize;
    let fps = f32::from_le_bytes(word(12));
    if dim == 0 {
        return Err(Error::DimMismatch { expected: 1, got: 0 });
    }

    let payload = &bytes[HEADER..];
    let expected = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::invalid("feature header overflows"))?;
    if payload.len() < expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        // trailing bytes mean the header dim does not match the row layout
        return Err(Error::DimMismatch {
            expected: dim,
            got: payload.len() / 4 / count.max(1),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    FeatureMatrix::with_fps(dim, data, fps)
}

/// Writes `m` as a VCF1 feature file.
pub fn write_feature_file(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_features(m))?;
    w.flush()?;
    Ok(())
}

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.as_slice().len() * 4);
    out.extend_from_slice(VCF_MAGIC);
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(m.count() as u32).to_le_bytes());
    out.extend_from_slice(&m.fps().to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// A pre-extracted video: per-second features plus optional frame images.
#[derive(Debug, Clone)]
pub struct VideoSource {
    pub id: String,
    pub frame_dir: Option<PathBuf>,
    pub feature_file: PathBuf,
    pub duration: usize,
    pub features: FeatureMatrix,
}

impl VideoSource {
    /// Opens a video directory containing `features.vcf` and, optionally, a
    /// `frames/` directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let feature_file = dir.join(FEATURE_FILE_NAME);
        let frame_dir = dir.join(FRAME_DIR_NAME);
        let id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_parts(id, feature_file, frame_dir.is_dir().then_some(frame_dir))
    }

    pub fn from_parts(id: String, feature_file: PathBuf, frame_dir: Option<PathBuf>) -> Result<Self> {
        let features = read_feature_file(&feature_file)?;
        if features.fps() != FeatureMatrix::DEFAULT_FPS {
            return Err(Error::invalid(format!(
                "{} is sampled at {} fps; only 1 fps features are supported",
                feature_file.display(),
                features.fps()
            )));
        }
        Ok(Self {
            id,
            frame_dir,
            feature_file,
            duration: features.count(),
            features,
        })
    }

    /// An in-memory source without frame images.
    pub fn from_features(id: impl Into<String>, features: FeatureMatrix) -> Self {
        Self {
            id: id.into(),
            frame_dir: None,
            feature_file: PathBuf::new(),
            duration: features.count(),
            features,
        }
    }

    pub fn frame_path(&self, index: usize) -> Option<PathBuf> {
        self.frame_dir.as_ref().map(|d| d.join(frame_file_name(index)))
    }

    /// Confirms that every per-second frame image is present.
    pub fn check_frames(&self) -> Result<()> {
        if self.frame_dir.is_none() {
            return Ok(());
        }
        for t in 0..self.duration {
            if !self.frame_path(t).is_some_and(|p| p.is_file()) {
                return Err(Error::MissingFrame(t));
            }
        }
        Ok(())
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.jpg")
}

/// One encoded frame image ready to be attached to a chat request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub index: usize,
    pub mime: String,
    #[serde(skip)]
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    }
}

/// Loads the images for `indices` in ascending frame order. Sources without
/// a frame directory yield no images.
pub fn load_frame_images(src: &VideoSource, indices: &[usize]) -> Result<Vec<ImagePayload>> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= src.duration) {
        return Err(Error::MissingFrame(bad));
    }
    if src.frame_dir.is_none() {
        return Ok(Vec::new());
    }
    sorted
        .into_iter()
        .map(|index| {
            let path = src.frame_path(index).expect("frame dir present");
            let bytes = fs::read(&path).map_err(|_| Error::MissingFrame(index))?;
            Ok(ImagePayload {
                index,
                mime: mime_for(&path).to_string(),
                bytes,
            })
        })
        .collect()
}

/// Extracts one frame per second from `video` into `out_dir` with ffmpeg,
/// numbered from zero. Returns the number of frames written.
pub fn extract_frames_ffmpeg(video: &Path, out_dir: &Path) -> Result<usize> {
    fs::create_dir_all(out_dir)?;
    let status = Command::new("ffmpeg")
        .args(["-hide_banner", "-loglevel", "error", "-y", "-i"])
        .arg(video)
        .args(["-vf", "fps=1", "-start_number", "0", "-q:v", "2"])
        .arg(out_dir.join("frame_%06d.jpg"))
        .status()
        .map_err(|e| Error::invalid(format!("failed to launch ffmpeg: {e}")))?;
    if !status.success() {
        return Err(Error::invalid(format!(
            "ffmpeg failed on {} with {status}",
            video.display()
        )));
    }
    let count = fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name();
            let name = name.to_string_lossy();
            name.starts_with("frame_") && name.ends_with(".jpg")
        })
        .count();
    Ok(count)
}
