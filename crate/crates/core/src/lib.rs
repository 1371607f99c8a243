//! Chain-of-shot question answering over long videos.
//!
//! The engine glances at a video, then iterates shot selection, shot
//! partition and answer reflection until a round is confident or the
//! round budget runs out.

pub mod error;
pub mod frames;
pub mod harness;
pub mod model;
pub mod orchestrator;
pub mod partition;
pub mod providers;
pub mod retrieval;

pub use error::{Error, Result};
