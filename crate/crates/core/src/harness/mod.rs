//! Batch evaluation: question files, benchmark runs, reports and traces.

pub mod config;
pub mod dataset;
pub mod report;
pub mod runner;
pub mod synthetic;

pub use config::RunConfig;
pub use dataset::{load_dataset, open_video, Dataset, DatasetRecord};
pub use report::{read_trace, write_trace, PathCounts, QuestionTrace, RunReport, Scores};
pub use runner::run_benchmark;
