use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use shotchain::frames::read_feature_file;
use shotchain::harness::{load_dataset, open_video, read_trace, run_benchmark, write_trace, QuestionTrace, RunConfig, RunReport};
use shotchain::model::{QaItem, Shot, ShotIdGen};
use shotchain::orchestrator::{Agent, AgentConfig};
use shotchain::partition::partition_shot_with;
use shotchain::providers::{
    ChatProvider, EmbeddingProvider, HttpEmbeddingClient, OpenAiChatClient, ScriptedProvider,
};

#[derive(Parser)]
#[command(name = "shotchain", version, about = "Chain-of-shot question answering over long videos")]
struct Cli {
    /// TOML settings file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every question in a dataset and print a report.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// Where to write the per-question trace (JSON lines).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[command(flatten)]
        backend: BackendFlags,
        #[command(flatten)]
        agent: AgentFlags,
    },
    /// Answer a single question about one video.
    Ask {
        /// Video directory (features.vcf plus frames/) or a feature file.
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        question: String,
        /// An option such as "A. a red car"; repeat for each option.
        #[arg(long = "option", required = true)]
        options: Vec<String>,
        #[arg(long)]
        subtitles: Option<String>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendFlags,
        #[command(flatten)]
        agent: AgentFlags,
    },
    /// Partition a feature file (or a span of it) and print the subshots.
    Segment {
        features: PathBuf,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        end: Option<usize>,
        /// Cluster L2-normalised rows.
        #[arg(long)]
        normalize: bool,
    },
    /// Check a dataset, its videos, and any extra feature files.
    Validate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long = "features")]
        features: Vec<PathBuf>,
    },
    /// Re-score a trace file, or print it question by question.
    Trace {
        file: PathBuf,
        #[arg(long)]
        show: bool,
    },
}

#[derive(Args, Default)]
struct BackendFlags {
    /// Scripted rule file; replaces both HTTP backends.
    #[arg(long)]
    scripted: Option<PathBuf>,
    #[arg(long)]
    chat_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    embed_url: Option<String>,
    /// Environment variable holding the chat API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Request timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
}

#[derive(Args, Default)]
struct AgentFlags {
    #[arg(long)]
    glance_frames: Option<usize>,
    #[arg(long)]
    global_frames: Option<usize>,
    #[arg(long)]
    init_top: Option<usize>,
    #[arg(long)]
    init_frames: Option<usize>,
    #[arg(long)]
    round_top_n: Option<usize>,
    #[arg(long)]
    round_subshots: Option<usize>,
    #[arg(long)]
    frames_per_subshot: Option<usize>,
    #[arg(long)]
    k_round1: Option<usize>,
    #[arg(long)]
    k_later: Option<usize>,
    #[arg(long)]
    sim_threshold: Option<f64>,
    #[arg(long)]
    confident_level: Option<u8>,
    #[arg(long)]
    max_rounds: Option<u32>,
    #[arg(long)]
    retrieval_frames_per_shot: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    #[arg(long)]
    normalize_features: Option<bool>,
    #[arg(long)]
    use_subtitles: Option<bool>,
    #[arg(long)]
    subtitle_budget: Option<usize>,
    #[arg(long)]
    temperature: Option<f32>,
    #[arg(long)]
    max_tokens: Option<u32>,
}

macro_rules! overlay {
    ($target:expr, $flags:expr, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $flags.$field.clone() { $target.$field = v; })*
    };
}

impl AgentFlags {
    fn apply(&self, cfg: &mut AgentConfig) {
        overlay!(
            cfg, self, glance_frames, global_frames, init_top, init_frames, round_top_n, round_subshots,
            frames_per_subshot, k_round1, k_later, sim_threshold, confident_level, max_rounds,
            retrieval_frames_per_shot, seed, kmeans_restarts, normalize_features, use_subtitles,
            subtitle_budget, temperature, max_tokens,
        );
    }
}

impl BackendFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.scripted {
            cfg.scripted = Some(s.clone());
        }
        if let Some(u) = &self.chat_url {
            cfg.chat.base_url = u.clone();
        }
        if let Some(m) = &self.model {
            cfg.chat.model = m.clone();
        }
        if let Some(u) = &self.embed_url {
            cfg.embed.base_url = u.clone();
        }
        if let Some(k) = &self.api_key_env {
            cfg.chat.api_key_env = Some(k.clone());
        }
        for p in [&mut cfg.chat, &mut cfg.embed] {
            if let Some(t) = self.timeout {
                p.timeout = t;
            }
            if let Some(r) = self.retries {
                p.retries = r;
            }
        }
    }
}

enum Backends {
    Scripted(ScriptedProvider),
    Http(OpenAiChatClient, HttpEmbeddingClient),
}

impl Backends {
    fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(match &cfg.scripted {
            Some(path) => Backends::Scripted(
                ScriptedProvider::from_file(path).with_context(|| format!("loading {}", path.display()))?,
            ),
            None => Backends::Http(
                OpenAiChatClient::new(cfg.chat.clone()),
                HttpEmbeddingClient::new(cfg.embed.clone()),
            ),
        })
    }

    fn chat(&self) -> &dyn ChatProvider {
        match self {
            Backends::Scripted(p) => p,
            Backends::Http(c, _) => c,
        }
    }

    fn embed(&self) -> &dyn EmbeddingProvider {
        match self {
            Backends::Scripted(p) => p,
            Backends::Http(_, e) => e,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn print_report(report: &RunReport) -> Result<()> {
    println!("{report}");
    println!("{}", serde_json::to_string(report)?);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Run {
            dataset,
            trace,
            report,
            parallelism,
            backend,
            agent,
        } => {
            backend.apply(&mut cfg);
            agent.apply(&mut cfg.agent);
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            let ds = load_dataset(&dataset)?;
            let backends = Backends::from_config(&cfg)?;
            let (rep, traces) = run_benchmark(&ds, &cfg.agent, backends.chat(), backends.embed(), cfg.parallelism)?;
            if let Some(path) = trace {
                write_trace(&path, &traces)?;
            }
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&rep)? + "\n")?;
            }
            for t in traces.iter().filter(|t| t.error.is_some()) {
                eprintln!("{}: failed: {}", t.id, t.error.as_deref().unwrap_or_default());
            }
            print_report(&rep)
        }
        Command::Ask {
            video,
            question,
            options,
            subtitles,
            trace,
            backend,
            agent,
        } => {
            backend.apply(&mut cfg);
            agent.apply(&mut cfg.agent);
            let source = open_video(&video)?;
            let record = shotchain::harness::DatasetRecord {
                id: "ask".into(),
                video: video.display().to_string(),
                question,
                options,
                answer: None,
                subtitles,
            };
            let item: QaItem = record.into_item(Path::new("."))?;
            let backends = Backends::from_config(&cfg)?;
            let run = Agent::new(&cfg.agent, backends.chat(), backends.embed()).run_question(&source, &item);
            let qt = QuestionTrace {
                id: item.id.clone(),
                video: item.video.clone(),
                gold: None,
                config: cfg.agent.clone(),
                verdict: run.verdict.clone(),
                error: run.error.clone(),
                elapsed_ms: run.elapsed_ms,
                events: run.trace,
            };
            if let Some(path) = trace {
                write_trace(&path, std::slice::from_ref(&qt))?;
            }
            match (&qt.verdict, &qt.error) {
                (Some(v), _) => {
                    println!("answer {}  path {}  rounds {}  frames {}", v.answer, v.path, v.rounds.len(), v.frames_used);
                    Ok(())
                }
                (None, err) => bail!("question failed: {}", err.as_deref().unwrap_or("unknown error")),
            }
        }
        Command::Segment {
            features,
            k,
            seed,
            start,
            end,
            normalize,
        } => {
            let m = read_feature_file(&features)?;
            let start = start.unwrap_or(0);
            let end = end.unwrap_or(m.count().saturating_sub(1));
            let mut ids = ShotIdGen::new();
            let parent = Shot {
                id: ids.next_id(),
                start,
                end,
                depth: 0,
                parent: None,
            };
            let mut opts = cfg.agent.partition_options();
            opts.normalize |= normalize;
            let subs = partition_shot_with(&parent, &m, k, seed, &mut ids, &opts)?;
            println!("{:<6} {:>8} {:>8} {:>6}", "shot", "start", "end", "len");
            for s in &subs {
                println!("{:<6} {:>8} {:>8} {:>6}", s.id.to_string(), s.start, s.end, s.len());
            }
            Ok(())
        }
        Command::Validate { dataset, features } => {
            let mut problems = 0usize;
            if let Some(path) = dataset {
                let ds = load_dataset(&path)?;
                println!("{}: {} questions", path.display(), ds.items.len());
                for (video, loaded) in ds.load_videos() {
                    match loaded.and_then(|v| v.check_frames().map(|_| v).map_err(|e| e.to_string())) {
                        Ok(v) => println!("  {video}: {} frames, dim {}", v.duration, v.features.dim()),
                        Err(e) => {
                            problems += 1;
                            println!("  {video}: {e}");
                        }
                    }
                }
            }
            for f in features {
                match read_feature_file(&f) {
                    Ok(m) => println!("{}: {} frames, dim {}, {} fps", f.display(), m.count(), m.dim(), m.fps()),
                    Err(e) => {
                        problems += 1;
                        println!("{}: {e}", f.display());
                    }
                }
            }
            if problems > 0 {
                bail!("{problems} problem(s) found");
            }
            Ok(())
        }
        Command::Trace { file, show } => {
            let traces = read_trace(&file)?;
            if show {
                for t in &traces {
                    let outcome = match (&t.verdict, &t.error) {
                        (Some(v), _) => format!("{} via {} in {} round(s), {} frames", v.answer, v.path, v.rounds.len(), v.frames_used),
                        (None, e) => format!("failed: {}", e.as_deref().unwrap_or("unknown")),
                    };
                    let gold = t.gold.map(String::from).unwrap_or_else(|| "-".into());
                    println!("{:<12} gold {gold}  {outcome}  ({} events)", t.id, t.events.len());
                }
                return Ok(());
            }
            let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            print_report(&RunReport::from_traces(name, &traces))
        }
    }
}
