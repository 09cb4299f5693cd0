use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use emoface::app::{serve, Animator, ServeConfig};
use emoface::dataset::{generate_corpus, load_corpus, SyntheticCorpusConfig};
use emoface::emotion::{default_grid, verify_logit_linearity, EmotionSchedule, LinearityMode};
use emoface::trainer::{evaluate, split_ids, train, EvalOptions, ModelBundle, SplitName, TrainConfig};

#[derive(Parser)]
#[command(name = "emoface", version, about = "Emotion-controllable speech-driven facial animation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// JSON file with the subcommand's configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; animate and serve are deterministic and ignore it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output location (directory or file, depending on the subcommand).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic training corpus.
    Datagen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clips: Option<usize>,
    },
    /// Train all networks on a corpus and write checkpoints plus a JSON-lines log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Lip error, prior error and emotion confusion of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
    },
    /// Animate a WAV file under an emotion schedule.
    Animate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        audio: Option<PathBuf>,
        /// Schedule JSON; omitted means no user emotion.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// JSON list of identity coefficients.
        #[arg(long)]
        identity: Option<PathBuf>,
        /// Also write one OBJ per frame into this directory.
        #[arg(long)]
        obj_dir: Option<PathBuf>,
    },
    /// Check that two-class Gaussian log-odds are linear with slope 2μ/σ².
    VerifyLinearity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        monte_carlo: Option<usize>,
    },
    /// Serve the HTTP API for a checkpoint.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Val => SplitName::Val,
            SplitArg::Test => SplitName::Test,
            SplitArg::All => SplitName::All,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct AnimateConfig {
    checkpoint: Option<PathBuf>,
    audio: Option<PathBuf>,
    schedule: Option<EmotionSchedule>,
    identity: Option<Vec<f64>>,
    obj_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct LinearityConfig {
    mu: f64,
    sigma: f64,
    grid_points: usize,
    /// Monte-Carlo sample count; zero selects the closed form.
    n_samples: usize,
    seed: u64,
}

impl Default for LinearityConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            sigma: 1.0,
            grid_points: 11,
            n_samples: 0,
            seed: 1000,
        }
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Datagen { common, clips } => {
            let mut config: SyntheticCorpusConfig = read_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(n) = clips {
                config.n_clips = n;
            }
            let out = common.out.unwrap_or_else(|| PathBuf::from("corpus"));
            let manifest = generate_corpus(&config, &out)?;
            println!("wrote {} clips to {}", manifest.clips.len(), out.display());
        }
        Command::Train { common, corpus, threads } => {
            let mut config: TrainConfig = read_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(t) = threads {
                config.threads = t;
            }
            let corpus = load_corpus(&corpus)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("run"));
            let outcome = train(&config, &corpus, &out)?;
            println!(
                "best epoch {} of audio2flame; checkpoint {}",
                outcome.best_epoch,
                outcome.checkpoint.display()
            );
        }
        Command::Eval {
            common,
            checkpoint,
            corpus,
            split,
        } => {
            let mut options: EvalOptions = read_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                options.seed = seed;
            }
            let bundle = ModelBundle::load(&checkpoint)?;
            let corpus = load_corpus(&corpus)?;
            let ids = split_ids(&bundle, &corpus, split.into())?;
            let report = evaluate(&bundle, &corpus, &ids, &options)?;
            eprintln!(
                "{} clips: lip error mean {:.4} mm, max {:.4} mm",
                report.clips, report.lip.mean_mm, report.lip.max_mm
            );
            if let Some(c) = &report.confusion {
                eprint!("{}", c.matrix.to_csv());
            }
            write_json(&report, common.out.as_deref())?;
        }
        Command::Animate {
            common,
            checkpoint,
            audio,
            schedule,
            identity,
            obj_dir,
        } => {
            let mut config: AnimateConfig = read_config(common.config.as_deref())?;
            if let Some(p) = schedule {
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                config.schedule = Some(EmotionSchedule::from_json(&text)?);
            }
            if let Some(p) = identity {
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                config.identity = Some(serde_json::from_str(&text)?);
            }
            let checkpoint = checkpoint.or(config.checkpoint).context("--checkpoint is required")?;
            let audio = audio.or(config.audio).context("--audio is required")?;
            let animator = Animator::load(&checkpoint)?;
            let seq = animator.animate_file(&audio, &config.schedule.unwrap_or_default(), config.identity.as_deref())?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("animation.json"));
            seq.save(&out)?;
            eprintln!("{} frames -> {}", seq.len(), out.display());
            if let Some(dir) = obj_dir.or(config.obj_dir) {
                let n = seq.dump_obj(&animator.bundle().face, &dir)?;
                eprintln!("{n} OBJ frames -> {}", dir.display());
            }
        }
        Command::VerifyLinearity {
            common,
            mu,
            sigma,
            monte_carlo,
        } => {
            let mut config: LinearityConfig = read_config(common.config.as_deref())?;
            config.mu = mu.unwrap_or(config.mu);
            config.sigma = sigma.unwrap_or(config.sigma);
            config.n_samples = monte_carlo.unwrap_or(config.n_samples);
            config.seed = common.seed.unwrap_or(config.seed);
            let mode = if config.n_samples == 0 {
                LinearityMode::ClosedForm
            } else {
                LinearityMode::MonteCarlo {
                    n_samples: config.n_samples,
                    seed: config.seed,
                }
            };
            let grid = default_grid(config.sigma, config.grid_points);
            let report = verify_logit_linearity(config.mu, config.sigma, &grid, mode)?;
            eprintln!("slope {:.6} (expected {:.6})", report.slope, report.expected_slope);
            write_json(&report, common.out.as_deref())?;
        }
        Command::Serve {
            common,
            checkpoint,
            host,
            port,
            corpus,
        } => {
            let mut config: ServeConfig = read_config(common.config.as_deref())?;
            if let Some(c) = checkpoint {
                config.checkpoint = c;
            }
            if let Some(h) = host {
                config.host = h;
            }
            if let Some(p) = port {
                config.port = p;
            }
            if corpus.is_some() {
                config.corpus = corpus;
            }
            if !config.checkpoint.exists() {
                bail!("checkpoint {} does not exist", config.checkpoint.display());
            }
            let out = common.out;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(&config, |addr, hash| {
                eprintln!("listening on http://{addr} (checkpoint {hash})");
                if let Some(p) = &out {
                    let info = serde_json::json!({ "address": addr.to_string(), "checkpoint": hash });
                    if let Err(e) = fs::write(p, info.to_string()) {
                        log::warn!("could not write {}: {e}", p.display());
                    }
                }
            }))?;
        }
    }
    Ok(())
}
