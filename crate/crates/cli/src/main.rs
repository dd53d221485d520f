//! `stl`: offline pipeline commands, the labeling service, and a client for it.
//!
//! Offline commands run in-process and are deterministic: the same seed and
//! config always produce byte-identical output files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stl_api::{LabelPayload, LabelSubmission, QueryKind, Rater, Task};
use stl_client::{drive_with_oracle, Client};
use stl_core::active::{random_queries, synthesize_queries, TrainingPool};
use stl_core::config::ExperimentConfig;
use stl_core::harness::{diversity_run, initial_model, run_ablation, summary_table, AblationSetting};
use stl_core::oracle::Oracle;
use stl_core::sim::{extract_features, save_trajectory, simulate};
use stl_core::stats::{distinction_histogram, DistinctionHistogram};
use stl_core::train::{
    evaluate, level_accuracy, preference_accuracy, read_level_dataset, read_preference_dataset, read_queries,
    train_level, train_preference, write_level_dataset, write_preference_dataset, write_queries, LevelDataset,
    LevelRecord, PreferenceDataset, PreferenceRecord, QueryOrigin, QueryRecord, StlConfig,
};
use stl_core::trust::TrustModel;
use stl_core::Seed;
use stl_service::{router, AppState, Session, SessionOptions};

#[derive(Parser)]
#[command(
    name = "stl",
    version,
    about = "Trust learning from trust levels and pairwise preferences"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML experiment config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => Ok(ExperimentConfig::load(p)?),
            None => Ok(ExperimentConfig::default()),
        }
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required for this command")
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Level,
    Preference,
}

impl From<Kind> for QueryKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Level => QueryKind::Level,
            Kind::Preference => QueryKind::Preference,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    A,
    B,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::A => Task::A,
            TaskArg::B => Task::B,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    A,
    B,
}

#[derive(Subcommand)]
enum Command {
    /// Print or write the effective config (defaults merged with --config) as TOML.
    Config,
    /// Fly random trajectories; writes trajectories, features.tsv and manifest.txt into --out.
    Simulate {
        #[arg(long)]
        count: usize,
    },
    /// Label a feature file with the synthetic rater; writes a dataset to --out.
    Label {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value = "level")]
        kind: Kind,
        /// Label without rater noise (for held-out sets).
        #[arg(long)]
        noiseless: bool,
    },
    /// Train stage a (levels) or b (preferences on top of a); writes a checkpoint to --out.
    Train {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        levels: Option<PathBuf>,
        #[arg(long)]
        preferences: Option<PathBuf>,
        /// Starting model: optional for task a, the stage-a model for task b.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Synthesize queries against a model and labeled pool; writes a query file to --out.
    ActiveQuery {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Level dataset whose features form the training pool.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        /// Emit uniform random samples instead, for comparison.
        #[arg(long)]
        random: bool,
    },
    /// Held-out accuracies and distinction histogram; writes JSON to --out.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        levels: Option<PathBuf>,
        #[arg(long)]
        preferences: Option<PathBuf>,
    },
    /// Seeded ablation runs; writes <setting>.jsonl, <setting>.csv and summary.txt into --out.
    Ablation {
        /// Setting name, repeatable; all settings if omitted.
        #[arg(long = "setting")]
        settings: Vec<String>,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 10)]
        runs: u64,
    },
    /// Synthesized-vs-random batch diversity per seed; writes JSON lines to --out.
    Diversity {
        #[arg(long, default_value_t = 10)]
        runs: u64,
    },
    /// Run the labeling service.
    Serve {
        /// Session directory for labels, checkpoints and trajectories.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Labeling console bundle served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Unlabeled trajectories flown for preference queries.
        #[arg(long, default_value_t = 40)]
        unlabeled: usize,
    },
    /// Talk to a running service.
    Client {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[command(subcommand)]
        command: ClientCommand,
    },
}

#[derive(Subcommand)]
enum ClientCommand {
    Health,
    Query {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Submit a level (`--level`) or a preference (`--prefer a|b`).
    Label {
        #[arg(long)]
        query_id: String,
        #[arg(long, conflicts_with = "prefer")]
        level: Option<f64>,
        #[arg(long, value_enum)]
        prefer: Option<Side>,
    },
    Retrain {
        #[arg(long, value_enum)]
        task: TaskArg,
    },
    Metrics,
    Trajectory {
        id: String,
    },
    /// Answer `count` queries with the synthetic rater.
    Drive {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        count: usize,
    },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn rater(config: &ExperimentConfig, seed: Seed, noiseless: bool) -> Result<Oracle> {
    let spec = if noiseless {
        config.oracle.clone().noiseless()
    } else {
        config.oracle.clone()
    };
    let seed = Seed(config.oracle.seed.0 ^ seed.derive("label").0);
    Ok(Oracle::with_seed(&spec, seed)?)
}

fn stl_config(config: &ExperimentConfig, seed: Seed) -> StlConfig {
    let mut stl = config.stl.clone();
    stl.train.seed = seed.derive("train");
    stl
}

fn read_levels(path: Option<&Path>, config: &ExperimentConfig) -> Result<LevelDataset> {
    match path {
        Some(p) => Ok(read_level_dataset(p, &config.demarcations)?),
        None => Ok(LevelDataset::default()),
    }
}

fn read_prefs(path: Option<&Path>) -> Result<PreferenceDataset> {
    match path {
        Some(p) => Ok(read_preference_dataset(p)?),
        None => Ok(PreferenceDataset::default()),
    }
}

fn cmd_simulate(common: &Common, count: usize) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let seed = Seed(common.seed);
    let fbox = config.feature_box();
    let calibration = config.sim.calibration();
    let targets = random_queries(&fbox, count, seed.derive("simulate"));
    let mut records = Vec::with_capacity(count);
    let mut manifest = String::new();
    for (i, target) in targets.iter().enumerate() {
        let id = format!("traj-{i:04}");
        let params = calibration.params_for_features(target, &fbox)?;
        let traj = simulate(&params, &config.sim, seed.derive("flight").index(i as u64), &id)?;
        save_trajectory(out.join(format!("{id}.traj")), &traj)?;
        records.push(QueryRecord {
            query_id: id.clone(),
            origin: QueryOrigin::Random,
            features: extract_features(&traj, &config.sim.reference_pattern())?,
        });
        manifest.push_str(&id);
        manifest.push('\n');
    }
    write_queries(out.join("features.tsv"), &records)?;
    write(&out.join("manifest.txt"), manifest)?;
    println!("simulated {count} trajectories into {}", out.display());
    Ok(())
}

fn cmd_label(common: &Common, features: &Path, kind: Kind, noiseless: bool) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    let queries = read_queries(features)?;
    let mut oracle = rater(&config, Seed(common.seed), noiseless)?;
    match kind {
        Kind::Level => {
            let data = LevelDataset::new(
                queries
                    .iter()
                    .map(|q| LevelRecord {
                        trajectory_id: q.query_id.clone(),
                        features: q.features,
                        label: oracle.rate_level(&q.features, &config.demarcations),
                    })
                    .collect(),
            );
            write_level_dataset(out, &data)?;
            println!("labeled {} levels into {}", data.len(), out.display());
        }
        Kind::Preference => {
            if queries.len() % 2 == 1 {
                eprintln!("warning: odd number of trajectories; the last one is unused");
            }
            let data = PreferenceDataset::new(
                queries
                    .chunks_exact(2)
                    .map(|c| PreferenceRecord {
                        pair_id: format!("{}|{}", c[0].query_id, c[1].query_id),
                        first: c[0].features,
                        second: c[1].features,
                        label: oracle.rate_preference(&c[0].features, &c[1].features),
                    })
                    .collect(),
            );
            write_preference_dataset(out, &data)?;
            println!("labeled {} pairs into {}", data.len(), out.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainLine {
    task: &'static str,
    epochs: usize,
    final_loss: f64,
    level_accuracy: Option<f64>,
    preference_accuracy: Option<f64>,
}

fn cmd_train(
    common: &Common,
    task: TaskArg,
    levels: Option<&Path>,
    preferences: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    let seed = Seed(common.seed);
    let stl = stl_config(&config, seed);
    let levels = read_levels(levels, &config)?;
    let prefs = read_prefs(preferences)?;
    let (outcome, name) = match task {
        TaskArg::A => {
            if levels.is_empty() {
                bail!("task a needs a non-empty --levels file");
            }
            let start = match checkpoint {
                Some(p) => TrustModel::load(p)?,
                None => initial_model(&config, seed)?,
            };
            (train_level(&start, &levels, &stl)?, "a")
        }
        TaskArg::B => {
            let Some(p) = checkpoint else {
                bail!("task b needs the stage-a model: pass --checkpoint");
            };
            if prefs.is_empty() {
                bail!("task b needs a non-empty --preferences file");
            }
            let theta_a = TrustModel::load(p).with_context(|| format!("loading stage-a model {}", p.display()))?;
            (train_preference(&theta_a, &prefs, &stl)?, "b")
        }
    };
    outcome.model.save(out)?;
    let line = TrainLine {
        task: name,
        epochs: outcome.history.len(),
        final_loss: outcome.history.last().copied().unwrap_or(f64::NAN),
        level_accuracy: level_accuracy(&outcome.model, &config.demarcations, &levels),
        preference_accuracy: preference_accuracy(&outcome.model, &prefs),
    };
    print!("{}", json_line(&line)?);
    Ok(())
}

fn cmd_active_query(common: &Common, checkpoint: &Path, pool: Option<&Path>, count: usize, random: bool) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    let seed = Seed(common.seed);
    let fbox = config.feature_box();
    let records: Vec<QueryRecord> = if random {
        random_queries(&fbox, count, seed.derive("random-batch"))
            .into_iter()
            .enumerate()
            .map(|(i, features)| QueryRecord {
                query_id: format!("random-{i:04}"),
                origin: QueryOrigin::Random,
                features,
            })
            .collect()
    } else {
        let model = TrustModel::load(checkpoint)?;
        let pool = TrainingPool::new(read_levels(pool, &config)?.features());
        let mut query = config.query.clone();
        query.seed = seed.derive("query");
        synthesize_queries(&model, &pool, &fbox, &query, count)?
            .into_iter()
            .enumerate()
            .map(|(i, q)| QueryRecord {
                query_id: format!("active-{i:04}"),
                origin: QueryOrigin::Active,
                features: q.features,
            })
            .collect()
    };
    write_queries(out, &records)?;
    println!("wrote {} queries to {}", records.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    level_accuracy: Option<f64>,
    preference_accuracy: Option<f64>,
    level_count: usize,
    preference_count: usize,
    histogram: DistinctionHistogram,
}

fn cmd_evaluate(common: &Common, checkpoint: &Path, levels: Option<&Path>, preferences: Option<&Path>) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    let model = TrustModel::load(checkpoint)?;
    let levels = read_levels(levels, &config)?;
    let prefs = read_prefs(preferences)?;
    if levels.is_empty() && prefs.is_empty() {
        bail!("nothing to evaluate: pass --levels and/or --preferences");
    }
    let ev = evaluate(&model, &config.demarcations, &levels, &prefs);
    let report = EvaluationReport {
        level_accuracy: ev.level_accuracy,
        preference_accuracy: ev.preference_accuracy,
        level_count: levels.len(),
        preference_count: prefs.len(),
        histogram: distinction_histogram(&model, &levels.features(), &config.thresholds),
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    write(out, &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_ablation(common: &Common, settings: &[String], runs: u64) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let settings: Vec<AblationSetting> = if settings.is_empty() {
        AblationSetting::ALL.to_vec()
    } else {
        settings.iter().map(|s| s.parse()).collect::<stl_core::Result<_>>()?
    };
    let seeds: Vec<u64> = (common.seed..common.seed + runs).collect();
    let mut reports = Vec::with_capacity(settings.len());
    for s in settings {
        let report = run_ablation(s, &config, &seeds)?;
        write(&out.join(format!("{s}.jsonl")), report.to_jsonl()?)?;
        write(&out.join(format!("{s}.csv")), report.to_csv())?;
        reports.push(report);
    }
    let table = summary_table(&reports);
    write(&out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_diversity(common: &Common, runs: u64) -> Result<()> {
    let config = common.config()?;
    let out = common.out()?;
    let mut text = String::new();
    let mut lower = 0;
    for seed in common.seed..common.seed + runs {
        let d = diversity_run(&config, seed)?;
        lower += usize::from(d.active_similarity < d.random_similarity);
        text.push_str(&json_line(&d)?);
    }
    write(out, &text)?;
    println!("synthesized batch less similar to the pool than random in {lower}/{runs} seeds");
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn cmd_serve(common: &Common, dir: &Path, addr: &str, static_dir: Option<PathBuf>, unlabeled: usize) -> Result<()> {
    let options = SessionOptions {
        config: common.config()?,
        seed: common.seed,
        unlabeled,
    };
    let session = Session::open(dir, options)?;
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        let app = router(AppState::new(session), static_dir);
        stl_service::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_client(common: &Common, url: &str, command: ClientCommand) -> Result<()> {
    let client = Client::new(url);
    runtime()?.block_on(async {
        match command {
            ClientCommand::Health => print_json(&client.health().await?),
            ClientCommand::Query { kind } => print_json(&client.next_query(kind.into()).await?),
            ClientCommand::Label {
                query_id,
                level,
                prefer,
            } => {
                let payload = match (level, prefer) {
                    (Some(level), None) => LabelPayload::Level { level },
                    (None, Some(Side::A)) => LabelPayload::Preference { label: [1, 0] },
                    (None, Some(Side::B)) => LabelPayload::Preference { label: [0, 1] },
                    _ => bail!("pass exactly one of --level or --prefer"),
                };
                let submission = LabelSubmission {
                    query_id,
                    payload,
                    rater: Rater::Human,
                    timestamp: std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map_or(0, |d| d.as_secs()),
                };
                print_json(&client.submit(&submission).await?)
            }
            ClientCommand::Retrain { task } => print_json(&client.retrain(task.into()).await?),
            ClientCommand::Metrics => print_json(&client.metrics().await?),
            ClientCommand::Trajectory { id } => print_json(&client.trajectory(&id).await?),
            ClientCommand::Drive { kind, count } => {
                let config = common.config()?;
                let mut oracle = rater(&config, Seed(common.seed), false)?;
                let answered =
                    drive_with_oracle(&client, &mut oracle, &config.demarcations, kind.into(), count).await?;
                if let Some((_, _, ack)) = answered.last() {
                    print_json(ack)?;
                }
                Ok(())
            }
        }
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let common = &cli.common;
    match cli.command {
        Command::Config => {
            let text = common.config()?.to_toml()?;
            match &common.out {
                Some(p) => write(p, text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Simulate { count } => cmd_simulate(common, count),
        Command::Label {
            features,
            kind,
            noiseless,
        } => cmd_label(common, &features, kind, noiseless),
        Command::Train {
            task,
            levels,
            preferences,
            checkpoint,
        } => cmd_train(
            common,
            task,
            levels.as_deref(),
            preferences.as_deref(),
            checkpoint.as_deref(),
        ),
        Command::ActiveQuery {
            checkpoint,
            pool,
            count,
            random,
        } => cmd_active_query(common, &checkpoint, pool.as_deref(), count, random),
        Command::Evaluate {
            checkpoint,
            levels,
            preferences,
        } => cmd_evaluate(common, &checkpoint, levels.as_deref(), preferences.as_deref()),
        Command::Ablation { settings, runs } => cmd_ablation(common, &settings, runs),
        Command::Diversity { runs } => cmd_diversity(common, runs),
        Command::Serve {
            dir,
            addr,
            static_dir,
            unlabeled,
        } => cmd_serve(common, &dir, &addr, static_dir, unlabeled),
        Command::Client { url, command } => cmd_client(common, &url, command),
    }
}
