//! Command-line entry points.

use crate::config::{ConfigError, RunConfig};
use crate::env::AgentAction;
use crate::eval::{self, BootstrapSettings, EpisodeResult};
use crate::policies::{BaselinePolicy, IdlePolicy, Policy, RandomPolicy};
use crate::replay::{check_fidelity, lobster::Sentinels, DayData};
use crate::rl::apex::write_curve_csv;
use crate::rl::market::{MarketEnv, PreparedDay};
use crate::rl::{train, Checkpoint, GreedyPolicy, QNetwork, TrainOptions};
use crate::signal::{confusion_matrix, mean_diagonal, Direction};
use crate::synth::generate_day;
use clap::{Args, Parser, Subcommand};
use log::info;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Data(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "lobrl",
    version,
    about = "Order book replay, oracle signals and Q-learning execution agents"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set env.kappa=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Root of the timestamped run directories.
    #[arg(long, env = "LOBRL_OUT_DIR", global = true)]
    pub out_dir: Option<PathBuf>,
    /// Actor threads for training and worker threads for evaluation.
    #[arg(long, env = "LOBRL_THREADS", global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write synthetic message/orderbook pairs for every configured date.
    Datagen,
    /// Rebuild every day from its messages and compare against the orderbook file.
    ReplayCheck,
    /// Class shares and confusion matrices of the oracle signal per concentration level.
    SignalStats,
    /// Train the Q-learning agent on the training dates.
    Train,
    /// Evaluate strategies on the test dates.
    Evaluate {
        /// Trained checkpoint (overrides eval.checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Datagen => "datagen",
            Command::ReplayCheck => "replay-check",
            Command::SignalStats => "signal-stats",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

/// Resolves the configuration: defaults < file < environment < flags.
pub fn resolve_config(common: &CommonArgs, command: &Command) -> Result<RunConfig, RunError> {
    let mut overrides = Vec::new();
    if let Some(d) = &common.out_dir {
        overrides.push(format!(
            "out_dir={}",
            toml::Value::String(d.display().to_string())
        ));
    }
    if let Some(t) = common.threads {
        overrides.push(format!("trainer.workers={t}"));
        overrides.push(format!("eval.threads={t}"));
    }
    if let Command::Evaluate {
        checkpoint: Some(p),
    } = command
    {
        overrides.push(format!(
            "eval.checkpoint={}",
            toml::Value::String(p.display().to_string())
        ));
    }
    overrides.extend(common.overrides.iter().cloned());
    Ok(RunConfig::load(common.config.as_deref(), &overrides)?)
}

/// Creates `out_dir/<command>-<timestamp>` and writes the resolved config.
pub fn create_run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf, RunError> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = cfg.out_dir.join(format!("{command}-{stamp}"));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    std::fs::write(dir.join("config.resolved.toml"), cfg.to_toml()).map_err(runtime)?;
    Ok(dir)
}

pub fn execute(cfg: &RunConfig, command: &Command) -> Result<PathBuf, RunError> {
    let dir = create_run_dir(cfg, command.name())?;
    info!("{} -> {}", command.name(), dir.display());
    match command {
        Command::Datagen => datagen(cfg, &dir)?,
        Command::ReplayCheck => replay_check(cfg, &dir)?,
        Command::SignalStats => signal_stats(cfg, &dir)?,
        Command::Train => train_cmd(cfg, &dir)?,
        Command::Evaluate { .. } => evaluate(cfg, &dir)?,
    }
    Ok(dir)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result =
        resolve_config(&cli.common, &cli.command).and_then(|cfg| execute(&cfg, &cli.command));
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("lobrl: {e}");
            e.exit_code()
        }
    }
}

fn all_dates(cfg: &RunConfig) -> Vec<String> {
    cfg.data
        .train_dates
        .iter()
        .chain(&cfg.data.test_dates)
        .cloned()
        .collect()
}

fn require_files(cfg: &RunConfig, dates: &[String]) -> Result<(), RunError> {
    let missing = cfg.missing_files(dates);
    if missing.is_empty() {
        Ok(())
    } else {
        Err(RunError::Data(format!(
            "{} data file(s) missing, first: {} (run `lobrl datagen` for synthetic data)",
            missing.len(),
            missing[0].display()
        )))
    }
}

pub fn load_day(cfg: &RunConfig, date: &str) -> Result<DayData, RunError> {
    let (m, o) = cfg.data.paths(date);
    DayData::load(&m, &o).map_err(|e| RunError::Data(format!("{date}: {e}")))
}

pub fn prepare_days(cfg: &RunConfig, dates: &[String]) -> Result<Vec<PreparedDay>, RunError> {
    require_files(cfg, dates)?;
    dates
        .iter()
        .map(|d| Ok(PreparedDay::new(d.clone(), load_day(cfg, d)?, &cfg.env)))
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, RunError> {
    csv::Writer::from_path(path).map_err(runtime)
}

fn datagen(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(&cfg.data.dir)
        .map_err(|e| RunError::Data(format!("{}: {e}", cfg.data.dir.display())))?;
    let mut w = csv_writer(&dir.join("datagen.csv"))?;
    w.write_record([
        "date",
        "messages",
        "adds",
        "partial_cancels",
        "deletes",
        "executions",
        "hidden",
        "walk_moves",
    ])
    .map_err(runtime)?;
    for date in all_dates(cfg) {
        let (m, o) = cfg.data.paths(&date);
        let s = generate_day(&cfg.synth_for(&date), &m, &o)
            .map_err(|e| RunError::Data(format!("{date}: {e}")))?;
        info!("{date}: {} messages", s.messages);
        w.write_record([
            date.clone(),
            s.messages.to_string(),
            s.adds.to_string(),
            s.partial_cancels.to_string(),
            s.deletes.to_string(),
            s.executions.to_string(),
            s.hidden.to_string(),
            s.walk_moves.to_string(),
        ])
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn replay_check(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let dates = all_dates(cfg);
    require_files(cfg, &dates)?;
    let mut w = csv_writer(&dir.join("replay_check.csv"))?;
    w.write_record(["date", "rows", "matched", "first_mismatch", "anomalies"])
        .map_err(runtime)?;
    let mut bad = Vec::new();
    for date in &dates {
        let r = check_fidelity(&load_day(cfg, date)?, &Sentinels::default());
        w.write_record([
            date.clone(),
            r.rows.to_string(),
            r.matched.to_string(),
            r.first_mismatch.map(|v| v.to_string()).unwrap_or_default(),
            r.anomalies.to_string(),
        ])
        .map_err(runtime)?;
        if !r.is_perfect() {
            bad.push(date.clone());
        }
    }
    w.flush().map_err(runtime)?;
    if bad.is_empty() {
        Ok(())
    } else {
        Err(RunError::Data(format!(
            "replay mismatches on {}",
            bad.join(", ")
        )))
    }
}

fn signal_stats(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let dates = all_dates(cfg);
    let days = prepare_days(cfg, &dates)?;
    let mut w = csv_writer(&dir.join("signal_stats.csv"))?;
    let mut header = vec![
        "a_high".to_string(),
        "points".into(),
        "share_down".into(),
        "share_stable".into(),
        "share_up".into(),
    ];
    for r in ["down", "stable", "up"] {
        for p in ["down", "stable", "up"] {
            header.push(format!("cm_{r}_{p}"));
        }
    }
    header.push("mean_diagonal".into());
    w.write_record(&header).map_err(runtime)?;
    for &a in &cfg.stats.a_levels {
        let mut params = cfg.signal.clone();
        params.a_high = a;
        let mut scores = Vec::new();
        let mut realized: Vec<Direction> = Vec::new();
        let mut counts = [0usize; 3];
        for day in &days {
            let track = day.signal(&cfg.env, &params, 0).map_err(runtime)?;
            for (s, r) in track.scores.iter().zip(&track.realized) {
                if let Some(r) = r {
                    scores.push(*s);
                    realized.push(*r);
                    counts[r.index()] += 1;
                }
            }
        }
        let cm = confusion_matrix(&scores, &realized).map_err(runtime)?;
        let n = realized.len().max(1) as f64;
        let mut row = vec![a.to_string(), realized.len().to_string()];
        row.extend(counts.iter().map(|&c| (c as f64 / n).to_string()));
        row.extend(cm.iter().flatten().map(|v| v.to_string()));
        row.push(mean_diagonal(&cm).to_string());
        w.write_record(&row).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn train_cmd(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let days: Arc<[PreparedDay]> = prepare_days(cfg, &cfg.data.train_dates)?.into();
    let workers = cfg.trainer.workers;
    let options = TrainOptions {
        checkpoint_path: Some(dir.join("checkpoint.json")),
        config_tag: cfg.to_toml(),
        initial: None,
    };
    let make_env = |i: usize| {
        MarketEnv::new(
            cfg.env.clone(),
            days.clone(),
            cfg.signal.clone(),
            cfg.data.tick,
            i,
            workers,
        )
        .map_err(|e| e.to_string())
    };
    let outcome = train(
        &cfg.trainer,
        make_env,
        cfg.env.dir_weight,
        cfg.env.dir_decay,
        &options,
    )
    .map_err(runtime)?;
    write_curve_csv(&dir.join("training_curve.csv"), &outcome.curve).map_err(runtime)?;
    info!(
        "trained {} learner steps over {} env steps ({} episodes)",
        outcome.checkpoint.learner_steps,
        outcome.env_steps,
        outcome.episode_returns.len()
    );
    match outcome.aborted {
        Some(reason) => Err(RunError::Runtime(format!(
            "training aborted ({reason}); checkpoint saved"
        ))),
        None => Ok(()),
    }
}

/// Loads a checkpoint and checks it fits the configured observation.
pub fn load_network(cfg: &RunConfig, path: &Path) -> Result<QNetwork, RunError> {
    if !path.exists() {
        return Err(RunError::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    let ck = Checkpoint::load(path).map_err(|e| RunError::Config(e.to_string()))?;
    if ck.network.inputs() != cfg.env.observation_dim()
        || ck.network.actions() != AgentAction::COUNT
    {
        return Err(RunError::Config(format!(
            "checkpoint expects {} inputs, the environment produces {}",
            ck.network.inputs(),
            cfg.env.observation_dim()
        )));
    }
    Ok(ck.network)
}

/// Plays `strategy` on every day.
pub fn evaluate_strategy(
    cfg: &RunConfig,
    days: &[PreparedDay],
    strategy: &str,
    network: Option<&QNetwork>,
) -> Result<Vec<EpisodeResult>, RunError> {
    let env = &cfg.env;
    let (tick, seed, threads) = (cfg.data.tick, cfg.eval.episode_seed, cfg.eval.threads);
    let results = match strategy {
        "buy_and_hold" => days
            .iter()
            .map(|d| eval::run_buy_and_hold(env, d, tick))
            .collect(),
        "rl" => {
            let net = network
                .ok_or_else(|| RunError::Config("the rl strategy needs a checkpoint".into()))?;
            eval::run_days(env, days, &cfg.signal, tick, seed, threads, |_| {
                Box::new(GreedyPolicy::new(net.clone()))
            })
        }
        "baseline" => eval::run_days(env, days, &cfg.signal, tick, seed, threads, |_| {
            Box::new(BaselinePolicy::new(env.pos_min, env.pos_max)) as Box<dyn Policy>
        }),
        "random" => eval::run_days(env, days, &cfg.signal, tick, seed, threads, |i| {
            Box::new(RandomPolicy::new(
                cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9),
            )) as Box<dyn Policy>
        }),
        "idle" => eval::run_days(env, days, &cfg.signal, tick, seed, threads, |_| {
            Box::new(IdlePolicy) as Box<dyn Policy>
        }),
        other => return Err(RunError::Config(format!("unknown strategy `{other}`"))),
    };
    results.map_err(|e| RunError::Data(e.to_string()))
}

fn evaluate(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let wants = |s: &str| cfg.eval.strategies.iter().any(|x| x == s);
    let network = if wants("rl") {
        let path = cfg.eval.checkpoint.as_ref().ok_or_else(|| {
            RunError::Config(
                "evaluate needs --checkpoint (or eval.checkpoint) for the rl strategy".into(),
            )
        })?;
        Some(load_network(cfg, path)?)
    } else {
        None
    };
    let days = prepare_days(cfg, &cfg.data.test_dates)?;
    let mut results = Vec::new();
    for s in &cfg.eval.strategies {
        info!("evaluating {s}");
        results.extend(evaluate_strategy(cfg, &days, s, network.as_ref())?);
    }
    write_evaluation(cfg, dir, &results)
}

/// Writes the evaluation CSV suite for `results`.
pub fn write_evaluation(
    cfg: &RunConfig,
    dir: &Path,
    results: &[EpisodeResult],
) -> Result<(), RunError> {
    let boot = BootstrapSettings {
        level: cfg.stats.bootstrap_level,
        resamples: cfg.stats.bootstrap_resamples,
        seed: cfg.seed,
    };
    eval::write_account_curves(&dir.join("account_curves.csv"), results).map_err(runtime)?;
    eval::write_episode_metrics(&dir.join("episode_metrics.csv"), results).map_err(runtime)?;
    eval::write_turnover(&dir.join("turnover.csv"), &eval::turnover_report(results))
        .map_err(runtime)?;
    let groups = eval::by_strategy(results);
    let stats: Vec<_> = groups
        .values()
        .map(|rs| eval::action_stats(&rs.iter().map(|r| (*r).clone()).collect::<Vec<_>>()))
        .collect();
    eval::write_action_stats(&dir.join("action_stats.csv"), &stats).map_err(runtime)?;
    if results.len() >= 2 && groups.values().all(|g| g.len() >= 2) {
        let summaries = eval::summarize(results, boot).map_err(runtime)?;
        eval::write_summary(&dir.join("summary.csv"), &summaries).map_err(runtime)?;
        let names: Vec<&String> = groups.keys().collect();
        let mut comparisons = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                comparisons.push(eval::compare(results, a, b, boot).map_err(runtime)?);
            }
        }
        eval::write_significance(&dir.join("significance.csv"), &comparisons).map_err(runtime)?;
    } else {
        log::warn!("fewer than two episodes per strategy; skipping summary and significance");
    }
    Ok(())
}
