//! Run configuration: one TOML file, dotted-key overrides on top.

use crate::env::EnvConfig;
use crate::replay::lobster;
use crate::rl::TrainerConfig;
use crate::signal::SignalParams;
use crate::synth::FlowModel;
use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub symbol: String,
    pub depth: usize,
    pub tick: i64,
    /// Window encoded in the file names, seconds after midnight.
    pub start_seconds: f64,
    pub end_seconds: f64,
    pub train_dates: Vec<String>,
    pub test_dates: Vec<String>,
}

/// `n` consecutive weekdays starting at `first` (inclusive if a weekday).
pub fn weekdays(first: NaiveDate, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut d = first;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d.format("%Y-%m-%d").to_string());
        }
        d = d + Days::new(1);
    }
    out
}

impl Default for DataConfig {
    fn default() -> Self {
        let all = weekdays(NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(), 25);
        DataConfig {
            dir: PathBuf::from("data"),
            symbol: "SYN".into(),
            depth: 5,
            tick: 100,
            start_seconds: 34_200.0,
            end_seconds: 37_800.0,
            train_dates: all[..20].to_vec(),
            test_dates: all[20..].to_vec(),
        }
    }
}

impl DataConfig {
    fn window(&self) -> (u64, u64) {
        let ns = |s: f64| (s * 1e9).round() as u64;
        (ns(self.start_seconds), ns(self.end_seconds))
    }

    pub fn paths(&self, date: &str) -> (PathBuf, PathBuf) {
        let (start, end) = self.window();
        let (m, o) = lobster::file_names(&self.symbol, date, start, end, self.depth);
        (self.dir.join(m), self.dir.join(o))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Concentrations swept by `signal-stats` and the turnover check.
    pub a_levels: Vec<f64>,
    pub bootstrap_level: f64,
    pub bootstrap_resamples: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            a_levels: vec![1.1, 1.3, 1.6],
            bootstrap_level: 0.95,
            bootstrap_resamples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: Option<PathBuf>,
    /// Any of `rl`, `baseline`, `random`, `buy_and_hold`, `idle`.
    pub strategies: Vec<String>,
    /// Seeds the signal noise on test days; shared by all strategies.
    pub episode_seed: u64,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: None,
            strategies: ["rl", "baseline", "random", "buy_and_hold"]
                .map(String::from)
                .to_vec(),
            episode_seed: 1,
            threads: 1,
        }
    }
}

pub const STRATEGIES: [&str; 5] = ["rl", "baseline", "random", "buy_and_hold", "idle"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub synth: FlowModel,
    pub signal: SignalParams,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub stats: StatsConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            synth: FlowModel::default(),
            signal: SignalParams::default(),
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
            stats: StatsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` to a TOML table. Values parse as TOML, falling
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(assignment.into()));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Defaults, then `path` if given, then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for d in self.data.train_dates.iter().chain(&self.data.test_dates) {
            if NaiveDate::parse_from_str(d, "%Y-%m-%d").is_err() {
                return bad(format!("date `{d}` is not YYYY-MM-DD"));
            }
        }
        let train: BTreeSet<&String> = self.data.train_dates.iter().collect();
        if let Some(d) = self.data.test_dates.iter().find(|d| train.contains(d)) {
            return bad(format!("date {d} is in both the train and test sets"));
        }
        if train.len() != self.data.train_dates.len()
            || self.data.test_dates.iter().collect::<BTreeSet<_>>().len()
                != self.data.test_dates.len()
        {
            return bad("duplicate dates".into());
        }
        if self.data.depth == 0 || self.data.tick <= 0 {
            return bad("data.depth and data.tick must be positive".into());
        }
        if !(self.data.end_seconds > self.data.start_seconds) {
            return bad("data window is empty".into());
        }
        let env_end = self.env.start_seconds + self.env.episode_seconds;
        if self.env.start_seconds < self.data.start_seconds
            || env_end > self.data.end_seconds + 1e-9
        {
            return bad("episodes must lie inside the data window".into());
        }
        self.env
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.signal
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.trainer
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.synth.validate().map_err(ConfigError::Invalid)?;
        if self.synth.tick != self.data.tick {
            return bad("synth.tick must equal data.tick".into());
        }
        if self
            .stats
            .a_levels
            .iter()
            .any(|&a| !(a >= self.signal.a_low))
        {
            return bad("every a level must be at least signal.a_low".into());
        }
        if !(self.stats.bootstrap_level > 0.0 && self.stats.bootstrap_level < 1.0)
            || self.stats.bootstrap_resamples == 0
        {
            return bad("bootstrap level must lie in (0, 1) with at least one resample".into());
        }
        if let Some(s) = self
            .eval
            .strategies
            .iter()
            .find(|s| !STRATEGIES.contains(&s.as_str()))
        {
            return bad(format!("unknown strategy `{s}`"));
        }
        if self.eval.threads == 0 {
            return bad("eval.threads must be positive".into());
        }
        Ok(())
    }

    /// Message and orderbook files of `dates` that are missing.
    pub fn missing_files<'a>(&self, dates: impl IntoIterator<Item = &'a String>) -> Vec<PathBuf> {
        dates
            .into_iter()
            .flat_map(|d| {
                let (m, o) = self.data.paths(d);
                [m, o]
            })
            .filter(|p| !p.exists())
            .collect()
    }

    /// Flow model for one synthetic date.
    pub fn synth_for(&self, date: &str) -> FlowModel {
        let mut m = self.synth.clone();
        m.seed = crate::rl::market::episode_seed(self.seed ^ self.synth.seed, date, 0);
        m.start_seconds = self.data.start_seconds;
        m.end_seconds = self.data.end_seconds;
        m.depth = self.data.depth;
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_disjoint() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.data.train_dates.len(), 20);
        assert_eq!(c.data.test_dates.len(), 5);
        assert_eq!(c.data.train_dates[0], "2024-01-02");
        // 2024-01-06 is a Saturday
        assert!(!c.data.train_dates.contains(&"2024-01-06".to_string()));
    }

    #[test]
    fn overrides_beat_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\n[env]\nkappa = 0.2\n").unwrap();
        let c = RunConfig::load(
            Some(&p),
            &["env.kappa=0.3".into(), "data.symbol=XYZ".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.env.kappa, 0.3);
        assert_eq!(c.data.symbol, "XYZ");
        assert_eq!(c.env.pos_max, 10);
    }

    #[test]
    fn rejects_overlapping_dates_and_unknown_keys() {
        let o = [
            "data.train_dates=[\"2024-01-02\"]".to_string(),
            "data.test_dates=[\"2024-01-02\"]".to_string(),
        ];
        assert!(matches!(
            RunConfig::load(None, &o),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::load(None, &["env.nope=1".into()]),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            RunConfig::load(None, &["novalue".into()]),
            Err(ConfigError::Override(_))
        ));
    }

    #[test]
    fn lobster_paths() {
        let c = RunConfig::default();
        let (m, o) = c.data.paths("2024-01-02");
        assert_eq!(
            m,
            PathBuf::from("data/SYN_2024-01-02_34200000_37800000_message_5.csv")
        );
        assert_eq!(
            o,
            PathBuf::from("data/SYN_2024-01-02_34200000_37800000_orderbook_5.csv")
        );
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
