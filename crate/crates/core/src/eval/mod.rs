//! Account curves, episodic metrics, action statistics, turnover and
//! significance tests.

pub mod episode;
pub mod stats;

pub use episode::{run_buy_and_hold, run_days, run_episode, CurvePoint, EpisodeResult};
pub use stats::{
    bootstrap_ci, episodic_metrics, paired_t_test, EpisodicMetrics, StatsError, TTest,
};

use crate::env::AgentAction;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Share of skips among all decisions, and the split of sell and buy
/// orders over bid, mid and ask (percent).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionStats {
    pub strategy: String,
    pub decisions: u64,
    pub skipped: f64,
    pub sell_levels: Option<[f64; 3]>,
    pub buy_levels: Option<[f64; 3]>,
}

fn shares(counts: &[u64]) -> Option<[f64; 3]> {
    let total: u64 = counts.iter().sum();
    (total > 0).then(|| std::array::from_fn(|i| 100.0 * counts[i] as f64 / total as f64))
}

/// Pools the action counts of `results` (all of one strategy).
pub fn action_stats(results: &[EpisodeResult]) -> ActionStats {
    let mut counts = [0u64; AgentAction::COUNT];
    for r in results {
        for (c, v) in counts.iter_mut().zip(r.action_counts) {
            *c += v;
        }
    }
    let decisions: u64 = counts.iter().sum();
    ActionStats {
        strategy: results
            .first()
            .map(|r| r.strategy.clone())
            .unwrap_or_default(),
        decisions,
        skipped: if decisions == 0 {
            0.0
        } else {
            100.0 * counts[AgentAction::Skip.index()] as f64 / decisions as f64
        },
        sell_levels: shares(&counts[0..3]),
        buy_levels: shares(&counts[3..6]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnoverRow {
    pub strategy: String,
    pub episode: String,
    pub shares: u64,
    pub notional: f64,
}

pub fn turnover_report(results: &[EpisodeResult]) -> Vec<TurnoverRow> {
    results
        .iter()
        .map(|r| TurnoverRow {
            strategy: r.strategy.clone(),
            episode: r.episode.clone(),
            shares: r.turnover,
            notional: r.turnover_notional,
        })
        .collect()
}

/// Results grouped by strategy, episodes in input order.
pub fn by_strategy(results: &[EpisodeResult]) -> BTreeMap<String, Vec<&EpisodeResult>> {
    let mut map: BTreeMap<String, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        map.entry(r.strategy.clone()).or_default().push(r);
    }
    map
}

/// Mean over all steps of all episodes of the per-step log return, divided
/// by its standard deviation.
pub fn step_sharpe(results: &[&EpisodeResult]) -> Option<f64> {
    let inc: Vec<f64> = results
        .iter()
        .flat_map(|r| r.curve.windows(2).map(|w| w[1].log_value - w[0].log_value))
        .collect();
    if inc.len() < 2 {
        return None;
    }
    let s = stats::sample_std(&inc);
    (s > 0.0).then(|| inc.iter().sum::<f64>() / inc.len() as f64 / s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub metrics: EpisodicMetrics,
    pub ci: (f64, f64),
    pub step_sharpe: Option<f64>,
    pub mean_turnover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub test: TTest,
    /// Bootstrap interval of the mean paired difference.
    pub diff_ci: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSettings {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            level: 0.95,
            resamples: 10_000,
            seed: 0,
        }
    }
}

pub fn summarize(
    results: &[EpisodeResult],
    boot: BootstrapSettings,
) -> Result<Vec<StrategySummary>, StatsError> {
    by_strategy(results)
        .into_iter()
        .map(|(name, rs)| {
            let returns: Vec<f64> = rs.iter().map(|r| r.log_return).collect();
            Ok(StrategySummary {
                metrics: episodic_metrics(&returns)?,
                ci: bootstrap_ci(&returns, boot.level, boot.resamples, boot.seed)?,
                step_sharpe: step_sharpe(&rs),
                mean_turnover: rs.iter().map(|r| r.turnover as f64).sum::<f64>() / rs.len() as f64,
                strategy: name,
            })
        })
        .collect()
}

/// Paired comparison of two strategies over the episodes they share.
pub fn compare(
    results: &[EpisodeResult],
    a: &str,
    b: &str,
    boot: BootstrapSettings,
) -> Result<Comparison, StatsError> {
    let groups = by_strategy(results);
    let empty = Vec::new();
    let ra = groups.get(a).unwrap_or(&empty);
    let rb: BTreeMap<&str, f64> = groups
        .get(b)
        .unwrap_or(&empty)
        .iter()
        .map(|r| (r.episode.as_str(), r.log_return))
        .collect();
    let (xa, xb): (Vec<f64>, Vec<f64>) = ra
        .iter()
        .filter_map(|r| rb.get(r.episode.as_str()).map(|&y| (r.log_return, y)))
        .unzip();
    let test = paired_t_test(&xa, &xb)?;
    let diffs: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
    Ok(Comparison {
        a: a.into(),
        b: b.into(),
        test,
        diff_ci: bootstrap_ci(&diffs, boot.level, boot.resamples, boot.seed)?,
    })
}

fn csv_err(e: csv::Error) -> std::io::Error {
    e.into()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_account_curves(path: &Path, results: &[EpisodeResult]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["strategy", "episode", "time", "log_value"])
        .map_err(csv_err)?;
    for r in results {
        for p in &r.curve {
            w.write_record([
                r.strategy.as_str(),
                r.episode.as_str(),
                &p.time.to_string(),
                &p.log_value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()
}

pub fn write_episode_metrics(path: &Path, results: &[EpisodeResult]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "strategy",
        "episode",
        "log_return",
        "turnover",
        "turnover_notional",
        "fills",
        "cancels",
        "forced_orders",
        "disallowed",
    ])
    .map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.strategy.clone(),
            r.episode.clone(),
            r.log_return.to_string(),
            r.turnover.to_string(),
            r.turnover_notional.to_string(),
            r.fills.to_string(),
            r.cancels.to_string(),
            r.forced_orders.to_string(),
            r.disallowed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_summary(path: &Path, summaries: &[StrategySummary]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "strategy",
        "episodes",
        "mean_log_return",
        "std",
        "sharpe",
        "ci_lo",
        "ci_hi",
        "step_sharpe",
        "mean_turnover",
    ])
    .map_err(csv_err)?;
    for s in summaries {
        w.write_record([
            s.strategy.clone(),
            s.metrics.episodes.to_string(),
            s.metrics.mean.to_string(),
            s.metrics.std.to_string(),
            opt(s.metrics.sharpe),
            s.ci.0.to_string(),
            s.ci.1.to_string(),
            opt(s.step_sharpe),
            s.mean_turnover.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_action_stats(path: &Path, stats: &[ActionStats]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "strategy",
        "decisions",
        "skipped_pct",
        "sell_bid_pct",
        "sell_mid_pct",
        "sell_ask_pct",
        "buy_bid_pct",
        "buy_mid_pct",
        "buy_ask_pct",
    ])
    .map_err(csv_err)?;
    let cells =
        |l: Option<[f64; 3]>| -> [String; 3] { std::array::from_fn(|i| opt(l.map(|v| v[i]))) };
    for s in stats {
        let [sb, sm, sa] = cells(s.sell_levels);
        let [bb, bm, ba] = cells(s.buy_levels);
        w.write_record([
            s.strategy.clone(),
            s.decisions.to_string(),
            s.skipped.to_string(),
            sb,
            sm,
            sa,
            bb,
            bm,
            ba,
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_turnover(path: &Path, rows: &[TurnoverRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["strategy", "episode", "shares", "notional"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.episode.clone(),
            r.shares.to_string(),
            r.notional.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_significance(path: &Path, comparisons: &[Comparison]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "a",
        "b",
        "episodes",
        "mean_diff",
        "t",
        "df",
        "p",
        "degenerate",
        "diff_ci_lo",
        "diff_ci_hi",
    ])
    .map_err(csv_err)?;
    for c in comparisons {
        w.write_record([
            c.a.clone(),
            c.b.clone(),
            c.test.n.to_string(),
            c.test.mean_diff.to_string(),
            c.test.t.to_string(),
            c.test.df.to_string(),
            c.test.p.to_string(),
            c.test.degenerate.to_string(),
            c.diff_ci.0.to_string(),
            c.diff_ci.1.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::QuoteLevel;

    fn result(strategy: &str, episode: &str, counts: [u64; 7], ret: f64) -> EpisodeResult {
        EpisodeResult {
            strategy: strategy.into(),
            episode: episode.into(),
            log_return: ret,
            curve: vec![],
            turnover: 0,
            turnover_notional: 0.0,
            action_counts: counts,
            fills: 0,
            cancels: 0,
            forced_orders: 0,
            disallowed: 0,
        }
    }

    #[test]
    fn all_skip_and_single_level() {
        let s = action_stats(&[result("idle", "d", [0, 0, 0, 0, 0, 0, 50], 0.0)]);
        assert_eq!(s.skipped, 100.0);
        assert_eq!((s.sell_levels, s.buy_levels), (None, None));
        let mut counts = [0; 7];
        counts[AgentAction::buy(QuoteLevel::Mid).index()] = 1;
        let s = action_stats(&[result("x", "d", counts, 0.0)]);
        assert_eq!(s.buy_levels, Some([0.0, 100.0, 0.0]));
    }

    #[test]
    fn compare_pairs_by_episode() {
        let rs = vec![
            result("a", "d1", [0; 7], 0.75),
            result("a", "d2", [0; 7], 0.5),
            result("b", "d2", [0; 7], 0.25),
            result("b", "d1", [0; 7], 0.5),
        ];
        let c = compare(&rs, "a", "b", BootstrapSettings::default()).unwrap();
        assert!(c.test.degenerate);
        assert!(c.test.mean_diff == 0.25);
    }
}
