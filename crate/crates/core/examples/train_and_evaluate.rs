//! Small end-to-end run: synthetic days, Q-learning on the trading
//! environment, evaluation against the benchmarks.

use lobrl::config::RunConfig;
use lobrl::eval::{compare, summarize, BootstrapSettings};
use lobrl::run::{evaluate_strategy, execute, load_network, prepare_days, Command};

fn main() {
    let root = std::env::temp_dir().join("lobrl-train-example");
    let quoted = |p: std::path::PathBuf| toml::Value::String(p.display().to_string());
    let overrides = vec![
        format!("out_dir={}", quoted(root.join("runs"))),
        format!("data.dir={}", quoted(root.join("data"))),
        "data.end_seconds=35100".into(),
        "data.train_dates=[\"2024-01-02\", \"2024-01-03\", \"2024-01-04\", \"2024-01-05\"]".into(),
        "data.test_dates=[\"2024-01-08\", \"2024-01-09\", \"2024-01-10\"]".into(),
        "env.episode_seconds=900".into(),
        "env.history=10".into(),
        "env.dir_decay=0.99998".into(),
        "signal.a_high=10".into(),
        "trainer.total_timesteps=200000".into(),
        "trainer.log_every=2000".into(),
    ];
    let cfg = RunConfig::load(None, &overrides).unwrap();
    execute(&cfg, &Command::Datagen).unwrap();
    let dir = execute(&cfg, &Command::Train).unwrap();
    let net = load_network(&cfg, &dir.join("checkpoint.json")).unwrap();

    let days = prepare_days(&cfg, &cfg.data.test_dates).unwrap();
    let mut results = Vec::new();
    for s in ["rl", "baseline", "random"] {
        results.extend(evaluate_strategy(&cfg, &days, s, Some(&net)).unwrap());
    }
    let boot = BootstrapSettings::default();
    for s in summarize(&results, boot).unwrap() {
        println!(
            "{:<9} mean {:+.3e}  95% CI [{:+.3e}, {:+.3e}]  turnover {:.0}",
            s.strategy, s.metrics.mean, s.ci.0, s.ci.1, s.mean_turnover
        );
    }
    let c = compare(&results, "rl", "random", boot).unwrap();
    println!("rl - random: t = {:.2}, p = {:.2e}", c.test.t, c.test.p);
}
