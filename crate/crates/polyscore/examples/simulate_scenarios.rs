//! Validate the score-ceiling estimator on synthetic data.
//!
//! Run with `cargo run --release --example simulate_scenarios`.
//!
//! Each scenario draws a dataset from a known generative process, so the
//! true oracle score is computable exactly (or by direct Monte Carlo on
//! the known truth). The estimator only sees the sampled annotation
//! counts; the table below compares its ceiling estimate against the
//! known truth for each metric.
//!
//! Sizes are reduced here so the example runs in a few seconds; the
//! defaults in `sim::preset` are larger.

use polyscore::sim;

fn main() -> Result<(), polyscore::Error> {
    for name in ["annotators", "mixture"] {
        let mut config = sim::preset(name, 7)?;
        config.n_examples = 2_000;
        config.rounds = 2_000;

        println!("scenario: {name} (n = {}, k = {})", config.n_examples, config.k);
        let report = sim::run_scenario(&config)?;
        println!(
            "  {:<14} {:>12} {:>12} {:>10}",
            "metric", "true oracle", "estimate", "rel err"
        );
        for m in &report.metrics {
            println!(
                "  {:<14} {:>12.5} {:>12.5} {:>9.3}%",
                m.metric.name(),
                m.true_oracle,
                m.best_estimate.score,
                m.relative_error * 100.0
            );
        }
        println!();
    }
    Ok(())
}
