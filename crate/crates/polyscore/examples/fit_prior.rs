//! Fit a Dirichlet prior to annotation counts and inspect the posterior
//! of a single example.
//!
//! Run with `cargo run --example fit_prior`.
//!
//! The prior captures how label distributions vary across a dataset; the
//! per-example posterior (prior + observed counts) is what every
//! downstream estimator samples from.

use polyscore::dirichlet::{fit_prior, posterior_params, sample_dirichlet};
use polyscore::io::AnnotationMatrix;
use polyscore::util::derived_rng;

fn main() -> Result<(), polyscore::Error> {
    // Twelve examples, three classes, seven annotators each. Most rows
    // lean toward class 0, but with real disagreement.
    let rows: Vec<(String, Vec<u32>)> = [
        [5, 2, 0],
        [6, 1, 0],
        [4, 2, 1],
        [7, 0, 0],
        [3, 3, 1],
        [5, 1, 1],
        [2, 4, 1],
        [6, 0, 1],
        [4, 3, 0],
        [1, 5, 1],
        [5, 0, 2],
        [3, 2, 2],
    ]
    .iter()
    .enumerate()
    .map(|(i, c)| (format!("ex-{i:02}"), c.to_vec()))
    .collect();
    let annotations = AnnotationMatrix::from_rows(rows)?;

    let report = fit_prior(&annotations)?;
    println!(
        "fitted alpha = {:?}\n  concentration total = {:.3}\n  mean label distribution = {:?}\n  converged = {} in {} iterations (final nll {:.4})",
        report.prior.alpha(),
        report.prior.total(),
        report.prior.mean(),
        report.converged,
        report.iterations,
        report.final_nll,
    );

    // Posterior for one example: the prior acts as pseudo-counts.
    let counts = annotations.row(4); // [3, 3, 1]
    let posterior = posterior_params(&report.prior, counts)?;
    println!(
        "\nexample {:?} with counts {:?}:\n  posterior alpha = {:?}\n  posterior mean  = {:?}",
        annotations.id(4),
        counts,
        posterior.alpha(),
        posterior.mean(),
    );

    // Draw a few plausible label distributions for that example.
    let mut rng = derived_rng(0, &[]);
    println!("\nthree posterior draws of its label distribution:");
    for _ in 0..3 {
        let theta = sample_dirichlet(&posterior, &mut rng);
        println!("  {theta:?}");
    }
    Ok(())
}
