//! Estimate the best score any classifier could reach on a dataset whose
//! annotators disagree.
//!
//! Run with `cargo run --example best_score`.
//!
//! When annotations are split 60/40, no prediction scores perfectly: even
//! the ideal model is capped by the disagreement itself. The estimator
//! samples each example's posterior label distribution and scores the
//! oracle that predicts exactly that distribution, giving the ceiling a
//! real model should be compared against.

use polyscore::best::best_scores;
use polyscore::io::AnnotationMatrix;
use polyscore::metrics::MetricKind;
use polyscore::util::derived_rng;
use rand::Rng;

fn main() -> Result<(), polyscore::Error> {
    // Synthetic dataset: 500 examples, 4 classes, 5 annotators each. Half
    // the examples are near-unanimous, half genuinely contested.
    let mut rng = derived_rng(42, &[]);
    let mut rows = Vec::new();
    for i in 0..500 {
        let contested = i % 2 == 1;
        let favorite = rng.random_range(0..4usize);
        let mut counts = [0u32; 4];
        for _ in 0..5 {
            let c = if contested && rng.random::<f64>() < 0.45 {
                rng.random_range(0..4usize)
            } else {
                favorite
            };
            counts[c] += 1;
        }
        rows.push((format!("ex-{i:04}"), counts.to_vec()));
    }
    let annotations = AnnotationMatrix::from_rows(rows)?;

    let metrics = [
        MetricKind::Accuracy,
        MetricKind::MacroF1,
        MetricKind::XentropySoft,
        MetricKind::TotalVariation,
    ];
    let estimates = best_scores(&annotations, &metrics, 4000, 0, None)?;

    println!("best achievable scores over {} examples:", annotations.n());
    println!("{:>16} {:>12} {:>12}", "metric", "ceiling", "std error");
    for e in &estimates {
        println!("{:>16} {:>12.4} {:>12.2e}", e.metric.name(), e.score, e.std_error);
    }
    println!(
        "\n(accuracy below 1.0 is not a model failure: annotators themselves \
         disagree,\n so even a perfect model cannot match every vote)"
    );
    Ok(())
}
