//! Score a model's predictions against annotation count vectors on every
//! supported metric.
//!
//! Run with `cargo run --example evaluate_predictions`.
//!
//! Alignment is by example id, not file order, so shuffled prediction
//! files score identically.

use polyscore::io::{align, AnnotationMatrix, PredKind, PredictionSet};
use polyscore::metrics::{evaluate, MetricKind};

fn main() -> Result<(), polyscore::Error> {
    let annotations = AnnotationMatrix::from_rows(vec![
        ("review-1".to_string(), vec![8u32, 1, 1]),
        ("review-2".to_string(), vec![2, 6, 2]),
        ("review-3".to_string(), vec![0, 3, 7]),
        ("review-4".to_string(), vec![5, 5, 0]),
        ("review-5".to_string(), vec![1, 1, 8]),
    ])?;

    // Predictions arrive in a different order — alignment handles it.
    let predictions = PredictionSet::from_rows(
        vec![
            ("review-3".to_string(), vec![0.10, 0.25, 0.65]),
            ("review-1".to_string(), vec![0.70, 0.20, 0.10]),
            ("review-5".to_string(), vec![0.15, 0.15, 0.70]),
            ("review-2".to_string(), vec![0.30, 0.50, 0.20]),
            ("review-4".to_string(), vec![0.45, 0.45, 0.10]),
        ],
        PredKind::Probabilities,
    )?;

    let eval = align(&annotations, &predictions)?;
    println!("model scores over {} examples:", eval.n());
    for kind in [
        MetricKind::XentropySoft,
        MetricKind::TotalVariation,
        MetricKind::Accuracy,
        MetricKind::MacroF1,
    ] {
        let v = evaluate(&eval, kind);
        println!(
            "  {:>16}: {:.4}  ({} is better)",
            kind.name(),
            v.value,
            if kind.higher_is_better() { "higher" } else { "lower" },
        );
    }

    // A uniform predictor is the canonical calibration reference: its soft
    // cross-entropy is exactly ln(k) regardless of the data.
    let uniform = PredictionSet::from_rows(
        annotations
            .ids()
            .iter()
            .map(|id| (id.clone(), vec![1.0 / 3.0; 3])),
        PredKind::Probabilities,
    )?;
    let u = evaluate(&align(&annotations, &uniform)?, MetricKind::XentropySoft);
    println!(
        "\nuniform-prediction cross-entropy = {:.6} (ln 3 = {:.6})",
        u.value,
        3f64.ln()
    );
    Ok(())
}
