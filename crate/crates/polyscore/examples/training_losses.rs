//! The three count-aware training losses and their gradients.
//!
//! Run with `cargo run --example training_losses`.
//!
//! - soft: cross-entropy against the normalized count distribution; every
//!   example weighs the same.
//! - counts: cross-entropy against raw counts; heavily-annotated examples
//!   weigh more (with equal annotator counts it is exactly N times soft).
//! - dirichlet-multinomial: the exp of each logit is a concentration
//!   parameter, so the model can also express *how confident* the
//!   annotator pool is, not just the mean distribution.
//!
//! The gradients are analytic; a few steps of plain gradient descent on
//! the soft loss drive the softmax toward the empirical distribution.

use polyscore::io::AnnotationMatrix;
use polyscore::losses::{
    loss_counts, loss_dirichlet_multinomial, loss_soft, softmax_point_estimate, LogitBatch,
};

fn main() -> Result<(), polyscore::Error> {
    let annotations = AnnotationMatrix::from_rows(vec![
        ("a".to_string(), vec![6u32, 2, 2]),
        ("b".to_string(), vec![1, 8, 1]),
        ("c".to_string(), vec![3, 3, 4]),
    ])?;

    // Start from uninformed logits.
    let mut z = vec![vec![0.0f64; 3]; 3];

    let batch = LogitBatch::from_rows(z.clone())?;
    let (soft, _) = loss_soft(&batch, &annotations)?;
    let (counts, _) = loss_counts(&batch, &annotations)?;
    let (dm, _) = loss_dirichlet_multinomial(&batch, &annotations)?;
    println!("losses at uniform logits:");
    println!("  soft                   = {soft:.4}");
    println!("  counts                 = {counts:.4}  (= 10 x soft here: every row has 10 annotations)");
    println!("  dirichlet-multinomial  = {dm:.4}");

    // Gradient descent on the soft loss.
    println!("\ngradient descent on the soft loss:");
    for step in 0..=40 {
        let batch = LogitBatch::from_rows(z.clone())?;
        let (value, grad) = loss_soft(&batch, &annotations)?;
        if step % 10 == 0 {
            println!("  step {step:>2}: loss = {value:.6}");
        }
        for (zi, gi) in z.iter_mut().zip(&grad) {
            for (zij, gij) in zi.iter_mut().zip(gi) {
                *zij -= 1.5 * gij;
            }
        }
    }

    let fitted = LogitBatch::from_rows(z)?;
    let probs = softmax_point_estimate(&fitted);
    println!("\nfitted probabilities vs empirical annotation shares:");
    for (i, p) in probs.iter().enumerate() {
        let row = annotations.row(i);
        let total: u32 = row.iter().sum();
        let empirical: Vec<f64> = row.iter().map(|&c| c as f64 / total as f64).collect();
        println!("  {}: fitted {:?}", annotations.id(i), round3(p));
        println!("     empirical {:?}", round3(&empirical));
    }
    Ok(())
}

fn round3(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
