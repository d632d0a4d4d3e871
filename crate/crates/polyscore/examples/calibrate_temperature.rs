//! Recover a softmax temperature from overconfident logits.
//!
//! Run with `cargo run --example calibrate_temperature`.
//!
//! A model whose logits are exactly right except for a constant scale
//! factor is fixed by dividing them by one fitted temperature. Here the
//! true per-example label distributions are known, the logits are their
//! logs scaled up by 10 (overconfident by construction), and the fit
//! recovers T close to 10.

use polyscore::io::AnnotationMatrix;
use polyscore::losses::{fit_temperature, mean_soft_xe, LogitBatch};
use polyscore::util::derived_rng;
use rand::Rng;

fn main() -> Result<(), polyscore::Error> {
    let k = 4;
    let n = 400;
    let mut rng = derived_rng(7, &[]);

    // True label distributions and annotation counts drawn from them.
    let mut logit_rows = Vec::with_capacity(n);
    let mut count_rows = Vec::with_capacity(n);
    for i in 0..n {
        // A random distribution with moderate entropy.
        let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.2).collect();
        let total: f64 = weights.iter().sum();
        let theta: Vec<f64> = weights.iter().map(|w| w / total).collect();

        // Overconfident logits: 10 * ln(theta).
        logit_rows.push(theta.iter().map(|p| 10.0 * p.ln()).collect::<Vec<f64>>());

        // 12 annotators vote from theta.
        let mut counts = vec![0u32; k];
        for _ in 0..12 {
            let mut u: f64 = rng.random();
            let mut c = k - 1;
            for (j, &p) in theta.iter().enumerate() {
                if u < p {
                    c = j;
                    break;
                }
                u -= p;
            }
            counts[c] += 1;
        }
        count_rows.push((format!("ex-{i:03}"), counts));
    }

    let annotations = AnnotationMatrix::from_rows(count_rows)?;
    let batch = LogitBatch::from_rows(logit_rows)?;

    let scaler = fit_temperature(&batch, &annotations)?;
    let before = mean_soft_xe(&batch, 1.0, &annotations)?;
    let after = mean_soft_xe(&batch, scaler.t, &annotations)?;

    println!("true temperature       = 10.0");
    println!("fitted temperature     = {:.4}", scaler.t);
    println!("soft cross-entropy @1  = {before:.4}");
    println!("soft cross-entropy @T  = {after:.4}");
    println!(
        "\n(the fit never hurts: T is kept at 1.0 whenever no rescaling \
         improves the fitting set)"
    );
    Ok(())
}
