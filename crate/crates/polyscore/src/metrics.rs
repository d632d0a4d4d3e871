//! Scoring predictions against annotation count vectors.
//!
//! Two metric families coexist here:
//!
//! - distributional metrics compare the predicted probability row against
//!   the normalized count row ([`cross_entropy_soft`], [`total_variation`]);
//! - hard metrics first reduce both sides to a single label — the
//!   prediction by arg-max, the annotations by majority vote with ties
//!   broken toward the lowest class index ([`accuracy`], [`macro_f1`]).
//!
//! All dataset-level values are means over examples, so scores are
//! comparable across datasets of different sizes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::AlignedEval;
use crate::util::argmax;

/// Floor applied inside every logarithm, so a predicted probability of
/// exactly zero yields a large finite penalty instead of infinity.
pub const LOG_CLAMP: f64 = 1e-12;

/// Which metric to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    XentropySoft,
    Accuracy,
    MacroF1,
    TotalVariation,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::XentropySoft => "xentropy_soft",
            MetricKind::Accuracy => "accuracy",
            MetricKind::MacroF1 => "macro_f1",
            MetricKind::TotalVariation => "total_variation",
        }
    }

    /// Whether larger values mean better predictions (false for the two
    /// divergence-style metrics).
    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::Accuracy | MetricKind::MacroF1)
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xentropy" | "xentropy_soft" | "cross_entropy" => Ok(MetricKind::XentropySoft),
            "accuracy" | "acc" => Ok(MetricKind::Accuracy),
            "macro_f1" | "macro-f1" | "f1" => Ok(MetricKind::MacroF1),
            "total_variation" | "total-variation" | "tv" => Ok(MetricKind::TotalVariation),
            other => Err(Error::InvalidValue {
                what: "metric",
                msg: format!(
                    "unknown metric {other:?}; expected xentropy, accuracy, macro_f1, or total_variation"
                ),
            }),
        }
    }
}

/// A computed metric: the dataset-level value, the number of examples it
/// aggregates, and (when the metric decomposes) per-example values.
#[derive(Debug, Clone, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_example: Option<Vec<f64>>,
}

/// Mean over examples of `-sum_j (Y_ij / N_i) ln max(p_ij, 1e-12)`.
///
/// Uniform predictions over `k` classes score exactly `ln k` on any
/// annotation file, and by Gibbs' inequality no prediction can score
/// below the mean entropy of the normalized count rows.
pub fn cross_entropy_soft(eval: &AlignedEval) -> MetricValue {
    let ann = eval.annotations();
    let mut per = Vec::with_capacity(ann.n());
    for i in 0..ann.n() {
        let total = ann.total(i) as f64;
        let mut xe = 0.0;
        for (&c, &p) in ann.row(i).iter().zip(eval.probs(i)) {
            if c > 0 {
                xe -= (c as f64 / total) * p.max(LOG_CLAMP).ln();
            }
        }
        per.push(xe);
    }
    finalize_mean(per)
}

/// Mean over examples of `0.5 * sum_j |p_ij - Y_ij / N_i|`: 0 for a
/// perfect distributional match, 1 for disjoint point masses.
pub fn total_variation(eval: &AlignedEval) -> MetricValue {
    let ann = eval.annotations();
    let mut per = Vec::with_capacity(ann.n());
    let mut buf = vec![0.0; ann.k()];
    for i in 0..ann.n() {
        ann.normalized_row_into(i, &mut buf);
        let tv: f64 = buf
            .iter()
            .zip(eval.probs(i))
            .map(|(&y, &p)| (p - y).abs())
            .sum::<f64>()
            / 2.0;
        per.push(tv);
    }
    finalize_mean(per)
}

/// The class holding the most annotations; ties go to the lowest index.
pub fn majority_label(counts: &[u32]) -> usize {
    let mut best = 0;
    for (j, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = j;
        }
    }
    best
}

/// Fraction of positions where the two label vectors agree.
pub fn accuracy(pred_labels: &[usize], gold_labels: &[usize]) -> Result<MetricValue> {
    if pred_labels.len() != gold_labels.len() || pred_labels.is_empty() {
        return Err(Error::invalid(format!(
            "accuracy needs equal-length nonempty label vectors, got {} and {}",
            pred_labels.len(),
            gold_labels.len()
        )));
    }
    let per: Vec<f64> = pred_labels
        .iter()
        .zip(gold_labels)
        .map(|(p, g)| if p == g { 1.0 } else { 0.0 })
        .collect();
    Ok(finalize_mean(per))
}

/// Unweighted mean over all `k` classes of the one-vs-rest F1 score.
///
/// A class with no predicted and no gold instances contributes an F1 of 0,
/// so unused classes pull the macro average down rather than being skipped.
pub fn macro_f1(pred_labels: &[usize], gold_labels: &[usize], k: usize) -> Result<MetricValue> {
    if pred_labels.len() != gold_labels.len() || pred_labels.is_empty() {
        return Err(Error::invalid(format!(
            "macro_f1 needs equal-length nonempty label vectors, got {} and {}",
            pred_labels.len(),
            gold_labels.len()
        )));
    }
    if k < 2 {
        return Err(Error::invalid(format!("macro_f1 needs k >= 2, got {k}")));
    }
    for (&p, &g) in pred_labels.iter().zip(gold_labels) {
        if p >= k || g >= k {
            return Err(Error::invalid(format!(
                "label {} out of range for {k} classes",
                p.max(g)
            )));
        }
    }
    let mut tp = vec![0u64; k];
    let mut fp = vec![0u64; k];
    let mut fneg = vec![0u64; k];
    for (&p, &g) in pred_labels.iter().zip(gold_labels) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[g] += 1;
        }
    }
    let f1_sum: f64 = (0..k).map(|c| f1_from_counts(tp[c], fp[c], fneg[c])).sum();
    Ok(MetricValue {
        value: f1_sum / k as f64,
        n: pred_labels.len(),
        per_example: None,
    })
}

pub(crate) fn f1_from_counts(tp: u64, fp: u64, fneg: u64) -> f64 {
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Arg-max predicted labels and majority-vote gold labels for every
/// example of an aligned evaluation.
pub fn hard_labels(eval: &AlignedEval) -> (Vec<usize>, Vec<usize>) {
    let ann = eval.annotations();
    let mut pred = Vec::with_capacity(ann.n());
    let mut gold = Vec::with_capacity(ann.n());
    for i in 0..ann.n() {
        pred.push(argmax(eval.probs(i)));
        gold.push(majority_label(ann.row(i)));
    }
    (pred, gold)
}

/// Computes any [`MetricKind`] on an aligned evaluation.
pub fn evaluate(eval: &AlignedEval, kind: MetricKind) -> MetricValue {
    match kind {
        MetricKind::XentropySoft => cross_entropy_soft(eval),
        MetricKind::TotalVariation => total_variation(eval),
        MetricKind::Accuracy | MetricKind::MacroF1 => {
            let (pred, gold) = hard_labels(eval);
            match kind {
                MetricKind::Accuracy => accuracy(&pred, &gold)
                    .expect("aligned evaluations are nonempty with equal lengths"),
                _ => macro_f1(&pred, &gold, eval.k())
                    .expect("aligned labels are in range by construction"),
            }
        }
    }
}

/// Entropy of a normalized count row in nats, with the same log clamp as
/// [`cross_entropy_soft`]; the cross entropy of any prediction against the
/// row is bounded below by this.
pub fn row_entropy(counts: &[u32]) -> f64 {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.max(LOG_CLAMP).ln();
        }
    }
    h
}

fn finalize_mean(per: Vec<f64>) -> MetricValue {
    let n = per.len();
    MetricValue {
        value: per.iter().sum::<f64>() / n as f64,
        n,
        per_example: Some(per),
    }
}
