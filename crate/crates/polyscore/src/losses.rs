//! Training losses over annotation counts, and temperature calibration.
//!
//! A classifier that scores `k` classes produces a row of logits per
//! example. Three likelihoods turn those logits plus an annotation count
//! row into a differentiable loss:
//!
//! - [`loss_soft`] — cross-entropy against the normalized count row
//!   (every example weighs the same regardless of how many annotations
//!   it has);
//! - [`loss_counts`] — cross-entropy against each annotation separately
//!   (an example with 40 annotations weighs 40 times one with 1);
//! - [`loss_dirichlet_multinomial`] — the count row's negative
//!   log-likelihood under a Dirichlet-multinomial with concentrations
//!   `exp(z)`, so the logit scale itself carries how concentrated the
//!   annotator distribution is expected to be.
//!
//! All three return the loss and its analytic gradient with respect to
//! the logits, suitable for verifying a trainer's autograd or for small
//! desk-scale fits. [`fit_temperature`] rescales logits by a scalar
//! `1/T` to minimize soft cross-entropy — the standard post-hoc
//! calibration — and never returns a temperature that scores worse than
//! `T = 1` on the data it was fit on.

use serde::Serialize;

use crate::dirichlet::{digamma_diff, ln_gamma_ratio};
use crate::error::{Error, Result};
use crate::io::AnnotationMatrix;
use crate::metrics::LOG_CLAMP;
use crate::optim::golden_min;
use crate::util::softmax_in_place;

/// A dense matrix of pre-activation scores, one row per example.
#[derive(Debug, Clone)]
pub struct LogitBatch {
    z: Vec<f64>,
    n: usize,
    k: usize,
}

impl LogitBatch {
    /// Builds a batch from per-example logit rows. Rows must be nonempty,
    /// rectangular with at least two columns, and finite.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("logit batch needs at least one row"));
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(Error::invalid(format!(
                "logit rows need at least 2 classes, got {k}"
            )));
        }
        let mut z = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid(format!(
                    "logit row {i} has {} classes, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("logit row {i} has a non-finite entry")));
            }
            z.extend_from_slice(row);
        }
        Ok(Self {
            z,
            n: rows.len(),
            k,
        })
    }

    /// Builds a batch from probability rows by taking logs, clamping each
    /// probability at 1e-12 first so zeros stay finite. Softmaxing the
    /// result recovers the input probabilities (exactly when no clamping
    /// occurred, else after renormalization).
    pub fn from_probabilities(rows: &[Vec<f64>]) -> Result<Self> {
        let logged = rows
            .iter()
            .map(|row| row.iter().map(|&p| p.max(LOG_CLAMP).ln()).collect())
            .collect();
        Self::from_rows(logged)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }
}

/// A fitted temperature for post-hoc calibration: probabilities become
/// `softmax(z / t)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TemperatureScaler {
    pub t: f64,
}

impl TemperatureScaler {
    pub fn new(t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive and finite, got {t}"
            )));
        }
        Ok(Self { t })
    }
}

/// Row-wise softmax of the logits: the probability each class would get
/// if the logits were exponentiated into Dirichlet concentrations and the
/// mean taken — the two constructions agree exactly.
pub fn softmax_point_estimate(z: &LogitBatch) -> Vec<Vec<f64>> {
    scaled_probs(z, 1.0)
}

fn scaled_probs(z: &LogitBatch, t: f64) -> Vec<Vec<f64>> {
    (0..z.n())
        .map(|i| {
            let mut row: Vec<f64> = z.row(i).iter().map(|&x| x / t).collect();
            softmax_in_place(&mut row);
            row
        })
        .collect()
}

fn check_shapes(z: &LogitBatch, ann: &AnnotationMatrix) -> Result<()> {
    if z.n() != ann.n() || z.k() != ann.k() {
        return Err(Error::invalid(format!(
            "logit batch is {}x{} but annotations are {}x{}; rows must align positionally",
            z.n(),
            z.k(),
            ann.n(),
            ann.k()
        )));
    }
    Ok(())
}

/// Cross-entropy of `softmax(z)` against the normalized count rows,
/// summed over examples: `-sum_i sum_j (Y_ij / N_i) ln p_ij`.
///
/// The gradient with respect to `z_ij` is `p_ij - Y_ij / N_i`.
pub fn loss_soft(z: &LogitBatch, ann: &AnnotationMatrix) -> Result<(f64, Vec<Vec<f64>>)> {
    check_shapes(z, ann)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.n());
    for i in 0..z.n() {
        let mut p: Vec<f64> = z.row(i).to_vec();
        softmax_in_place(&mut p);
        let total = ann.total(i) as f64;
        let mut g = Vec::with_capacity(z.k());
        for (j, &c) in ann.row(i).iter().enumerate() {
            let w = c as f64 / total;
            if c > 0 {
                loss -= w * p[j].max(LOG_CLAMP).ln();
            }
            g.push(p[j] - w);
        }
        grad.push(g);
    }
    Ok((loss, grad))
}

/// Cross-entropy counting every annotation as its own observation,
/// summed over examples: `-sum_i sum_j Y_ij ln p_ij`. Equals
/// [`loss_soft`] with each row weighted by its annotation total, so the
/// two losses coincide exactly when every row has one annotation.
///
/// The gradient with respect to `z_ij` is `N_i p_ij - Y_ij`.
pub fn loss_counts(z: &LogitBatch, ann: &AnnotationMatrix) -> Result<(f64, Vec<Vec<f64>>)> {
    check_shapes(z, ann)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.n());
    for i in 0..z.n() {
        let mut p: Vec<f64> = z.row(i).to_vec();
        softmax_in_place(&mut p);
        let total = ann.total(i) as f64;
        let mut g = Vec::with_capacity(z.k());
        for (j, &c) in ann.row(i).iter().enumerate() {
            if c > 0 {
                loss -= c as f64 * p[j].max(LOG_CLAMP).ln();
            }
            g.push(total * p[j] - c as f64);
        }
        grad.push(g);
    }
    Ok((loss, grad))
}

/// Negative log-likelihood of each count row under a
/// Dirichlet-multinomial whose concentrations are `exp(z_i:)`, summed
/// over examples.
///
/// Writing `A_i = sum_j exp(z_ij)`, the per-row likelihood is the
/// standard compound-multinomial pmf, and the chain rule through
/// `alpha = exp(z)` gives the gradient
/// `exp(z_ij) * [psi(A_i + N_i) - psi(A_i) - psi(alpha_ij + Y_ij) + psi(alpha_ij)]`,
/// computed with cancellation-free digamma differences.
pub fn loss_dirichlet_multinomial(
    z: &LogitBatch,
    ann: &AnnotationMatrix,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_shapes(z, ann)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.n());
    for i in 0..z.n() {
        let alpha: Vec<f64> = z.row(i).iter().map(|&x| x.exp()).collect();
        if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::invalid(format!(
                "exp overflow or underflow in logit row {i}; rescale the logits"
            )));
        }
        let a_total: f64 = alpha.iter().sum();
        let n_i = ann.total(i);
        let counts = ann.row(i);

        let mut row_ll = -ln_gamma_ratio(a_total, n_i);
        let mut log_coeff = ln_gamma(n_i as f64 + 1.0);
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                row_ll += ln_gamma_ratio(alpha[j], c);
                log_coeff -= ln_gamma(c as f64 + 1.0);
            }
        }
        loss -= row_ll + log_coeff;

        let shared = digamma_diff(a_total, n_i);
        let g = alpha
            .iter()
            .zip(counts)
            .map(|(&a, &c)| a * (shared - digamma_diff(a, c)))
            .collect();
        grad.push(g);
    }
    Ok((loss, grad))
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Mean soft cross-entropy of `softmax(z / t)` against the normalized
/// count rows — the quantity temperature calibration minimizes.
pub fn mean_soft_xe(z: &LogitBatch, t: f64, ann: &AnnotationMatrix) -> Result<f64> {
    check_shapes(z, ann)?;
    let mut sum = 0.0;
    for i in 0..z.n() {
        let mut p: Vec<f64> = z.row(i).iter().map(|&x| x / t).collect();
        softmax_in_place(&mut p);
        let total = ann.total(i) as f64;
        for (j, &c) in ann.row(i).iter().enumerate() {
            if c > 0 {
                sum -= (c as f64 / total) * p[j].max(LOG_CLAMP).ln();
            }
        }
    }
    Ok(sum / z.n() as f64)
}

/// Fits the temperature minimizing mean soft cross-entropy on the given
/// batch, searching `ln T` over `[-5, 5]` with a coarse grid scan
/// followed by golden-section refinement to 1e-6.
///
/// The result never scores worse than `T = 1` on the batch it was fit
/// on: if refinement cannot beat the untempered loss, the identity
/// temperature is returned.
pub fn fit_temperature(z: &LogitBatch, ann: &AnnotationMatrix) -> Result<TemperatureScaler> {
    check_shapes(z, ann)?;
    if z.n() < 2 {
        return Err(Error::invalid(
            "temperature calibration needs at least 2 examples",
        ));
    }
    let objective = |ln_t: f64| {
        mean_soft_xe(z, ln_t.exp(), ann).expect("shapes were checked; objective is total")
    };

    // Coarse scan keeps golden section inside one unimodal basin.
    const GRID: usize = 41;
    let (lo, hi) = (-5.0, 5.0);
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best = (0, f64::INFINITY);
    for g in 0..GRID {
        let v = objective(lo + g as f64 * step);
        if v < best.1 {
            best = (g, v);
        }
    }
    let bracket_lo = lo + step * best.0.saturating_sub(1) as f64;
    let bracket_hi = (lo + step * (best.0 + 1) as f64).min(hi);
    let (ln_t, value) = golden_min(objective, bracket_lo, bracket_hi, 1e-6);

    let untempered = objective(0.0);
    if untempered <= value {
        return TemperatureScaler::new(1.0);
    }
    TemperatureScaler::new(ln_t.exp())
}

/// Probabilities `softmax(z / t)`. `T = 1` reproduces
/// [`softmax_point_estimate`] exactly, and the per-row argmax is the same
/// for every positive temperature.
pub fn apply_temperature(z: &LogitBatch, scaler: &TemperatureScaler) -> Result<Vec<Vec<f64>>> {
    if !(scaler.t.is_finite() && scaler.t > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {}",
            scaler.t
        )));
    }
    Ok(scaled_probs(z, scaler.t))
}
