//! Estimating the score an oracle classifier would earn on a dataset.
//!
//! The oracle here is the best possible predictor given how annotators
//! actually behave: for each example it would output the example's true
//! label distribution. That distribution is never observed — only a
//! handful of annotations per example is — so its posterior is simulated
//! instead. Each round draws one plausible label distribution per example
//! from `Dirichlet(alpha + Y_i)`, scores the whole dataset as if those
//! draws were the predictions, and the mean over many rounds estimates
//! the ceiling a real model's score should be compared against.
//!
//! Determinism contract: every example gets its own random stream derived
//! from `(seed, hash(example id))`, so estimates are bit-identical across
//! runs and under any reordering of the input rows. Reductions over
//! examples run in id-sorted order for the same reason.
//!
//! Cross-entropy and total variation are reported as per-example means,
//! consistent with [`crate::metrics`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::dirichlet::{fit_prior, DirichletPrior};
use crate::error::{Error, Result};
use crate::io::AnnotationMatrix;
use crate::metrics::{f1_from_counts, majority_label, MetricKind, LOG_CLAMP};
use crate::util::{argmax, derived_rng, fnv1a, id_sorted_order};

/// Hard ceiling on requested Monte Carlo rounds.
pub const MAX_ROUNDS: usize = 10_000_000;

/// Default number of posterior rounds.
pub const DEFAULT_ROUNDS: usize = 10_000;

/// A Monte Carlo estimate of the oracle's score on one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct BestEstimate {
    pub metric: MetricKind,
    /// Mean dataset score over rounds.
    pub score: f64,
    /// Standard error of the mean across rounds (0 when rounds = 1).
    pub std_error: f64,
    pub rounds: usize,
    pub seed: u64,
    /// The prior the posteriors were built from; serialized as `"alpha"`.
    #[serde(flatten)]
    pub prior: DirichletPrior,
}

/// Per-example scoring context that does not change across rounds.
struct ExampleCtx {
    /// One gamma sampler per class, shapes `alpha_j + Y_ij`.
    gammas: Vec<Gamma<f64>>,
    /// Sparse `(class, Y_ij / N_i)` over nonzero counts.
    xe_weights: Vec<(usize, f64)>,
    /// Dense normalized counts (total-variation reference).
    norm_counts: Vec<f64>,
    /// Majority annotation label, ties toward the lowest class.
    gold: usize,
}

impl ExampleCtx {
    fn new(counts: &[u32], total: u32, prior: &DirichletPrior) -> Self {
        let gammas = prior
            .alpha()
            .iter()
            .zip(counts)
            .map(|(&a, &c)| {
                Gamma::new(a + c as f64, 1.0).expect("posterior shapes are positive")
            })
            .collect();
        let t = total as f64;
        let xe_weights = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(j, &c)| (j, c as f64 / t))
            .collect();
        let norm_counts = counts.iter().map(|&c| c as f64 / t).collect();
        Self {
            gammas,
            xe_weights,
            norm_counts,
            gold: majority_label(counts),
        }
    }

    /// Draws `theta ~ Dirichlet(alpha + Y)` into `theta`, redrawing in the
    /// (vanishingly rare) event every gamma variate underflows to zero.
    fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R, theta: &mut [f64]) {
        loop {
            let mut sum = 0.0;
            for (t, g) in theta.iter_mut().zip(&self.gammas) {
                *t = g.sample(rng);
                sum += *t;
            }
            if sum > 0.0 {
                for t in theta.iter_mut() {
                    *t /= sum;
                }
                return;
            }
        }
    }
}

/// Accumulates one round's dataset-level tallies for a set of metrics.
struct RoundTally {
    want_xe: bool,
    want_tv: bool,
    want_hard: bool,
    xe_sum: f64,
    tv_sum: f64,
    correct: u64,
    tp: Vec<u64>,
    fp: Vec<u64>,
    fneg: Vec<u64>,
    n: usize,
}

impl RoundTally {
    fn new(metrics: &[MetricKind], k: usize) -> Self {
        let want = |m: MetricKind| metrics.contains(&m);
        Self {
            want_xe: want(MetricKind::XentropySoft),
            want_tv: want(MetricKind::TotalVariation),
            want_hard: want(MetricKind::Accuracy) || want(MetricKind::MacroF1),
            xe_sum: 0.0,
            tv_sum: 0.0,
            correct: 0,
            tp: vec![0; k],
            fp: vec![0; k],
            fneg: vec![0; k],
            n: 0,
        }
    }

    fn reset(&mut self) {
        self.xe_sum = 0.0;
        self.tv_sum = 0.0;
        self.correct = 0;
        self.tp.iter_mut().for_each(|x| *x = 0);
        self.fp.iter_mut().for_each(|x| *x = 0);
        self.fneg.iter_mut().for_each(|x| *x = 0);
        self.n = 0;
    }

    fn add(&mut self, theta: &[f64], ctx: &ExampleCtx) {
        if self.want_xe {
            let mut xe = 0.0;
            for &(j, w) in &ctx.xe_weights {
                xe -= w * theta[j].max(LOG_CLAMP).ln();
            }
            self.xe_sum += xe;
        }
        if self.want_tv {
            let l1: f64 = theta
                .iter()
                .zip(&ctx.norm_counts)
                .map(|(&t, &y)| (t - y).abs())
                .sum();
            self.tv_sum += 0.5 * l1;
        }
        if self.want_hard {
            let pred = argmax(theta);
            if pred == ctx.gold {
                self.correct += 1;
                self.tp[pred] += 1;
            } else {
                self.fp[pred] += 1;
                self.fneg[ctx.gold] += 1;
            }
        }
        self.n += 1;
    }

    fn score(&self, metric: MetricKind) -> f64 {
        let n = self.n as f64;
        match metric {
            MetricKind::XentropySoft => self.xe_sum / n,
            MetricKind::TotalVariation => self.tv_sum / n,
            MetricKind::Accuracy => self.correct as f64 / n,
            MetricKind::MacroF1 => {
                let k = self.tp.len();
                let sum: f64 = (0..k)
                    .map(|c| f1_from_counts(self.tp[c], self.fp[c], self.fneg[c]))
                    .sum();
                sum / k as f64
            }
        }
    }
}

fn check_prior(prior: &DirichletPrior, ann: &AnnotationMatrix) -> Result<()> {
    if prior.k() != ann.k() {
        return Err(Error::invalid(format!(
            "prior has {} classes but annotations have {}",
            prior.k(),
            ann.k()
        )));
    }
    Ok(())
}

/// One posterior simulation round: draws a label distribution per example
/// from its posterior under `prior` and scores the dataset with the draws
/// as predictions. Examples are processed in row order using the single
/// provided stream; for reproducible multi-round estimates use
/// [`best_score`], which manages per-example streams itself.
pub fn oracle_round<R: Rng + ?Sized>(
    annotations: &AnnotationMatrix,
    prior: &DirichletPrior,
    metric: MetricKind,
    rng: &mut R,
) -> Result<f64> {
    check_prior(prior, annotations)?;
    let metrics = [metric];
    let mut tally = RoundTally::new(&metrics, annotations.k());
    let mut theta = vec![0.0; annotations.k()];
    for i in 0..annotations.n() {
        let ctx = ExampleCtx::new(annotations.row(i), annotations.total(i), prior);
        ctx.sample_theta(rng, &mut theta);
        tally.add(&theta, &ctx);
    }
    Ok(tally.score(metric))
}

/// Estimates the oracle's score for each requested metric in one pass,
/// sharing the posterior draws across metrics.
///
/// With no `prior` supplied, one is fit to the same annotations by
/// maximum likelihood first. The estimate is deterministic in
/// `(annotations, metrics, rounds, seed, prior)` and invariant under row
/// reordering.
pub fn best_scores(
    annotations: &AnnotationMatrix,
    metrics: &[MetricKind],
    rounds: usize,
    seed: u64,
    prior: Option<&DirichletPrior>,
) -> Result<Vec<BestEstimate>> {
    if metrics.is_empty() {
        return Err(Error::invalid("no metrics requested"));
    }
    if rounds == 0 || rounds > MAX_ROUNDS {
        return Err(Error::invalid(format!(
            "rounds must be in [1, {MAX_ROUNDS}], got {rounds}"
        )));
    }
    let fitted;
    let prior = match prior {
        Some(p) => {
            check_prior(p, annotations)?;
            p
        }
        None => {
            fitted = fit_prior(annotations)?.prior;
            &fitted
        }
    };

    let order = id_sorted_order(annotations.ids());
    let mut ctxs = Vec::with_capacity(annotations.n());
    let mut streams: Vec<ChaCha8Rng> = Vec::with_capacity(annotations.n());
    for i in 0..annotations.n() {
        ctxs.push(ExampleCtx::new(
            annotations.row(i),
            annotations.total(i),
            prior,
        ));
        streams.push(derived_rng(seed, &[fnv1a(annotations.id(i).as_bytes())]));
    }

    let k = annotations.k();
    let mut tally = RoundTally::new(metrics, k);
    let mut theta = vec![0.0; k];
    let mut per_round: Vec<Vec<f64>> = vec![Vec::with_capacity(rounds); metrics.len()];
    for _ in 0..rounds {
        tally.reset();
        for &i in &order {
            ctxs[i].sample_theta(&mut streams[i], &mut theta);
            tally.add(&theta, &ctxs[i]);
        }
        for (m, &metric) in metrics.iter().enumerate() {
            per_round[m].push(tally.score(metric));
        }
    }

    Ok(metrics
        .iter()
        .zip(per_round)
        .map(|(&metric, scores)| {
            let (score, std_error) = mean_and_se(&scores);
            BestEstimate {
                metric,
                score,
                std_error,
                rounds,
                seed,
                prior: prior.clone(),
            }
        })
        .collect())
}

/// Single-metric convenience over [`best_scores`]; identical draws, so it
/// returns exactly what the multi-metric call would for this metric.
pub fn best_score(
    annotations: &AnnotationMatrix,
    metric: MetricKind,
    rounds: usize,
    seed: u64,
    prior: Option<&DirichletPrior>,
) -> Result<BestEstimate> {
    Ok(best_scores(annotations, &[metric], rounds, seed, prior)?
        .pop()
        .expect("one metric in, one estimate out"))
}

/// Scores known true label distributions against the observed
/// annotations — the quantity [`best_score`] estimates, computable only
/// in simulations where the generating `theta` is available.
pub fn true_oracle_score(
    thetas: &[Vec<f64>],
    annotations: &AnnotationMatrix,
    metric: MetricKind,
) -> Result<f64> {
    if thetas.len() != annotations.n() {
        return Err(Error::invalid(format!(
            "{} theta rows for {} annotation rows",
            thetas.len(),
            annotations.n()
        )));
    }
    let k = annotations.k();
    for (i, row) in thetas.iter().enumerate() {
        if row.len() != k {
            return Err(Error::invalid(format!(
                "theta row {i} has {} classes, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|&t| !t.is_finite() || t < 0.0) {
            return Err(Error::invalid(format!(
                "theta row {i} has a negative or non-finite entry"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "theta row {i} sums to {sum}, not 1"
            )));
        }
    }
    let metrics = [metric];
    let mut tally = RoundTally::new(&metrics, k);
    for (i, row) in thetas.iter().enumerate() {
        // Build the scoring context without posterior samplers; a flat
        // prior is only a placeholder for its (unused) gamma shapes.
        let ctx = ExampleCtx::new(
            annotations.row(i),
            annotations.total(i),
            &DirichletPrior::new(vec![1.0; k])?,
        );
        tally.add(row, &ctx);
    }
    Ok(tally.score(metric))
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
