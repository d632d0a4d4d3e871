//! Synthetic validation of the oracle-score estimator.
//!
//! Each scenario generates a dataset whose per-example label
//! distributions are known, hands *only* the sampled annotations to
//! [`crate::best::best_scores`] (which refits its prior from those
//! annotations, never touching the hidden truth), and compares the
//! estimate against the exactly computable oracle score. The gap,
//! reported as relative error per metric, is the estimator's end-to-end
//! validation: it covers prior fitting, posterior sampling, and scoring
//! in one number.
//!
//! Three presets mirror common annotation regimes: a five-class
//! imbalanced prior with a long-tailed annotator count (median 8), the
//! same prior with exactly three annotators per example, and a two-part
//! mixture prior that a single Dirichlet cannot represent — the
//! robustness case.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

use crate::best::{best_scores, true_oracle_score, BestEstimate};
use crate::dirichlet::{fit_prior, sample_dirichlet, DirichletPrior};
use crate::error::{Error, Result};
use crate::io::AnnotationMatrix;
use crate::metrics::MetricKind;
use crate::util::{derived_rng, fnv1a};

/// Which preset shape a scenario follows (a label in reports; generation
/// depends only on the concrete fields of [`ScenarioConfig`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Prior fitted to (or shaped like) a reference dataset, long-tailed
    /// annotator counts.
    FittedPrior,
    /// Fixed number of annotators per example.
    FixedAnnotators,
    /// Ground truth drawn from a two-component mixture of Dirichlets.
    MixturePrior,
}

/// How many annotations each generated example receives.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorLaw {
    /// Every example gets exactly `c` annotations.
    Fixed(u32),
    /// `N_i = max(1, round(X))` with `ln X ~ Normal(ln median, sigma)`.
    LogNormal { median: f64, sigma: f64 },
    /// Resample uniformly from observed per-example totals.
    Empirical(Vec<u32>),
}

impl AnnotatorLaw {
    fn validate(&self) -> Result<()> {
        match self {
            AnnotatorLaw::Fixed(c) if *c == 0 => {
                Err(Error::invalid("fixed annotator count must be at least 1"))
            }
            AnnotatorLaw::LogNormal { median, sigma }
                if !(median.is_finite() && *median > 0.0 && sigma.is_finite() && *sigma >= 0.0) =>
            {
                Err(Error::invalid(format!(
                    "log-normal law needs median > 0 and sigma >= 0, got {median}, {sigma}"
                )))
            }
            AnnotatorLaw::Empirical(totals) if totals.is_empty() => {
                Err(Error::invalid("empirical annotator law needs at least one total"))
            }
            AnnotatorLaw::Empirical(totals) if totals.contains(&0) => {
                Err(Error::invalid("empirical annotator totals must be positive"))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            AnnotatorLaw::Fixed(c) => *c,
            AnnotatorLaw::LogNormal { median, sigma } => {
                let dist = LogNormal::new(median.ln(), *sigma)
                    .expect("validated log-normal parameters");
                dist.sample(rng).round().max(1.0) as u32
            }
            AnnotatorLaw::Empirical(totals) => totals[rng.random_range(0..totals.len())],
        }
    }
}

/// Full description of one simulation run.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub k: usize,
    pub n_examples: usize,
    pub annotator_law: AnnotatorLaw,
    /// Ground-truth mixture: `(weight, component)` pairs; weights sum to 1.
    #[serde(serialize_with = "serialize_mixture")]
    pub true_prior: Vec<(f64, DirichletPrior)>,
    pub rounds: usize,
    pub seed: u64,
}

fn serialize_mixture<S: serde::Serializer>(
    mix: &[(f64, DirichletPrior)],
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(mix.len()))?;
    for (w, p) in mix {
        seq.serialize_element(&serde_json::json!({"weight": w, "alpha": p.alpha()}))?;
    }
    seq.end()
}

/// The five-class concentration vector used by the built-in presets,
/// shaped like a heavily imbalanced annotation task (one dominant class,
/// several rare ones, substantial disagreement).
pub const PRESET_ALPHA: [f64; 5] = [0.6, 1.1, 0.1, 0.2, 0.05];

impl ScenarioConfig {
    /// Imbalanced five-class prior with a long-tailed annotator count
    /// (median 8): the "realistically sized dataset" preset.
    pub fn fitted_prior_preset(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::FittedPrior,
            k: 5,
            n_examples: 20_000,
            annotator_law: AnnotatorLaw::LogNormal {
                median: 8.0,
                sigma: 1.0,
            },
            true_prior: vec![(
                1.0,
                DirichletPrior::new(PRESET_ALPHA.to_vec()).expect("preset alpha is valid"),
            )],
            rounds: 10_000,
            seed,
        }
    }

    /// Same prior as [`Self::fitted_prior_preset`] but from a reference
    /// dataset: the ground-truth prior is fit to it and annotator counts
    /// are resampled from its observed totals.
    pub fn fitted_prior_from(reference: &AnnotationMatrix, seed: u64) -> Result<Self> {
        let report = fit_prior(reference)?;
        let totals: Vec<u32> = (0..reference.n()).map(|i| reference.total(i)).collect();
        Ok(Self {
            kind: ScenarioKind::FittedPrior,
            k: reference.k(),
            n_examples: reference.n(),
            annotator_law: AnnotatorLaw::Empirical(totals),
            true_prior: vec![(1.0, report.prior)],
            rounds: 10_000,
            seed,
        })
    }

    /// Exactly three annotators per example — the thin-annotation regime
    /// where estimation is hardest.
    pub fn fixed_annotators_preset(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::FixedAnnotators,
            annotator_law: AnnotatorLaw::Fixed(3),
            ..Self::fitted_prior_preset(seed)
        }
    }

    /// Ground truth from a two-component mixture that the estimator must
    /// approximate with a single fitted Dirichlet — the misspecification
    /// stress test. One component concentrates most mass on class 1; the
    /// other is the flat Dirichlet, i.e. label distributions scattered
    /// uniformly over the whole simplex.
    pub fn mixture_prior_preset(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::MixturePrior,
            true_prior: vec![
                (
                    0.5,
                    DirichletPrior::new(vec![0.8, 8.0, 0.4, 0.6, 0.2])
                        .expect("preset component is valid"),
                ),
                (
                    0.5,
                    DirichletPrior::new(vec![1.0, 1.0, 1.0, 1.0, 1.0])
                        .expect("preset component is valid"),
                ),
            ],
            ..Self::fitted_prior_preset(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("scenario needs k >= 2, got {}", self.k)));
        }
        if self.n_examples == 0 {
            return Err(Error::invalid("scenario needs at least one example"));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("scenario needs at least one round"));
        }
        self.annotator_law.validate()?;
        if self.true_prior.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let mut weight_sum = 0.0;
        for (w, component) in &self.true_prior {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(format!("mixture weight {w} must be >= 0")));
            }
            if component.k() != self.k {
                return Err(Error::invalid(format!(
                    "mixture component has {} classes, scenario has {}",
                    component.k(),
                    self.k
                )));
            }
            weight_sum += w;
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {weight_sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// One metric's comparison between the estimate and the exactly known
/// oracle score.
#[derive(Debug, Clone, Serialize)]
pub struct MetricComparison {
    pub metric: MetricKind,
    pub true_oracle: f64,
    pub best_estimate: BestEstimate,
    /// `|estimate - truth| / |truth|`; when the truth is exactly 0 this
    /// holds the absolute error instead and `error_is_absolute` is set.
    pub relative_error: f64,
    pub error_is_absolute: bool,
}

/// Everything a simulation run produced.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    pub n_examples: usize,
    pub rounds: usize,
    pub seed: u64,
    pub metrics: Vec<MetricComparison>,
}

impl ScenarioReport {
    /// The comparison row for one metric, if it was computed.
    pub fn comparison(&self, metric: MetricKind) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Draws the hidden per-example label distributions and the observed
/// annotation matrix for a scenario. Row ids are `sim-000000`,
/// `sim-000001`, … in generation order.
pub fn generate_dataset<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, AnnotationMatrix)> {
    config.validate()?;
    let mut thetas = Vec::with_capacity(config.n_examples);
    let mut rows = Vec::with_capacity(config.n_examples);
    for i in 0..config.n_examples {
        let component = pick_component(&config.true_prior, rng);
        let theta = sample_dirichlet(component, rng);
        let n_i = config.annotator_law.sample(rng);
        let mut counts = vec![0u32; config.k];
        for _ in 0..n_i {
            counts[sample_class(&theta, rng)] += 1;
        }
        rows.push((format!("sim-{i:06}"), counts));
        thetas.push(theta);
    }
    let ann = AnnotationMatrix::from_rows(rows)?;
    Ok((thetas, ann))
}

fn pick_component<'a, R: Rng + ?Sized>(
    mixture: &'a [(f64, DirichletPrior)],
    rng: &mut R,
) -> &'a DirichletPrior {
    if mixture.len() == 1 {
        return &mixture[0].1;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (w, component) in mixture {
        acc += w;
        if u < acc {
            return component;
        }
    }
    &mixture.last().expect("validated nonempty mixture").1
}

fn sample_class<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &t) in theta.iter().enumerate() {
        acc += t;
        if u < acc {
            return j;
        }
    }
    theta.len() - 1
}

/// Metrics every scenario reports on.
pub const SCENARIO_METRICS: [MetricKind; 3] = [
    MetricKind::Accuracy,
    MetricKind::MacroF1,
    MetricKind::XentropySoft,
];

/// Runs one scenario end to end: generate, score the hidden truth, then
/// estimate from the observed annotations alone (the prior is refit from
/// them; the generating prior and thetas are never passed on) and report
/// the per-metric relative errors.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut gen_rng = derived_rng(config.seed, &[fnv1a(b"scenario-data")]);
    let (thetas, annotations) = generate_dataset(config, &mut gen_rng)?;

    let estimates = best_scores(
        &annotations,
        &SCENARIO_METRICS,
        config.rounds,
        config.seed,
        None,
    )?;

    let mut metrics = Vec::with_capacity(SCENARIO_METRICS.len());
    for estimate in estimates {
        let truth = true_oracle_score(&thetas, &annotations, estimate.metric)?;
        let gap = (estimate.score - truth).abs();
        let (relative_error, error_is_absolute) = if truth == 0.0 {
            (gap, true)
        } else {
            (gap / truth.abs(), false)
        };
        metrics.push(MetricComparison {
            metric: estimate.metric,
            true_oracle: truth,
            best_estimate: estimate,
            relative_error,
            error_is_absolute,
        });
    }
    Ok(ScenarioReport {
        scenario: config.kind,
        n_examples: config.n_examples,
        rounds: config.rounds,
        seed: config.seed,
        metrics,
    })
}

/// Convenience handle used by the command-line interface.
pub fn preset(name: &str, seed: u64) -> Result<ScenarioConfig> {
    match name {
        "anecdotes" | "fitted" | "fitted_prior" => Ok(ScenarioConfig::fitted_prior_preset(seed)),
        "annotators" | "fixed" | "fixed_annotators" => {
            Ok(ScenarioConfig::fixed_annotators_preset(seed))
        }
        "mixture" | "mixture_prior" => Ok(ScenarioConfig::mixture_prior_preset(seed)),
        other => Err(Error::InvalidValue {
            what: "scenario",
            msg: format!(
                "unknown scenario {other:?}; expected anecdotes, annotators, or mixture"
            ),
        }),
    }
}
