//! Thin command-line front-end over the library.
//!
//! Every subcommand prints one machine-readable JSON report to standard
//! output (or to `--out FILE`), a short human summary to standard error,
//! and uses exit code 0 on success, 1 on data errors, and 2 on usage
//! errors. All randomness flows from `--seed`, so identical invocations
//! produce byte-identical reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polyscore::assoc;
use polyscore::best;
use polyscore::dirichlet;
use polyscore::io::{self, FileFormat, LoadOptions, PredKind};
use polyscore::latent;
use polyscore::losses;
use polyscore::metrics::{self, MetricKind};
use polyscore::sim;
use polyscore::util::derived_rng;
use polyscore::Error;

#[derive(Parser)]
#[command(
    name = "polyscore",
    version,
    about = "Evaluate classifiers against distributions of annotations",
    after_help = "Reports are JSON on stdout; summaries go to stderr. \
                  Exit codes: 0 ok, 1 data error, 2 usage error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Dirichlet prior to annotation counts by maximum likelihood.
    #[command(name = "fit-prior")]
    FitPrior(FitPriorArgs),
    /// Estimate the best score any classifier could reach on a dataset.
    Best(BestArgs),
    /// Score a prediction file against annotation counts.
    Evaluate(EvaluateArgs),
    /// Fit a softmax temperature to minimize soft cross-entropy.
    Calibrate(CalibrateArgs),
    /// Run a synthetic ground-truth scenario end to end.
    Simulate(SimulateArgs),
    /// Permutation-test feature/class associations with Holm correction.
    Permtest(PermtestArgs),
    /// Fit a latent-trait model to dense binary annotator responses.
    Latent(LatentArgs),
}

fn parse_format(s: &str) -> Result<FileFormat, String> {
    match s {
        "jsonl" => Ok(FileFormat::Jsonl),
        "csv" => Ok(FileFormat::Csv),
        other => Err(format!("unknown format {other:?}; expected jsonl or csv")),
    }
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    s.parse::<MetricKind>().map_err(|e| e.to_string())
}

fn parse_scenario(s: &str) -> Result<String, String> {
    sim::preset(s, 0).map(|_| s.to_string()).map_err(|e| e.to_string())
}

#[derive(Args)]
struct CommonIo {
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Class-name file (JSON array or {"index": "name"} object).
    #[arg(long)]
    classes: Option<PathBuf>,
}

#[derive(Args)]
struct AnnotationInput {
    /// Annotation counts file.
    #[arg(long)]
    annotations: PathBuf,
    /// File layout of the inputs.
    #[arg(long, default_value = "jsonl", value_parser = parse_format)]
    format: FileFormat,
    /// Drop rows with zero annotations instead of failing.
    #[arg(long)]
    drop_empty: bool,
}

impl AnnotationInput {
    fn load(&self) -> Result<(io::AnnotationMatrix, usize), Error> {
        io::load_annotations_with(
            &self.annotations,
            self.format,
            LoadOptions {
                drop_empty: self.drop_empty,
            },
        )
    }
}

#[derive(Args)]
struct FitPriorArgs {
    #[command(flatten)]
    input: AnnotationInput,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct BestArgs {
    #[command(flatten)]
    input: AnnotationInput,
    /// Metric whose oracle score to estimate.
    #[arg(long, default_value = "xentropy", value_parser = parse_metric)]
    metric: MetricKind,
    /// Monte Carlo rounds.
    #[arg(long, default_value_t = best::DEFAULT_ROUNDS)]
    rounds: usize,
    /// Base seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: AnnotationInput,
    /// Model predictions file.
    #[arg(long)]
    predictions: PathBuf,
    /// Treat the predictions as raw logits rather than probabilities.
    #[arg(long)]
    logits: bool,
    /// Metric to compute.
    #[arg(long, default_value = "xentropy", value_parser = parse_metric)]
    metric: MetricKind,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    input: AnnotationInput,
    /// Model predictions file.
    #[arg(long)]
    predictions: PathBuf,
    /// Treat the predictions as raw logits rather than probabilities.
    #[arg(long)]
    logits: bool,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario name: anecdotes|annotators|mixture (plus aliases).
    #[arg(long, value_parser = parse_scenario)]
    scenario: String,
    /// Base seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario's example count.
    #[arg(long)]
    examples: Option<usize>,
    /// Override the scenario's Monte Carlo rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Fit the generating prior and annotator totals from this annotation
    /// file (anecdotes scenario only).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// File layout of --reference.
    #[arg(long, default_value = "jsonl", value_parser = parse_format)]
    format: FileFormat,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct PermtestArgs {
    /// Items file: JSONL {"id", "class": "less|more", "features": [...]}.
    #[arg(long)]
    items: PathBuf,
    /// Family-wise significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Permutation samples per feature.
    #[arg(long, default_value_t = assoc::DEFAULT_SAMPLES)]
    samples: usize,
    /// Report (k+1)/(n+1) p-values instead of k/n (never exactly zero).
    #[arg(long)]
    conservative: bool,
    /// Base seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct LatentArgs {
    /// CSV of annotator rows with 0/1 entries (optional header row).
    #[arg(long)]
    responses: PathBuf,
    /// Number of latent traits (0 = independent null model).
    #[arg(long)]
    traits: usize,
    /// Gauss-Hermite nodes per trait dimension.
    #[arg(long, default_value_t = latent::DEFAULT_NODES)]
    nodes: usize,
    /// Base seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a CSV of per-question loadings and intercepts here.
    #[arg(long)]
    loadings_out: Option<PathBuf>,
    /// Write a CSV of per-annotator posterior trait scores here.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    #[command(flatten)]
    io: CommonIo,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FitPrior(args) => cmd_fit_prior(args),
        Command::Best(args) => cmd_best(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Permtest(args) => cmd_permtest(args),
        Command::Latent(args) => cmd_latent(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

/// Prints (or writes) the compact JSON report.
fn emit(report: &serde_json::Value, out: Option<&Path>) -> Result<(), Error> {
    let text = format!("{report}\n");
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Loads `--classes` and checks the expected length when one is known.
fn load_classes(path: &Path, k: Option<usize>) -> Result<Vec<String>, Error> {
    match k {
        Some(k) => io::load_class_names(path, k),
        None => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: e.line(),
                    msg: e.to_string(),
                })?;
            let n = match &value {
                serde_json::Value::Array(items) => items.len(),
                serde_json::Value::Object(map) => map.len(),
                _ => 0,
            };
            io::load_class_names(path, n)
        }
    }
}

/// Inserts extra keys into a serialized struct report.
fn with_fields(
    report: impl serde::Serialize,
    extra: &[(&str, serde_json::Value)],
) -> serde_json::Value {
    let mut value = serde_json::to_value(report).expect("report serialization");
    if let serde_json::Value::Object(map) = &mut value {
        for (key, v) in extra {
            map.insert((*key).to_string(), v.clone());
        }
    }
    value
}

fn cmd_fit_prior(args: FitPriorArgs) -> Result<(), Error> {
    let (mut ann, dropped) = args.input.load()?;
    if let Some(path) = &args.io.classes {
        ann.set_class_names(load_classes(path, Some(ann.k()))?)?;
    }
    let report = dirichlet::fit_prior(&ann)?;
    eprintln!(
        "fit {} examples ({} classes): alpha total {:.4}, nll {:.4}, {} iterations{}",
        ann.n(),
        ann.k(),
        report.prior.total(),
        report.final_nll,
        report.iterations,
        if report.converged { "" } else { " (NOT converged)" }
    );
    let mut extra = vec![
        ("n_examples", serde_json::json!(ann.n())),
        ("dropped_rows", serde_json::json!(dropped)),
    ];
    if let Some(names) = ann.class_names() {
        extra.push(("class_names", serde_json::json!(names)));
    }
    emit(&with_fields(report, &extra), args.io.out.as_deref())
}

fn cmd_best(args: BestArgs) -> Result<(), Error> {
    let (mut ann, _) = args.input.load()?;
    if let Some(path) = &args.io.classes {
        ann.set_class_names(load_classes(path, Some(ann.k()))?)?;
    }
    let estimate = best::best_score(&ann, args.metric, args.rounds, args.seed, None)?;
    eprintln!(
        "best achievable {} on {} examples: {:.6} (std err {:.2e}, {} rounds)",
        estimate.metric.name(),
        ann.n(),
        estimate.score,
        estimate.std_error,
        estimate.rounds
    );
    let mut extra = vec![("n_examples", serde_json::json!(ann.n()))];
    if let Some(names) = ann.class_names() {
        extra.push(("class_names", serde_json::json!(names)));
    }
    emit(&with_fields(estimate, &extra), args.io.out.as_deref())
}

fn load_aligned(
    input: &AnnotationInput,
    predictions: &Path,
    logits: bool,
    classes: Option<&Path>,
) -> Result<io::AlignedEval, Error> {
    let (mut ann, _) = input.load()?;
    if let Some(path) = classes {
        ann.set_class_names(load_classes(path, Some(ann.k()))?)?;
    }
    let kind = if logits {
        PredKind::Logits
    } else {
        PredKind::Probabilities
    };
    let preds = io::load_predictions(predictions, input.format, kind)?;
    io::align(&ann, &preds)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let eval = load_aligned(
        &args.input,
        &args.predictions,
        args.logits,
        args.io.classes.as_deref(),
    )?;
    let value = metrics::evaluate(&eval, args.metric);
    eprintln!(
        "{} over {} examples: {:.6} ({} is better)",
        args.metric.name(),
        value.n,
        value.value,
        if args.metric.higher_is_better() {
            "higher"
        } else {
            "lower"
        }
    );
    let mut report = serde_json::json!({
        "metric": args.metric.name(),
        "value": value.value,
        "n": value.n,
        "higher_is_better": args.metric.higher_is_better(),
    });
    if let (Some(names), serde_json::Value::Object(map)) =
        (eval.annotations().class_names(), &mut report)
    {
        map.insert("class_names".into(), serde_json::json!(names));
    }
    emit(&report, args.io.out.as_deref())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let eval = load_aligned(
        &args.input,
        &args.predictions,
        args.logits,
        args.io.classes.as_deref(),
    )?;
    // Aligned predictions are probabilities; their logs are logits up to a
    // per-row shift, which temperature scaling is invariant to.
    let rows: Vec<Vec<f64>> = (0..eval.n()).map(|i| eval.probs(i).to_vec()).collect();
    let batch = losses::LogitBatch::from_probabilities(&rows)?;
    let ann = eval.annotations();
    let scaler = losses::fit_temperature(&batch, ann)?;
    let before = losses::mean_soft_xe(&batch, 1.0, ann)?;
    let after = losses::mean_soft_xe(&batch, scaler.t, ann)?;
    eprintln!(
        "fitted temperature {:.6} on {} examples: soft cross-entropy {:.6} -> {:.6}",
        scaler.t,
        eval.n(),
        before,
        after
    );
    let report = serde_json::json!({
        "T": scaler.t,
        "xentropy_before": before,
        "xentropy_after": after,
        "n": eval.n(),
    });
    emit(&report, args.io.out.as_deref())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut config = match &args.reference {
        Some(path) => {
            if !matches!(
                args.scenario.as_str(),
                "anecdotes" | "fitted" | "fitted_prior"
            ) {
                return Err(Error::InvalidValue {
                    what: "scenario",
                    msg: format!(
                        "--reference only applies to the anecdotes scenario, not {:?}",
                        args.scenario
                    ),
                });
            }
            let reference = io::load_annotations(path, args.format)?;
            sim::ScenarioConfig::fitted_prior_from(&reference, args.seed)?
        }
        None => sim::preset(&args.scenario, args.seed)?,
    };
    if let Some(n) = args.examples {
        config.n_examples = n;
    }
    if let Some(r) = args.rounds {
        config.rounds = r;
    }
    let report = sim::run_scenario(&config)?;
    for m in &report.metrics {
        eprintln!(
            "{:>14}: true oracle {:.6}, estimate {:.6}, {} error {:.3}%",
            m.metric.name(),
            m.true_oracle,
            m.best_estimate.score,
            if m.error_is_absolute {
                "absolute"
            } else {
                "relative"
            },
            m.relative_error * 100.0
        );
    }
    let mut extra = Vec::new();
    if let Some(path) = &args.io.classes {
        let names = load_classes(path, Some(config.k))?;
        extra.push(("class_names", serde_json::json!(names)));
    }
    emit(&with_fields(report, &extra), args.io.out.as_deref())
}

fn cmd_permtest(args: PermtestArgs) -> Result<(), Error> {
    let items = assoc::load_items(&args.items)?;
    let options = assoc::TestAllOptions {
        alpha: args.alpha,
        n_samples: args.samples,
        seed: args.seed,
        rule: if args.conservative {
            assoc::PValueRule::Conservative
        } else {
            assoc::PValueRule::Plain
        },
    };
    let results = assoc::test_all(&items, &options)?;
    let rejected = results.iter().filter(|r| r.rejected == Some(true)).count();
    eprintln!(
        "{} features over {} items ({} less / {} more): {} significant at alpha {}",
        results.len(),
        items.n_items(),
        items.less_total(),
        items.more_total(),
        rejected,
        args.alpha
    );
    for r in results.iter().filter(|r| r.rejected == Some(true)) {
        eprintln!(
            "  {:<20} LR {:>8} worse {:>4} better {:>4} p_adj {:.4}",
            r.feature,
            if r.lr.is_finite() {
                format!("{:.3}", r.lr)
            } else {
                "inf".to_string()
            },
            r.worse_count,
            r.better_count,
            r.p_adjusted.unwrap_or(f64::NAN)
        );
    }
    let mut report = serde_json::json!({
        "alpha": args.alpha,
        "n_samples": args.samples,
        "seed": args.seed,
        "n_items": items.n_items(),
        "less_total": items.less_total(),
        "more_total": items.more_total(),
        "conservative": args.conservative,
        "features": results,
    });
    if let Some(path) = &args.io.classes {
        let names = load_classes(path, Some(2))?;
        if let serde_json::Value::Object(map) = &mut report {
            map.insert("class_names".into(), serde_json::json!(names));
        }
    }
    emit(&report, args.io.out.as_deref())
}

fn write_loadings_csv(
    path: &Path,
    model: &latent::LatentTraitModel,
    names: &[String],
) -> Result<(), Error> {
    let d = model.d();
    let mut body = std::iter::once("question".to_string())
        .chain((1..=d).map(|t| format!("loading{t}")))
        .chain(std::iter::once("intercept".to_string()))
        .collect::<Vec<_>>()
        .join(",")
        + "\n";
    for (q, name) in names.iter().enumerate() {
        body.push_str(name);
        for t in 0..d {
            body.push(',');
            body.push_str(&serde_json::json!(model.loadings[q][t]).to_string());
        }
        body.push(',');
        body.push_str(&serde_json::json!(model.intercepts[q]).to_string());
        body.push('\n');
    }
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_scores_csv(path: &Path, scores: &[Vec<f64>], d: usize) -> Result<(), Error> {
    let mut body = std::iter::once("annotator".to_string())
        .chain((1..=d).map(|t| format!("trait{t}")))
        .collect::<Vec<_>>()
        .join(",")
        + "\n";
    for (i, row) in scores.iter().enumerate() {
        body.push_str(&(i + 1).to_string());
        for v in row {
            body.push(',');
            body.push_str(&serde_json::json!(v).to_string());
        }
        body.push('\n');
    }
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_latent(args: LatentArgs) -> Result<(), Error> {
    let table = latent::ResponseTable::from_csv(&args.responses)?;
    let question_names: Vec<String> = match &args.io.classes {
        Some(path) => load_classes(path, Some(table.m()))?,
        None => table.question_names().to_vec(),
    };
    let mut rng = derived_rng(args.seed, &[]);
    let fit = latent::fit_latent(&table, args.traits, args.nodes, &mut rng)?;
    let report = latent::deviance(&fit.model, &table, args.nodes)?;
    eprintln!(
        "{} traits on {} annotators x {} questions ({} dropped): \
         deviance {:.4}, {:.2}% of null deviance explained{}",
        args.traits,
        table.n_rows(),
        table.m(),
        table.n_dropped(),
        report.deviance,
        report.percent_explained,
        if fit.converged { "" } else { " (NOT converged)" }
    );
    if let Some(path) = &args.loadings_out {
        if args.traits == 0 {
            return Err(Error::InvalidValue {
                what: "loadings",
                msg: "--loadings-out needs --traits >= 1".into(),
            });
        }
        write_loadings_csv(path, &fit.model, &question_names)?;
    }
    if let Some(path) = &args.scores_out {
        if args.traits == 0 {
            return Err(Error::InvalidValue {
                what: "scores",
                msg: "--scores-out needs --traits >= 1".into(),
            });
        }
        let scores = latent::posterior_scores(&fit.model, &table, args.nodes)?;
        write_scores_csv(path, &scores, fit.model.d())?;
    }
    let value = with_fields(
        report,
        &[
            ("d", serde_json::json!(args.traits)),
            ("nodes", serde_json::json!(args.nodes)),
            ("n_annotators", serde_json::json!(table.n_rows())),
            ("n_questions", serde_json::json!(table.m())),
            ("n_dropped", serde_json::json!(table.n_dropped())),
            ("n_patterns", serde_json::json!(table.n_patterns())),
            ("converged", serde_json::json!(fit.converged)),
            ("iterations", serde_json::json!(fit.iterations)),
        ],
    );
    emit(&value, args.io.out.as_deref())
}
