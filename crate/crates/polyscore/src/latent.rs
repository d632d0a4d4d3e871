//! Latent-trait analysis of dense binary annotations.
//!
//! Each annotator answers the same m yes/no questions; how much of the
//! disagreement between annotators is explained by a low-dimensional
//! latent opinion? The model here is logistic: an annotator carries a
//! latent trait vector `z ~ N(0, I_d)` and answers question q positively
//! with probability `sigmoid(w_q · z + b_q)`. Fitting maximizes the
//! marginal likelihood (z integrated out — by tensor-product Gauss-Hermite
//! quadrature for d ≤ 2, by Monte Carlo for d > 2), and the fit quality is
//! summarized as deviance against the saturated model and the percent of
//! the independent (d = 0) model's deviance explained.
//!
//! Likelihood terms depend only on the distinct response vectors, so rows
//! are grouped by pattern up front; all reductions run in a fixed pattern
//! order, making results independent of annotator row order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::bfgs;
use crate::quad::standard_normal_rule;
use crate::util::{derived_rng, fnv1a, logsumexp, sigmoid, softplus};

/// Default Gauss-Hermite nodes per latent dimension.
pub const DEFAULT_NODES: usize = 20;
/// Monte Carlo draws used to marginalize traits when d > 2.
pub const MC_DRAWS: usize = 1000;

/// Dense binary responses: every admitted annotator answered every
/// question. Rows are grouped by distinct response vector.
#[derive(Debug, Clone)]
pub struct ResponseTable {
    m: usize,
    question_names: Vec<String>,
    /// Distinct response vectors in lexicographic order.
    patterns: Vec<Vec<u8>>,
    counts: Vec<usize>,
    /// Pattern index of each admitted row, in input order.
    row_patterns: Vec<usize>,
    n_rows: usize,
    n_dropped: usize,
}

impl ResponseTable {
    /// Builds a table from complete 0/1 rows.
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        Self::with_names(rows, None, 0)
    }

    fn with_names(
        rows: Vec<Vec<u8>>,
        names: Option<Vec<String>>,
        n_dropped: usize,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("no complete response rows"));
        }
        let m = rows[0].len();
        if m < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 questions, got {m}"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::invalid(format!(
                    "row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&v| v > 1) {
                return Err(Error::invalid(format!(
                    "row {} contains {bad}; responses must be 0 or 1",
                    i + 1
                )));
            }
        }
        let question_names = match names {
            Some(names) => {
                if names.len() != m {
                    return Err(Error::invalid(format!(
                        "{} question names for {m} columns",
                        names.len()
                    )));
                }
                names
            }
            None => (1..=m).map(|q| format!("q{q}")).collect(),
        };
        let mut index: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for row in &rows {
            let next = index.len();
            index.entry(row.clone()).or_insert(next);
        }
        if index.len() < 2 {
            return Err(Error::invalid(
                "all annotators gave the identical response vector; \
                 a latent-trait analysis needs at least 2 distinct patterns",
            ));
        }
        // Re-number patterns lexicographically so the table is independent
        // of row order.
        let patterns: Vec<Vec<u8>> = index.keys().cloned().collect();
        let rank: BTreeMap<&[u8], usize> = patterns
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_slice(), i))
            .collect();
        let mut counts = vec![0usize; patterns.len()];
        let mut row_patterns = Vec::with_capacity(rows.len());
        for row in &rows {
            let p = rank[row.as_slice()];
            counts[p] += 1;
            row_patterns.push(p);
        }
        Ok(Self {
            m,
            question_names,
            patterns,
            counts,
            row_patterns,
            n_rows: rows.len(),
            n_dropped,
        })
    }

    /// Loads a CSV of annotator rows with 0/1 entries.
    ///
    /// A first row with any field other than `0`/`1` (or a missing-value
    /// token) is taken as a header of question names. Rows containing a
    /// missing entry — an empty field, `NA`, `na`, or `?` — are dropped
    /// and counted in [`ResponseTable::n_dropped`].
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: e.to_string(),
            })?;
        enum Cell {
            Value(u8),
            Missing,
            Other,
        }
        let classify = |field: &str| -> Cell {
            match field.trim() {
                "0" => Cell::Value(0),
                "1" => Cell::Value(1),
                "" | "NA" | "na" | "?" => Cell::Missing,
                _ => Cell::Other,
            }
        };
        let mut names: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<u8>> = Vec::new();
        let mut n_dropped = 0usize;
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
            let cells: Vec<Cell> = record.iter().map(classify).collect();
            if idx == 0 && cells.iter().any(|c| matches!(c, Cell::Other)) {
                names = Some(record.iter().map(|f| f.trim().to_string()).collect());
                continue;
            }
            if cells.iter().any(|c| matches!(c, Cell::Other)) {
                let field = record
                    .iter()
                    .find(|f| matches!(classify(f), Cell::Other))
                    .unwrap_or("");
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("unrecognized response {field:?}; expected 0 or 1"),
                });
            }
            if cells.iter().any(|c| matches!(c, Cell::Missing)) {
                n_dropped += 1;
                continue;
            }
            rows.push(
                cells
                    .iter()
                    .map(|c| match c {
                        Cell::Value(v) => *v,
                        _ => unreachable!(),
                    })
                    .collect(),
            );
        }
        Self::with_names(rows, names, n_dropped)
    }

    /// Number of questions.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Admitted (complete) annotator rows.
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Incomplete rows dropped by the loader.
    pub fn n_dropped(&self) -> usize {
        self.n_dropped
    }

    /// Number of distinct response vectors.
    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    /// The distinct response vectors, in the model's internal (sorted) order.
    pub fn patterns(&self) -> &[Vec<u8>] {
        &self.patterns
    }

    pub fn question_names(&self) -> &[String] {
        &self.question_names
    }

    /// Empirical positive-response frequency of each question.
    pub fn question_frequencies(&self) -> Vec<f64> {
        let mut freq = vec![0.0; self.m];
        for (pattern, &count) in self.patterns.iter().zip(&self.counts) {
            for (q, &y) in pattern.iter().enumerate() {
                freq[q] += y as f64 * count as f64;
            }
        }
        for f in &mut freq {
            *f /= self.n_rows as f64;
        }
        freq
    }
}

/// A fitted logistic latent-trait model: question loadings `w` (m rows of
/// length d) and intercepts `b` (length m). `d = 0` is the independent
/// (null) model.
#[derive(Debug, Clone, Serialize)]
pub struct LatentTraitModel {
    /// Loadings, one row of length `d` per question.
    pub loadings: Vec<Vec<f64>>,
    /// Per-question intercepts.
    pub intercepts: Vec<f64>,
}

impl LatentTraitModel {
    pub fn new(loadings: Vec<Vec<f64>>, intercepts: Vec<f64>) -> Result<Self> {
        let m = intercepts.len();
        if loadings.len() != m {
            return Err(Error::invalid(format!(
                "{} loading rows for {m} intercepts",
                loadings.len()
            )));
        }
        let d = loadings.first().map_or(0, |row| row.len());
        if d > m {
            return Err(Error::invalid(format!("{d} traits exceed {m} questions")));
        }
        for row in &loadings {
            if row.len() != d {
                return Err(Error::invalid("ragged loading matrix"));
            }
        }
        let finite = intercepts.iter().all(|v| v.is_finite())
            && loadings.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(Self {
            loadings,
            intercepts,
        })
    }

    /// Number of questions.
    pub fn m(&self) -> usize {
        self.intercepts.len()
    }

    /// Number of latent traits.
    pub fn d(&self) -> usize {
        self.loadings.first().map_or(0, |row| row.len())
    }
}

/// Result of [`fit_latent`]: the model plus optimization diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct LatentFit {
    pub model: LatentTraitModel,
    /// Marginal log-likelihood of the fitted model (nats).
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Integration design: points in trait space with log-weights.
struct Design {
    /// Flattened points, `d` coordinates each.
    points: Vec<f64>,
    ln_weights: Vec<f64>,
    d: usize,
}

impl Design {
    fn len(&self) -> usize {
        self.ln_weights.len()
    }

    fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.d..(j + 1) * self.d]
    }

    /// Tensor-product Gauss-Hermite rule over `N(0, I_d)`.
    fn gauss_hermite(d: usize, nodes: usize) -> Self {
        if d == 0 {
            return Self {
                points: Vec::new(),
                ln_weights: vec![0.0],
                d: 0,
            };
        }
        let (z, w) = standard_normal_rule(nodes);
        let ln_w: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let total = nodes.pow(d as u32);
        let mut points = Vec::with_capacity(total * d);
        let mut ln_weights = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut lw = 0.0;
            for _ in 0..d {
                let i = idx % nodes;
                idx /= nodes;
                points.push(z[i]);
                lw += ln_w[i];
            }
            ln_weights.push(lw);
        }
        Self {
            points,
            ln_weights,
            d,
        }
    }

    /// Equal-weight standard normal draws (for d > 2).
    fn monte_carlo<R: Rng + ?Sized>(d: usize, draws: usize, rng: &mut R) -> Self {
        let mut points = Vec::with_capacity(draws * d);
        for _ in 0..draws * d {
            points.push(StandardNormal.sample(rng));
        }
        Self {
            points,
            ln_weights: vec![-(draws as f64).ln(); draws],
            d,
        }
    }
}

/// Marginal log-likelihood of the table under the model and, optionally,
/// its gradient with respect to `[b, W]`.
fn loglik_core(
    b: &[f64],
    w: &[f64], // m × d row-major
    table: &ResponseTable,
    design: &Design,
    mut grad: Option<&mut [f64]>, // length m + m·d, layout [b, W]
) -> f64 {
    let m = table.m;
    let d = design.d;
    let nj = design.len();

    // Per (question, point): s = b_q + w_q·z_j, its sigmoid, and the two
    // Bernoulli log-masses.
    let mut sig = vec![0.0; m * nj];
    let mut ln_pos = vec![0.0; m * nj];
    let mut ln_neg = vec![0.0; m * nj];
    for q in 0..m {
        let wq = &w[q * d..(q + 1) * d];
        for j in 0..nj {
            let s = b[q]
                + wq.iter()
                    .zip(design.point(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            sig[q * nj + j] = sigmoid(s);
            ln_pos[q * nj + j] = -softplus(-s);
            ln_neg[q * nj + j] = -softplus(s);
        }
    }

    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut total = 0.0;
    let mut terms = vec![0.0; nj];
    for (pattern, &count) in table.patterns.iter().zip(&table.counts) {
        for (j, term) in terms.iter_mut().enumerate() {
            let mut t = design.ln_weights[j];
            for (q, &y) in pattern.iter().enumerate() {
                t += if y == 1 {
                    ln_pos[q * nj + j]
                } else {
                    ln_neg[q * nj + j]
                };
            }
            *term = t;
        }
        let lse = logsumexp(&terms);
        total += count as f64 * lse;
        if let Some(g) = grad.as_deref_mut() {
            for j in 0..nj {
                let resp = (terms[j] - lse).exp() * count as f64;
                if resp == 0.0 {
                    continue;
                }
                let zj = design.point(j);
                for (q, &y) in pattern.iter().enumerate() {
                    let diff = resp * (y as f64 - sig[q * nj + j]);
                    g[q] += diff;
                    for (t, &z) in zj.iter().enumerate() {
                        g[m + q * d + t] += diff * z;
                    }
                }
            }
        }
    }
    total
}

/// Closed-form independent-Bernoulli (d = 0) fit: intercepts are logits of
/// the empirical question frequencies, clamped away from 0 and 1 by half
/// an observation so the parameters stay finite.
fn fit_null(table: &ResponseTable) -> LatentTraitModel {
    let n = table.n_rows as f64;
    let intercepts = table
        .question_frequencies()
        .iter()
        .map(|&f| {
            let f = f.clamp(0.5 / n, 1.0 - 0.5 / n);
            (f / (1.0 - f)).ln()
        })
        .collect();
    LatentTraitModel {
        loadings: vec![Vec::new(); table.m],
        intercepts,
    }
}

fn validate_nodes(d: usize, nodes: usize) -> Result<()> {
    if (1..=2).contains(&d) && !(5..=100).contains(&nodes) {
        return Err(Error::invalid(format!(
            "quadrature nodes must lie in 5..=100 for d = {d}, got {nodes}"
        )));
    }
    Ok(())
}

fn design_for<R: Rng + ?Sized>(d: usize, nodes: usize, rng: &mut R) -> Design {
    if d <= 2 {
        Design::gauss_hermite(d, nodes)
    } else {
        Design::monte_carlo(d, MC_DRAWS, rng)
    }
}

/// Marginal log-likelihood of `table` under `model` (nats).
///
/// Uses `nodes`-point tensor Gauss-Hermite quadrature for d ≤ 2; for
/// d > 2 the integral is Monte Carlo over [`MC_DRAWS`] draws from `rng`
/// (ignored otherwise).
pub fn marginal_loglik<R: Rng + ?Sized>(
    model: &LatentTraitModel,
    table: &ResponseTable,
    nodes: usize,
    rng: &mut R,
) -> Result<f64> {
    if model.m() != table.m() {
        return Err(Error::invalid(format!(
            "model covers {} questions but the table has {}",
            model.m(),
            table.m()
        )));
    }
    validate_nodes(model.d(), nodes)?;
    let design = design_for(model.d(), nodes, rng);
    let w: Vec<f64> = model.loadings.iter().flatten().copied().collect();
    Ok(loglik_core(
        &model.intercepts,
        &w,
        table,
        &design,
        None,
    ))
}

/// Fits a d-trait model by marginal maximum likelihood.
///
/// Fits are nested: the optimizer warm-starts each trait count from the
/// fit with one fewer trait, so the attained likelihood is nondecreasing
/// in d. `rng` seeds the small random initialization of each new loading
/// column (and the Monte Carlo integration points when d > 2). On
/// non-convergence the best iterate found is returned with
/// `converged = false`.
pub fn fit_latent<R: Rng + ?Sized>(
    table: &ResponseTable,
    d: usize,
    nodes: usize,
    rng: &mut R,
) -> Result<LatentFit> {
    if d > table.m() {
        return Err(Error::invalid(format!(
            "{d} traits exceed {} questions",
            table.m()
        )));
    }
    validate_nodes(d.min(2), nodes)?;
    let m = table.m();
    let n = table.n_rows() as f64;

    let null = fit_null(table);
    let null_design = Design::gauss_hermite(0, nodes.max(5));
    let mut loglik = loglik_core(&null.intercepts, &[], table, &null_design, None);
    if d == 0 {
        return Ok(LatentFit {
            model: null,
            loglik,
            converged: true,
            iterations: 0,
        });
    }

    let mut b = null.intercepts;
    let mut w: Vec<f64> = Vec::new(); // m × cur_d row-major
    let mut converged = true;
    let mut iterations = 0;
    for cur_d in 1..=d {
        // Embed the previous solution and give the new column a small
        // random tilt: at exactly zero the new direction is a stationary
        // flat of the likelihood and the optimizer would never leave it.
        let mut w_init = vec![0.0; m * cur_d];
        for q in 0..m {
            for t in 0..cur_d - 1 {
                w_init[q * cur_d + t] = w[q * (cur_d - 1) + t];
            }
            let tilt: f64 = StandardNormal.sample(rng);
            w_init[q * cur_d + cur_d - 1] = 0.05 * tilt;
        }
        let design = design_for(cur_d, nodes, rng);
        let theta0: Vec<f64> = b.iter().copied().chain(w_init.iter().copied()).collect();
        let objective = |theta: &[f64]| {
            let (bt, wt) = theta.split_at(m);
            let mut grad = vec![0.0; theta.len()];
            let ll = loglik_core(bt, wt, table, &design, Some(&mut grad));
            for g in &mut grad {
                *g = -*g / n;
            }
            (-ll / n, grad)
        };
        let result = bfgs(objective, &theta0, 1e-7, 600, 5.0);
        converged = result.converged;
        iterations = result.iterations;
        loglik = -result.value * n;
        let (bt, wt) = result.x.split_at(m);
        b = bt.to_vec();
        w = wt.to_vec();
    }

    // Sign convention: flip each trait column so its first nonzero loading
    // is positive ((W, b) and (-W, b) are the same distribution).
    for t in 0..d {
        let first = (0..m).map(|q| w[q * d + t]).find(|&v| v != 0.0);
        if let Some(v) = first {
            if v < 0.0 {
                for q in 0..m {
                    w[q * d + t] = -w[q * d + t];
                }
            }
        }
    }

    let loadings = (0..m).map(|q| w[q * d..(q + 1) * d].to_vec()).collect();
    Ok(LatentFit {
        model: LatentTraitModel {
            loadings,
            intercepts: b,
        },
        loglik,
        converged,
        iterations,
    })
}

/// Goodness-of-fit summary against the saturated and independent models.
#[derive(Debug, Clone, Serialize)]
pub struct DevianceReport {
    pub loglik_model: f64,
    pub loglik_saturated: f64,
    pub loglik_null: f64,
    /// `2 (loglik_saturated − loglik_model)`; nonnegative because the
    /// saturated model majorizes every model on its own data.
    pub deviance: f64,
    /// Percent of the null (independent) model's deviance explained:
    /// `100 (D_null − D_model) / D_null`.
    pub percent_explained: f64,
    pub percent_residual: f64,
}

impl DevianceReport {
    /// Assembles the report from already-computed log-likelihoods. The
    /// null model explains 0% by construction; a model matching the
    /// saturated likelihood explains 100%.
    pub fn from_logliks(loglik_model: f64, loglik_saturated: f64, loglik_null: f64) -> Self {
        let deviance = 2.0 * (loglik_saturated - loglik_model);
        let null_deviance = 2.0 * (loglik_saturated - loglik_null);
        let percent_explained = if null_deviance == 0.0 {
            0.0
        } else {
            100.0 * (null_deviance - deviance) / null_deviance
        };
        Self {
            loglik_model,
            loglik_saturated,
            loglik_null,
            deviance,
            percent_explained,
            percent_residual: 100.0 - percent_explained,
        }
    }
}

/// Log-likelihood of the saturated model: each distinct response vector
/// gets exactly its empirical frequency.
pub fn saturated_loglik(table: &ResponseTable) -> f64 {
    let n = table.n_rows as f64;
    table
        .counts
        .iter()
        .map(|&c| c as f64 * ((c as f64 / n).ln()))
        .sum()
}

/// Deviance of `model` on `table` against the saturated and independent
/// baselines, integrating with `nodes` quadrature points per dimension.
///
/// For d > 2 the model log-likelihood is Monte Carlo over a fixed internal
/// stream, so the report is deterministic.
pub fn deviance(
    model: &LatentTraitModel,
    table: &ResponseTable,
    nodes: usize,
) -> Result<DevianceReport> {
    let mut rng = derived_rng(0, &[fnv1a(b"latent-deviance")]);
    let loglik_model = marginal_loglik(model, table, nodes, &mut rng)?;
    let null = fit_null(table);
    let loglik_null = marginal_loglik(&null, table, nodes.max(5), &mut rng)?;
    Ok(DevianceReport::from_logliks(
        loglik_model,
        saturated_loglik(table),
        loglik_null,
    ))
}

/// Posterior mean trait vector of each admitted annotator row (input
/// order), `n_rows × d`. These are the projected annotator positions for
/// 2-D visualization.
pub fn posterior_scores(
    model: &LatentTraitModel,
    table: &ResponseTable,
    nodes: usize,
) -> Result<Vec<Vec<f64>>> {
    if model.m() != table.m() {
        return Err(Error::invalid(format!(
            "model covers {} questions but the table has {}",
            model.m(),
            table.m()
        )));
    }
    let d = model.d();
    validate_nodes(d, nodes)?;
    let mut rng = derived_rng(0, &[fnv1a(b"latent-scores")]);
    let design = design_for(d, nodes, &mut rng);
    let w: Vec<f64> = model.loadings.iter().flatten().copied().collect();
    let b = &model.intercepts;
    let nj = design.len();
    let m = table.m();

    // Per-pattern posterior mean of z.
    let mut ln_pos = vec![0.0; m * nj];
    let mut ln_neg = vec![0.0; m * nj];
    for q in 0..m {
        let wq = &w[q * d..(q + 1) * d];
        for j in 0..nj {
            let s = b[q]
                + wq.iter()
                    .zip(design.point(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            ln_pos[q * nj + j] = -softplus(-s);
            ln_neg[q * nj + j] = -softplus(s);
        }
    }
    let mut pattern_means = Vec::with_capacity(table.patterns.len());
    let mut terms = vec![0.0; nj];
    for pattern in &table.patterns {
        for (j, term) in terms.iter_mut().enumerate() {
            let mut t = design.ln_weights[j];
            for (q, &y) in pattern.iter().enumerate() {
                t += if y == 1 {
                    ln_pos[q * nj + j]
                } else {
                    ln_neg[q * nj + j]
                };
            }
            *term = t;
        }
        let lse = logsumexp(&terms);
        let mut mean = vec![0.0; d];
        for (j, term) in terms.iter().enumerate() {
            let resp = (term - lse).exp();
            for (t, &z) in design.point(j).iter().enumerate() {
                mean[t] += resp * z;
            }
        }
        pattern_means.push(mean);
    }
    Ok(table
        .row_patterns
        .iter()
        .map(|&p| pattern_means[p].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y_aq ~ Bernoulli(sigmoid(w_q z_a + b_q)), z_a ~ N(0,1).
    fn one_trait_data(
        m: usize,
        n: usize,
        w: impl Fn(usize) -> f64,
        b: impl Fn(usize) -> f64,
        seed: u64,
    ) -> ResponseTable {
        let mut rng = derived_rng(seed, &[fnv1a(b"one-trait")]);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let row = (0..m)
                .map(|q| u8::from(rng.random::<f64>() < sigmoid(w(q) * z + b(q))))
                .collect();
            rows.push(row);
        }
        ResponseTable::new(rows).unwrap()
    }

    #[test]
    fn table_validation_and_grouping() {
        let t = ResponseTable::new(vec![
            vec![1, 0, 1],
            vec![0, 0, 0],
            vec![1, 0, 1],
            vec![1, 1, 1],
        ])
        .unwrap();
        assert_eq!(t.m(), 3);
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.n_patterns(), 3);
        assert_eq!(t.question_names(), &["q1", "q2", "q3"]);
        let freq = t.question_frequencies();
        assert_eq!(freq, vec![0.75, 0.25, 0.75]);

        assert!(ResponseTable::new(vec![]).is_err(), "empty");
        assert!(ResponseTable::new(vec![vec![1], vec![0]]).is_err(), "m=1");
        assert!(
            ResponseTable::new(vec![vec![1, 0], vec![1, 0, 1]]).is_err(),
            "ragged"
        );
        assert!(
            ResponseTable::new(vec![vec![1, 2], vec![0, 0]]).is_err(),
            "non-binary"
        );
        assert!(
            ResponseTable::new(vec![vec![1, 0], vec![1, 0]]).is_err(),
            "single pattern"
        );
    }

    #[test]
    fn csv_loader_handles_headers_and_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.csv");
        std::fs::write(
            &path,
            "harm,fair,loyal\n1,0,1\n0,,1\n0,0,0\n1,NA,0\n1,1,1\n",
        )
        .unwrap();
        let t = ResponseTable::from_csv(&path).unwrap();
        assert_eq!(t.question_names(), &["harm", "fair", "loyal"]);
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_dropped(), 2);

        let bare = dir.path().join("bare.csv");
        std::fs::write(&bare, "1,0\n0,1\n?,1\n").unwrap();
        let t = ResponseTable::from_csv(&bare).unwrap();
        assert_eq!(t.question_names(), &["q1", "q2"]);
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.n_dropped(), 1);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "1,0\n2,1\n").unwrap();
        assert!(matches!(
            ResponseTable::from_csv(&bad),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn null_fit_is_the_clamped_empirical_logit() {
        let t = ResponseTable::new(vec![
            vec![1, 0, 1],
            vec![0, 0, 1],
            vec![0, 1, 1],
            vec![0, 0, 1],
        ])
        .unwrap();
        let mut rng = derived_rng(0, &[]);
        let fit = fit_latent(&t, 0, 20, &mut rng).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.model.d(), 0);
        // Frequencies 1/4, 1/4, 1 (clamped to 7/8).
        let expect = [
            (0.25f64 / 0.75).ln(),
            (0.25f64 / 0.75).ln(),
            (0.875f64 / 0.125).ln(),
        ];
        for (b, e) in fit.model.intercepts.iter().zip(expect) {
            assert!((b - e).abs() < 1e-12, "{b} vs {e}");
        }
        // Its log-likelihood factorizes over questions.
        let direct: f64 = [0.25f64, 0.25, 0.875]
            .iter()
            .zip([1.0f64, 1.0, 4.0])
            .map(|(&p, ones)| 4.0 * (ones / 4.0 * p.ln() + (1.0 - ones / 4.0) * (1.0 - p).ln()))
            .sum();
        assert!((fit.loglik - direct).abs() < 1e-9, "{} vs {direct}", fit.loglik);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let t = one_trait_data(3, 40, |q| 0.8 + 0.3 * q as f64, |q| 0.2 * q as f64 - 0.3, 11);
        for d in [1usize, 2] {
            let design = Design::gauss_hermite(d, 12);
            let m = t.m();
            let mut rng = derived_rng(5 + d as u64, &[]);
            let theta: Vec<f64> = (0..m + m * d)
                .map(|_| 0.6 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut grad = vec![0.0; theta.len()];
            let (b, w) = theta.split_at(m);
            loglik_core(b, w, &t, &design, Some(&mut grad));
            let h = 1e-6;
            for i in 0..theta.len() {
                let mut plus = theta.clone();
                plus[i] += h;
                let mut minus = theta.clone();
                minus[i] -= h;
                let (bp, wp) = plus.split_at(m);
                let (bm, wm) = minus.split_at(m);
                let fd = (loglik_core(bp, wp, &t, &design, None)
                    - loglik_core(bm, wm, &t, &design, None))
                    / (2.0 * h);
                let denom = grad[i].abs().max(fd.abs()).max(1e-2);
                assert!(
                    (grad[i] - fd).abs() / denom < 1e-5,
                    "d={d} component {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn quadrature_node_count_is_converged_at_twenty() {
        let t = one_trait_data(6, 150, |q| 0.9 - 0.1 * q as f64, |_| 0.1, 3);
        let model = LatentTraitModel::new(
            (0..6).map(|q| vec![0.9 - 0.1 * q as f64]).collect(),
            vec![0.1; 6],
        )
        .unwrap();
        let mut r1 = derived_rng(0, &[]);
        let mut r2 = derived_rng(0, &[]);
        let ll20 = marginal_loglik(&model, &t, 20, &mut r1).unwrap();
        let ll40 = marginal_loglik(&model, &t, 40, &mut r2).unwrap();
        assert!(
            (ll20 - ll40).abs() < 1e-6,
            "20 nodes {ll20} vs 40 nodes {ll40}"
        );
    }

    #[test]
    fn one_trait_fit_beats_null_on_one_trait_data() {
        let t = one_trait_data(
            10,
            2000,
            |q| if q % 2 == 0 { 2.0 } else { -1.5 },
            |q| 0.1 * (q as f64 - 4.5),
            21,
        );
        let mut rng = derived_rng(9, &[]);
        let null = fit_latent(&t, 0, 20, &mut rng).unwrap();
        let fit = fit_latent(&t, 1, 20, &mut rng).unwrap();
        assert!(fit.converged, "1-trait fit did not converge");
        assert!(
            fit.loglik > null.loglik + 1.0,
            "1-trait {} vs null {}",
            fit.loglik,
            null.loglik
        );
        let report = deviance(&fit.model, &t, 20).unwrap();
        assert!(report.deviance >= 0.0);
        assert!(report.percent_explained > 0.0);
        let null_report = deviance(&null.model, &t, 20).unwrap();
        assert!(null_report.deviance >= report.deviance - 1e-4);
    }

    #[test]
    fn sign_convention_and_reflection_symmetry() {
        let t = one_trait_data(5, 300, |q| 1.5 - 0.4 * q as f64, |_| 0.0, 33);
        let mut rng = derived_rng(13, &[]);
        let fit = fit_latent(&t, 1, 20, &mut rng).unwrap();
        let first = fit
            .model
            .loadings
            .iter()
            .map(|row| row[0])
            .find(|&v| v != 0.0)
            .unwrap();
        assert!(first > 0.0, "first nonzero loading must be positive");

        // Reflected loadings give the identical marginal likelihood.
        let reflected = LatentTraitModel::new(
            fit.model
                .loadings
                .iter()
                .map(|row| row.iter().map(|v| -v).collect())
                .collect(),
            fit.model.intercepts.clone(),
        )
        .unwrap();
        let mut r1 = derived_rng(0, &[]);
        let mut r2 = derived_rng(0, &[]);
        let a = marginal_loglik(&fit.model, &t, 20, &mut r1).unwrap();
        let b = marginal_loglik(&reflected, &t, 20, &mut r2).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn deviance_definitional_cases_are_exact() {
        let t = one_trait_data(4, 120, |_| 1.0, |_| 0.0, 44);
        let sat = saturated_loglik(&t);
        let mut rng = derived_rng(1, &[]);
        let null = fit_latent(&t, 0, 20, &mut rng).unwrap();

        // Saturated model: deviance exactly 0, percent exactly 100.
        let report = DevianceReport::from_logliks(sat, sat, null.loglik);
        assert_eq!(report.deviance, 0.0);
        assert_eq!(report.percent_explained, 100.0);
        assert_eq!(report.percent_residual, 0.0);

        // Null model through the full pipeline: percent exactly 0.
        let report = deviance(&null.model, &t, 20).unwrap();
        assert_eq!(report.percent_explained, 0.0);
        assert_eq!(report.percent_residual, 100.0);
        assert!((report.loglik_model - report.loglik_null).abs() == 0.0);
        assert!(report.deviance >= 0.0);
        assert!((report.loglik_saturated - sat).abs() == 0.0);

        // Degenerate: no null deviance to explain.
        let flat = DevianceReport::from_logliks(sat, sat, sat);
        assert_eq!(flat.percent_explained, 0.0);
    }

    #[test]
    fn percent_explained_is_monotone_in_trait_count() {
        // Two independent traits drive the responses.
        let mut rng = derived_rng(55, &[fnv1a(b"two-trait")]);
        let m = 6;
        let mut rows = Vec::new();
        for _ in 0..400 {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let row = (0..m)
                .map(|q| {
                    let s = if q < 3 { 1.8 * z1 } else { 1.8 * z2 };
                    u8::from(rng.random::<f64>() < sigmoid(s))
                })
                .collect();
            rows.push(row);
        }
        let t = ResponseTable::new(rows).unwrap();
        let mut percents = Vec::new();
        for d in 0..=2 {
            let mut fit_rng = derived_rng(100, &[d as u64]);
            let fit = fit_latent(&t, d, 12, &mut fit_rng).unwrap();
            let report = deviance(&fit.model, &t, 12).unwrap();
            percents.push(report.percent_explained);
        }
        assert_eq!(percents[0], 0.0);
        assert!(percents[1] > percents[0] + 1.0, "{percents:?}");
        assert!(percents[2] >= percents[1] - 1e-3, "{percents:?}");
    }

    #[test]
    fn monte_carlo_path_runs_for_three_traits() {
        let t = one_trait_data(4, 80, |q| 1.0 + 0.2 * q as f64, |_| 0.0, 66);
        let mut rng = derived_rng(3, &[]);
        let fit = fit_latent(&t, 3, 20, &mut rng).unwrap();
        assert_eq!(fit.model.d(), 3);
        assert!(fit.loglik.is_finite());
        let report = deviance(&fit.model, &t, 20).unwrap();
        assert!(report.deviance.is_finite());
        assert!(report.percent_explained <= 100.0 + 1e-9);
        assert!(fit_latent(&t, 5, 20, &mut rng).is_err(), "d > m");
        assert!(fit_latent(&t, 1, 3, &mut rng).is_err(), "too few nodes");
    }

    #[test]
    fn posterior_scores_track_response_positivity() {
        let t = one_trait_data(8, 400, |_| 2.0, |_| 0.0, 77);
        let mut rng = derived_rng(15, &[]);
        let fit = fit_latent(&t, 1, 20, &mut rng).unwrap();
        let scores = posterior_scores(&fit.model, &t, 20).unwrap();
        assert_eq!(scores.len(), t.n_rows());
        // All loadings share a sign, so an annotator's trait score must
        // rise with the number of positive answers. Compare group means.
        let mut by_count: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for (row, score) in t.row_patterns.iter().zip(&scores) {
            let ones = t.patterns[*row].iter().map(|&v| v as usize).sum::<usize>();
            let e = by_count.entry(ones).or_insert((0.0, 0));
            e.0 += score[0];
            e.1 += 1;
        }
        let means: Vec<f64> = by_count.values().map(|(s, c)| s / *c as f64).collect();
        for pair in means.windows(2) {
            assert!(pair[0] < pair[1] + 1e-9, "scores not monotone: {means:?}");
        }
    }

    #[test]
    fn row_order_does_not_change_the_fit() {
        let t1 = one_trait_data(5, 150, |q| 1.0 + 0.1 * q as f64, |_| -0.2, 88);
        // Rebuild the same multiset of rows in reversed order.
        let mut rows: Vec<Vec<u8>> = t1
            .row_patterns
            .iter()
            .map(|&p| t1.patterns[p].clone())
            .collect();
        rows.reverse();
        let t2 = ResponseTable::new(rows).unwrap();
        let mut r1 = derived_rng(4, &[]);
        let mut r2 = derived_rng(4, &[]);
        let f1 = fit_latent(&t1, 1, 16, &mut r1).unwrap();
        let f2 = fit_latent(&t2, 1, 16, &mut r2).unwrap();
        assert_eq!(f1.loglik.to_bits(), f2.loglik.to_bits());
        for (a, b) in f1.model.intercepts.iter().zip(&f2.model.intercepts) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
