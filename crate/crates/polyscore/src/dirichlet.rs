//! Dirichlet prior over class proportions, fitted to annotation counts by
//! maximum likelihood under the Dirichlet-multinomial (Pólya) observation
//! model.
//!
//! Each example's count row `Y_i` (with `N_i = sum_j Y_ij` annotations) is
//! modeled as a multinomial draw whose proportion vector was itself drawn
//! from `Dirichlet(alpha)`. Marginalizing the proportions gives the
//! Dirichlet-multinomial likelihood
//!
//! ```text
//! P(Y_i | alpha) = N_i! / prod_j Y_ij!
//!                  * G(A) / G(N_i + A)
//!                  * prod_j G(Y_ij + alpha_j) / G(alpha_j),   A = sum_j alpha_j
//! ```
//!
//! with `G` the gamma function. Everything here is computed in log-gamma
//! space, so counts in the thousands and concentrations from 1e-3 to 1e6
//! are all safe.
//!
//! [`fit_prior`] maximizes this likelihood over `alpha` (equivalently,
//! minimizes [`dm_nll`]) with BFGS in `log alpha` space, which keeps every
//! iterate strictly positive without constraints. Sufficient statistics
//! are grouped by distinct count value first, so one objective evaluation
//! costs `O(distinct values)` log-gamma calls, not `O(n * k)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::io::AnnotationMatrix;
use crate::optim;

/// `ln G(a + n) - ln G(a)` for integer `n >= 0`, computed without
/// cancellation at any scale of `a`:
/// as the exact product identity `sum_t ln(a + t)` for small `n`, as a
/// plain log-gamma difference when `a` is not much larger than `n`, and
/// through a Stirling-series difference when `a >> n` (where the two
/// log-gammas agree to many digits and subtracting them directly loses
/// everything).
pub(crate) fn ln_gamma_ratio(a: f64, n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    if n <= 64 {
        let mut s = 0.0;
        for t in 0..n {
            s += (a + t as f64).ln();
        }
        s
    } else if a <= nf * 1e6 {
        ln_gamma(a + nf) - ln_gamma(a)
    } else {
        // ln G(z) ~ (z - 1/2) ln z - z + ln(2 pi)/2 + 1/(12 z) - ...
        // Differencing the series keeps every term well conditioned.
        (a - 0.5) * (nf / a).ln_1p() + nf * (a + nf).ln() - nf
            - nf / (12.0 * a * (a + nf))
    }
}

/// `psi(a + n) - psi(a)` for integer `n >= 0`, cancellation-free (same
/// strategy as [`ln_gamma_ratio`]).
pub(crate) fn digamma_diff(a: f64, n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    if n <= 64 {
        let mut s = 0.0;
        for t in 0..n {
            s += 1.0 / (a + t as f64);
        }
        s
    } else if a <= nf * 1e6 {
        digamma(a + nf) - digamma(a)
    } else {
        // psi(z) ~ ln z - 1/(2 z) - 1/(12 z^2) + ...
        (nf / a).ln_1p() + nf / (2.0 * a * (a + nf))
            + nf * (2.0 * a + nf) / (12.0 * a * a * (a + nf) * (a + nf))
    }
}

/// A Dirichlet distribution over the `k`-simplex, used both as the fitted
/// annotation prior and as per-example posterior parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletPrior {
    alpha: Vec<f64>,
}

impl DirichletPrior {
    /// Validates that every concentration is finite and strictly positive.
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::invalid(format!(
                "a Dirichlet needs at least 2 components, got {}",
                alpha.len()
            )));
        }
        for (j, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::InvalidValue {
                    what: "alpha",
                    msg: format!("component {j} is {a}; must be finite and > 0"),
                });
            }
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Sum of concentrations.
    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Distribution mean `alpha / sum(alpha)`.
    pub fn mean(&self) -> Vec<f64> {
        let a = self.total();
        self.alpha.iter().map(|&x| x / a).collect()
    }
}

/// Result of [`fit_prior`].
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// Fitted prior; serialized as `"alpha"`.
    #[serde(flatten)]
    pub prior: DirichletPrior,
    /// Negative log-likelihood at the fitted prior.
    pub final_nll: f64,
    /// BFGS iterations spent.
    pub iterations: usize,
    /// Whether the gradient norm reached `tol` within `max_iter`.
    pub converged: bool,
    /// Final gradient norm in `log alpha` coordinates.
    pub gradient_norm: f64,
}

/// Knobs for [`fit_prior_with`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Starting concentrations; method-of-moments when absent.
    pub init: Option<Vec<f64>>,
    /// Convergence threshold on the `log alpha`-space gradient norm.
    pub tol: f64,
    /// Iteration budget.
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: None,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Grouped sufficient statistics for the Dirichlet-multinomial likelihood
/// of one annotation matrix: per-class histograms of nonzero counts, the
/// histogram of annotation totals, and the alpha-independent multinomial
/// coefficient term.
struct DmStats {
    /// Per class: ascending `(count, multiplicity)` with `count >= 1`.
    class_hist: Vec<Vec<(u32, f64)>>,
    /// Ascending `(total, multiplicity)`.
    total_hist: Vec<(u32, f64)>,
    /// `sum_i [ln G(N_i + 1) - sum_j ln G(Y_ij + 1)]`.
    log_coeff: f64,
}

impl DmStats {
    fn new(ann: &AnnotationMatrix) -> Self {
        use std::collections::HashMap;
        let k = ann.k();
        let mut class_maps: Vec<HashMap<u32, u64>> = vec![HashMap::new(); k];
        let mut total_map: HashMap<u32, u64> = HashMap::new();
        for i in 0..ann.n() {
            for (j, &c) in ann.row(i).iter().enumerate() {
                if c > 0 {
                    *class_maps[j].entry(c).or_insert(0) += 1;
                }
            }
            *total_map.entry(ann.total(i)).or_insert(0) += 1;
        }
        let sort = |m: HashMap<u32, u64>| {
            let mut v: Vec<(u32, f64)> = m.into_iter().map(|(c, m)| (c, m as f64)).collect();
            v.sort_unstable_by_key(|&(c, _)| c);
            v
        };
        let class_hist: Vec<_> = class_maps.into_iter().map(sort).collect();
        let total_hist = sort(total_map);
        let mut log_coeff = 0.0;
        for &(n, m) in &total_hist {
            log_coeff += m * ln_gamma(n as f64 + 1.0);
        }
        for hist in &class_hist {
            for &(c, m) in hist {
                log_coeff -= m * ln_gamma(c as f64 + 1.0);
            }
        }
        Self {
            class_hist,
            total_hist,
            log_coeff,
        }
    }

    fn nll(&self, alpha: &[f64]) -> f64 {
        let a: f64 = alpha.iter().sum();
        let mut ll = self.log_coeff;
        for &(n, m) in &self.total_hist {
            ll -= m * ln_gamma_ratio(a, n);
        }
        for (j, hist) in self.class_hist.iter().enumerate() {
            for &(c, m) in hist {
                ll += m * ln_gamma_ratio(alpha[j], c);
            }
        }
        -ll
    }

    fn grad(&self, alpha: &[f64]) -> Vec<f64> {
        let a: f64 = alpha.iter().sum();
        let mut shared = 0.0;
        for &(n, m) in &self.total_hist {
            shared -= m * digamma_diff(a, n);
        }
        self.class_hist
            .iter()
            .enumerate()
            .map(|(j, hist)| {
                let class_term: f64 = hist
                    .iter()
                    .map(|&(c, m)| m * digamma_diff(alpha[j], c))
                    .sum();
                -(shared + class_term)
            })
            .collect()
    }
}

fn check_alpha(alpha: &[f64], k: usize) -> Result<()> {
    if alpha.len() != k {
        return Err(Error::invalid(format!(
            "alpha has {} components for {k}-class annotations",
            alpha.len()
        )));
    }
    for (j, &a) in alpha.iter().enumerate() {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::InvalidValue {
                what: "alpha",
                msg: format!("component {j} is {a}; must be finite and > 0"),
            });
        }
    }
    Ok(())
}

/// Negative log-likelihood of the whole annotation matrix under
/// `Dirichlet-multinomial(alpha)`, including the multinomial coefficient.
pub fn dm_nll(alpha: &[f64], annotations: &AnnotationMatrix) -> Result<f64> {
    check_alpha(alpha, annotations.k())?;
    Ok(DmStats::new(annotations).nll(alpha))
}

/// Gradient of [`dm_nll`] with respect to each concentration.
pub fn dm_nll_grad(alpha: &[f64], annotations: &AnnotationMatrix) -> Result<Vec<f64>> {
    check_alpha(alpha, annotations.k())?;
    Ok(DmStats::new(annotations).grad(alpha))
}

/// Method-of-moments starting point: match the mean and per-class variance
/// of the normalized count rows. Falls back to `alpha = mean * k` when the
/// data carry no usable variance signal.
fn moment_init(ann: &AnnotationMatrix) -> Vec<f64> {
    let (n, k) = (ann.n(), ann.k());
    // Accumulate in id-sorted order so the initializer — and therefore the
    // whole fit — is bit-identical under permutation of the input rows.
    let order = crate::util::id_sorted_order(ann.ids());
    let mut mean = vec![0.0; k];
    let mut buf = vec![0.0; k];
    for &i in &order {
        ann.normalized_row_into(i, &mut buf);
        for (m, &p) in mean.iter_mut().zip(&buf) {
            *m += p;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; k];
    for &i in &order {
        ann.normalized_row_into(i, &mut buf);
        for ((v, &p), &m) in var.iter_mut().zip(&buf).zip(&mean) {
            *v += (p - m) * (p - m);
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    for v in var.iter_mut() {
        *v /= denom;
    }
    // Each class with usable variance gives an estimate of the total
    // concentration; average them.
    let mut s_sum = 0.0;
    let mut s_count = 0usize;
    for j in 0..k {
        let mv = mean[j] * (1.0 - mean[j]);
        if var[j] > 1e-12 && mv > 1e-12 {
            let s = mv / var[j] - 1.0;
            if s.is_finite() && s > 0.0 {
                s_sum += s;
                s_count += 1;
            }
        }
    }
    let s = if s_count > 0 {
        (s_sum / s_count as f64).clamp(1e-2, 1e6)
    } else {
        k as f64
    };
    mean.iter().map(|&m| (s * m).max(1e-3)).collect()
}

/// Fits the prior by maximum likelihood with default options.
pub fn fit_prior(annotations: &AnnotationMatrix) -> Result<FitReport> {
    fit_prior_with(annotations, FitOptions::default())
}

/// Fits the prior by maximum likelihood.
///
/// Optimization runs over `eta = log alpha`, so iterates stay positive and
/// the line search may roam freely; the reported `gradient_norm` is in
/// those coordinates. The objective never increases across iterations. A
/// report with `converged: false` (for example on unanimous data, where
/// the likelihood keeps improving toward a boundary) is still returned
/// with the best point found, not an error.
pub fn fit_prior_with(annotations: &AnnotationMatrix, opts: FitOptions) -> Result<FitReport> {
    if annotations.n() < 2 {
        return Err(Error::invalid(format!(
            "prior fitting needs at least 2 rows, got {}",
            annotations.n()
        )));
    }
    if !opts.tol.is_finite() || opts.tol <= 0.0 {
        return Err(Error::InvalidValue {
            what: "tol",
            msg: format!("{} must be > 0", opts.tol),
        });
    }
    let k = annotations.k();
    let stats = DmStats::new(annotations);
    for (j, hist) in stats.class_hist.iter().enumerate() {
        if hist.is_empty() {
            log::warn!("class {j} has no annotations anywhere; its concentration will be driven toward 0");
        }
    }
    let alpha0 = match opts.init {
        Some(init) => {
            check_alpha(&init, k)?;
            init
        }
        None => moment_init(annotations),
    };
    let eta0: Vec<f64> = alpha0.iter().map(|&a| a.ln()).collect();
    let objective = |eta: &[f64]| {
        let alpha: Vec<f64> = eta.iter().map(|&e| e.exp()).collect();
        if alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return (f64::INFINITY, vec![0.0; eta.len()]);
        }
        let value = stats.nll(&alpha);
        let grad_alpha = stats.grad(&alpha);
        let grad_eta: Vec<f64> = grad_alpha
            .iter()
            .zip(&alpha)
            .map(|(&g, &a)| g * a)
            .collect();
        (value, grad_eta)
    };
    let r = optim::bfgs(objective, &eta0, opts.tol, opts.max_iter, 10.0);
    let alpha: Vec<f64> = r.x.iter().map(|&e| e.exp()).collect();
    Ok(FitReport {
        prior: DirichletPrior::new(alpha)?,
        final_nll: r.value,
        iterations: r.iterations,
        converged: r.converged,
        gradient_norm: r.grad_norm,
    })
}

/// Conjugate posterior parameters for one example: `alpha + counts`.
pub fn posterior_params(prior: &DirichletPrior, counts: &[u32]) -> Result<DirichletPrior> {
    if counts.len() != prior.k() {
        return Err(Error::invalid(format!(
            "counts row has {} classes, prior has {}",
            counts.len(),
            prior.k()
        )));
    }
    DirichletPrior::new(
        prior
            .alpha()
            .iter()
            .zip(counts)
            .map(|(&a, &c)| a + c as f64)
            .collect(),
    )
}

/// One draw from `Dirichlet(params)`: `k` independent gamma variates
/// normalized onto the simplex. The result sums to 1 within 1e-12.
pub fn sample_dirichlet<R: Rng + ?Sized>(params: &DirichletPrior, rng: &mut R) -> Vec<f64> {
    let mut draw: Vec<f64> = params
        .alpha()
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("validated alpha is a legal gamma shape")
                .sample(rng)
        })
        .collect();
    loop {
        let s: f64 = draw.iter().sum();
        if s > 0.0 {
            for x in draw.iter_mut() {
                *x /= s;
            }
            return draw;
        }
        // All gamma variates underflowed to zero (possible only for
        // minuscule concentrations); redraw from the stream.
        for (x, &a) in draw.iter_mut().zip(params.alpha()) {
            *x = Gamma::new(a, 1.0).unwrap().sample(rng);
        }
    }
}

/// Density at `x` of the marginal distribution of one class probability
/// under `Dirichlet(alpha)`, which is `Beta(alpha_j, A - alpha_j)` with
/// `A` the concentration total. Useful for plotting a model's implied
/// uncertainty about a single class. Requires `0 < x < 1`.
pub fn beta_marginal_pdf(params: &DirichletPrior, class: usize, x: f64) -> Result<f64> {
    if class >= params.k() {
        return Err(Error::invalid(format!(
            "class {class} out of range for {} classes",
            params.k()
        )));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::invalid(format!(
            "marginal density needs 0 < x < 1, got {x}"
        )));
    }
    let a = params.alpha()[class];
    let b = params.total() - a;
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    Ok(((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta).exp())
}
