//! Dense BFGS minimizer with Armijo backtracking.
//!
//! All fits in this crate are small (a handful to a few dozen parameters),
//! so a plain quasi-Newton loop with an explicit inverse-Hessian matrix is
//! the right tool. The line search only ever accepts a step that lowers
//! the objective, which gives every caller a monotone iterate sequence.

/// Outcome of a [`bfgs`] run.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    /// Best point found.
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub value: f64,
    /// Euclidean norm of the gradient at `x`.
    pub grad_norm: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Whether the gradient norm reached `tol` within `max_iter`.
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `f` (which returns the value and gradient) from `x0`.
///
/// Stops when the gradient norm is at most `tol`, when `max_iter`
/// iterations are spent, or when the line search cannot find any
/// improving step (a stationary or boundary-divergent objective).
///
/// `max_step` bounds the length of any trial step; the quasi-Newton unit
/// step is used whenever it is shorter, so convergence near an optimum is
/// unaffected. Pass `f64::INFINITY` for uncapped steps.
pub fn bfgs<F>(mut f: F, x0: &[f64], tol: f64, max_iter: usize, max_step: f64) -> MinimizeResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    // Row-major inverse Hessian approximation, started at the identity.
    let mut h: Vec<f64> = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>| {
        h.fill(0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    reset(&mut h);

    let mut iterations = 0;
    let mut converged = norm(&g) <= tol;
    const ARMIJO_C1: f64 = 1e-4;

    while !converged && iterations < max_iter {
        iterations += 1;

        // d = -H g, falling back to steepest descent if H has gone stale.
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if !slope.is_finite() || slope >= 0.0 {
            reset(&mut h);
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
            slope = -g.iter().map(|gi| gi * gi).sum::<f64>();
        }

        // Backtracking line search.
        let d_norm = norm(&d);
        let mut t = if d_norm > max_step { max_step / d_norm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (ft, gt) = f(&xt);
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * t * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No improving step exists along this direction at any scale
            // we are willing to try; report the best point found.
            break;
        };

        // BFGS inverse-Hessian update, skipped when curvature is unusable.
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) && sy.is_finite() {
            let rho = 1.0 / sy;
            // H <- (I - rho s yT) H (I - rho y sT) + rho s sT
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * rho * (sy + yhy) * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }

        x = xn;
        fx = fn_;
        g = gn;
        converged = norm(&g) <= tol;
    }

    MinimizeResult {
        grad_norm: norm(&g),
        x,
        value: fx,
        iterations,
        converged,
    }
}

/// Golden-section minimization of a unimodal scalar function on `[lo, hi]`,
/// run until the bracket is narrower than `tol`. Returns `(x, f(x))`.
pub(crate) fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
