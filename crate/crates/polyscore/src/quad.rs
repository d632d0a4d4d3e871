//! Gauss-Hermite quadrature rules.
//!
//! Nodes and weights are computed by Newton iteration on the orthonormal
//! Hermite recurrence (weight function `exp(-x^2)`), then rescaled so the
//! rule integrates against a standard normal density — the form the
//! latent-trait marginal likelihood needs.

/// pi^(-1/4), the seed of the orthonormal Hermite recurrence.
const PIM4: f64 = 0.751_125_544_464_942_5;

/// Nodes and weights for `∫ exp(-x²) f(x) dx ≈ Σ w_i f(x_i)`.
///
/// Nodes come out ascending and exactly symmetric about zero. `n` must be
/// between 1 and 256; convergence of the Newton iteration is guaranteed in
/// that range.
pub(crate) fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!((1..=256).contains(&n), "node count {n} outside 1..=256");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0f64;
    // Roots are found from the outermost inward over the upper half; the
    // lower half is the mirror image.
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => {
                let t = (2 * n + 1) as f64;
                t.sqrt() - 1.855_75 * t.powf(-1.0 / 6.0)
            }
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            // Orthonormal Hermite values at z: p1 = H̃_n, p2 = H̃_{n-1}.
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - ((j as f64) / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        assert!(converged, "Hermite root search failed for n = {n}");
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = 2.0 / (pp * pp);
        weights[i] = weights[n - 1 - i];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Nodes and weights for `E[f(Z)] ≈ Σ λ_i f(z_i)` with `Z ~ N(0,1)`:
/// the Gauss-Hermite rule under the substitution `z = √2 x`,
/// `λ = w / √π`. Weights sum to 1.
pub(crate) fn standard_normal_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_hermite(n);
    let scale = std::f64::consts::PI.sqrt();
    (
        nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
        weights.iter().map(|w| w / scale).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_PI: f64 = 1.772_453_850_905_516;

    #[test]
    fn two_point_rule_is_exact() {
        // H_2 has roots ±1/√2 with equal weights √π/2.
        let (nodes, weights) = gauss_hermite(2);
        let r = 0.5f64.sqrt();
        assert!((nodes[0] + r).abs() < 1e-14);
        assert!((nodes[1] - r).abs() < 1e-14);
        assert!((weights[0] - SQRT_PI / 2.0).abs() < 1e-14);
        assert!((weights[1] - SQRT_PI / 2.0).abs() < 1e-14);

        let (node, weight) = gauss_hermite(1);
        assert_eq!(node[0], 0.0);
        assert!((weight[0] - SQRT_PI).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_sqrt_pi_and_nodes_are_symmetric() {
        for n in [1, 2, 3, 5, 10, 20, 40, 64, 100] {
            let (nodes, weights) = gauss_hermite(n);
            let total: f64 = weights.iter().sum();
            assert!(
                (total - SQRT_PI).abs() < 1e-12 * SQRT_PI,
                "n={n}: weight sum {total}"
            );
            for i in 0..n {
                // Exact value equality (0.0 == -0.0 at the center node).
                assert!(
                    nodes[i] == -nodes[n - 1 - i],
                    "n={n}: node {i} not the exact mirror of its partner"
                );
                assert!(weights[i] > 0.0);
                if i > 0 {
                    assert!(nodes[i] > nodes[i - 1], "nodes must ascend");
                }
            }
        }
    }

    #[test]
    fn normal_rule_reproduces_gaussian_moments() {
        let (nodes, weights) = standard_normal_rule(20);
        let moment = |p: i32| -> f64 {
            nodes
                .iter()
                .zip(&weights)
                .map(|(z, w)| w * z.powi(p))
                .sum()
        };
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!(moment(3).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn normal_rule_converges_on_smooth_integrands() {
        // E[sigmoid(1.3 Z - 0.4)] has no closed form; a 20-node rule and a
        // 60-node rule must already agree to near machine precision.
        let eval = |n: usize| -> f64 {
            let (nodes, weights) = standard_normal_rule(n);
            nodes
                .iter()
                .zip(&weights)
                .map(|(z, w)| w / (1.0 + (-(1.3 * z - 0.4)).exp()))
                .sum()
        };
        let coarse = eval(20);
        let fine = eval(60);
        assert!((coarse - fine).abs() < 5e-8, "{coarse} vs {fine}");
        // And a true closed form: E[exp(t Z)] = exp(t²/2).
        let (nodes, weights) = standard_normal_rule(20);
        let mgf: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(z, w)| w * (0.7 * z).exp())
            .sum();
        assert!((mgf - (0.7f64 * 0.7 / 2.0).exp()).abs() < 1e-10);
    }
}
