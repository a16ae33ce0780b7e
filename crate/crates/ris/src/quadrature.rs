//! Fixed-order Gauss-Legendre quadrature used by the diagnostics.
//!
//! All integrands appearing in the energy identities are smooth on the
//! interior of a curve segment, so a five point rule (exact through degree
//! nine) per segment is plenty.

/// Nodes of the five point Gauss-Legendre rule on [-1, 1].
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_663_9,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_663_9,
];

/// Weights matching [`GL5_NODES`].
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Integrates `f` over `[a, b]` with the five point Gauss-Legendre rule.
pub fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        // int_0^1 x^9 dx = 1/10
        let v = integrate(0.0, 1.0, |x| x.powi(9));
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn respects_interval_scaling() {
        let v = integrate(-2.0, 3.0, |x| 3.0 * x * x);
        assert!((v - (27.0 + 8.0)).abs() < 1e-12);
    }
}
