use nalgebra::DVector;

use crate::error::{Result, RisError};
use crate::metric::Metric;

/// Weighted L1 dissipation potential `R(v) = sum_i kappa_i |v_i|`.
///
/// `R` is convex and positively one-homogeneous; its subdifferential at the
/// origin is the box `prod_i [-kappa_i, kappa_i]`, the set of stable forces.
#[derive(Clone, Debug)]
pub struct Dissipation {
    weights: DVector<f64>,
}

impl Dissipation {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(RisError::parameter("weights", "must be nonempty"));
        }
        if weights.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(RisError::parameter(
                "weights",
                "every component must be finite and strictly positive",
            ));
        }
        Ok(Dissipation { weights })
    }

    pub fn scalar(kappa: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, kappa))
    }

    pub fn uniform(dim: usize, kappa: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, kappa))
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(RisError::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `R(v)`.
    pub fn eval(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self
            .weights
            .iter()
            .zip(v.iter())
            .map(|(k, x)| k * x.abs())
            .sum())
    }

    /// Whether `xi` lies in the stable set `dR(0)` (componentwise
    /// `|xi_i| <= kappa_i`, with `tol` slack per component).
    pub fn stable_contains(&self, xi: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_dim(xi)?;
        Ok(self
            .weights
            .iter()
            .zip(xi.iter())
            .all(|(k, x)| x.abs() <= k + tol))
    }

    /// The box `dR(v)`: components where `v_i != 0` are pinned to the face
    /// `kappa_i sign(v_i)`, the rest span `[-kappa_i, kappa_i]`.
    pub fn subdifferential_box(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_dim(v)?;
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let k = self.weights[i];
            if v[i] > 0.0 {
                lo[i] = k;
                hi[i] = k;
            } else if v[i] < 0.0 {
                lo[i] = -k;
                hi[i] = -k;
            } else {
                lo[i] = -k;
                hi[i] = k;
            }
        }
        Ok((lo, hi))
    }

    /// Distance of a force `xi` from the stable set `dR(0)`, measured in the
    /// dual norm induced by `m` (that is, `min_{sigma in dR(0)}
    /// ||xi - sigma||_{M^{-1}}`).
    pub fn dist_to_stable(&self, m: &Metric, xi: &DVector<f64>) -> Result<f64> {
        self.check_dim(xi)?;
        let lo = -&self.weights;
        let hi = self.weights.clone();
        Ok(dist_to_box(m, xi, &lo, &hi)?.0)
    }

    /// Conjugate of the viscously regularised potential
    /// `R_mu(v) = R(v) + mu/2 ||v||_M^2`, namely
    /// `R_mu^*(xi) = 1/(2 mu) dist_{M^{-1}}(xi, dR(0))^2`.
    ///
    /// For `mu = 0` the conjugate is the indicator of the stable set: the
    /// result is `0.0` inside and `f64::INFINITY` outside.
    pub fn viscous_conjugate(&self, m: &Metric, mu: f64, xi: &DVector<f64>) -> Result<f64> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(RisError::parameter("mu", "must be finite and >= 0"));
        }
        let d = self.dist_to_stable(m, xi)?;
        if mu == 0.0 {
            // Exact zero distance means the projection is xi itself.
            if d == 0.0 {
                return Ok(0.0);
            }
            return Ok(f64::INFINITY);
        }
        Ok(d * d / (2.0 * mu))
    }
}

/// Distance from `xi` to the box `[lo, hi]` in the dual norm of `m`,
/// together with the projection point.
///
/// For a diagonal metric the projection is componentwise clipping and the
/// distance has the closed form `sqrt(sum_i (max(|xi_i| - kappa_i, 0))^2 /
/// m_ii)` (for centred boxes). General metrics fall back to a projected
/// gradient iteration on the strongly convex program.
pub(crate) fn dist_to_box(
    m: &Metric,
    xi: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    if xi.len() != m.dim() || lo.len() != m.dim() || hi.len() != m.dim() {
        return Err(RisError::Dimension {
            expected: m.dim(),
            got: xi.len(),
        });
    }
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(RisError::Numerical("dist_to_box input".into()));
    }
    let clip = |v: &DVector<f64>| DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]));

    if m.is_diagonal() {
        let proj = clip(xi);
        let r = xi - &proj;
        return Ok((m.dual_norm(&r)?, proj));
    }

    // minimise f(s) = (xi - s)^T M^{-1} (xi - s) over the box; grad = -2 M^{-1}(xi - s).
    let (eig_min, _) = m.eig_bounds();
    // Lipschitz constant of grad f is 2/eig_min(M); fixed step 1/L.
    let step = 0.5 * eig_min;
    let mut s = clip(xi);
    let mut it = 0usize;
    loop {
        let grad = -2.0 * m.solve(&(xi - &s));
        let next = clip(&(&s - step * &grad));
        let delta = (&next - &s).amax();
        s = next;
        it += 1;
        if delta <= 1e-10 * (1.0 + s.amax()) {
            break;
        }
        if it >= 10_000 {
            return Err(RisError::Numerical(
                "box projection did not converge within 10000 iterations".into(),
            ));
        }
    }
    let r = xi - &s;
    Ok((m.dual_norm(&r)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricKind;
    use nalgebra::DMatrix;

    #[test]
    fn rejects_nonpositive_weights() {
        assert!(Dissipation::new(DVector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(Dissipation::new(DVector::from_vec(vec![-1.0])).is_err());
    }

    #[test]
    fn general_metric_projection_matches_diagonal_special_case() {
        // A metric that is diagonal but fed through the dense path.
        let mut mat = DMatrix::identity(2, 2);
        mat[(0, 1)] = 1e-30;
        mat[(1, 0)] = 1e-30;
        let dense = Metric::new(MetricKind::V, mat).unwrap();
        assert!(!dense.is_diagonal());
        let d = Dissipation::new(DVector::from_vec(vec![2.0, 1.0])).unwrap();
        let xi = DVector::from_vec(vec![3.0, -5.0]);
        let dist = d.dist_to_stable(&dense, &xi).unwrap();
        assert!((dist - (1.0f64 + 16.0).sqrt()).abs() < 1e-8);
    }
}
