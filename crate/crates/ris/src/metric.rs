use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RisError};

/// Which space a metric belongs to. `V` is the viscosity space in which
/// ball constraints and viscous penalties are measured, `Z` is the
/// alternative state-space norm used for state-based arc length, and `U`
/// is the norm on the elastic component of coupled systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    V,
    Z,
    U,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::V => write!(f, "V"),
            MetricKind::Z => write!(f, "Z"),
            MetricKind::U => write!(f, "U"),
        }
    }
}

/// A symmetric positive definite bilinear form `x^T M y` together with its
/// Cholesky factorisation. Construction fails unless the matrix is
/// symmetric (to relative 1e-12) and positive definite.
#[derive(Clone, Debug)]
pub struct Metric {
    kind: MetricKind,
    dim: usize,
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Set when the matrix is exactly diagonal; enables closed-form
    /// projections in the inner solvers.
    diag: Option<DVector<f64>>,
    eig_min: f64,
    eig_max: f64,
}

impl Metric {
    pub fn new(kind: MetricKind, matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(RisError::NotSpd(format!(
                "expected a square nonempty matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(RisError::NotSpd(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        matrix[(i, j)],
                        matrix[(j, i)]
                    )));
                }
            }
        }
        // Symmetrise to kill representation noise before factorising.
        let matrix = 0.5 * (&matrix + matrix.transpose());
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(RisError::Numerical("metric matrix".into()));
        }
        let eig = matrix.clone().symmetric_eigen();
        let eig_min = eig.eigenvalues.min();
        let eig_max = eig.eigenvalues.max();
        if eig_min <= 0.0 {
            return Err(RisError::NotSpd(format!(
                "smallest eigenvalue {eig_min:.6e} is not positive"
            )));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| RisError::NotSpd("Cholesky factorisation failed".into()))?;
        let diag = {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off = off.max(matrix[(i, j)].abs());
                    }
                }
            }
            if off == 0.0 {
                Some(DVector::from_fn(n, |i, _| matrix[(i, i)]))
            } else {
                None
            }
        };
        Ok(Metric {
            kind,
            dim: n,
            matrix,
            chol,
            diag,
            eig_min,
            eig_max,
        })
    }

    pub fn identity(kind: MetricKind, dim: usize) -> Self {
        Self::new(kind, DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn diagonal(kind: MetricKind, weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        Self::new(kind, DMatrix::from_fn(n, n, |i, j| if i == j { weights[i] } else { 0.0 }))
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        self.diag.is_some()
    }

    pub fn diag_weights(&self) -> Option<&DVector<f64>> {
        self.diag.as_ref()
    }

    /// `(lambda_min, lambda_max)` of the metric matrix.
    pub fn eig_bounds(&self) -> (f64, f64) {
        (self.eig_min, self.eig_max)
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(RisError::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `M v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.diag {
            Some(d) => v.component_mul(d),
            None => &self.matrix * v,
        }
    }

    /// `M^{-1} xi`.
    pub fn solve(&self, xi: &DVector<f64>) -> DVector<f64> {
        match &self.diag {
            Some(d) => xi.component_div(d),
            None => self.chol.solve(xi),
        }
    }

    /// `a^T M b`.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.apply(a).dot(b)
    }

    /// Primal norm `sqrt(v^T M v)`.
    pub fn norm(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self.inner(v, v).max(0.0).sqrt())
    }

    /// Dual norm `sqrt(xi^T M^{-1} xi)`.
    pub fn dual_norm(&self, xi: &DVector<f64>) -> Result<f64> {
        self.check_dim(xi)?;
        Ok(self.solve(xi).dot(xi).max(0.0).sqrt())
    }
}
