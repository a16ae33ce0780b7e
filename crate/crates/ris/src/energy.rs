use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, RisError};

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type LoadFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;
type TimeStateScalarFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
type TimeStateVectorFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

pub(crate) fn check_time(t: f64, t_final: f64) -> Result<()> {
    let slack = 1e-9 * (1.0 + t_final);
    if !t.is_finite() || t < -slack || t > t_final + slack {
        return Err(RisError::TimeDomain { t, t_final });
    }
    Ok(())
}

/// Smooth nonlinearity `F` entering an energy through its value and
/// gradient. A Hessian callback may be attached for clients that want
/// second-order information; the solvers themselves only backtrack.
#[derive(Clone)]
pub struct Nonlinearity {
    value: ScalarFn,
    gradient: VectorFn,
    hessian: Option<MatrixFn>,
}

impl Nonlinearity {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |z| DVector::zeros(z.len()))
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        (self.value)(z)
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(z)
    }

    pub fn hessian(&self, z: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(z))
    }
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Nonlinearity")
    }
}

/// Time-dependent load `ell(t)` with its derivative.
#[derive(Clone)]
pub struct Load {
    value: LoadFn,
    dot: LoadFn,
}

impl Load {
    pub fn new(
        value: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        dot: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Load {
            value: Arc::new(value),
            dot: Arc::new(dot),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(move |_| DVector::zeros(dim), move |_| DVector::zeros(dim))
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        (self.value)(t)
    }

    pub fn dot(&self, t: f64) -> DVector<f64> {
        (self.dot)(t)
    }
}

impl std::fmt::Debug for Load {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Load")
    }
}

/// Anything that evaluates a time-dependent energy `I(t, z)` on `[0, T]`.
pub trait Energy: Send + Sync {
    fn dim(&self) -> usize;

    fn t_final(&self) -> f64;

    /// `I(t, z)`.
    fn value(&self, t: f64, z: &DVector<f64>) -> Result<f64>;

    /// `D_z I(t, z)`.
    fn gradient(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>>;

    /// `d/dt I(t, z)`.
    fn time_derivative(&self, t: f64, z: &DVector<f64>) -> Result<f64>;

    /// `(I, d/dt I, D_z I)` at `(t, z)` in one call.
    fn triplet(&self, t: f64, z: &DVector<f64>) -> Result<(f64, f64, DVector<f64>)> {
        Ok((
            self.value(t, z)?,
            self.time_derivative(t, z)?,
            self.gradient(t, z)?,
        ))
    }
}

#[derive(Clone)]
struct Semilinear {
    a: DMatrix<f64>,
    f: Nonlinearity,
    ell: Load,
    t_final: f64,
}

#[derive(Clone)]
struct Custom {
    dim: usize,
    t_final: f64,
    value: TimeStateScalarFn,
    gradient: TimeStateVectorFn,
    time_derivative: TimeStateScalarFn,
}

/// A concrete energy: either the semilinear form
/// `I(t,z) = 1/2 <A z, z> + F(z) - <ell(t), z>` with SPD `A`, or a custom
/// model given directly by callbacks for the value, the state gradient and
/// the partial time derivative.
#[derive(Clone)]
pub struct EnergyModel {
    repr: Repr,
}

#[derive(Clone)]
enum Repr {
    Semilinear(Semilinear),
    Custom(Custom),
}

impl EnergyModel {
    pub fn semilinear(a: DMatrix<f64>, f: Nonlinearity, ell: Load, t_final: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(RisError::NotSpd("A must be square and nonempty".into()));
        }
        require_spd(&a, "A")?;
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(RisError::parameter("t_final", "must be finite and > 0"));
        }
        Ok(EnergyModel {
            repr: Repr::Semilinear(Semilinear { a, f, ell, t_final }),
        })
    }

    pub fn custom(
        dim: usize,
        t_final: f64,
        value: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        time_derivative: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(RisError::parameter("dim", "must be positive"));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(RisError::parameter("t_final", "must be finite and > 0"));
        }
        Ok(EnergyModel {
            repr: Repr::Custom(Custom {
                dim,
                t_final,
                value: Arc::new(value),
                gradient: Arc::new(gradient),
                time_derivative: Arc::new(time_derivative),
            }),
        })
    }

    fn check(&self, t: f64, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(RisError::Dimension {
                expected: self.dim(),
                got: z.len(),
            });
        }
        check_time(t, self.t_final())
    }
}

impl std::fmt::Debug for EnergyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.repr {
            Repr::Semilinear(s) => write!(f, "EnergyModel::Semilinear(dim={})", s.a.nrows()),
            Repr::Custom(c) => write!(f, "EnergyModel::Custom(dim={})", c.dim),
        }
    }
}

impl Energy for EnergyModel {
    fn dim(&self) -> usize {
        match &self.repr {
            Repr::Semilinear(s) => s.a.nrows(),
            Repr::Custom(c) => c.dim,
        }
    }

    fn t_final(&self) -> f64 {
        match &self.repr {
            Repr::Semilinear(s) => s.t_final,
            Repr::Custom(c) => c.t_final,
        }
    }

    fn value(&self, t: f64, z: &DVector<f64>) -> Result<f64> {
        self.check(t, z)?;
        Ok(match &self.repr {
            Repr::Semilinear(s) => {
                0.5 * (&s.a * z).dot(z) + s.f.value(z) - s.ell.value(t).dot(z)
            }
            Repr::Custom(c) => (c.value)(t, z),
        })
    }

    fn gradient(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(t, z)?;
        Ok(match &self.repr {
            Repr::Semilinear(s) => &s.a * z + s.f.gradient(z) - s.ell.value(t),
            Repr::Custom(c) => (c.gradient)(t, z),
        })
    }

    fn time_derivative(&self, t: f64, z: &DVector<f64>) -> Result<f64> {
        self.check(t, z)?;
        Ok(match &self.repr {
            Repr::Semilinear(s) => -s.ell.dot(t).dot(z),
            Repr::Custom(c) => (c.time_derivative)(t, z),
        })
    }
}

fn require_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let n = m.nrows();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(RisError::NotSpd(format!("{name} is not symmetric")));
            }
        }
    }
    let eig_min = m.clone().symmetric_eigen().eigenvalues.min();
    if eig_min <= 0.0 {
        return Err(RisError::NotSpd(format!(
            "{name} has nonpositive eigenvalue {eig_min:.6e}"
        )));
    }
    Ok(())
}

/// Quadratic-plus-nonlinearity energy on a pair of variables,
/// `E(t, u, z) = 1/2 <C u, u> + <B z, u> + 1/2 <A z, z> + F(z)
///  - <ell_u(t), u> - <ell_z(t), z>`,
/// with the block matrix `[[C, B], [B^T, A]]` required to be SPD.
pub struct CoupledEnergyModel {
    c: DMatrix<f64>,
    b: DMatrix<f64>,
    a: DMatrix<f64>,
    f: Nonlinearity,
    ell_u: Load,
    ell_z: Load,
    t_final: f64,
    c_chol: Cholesky<f64, Dyn>,
}

impl CoupledEnergyModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c: DMatrix<f64>,
        b: DMatrix<f64>,
        a: DMatrix<f64>,
        f: Nonlinearity,
        ell_u: Load,
        ell_z: Load,
        t_final: f64,
    ) -> Result<Self> {
        let nu = c.nrows();
        let nz = a.nrows();
        if nu == 0 || c.ncols() != nu || nz == 0 || a.ncols() != nz {
            return Err(RisError::NotSpd("C and A must be square and nonempty".into()));
        }
        if b.nrows() != nu || b.ncols() != nz {
            return Err(RisError::Dimension {
                expected: nu * nz,
                got: b.nrows() * b.ncols(),
            });
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(RisError::parameter("t_final", "must be finite and > 0"));
        }
        let mut block = DMatrix::zeros(nu + nz, nu + nz);
        block.view_mut((0, 0), (nu, nu)).copy_from(&c);
        block.view_mut((0, nu), (nu, nz)).copy_from(&b);
        block.view_mut((nu, 0), (nz, nu)).copy_from(&b.transpose());
        block.view_mut((nu, nu), (nz, nz)).copy_from(&a);
        require_spd(&block, "the block matrix [[C,B],[B^T,A]]")?;
        let c_chol = Cholesky::new(c.clone())
            .ok_or_else(|| RisError::NotSpd("C is not positive definite".into()))?;
        Ok(CoupledEnergyModel {
            c,
            b,
            a,
            f,
            ell_u,
            ell_z,
            t_final,
            c_chol,
        })
    }

    pub fn dim_u(&self) -> usize {
        self.c.nrows()
    }

    pub fn dim_z(&self) -> usize {
        self.a.nrows()
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    fn check(&self, t: f64, u: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        if u.len() != self.dim_u() {
            return Err(RisError::Dimension {
                expected: self.dim_u(),
                got: u.len(),
            });
        }
        if z.len() != self.dim_z() {
            return Err(RisError::Dimension {
                expected: self.dim_z(),
                got: z.len(),
            });
        }
        check_time(t, self.t_final)
    }

    /// `E(t, u, z)`.
    pub fn value(&self, t: f64, u: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check(t, u, z)?;
        Ok(0.5 * (&self.c * u).dot(u)
            + (&self.b * z).dot(u)
            + 0.5 * (&self.a * z).dot(z)
            + self.f.value(z)
            - self.ell_u.value(t).dot(u)
            - self.ell_z.value(t).dot(z))
    }

    /// `D_u E(t, u, z) = C u + B z - ell_u(t)`.
    pub fn gradient_u(&self, t: f64, u: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(t, u, z)?;
        Ok(&self.c * u + &self.b * z - self.ell_u.value(t))
    }

    /// `D_z E(t, u, z) = B^T u + A z + DF(z) - ell_z(t)`.
    pub fn gradient_z(&self, t: f64, u: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(t, u, z)?;
        Ok(self.b.transpose() * u + &self.a * z + self.f.gradient(z) - self.ell_z.value(t))
    }

    /// `d/dt E(t, u, z) = -<ell_u'(t), u> - <ell_z'(t), z>`.
    pub fn time_derivative(&self, t: f64, u: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check(t, u, z)?;
        Ok(-self.ell_u.dot(t).dot(u) - self.ell_z.dot(t).dot(z))
    }

    /// The unique `u` with `D_u E(t, u, z) = 0`.
    pub fn solve_u(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.dim_z() {
            return Err(RisError::Dimension {
                expected: self.dim_z(),
                got: z.len(),
            });
        }
        check_time(t, self.t_final)?;
        let rhs = self.ell_u.value(t) - &self.b * z;
        Ok(self.c_chol.solve(&rhs))
    }

    /// View of the coupled energy as an energy in `z` alone, with `u` held
    /// fixed. Values are the full `E(t, u, z)` so that energy balances over
    /// the pair remain consistent.
    pub fn frozen_u<'a>(&'a self, u: &'a DVector<f64>) -> FrozenU<'a> {
        FrozenU { model: self, u }
    }
}

impl std::fmt::Debug for CoupledEnergyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CoupledEnergyModel(dim_u={}, dim_z={})",
            self.dim_u(),
            self.dim_z()
        )
    }
}

/// The coupled energy restricted to `z` for a fixed elastic state.
pub struct FrozenU<'a> {
    model: &'a CoupledEnergyModel,
    u: &'a DVector<f64>,
}

impl Energy for FrozenU<'_> {
    fn dim(&self) -> usize {
        self.model.dim_z()
    }

    fn t_final(&self) -> f64 {
        self.model.t_final
    }

    fn value(&self, t: f64, z: &DVector<f64>) -> Result<f64> {
        self.model.value(t, self.u, z)
    }

    fn gradient(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.gradient_z(t, self.u, z)
    }

    fn time_derivative(&self, t: f64, z: &DVector<f64>) -> Result<f64> {
        self.model.time_derivative(t, self.u, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semilinear_rejects_indefinite_a() {
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(EnergyModel::semilinear(a, Nonlinearity::zero(), Load::zero(1), 1.0).is_err());
    }

    #[test]
    fn rejects_time_outside_domain() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let e = EnergyModel::semilinear(a, Nonlinearity::zero(), Load::zero(1), 1.0).unwrap();
        let z = DVector::from_element(1, 0.3);
        assert!(e.value(0.5, &z).is_ok());
        assert!(matches!(
            e.value(1.5, &z),
            Err(RisError::TimeDomain { .. })
        ));
        assert!(matches!(
            e.value(-0.1, &z),
            Err(RisError::TimeDomain { .. })
        ));
    }

    #[test]
    fn coupled_block_spd_is_enforced() {
        // C = A = 1, B = 2 makes the block indefinite.
        let r = CoupledEnergyModel::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            Nonlinearity::zero(),
            Load::zero(1),
            Load::zero(1),
            1.0,
        );
        assert!(r.is_err());
    }
}
