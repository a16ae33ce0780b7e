//! Built-in example problems with analytic reference data, plus the
//! brute-force grid oracle used to validate the inner solvers.

use nalgebra::{DMatrix, DVector};

use crate::dissipation::Dissipation;
use crate::energy::{CoupledEnergyModel, EnergyModel, Load, Nonlinearity};
use crate::error::{Result, RisError};
use crate::parametrize::{CurveMetricKind, ParametrizedCurve, SegKind};

/// Load horizon of the quartic double-well problem `toy51`.
pub const TOY51_T_FINAL: f64 = 1.0;

/// 1D quartic double-well with constant negative drive: the energy has a
/// strict local minimum at `z = 2` (the initial state) and its global
/// minimum beyond `z = 4`, so schemes split between staying, climbing and
/// jumping. `D_z I(t,z) = -kappa + (z-2)^2 (z-4)`, no time dependence.
pub fn make_toy51(kappa: f64) -> Result<(EnergyModel, Dissipation, DVector<f64>)> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(RisError::parameter("kappa", "must be finite and > 0"));
    }
    let value = move |_t: f64, z: &DVector<f64>| {
        let z = z[0];
        -kappa * z + 0.25 * z.powi(4) - (8.0 / 3.0) * z.powi(3) + 10.0 * z * z - 16.0 * z
    };
    let gradient = move |_t: f64, z: &DVector<f64>| {
        let z = z[0];
        DVector::from_element(1, -kappa + (z - 2.0) * (z - 2.0) * (z - 4.0))
    };
    let dt = |_t: f64, _z: &DVector<f64>| 0.0;
    let e = EnergyModel::custom(1, TOY51_T_FINAL, value, gradient, dt)?;
    Ok((e, Dissipation::scalar(kappa)?, DVector::from_element(1, 2.0)))
}

/// Upper end of the stationary interval of `toy51`: the unique root
/// greater than 4 of `(z-2)^2 (z-4) = 2 kappa`, by bisection to 1e-12.
pub fn toy51_z_star(kappa: f64) -> Result<f64> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(RisError::parameter("kappa", "must be finite and > 0"));
    }
    let g = |z: f64| (z - 2.0) * (z - 2.0) * (z - 4.0) - 2.0 * kappa;
    let mut lo = 4.0;
    let mut hi = 4.5;
    while g(hi) < 0.0 {
        hi += 0.5;
        if hi > 1e6 {
            return Err(RisError::Numerical("root bracket expansion failed".into()));
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// 1D softening model with a time-quadratic pull towards zero:
/// `I(t,z) = 5 z^2 - t^2 / (2 (0.1 + z^2))`, `R(v) = 10 |v|`, `z0 = 1`,
/// `T = 1.5`. The force boundary folds, so the state creeps and then
/// jumps; schemes differ in when.
pub fn make_toy52() -> (EnergyModel, Dissipation, DVector<f64>, f64) {
    let t_final = 1.5;
    let value = |t: f64, z: &DVector<f64>| {
        let z = z[0];
        5.0 * z * z - t * t / (2.0 * (0.1 + z * z))
    };
    let gradient = |t: f64, z: &DVector<f64>| {
        let z = z[0];
        let c = 0.1 + z * z;
        DVector::from_element(1, (10.0 + t * t / (c * c)) * z)
    };
    let dt = |t: f64, z: &DVector<f64>| {
        let z = z[0];
        -t / (0.1 + z * z)
    };
    let e = EnergyModel::custom(1, t_final, value, gradient, dt).unwrap();
    (
        e,
        Dissipation::scalar(10.0).unwrap(),
        DVector::from_element(1, 1.0),
        t_final,
    )
}

fn tridiag(n: usize, diag: f64, off: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = diag;
        if i + 1 < n {
            a[(i, i + 1)] = off;
            a[(i + 1, i)] = off;
        }
    }
    a
}

/// n-dimensional semilinear chain: stiffness `2I + tridiag(-1)`, quartic
/// on-site potential `F(z) = 1/4 sum z_i^4`, ramp load `ell(t) = t 1`,
/// unit thresholds, `z0 = 0`, `T = 2`. Smooth multi-component test case
/// with no jumps.
pub fn make_chain(n: usize) -> Result<(EnergyModel, Dissipation, DVector<f64>)> {
    if n == 0 {
        return Err(RisError::parameter("n", "must be >= 1"));
    }
    let a = tridiag(n, 2.0, -1.0);
    let f = Nonlinearity::new(
        |z: &DVector<f64>| 0.25 * z.iter().map(|x| x.powi(4)).sum::<f64>(),
        |z: &DVector<f64>| z.map(|x| x.powi(3)),
    )
    .with_hessian(|z: &DVector<f64>| DMatrix::from_diagonal(&z.map(|x| 3.0 * x * x)));
    let ell = Load::new(
        move |t: f64| DVector::from_element(n, t),
        move |_t: f64| DVector::from_element(n, 1.0),
    );
    let e = EnergyModel::semilinear(a, f, ell, 2.0)?;
    Ok((e, Dissipation::uniform(n, 1.0)?, DVector::zeros(n)))
}

/// Coupled quadratic/double-well demo for alternate minimisation:
/// `C = A = 2I + tridiag(-0.5)`, `B = 0.5 I`, on-site double well
/// `F(z) = 1/4 sum (z_i^2 - 1)^2`, ramp load on z only, thresholds 0.5,
/// `z0 = 1`, `u0` solving `C u0 = -B z0`, `T = 2`. Invented plumbing for
/// the staggered scheme; used in property tests, not as ground truth.
/// The halved off-diagonal keeps the smallest eigenvalue of the diagonal
/// blocks above `||B|| = 0.5` for every `n`, which the full-coupling
/// stiffness cannot do past `n = 3`, so the block matrix stays SPD.
pub fn make_coupled_demo(
    n: usize,
) -> Result<(CoupledEnergyModel, Dissipation, DVector<f64>, DVector<f64>)> {
    if n == 0 {
        return Err(RisError::parameter("n", "must be >= 1"));
    }
    let c = tridiag(n, 2.0, -0.5);
    let b = DMatrix::from_diagonal(&DVector::from_element(n, 0.5));
    let a = tridiag(n, 2.0, -0.5);
    let f = Nonlinearity::new(
        |z: &DVector<f64>| 0.25 * z.iter().map(|x| (x * x - 1.0).powi(2)).sum::<f64>(),
        |z: &DVector<f64>| z.map(|x| (x * x - 1.0) * x),
    )
    .with_hessian(|z: &DVector<f64>| DMatrix::from_diagonal(&z.map(|x| 3.0 * x * x - 1.0)));
    let ell_u = Load::zero(n);
    let ell_z = Load::new(
        move |t: f64| DVector::from_element(n, t),
        move |_t: f64| DVector::from_element(n, 1.0),
    );
    let ce = CoupledEnergyModel::new(c, b, a, f, ell_u, ell_z, 2.0)?;
    let z0 = DVector::from_element(n, 1.0);
    let u0 = ce.solve_u(0.0, &z0)?;
    Ok((ce, Dissipation::uniform(n, 0.5)?, z0, u0))
}

/// The analytic solution family of `toy51`: the state rests at 2, jumps
/// affinely from 2 to 4 over an arc interval of length 2 starting at the
/// chosen time `alpha`, then rests at 4. `alpha = INFINITY` selects the
/// solution that never jumps. Sampled with exact node values.
pub fn exact_solutions_51(kappa: f64, alpha: f64) -> Result<ParametrizedCurve> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(RisError::parameter("kappa", "must be finite and > 0"));
    }
    let t_final = TOY51_T_FINAL;
    if alpha.is_infinite() && alpha > 0.0 {
        return sample_exact(t_final, &[], |s| (s, 2.0));
    }
    if !(alpha.is_finite() && (0.0..=t_final).contains(&alpha)) {
        return Err(RisError::parameter(
            "alpha",
            format!("must lie in [0, {t_final}] or be +inf"),
        ));
    }
    let big_s = 2.0 + t_final;
    sample_exact(big_s, &[alpha, alpha + 2.0], move |s| {
        if s <= alpha {
            (s, 2.0)
        } else if s <= alpha + 2.0 {
            (alpha, 2.0 + (s - alpha))
        } else {
            (s - 2.0, 4.0)
        }
    })
}

fn sample_exact(
    big_s: f64,
    breakpoints: &[f64],
    curve: impl Fn(f64) -> (f64, f64),
) -> Result<ParametrizedCurve> {
    let n_base = 1000usize;
    let mut grid: Vec<f64> = (0..=n_base)
        .map(|i| big_s * (i as f64) / (n_base as f64))
        .collect();
    grid.extend(breakpoints.iter().copied().filter(|b| (0.0..=big_s).contains(b)));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + big_s));

    let mut s_nodes = Vec::new();
    let mut t_nodes = Vec::new();
    let mut z_nodes = Vec::new();
    for &s in &grid {
        let (t, z) = curve(s);
        s_nodes.push(s);
        t_nodes.push(t);
        z_nodes.push(DVector::from_element(1, z));
    }
    let n_seg = s_nodes.len() - 1;
    let mut seg_kind = Vec::with_capacity(n_seg);
    let mut seg_lambda = Vec::with_capacity(n_seg);
    for i in 0..n_seg {
        let dt = t_nodes[i + 1] - t_nodes[i];
        let dz = (z_nodes[i + 1][0] - z_nodes[i][0]).abs();
        seg_kind.push(if dz == 0.0 {
            SegKind::TimeUpdate
        } else if dt == 0.0 {
            SegKind::StateUpdate
        } else {
            SegKind::Mixed
        });
        let zr = z_nodes[i + 1][0];
        let q = (zr - 2.0) * (zr - 2.0) * (zr - 4.0);
        seg_lambda.push(if dz > 0.0 { (-q).max(0.0) } else { 0.0 });
    }
    let curve = ParametrizedCurve {
        s: s_nodes,
        t: t_nodes,
        z: z_nodes,
        u: None,
        seg_kind,
        seg_lambda,
        metric_kind: CurveMetricKind::V,
        scheme: None,
        eta: None,
    };
    curve.validate()?;
    Ok(curve)
}

/// Brute-force 1D minimiser: scan a uniform grid of the given spacing,
/// keep the best point, then refine the surrounding bracket by a factor
/// 10 per round. Final bracket width `resolution / 10^refine_rounds`.
pub fn grid_oracle(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    resolution: f64,
    refine_rounds: usize,
) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(RisError::parameter("lo/hi", "need finite lo < hi"));
    }
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(RisError::parameter("resolution", "must be finite and > 0"));
    }
    let scan = |a: f64, b: f64, spacing: f64| -> Result<f64> {
        let n = (((b - a) / spacing).ceil() as usize).max(1);
        let mut best_x = a;
        let mut best_v = f64::INFINITY;
        for i in 0..=n {
            let x = a + (b - a) * (i as f64) / (n as f64);
            let v = f(x);
            if !v.is_finite() {
                return Err(RisError::Numerical(format!(
                    "objective not finite at {x}"
                )));
            }
            if v < best_v {
                best_v = v;
                best_x = x;
            }
        }
        Ok(best_x)
    };
    let mut spacing = resolution;
    let mut best = scan(lo, hi, spacing)?;
    for _ in 0..refine_rounds {
        let a = (best - spacing).max(lo);
        let b = (best + spacing).min(hi);
        spacing /= 10.0;
        best = scan(a, b, spacing)?;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Energy;

    #[test]
    fn toy51_gradient_values() {
        let (e, _d, z0) = make_toy51(1.0).unwrap();
        let g = e.gradient(0.0, &z0).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
        let g4 = e
            .gradient(0.0, &DVector::from_element(1, 4.0))
            .unwrap();
        assert!((g4[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn z_star_solves_boundary_equation() {
        for kappa in [0.5, 1.0, 2.0] {
            let z = toy51_z_star(kappa).unwrap();
            assert!(z > 4.0);
            assert!(((z - 2.0) * (z - 2.0) * (z - 4.0) - 2.0 * kappa).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_finds_quadratic_vertex() {
        let x = grid_oracle(|x| (x - 3.0) * (x - 3.0), 0.0, 10.0, 1e-3, 3).unwrap();
        assert!((x - 3.0).abs() < 1e-6);
        let x = grid_oracle(|x| x.abs(), -1.0, 1.0, 1e-3, 3).unwrap();
        assert!(x.abs() < 1e-6);
    }

    #[test]
    fn exact_curve_branches() {
        let c = exact_solutions_51(1.0, 0.5).unwrap();
        let (t, z) = c.eval(3.0).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert!((z[0] - 4.0).abs() < 1e-12);
        let (t, z) = c.eval(1.0).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert!((z[0] - 2.5).abs() < 1e-12);
        let inf = exact_solutions_51(1.0, f64::INFINITY).unwrap();
        let (_, z) = inf.eval(0.7).unwrap();
        assert_eq!(z[0], 2.0);
    }
}
