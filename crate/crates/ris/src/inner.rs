//! Single incremental minimisations: viscous proximal steps, ball
//! constrained steps and global steps.
//!
//! All three minimise `I(t, .) + R(. - w)` plus a step-dependent term: a
//! quadratic penalty `eta/2 ||. - w||_V^2` (prox), the indicator of the ball
//! `||. - w||_V <= h` (ball), or nothing at all over a search box (global).
//! The workhorse is a proximal gradient iteration in the geometry of the
//! `V` metric with backtracking line search; termination is measured by the
//! exact first-order residual, i.e. the dual distance of the remaining
//! force from the subdifferential of `R` at the increment.

use nalgebra::DVector;

use crate::dissipation::{dist_to_box, Dissipation};
use crate::energy::Energy;
use crate::error::{Result, RisError};
use crate::metric::{Metric, MetricKind};

/// Tolerances of the proximal-gradient inner solver.
#[derive(Clone, Debug)]
pub struct InnerSolverConfig {
    /// First-order residual below which an iterate counts as stationary.
    pub tol: f64,
    /// Hard cap on proximal-gradient iterations per step.
    pub max_iter: usize,
    /// Initial curvature guess; the first trial step is its reciprocal.
    pub lipschitz_guess: f64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        InnerSolverConfig {
            tol: 1e-10,
            max_iter: 100_000,
            lipschitz_guess: 1.0,
        }
    }
}

/// Outcome of one incremental minimisation.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub z: DVector<f64>,
    /// Ball multiplier (zero for unconstrained and prox steps).
    pub lambda: f64,
    pub inner_iters: usize,
    /// Achieved first-order residual.
    pub stationarity: f64,
}

/// Search region for [`global_step`].
#[derive(Clone, Debug)]
pub struct GlobalSearchConfig {
    /// Lower corner of the box; defaults to `w - 10` componentwise.
    pub lo: Option<DVector<f64>>,
    /// Upper corner of the box; defaults to `w + 10` componentwise.
    pub hi: Option<DVector<f64>>,
    /// Grid points per axis; defaults to 2001 / 201 / 41 in 1 / 2 / 3 d.
    pub points_per_axis: Option<usize>,
    /// How many of the best grid cells get a local refinement.
    pub top_cells: usize,
}

impl Default for GlobalSearchConfig {
    fn default() -> Self {
        GlobalSearchConfig {
            lo: None,
            hi: None,
            points_per_axis: None,
            top_cells: 5,
        }
    }
}

fn check_inputs(
    e: &dyn Energy,
    d: &Dissipation,
    m: Option<&Metric>,
    w: &DVector<f64>,
) -> Result<()> {
    let n = e.dim();
    if d.dim() != n {
        return Err(RisError::Dimension {
            expected: n,
            got: d.dim(),
        });
    }
    if let Some(m) = m {
        if m.dim() != n {
            return Err(RisError::Dimension {
                expected: n,
                got: m.dim(),
            });
        }
    }
    if w.len() != n {
        return Err(RisError::Dimension {
            expected: n,
            got: w.len(),
        });
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(RisError::Numerical("step seed w".into()));
    }
    Ok(())
}

/// Proximal map of `p -> R(p) + indicator(||p||_V <= h)` at `q` with
/// parameter `alpha`, i.e. the minimiser of
/// `1/(2 alpha) ||p - q||_V^2 + R(p)` subject to the optional ball.
fn prox_r(
    d: &Dissipation,
    m: &Metric,
    q: &DVector<f64>,
    alpha: f64,
    ball: Option<f64>,
) -> Result<DVector<f64>> {
    let n = q.len();
    let shrink = |x: f64, thr: f64| -> f64 {
        if x > thr {
            x - thr
        } else if x < -thr {
            x + thr
        } else {
            0.0
        }
    };

    if let Some(diag) = m.diag_weights() {
        let mut p = DVector::zeros(n);
        for i in 0..n {
            p[i] = shrink(q[i], alpha * d.weights()[i] / diag[i]);
        }
        if let Some(h) = ball {
            // With diagonal V the constrained prox is the unconstrained
            // shrink scaled radially back onto the ball.
            let s = m.norm(&p)?;
            if s > h {
                p *= h / s;
            }
        }
        return Ok(p);
    }

    // Dense metric: cyclic coordinate descent on the shrinkage problem,
    // interleaved with radial projection when a ball is present.
    let mat = m.matrix();
    let mq = m.apply(q);
    let mut p = q.clone();
    let rounds = if ball.is_some() { 40 } else { 1 };
    for _ in 0..rounds {
        for _sweep in 0..200 {
            let mut change = 0.0f64;
            for i in 0..n {
                let mut cross = 0.0;
                for j in 0..n {
                    if j != i {
                        cross += mat[(i, j)] * p[j];
                    }
                }
                let qi = (mq[i] - cross) / mat[(i, i)];
                let next = shrink(qi, alpha * d.weights()[i] / mat[(i, i)]);
                change = change.max((next - p[i]).abs());
                p[i] = next;
            }
            if change <= 1e-14 * (1.0 + p.amax()) {
                break;
            }
        }
        match ball {
            Some(h) => {
                let s = m.norm(&p)?;
                if s > h * (1.0 + 1e-15) {
                    p *= h / s;
                } else {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(p)
}

/// Multiplier of an active ball constraint: the dual distance of the raw
/// force from the stable set, divided by the radius. Zero when inactive.
fn ball_multiplier(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    t: f64,
    z: &DVector<f64>,
    w: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let active_tol = 1e-8 * h;
    if m.norm(&(z - w))? < h - active_tol {
        return Ok(0.0);
    }
    let xi = -e.gradient(t, z)?;
    Ok(d.dist_to_stable(m, &xi)? / h)
}

/// First-order residual of the step problem at `x`: the dual distance of
/// `-DI(t,x) - (eta + lambda) V (x - w)` from `dR(x - w)`.
fn kkt_residual(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    t: f64,
    x: &DVector<f64>,
    w: &DVector<f64>,
    eta: f64,
    lambda: f64,
) -> Result<f64> {
    let v = x - w;
    let mut xi = -e.gradient(t, x)?;
    if eta + lambda != 0.0 {
        xi -= (eta + lambda) * m.apply(&v);
    }
    // Snap numerically tiny components to zero before picking faces so a
    // 1e-16 leftover does not pin the wrong face.
    let scale = v.amax();
    let v_clean = DVector::from_fn(v.len(), |i, _| {
        if v[i].abs() <= 1e-14 * (1.0 + scale) {
            0.0
        } else {
            v[i]
        }
    });
    let (lo, hi) = d.subdifferential_box(&v_clean)?;
    Ok(dist_to_box(m, &xi, &lo, &hi)?.0)
}

struct DescentOutcome {
    x: DVector<f64>,
    iters: usize,
    residual: f64,
}

/// Proximal-gradient descent on `I(t,.) + eta/2 ||.-w||_V^2 + R(.-w)`
/// (plus an optional ball) started from `x0`. Runs until the first-order
/// residual drops below `cfg.tol` or the iteration budget `budget` is
/// exhausted; returns the best iterate either way.
///
/// The line search backtracks on the descent lemma of the smooth part
/// alone, not on the composite objective: near a stationary point the
/// composite decrease per step falls below the floating-point resolution
/// of the objective long before the residual reaches practical tolerances,
/// while the smooth-part test stays decidable because its right-hand side
/// carries the matching first-order term. A small relative slack absorbs
/// the remaining round-off.
#[allow(clippy::too_many_arguments)]
fn prox_descent(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    t: f64,
    w: &DVector<f64>,
    eta: f64,
    ball: Option<f64>,
    x0: DVector<f64>,
    cfg: &InnerSolverConfig,
    budget: usize,
) -> Result<DescentOutcome> {
    let smooth = |x: &DVector<f64>| -> Result<f64> {
        let mut val = e.value(t, x)?;
        if eta != 0.0 {
            let v = x - w;
            val += 0.5 * eta * m.inner(&v, &v);
        }
        Ok(val)
    };

    let residual_at = |x: &DVector<f64>| -> Result<f64> {
        let lambda = match ball {
            Some(h) => ball_multiplier(e, d, m, t, x, w, h)?,
            None => 0.0,
        };
        kkt_residual(e, d, m, t, x, w, eta, lambda)
    };

    let mut x = x0;
    let mut fx = smooth(&x)?;
    if !fx.is_finite() {
        return Err(RisError::Numerical("step objective at start".into()));
    }
    let mut alpha = 1.0 / cfg.lipschitz_guess.max(f64::MIN_POSITIVE);
    let mut iters = 0usize;
    let mut residual = residual_at(&x)?;

    // The Armijo slack below makes tiny steps at a too-long alpha
    // indistinguishable from round-off, and the shrinkage kinks can then
    // lock the iteration into an accepted period-two orbit. Two direct
    // no-progress safeguards catch that: a bitwise revisit of the
    // second-to-last iterate, and a long stretch without a new best
    // residual. Either one halves alpha.
    let mut prev: Option<DVector<f64>> = None;
    let mut best_res = residual;
    let mut stagnant = 0usize;

    while residual > cfg.tol && iters < budget {
        let grad = {
            let mut g = e.gradient(t, &x)?;
            if eta != 0.0 {
                g += eta * m.apply(&(&x - w));
            }
            g
        };
        // One backtracked proximal-gradient update.
        let mut accepted = false;
        while alpha > 1e-250 {
            let q = (&x - w) - alpha * m.solve(&grad);
            let p = prox_r(d, m, &q, alpha, ball)?;
            let cand = w + &p;
            let step = &cand - &x;
            let step_sq = m.inner(&step, &step);
            if step_sq == 0.0 {
                // Fixed point of the prox map: first-order stationary
                // up to the face rounding; stop here.
                iters += 1;
                residual = residual_at(&x)?;
                return Ok(DescentOutcome { x, iters, residual });
            }
            let f_cand = smooth(&cand)?;
            let bound =
                fx + grad.dot(&step) + 0.5 / alpha * step_sq + 1e-12 * (1.0 + fx.abs());
            if f_cand.is_finite() && f_cand <= bound {
                let cycled = prev.as_ref() == Some(&cand);
                prev = Some(std::mem::replace(&mut x, cand));
                fx = f_cand;
                accepted = true;
                iters += 1;
                residual = residual_at(&x)?;
                if cycled {
                    alpha *= 0.5;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(RisError::Numerical(
                "line search collapsed in the inner solver".into(),
            ));
        }
        if residual < best_res {
            best_res = residual;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= 2000 {
                alpha *= 0.5;
                stagnant = 0;
            }
        }
        // alpha stays monotone within one call: regrowing it re-admits
        // locally divergent steps whose Armijo violation hides below the
        // round-off slack, which turns the tail of the iteration into a
        // limit cycle instead of a contraction.
    }
    Ok(DescentOutcome { x, iters, residual })
}

/// One viscous incremental step: solves
/// `0 in dR(z - w) + eta V (z - w) + D_z I(t, z)`
/// by proximal gradient descent started at `w`.
pub fn prox_step(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    t: f64,
    w: &DVector<f64>,
    eta: f64,
    cfg: &InnerSolverConfig,
) -> Result<StepResult> {
    check_inputs(e, d, Some(m), w)?;
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(RisError::parameter("eta", "must be finite and >= 0"));
    }
    let out = prox_descent(e, d, m, t, w, eta, None, w.clone(), cfg, cfg.max_iter)?;
    let result = StepResult {
        z: out.x,
        lambda: 0.0,
        inner_iters: out.iters,
        stationarity: out.residual,
    };
    if out.residual > cfg.tol {
        return Err(RisError::NoConvergence {
            iters: out.iters,
            residual: out.residual,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// One ball-constrained local step: minimises `I(t, .) + R(. - w)` over
/// `||z - w||_V <= h`, reporting the constraint multiplier recovered from
/// the force excess (`lambda = dist(-DI, dR(0)) / h` when the constraint
/// is active, zero otherwise).
///
/// Proximal descent from `w` alone can stall at marginally stable seeds,
/// where `w` is first-order stationary but the true ball minimiser sits on
/// the boundary. After each converged descent the boundary is probed along
/// the metric axes and the steepest-descent direction; any strictly better
/// probe restarts the descent from there.
pub fn ball_step(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    t: f64,
    w: &DVector<f64>,
    h: f64,
    cfg: &InnerSolverConfig,
) -> Result<StepResult> {
    check_inputs(e, d, Some(m), w)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(RisError::parameter("h", "must be finite and > 0"));
    }
    let n = e.dim();
    let objective = |x: &DVector<f64>| -> Result<f64> {
        Ok(e.value(t, x)? + d.eval(&(x - w))?)
    };

    let mut probes: Vec<DVector<f64>> = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        let mut dir = DVector::zeros(n);
        dir[i] = 1.0;
        let nrm = m.norm(&dir)?;
        probes.push(w + (h / nrm) * &dir);
        probes.push(w - (h / nrm) * &dir);
    }
    let g0 = e.gradient(t, w)?;
    let steepest = -m.solve(&g0);
    let nrm = m.norm(&steepest)?;
    if nrm > 0.0 {
        probes.push(w + (h / nrm) * &steepest);
    }

    let mut total_iters = 0usize;
    let mut out = prox_descent(
        e,
        d,
        m,
        t,
        w,
        0.0,
        Some(h),
        w.clone(),
        cfg,
        cfg.max_iter,
    )?;
    total_iters += out.iters;

    for _restart in 0..8 {
        if total_iters >= cfg.max_iter {
            break;
        }
        let phi = objective(&out.x)?;
        let margin = 1e-12 * (1.0 + phi.abs());
        let mut best: Option<(f64, &DVector<f64>)> = None;
        for p in &probes {
            let v = objective(p)?;
            if v < phi - margin && best.map_or(true, |(bv, _)| v < bv) {
                best = Some((v, p));
            }
        }
        let Some((_, seed)) = best else { break };
        let next = prox_descent(
            e,
            d,
            m,
            t,
            w,
            0.0,
            Some(h),
            seed.clone(),
            cfg,
            cfg.max_iter - total_iters,
        )?;
        total_iters += next.iters;
        if objective(&next.x)? < phi - margin {
            out = next;
        } else {
            break;
        }
    }

    let lambda = ball_multiplier(e, d, m, t, &out.x, w, h)?;
    let residual = kkt_residual(e, d, m, t, &out.x, w, 0.0, lambda)?;
    let result = StepResult {
        z: out.x,
        lambda,
        inner_iters: total_iters,
        stationarity: residual,
    };
    if residual > cfg.tol {
        return Err(RisError::NoConvergence {
            iters: total_iters,
            residual,
            best: Box::new(result),
        });
    }
    // The constraint may only be violated by rounding.
    debug_assert!(m.norm(&(&result.z - w))? <= h + 1e-12 * (1.0 + h));
    Ok(result)
}

/// One unconstrained global incremental step: minimises
/// `I(t, .) + R(. - w)` over a box by a coarse grid scan followed by
/// proximal refinement from the best cells. Supported up to dimension 3;
/// ties in the scan resolve to the smallest grid index.
pub fn global_step(
    e: &dyn Energy,
    d: &Dissipation,
    t: f64,
    w: &DVector<f64>,
    cfg: &InnerSolverConfig,
    search: &GlobalSearchConfig,
) -> Result<StepResult> {
    check_inputs(e, d, None, w)?;
    let n = e.dim();
    if n > 3 {
        return Err(RisError::UnsupportedDimension { max: 3, got: n });
    }
    let lo = match &search.lo {
        Some(v) => {
            if v.len() != n {
                return Err(RisError::Dimension {
                    expected: n,
                    got: v.len(),
                });
            }
            v.clone()
        }
        None => w.map(|x| x - 10.0),
    };
    let hi = match &search.hi {
        Some(v) => {
            if v.len() != n {
                return Err(RisError::Dimension {
                    expected: n,
                    got: v.len(),
                });
            }
            v.clone()
        }
        None => w.map(|x| x + 10.0),
    };
    for i in 0..n {
        if !(lo[i] < hi[i]) {
            return Err(RisError::parameter("search box", "need lo < hi per axis"));
        }
    }
    let pts = search.points_per_axis.unwrap_or(match n {
        1 => 2001,
        2 => 201,
        _ => 41,
    });
    if pts < 2 {
        return Err(RisError::parameter("points_per_axis", "need at least 2"));
    }

    let objective = |x: &DVector<f64>| -> Result<f64> {
        Ok(e.value(t, x)? + d.eval(&(x - w))?)
    };

    // Row-major scan; strict `<` keeps the smallest linear index on ties.
    let coord = |axis: usize, i: usize| -> f64 {
        lo[axis] + (hi[axis] - lo[axis]) * (i as f64) / ((pts - 1) as f64)
    };
    let total = pts.pow(n as u32);
    let mut ranked: Vec<(f64, DVector<f64>)> = Vec::new();
    for lin in 0..total {
        let mut rem = lin;
        let mut idx = [0usize; 3];
        for axis in (0..n).rev() {
            idx[axis] = rem % pts;
            rem /= pts;
        }
        let x = DVector::from_fn(n, |a, _| coord(a, idx[a]));
        let v = objective(&x)?;
        if !v.is_finite() {
            return Err(RisError::Numerical("global scan objective".into()));
        }
        if ranked.len() < search.top_cells.max(1) {
            ranked.push((v, x));
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        } else if v < ranked.last().unwrap().0 {
            ranked.pop();
            ranked.push((v, x));
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
    }

    // Local refinement from the best cells in the identity geometry.
    let id = Metric::identity(MetricKind::V, n);
    let mut best: Option<(f64, DescentOutcome)> = None;
    let mut total_iters = 0usize;
    for (_, seed) in &ranked {
        let out = prox_descent(
            e,
            d,
            &id,
            t,
            w,
            0.0,
            None,
            seed.clone(),
            cfg,
            cfg.max_iter.saturating_sub(total_iters),
        )?;
        total_iters += out.iters;
        let v = objective(&out.x)?;
        if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
            best = Some((v, out));
        }
    }
    let (_, out) = best.expect("at least one candidate");
    let result = StepResult {
        z: out.x,
        lambda: 0.0,
        inner_iters: total_iters,
        stationarity: out.residual,
    };
    if out.residual > cfg.tol {
        return Err(RisError::NoConvergence {
            iters: total_iters,
            residual: out.residual,
            best: Box::new(result),
        });
    }
    Ok(result)
}
