//! A-posteriori diagnostics on parametrised curves: discrete energy
//! identities, complementarity integrals, dissipation totals and the
//! classification of candidate limit curves.
//!
//! All integrals are evaluated segment by segment. Piecewise constant
//! companions of a curve are read off segment endpoints: the left time
//! and the right state, matching the conventions under which the discrete
//! identities hold with equality at inner-solver optimality.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dissipation::Dissipation;
use crate::energy::{CoupledEnergyModel, Energy};
use crate::error::{Result, RisError};
use crate::metric::Metric;
use crate::parametrize::{CurveMetricKind, ParametrizedCurve, SegKind};
use crate::quadrature::integrate;
use crate::schemes::{RunTrace, SchemeKind};

/// Energy model handle that serves both plain and coupled runs.
#[derive(Clone, Copy)]
pub enum ModelRef<'a> {
    Plain(&'a dyn Energy),
    Coupled(&'a CoupledEnergyModel),
}

impl<'a> ModelRef<'a> {
    fn needs_u(&self) -> bool {
        matches!(self, ModelRef::Coupled(_))
    }

    pub fn t_final(&self) -> f64 {
        match self {
            ModelRef::Plain(e) => e.t_final(),
            ModelRef::Coupled(ce) => ce.t_final(),
        }
    }

    fn value(&self, t: f64, z: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<f64> {
        match self {
            ModelRef::Plain(e) => e.value(t, z),
            ModelRef::Coupled(ce) => ce.value(t, require_u(u)?, z),
        }
    }

    fn grad_z(&self, t: f64, z: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        match self {
            ModelRef::Plain(e) => e.gradient(t, z),
            ModelRef::Coupled(ce) => ce.gradient_z(t, require_u(u)?, z),
        }
    }

    fn dt(&self, t: f64, z: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<f64> {
        match self {
            ModelRef::Plain(e) => e.time_derivative(t, z),
            ModelRef::Coupled(ce) => ce.time_derivative(t, require_u(u)?, z),
        }
    }

    fn grad_u(&self, t: f64, z: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        match self {
            ModelRef::Plain(_) => Err(RisError::Trace(
                "u work requested on a plain model".into(),
            )),
            ModelRef::Coupled(ce) => ce.gradient_u(t, require_u(u)?, z),
        }
    }
}

fn require_u<'a>(u: Option<&'a DVector<f64>>) -> Result<&'a DVector<f64>> {
    u.ok_or_else(|| RisError::Trace("coupled model needs u values on the curve".into()))
}

/// Additive breakdown of a discrete energy identity over a segment window.
#[derive(Clone, Debug, Default)]
pub struct IdentityBreakdown {
    pub energy_start: f64,
    pub energy_end: f64,
    /// Rate-independent dissipation `sum R(dz)`.
    pub diss_ri: f64,
    /// Dissipation beyond `R`: viscous primal and dual halves, or the
    /// `||z'|| dist` term of the local minimisation identity.
    pub diss_extra: f64,
    /// `int dI/dt t' ds`.
    pub power: f64,
    /// `int <D_u E, u'> ds` (alternate minimisation only).
    pub u_work: f64,
    /// `int r ds`, the gradient-gap remainder.
    pub remainder: f64,
    /// `sum dt * dist(-D_z I(t_left, z_right))`.
    pub complementarity: f64,
    /// `energy_end + diss_ri + diss_extra - energy_start - power - u_work
    /// - remainder`; closes to solver tolerance for schemes with an exact
    /// discrete identity.
    pub residual: f64,
}

struct SegGeom<'c> {
    ds: f64,
    dt: f64,
    t_a: f64,
    t_b: f64,
    z_a: &'c DVector<f64>,
    z_b: &'c DVector<f64>,
    u_a: Option<&'c DVector<f64>>,
    u_b: Option<&'c DVector<f64>>,
    kind: SegKind,
}

fn seg_geom(curve: &ParametrizedCurve, i: usize) -> SegGeom<'_> {
    SegGeom {
        ds: curve.seg_ds(i),
        dt: curve.t[i + 1] - curve.t[i],
        t_a: curve.t[i],
        t_b: curve.t[i + 1],
        z_a: &curve.z[i],
        z_b: &curve.z[i + 1],
        u_a: curve.u.as_ref().map(|u| &u[i]),
        u_b: curve.u.as_ref().map(|u| &u[i + 1]),
        kind: curve.seg_kind[i],
    }
}

fn lerp(a: &DVector<f64>, b: &DVector<f64>, th: f64) -> DVector<f64> {
    a + (b - a) * th
}

/// `int_0^1 dI/dt(t(th), z(th)[, u(th)]) dth * dt` over one segment.
fn power_seg(model: &ModelRef, g: &SegGeom) -> Result<f64> {
    if g.dt == 0.0 {
        return Ok(0.0);
    }
    let mut err = None;
    let val = integrate(0.0, 1.0, |th| {
        let t = g.t_a + th * g.dt;
        let z = lerp(g.z_a, g.z_b, th);
        let u = g.u_a.map(|ua| lerp(ua, g.u_b.unwrap(), th));
        match model.dt(t, &z, u.as_ref()) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(val * g.dt),
    }
}

/// `int_0^1 <D_z(curve) - D_z(pwconst), dz> dth` over one state-moving
/// segment, with the piecewise constant gradient supplied by the caller.
///
/// Evaluated as the exact energy difference minus the time leg, the u leg
/// and the pinned-gradient work rather than by quadrature of the gradient
/// gap: across a jump the gap integrand is far from polynomial and a fixed
/// rule leaves an error that dwarfs the identity defect, while the
/// difference form keeps the residual a pure optimality defect.
fn remainder_seg(model: &ModelRef, g: &SegGeom, grad_pw: &DVector<f64>) -> Result<f64> {
    let dz = g.z_b - g.z_a;
    let de = model.value(g.t_b, g.z_b, g.u_b)? - model.value(g.t_a, g.z_a, g.u_a)?;
    Ok(de - power_seg(model, g)? - u_work_seg(model, g)? - grad_pw.dot(&dz))
}

/// `int_0^1 <D_u E(t_k, u(th), z(th)), du> dth` over one joint segment.
fn u_work_seg(model: &ModelRef, g: &SegGeom) -> Result<f64> {
    let (u_a, u_b) = match (g.u_a, g.u_b) {
        (Some(a), Some(b)) => (a, b),
        _ => return Ok(0.0),
    };
    let du = u_b - u_a;
    if du.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut err = None;
    let val = integrate(0.0, 1.0, |th| {
        let t = g.t_a + th * g.dt;
        let z = lerp(g.z_a, g.z_b, th);
        let u = lerp(u_a, u_b, th);
        match model.grad_u(t, &z, Some(&u)) {
            Ok(grad) => grad.dot(&du),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(val),
    }
}

fn identity_breakdown(
    curve: &ParametrizedCurve,
    model: &ModelRef,
    d: &Dissipation,
    m: &Metric,
    kind: SchemeKind,
    window: (usize, usize),
) -> Result<IdentityBreakdown> {
    curve.validate()?;
    if let Some(k) = curve.scheme {
        if k != kind {
            return Err(RisError::Kind {
                expected: kind.to_string(),
                got: k.to_string(),
            });
        }
    }
    if model.needs_u() != curve.u.is_some() {
        return Err(RisError::Trace(
            "model and curve disagree about the presence of u".into(),
        ));
    }
    let (lo, hi) = window;
    if lo > hi || hi > curve.num_segments() {
        return Err(RisError::parameter("window", "segment range out of bounds"));
    }
    let eta = match kind {
        SchemeKind::Viscous
        | SchemeKind::ViscoEnergetic
        | SchemeKind::RelaxedLocalMin
        | SchemeKind::AlternateMin => Some(curve.eta.ok_or_else(|| {
            RisError::parameter("eta", "curve carries no effective viscous penalty")
        })?),
        _ => None,
    };

    let mut b = IdentityBreakdown {
        energy_start: model.value(
            curve.t[lo],
            &curve.z[lo],
            curve.u.as_ref().map(|u| &u[lo]),
        )?,
        energy_end: model.value(
            curve.t[hi],
            &curve.z[hi],
            curve.u.as_ref().map(|u| &u[hi]),
        )?,
        ..Default::default()
    };

    // z increment of the latest state segment; pinned by the inner solve
    // that produced it and consumed by the next time segment.
    let mut pending_dz: Option<DVector<f64>> = None;
    for i in 0..hi {
        let g = seg_geom(curve, i);
        let in_window = i >= lo;
        let dz = g.z_b - g.z_a;
        let dz_v = m.norm(&dz)?;
        let grad_pw = model.grad_z(g.t_a, g.z_b, g.u_b)?;
        let xi = -&grad_pw;
        let dist_raw = d.dist_to_stable(m, &xi)?;

        match kind {
            SchemeKind::LocalMin => {
                if in_window {
                    b.diss_ri += d.eval(&dz)?;
                    b.diss_extra += dz_v * dist_raw;
                    b.power += power_seg(model, &g)?;
                    b.remainder += remainder_seg(model, &g, &grad_pw)?;
                    b.complementarity += g.dt * dist_raw;
                }
            }
            SchemeKind::GlobalIncremental => {
                if in_window {
                    match g.kind {
                        SegKind::TimeUpdate => {
                            b.power += power_seg(model, &g)?;
                            b.complementarity += g.dt * dist_raw;
                        }
                        SegKind::StateUpdate => {
                            b.diss_ri += d.eval(&dz)?;
                            b.remainder += remainder_seg(model, &g, &grad_pw)?;
                        }
                        SegKind::Mixed => {
                            return Err(RisError::Trace(
                                "mixed segment in a grid-scheme curve".into(),
                            ))
                        }
                    }
                }
            }
            SchemeKind::Viscous
            | SchemeKind::ViscoEnergetic
            | SchemeKind::RelaxedLocalMin
            | SchemeKind::AlternateMin => {
                let eta = eta.unwrap();
                match g.kind {
                    SegKind::TimeUpdate => {
                        // A time segment not preceded by a prox output (the
                        // very first one) carries no optimality defect; the
                        // initial state may legitimately be unstable.
                        let xi_corr = pending_dz.take().map(|prev| &xi - m.apply(&prev) * eta);
                        if in_window {
                            if let Some(xi_corr) = xi_corr {
                                let dist_corr = d.dist_to_stable(m, &xi_corr)?;
                                b.diss_extra += dist_corr * dist_corr / (2.0 * eta);
                            }
                            b.power += power_seg(model, &g)?;
                            b.complementarity += g.dt * dist_raw;
                        }
                    }
                    SegKind::StateUpdate => {
                        if in_window {
                            b.diss_ri += d.eval(&dz)?;
                            b.diss_extra += 0.5 * eta * dz_v * dz_v
                                + dist_raw * dist_raw / (2.0 * eta);
                            b.remainder += remainder_seg(model, &g, &grad_pw)?;
                            if kind == SchemeKind::AlternateMin {
                                b.u_work += u_work_seg(model, &g)?;
                            }
                        }
                        pending_dz = Some(dz);
                    }
                    SegKind::Mixed => {
                        return Err(RisError::Trace(
                            "mixed segment in a grid-scheme curve".into(),
                        ))
                    }
                }
            }
        }
    }
    b.residual = b.energy_end + b.diss_ri + b.diss_extra
        - b.energy_start
        - b.power
        - b.u_work
        - b.remainder;
    Ok(b)
}

/// Signed defect of the discrete energy identity matching `kind`, over the
/// whole curve.
///
/// For the local minimisation, viscous, visco-energetic, relaxed and
/// alternate schemes the identity holds with equality at inner-solver
/// optimality, so the defect is quadrature error plus solver slack. For
/// the global incremental scheme the value is the defect of the upper
/// energy estimate; it is reported as-is and is not small across jumps.
pub fn energy_dissipation_residual(
    curve: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m: &Metric,
    kind: SchemeKind,
) -> Result<f64> {
    Ok(identity_breakdown(curve, &model, d, m, kind, (0, curve.num_segments()))?.residual)
}

/// Same defect restricted to the segment window `[lo, hi)`; the identity
/// holds between any two curve points, which makes windows starting after
/// an unstable initial state meaningful.
pub fn energy_dissipation_residual_windowed(
    curve: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m: &Metric,
    kind: SchemeKind,
    window: (usize, usize),
) -> Result<f64> {
    Ok(identity_breakdown(curve, &model, d, m, kind, window)?.residual)
}

/// Full additive breakdown of the identity, for reporting.
pub fn identity_terms(
    curve: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m: &Metric,
    kind: SchemeKind,
) -> Result<IdentityBreakdown> {
    identity_breakdown(curve, &model, d, m, kind, (0, curve.num_segments()))
}

/// `sum dt * dist(-D_z(t_left, z_right), dR(0))` over all segments: the
/// discrete complementarity between time advance and force excess.
pub fn complementarity_integral(
    curve: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m: &Metric,
) -> Result<f64> {
    curve.validate()?;
    if model.needs_u() != curve.u.is_some() {
        return Err(RisError::Trace(
            "model and curve disagree about the presence of u".into(),
        ));
    }
    let mut acc = 0.0;
    for i in 0..curve.num_segments() {
        let g = seg_geom(curve, i);
        if g.dt == 0.0 {
            continue;
        }
        let xi = -model.grad_z(g.t_a, g.z_b, g.u_b)?;
        acc += g.dt * d.dist_to_stable(m, &xi)?;
    }
    Ok(acc)
}

/// Total rate-independent dissipation `sum R(dz)` along the curve. Each
/// segment moves affinely, so components are sign-consistent within a
/// segment by construction.
pub fn dissipation_total(curve: &ParametrizedCurve, d: &Dissipation) -> Result<f64> {
    curve.validate()?;
    let mut acc = 0.0;
    for i in 0..curve.num_segments() {
        acc += d.eval(&(&curve.z[i + 1] - &curve.z[i]))?;
    }
    Ok(acc)
}

/// Result of checking a curve against the defining conditions of a
/// parametrised BV solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BvClassification {
    pub is_parametrized_solution: bool,
    /// Largest violation across the four conditions.
    pub worst_violation: f64,
    /// Boundary data: `t(0)=0`, `t(S)=T`, `z(0)=z0`.
    pub boundary_violation: f64,
    /// Normalisation `t' + ||z'||_V <= 1`.
    pub normalization_violation: f64,
    /// `int t' dist(-D_z I(t,z), dR(0)) ds`.
    pub complementarity_violation: f64,
    /// Worst defect of the cumulative BV energy identity at segment ends.
    pub identity_violation: f64,
    /// Fraction of segments on which neither time nor state moves.
    pub degenerate_segment_fraction: f64,
}

/// Check the four conditions defining a parametrised BV solution:
/// boundary data, normalisation, complementarity and the energy identity
/// with the BV dissipation integrand `R(z') + ||z'||_V dist(-D_z I, dR(0))`
/// evaluated along the curve itself.
pub fn classify_bv_solution(
    curve: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m: &Metric,
    z0: &DVector<f64>,
    tol: f64,
) -> Result<BvClassification> {
    curve.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(RisError::parameter("tol", "must be finite and > 0"));
    }
    let t_final = model.t_final();
    let n_seg = curve.num_segments();

    let boundary = {
        let t0 = curve.t[0].abs();
        let t_end = (curve.t[n_seg] - t_final).abs() / (1.0 + t_final.abs());
        let dz0 = m.norm(&(&curve.z[0] - z0))?;
        t0.max(t_end).max(dz0)
    };

    let mut normalization: f64 = 0.0;
    let mut complementarity = 0.0;
    let mut identity: f64 = 0.0;
    let mut degenerate = 0usize;

    let e0 = model.value(curve.t[0], &curve.z[0], curve.u.as_ref().map(|u| &u[0]))?;
    let mut lhs_acc = 0.0;
    let mut rhs_acc = 0.0;

    for i in 0..n_seg {
        let g = seg_geom(curve, i);
        let dz = g.z_b - g.z_a;
        let dz_v = m.norm(&dz)?;
        normalization = normalization.max((g.dt + dz_v) / g.ds - 1.0);
        if g.dt <= 1e-14 * g.ds && dz_v <= 1e-14 * g.ds {
            degenerate += 1;
        }

        let mut err = None;
        let dist_avg = integrate(0.0, 1.0, |th| {
            let t = g.t_a + th * g.dt;
            let z = lerp(g.z_a, g.z_b, th);
            let u = g.u_a.map(|ua| lerp(ua, g.u_b.unwrap(), th));
            let xi = match model.grad_z(t, &z, u.as_ref()) {
                Ok(gr) => -gr,
                Err(e) => {
                    err.get_or_insert(e);
                    return 0.0;
                }
            };
            match d.dist_to_stable(m, &xi) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        complementarity += g.dt * dist_avg;
        lhs_acc += d.eval(&dz)? + dz_v * dist_avg;
        rhs_acc += power_seg(&model, &g)?;

        let e_here = model.value(
            curve.t[i + 1],
            &curve.z[i + 1],
            curve.u.as_ref().map(|u| &u[i + 1]),
        )?;
        identity = identity.max((e_here + lhs_acc - e0 - rhs_acc).abs());
    }

    let normalization = normalization.max(0.0);
    let worst = boundary
        .max(normalization)
        .max(complementarity)
        .max(identity);
    Ok(BvClassification {
        is_parametrized_solution: worst <= tol,
        worst_violation: worst,
        boundary_violation: boundary,
        normalization_violation: normalization,
        complementarity_violation: complementarity,
        identity_violation: identity,
        degenerate_segment_fraction: degenerate as f64 / n_seg.max(1) as f64,
    })
}

/// Diagnostics attached to the fixed-penalty, time-regularised
/// parametrisation (state lengths in the Z norm). All quantities are
/// penalty-free. The gap integrals pair each time advance with the state
/// relaxation that produced the frozen point, so a run that never moves
/// reports exact zeros and refined runs shrink like the step size.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixedEtaReport {
    /// `int t' dist(-D_z I(t(s), z_right(s))) ds`.
    pub complementarity_integral_z: f64,
    /// Defect of the energy identity with the `||z'||_V dist` integrand
    /// and the gradient-gap cross term.
    pub energy_residual_z: f64,
    /// `int <D_z I(t, z_right) - D_z I(t, z), z'> ds`.
    pub cross_term_integral: f64,
    /// `int t' (s_accept - s_relax_start) ds`: arc length of the relaxation
    /// span behind the frozen state, weighted by the time advance.
    pub time_gap_integral: f64,
    /// `int t' (||z_r - z_l||_Z + ||z_r - z||_Z + ||z - z_l||_Z) ds` with
    /// `z_l`, `z_r` the endpoints of that relaxation span and `z` the
    /// frozen state (`z = z_r` on time segments).
    pub state_gap_integral: f64,
    pub degenerate_segment_fraction: f64,
    pub arc_length_z: f64,
}

/// Evaluate the relations satisfied by time-regularised curves: the
/// complementarity in the current time, the energy identity with cross
/// term, and the two gap integrals. Expects a Z-parametrised curve.
pub fn fixed_eta_report(
    curve_z: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m_z: &Metric,
    m_v: &Metric,
) -> Result<FixedEtaReport> {
    curve_z.validate()?;
    if curve_z.metric_kind != CurveMetricKind::Z {
        return Err(RisError::Kind {
            expected: "Z-parametrised curve".into(),
            got: format!("{:?} parametrisation", curve_z.metric_kind),
        });
    }
    if model.needs_u() != curve_z.u.is_some() {
        return Err(RisError::Trace(
            "model and curve disagree about the presence of u".into(),
        ));
    }
    let n_seg = curve_z.num_segments();
    let mut compl_z = 0.0;
    let mut cross = 0.0;
    let mut time_gap = 0.0;
    let mut state_gap = 0.0;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut degenerate = 0usize;
    // node index where the relaxation span feeding the next time advance
    // started; reset after every time segment
    let mut relax_start = 0usize;

    for i in 0..n_seg {
        let g = seg_geom(curve_z, i);
        let dz = g.z_b - g.z_a;
        let dz_v = m_v.norm(&dz)?;
        let dz_z = m_z.norm(&dz)?;
        if g.dt <= 1e-14 * g.ds && dz_z <= 1e-14 * g.ds {
            degenerate += 1;
        }

        if g.dt > 0.0 {
            let mut err = None;
            let dist_avg = integrate(0.0, 1.0, |th| {
                let t = g.t_a + th * g.dt;
                let u = g.u_a.map(|ua| lerp(ua, g.u_b.unwrap(), th));
                let xi = match model.grad_z(t, g.z_b, u.as_ref()) {
                    Ok(gr) => -gr,
                    Err(e) => {
                        err.get_or_insert(e);
                        return 0.0;
                    }
                };
                match d.dist_to_stable(m_v, &xi) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            compl_z += g.dt * dist_avg;
            let gap_s = curve_z.s[i] - curve_z.s[relax_start];
            let gap_z = m_z.norm(&(&curve_z.z[i] - &curve_z.z[relax_start]))?;
            time_gap += g.dt * gap_s;
            state_gap += g.dt * 2.0 * gap_z;
            rhs += power_seg(&model, &g)?;
            relax_start = i + 1;
        }
        if dz_v > 0.0 {
            let grad_pw = model.grad_z(g.t_b, g.z_b, g.u_b)?;
            let xi = -&grad_pw;
            let dist_right = d.dist_to_stable(m_v, &xi)?;
            lhs += d.eval(&dz)? + dz_v * dist_right;
            cross -= remainder_seg(&model, &g, &grad_pw)?;
        }
    }

    let e_start = model.value(
        curve_z.t[0],
        &curve_z.z[0],
        curve_z.u.as_ref().map(|u| &u[0]),
    )?;
    let e_end = model.value(
        curve_z.t[n_seg],
        &curve_z.z[n_seg],
        curve_z.u.as_ref().map(|u| &u[n_seg]),
    )?;
    // identity: E_end + int(R + ||z'|| dist) + cross = E_start + int dI/dt t'
    let energy_residual_z = e_end + lhs + cross - e_start - rhs;

    Ok(FixedEtaReport {
        complementarity_integral_z: compl_z,
        energy_residual_z,
        cross_term_integral: cross,
        time_gap_integral: time_gap,
        state_gap_integral: state_gap,
        degenerate_segment_fraction: degenerate as f64 / n_seg.max(1) as f64,
        arc_length_z: curve_z.arc_length(),
    })
}

/// Summary report for one run (residuals, integrals, node stationarity).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsReport {
    pub energy_residual: f64,
    pub complementarity_integral: f64,
    pub diss_total: f64,
    pub viscous_diss_total: f64,
    /// Largest `dist_to_stable(-D_z I)` over accepted states `k >= 1`; the
    /// initial datum is input, not an output of the stopping rule, and may
    /// legitimately be unstable.
    pub max_stationarity_at_nodes: f64,
    pub remainder_integral: f64,
    pub eta_delta_product: Option<f64>,
    pub inner_tol: f64,
}

/// Assemble the standard report from a run and its parametrised curve.
pub fn diagnostics_report(
    trace: &RunTrace,
    curve: &ParametrizedCurve,
    model: ModelRef,
    d: &Dissipation,
    m: &Metric,
) -> Result<DiagnosticsReport> {
    let kind = trace.kind();
    let b = identity_breakdown(curve, &model, d, m, kind, (0, curve.num_segments()))?;
    let mut max_stat: f64 = 0.0;
    for node in trace.accepted_nodes().into_iter().filter(|n| n.k > 0) {
        let xi = -model.grad_z(node.t, &node.z, node.u.as_ref())?;
        max_stat = max_stat.max(d.dist_to_stable(m, &xi)?);
    }
    Ok(DiagnosticsReport {
        energy_residual: b.residual,
        complementarity_integral: b.complementarity,
        diss_total: dissipation_total(curve, d)?,
        viscous_diss_total: b.diss_extra,
        max_stationarity_at_nodes: max_stat,
        remainder_integral: b.remainder,
        eta_delta_product: curve.eta.and_then(|eta| trace.config.delta.map(|d| eta * d)),
        inner_tol: trace.config.inner.tol,
    })
}
