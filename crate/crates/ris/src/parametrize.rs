//! Arc-length parametrisation of scheme traces.
//!
//! A trace becomes a piecewise affine curve `s -> (t(s), z(s) [, u(s)])` in
//! which every segment is a pure time update, a pure state update, or (for
//! the local minimisation scheme) a mixed step of both. Zero-length
//! segments are dropped; the remaining segment lengths sum to the arc
//! length `S`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RisError};
use crate::schemes::{RunTrace, SchemeKind, TraceNode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegKind {
    /// Time advances, the state is frozen.
    TimeUpdate,
    /// The state moves at a frozen time.
    StateUpdate,
    /// Time and state move together (local minimisation steps).
    Mixed,
}

impl std::fmt::Display for SegKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SegKind::TimeUpdate => "time",
            SegKind::StateUpdate => "state",
            SegKind::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SegKind {
    type Err = RisError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "time" => SegKind::TimeUpdate,
            "state" => SegKind::StateUpdate,
            "mixed" => SegKind::Mixed,
            other => {
                return Err(RisError::parameter(
                    "segKind",
                    format!("unknown segment kind `{other}`"),
                ))
            }
        })
    }
}

/// Norm in which state-segment lengths are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveMetricKind {
    V,
    Z,
    /// `||u'||_U + ||z'||_V` for coupled runs.
    UPlusV,
}

/// Piecewise affine parametrised curve. Node arrays have length `n+1`,
/// segment arrays length `n`. `seg_lambda` carries the scheme-native
/// multiplier of each segment (ball multiplier for local minimisation,
/// dual distance of the negative force at the right state otherwise; zero
/// on pure time segments).
#[derive(Clone, Debug)]
pub struct ParametrizedCurve {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub z: Vec<DVector<f64>>,
    pub u: Option<Vec<DVector<f64>>>,
    pub seg_kind: Vec<SegKind>,
    pub seg_lambda: Vec<f64>,
    pub metric_kind: CurveMetricKind,
    pub scheme: Option<SchemeKind>,
    /// Effective viscous penalty of the generating run, if it had one.
    pub eta: Option<f64>,
}

/// First and last state visited at a given process time.
#[derive(Clone, Debug)]
pub struct TimeGraphPoint {
    pub t: f64,
    pub z_first: DVector<f64>,
    pub z_last: DVector<f64>,
}

impl ParametrizedCurve {
    pub fn num_nodes(&self) -> usize {
        self.s.len()
    }

    pub fn num_segments(&self) -> usize {
        self.seg_kind.len()
    }

    pub fn arc_length(&self) -> f64 {
        *self.s.last().unwrap_or(&0.0)
    }

    pub fn dim(&self) -> usize {
        self.z.first().map_or(0, |z| z.len())
    }

    pub fn seg_ds(&self, i: usize) -> f64 {
        self.s[i + 1] - self.s[i]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.s.len();
        if n == 0 {
            return Err(RisError::Trace("empty curve".into()));
        }
        if self.t.len() != n || self.z.len() != n {
            return Err(RisError::Trace("node array length mismatch".into()));
        }
        if self.seg_kind.len() + 1 != n || self.seg_lambda.len() + 1 != n {
            return Err(RisError::Trace("segment array length mismatch".into()));
        }
        if let Some(u) = &self.u {
            if u.len() != n {
                return Err(RisError::Trace("u array length mismatch".into()));
            }
        }
        let dim = self.dim();
        for z in &self.z {
            if z.len() != dim {
                return Err(RisError::Trace("inconsistent state dimension".into()));
            }
        }
        for i in 0..n - 1 {
            if !(self.s[i + 1] > self.s[i]) {
                return Err(RisError::Trace(format!(
                    "arc parameter not strictly increasing at index {i}"
                )));
            }
            if self.t[i + 1] < self.t[i] - 1e-12 * (1.0 + self.t[i].abs()) {
                return Err(RisError::Trace(format!(
                    "process time decreases at index {i}"
                )));
            }
        }
        Ok(())
    }

    fn locate(&self, s: f64) -> Result<(usize, f64)> {
        if self.num_segments() == 0 {
            return Err(RisError::Trace("curve has no segments".into()));
        }
        let big_s = self.arc_length();
        let slack = 1e-12 * (1.0 + big_s);
        if s < -slack || s > big_s + slack {
            return Err(RisError::parameter(
                "s",
                format!("{s} outside [0, {big_s}]"),
            ));
        }
        let s = s.clamp(0.0, big_s);
        let i = match self
            .s
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.num_segments().saturating_sub(1)),
            Err(i) => i.saturating_sub(1).min(self.num_segments() - 1),
        };
        let ds = self.seg_ds(i);
        let theta = if ds > 0.0 { (s - self.s[i]) / ds } else { 0.0 };
        Ok((i, theta.clamp(0.0, 1.0)))
    }

    /// Evaluate `(t(s), z(s))` by linear interpolation.
    pub fn eval(&self, s: f64) -> Result<(f64, DVector<f64>)> {
        let (i, th) = self.locate(s)?;
        let t = self.t[i] + th * (self.t[i + 1] - self.t[i]);
        let z = &self.z[i] + (&self.z[i + 1] - &self.z[i]) * th;
        Ok((t, z))
    }

    pub fn eval_u(&self, s: f64) -> Result<Option<DVector<f64>>> {
        let (i, th) = self.locate(s)?;
        Ok(self
            .u
            .as_ref()
            .map(|u| &u[i] + (&u[i + 1] - &u[i]) * th))
    }
}

fn require_kind(trace: &RunTrace, allowed: &[SchemeKind]) -> Result<()> {
    if !allowed.contains(&trace.kind()) {
        return Err(RisError::Kind {
            expected: allowed
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(" or "),
            got: trace.kind().to_string(),
        });
    }
    if trace.nodes.is_empty() {
        return Err(RisError::Trace("empty trace".into()));
    }
    Ok(())
}

struct CurveBuilder {
    s: Vec<f64>,
    t: Vec<f64>,
    z: Vec<DVector<f64>>,
    u: Option<Vec<DVector<f64>>>,
    seg_kind: Vec<SegKind>,
    seg_lambda: Vec<f64>,
}

impl CurveBuilder {
    fn new(node0: &TraceNode, with_u: bool) -> Self {
        CurveBuilder {
            s: vec![0.0],
            t: vec![node0.t],
            z: vec![node0.z.clone()],
            u: if with_u {
                Some(vec![node0.u.clone().expect("coupled trace lacks u")])
            } else {
                None
            },
            seg_kind: vec![],
            seg_lambda: vec![],
        }
    }

    fn push(
        &mut self,
        ds: f64,
        kind: SegKind,
        lambda: f64,
        t: f64,
        z: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) {
        if ds <= 0.0 {
            return;
        }
        self.s.push(self.s.last().unwrap() + ds);
        self.t.push(t);
        self.z.push(z.clone());
        if let Some(us) = &mut self.u {
            us.push(u.expect("coupled segment lacks u").clone());
        }
        self.seg_kind.push(kind);
        self.seg_lambda.push(lambda);
    }

    fn finish(
        self,
        metric_kind: CurveMetricKind,
        scheme: SchemeKind,
        eta: Option<f64>,
    ) -> Result<ParametrizedCurve> {
        let curve = ParametrizedCurve {
            s: self.s,
            t: self.t,
            z: self.z,
            u: self.u,
            seg_kind: self.seg_kind,
            seg_lambda: self.seg_lambda,
            metric_kind,
            scheme: Some(scheme),
            eta,
        };
        curve.validate()?;
        Ok(curve)
    }
}

/// Parametrise a local minimisation trace: each step becomes one segment
/// of length `dt + ||dz||_V` on which time and state move together.
pub fn parametrize_local_min(trace: &RunTrace) -> Result<ParametrizedCurve> {
    require_kind(trace, &[SchemeKind::LocalMin])?;
    let mut b = CurveBuilder::new(&trace.nodes[0], false);
    for pair in trace.nodes.windows(2) {
        let (a, n) = (&pair[0], &pair[1]);
        let dt = n.t - a.t;
        let ds = dt + n.dz_norm_v;
        let kind = if n.dz_norm_v == 0.0 {
            SegKind::TimeUpdate
        } else if dt == 0.0 {
            SegKind::StateUpdate
        } else {
            SegKind::Mixed
        };
        b.push(ds, kind, n.lambda, n.t, &n.z, None);
    }
    b.finish(CurveMetricKind::V, SchemeKind::LocalMin, None)
}

/// Parametrise a uniform-grid trace (relaxed, viscous, visco-energetic or
/// global): each grid step contributes a time segment of length `tau`
/// followed by one state segment per recorded inner increment.
///
/// With `z_norm` set, state-segment lengths are measured in the Z norm the
/// run recorded (the time-regularised parametrisation used for fixed-eta
/// limits); otherwise in the V norm.
pub fn parametrize_relaxed(trace: &RunTrace, z_norm: bool) -> Result<ParametrizedCurve> {
    require_kind(
        trace,
        &[
            SchemeKind::RelaxedLocalMin,
            SchemeKind::Viscous,
            SchemeKind::ViscoEnergetic,
            SchemeKind::GlobalIncremental,
        ],
    )?;
    let mut b = CurveBuilder::new(&trace.nodes[0], false);
    let mut prev_t = trace.nodes[0].t;
    for n in &trace.nodes[1..] {
        if n.i <= 1 {
            let frozen = b.z.last().unwrap().clone();
            b.push(n.t - prev_t, SegKind::TimeUpdate, 0.0, n.t, &frozen, None);
            prev_t = n.t;
        }
        let ds = if z_norm {
            n.dz_norm_z.ok_or_else(|| {
                RisError::parameter("z_parametrization", "trace carries no Z norms")
            })?
        } else {
            n.dz_norm_v
        };
        b.push(ds, SegKind::StateUpdate, n.lambda, n.t, &n.z, None);
    }
    let metric = if z_norm {
        CurveMetricKind::Z
    } else {
        CurveMetricKind::V
    };
    b.finish(metric, trace.kind(), trace.effective_eta())
}

/// Parametrise an alternate minimisation trace: a time segment per grid
/// step, then one joint `(u, z)` segment of length `||du||_U + ||dz||_V`
/// per inner iterate.
pub fn parametrize_alternate(trace: &RunTrace) -> Result<ParametrizedCurve> {
    require_kind(trace, &[SchemeKind::AlternateMin])?;
    let mut b = CurveBuilder::new(&trace.nodes[0], true);
    let mut prev_t = trace.nodes[0].t;
    for n in &trace.nodes[1..] {
        let u = n.u.as_ref().ok_or_else(|| {
            RisError::Trace("alternate trace node lacks u".into())
        })?;
        if n.i <= 1 {
            let frozen_z = b.z.last().unwrap().clone();
            let frozen_u = b.u.as_ref().unwrap().last().unwrap().clone();
            b.push(
                n.t - prev_t,
                SegKind::TimeUpdate,
                0.0,
                n.t,
                &frozen_z,
                Some(&frozen_u),
            );
            prev_t = n.t;
        }
        let ds = n.dz_norm_v + n.du_norm_u.unwrap_or(0.0);
        b.push(ds, SegKind::StateUpdate, n.lambda, n.t, &n.z, Some(u));
    }
    b.finish(
        CurveMetricKind::UPlusV,
        SchemeKind::AlternateMin,
        trace.effective_eta(),
    )
}

/// Recover the (possibly multivalued) time-indexed solution graph: for each
/// requested time, the first and last state the curve visits there.
pub fn reconstruct_time_graph(
    curve: &ParametrizedCurve,
    times: &[f64],
) -> Result<Vec<TimeGraphPoint>> {
    curve.validate()?;
    let t0 = *curve.t.first().unwrap();
    let t_end = *curve.t.last().unwrap();
    let slack = 1e-12 * (1.0 + t_end.abs());
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < t0 - slack || t > t_end + slack {
            return Err(RisError::TimeDomain { t, t_final: t_end });
        }
        let t = t.clamp(t0, t_end);
        let n = curve.num_nodes();
        let first_ge = curve.t.partition_point(|&tc| tc < t);
        let last_le = curve.t.partition_point(|&tc| tc <= t);
        let z_first = if first_ge < n && curve.t[first_ge] == t {
            curve.z[first_ge].clone()
        } else {
            interp_in_segment(curve, first_ge - 1, t)
        };
        let z_last = if last_le > 0 && curve.t[last_le - 1] == t {
            curve.z[last_le - 1].clone()
        } else {
            interp_in_segment(curve, last_le - 1, t)
        };
        out.push(TimeGraphPoint { t, z_first, z_last });
    }
    Ok(out)
}

fn interp_in_segment(curve: &ParametrizedCurve, i: usize, t: f64) -> DVector<f64> {
    let (ta, tb) = (curve.t[i], curve.t[i + 1]);
    let th = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
    &curve.z[i] + (&curve.z[i + 1] - &curve.z[i]) * th.clamp(0.0, 1.0)
}
