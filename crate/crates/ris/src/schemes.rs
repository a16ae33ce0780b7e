//! The six incremental schemes, each driving inner minimisations across the
//! load interval and recording every accepted iterate in a [`RunTrace`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dissipation::Dissipation;
use crate::energy::{CoupledEnergyModel, Energy};
use crate::error::{Result, RisError};
use crate::inner::{
    ball_step, global_step, prox_step, GlobalSearchConfig, InnerSolverConfig,
};
use crate::metric::{Metric, MetricKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Global minimisation of `I(t_k, .) + R(. - z_prev)` on a uniform grid.
    GlobalIncremental,
    /// One viscous prox step per grid time, `eta = mu / tau`.
    Viscous,
    /// One viscous prox step per grid time with the ratio `mu / tau` held
    /// fixed under grid refinement.
    ViscoEnergetic,
    /// Ball-constrained local minimisation with the time update
    /// `t_k = min(t_prev + h - ||dz||_V, T)`.
    LocalMin,
    /// Fixed-time prox iterations repeated until the V-increment drops
    /// below `delta`, then the grid time advances.
    RelaxedLocalMin,
    /// Alternate exact u-solves and z-prox iterations on a coupled model.
    AlternateMin,
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SchemeKind::GlobalIncremental => "global-incremental",
            SchemeKind::Viscous => "viscous",
            SchemeKind::ViscoEnergetic => "visco-energetic",
            SchemeKind::LocalMin => "local-min",
            SchemeKind::RelaxedLocalMin => "relaxed-local-min",
            SchemeKind::AlternateMin => "alternate-min",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = RisError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "global-incremental" | "global" => SchemeKind::GlobalIncremental,
            "viscous" => SchemeKind::Viscous,
            "visco-energetic" => SchemeKind::ViscoEnergetic,
            "local-min" => SchemeKind::LocalMin,
            "relaxed-local-min" | "relaxed" => SchemeKind::RelaxedLocalMin,
            "alternate-min" | "alternate" => SchemeKind::AlternateMin,
            other => {
                return Err(RisError::parameter(
                    "scheme",
                    format!("unknown scheme `{other}`"),
                ))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The run covered the whole load interval.
    ReachedT,
    /// The safety cap (or an inner-solver budget) stopped the run early;
    /// the trace is the valid partial prefix.
    CapHit,
}

/// Parameters of a scheme run. Exactly the fields a scheme consumes may be
/// set; `validate` rejects both missing and extraneous parameters so a
/// config cannot silently carry values that are ignored.
#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Number of uniform grid steps (all schemes except LocalMin).
    pub n_steps: Option<usize>,
    /// Step radius for LocalMin.
    pub h: Option<f64>,
    /// Viscous penalty for RelaxedLocalMin / AlternateMin.
    pub eta: Option<f64>,
    /// Inner stopping threshold on the V-increment.
    pub delta: Option<f64>,
    /// Viscosity `mu` (Viscous) or the fixed ratio `mu/tau` (ViscoEnergetic).
    pub mu: Option<f64>,
    /// Safety cap on inner minimisations; defaults depend on the scheme.
    pub max_outer_iters: Option<usize>,
    /// Measure state-segment arc length in the Z norm (RelaxedLocalMin only).
    pub z_parametrization: bool,
    pub inner: InnerSolverConfig,
    /// Search region for GlobalIncremental.
    pub search: Option<GlobalSearchConfig>,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind) -> Self {
        SchemeConfig {
            kind,
            n_steps: None,
            h: None,
            eta: None,
            delta: None,
            mu: None,
            max_outer_iters: None,
            z_parametrization: false,
            inner: InnerSolverConfig::default(),
            search: None,
        }
    }

    pub fn global_incremental(n_steps: usize) -> Self {
        let mut c = Self::new(SchemeKind::GlobalIncremental);
        c.n_steps = Some(n_steps);
        c
    }

    pub fn viscous(n_steps: usize, mu: f64) -> Self {
        let mut c = Self::new(SchemeKind::Viscous);
        c.n_steps = Some(n_steps);
        c.mu = Some(mu);
        c
    }

    pub fn visco_energetic(n_steps: usize, ratio: f64) -> Self {
        let mut c = Self::new(SchemeKind::ViscoEnergetic);
        c.n_steps = Some(n_steps);
        c.mu = Some(ratio);
        c
    }

    pub fn local_min(h: f64) -> Self {
        let mut c = Self::new(SchemeKind::LocalMin);
        c.h = Some(h);
        c
    }

    pub fn relaxed_local_min(n_steps: usize, eta: f64, delta: f64) -> Self {
        let mut c = Self::new(SchemeKind::RelaxedLocalMin);
        c.n_steps = Some(n_steps);
        c.eta = Some(eta);
        c.delta = Some(delta);
        c
    }

    pub fn alternate_min(n_steps: usize, eta: f64, delta: f64) -> Self {
        let mut c = Self::new(SchemeKind::AlternateMin);
        c.n_steps = Some(n_steps);
        c.eta = Some(eta);
        c.delta = Some(delta);
        c
    }

    pub fn validate(&self) -> Result<()> {
        use SchemeKind::*;
        let require = |name: &'static str, present: bool| -> Result<()> {
            if !present {
                return Err(RisError::parameter(
                    name,
                    format!("required by scheme {}", self.kind),
                ));
            }
            Ok(())
        };
        let forbid = |name: &'static str, absent: bool| -> Result<()> {
            if !absent {
                return Err(RisError::parameter(
                    name,
                    format!("not used by scheme {}", self.kind),
                ));
            }
            Ok(())
        };
        let positive = |name: &'static str, v: Option<f64>| -> Result<()> {
            if let Some(x) = v {
                if !(x.is_finite() && x > 0.0) {
                    return Err(RisError::parameter(name, "must be finite and > 0"));
                }
            }
            Ok(())
        };
        positive("h", self.h)?;
        positive("eta", self.eta)?;
        positive("delta", self.delta)?;
        positive("mu", self.mu)?;
        if let Some(n) = self.n_steps {
            if n == 0 {
                return Err(RisError::parameter("n_steps", "must be >= 1"));
            }
        }
        if !(self.inner.tol.is_finite() && self.inner.tol > 0.0) {
            return Err(RisError::parameter("inner.tol", "must be finite and > 0"));
        }
        match self.kind {
            GlobalIncremental => {
                require("n_steps", self.n_steps.is_some())?;
                forbid("h", self.h.is_none())?;
                forbid("eta", self.eta.is_none())?;
                forbid("delta", self.delta.is_none())?;
                forbid("mu", self.mu.is_none())?;
                forbid("z_parametrization", !self.z_parametrization)?;
            }
            Viscous | ViscoEnergetic => {
                require("n_steps", self.n_steps.is_some())?;
                require("mu", self.mu.is_some())?;
                forbid("h", self.h.is_none())?;
                forbid("eta", self.eta.is_none())?;
                forbid("delta", self.delta.is_none())?;
                forbid("z_parametrization", !self.z_parametrization)?;
                forbid("search", self.search.is_none())?;
            }
            LocalMin => {
                require("h", self.h.is_some())?;
                forbid("n_steps", self.n_steps.is_none())?;
                forbid("eta", self.eta.is_none())?;
                forbid("delta", self.delta.is_none())?;
                forbid("mu", self.mu.is_none())?;
                forbid("z_parametrization", !self.z_parametrization)?;
                forbid("search", self.search.is_none())?;
            }
            RelaxedLocalMin => {
                require("n_steps", self.n_steps.is_some())?;
                require("eta", self.eta.is_some())?;
                require("delta", self.delta.is_some())?;
                forbid("h", self.h.is_none())?;
                forbid("mu", self.mu.is_none())?;
                forbid("search", self.search.is_none())?;
            }
            AlternateMin => {
                require("n_steps", self.n_steps.is_some())?;
                require("eta", self.eta.is_some())?;
                require("delta", self.delta.is_some())?;
                forbid("h", self.h.is_none())?;
                forbid("mu", self.mu.is_none())?;
                forbid("z_parametrization", !self.z_parametrization)?;
                forbid("search", self.search.is_none())?;
            }
        }
        Ok(())
    }

    /// Penalty actually applied per prox step: `eta` for the relaxed and
    /// alternate schemes, `mu/tau` for Viscous, the stored ratio for
    /// ViscoEnergetic, none otherwise.
    pub fn effective_eta(&self, t_final: f64) -> Option<f64> {
        match self.kind {
            SchemeKind::Viscous => {
                let n = self.n_steps? as f64;
                Some(self.mu? * n / t_final)
            }
            SchemeKind::ViscoEnergetic => self.mu,
            SchemeKind::RelaxedLocalMin | SchemeKind::AlternateMin => self.eta,
            _ => None,
        }
    }

    fn cap(&self, t_final: f64, z0_v_norm: f64) -> usize {
        if let Some(c) = self.max_outer_iters {
            return c;
        }
        let cap = match self.kind {
            SchemeKind::GlobalIncremental | SchemeKind::Viscous | SchemeKind::ViscoEnergetic => {
                self.n_steps.unwrap_or(1)
            }
            SchemeKind::RelaxedLocalMin | SchemeKind::AlternateMin => {
                1000 * self.n_steps.unwrap_or(1)
            }
            SchemeKind::LocalMin => {
                let h = self.h.unwrap_or(1.0);
                let time_steps = (t_final / h).ceil() as usize + 1;
                let arc_guess = t_final + 10.0 * (1.0 + z0_v_norm);
                let state_steps = (arc_guess / h).ceil() as usize + 1;
                10 * (time_steps + state_steps)
            }
        };
        cap.min(1_000_000)
    }
}

/// One accepted iterate of a scheme run.
#[derive(Clone, Debug)]
pub struct TraceNode {
    /// Outer step index; 0 is the initial state.
    pub k: usize,
    /// Inner iterate index within step `k` (0 for single-step schemes).
    pub i: usize,
    pub t: f64,
    pub z: DVector<f64>,
    pub u: Option<DVector<f64>>,
    /// Scheme-native multiplier: the ball multiplier for LocalMin, the
    /// dual distance of the negative force from the stable set otherwise.
    pub lambda: f64,
    /// Arc increment `|dt| + ||dz||_V (+ ||du||_U)` from the previous node.
    pub sigma_bar: f64,
    pub inner_iters: usize,
    pub energy: f64,
    /// `R(z - z_prev)`.
    pub diss_increment: f64,
    /// `||dz||_V` from the previous node.
    pub dz_norm_v: f64,
    /// `||dz||_Z` when a Z metric was supplied to the run.
    pub dz_norm_z: Option<f64>,
    /// `||du||_U` for coupled runs.
    pub du_norm_u: Option<f64>,
}

/// Full record of a scheme run.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub nodes: Vec<TraceNode>,
    pub terminated: Termination,
    pub config: SchemeConfig,
    pub t_final: f64,
}

impl RunTrace {
    pub fn kind(&self) -> SchemeKind {
        self.config.kind
    }

    pub fn last_t(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.t)
    }

    /// Total rate-independent dissipation accumulated along the trace.
    pub fn dissipation(&self) -> f64 {
        self.nodes.iter().map(|n| n.diss_increment).sum()
    }

    /// Count of inner minimisations (nodes excluding the initial state).
    pub fn solve_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// Penalty in effect per prox step, if the scheme has one.
    pub fn effective_eta(&self) -> Option<f64> {
        self.config.effective_eta(self.t_final)
    }

    /// Nodes accepted as the state at their grid time: the last inner
    /// iterate of each outer step (every node for single-step schemes).
    pub fn accepted_nodes(&self) -> Vec<&TraceNode> {
        let mut out: Vec<&TraceNode> = Vec::new();
        for node in &self.nodes {
            match out.last() {
                Some(last) if last.k == node.k => *out.last_mut().unwrap() = node,
                _ => out.push(node),
            }
        }
        out
    }
}

fn check_common(
    e: &dyn Energy,
    d: &Dissipation,
    m: Option<&Metric>,
    z0: &DVector<f64>,
    cfg: &SchemeConfig,
    expect: SchemeKind,
) -> Result<()> {
    if cfg.kind != expect {
        return Err(RisError::Kind {
            expected: expect.to_string(),
            got: cfg.kind.to_string(),
        });
    }
    cfg.validate()?;
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
    if z0.len() != n {
        return Err(RisError::Dimension {
            expected: n,
            got: z0.len(),
        });
    }
    Ok(())
}

fn initial_node(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    z0: &DVector<f64>,
    with_z: Option<&Metric>,
    u0: Option<(&CoupledEnergyModel, DVector<f64>)>,
) -> Result<TraceNode> {
    let (energy, lambda, u) = match &u0 {
        Some((ce, u0)) => {
            let xi = -ce.gradient_z(0.0, u0, z0)?;
            (
                ce.value(0.0, u0, z0)?,
                d.dist_to_stable(m, &xi)?,
                Some(u0.clone()),
            )
        }
        None => {
            let xi = -e.gradient(0.0, z0)?;
            (e.value(0.0, z0)?, d.dist_to_stable(m, &xi)?, None)
        }
    };
    Ok(TraceNode {
        k: 0,
        i: 0,
        t: 0.0,
        z: z0.clone(),
        u,
        lambda,
        sigma_bar: 0.0,
        inner_iters: 0,
        energy,
        diss_increment: 0.0,
        dz_norm_v: 0.0,
        dz_norm_z: with_z.map(|_| 0.0),
        du_norm_u: u0.map(|_| 0.0),
    })
}

/// Global incremental scheme on the uniform grid `t_k = k T / N`.
///
/// Every accepted iterate is checked a posteriori against the sampled
/// global stability condition `I(t_k, z_k) <= I(t_k, v) + R(v - z_k)` on a
/// coarse grid over the search box.
pub fn run_global_incremental(
    e: &dyn Energy,
    d: &Dissipation,
    z0: &DVector<f64>,
    cfg: &SchemeConfig,
) -> Result<RunTrace> {
    check_common(e, d, None, z0, cfg, SchemeKind::GlobalIncremental)?;
    let dim = e.dim();
    if dim > 3 {
        return Err(RisError::UnsupportedDimension { max: 3, got: dim });
    }
    let m = Metric::identity(MetricKind::V, dim);
    let t_final = e.t_final();
    let n_steps = cfg.n_steps.unwrap();
    let search = cfg.search.clone().unwrap_or_default();

    let mut nodes = vec![initial_node(e, d, &m, z0, None, None)?];
    let mut terminated = Termination::ReachedT;
    for k in 1..=n_steps {
        let t_k = t_final * (k as f64) / (n_steps as f64);
        let w = nodes.last().unwrap().z.clone();
        let step = match global_step(e, d, t_k, &w, &cfg.inner, &search) {
            Ok(s) => s,
            Err(RisError::NoConvergence { .. }) => {
                terminated = Termination::CapHit;
                break;
            }
            Err(err) => return Err(err),
        };
        sampled_stability_check(e, d, t_k, &step.z, &search, dim)?;
        let dz = &step.z - &w;
        let dz_v = m.norm(&dz)?;
        let xi = -e.gradient(t_k, &step.z)?;
        let prev_t = nodes.last().unwrap().t;
        nodes.push(TraceNode {
            k,
            i: 0,
            t: t_k,
            z: step.z.clone(),
            u: None,
            lambda: d.dist_to_stable(&m, &xi)?,
            sigma_bar: (t_k - prev_t) + dz_v,
            inner_iters: step.inner_iters,
            energy: e.value(t_k, &step.z)?,
            diss_increment: d.eval(&dz)?,
            dz_norm_v: dz_v,
            dz_norm_z: None,
            du_norm_u: None,
        });
    }
    Ok(RunTrace {
        nodes,
        terminated,
        config: cfg.clone(),
        t_final,
    })
}

fn sampled_stability_check(
    e: &dyn Energy,
    d: &Dissipation,
    t: f64,
    z: &DVector<f64>,
    search: &GlobalSearchConfig,
    dim: usize,
) -> Result<()> {
    let lo = search
        .lo
        .clone()
        .unwrap_or_else(|| z.map(|x| x - 10.0));
    let hi = search
        .hi
        .clone()
        .unwrap_or_else(|| z.map(|x| x + 10.0));
    let pts = match dim {
        1 => 201,
        2 => 41,
        _ => 17,
    };
    let base = e.value(t, z)?;
    let tol = 1e-8 * (1.0 + base.abs());
    let total = pts_pow(pts, dim);
    for lin in 0..total {
        let mut rem = lin;
        let mut v = DVector::zeros(dim);
        for axis in (0..dim).rev() {
            let i = rem % pts;
            rem /= pts;
            v[axis] = lo[axis] + (hi[axis] - lo[axis]) * (i as f64) / ((pts - 1) as f64);
        }
        let rhs = e.value(t, &v)? + d.eval(&(&v - z))?;
        if base > rhs + tol {
            return Err(RisError::Numerical(format!(
                "sampled global stability violated at t={t}: {base} > {rhs}"
            )));
        }
    }
    Ok(())
}

fn pts_pow(pts: usize, dim: usize) -> usize {
    pts.pow(dim as u32)
}

/// Viscous scheme (`kind = Viscous` or `ViscoEnergetic`): one prox step per
/// grid time with penalty `mu/tau` (respectively the fixed ratio).
pub fn run_viscous(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    z0: &DVector<f64>,
    cfg: &SchemeConfig,
) -> Result<RunTrace> {
    if cfg.kind != SchemeKind::Viscous && cfg.kind != SchemeKind::ViscoEnergetic {
        return Err(RisError::Kind {
            expected: "viscous or visco-energetic".into(),
            got: cfg.kind.to_string(),
        });
    }
    check_common(e, d, Some(m), z0, cfg, cfg.kind)?;
    let t_final = e.t_final();
    let n_steps = cfg.n_steps.unwrap();
    let eta = cfg.effective_eta(t_final).unwrap();

    let mut nodes = vec![initial_node(e, d, m, z0, None, None)?];
    let mut terminated = Termination::ReachedT;
    for k in 1..=n_steps {
        let t_k = t_final * (k as f64) / (n_steps as f64);
        let w = nodes.last().unwrap().z.clone();
        let step = match prox_step(e, d, m, t_k, &w, eta, &cfg.inner) {
            Ok(s) => s,
            Err(RisError::NoConvergence { .. }) => {
                terminated = Termination::CapHit;
                break;
            }
            Err(err) => return Err(err),
        };
        let dz = &step.z - &w;
        let dz_v = m.norm(&dz)?;
        let xi = -e.gradient(t_k, &step.z)?;
        let prev_t = nodes.last().unwrap().t;
        nodes.push(TraceNode {
            k,
            i: 0,
            t: t_k,
            z: step.z.clone(),
            u: None,
            lambda: d.dist_to_stable(m, &xi)?,
            sigma_bar: (t_k - prev_t) + dz_v,
            inner_iters: step.inner_iters,
            energy: e.value(t_k, &step.z)?,
            diss_increment: d.eval(&dz)?,
            dz_norm_v: dz_v,
            dz_norm_z: None,
            du_norm_u: None,
        });
    }
    Ok(RunTrace {
        nodes,
        terminated,
        config: cfg.clone(),
        t_final,
    })
}

/// Local minimisation scheme: ball steps of radius `h` at the previous
/// time, followed by the time update `t_k = min(t_prev + h - ||dz||_V, T)`.
pub fn run_local_min(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    z0: &DVector<f64>,
    cfg: &SchemeConfig,
) -> Result<RunTrace> {
    check_common(e, d, Some(m), z0, cfg, SchemeKind::LocalMin)?;
    let t_final = e.t_final();
    let h = cfg.h.unwrap();
    let cap = cfg.cap(t_final, m.norm(z0)?);

    let mut nodes = vec![initial_node(e, d, m, z0, None, None)?];
    let mut terminated = Termination::CapHit;
    let mut k = 0usize;
    while k < cap {
        k += 1;
        let prev = nodes.last().unwrap();
        let (t_prev, w) = (prev.t, prev.z.clone());
        let step = match ball_step(e, d, m, t_prev, &w, h, &cfg.inner) {
            Ok(s) => s,
            Err(RisError::NoConvergence { .. }) => break,
            Err(err) => return Err(err),
        };
        let dz = &step.z - &w;
        let dz_v = m.norm(&dz)?;
        let t_k = (t_prev + (h - dz_v).max(0.0)).min(t_final);
        nodes.push(TraceNode {
            k,
            i: 0,
            t: t_k,
            z: step.z.clone(),
            u: None,
            lambda: step.lambda,
            sigma_bar: (t_k - t_prev) + dz_v,
            inner_iters: step.inner_iters,
            energy: e.value(t_k, &step.z)?,
            diss_increment: d.eval(&dz)?,
            dz_norm_v: dz_v,
            dz_norm_z: None,
            du_norm_u: None,
        });
        if t_k >= t_final {
            terminated = Termination::ReachedT;
            break;
        }
    }
    Ok(RunTrace {
        nodes,
        terminated,
        config: cfg.clone(),
        t_final,
    })
}

/// Relaxed local minimisation: at each grid time, prox steps repeat until
/// the V-increment drops to `delta`; every inner iterate is recorded.
///
/// `m_z` optionally supplies the Z norm used for state-based arc length;
/// when absent the Z norm is taken to coincide with the V norm.
pub fn run_relaxed_local_min(
    e: &dyn Energy,
    d: &Dissipation,
    m: &Metric,
    m_z: Option<&Metric>,
    z0: &DVector<f64>,
    cfg: &SchemeConfig,
) -> Result<RunTrace> {
    check_common(e, d, Some(m), z0, cfg, SchemeKind::RelaxedLocalMin)?;
    if let Some(mz) = m_z {
        if mz.dim() != e.dim() {
            return Err(RisError::Dimension {
                expected: e.dim(),
                got: mz.dim(),
            });
        }
    }
    let t_final = e.t_final();
    let n_steps = cfg.n_steps.unwrap();
    let eta = cfg.eta.unwrap();
    let delta = cfg.delta.unwrap();
    let cap = cfg.cap(t_final, m.norm(z0)?);

    let mut nodes = vec![initial_node(e, d, m, z0, m_z, None)?];
    let mut terminated = Termination::ReachedT;
    let mut solves = 0usize;
    'outer: for k in 1..=n_steps {
        let t_k = t_final * (k as f64) / (n_steps as f64);
        let mut w = nodes.last().unwrap().z.clone();
        let mut i = 0usize;
        loop {
            if solves >= cap {
                terminated = Termination::CapHit;
                break 'outer;
            }
            i += 1;
            solves += 1;
            let step = match prox_step(e, d, m, t_k, &w, eta, &cfg.inner) {
                Ok(s) => s,
                Err(RisError::NoConvergence { .. }) => {
                    terminated = Termination::CapHit;
                    break 'outer;
                }
                Err(err) => return Err(err),
            };
            let dz = &step.z - &w;
            let dz_v = m.norm(&dz)?;
            let prev_t = nodes.last().unwrap().t;
            let xi = -e.gradient(t_k, &step.z)?;
            nodes.push(TraceNode {
                k,
                i,
                t: t_k,
                z: step.z.clone(),
                u: None,
                lambda: d.dist_to_stable(m, &xi)?,
                sigma_bar: (t_k - prev_t) + dz_v,
                inner_iters: step.inner_iters,
                energy: e.value(t_k, &step.z)?,
                diss_increment: d.eval(&dz)?,
                dz_norm_v: dz_v,
                dz_norm_z: match m_z {
                    Some(mz) => Some(mz.norm(&dz)?),
                    None => None,
                },
                du_norm_u: None,
            });
            if dz_v <= delta {
                break;
            }
            w = step.z;
        }
    }
    Ok(RunTrace {
        nodes,
        terminated,
        config: cfg.clone(),
        t_final,
    })
}

/// Alternate minimisation on a coupled model: exact `u`-solve
/// (`C u = ell_u(t_k) - B z`) followed by a z-prox step, repeated until the
/// z-increment drops to `delta`. The initial `u0` solves `D_u E(0,.,z0)=0`.
pub fn run_alternate_min(
    ce: &CoupledEnergyModel,
    d: &Dissipation,
    m_v: &Metric,
    m_u: &Metric,
    z0: &DVector<f64>,
    cfg: &SchemeConfig,
) -> Result<RunTrace> {
    if cfg.kind != SchemeKind::AlternateMin {
        return Err(RisError::Kind {
            expected: SchemeKind::AlternateMin.to_string(),
            got: cfg.kind.to_string(),
        });
    }
    cfg.validate()?;
    if d.dim() != ce.dim_z() || m_v.dim() != ce.dim_z() {
        return Err(RisError::Dimension {
            expected: ce.dim_z(),
            got: d.dim().max(m_v.dim()),
        });
    }
    if m_u.dim() != ce.dim_u() {
        return Err(RisError::Dimension {
            expected: ce.dim_u(),
            got: m_u.dim(),
        });
    }
    if z0.len() != ce.dim_z() {
        return Err(RisError::Dimension {
            expected: ce.dim_z(),
            got: z0.len(),
        });
    }
    let t_final = ce.t_final();
    let n_steps = cfg.n_steps.unwrap();
    let eta = cfg.eta.unwrap();
    let delta = cfg.delta.unwrap();
    let cap = cfg.cap(t_final, m_v.norm(z0)?);

    let u0 = ce.solve_u(0.0, z0)?;
    let dummy = ce.frozen_u(&u0);
    let mut nodes = vec![initial_node(
        &dummy,
        d,
        m_v,
        z0,
        None,
        Some((ce, u0.clone())),
    )?];
    let mut terminated = Termination::ReachedT;
    let mut solves = 0usize;
    'outer: for k in 1..=n_steps {
        let t_k = t_final * (k as f64) / (n_steps as f64);
        let mut w = nodes.last().unwrap().z.clone();
        let mut i = 0usize;
        loop {
            if solves >= cap {
                terminated = Termination::CapHit;
                break 'outer;
            }
            i += 1;
            solves += 1;
            let u_i = ce.solve_u(t_k, &w)?;
            let frozen = ce.frozen_u(&u_i);
            let step = match prox_step(&frozen, d, m_v, t_k, &w, eta, &cfg.inner) {
                Ok(s) => s,
                Err(RisError::NoConvergence { .. }) => {
                    terminated = Termination::CapHit;
                    break 'outer;
                }
                Err(err) => return Err(err),
            };
            let dz = &step.z - &w;
            let dz_v = m_v.norm(&dz)?;
            let prev = nodes.last().unwrap();
            let du = &u_i - prev.u.as_ref().unwrap();
            let du_u = m_u.norm(&du)?;
            let prev_t = prev.t;
            let xi = -ce.gradient_z(t_k, &u_i, &step.z)?;
            nodes.push(TraceNode {
                k,
                i,
                t: t_k,
                z: step.z.clone(),
                u: Some(u_i.clone()),
                lambda: d.dist_to_stable(m_v, &xi)?,
                sigma_bar: (t_k - prev_t) + dz_v + du_u,
                inner_iters: step.inner_iters,
                energy: ce.value(t_k, &u_i, &step.z)?,
                diss_increment: d.eval(&dz)?,
                dz_norm_v: dz_v,
                dz_norm_z: None,
                du_norm_u: Some(du_u),
            });
            if dz_v <= delta {
                break;
            }
            w = step.z;
        }
    }
    Ok(RunTrace {
        nodes,
        terminated,
        config: cfg.clone(),
        t_final,
    })
}

/// Trapezoidal accumulation of the load work `int dI/dt (., z) dt` along a
/// trace, holding `z` at its value before each time advance.
pub fn load_work(e: &dyn Energy, trace: &RunTrace) -> Result<f64> {
    let mut acc = 0.0;
    for pair in trace.nodes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.t - a.t;
        if dt > 0.0 {
            acc += 0.5
                * dt
                * (e.time_derivative(a.t, &a.z)? + e.time_derivative(b.t, &a.z)?);
        }
    }
    Ok(acc)
}
