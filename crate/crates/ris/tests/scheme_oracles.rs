//! Frozen reference values for the built-in problems. Step counts and jump
//! times were cross-checked against an independent high-precision
//! simulation of the same iterations (exact 1-d Newton inner solves), and
//! the jump locations against the fold of the creep constraint, computed
//! here by bisection.

use nalgebra::DVector;
use ris::metric::{Metric, MetricKind};
use ris::problems::{exact_solutions_51, make_toy51, make_toy52};
use ris::schemes::{
    run_global_incremental, run_local_min, run_relaxed_local_min, run_viscous, SchemeConfig,
    SchemeKind, Termination,
};
use std::collections::BTreeMap;

/// Fold of the quasistatic creep branch of `toy52`: along the constraint
/// `10 z + t^2 z / (0.1 + z^2)^2 = 10`, the time maximum over the stable
/// branch sits where `4 z^3 - 3 z^2 + 0.1 = 0` (upper root). Until this
/// time a locally stable state exists; all local schemes must hold on to
/// the branch until then and jump right after.
fn toy52_fold_time() -> f64 {
    let p = |z: f64| 4.0 * z.powi(3) - 3.0 * z * z + 0.1;
    let (mut lo, mut hi) = (0.5, 0.9);
    assert!(p(lo) < 0.0 && p(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    let q = 0.1 + z * z;
    ((10.0 - 10.0 * z) * q * q / z).sqrt()
}

fn per_k_counts(trace: &ris::RunTrace) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for n in &trace.nodes {
        if n.k > 0 {
            *counts.entry(n.k).or_insert(0) += 1;
        }
    }
    counts
}

fn biggest_step(trace: &ris::RunTrace) -> (f64, f64, usize) {
    let mut best = (0.0, 0.0, 0);
    for n in &trace.nodes {
        if n.k > 0 && n.dz_norm_v > best.0 {
            best = (n.dz_norm_v, n.t, n.k);
        }
    }
    best
}

#[test]
fn fold_time_value() {
    let t = toy52_fold_time();
    assert!((t - 1.2214).abs() < 5e-4, "fold at t = {t}");
}

#[test]
fn relaxed_toy52_step_counts() {
    let (e, d, z0, _) = make_toy52();
    let m = Metric::identity(MetricKind::V, 1);
    let cfg = SchemeConfig::relaxed_local_min(100, 100.0, 1e-3);
    let trace = run_relaxed_local_min(&e, &d, &m, None, &z0, &cfg).unwrap();
    assert_eq!(trace.terminated, Termination::ReachedT);

    let counts = per_k_counts(&trace);
    let total: usize = counts.values().sum();
    let (&k_max, &c_max) = counts.iter().max_by_key(|(_, c)| **c).unwrap();

    assert_eq!(total, 395);
    assert_eq!(c_max, 127);
    assert_eq!(k_max, 83);

    // the burst of inner iterations sits right past the fold: the stopping
    // rule tolerates an excess force up to eta * delta, which extends the
    // branch by (eta * delta) / dG/dt ~ 0.02 beyond the fold time
    let t_burst = 1.5 * (k_max as f64) / 100.0;
    let fold = toy52_fold_time();
    assert!(t_burst > fold && t_burst < fold + 0.05);
}

#[test]
fn local_min_toy52_step_counts_and_stall() {
    let (e, d, z0, t_final) = make_toy52();
    let m = Metric::identity(MetricKind::V, 1);
    let fold = toy52_fold_time();

    for (div, expect) in [(90.0, 148usize), (180.0, 295), (360.0, 590)] {
        let h = t_final / div;
        let cfg = SchemeConfig::local_min(h);
        let trace = run_local_min(&e, &d, &m, &z0, &cfg).unwrap();
        assert_eq!(trace.terminated, Termination::ReachedT);
        let steps = trace.nodes.last().unwrap().k;
        assert_eq!(steps, expect, "h = T/{div}");

        // while the state jumps, steps exhaust the ball radius and the
        // clock freezes at (up to one step before) the fold time
        let (dz, t_stall, _) = biggest_step(&trace);
        assert!((dz - h).abs() <= 1e-9, "jump steps move the full radius");
        assert!(
            (t_stall - fold).abs() <= 2.0 * h + 2e-3,
            "stall at {t_stall}, fold at {fold}, h = {h}"
        );
    }
}

#[test]
fn visco_energetic_jump_times() {
    let (e, d, z0, t_final) = make_toy52();
    let m = Metric::identity(MetricKind::V, 1);
    // frozen from the independent simulation; the largest step of two
    // near-tied candidates may differ by one grid cell, hence the 2.5*tau
    // tolerance
    let table = [
        (0.5, 100, 1.2300),
        (0.5, 500, 1.2240),
        (0.5, 1500, 1.2230),
        (0.5, 3000, 1.2225),
        (10.0, 100, 1.3050),
        (10.0, 500, 1.2570),
        (10.0, 1500, 1.2400),
        (10.0, 3000, 1.2335),
    ];
    let fold = toy52_fold_time();
    for (ratio, n, t_expect) in table {
        let cfg = SchemeConfig::visco_energetic(n, ratio);
        let trace = run_viscous(&e, &d, &m, &z0, &cfg).unwrap();
        assert_eq!(trace.terminated, Termination::ReachedT);
        let tau = t_final / (n as f64);
        let (_, t_jump, _) = biggest_step(&trace);
        assert!(
            (t_jump - t_expect).abs() <= 2.5 * tau,
            "ratio {ratio}, N {n}: jump at {t_jump}, expected {t_expect}"
        );
        // seeded single-step viscosity delays the fold escape, never
        // anticipates it
        assert!(t_jump > fold - tau);
    }
}

#[test]
fn viscous_mu_rule_semantics() {
    // the prox penalty is mu/tau: a viscous run at mu and a visco-energetic
    // run at ratio mu/tau produce identical iterates
    let (e, d, z0, t_final) = make_toy52();
    let m = Metric::identity(MetricKind::V, 1);
    let n = 40;
    let tau = t_final / n as f64;
    let mu = 0.1 * tau.sqrt();

    let cfg_v = SchemeConfig::viscous(n, mu);
    assert!((cfg_v.effective_eta(t_final).unwrap() - mu / tau).abs() < 1e-15);
    let cfg_ve = SchemeConfig::visco_energetic(n, mu / tau);
    assert!((cfg_ve.effective_eta(t_final).unwrap() - mu / tau).abs() < 1e-15);

    let tr_v = run_viscous(&e, &d, &m, &z0, &cfg_v).unwrap();
    let tr_ve = run_viscous(&e, &d, &m, &z0, &cfg_ve).unwrap();
    for (a, b) in tr_v.nodes.iter().zip(&tr_ve.nodes) {
        assert!((&a.z - &b.z).norm() <= 1e-12);
    }
}

#[test]
fn global_jumps_at_once_and_relaxed_holds_still() {
    for kappa in [0.5, 1.0, 2.0] {
        let (e, d, z0) = make_toy51(kappa).unwrap();
        let cfg = SchemeConfig::global_incremental(4);
        let trace = run_global_incremental(&e, &d, &z0, &cfg).unwrap();
        let first = trace.nodes.iter().find(|n| n.k == 1).unwrap();
        assert!(
            (first.z[0] - 4.0).abs() <= 1e-5,
            "kappa {kappa}: global first step lands at {}",
            first.z[0]
        );
    }

    let (e, d, z0) = make_toy51(1.0).unwrap();
    let m = Metric::identity(MetricKind::V, 1);
    for eta in [1.5, 2.0, 10.0] {
        let cfg = SchemeConfig::relaxed_local_min(10, eta, 1e-3);
        let trace = run_relaxed_local_min(&e, &d, &m, None, &z0, &cfg).unwrap();
        for n in &trace.nodes {
            assert!((n.z[0] - 2.0).abs() <= 1e-8);
        }
    }
}

#[test]
fn exact_solution_family_evaluation() {
    let curve = exact_solutions_51(1.0, 0.5).unwrap();
    // jump phase covers s in [0.5, 2.5]; beyond it the state rests at 4
    let (t, z) = curve.eval(3.0).unwrap();
    assert!((t - 1.0).abs() < 1e-12);
    assert!((z[0] - 4.0).abs() < 1e-12);
    let (t, z) = curve.eval(1.5).unwrap();
    assert!((t - 0.5).abs() < 1e-12);
    assert!((z[0] - 3.0).abs() < 1e-12);
}

#[test]
fn cap_hit_returns_valid_prefix() {
    let (e, d, z0, _) = make_toy52();
    let m = Metric::identity(MetricKind::V, 1);
    let mut cfg = SchemeConfig::local_min(1.5 / 90.0);
    cfg.max_outer_iters = Some(40);
    let trace = run_local_min(&e, &d, &m, &z0, &cfg).unwrap();
    assert_eq!(trace.terminated, Termination::CapHit);
    assert_eq!(trace.nodes.last().unwrap().k, 40);
    assert!(trace.last_t() < 1.5);
    // prefix still parametrizes and validates
    let curve = ris::parametrize::parametrize_local_min(&trace).unwrap();
    curve.validate().unwrap();
}

#[test]
fn global_tie_breaks_to_smallest_grid_index() {
    use ris::inner::{global_step, GlobalSearchConfig, InnerSolverConfig};
    use ris::Energy;

    // symmetric double well: minima at -1 and +1 are exactly tied at t=0
    let e = ris::energy::EnergyModel::custom(
        1,
        1.0,
        |_t, z: &DVector<f64>| 0.25 * (z[0] * z[0] - 1.0).powi(2),
        |_t, z: &DVector<f64>| DVector::from_vec(vec![(z[0] * z[0] - 1.0) * z[0]]),
        |_t, _z| 0.0,
    )
    .unwrap();
    let d = ris::Dissipation::scalar(1e-9).unwrap();
    let w = DVector::from_vec(vec![0.0]);
    let search = GlobalSearchConfig {
        lo: Some(DVector::from_vec(vec![-2.0])),
        hi: Some(DVector::from_vec(vec![2.0])),
        points_per_axis: Some(2001),
        top_cells: 5,
    };
    let s = global_step(&e, &d, 0.0, &w, &InnerSolverConfig::default(), &search).unwrap();
    assert!(
        s.z[0] < 0.0,
        "scan ties resolve to the smaller index, got {}",
        s.z[0]
    );
    assert!((e.value(0.0, &s.z).unwrap()).abs() < 1e-10);
}

#[test]
fn scheme_kind_strings_round_trip() {
    for kind in [
        SchemeKind::GlobalIncremental,
        SchemeKind::Viscous,
        SchemeKind::ViscoEnergetic,
        SchemeKind::LocalMin,
        SchemeKind::RelaxedLocalMin,
        SchemeKind::AlternateMin,
    ] {
        let s = kind.to_string();
        assert_eq!(s.parse::<SchemeKind>().unwrap(), kind);
    }
}
