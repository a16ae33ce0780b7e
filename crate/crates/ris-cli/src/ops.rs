//! Command bodies: execute runs, write artifacts atomically, verify
//! stored runs and assemble sweep summaries.

use crate::config::{
    build_scheme, check_mu_exclusive, parse_problem, CliError, CliResult, ProblemInstance,
    RunRecord, RunSpec,
};
use ris::diagnostics::{
    classify_bv_solution, diagnostics_report, BvClassification, DiagnosticsReport,
};
use ris::export::{read_curve_csv, read_trace_csv, write_curve_csv, write_trace_csv};
use ris::parametrize::{
    parametrize_alternate, parametrize_local_min, parametrize_relaxed, CurveMetricKind,
};
use ris::schemes::{
    run_alternate_min, run_global_incremental, run_local_min, run_relaxed_local_min, run_viscous,
};
use ris::{Metric, MetricKind, ParametrizedCurve, RunTrace, SchemeKind, Termination};
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct RunArtifacts {
    pub trace: RunTrace,
    pub curve: ParametrizedCurve,
    pub report: DiagnosticsReport,
}

/// Output root: `--out` flag, else `RIS_OUTPUT_DIR`, else the current
/// directory.
pub fn resolve_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("RIS_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Run one spec: instantiate the problem, validate the scheme, solve,
/// parametrize and compute diagnostics. Returns the artifacts and the
/// resolved spec (canonical ids, rules evaluated) for `run.json`.
pub fn execute(spec: &RunSpec) -> CliResult<(RunArtifacts, RunSpec)> {
    let problem_id = spec
        .problem
        .as_deref()
        .ok_or_else(|| CliError::new("missing parameter problem"))?;
    let (inst, canonical) = parse_problem(problem_id)?;
    let cfg = build_scheme(spec, inst.t_final())?;
    let kind = cfg.kind;
    let dim = inst.dim_z();
    let m_v = Metric::identity(MetricKind::V, dim);
    let d = inst.dissipation();

    let trace = match (&inst, kind) {
        (ProblemInstance::Coupled { ce, d, z0 }, SchemeKind::AlternateMin) => {
            let m_u = Metric::identity(MetricKind::U, ce.dim_u());
            run_alternate_min(ce, d, &m_v, &m_u, z0, &cfg)?
        }
        (ProblemInstance::Coupled { .. }, other) => {
            return Err(CliError::new(format!(
                "problem {canonical} is coupled and runs with scheme alternate-min, not {other}"
            )))
        }
        (ProblemInstance::Plain { .. }, SchemeKind::AlternateMin) => {
            return Err(CliError::new(format!(
                "scheme alternate-min needs a coupled problem; {canonical} is not"
            )))
        }
        (ProblemInstance::Plain { e, d, z0 }, SchemeKind::GlobalIncremental) => {
            run_global_incremental(e, d, z0, &cfg)?
        }
        (ProblemInstance::Plain { e, d, z0 }, SchemeKind::Viscous | SchemeKind::ViscoEnergetic) => {
            run_viscous(e, d, &m_v, z0, &cfg)?
        }
        (ProblemInstance::Plain { e, d, z0 }, SchemeKind::LocalMin) => {
            run_local_min(e, d, &m_v, z0, &cfg)?
        }
        (ProblemInstance::Plain { e, d, z0 }, SchemeKind::RelaxedLocalMin) => {
            let m_z = Metric::identity(MetricKind::Z, dim);
            run_relaxed_local_min(e, d, &m_v, Some(&m_z), z0, &cfg)?
        }
    };

    let curve = match kind {
        SchemeKind::LocalMin => parametrize_local_min(&trace)?,
        SchemeKind::AlternateMin => parametrize_alternate(&trace)?,
        SchemeKind::RelaxedLocalMin => parametrize_relaxed(&trace, cfg.z_parametrization)?,
        _ => parametrize_relaxed(&trace, false)?,
    };
    let report = diagnostics_report(&trace, &curve, inst.model(), d, &m_v)?;

    let resolved = RunSpec {
        problem: Some(canonical),
        scheme: Some(kind.to_string()),
        n: cfg.n_steps,
        h: cfg.h,
        eta: cfg.eta,
        delta: cfg.delta,
        mu: (kind == SchemeKind::Viscous).then_some(cfg.mu).flatten(),
        mu_rule: spec.mu_rule.clone(),
        ratio: (kind == SchemeKind::ViscoEnergetic).then_some(cfg.mu).flatten(),
        max_outer_iters: cfg.max_outer_iters,
        z_parametrization: cfg.z_parametrization.then_some(true),
        formats: spec.formats.clone(),
        label: spec.label.clone(),
    };
    Ok((
        RunArtifacts {
            trace,
            curve,
            report,
        },
        resolved,
    ))
}

struct Formats {
    csv: bool,
    json: bool,
}

fn parse_formats(s: Option<&str>) -> CliResult<Formats> {
    let Some(s) = s else {
        return Ok(Formats { csv: true, json: true });
    };
    let mut out = Formats { csv: false, json: false };
    for part in s.split(',') {
        match part.trim() {
            "csv" => out.csv = true,
            "json" => out.json = true,
            other => return Err(CliError::new(format!("unknown format '{other}'"))),
        }
    }
    Ok(out)
}

/// Write through a temp file in the same directory, then rename into
/// place, so concurrent sweep rows and interrupted runs never leave a
/// half-written artifact behind.
fn write_atomic<F>(dir: &Path, name: &str, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> CliResult<()>,
{
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(dir.join(name))
        .map_err(|e| CliError::new(format!("write {name}: {e}")))?;
    Ok(())
}

fn json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_artifacts(dir: &Path, resolved: &RunSpec, art: &RunArtifacts) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let formats = parse_formats(resolved.formats.as_deref())?;
    if formats.csv {
        write_atomic(dir, "trace.csv", |w| Ok(write_trace_csv(w, &art.trace)?))?;
        write_atomic(dir, "curve.csv", |w| Ok(write_curve_csv(w, &art.curve)?))?;
    }
    if formats.json {
        write_atomic(dir, "diagnostics.json", |w| json_line(w, &art.report))?;
    }
    let record = RunRecord {
        spec: resolved.clone(),
        terminated: Some(art.trace.terminated),
    };
    write_atomic(dir, "run.json", |w| json_line(w, &record))
}

pub fn termination_word(t: Termination) -> &'static str {
    match t {
        Termination::ReachedT => "reached final time",
        Termination::CapHit => "stopped at the safety cap",
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct VerifyOutput {
    diagnostics_match: bool,
    max_difference: f64,
    is_parametrized_solution: bool,
    worst_violation: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ClassifyOutput {
    is_parametrized_solution: bool,
    worst_violation: f64,
}

fn open(dir: &Path, name: &str) -> CliResult<BufReader<File>> {
    File::open(dir.join(name))
        .map(BufReader::new)
        .map_err(|e| CliError::new(format!("missing or unreadable {name}: {e}")))
}

fn classify(
    curve: &ParametrizedCurve,
    inst: &ProblemInstance,
    m_v: &Metric,
) -> CliResult<BvClassification> {
    Ok(classify_bv_solution(
        curve,
        inst.model(),
        inst.dissipation(),
        m_v,
        inst.z0(),
        1e-8,
    )?)
}

/// Recompute every diagnostic from `trace.csv` and `curve.csv` alone and
/// compare with the stored `diagnostics.json` at 1e-12. The stored energy
/// column is checked against the model the same way. Exit code 3 on any
/// disagreement, 1 on missing or corrupt files.
pub fn cmd_verify(dir: &Path) -> CliResult<u8> {
    let record: RunRecord = serde_json::from_reader(open(dir, "run.json")?)
        .map_err(|e| CliError::new(format!("corrupt run.json: {e}")))?;
    let spec = record.spec;
    let problem_id = spec
        .problem
        .as_deref()
        .ok_or_else(|| CliError::new("run.json: missing problem id"))?;
    let (inst, _) = parse_problem(problem_id)?;
    let m_v = Metric::identity(MetricKind::V, inst.dim_z());

    if spec.scheme.is_none() {
        let curve = read_curve_csv(open(dir, "curve.csv")?, CurveMetricKind::V, None, None)
            .map_err(|e| CliError::new(format!("corrupt curve.csv: {e}")))?;
        let cls = classify(&curve, &inst, &m_v)?;
        json_line(
            &mut std::io::stdout(),
            &ClassifyOutput {
                is_parametrized_solution: cls.is_parametrized_solution,
                worst_violation: cls.worst_violation,
            },
        )?;
        return Ok(0);
    }

    let cfg = build_scheme(&spec, inst.t_final())?;
    let terminated = record
        .terminated
        .ok_or_else(|| CliError::new("run.json: missing terminated field"))?;
    let m_z = (cfg.kind == SchemeKind::RelaxedLocalMin)
        .then(|| Metric::identity(MetricKind::Z, inst.dim_z()));
    let m_u = match &inst {
        ProblemInstance::Coupled { ce, .. } => Some(Metric::identity(MetricKind::U, ce.dim_u())),
        ProblemInstance::Plain { .. } => None,
    };
    let trace = read_trace_csv(
        open(dir, "trace.csv")?,
        cfg.clone(),
        inst.t_final(),
        terminated,
        inst.dissipation(),
        &m_v,
        m_z.as_ref(),
        m_u.as_ref(),
    )
    .map_err(|e| CliError::new(format!("corrupt trace.csv: {e}")))?;

    let metric_kind = match cfg.kind {
        SchemeKind::AlternateMin => CurveMetricKind::UPlusV,
        SchemeKind::RelaxedLocalMin if cfg.z_parametrization => CurveMetricKind::Z,
        _ => CurveMetricKind::V,
    };
    let curve = read_curve_csv(
        open(dir, "curve.csv")?,
        metric_kind,
        Some(cfg.kind),
        cfg.effective_eta(inst.t_final()),
    )
    .map_err(|e| CliError::new(format!("corrupt curve.csv: {e}")))?;
    let stored: DiagnosticsReport = serde_json::from_reader(open(dir, "diagnostics.json")?)
        .map_err(|e| CliError::new(format!("corrupt diagnostics.json: {e}")))?;

    let model = inst.model();
    for node in &trace.nodes {
        let expected = match model {
            ris::diagnostics::ModelRef::Plain(e) => e.value(node.t, &node.z)?,
            ris::diagnostics::ModelRef::Coupled(ce) => {
                let u = node.u.as_ref().ok_or_else(|| {
                    CliError::new("corrupt trace.csv: coupled trace lacks u columns")
                })?;
                ce.value(node.t, u, &node.z)?
            }
        };
        if (node.energy - expected).abs() > 1e-12 * (1.0 + expected.abs()) {
            return Err(CliError::mismatch(format!(
                "diagnostics mismatch: energy column at node k={} i={} stores {:.17e}, model gives {:.17e}",
                node.k, node.i, node.energy, expected
            )));
        }
    }

    let recomputed = diagnostics_report(&trace, &curve, model, inst.dissipation(), &m_v)?;
    let pairs = [
        ("energyResidual", stored.energy_residual, recomputed.energy_residual),
        (
            "complementarityIntegral",
            stored.complementarity_integral,
            recomputed.complementarity_integral,
        ),
        ("dissTotal", stored.diss_total, recomputed.diss_total),
        (
            "viscousDissTotal",
            stored.viscous_diss_total,
            recomputed.viscous_diss_total,
        ),
        (
            "maxStationarityAtNodes",
            stored.max_stationarity_at_nodes,
            recomputed.max_stationarity_at_nodes,
        ),
        (
            "remainderIntegral",
            stored.remainder_integral,
            recomputed.remainder_integral,
        ),
        (
            "etaDeltaProduct",
            stored.eta_delta_product.unwrap_or(f64::NAN),
            recomputed.eta_delta_product.unwrap_or(f64::NAN),
        ),
        ("innerTol", stored.inner_tol, recomputed.inner_tol),
    ];
    let mut max_diff: f64 = 0.0;
    for (name, a, b) in pairs {
        if a.is_nan() && b.is_nan() {
            continue;
        }
        let diff = (a - b).abs();
        if !(diff <= 1e-12) {
            return Err(CliError::mismatch(format!(
                "diagnostics mismatch: {name} stores {a:.17e}, recomputed {b:.17e}"
            )));
        }
        max_diff = max_diff.max(diff);
    }

    let cls = classify(&curve, &inst, &m_v)?;
    json_line(
        &mut std::io::stdout(),
        &VerifyOutput {
            diagnostics_match: true,
            max_difference: max_diff,
            is_parametrized_solution: cls.is_parametrized_solution,
            worst_violation: cls.worst_violation,
        },
    )?;
    Ok(0)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Compact `key=value` rendering of a spec for the sweep summary.
pub fn spec_params_string(s: &RunSpec) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            parts.push(format!("{k}={v}"));
        }
    };
    push("problem", s.problem.clone());
    push("scheme", s.scheme.clone());
    push("n", s.n.map(|v| v.to_string()));
    push("h", s.h.map(|v| v.to_string()));
    push("eta", s.eta.map(|v| v.to_string()));
    push("delta", s.delta.map(|v| v.to_string()));
    push("mu", s.mu.map(|v| v.to_string()));
    push("muRule", s.mu_rule.clone());
    push("ratio", s.ratio.map(|v| v.to_string()));
    push("maxOuterIters", s.max_outer_iters.map(|v| v.to_string()));
    push("zParametrization", s.z_parametrization.map(|v| v.to_string()));
    parts.join(" ")
}

pub struct RowOutcome {
    pub dir_name: String,
    pub parameters: String,
    pub stats: Option<RowStats>,
    pub status: String,
}

pub struct RowStats {
    pub s: f64,
    pub diss_total: f64,
    pub energy_residual: f64,
    pub complementarity_integral: f64,
    pub max_stationarity: f64,
    pub steps: usize,
}

/// Run one sweep row into its own subdirectory. Errors land in the
/// outcome, not in the exit path, so one bad row never stops the rest.
pub fn run_sweep_row(root: &Path, index: usize, row: &RunSpec) -> RowOutcome {
    let dir_name = row
        .label
        .clone()
        .unwrap_or_else(|| format!("row-{index:02}"));
    let run = || -> CliResult<(RowStats, String, String)> {
        check_mu_exclusive(row)?;
        let (art, resolved) = execute(row)?;
        write_artifacts(&root.join(&dir_name), &resolved, &art)?;
        let stats = RowStats {
            s: art.curve.arc_length(),
            diss_total: art.report.diss_total,
            energy_residual: art.report.energy_residual,
            complementarity_integral: art.report.complementarity_integral,
            max_stationarity: art.report.max_stationarity_at_nodes,
            steps: art.trace.solve_count(),
        };
        let status = match art.trace.terminated {
            Termination::ReachedT => "ok".to_string(),
            Termination::CapHit => "capHit".to_string(),
        };
        Ok((stats, status, spec_params_string(&resolved)))
    };
    match run() {
        Ok((stats, status, parameters)) => RowOutcome {
            dir_name,
            parameters,
            stats: Some(stats),
            status,
        },
        Err(e) => RowOutcome {
            dir_name,
            parameters: spec_params_string(row),
            stats: None,
            status: format!("error: {}", e.msg),
        },
    }
}

/// Assemble `summary.csv` from the row outcomes, in input order.
pub fn write_summary(root: &Path, outcomes: &[RowOutcome]) -> CliResult<()> {
    write_atomic(root, "summary.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "parameters",
            "S",
            "dissTotal",
            "energyResidual",
            "complementarityIntegral",
            "maxStationarity",
            "steps",
            "status",
        ])?;
        for o in outcomes {
            let rec: Vec<String> = match &o.stats {
                Some(st) => vec![
                    o.parameters.clone(),
                    fmt_f64(st.s),
                    fmt_f64(st.diss_total),
                    fmt_f64(st.energy_residual),
                    fmt_f64(st.complementarity_integral),
                    fmt_f64(st.max_stationarity),
                    st.steps.to_string(),
                    o.status.clone(),
                ],
                None => vec![
                    o.parameters.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    o.status.clone(),
                ],
            };
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    })
}
