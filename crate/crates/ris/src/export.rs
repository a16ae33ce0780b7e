//! CSV export and import of traces and parametrised curves.
//!
//! Floats are written with 16 fractional digits in scientific notation, so
//! files round-trip doubles exactly and repeated runs are byte-identical.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::dissipation::Dissipation;
use crate::error::{Result, RisError};
use crate::metric::Metric;
use crate::parametrize::{CurveMetricKind, ParametrizedCurve, SegKind};
use crate::schemes::{RunTrace, SchemeConfig, SchemeKind, Termination, TraceNode};

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| RisError::Trace(format!("bad float `{s}` in column {col}")))
}

fn parse_usize(s: &str, col: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| RisError::Trace(format!("bad integer `{s}` in column {col}")))
}

/// Write a trace as CSV with columns `k,i,t,z0..,u0..,lambda,innerIters,energy`.
pub fn write_trace_csv<W: Write>(w: W, trace: &RunTrace) -> Result<()> {
    let dim_z = trace.nodes.first().map_or(0, |n| n.z.len());
    let dim_u = trace
        .nodes
        .first()
        .and_then(|n| n.u.as_ref())
        .map_or(0, |u| u.len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["k".into(), "i".into(), "t".into()];
    header.extend((0..dim_z).map(|j| format!("z{j}")));
    header.extend((0..dim_u).map(|j| format!("u{j}")));
    header.extend(["lambda".into(), "innerIters".into(), "energy".into()]);
    wtr.write_record(&header)?;
    for n in &trace.nodes {
        let mut rec: Vec<String> = vec![n.k.to_string(), n.i.to_string(), fmt(n.t)];
        rec.extend(n.z.iter().map(|&x| fmt(x)));
        if let Some(u) = &n.u {
            rec.extend(u.iter().map(|&x| fmt(x)));
        }
        rec.extend([fmt(n.lambda), n.inner_iters.to_string(), fmt(n.energy)]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a trace back. Derived per-node quantities (arc increments,
/// dissipation increments, norm columns) are recomputed from the node
/// states with the supplied metrics; the stored energy column is kept
/// verbatim so consistency checks can compare it against the model.
pub fn read_trace_csv<R: Read>(
    r: R,
    config: SchemeConfig,
    t_final: f64,
    terminated: Termination,
    d: &Dissipation,
    m_v: &Metric,
    m_z: Option<&Metric>,
    m_u: Option<&Metric>,
) -> Result<RunTrace> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let dim_z = cols.iter().filter(|c| c.starts_with('z')).count();
    let dim_u = cols.iter().filter(|c| c.starts_with('u')).count();
    let expect = 3 + dim_z + dim_u + 3;
    if cols.len() != expect
        || cols[0] != "k"
        || cols[1] != "i"
        || cols[2] != "t"
        || cols[cols.len() - 3] != "lambda"
        || cols[cols.len() - 2] != "innerIters"
        || cols[cols.len() - 1] != "energy"
    {
        return Err(RisError::Trace("unexpected trace CSV header".into()));
    }
    let mut nodes: Vec<TraceNode> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != expect {
            return Err(RisError::Trace("trace CSV row length mismatch".into()));
        }
        let k = parse_usize(&rec[0], "k")?;
        let i = parse_usize(&rec[1], "i")?;
        let t = parse_f64(&rec[2], "t")?;
        let z = DVector::from_iterator(
            dim_z,
            (0..dim_z)
                .map(|j| parse_f64(&rec[3 + j], "z"))
                .collect::<Result<Vec<_>>>()?,
        );
        let u = if dim_u > 0 {
            Some(DVector::from_iterator(
                dim_u,
                (0..dim_u)
                    .map(|j| parse_f64(&rec[3 + dim_z + j], "u"))
                    .collect::<Result<Vec<_>>>()?,
            ))
        } else {
            None
        };
        let lambda = parse_f64(&rec[expect - 3], "lambda")?;
        let inner_iters = parse_usize(&rec[expect - 2], "innerIters")?;
        let energy = parse_f64(&rec[expect - 1], "energy")?;

        let (sigma_bar, diss_increment, dz_v, dz_z, du_u) = match nodes.last() {
            None => (0.0, 0.0, 0.0, m_z.map(|_| 0.0), u.as_ref().map(|_| 0.0)),
            Some(prev) => {
                let dz = &z - &prev.z;
                let dz_v = m_v.norm(&dz)?;
                let dz_z = match m_z {
                    Some(mz) => Some(mz.norm(&dz)?),
                    None => None,
                };
                let du_u = match (&u, &prev.u, m_u) {
                    (Some(u), Some(pu), Some(mu)) => Some(mu.norm(&(u - pu))?),
                    _ => None,
                };
                (
                    (t - prev.t) + dz_v + du_u.unwrap_or(0.0),
                    d.eval(&dz)?,
                    dz_v,
                    dz_z,
                    du_u,
                )
            }
        };
        nodes.push(TraceNode {
            k,
            i,
            t,
            z,
            u,
            lambda,
            sigma_bar,
            inner_iters,
            energy,
            diss_increment,
            dz_norm_v: dz_v,
            dz_norm_z: dz_z,
            du_norm_u: du_u,
        });
    }
    if nodes.is_empty() {
        return Err(RisError::Trace("trace CSV has no rows".into()));
    }
    Ok(RunTrace {
        nodes,
        terminated,
        config,
        t_final,
    })
}

/// Write a curve as CSV with columns `s,t,z0..,u0..,segKind,sigmaBar,lambda`.
/// Segment attributes sit on the row of the segment's right node; the
/// first row carries `segKind = init`.
pub fn write_curve_csv<W: Write>(w: W, curve: &ParametrizedCurve) -> Result<()> {
    curve.validate()?;
    let dim_z = curve.dim();
    let dim_u = curve.u.as_ref().map_or(0, |u| u[0].len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["s".into(), "t".into()];
    header.extend((0..dim_z).map(|j| format!("z{j}")));
    header.extend((0..dim_u).map(|j| format!("u{j}")));
    header.extend(["segKind".into(), "sigmaBar".into(), "lambda".into()]);
    wtr.write_record(&header)?;
    for i in 0..curve.num_nodes() {
        let mut rec: Vec<String> = vec![fmt(curve.s[i]), fmt(curve.t[i])];
        rec.extend(curve.z[i].iter().map(|&x| fmt(x)));
        if let Some(u) = &curve.u {
            rec.extend(u[i].iter().map(|&x| fmt(x)));
        }
        if i == 0 {
            rec.extend(["init".into(), fmt(0.0), fmt(0.0)]);
        } else {
            rec.extend([
                curve.seg_kind[i - 1].to_string(),
                fmt(curve.seg_ds(i - 1)),
                fmt(curve.seg_lambda[i - 1]),
            ]);
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a curve back; provenance fields (`metric_kind`, `scheme`, `eta`)
/// are not stored in the CSV and must be supplied by the caller.
pub fn read_curve_csv<R: Read>(
    r: R,
    metric_kind: CurveMetricKind,
    scheme: Option<SchemeKind>,
    eta: Option<f64>,
) -> Result<ParametrizedCurve> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let dim_z = cols.iter().filter(|c| c.starts_with('z')).count();
    let dim_u = cols.iter().filter(|c| c.starts_with('u')).count();
    let expect = 2 + dim_z + dim_u + 3;
    if cols.len() != expect
        || cols[0] != "s"
        || cols[1] != "t"
        || cols[expect - 3] != "segKind"
        || cols[expect - 2] != "sigmaBar"
        || cols[expect - 1] != "lambda"
    {
        return Err(RisError::Trace("unexpected curve CSV header".into()));
    }
    let mut s = Vec::new();
    let mut t = Vec::new();
    let mut z: Vec<DVector<f64>> = Vec::new();
    let mut u: Vec<DVector<f64>> = Vec::new();
    let mut seg_kind = Vec::new();
    let mut seg_lambda = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != expect {
            return Err(RisError::Trace("curve CSV row length mismatch".into()));
        }
        s.push(parse_f64(&rec[0], "s")?);
        t.push(parse_f64(&rec[1], "t")?);
        z.push(DVector::from_iterator(
            dim_z,
            (0..dim_z)
                .map(|j| parse_f64(&rec[2 + j], "z"))
                .collect::<Result<Vec<_>>>()?,
        ));
        if dim_u > 0 {
            u.push(DVector::from_iterator(
                dim_u,
                (0..dim_u)
                    .map(|j| parse_f64(&rec[2 + dim_z + j], "u"))
                    .collect::<Result<Vec<_>>>()?,
            ));
        }
        if row == 0 {
            if &rec[expect - 3] != "init" {
                return Err(RisError::Trace(
                    "first curve row must have segKind=init".into(),
                ));
            }
        } else {
            seg_kind.push(rec[expect - 3].parse::<SegKind>()?);
            seg_lambda.push(parse_f64(&rec[expect - 1], "lambda")?);
        }
    }
    let curve = ParametrizedCurve {
        s,
        t,
        z,
        u: if dim_u > 0 { Some(u) } else { None },
        seg_kind,
        seg_lambda,
        metric_kind,
        scheme,
        eta,
    };
    curve.validate()?;
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricKind;
    use crate::schemes::SchemeConfig;

    #[test]
    fn trace_round_trips() {
        let cfg = SchemeConfig::viscous(2, 0.5);
        let mk = |k: usize, t: f64, z: f64| TraceNode {
            k,
            i: 0,
            t,
            z: DVector::from_element(1, z),
            u: None,
            lambda: 0.25,
            sigma_bar: 0.0,
            inner_iters: 3,
            energy: -1.5 * z,
            diss_increment: 0.0,
            dz_norm_v: 0.0,
            dz_norm_z: None,
            du_norm_u: None,
        };
        let trace = RunTrace {
            nodes: vec![mk(0, 0.0, 1.0), mk(1, 0.5, 1.25), mk(2, 1.0, 2.0)],
            terminated: Termination::ReachedT,
            config: cfg.clone(),
            t_final: 1.0,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let d = Dissipation::scalar(1.0).unwrap();
        let m = Metric::identity(MetricKind::V, 1);
        let back = read_trace_csv(
            buf.as_slice(),
            cfg,
            1.0,
            Termination::ReachedT,
            &d,
            &m,
            None,
            None,
        )
        .unwrap();
        assert_eq!(back.nodes.len(), 3);
        assert_eq!(back.nodes[2].z[0], 2.0);
        assert_eq!(back.nodes[1].dz_norm_v, 0.25);
        assert_eq!(back.nodes[1].diss_increment, 0.25);
        assert_eq!(back.nodes[2].energy, -3.0);
    }
}
