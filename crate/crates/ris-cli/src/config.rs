//! Run specifications: the JSON/flag schema, the problem registry and the
//! translation into a validated `SchemeConfig`.

use nalgebra::DVector;
use ris::diagnostics::ModelRef;
use ris::problems::{make_chain, make_coupled_demo, make_toy51, make_toy52};
use ris::schemes::SchemeKind;
use ris::{CoupledEnergyModel, Dissipation, Energy, EnergyModel, RisError, SchemeConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// CLI-level error: a message plus the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub msg: String,
    pub code: u8,
}

impl CliError {
    pub fn new(msg: impl Into<String>) -> Self {
        CliError { msg: msg.into(), code: 1 }
    }

    /// Exit code 3: stored and recomputed diagnostics disagree.
    pub fn mismatch(msg: impl Into<String>) -> Self {
        CliError { msg: msg.into(), code: 3 }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.msg)
    }
}

macro_rules! from_err {
    ($t:ty) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.to_string())
            }
        }
    };
}
from_err!(RisError);
from_err!(std::io::Error);
from_err!(serde_json::Error);
from_err!(csv::Error);

pub type CliResult<T> = std::result::Result<T, CliError>;

/// One run, as the user writes it: flat keys, either flags or JSON.
/// Unknown keys are rejected at parse time.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RunSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outer_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_parametrization: Option<bool>,
    /// Artifact families to write: "csv", "json" or "csv,json" (default).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<String>,
    /// Subdirectory name for sweep rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Sweep input: a plain list of self-contained rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub rows: Vec<RunSpec>,
}

/// `run.json`: the resolved spec plus how the run ended.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunRecord {
    pub spec: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated: Option<ris::Termination>,
}

/// Per-key merge, flags winning. A flag-level `mu` silences a file-level
/// `muRule` and vice versa, so "flags override the file" holds across the
/// two spellings of the same quantity.
pub fn merge_specs(file: RunSpec, flags: RunSpec) -> RunSpec {
    let flag_mu = flags.mu.is_some();
    let flag_rule = flags.mu_rule.is_some();
    let mut out = RunSpec {
        problem: flags.problem.or(file.problem),
        scheme: flags.scheme.or(file.scheme),
        n: flags.n.or(file.n),
        h: flags.h.or(file.h),
        eta: flags.eta.or(file.eta),
        delta: flags.delta.or(file.delta),
        mu: flags.mu.or(file.mu),
        mu_rule: flags.mu_rule.or(file.mu_rule),
        ratio: flags.ratio.or(file.ratio),
        max_outer_iters: flags.max_outer_iters.or(file.max_outer_iters),
        z_parametrization: flags.z_parametrization.or(file.z_parametrization),
        formats: flags.formats.or(file.formats),
        label: flags.label.or(file.label),
    };
    if flag_mu && !flag_rule {
        out.mu_rule = None;
    }
    if flag_rule && !flag_mu {
        out.mu = None;
    }
    out
}

/// Reject `mu` together with `muRule` in user input. Resolved specs in
/// `run.json` legitimately carry both (the rule and its value).
pub fn check_mu_exclusive(spec: &RunSpec) -> CliResult<()> {
    if spec.mu.is_some() && spec.mu_rule.is_some() {
        return Err(CliError::new(
            "parameters mu and muRule are mutually exclusive",
        ));
    }
    Ok(())
}

/// A built-in problem, instantiated.
pub enum ProblemInstance {
    Plain {
        e: EnergyModel,
        d: Dissipation,
        z0: DVector<f64>,
    },
    Coupled {
        ce: CoupledEnergyModel,
        d: Dissipation,
        z0: DVector<f64>,
    },
}

impl ProblemInstance {
    pub fn t_final(&self) -> f64 {
        match self {
            ProblemInstance::Plain { e, .. } => e.t_final(),
            ProblemInstance::Coupled { ce, .. } => ce.t_final(),
        }
    }

    pub fn dim_z(&self) -> usize {
        match self {
            ProblemInstance::Plain { z0, .. } | ProblemInstance::Coupled { z0, .. } => z0.len(),
        }
    }

    pub fn model(&self) -> ModelRef<'_> {
        match self {
            ProblemInstance::Plain { e, .. } => ModelRef::Plain(e),
            ProblemInstance::Coupled { ce, .. } => ModelRef::Coupled(ce),
        }
    }

    pub fn dissipation(&self) -> &Dissipation {
        match self {
            ProblemInstance::Plain { d, .. } | ProblemInstance::Coupled { d, .. } => d,
        }
    }

    pub fn z0(&self) -> &DVector<f64> {
        match self {
            ProblemInstance::Plain { z0, .. } | ProblemInstance::Coupled { z0, .. } => z0,
        }
    }
}

fn parse_params<'a>(name: &str, rest: Option<&'a str>) -> CliResult<BTreeMap<&'a str, &'a str>> {
    let mut map = BTreeMap::new();
    let Some(rest) = rest else {
        return Ok(map);
    };
    for pair in rest.split(',') {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            CliError::new(format!("problem {name}: expected key=value, got '{pair}'"))
        })?;
        if map.insert(k, v).is_some() {
            return Err(CliError::new(format!(
                "problem {name}: duplicate parameter {k}"
            )));
        }
    }
    Ok(map)
}

fn take_f64(name: &str, map: &mut BTreeMap<&str, &str>, key: &str) -> CliResult<Option<f64>> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v.parse::<f64>().map(Some).map_err(|_| {
            CliError::new(format!("problem {name}: parameter {key}: invalid number '{v}'"))
        }),
    }
}

fn take_usize(name: &str, map: &mut BTreeMap<&str, &str>, key: &str) -> CliResult<Option<usize>> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v.parse::<usize>().map(Some).map_err(|_| {
            CliError::new(format!("problem {name}: parameter {key}: invalid integer '{v}'"))
        }),
    }
}

/// Instantiate a problem from its string id and return it together with
/// the canonical id (defaults spelled out) that goes into `run.json`.
pub fn parse_problem(id: &str) -> CliResult<(ProblemInstance, String)> {
    let (name, rest) = match id.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (id, None),
    };
    let mut params = parse_params(name, rest)?;
    let out = match name {
        "toy51" => {
            let kappa = take_f64(name, &mut params, "kappa")?.unwrap_or(1.0);
            let (e, d, z0) = make_toy51(kappa)?;
            (
                ProblemInstance::Plain { e, d, z0 },
                format!("toy51:kappa={kappa}"),
            )
        }
        "toy52" => {
            let (e, d, z0, _t) = make_toy52();
            (ProblemInstance::Plain { e, d, z0 }, "toy52".to_string())
        }
        "chain" => {
            let n = take_usize(name, &mut params, "n")?
                .ok_or_else(|| CliError::new("problem chain: missing parameter n (e.g. chain:n=4)"))?;
            let (e, d, z0) = make_chain(n)?;
            (ProblemInstance::Plain { e, d, z0 }, format!("chain:n={n}"))
        }
        "coupled" => {
            let n = take_usize(name, &mut params, "n")?.ok_or_else(|| {
                CliError::new("problem coupled: missing parameter n (e.g. coupled:n=8)")
            })?;
            let (ce, d, z0, _u0) = make_coupled_demo(n)?;
            (
                ProblemInstance::Coupled { ce, d, z0 },
                format!("coupled:n={n}"),
            )
        }
        other => {
            return Err(CliError::new(format!(
                "unknown problem '{other}' (try: toy51:kappa=1, toy52, chain:n=4, coupled:n=8)"
            )))
        }
    };
    if let Some(k) = params.keys().next() {
        return Err(CliError::new(format!(
            "problem {name}: unknown parameter {k}"
        )));
    }
    Ok(out)
}

fn require<T>(name: &str, v: Option<T>) -> CliResult<T> {
    v.ok_or_else(|| CliError::new(format!("missing parameter {name}")))
}

/// Build the validated `SchemeConfig` for a spec. Every key the chosen
/// scheme does not consume is rejected; every missing key names itself.
/// When a spec carries both `mu` and `muRule` (a resolved `run.json`),
/// the stored value wins and the rule is kept for the record only.
pub fn build_scheme(spec: &RunSpec, t_final: f64) -> CliResult<SchemeConfig> {
    let kind: SchemeKind = require("scheme", spec.scheme.as_deref())?.parse()?;
    let mut cfg = SchemeConfig::new(kind);
    cfg.max_outer_iters = spec.max_outer_iters;

    let unused: &[(&str, bool)] = match kind {
        SchemeKind::GlobalIncremental => &[
            ("h", spec.h.is_some()),
            ("eta", spec.eta.is_some()),
            ("delta", spec.delta.is_some()),
            ("mu", spec.mu.is_some()),
            ("muRule", spec.mu_rule.is_some()),
            ("ratio", spec.ratio.is_some()),
            ("zParametrization", spec.z_parametrization.is_some()),
        ],
        SchemeKind::Viscous => &[
            ("h", spec.h.is_some()),
            ("eta", spec.eta.is_some()),
            ("delta", spec.delta.is_some()),
            ("ratio", spec.ratio.is_some()),
            ("zParametrization", spec.z_parametrization.is_some()),
        ],
        SchemeKind::ViscoEnergetic => &[
            ("h", spec.h.is_some()),
            ("eta", spec.eta.is_some()),
            ("delta", spec.delta.is_some()),
            ("mu", spec.mu.is_some()),
            ("muRule", spec.mu_rule.is_some()),
            ("zParametrization", spec.z_parametrization.is_some()),
        ],
        SchemeKind::LocalMin => &[
            ("n", spec.n.is_some()),
            ("eta", spec.eta.is_some()),
            ("delta", spec.delta.is_some()),
            ("mu", spec.mu.is_some()),
            ("muRule", spec.mu_rule.is_some()),
            ("ratio", spec.ratio.is_some()),
            ("zParametrization", spec.z_parametrization.is_some()),
        ],
        SchemeKind::RelaxedLocalMin => &[
            ("h", spec.h.is_some()),
            ("mu", spec.mu.is_some()),
            ("muRule", spec.mu_rule.is_some()),
            ("ratio", spec.ratio.is_some()),
        ],
        SchemeKind::AlternateMin => &[
            ("h", spec.h.is_some()),
            ("mu", spec.mu.is_some()),
            ("muRule", spec.mu_rule.is_some()),
            ("ratio", spec.ratio.is_some()),
            ("zParametrization", spec.z_parametrization.is_some()),
        ],
    };
    for (key, present) in unused {
        if *present {
            return Err(CliError::new(format!(
                "parameter {key} is not consumed by scheme {kind}"
            )));
        }
    }

    match kind {
        SchemeKind::GlobalIncremental => {
            cfg.n_steps = Some(require("n", spec.n)?);
        }
        SchemeKind::Viscous => {
            let n = require("n", spec.n)?;
            cfg.n_steps = Some(n);
            cfg.mu = Some(match (spec.mu, spec.mu_rule.as_deref()) {
                (Some(mu), _) => mu,
                (None, Some(rule)) => eval_mu_rule(rule, t_final / n as f64)?,
                (None, None) => return Err(CliError::new("missing parameter mu")),
            });
        }
        SchemeKind::ViscoEnergetic => {
            cfg.n_steps = Some(require("n", spec.n)?);
            cfg.mu = Some(require("ratio", spec.ratio)?);
        }
        SchemeKind::LocalMin => {
            cfg.h = Some(require("h", spec.h)?);
        }
        SchemeKind::RelaxedLocalMin => {
            cfg.n_steps = Some(require("n", spec.n)?);
            cfg.eta = Some(require("eta", spec.eta)?);
            cfg.delta = Some(require("delta", spec.delta)?);
            cfg.z_parametrization = spec.z_parametrization.unwrap_or(false);
        }
        SchemeKind::AlternateMin => {
            cfg.n_steps = Some(require("n", spec.n)?);
            cfg.eta = Some(require("eta", spec.eta)?);
            cfg.delta = Some(require("delta", spec.delta)?);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Evaluate a mu-rule at `tau = T / n`. Grammar: products of numeric
/// literals, `tau` and `sqrt(expr)`; nothing else.
pub fn eval_mu_rule(rule: &str, tau: f64) -> CliResult<f64> {
    let wrap = |m: String| CliError::new(format!("mu rule '{rule}': {m}"));
    let mut p = RuleParser {
        s: rule.as_bytes(),
        pos: 0,
        tau,
    };
    let v = p.expr().map_err(&wrap)?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(wrap(format!(
            "unexpected trailing input at byte {}",
            p.pos
        )));
    }
    if !(v.is_finite() && v > 0.0) {
        return Err(wrap(format!("evaluates to {v}, need a positive number")));
    }
    Ok(v)
}

struct RuleParser<'a> {
    s: &'a [u8],
    pos: usize,
    tau: f64,
}

impl RuleParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut v = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            v *= self.factor()?;
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
                    self.pos += 1;
                }
                match &self.s[start..self.pos] {
                    b"tau" => Ok(self.tau),
                    b"sqrt" => {
                        if self.peek() != Some(b'(') {
                            return Err("sqrt needs parentheses".into());
                        }
                        self.pos += 1;
                        let v = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err("unclosed parenthesis after sqrt".into());
                        }
                        self.pos += 1;
                        Ok(v.sqrt())
                    }
                    other => Err(format!(
                        "unknown name '{}'",
                        String::from_utf8_lossy(other)
                    )),
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                if self.s.get(self.pos).is_some_and(|&c| c == b'e' || c == b'E') {
                    self.pos += 1;
                    if self.s.get(self.pos).is_some_and(|&c| c == b'+' || c == b'-') {
                        self.pos += 1;
                    }
                    while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
                let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                text.parse::<f64>()
                    .map_err(|_| format!("invalid number '{text}'"))
            }
            Some(c) => Err(format!("unexpected character '{}'", c as char)),
            None => Err("unexpected end of input".into()),
        }
    }
}
