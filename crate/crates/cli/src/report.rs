//! Check records, the constants manifest and the report writers.

use std::f64::consts::PI;
use std::io::{self, Write};

use nilheat::heat_transform::HERMITE_ROUTE_CONSTANT;
use nilheat::heisenberg::{heat_constant, p_constant};
use nilheat::hermite::mehler_constant;
use nilheat::C64;
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Real(f64),
    Complex(C64),
}

impl Value {
    fn to_json(self) -> Json {
        match self {
            Value::Real(v) => json!(v),
            Value::Complex(c) => json!([c.re, c.im]),
        }
    }

    fn magnitude_from(self, other: Value) -> f64 {
        let as_c = |v: Value| match v {
            Value::Real(r) => C64::new(r, 0.0),
            Value::Complex(c) => c,
        };
        (as_c(self) - as_c(other)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expected {
    Value(Value),
    /// The computed number is a relative spread that must stay below the tolerance.
    Constancy,
}

/// What a check function measured, before pass/fail is decided.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub computed: Value,
    pub expected: Expected,
    pub tolerance: f64,
    pub tail_bounds: Option<f64>,
    /// The constant a constancy check found, when it is of interest on its own.
    pub measured_constant: Option<f64>,
    pub note: Option<String>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn below(computed: f64, tolerance: f64) -> Outcome {
        Outcome {
            computed: Value::Real(computed),
            expected: Expected::Value(Value::Real(0.0)),
            tolerance,
            tail_bounds: None,
            measured_constant: None,
            note: None,
            warnings: Vec::new(),
        }
    }

    pub fn constancy(spread: f64, tolerance: f64, constant: f64) -> Outcome {
        Outcome {
            expected: Expected::Constancy,
            measured_constant: Some(constant),
            ..Outcome::below(spread, tolerance)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Outcome {
        self.note = Some(note.into());
        self
    }

    pub fn with_tail(mut self, tail: f64) -> Outcome {
        self.tail_bounds = Some(tail);
        self
    }

    pub fn with_warnings(mut self, w: Vec<String>) -> Outcome {
        self.warnings.extend(w);
        self
    }

    fn within_tolerance(&self) -> bool {
        let dist = match self.expected {
            Expected::Constancy => match self.computed {
                Value::Real(s) => s,
                Value::Complex(c) => c.norm(),
            },
            Expected::Value(v) => self.computed.magnitude_from(v),
        };
        dist <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check_id: String,
    pub paper_ref: String,
    pub outcome: Option<Outcome>,
    /// Set when the check could not be computed.
    pub error: Option<String>,
    /// The failure was a lattice sum or quadrature that did not converge.
    pub non_convergence: bool,
    pub pass: bool,
    pub runtime_ms: u64,
}

impl CheckResult {
    pub fn from_outcome(check_id: &str, paper_ref: &str, outcome: Outcome, runtime_ms: u64) -> CheckResult {
        let pass = outcome.warnings.is_empty() && outcome.within_tolerance();
        CheckResult {
            check_id: check_id.to_string(),
            paper_ref: paper_ref.to_string(),
            outcome: Some(outcome),
            error: None,
            non_convergence: false,
            pass,
            runtime_ms,
        }
    }

    pub fn from_error(check_id: &str, paper_ref: &str, e: &nilheat::Error, runtime_ms: u64) -> CheckResult {
        use nilheat::Error as E;
        CheckResult {
            check_id: check_id.to_string(),
            paper_ref: paper_ref.to_string(),
            outcome: None,
            error: Some(e.to_string()),
            non_convergence: matches!(e, E::NonConvergence { .. } | E::Truncation { .. }),
            pass: false,
            runtime_ms,
        }
    }

    /// One report record. `runtime_ms` is left out so equal seeds give equal bytes.
    pub fn to_json(&self) -> Json {
        let mut m = serde_json::Map::new();
        m.insert("record".into(), json!("check"));
        m.insert("check_id".into(), json!(self.check_id));
        m.insert("paper_ref".into(), json!(self.paper_ref));
        if let Some(o) = &self.outcome {
            m.insert("computed".into(), o.computed.to_json());
            m.insert(
                "expected".into(),
                match o.expected {
                    Expected::Constancy => json!("constancy"),
                    Expected::Value(v) => v.to_json(),
                },
            );
            m.insert("tolerance".into(), json!(o.tolerance));
            m.insert("tail_bounds".into(), json!(o.tail_bounds));
            if let Some(c) = o.measured_constant {
                m.insert("measured_constant".into(), json!(c));
            }
            if let Some(n) = &o.note {
                m.insert("note".into(), json!(n));
            }
            if !o.warnings.is_empty() {
                m.insert("warnings".into(), json!(o.warnings));
            }
        }
        if let Some(e) = &self.error {
            m.insert("error".into(), json!(e));
        }
        m.insert("pass".into(), json!(self.pass));
        Json::Object(m)
    }
}

#[derive(Serialize)]
struct ConstantsManifest {
    record: &'static str,
    n: usize,
    k: i64,
    t: f64,
    seed: u64,
    convention: String,
    /// Heat kernel prefactor `c_n`.
    heat_c_n: f64,
    /// Prefactor of the twisted heat kernel `p_t^λ`.
    twisted_c_n: f64,
    /// Mehler prefactor at `λ = 4πk`.
    mehler_c: f64,
    /// Hermite route constant `c_λ`.
    c_lambda: f64,
    /// Prefactor of `W_t^λ` at `λ = −4πk` (that of `p_{2t}^λ`).
    weight_w_prefactor: f64,
    /// Torus weight prefactor `(2πt)^{-n}`.
    weight_torus_prefactor: f64,
}

pub fn constants_manifest(cfg: &RunConfig) -> Json {
    let lambda = 4.0 * PI * cfg.k as f64;
    let n = cfg.n;
    let w_pre = nilheat::heisenberg::p_coefficients(-lambda, 2.0 * cfg.t, n)
        .map(|(pre, _)| pre)
        .unwrap_or(f64::NAN);
    serde_json::to_value(ConstantsManifest {
        record: "constants",
        n,
        k: cfg.k,
        t: cfg.t,
        seed: cfg.seed,
        convention: cfg.convention.to_string(),
        heat_c_n: heat_constant(n),
        twisted_c_n: p_constant(n),
        mehler_c: mehler_constant(lambda, n),
        c_lambda: HERMITE_ROUTE_CONSTANT,
        weight_w_prefactor: w_pre,
        weight_torus_prefactor: (2.0 * PI * cfg.t).powi(-(n as i32)),
    })
    .expect("manifest serialises")
}

/// Manifest line, then one line per check in `check_id` order.
pub fn write_report(out: &mut dyn Write, cfg: &RunConfig, results: &[CheckResult]) -> io::Result<()> {
    let mut sorted: Vec<&CheckResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    writeln!(out, "{}", constants_manifest(cfg))?;
    for r in sorted {
        writeln!(out, "{}", r.to_json())?;
    }
    Ok(())
}

/// Human-readable table: id, verdict, computed value, tolerance and wall time.
pub fn write_summary(out: &mut dyn Write, results: &[CheckResult]) -> io::Result<()> {
    writeln!(out, "{:<28} {:<5} {:>14} {:>10} {:>9}", "check", "pass", "computed", "tolerance", "ms")?;
    let mut sorted: Vec<&CheckResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    for r in sorted {
        let (computed, tol) = match &r.outcome {
            Some(o) => (
                match o.computed {
                    Value::Real(v) => format!("{v:.3e}"),
                    Value::Complex(c) => format!("{:.3e}", c.norm()),
                },
                format!("{:.0e}", o.tolerance),
            ),
            None => ("error".to_string(), "-".to_string()),
        };
        let verdict = if r.pass { "ok" } else { "FAIL" };
        writeln!(out, "{:<28} {:<5} {:>14} {:>10} {:>9}", r.check_id, verdict, computed, tol, r.runtime_ms)?;
        if let Some(e) = &r.error {
            writeln!(out, "    {e}")?;
        }
        if let Some(o) = &r.outcome {
            for w in &o.warnings {
                writeln!(out, "    warning: {w}")?;
            }
        }
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    writeln!(out, "{} checks, {} failed", results.len(), failed)
}
