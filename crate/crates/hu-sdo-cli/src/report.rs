//! The JSON report written by the command-line tool.

use hu_sdo::refine::OuterRecord;
use hu_sdo::Certificate;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

pub const SCHEMA_VERSION: u32 = 1;

/// A float written with 17 significant digits; non-finite values become
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub instance: InstanceInfo,
    pub config: ConfigInfo,
    pub result: Option<ResultInfo>,
    pub trace: Vec<TraceRecord>,
    pub timing: Timing,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceInfo {
    pub path: String,
    pub format: String,
    pub n: usize,
    pub nnz: usize,
    pub s: usize,
    pub fro_norm: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigInfo {
    pub epsilon: Real,
    pub xi: Real,
    pub zeta: Real,
    pub gamma: Option<Real>,
    pub seed: u64,
    pub mode: String,
    pub round: String,
    pub trials: usize,
    pub max_outer: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultInfo {
    pub gamma_star_normalized: Real,
    /// `γ*·n‖C‖_F`.
    pub objective_original_scale: Real,
    pub rounded_objective: Option<Real>,
    pub hyperplane_value: Option<Real>,
    pub cut_value: Option<Real>,
    pub bad_set_size: Option<usize>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub probes: usize,
    pub solution_path: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub eta: Real,
    pub delta: Real,
    pub resid_l1: Real,
    pub objective_residual: Real,
    pub gamma_tilde: Real,
    pub inner_iterations: usize,
    pub y_l1: Real,
}

impl From<&OuterRecord> for TraceRecord {
    fn from(r: &OuterRecord) -> Self {
        Self {
            k: r.k,
            eta: Real(r.eta),
            delta: Real(r.delta),
            resid_l1: Real(r.resid_l1),
            objective_residual: Real(r.objective_residual),
            gamma_tilde: Real(r.gamma_tilde),
            inner_iterations: r.inner_iterations,
            y_l1: Real(r.y_l1),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timing {
    pub parse_ms: Real,
    pub solve_ms: Real,
    pub round_ms: Real,
    pub total_ms: Real,
}

impl Default for Real {
    fn default() -> Self {
        Real(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Solved,
    Infeasible,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateInfo {
    pub gamma_target: Real,
    pub kind: &'static str,
    pub bound: Option<Real>,
    pub iterations: Option<usize>,
}

impl CertificateInfo {
    pub fn new(gamma_target: f64, c: &Certificate) -> Self {
        match *c {
            Certificate::Budget { iterations } => Self {
                gamma_target: Real(gamma_target),
                kind: "budget",
                bound: None,
                iterations: Some(iterations),
            },
            Certificate::DualBound { bound } => Self {
                gamma_target: Real(gamma_target),
                kind: "dual_bound",
                bound: Some(Real(bound)),
                iterations: None,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub category: String,
    pub detail: String,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
