//! Report assembly: one structured JSON document per run, with every
//! effective numeric parameter echoed for provenance.

use serde::Serialize;

use critexp::bubbles::quadrature::JEstimate;
use critexp::bubbles::{DimensionalConstants, MembershipReport};
use critexp::euler_hopf::{CriterionParams, CriterionReport};
use critexp::greens::WalkParams;
use critexp::kfield::AssumptionReport;
use critexp::pseudoflow::{BatteryReport, FlowParams};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
    pub rng_algorithm: &'static str,
}

#[derive(Debug, Serialize)]
pub struct EffectiveParams {
    pub walk: WalkParams,
    pub criterion: CriterionParams,
    pub flow: FlowParams,
    pub greens_backend: String,
    /// Set when the boundary is not smooth enough for the theory and the
    /// run proceeds on a best-effort basis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_smoothness_note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BubbleDiagnostics {
    pub constants: DimensionalConstants,
    /// J of a single bubble pinned at the first critical point, λ = 10³.
    pub single_bubble_j: JEstimate,
    pub single_bubble_membership: MembershipReport,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    pub seed: u64,
    pub config: RunConfig,
    pub effective: EffectiveParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bubble_diagnostics: Option<BubbleDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_battery: Option<BatteryReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
