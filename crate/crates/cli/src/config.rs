//! Run configuration schema. Unknown keys are rejected everywhere so typos
//! fail loudly before any computation starts.

use serde::{Deserialize, Serialize};

use critexp::euler_hopf::CriterionParams;
use critexp::geometry::SdfKind;
use critexp::greens::{GreensEvaluator, WalkParams};
use critexp::kfield::{CriticalPointSpec, Envelope, KField};
use critexp::pseudoflow::{BatteryParams, FlowParams};
use critexp::Domain;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub kfield: KFieldConfig,
    #[serde(default)]
    pub greens: GreensConfig,
    #[serde(default)]
    pub analyses: AnalysesConfig,
    #[serde(default)]
    pub criterion: CriterionOverrides,
    #[serde(default)]
    pub flow: FlowOverrides,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Sdf {
        kind: String,
        params: SdfParams,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfParams {
    pub center: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_radius: Option<f64>,
}

impl DomainConfig {
    pub fn build(&self) -> anyhow::Result<Domain> {
        match self {
            DomainConfig::Ball { center, radius } => {
                Ok(Domain::ball(center.clone(), *radius)?)
            }
            DomainConfig::Sdf { kind, params } => {
                let missing = |what: &str| {
                    anyhow::anyhow!("sdf kind {kind:?} requires params.{what}")
                };
                let built = match kind.as_str() {
                    "ball" => SdfKind::Ball {
                        center: params.center.clone(),
                        radius: params.radius.ok_or_else(|| missing("radius"))?,
                    },
                    "ellipsoid" => SdfKind::Ellipsoid {
                        center: params.center.clone(),
                        semi_axes: params
                            .semi_axes
                            .clone()
                            .ok_or_else(|| missing("semi_axes"))?,
                    },
                    "rounded_box" => SdfKind::RoundedBox {
                        center: params.center.clone(),
                        half_widths: params
                            .half_widths
                            .clone()
                            .ok_or_else(|| missing("half_widths"))?,
                        corner_radius: params
                            .corner_radius
                            .ok_or_else(|| missing("corner_radius"))?,
                    },
                    other => anyhow::bail!(
                        "unknown sdf kind {other:?}; built-ins: ball, ellipsoid, rounded_box"
                    ),
                };
                Ok(Domain::sdf(built)?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KFieldConfig {
    pub critical_points: Vec<CriticalPointSpec>,
    #[serde(default)]
    pub envelope: Envelope,
}

impl KFieldConfig {
    pub fn build(&self, domain: &Domain) -> anyhow::Result<KField> {
        Ok(KField::new(
            domain.clone(),
            self.critical_points.clone(),
            self.envelope,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum GreensConfig {
    Analytic,
    MonteCarlo {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        walks: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shell: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        antithetic: Option<bool>,
    },
}

impl Default for GreensConfig {
    fn default() -> Self {
        GreensConfig::Analytic
    }
}

impl GreensConfig {
    pub fn build(&self, domain: &Domain, seed: u64) -> anyhow::Result<(GreensEvaluator, WalkParams)> {
        let mut params = WalkParams::for_domain(domain, seed);
        match self {
            GreensConfig::Analytic => {
                let eval = GreensEvaluator::analytic(domain.clone())?;
                Ok((eval, params))
            }
            GreensConfig::MonteCarlo {
                walks,
                shell,
                max_steps,
                antithetic,
            } => {
                if let Some(w) = walks {
                    params.walks = *w;
                }
                if let Some(s) = shell {
                    params.shell = *s;
                }
                if let Some(m) = max_steps {
                    params.max_steps = *m;
                }
                if let Some(a) = antithetic {
                    params.antithetic = *a;
                }
                let eval = GreensEvaluator::monte_carlo(domain.clone(), params)?;
                Ok((eval, params))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysesConfig {
    pub assumptions: bool,
    pub criterion: bool,
    pub bubble_diagnostics: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_battery: Option<BatteryConfig>,
}

impl Default for AnalysesConfig {
    fn default() -> Self {
        AnalysesConfig {
            assumptions: true,
            criterion: true,
            bubble_diagnostics: false,
            flow_battery: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub runs: usize,
    pub horizon: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            runs: 20,
            horizon: 120.0,
        }
    }
}

impl BatteryConfig {
    pub fn to_params(&self, seed: u64) -> BatteryParams {
        BatteryParams {
            runs: self.runs,
            horizon: self.horizon,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriterionOverrides {
    pub rho_tol_analytic: Option<f64>,
    pub rho_se_factor: Option<f64>,
    pub subset_cap: Option<usize>,
    pub assumption_budget: Option<usize>,
}

impl CriterionOverrides {
    pub fn resolve(&self, seed: u64) -> CriterionParams {
        let mut p = CriterionParams {
            assumption_seed: seed,
            ..CriterionParams::default()
        };
        if let Some(v) = self.rho_tol_analytic {
            p.rho_tol_analytic = v;
        }
        if let Some(v) = self.rho_se_factor {
            p.rho_se_factor = v;
        }
        if let Some(v) = self.subset_cap {
            p.subset_cap = v;
        }
        if let Some(v) = self.assumption_budget {
            p.assumption_budget = v;
        }
        p
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowOverrides {
    pub d0: Option<f64>,
    pub eta: Option<f64>,
    pub delta_cap: Option<f64>,
    pub gamma_eigvec: Option<f64>,
    pub psi_cutoff: Option<f64>,
    pub chi_gamma: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_floor: Option<f64>,
    pub hysteresis: Option<f64>,
    pub eps_model: Option<f64>,
    pub max_rel_lambda_step: Option<f64>,
    pub max_center_step: Option<f64>,
    pub j_budget: Option<usize>,
    pub j_every: Option<usize>,
    pub max_steps: Option<usize>,
    pub descent_diagnostics: Option<bool>,
}

impl FlowOverrides {
    pub fn resolve(
        &self,
        domain: &Domain,
        kfield: &KField,
        seed: u64,
        greens_is_analytic: bool,
    ) -> FlowParams {
        let mut p = FlowParams::for_setup(domain, kfield);
        p.j_seed = seed;
        // The descent pairing re-estimates H at moving centers every step;
        // on the walk-on-spheres backend that dominates the runtime.
        p.descent_diagnostics = self.descent_diagnostics.unwrap_or(greens_is_analytic);
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { p.$field = v; })*
            };
        }
        apply!(
            d0,
            eta,
            delta_cap,
            gamma_eigvec,
            psi_cutoff,
            chi_gamma,
            lambda_max,
            lambda_floor,
            hysteresis,
            eps_model,
            max_rel_lambda_step,
            max_center_step,
            j_budget,
            j_every,
            max_steps
        );
        p
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory for the report and trajectory dumps; flag --out overrides.
    pub dir: Option<String>,
}
