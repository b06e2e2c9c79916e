//! Reduced pseudo-gradient dynamics on bubble parameters (a_i, λ_i).
//!
//! The infinite-dimensional flow is replaced by its leading-order model:
//! configurations are classified into interior regions V₁-V₄ and a boundary
//! zone, each region gets the matching piecewise vector field, and an
//! adaptive Euler integrator follows the trajectory until blow-up, horizon,
//! or model exit. The α weights are slaved to the centers through the
//! balance constraint α_i^{4/(n-2)} K(a_i) J^{n/(n-2)} = 1.

pub mod battery;
pub mod field;
pub mod integrate;
pub mod regions;

pub use battery::{run_battery, run_battery_full, BatteryParams, BatteryReport, StartKind};
pub use field::{assemble_pseudogradient, reduced_gradient_a, reduced_gradient_lambda, GradientValue};
pub use integrate::{detect_blowup, integrate_flow, BlowupReport, FlowStep, FlowTrajectory, FlowVerdict};
pub use regions::{classify_region, BoundaryLabel, InteriorKind, RegionLabel};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::bubbles::constants::{dimensional_constants, DimensionalConstants};
use crate::bubbles::quadrature::QuadratureParams;
use crate::bubbles::{BubbleConfiguration, BubbleError};
use crate::euler_hopf::{interaction_matrix, CriterionParams, InteractionMatrix, PairTable};
use crate::geometry::{Domain, GeometryError};
use crate::greens::{GreensError, GreensEvaluator};
use crate::kfield::KField;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("least eigenvalue {rho:.3e} of tuple {subset:?} is within tolerance of zero (A2)")]
    AssumptionsViolated { subset: Vec<usize>, rho: f64 },
    #[error("velocity became non-finite at t = {time}")]
    NonFiniteVelocity { time: f64 },
    #[error("configuration is empty or inconsistent: {0}")]
    Shape(String),
    #[error(transparent)]
    Bubble(#[from] BubbleError),
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Every "small enough"/"large enough" constant of the construction, made
/// concrete and echoed into run reports. Hysteresis of `hysteresis` (5%
/// default) is applied to the region-defining thresholds (boundary-zone
/// membership, η-capture, the V₁ case split, the V₂ eigenvector ball, and
/// the boundary interaction condition) to prevent label chattering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowParams {
    /// Boundary-zone width d₀ (absolute).
    pub d0: f64,
    /// Capture radius η around each critical point (absolute).
    pub eta: f64,
    /// δ in the V₁ case split max λ_i^{α_i}|a_i - y_i| ≤ δ.
    pub delta_cap: f64,
    /// Radius γ of the eigenvector ball in V₂.
    pub gamma_eigvec: f64,
    /// C in the cutoff Ψ(t) = 1 for t ≤ C, 0 for t ≥ 2C.
    pub psi_cutoff: f64,
    /// Lower threshold of the cluster cutoff χ (χ = 0 below, 1 above 1).
    pub chi_gamma: f64,
    /// c₁ for the λd-comparability chains of the boundary zone.
    pub c1_ratio: f64,
    /// c₂ for the λ-comparability chains.
    pub c2_ratio: f64,
    /// M for λ-comparability in V₁ case 2 and the I₁ distance chains.
    pub m_ratio: f64,
    /// M₃: λ-decrease weight of the escape field in V₄.
    pub m3_weight: f64,
    /// M: weight of the escape field against the recursive field in V₄.
    pub m_weight: f64,
    /// m: weight of the λ-decrease field inside the boundary field X₁.
    pub m_small_weight: f64,
    /// m₁: weight of X₁ in W₂ = X₂ + m₁ X₁.
    pub m1_weight: f64,
    /// C: weight of the cluster field in V₃ case 2.
    pub chi_c_weight: f64,
    /// Blow-up threshold on max λ.
    pub lambda_max: f64,
    /// Model floor on λ: dropping below exits the model.
    pub lambda_floor: f64,
    /// Relative hysteresis band applied to region thresholds.
    pub hysteresis: f64,
    /// ε of the V(p,ε) model; ε_ij ≥ ε exits the model.
    pub eps_model: f64,
    /// |ρ| below this aborts with an (A2) violation.
    pub rho_tol: f64,
    /// Step for finite differences of H.
    pub fd_step: f64,
    /// Per-step cap on relative λ change.
    pub max_rel_lambda_step: f64,
    /// Per-step cap on center motion (absolute; η/10 by default).
    pub max_center_step: f64,
    /// Hard cap on the Euler step size.
    pub dt_max: f64,
    /// Quadrature budget for the per-step J estimate.
    pub j_budget: usize,
    pub j_seed: u64,
    /// Estimate J every k-th step (1 = every step).
    pub j_every: usize,
    /// Hard cap on integrator steps per trajectory.
    pub max_steps: usize,
    /// Record ⟨∂J, W⟩ along trajectories. Costs H evaluations at moving
    /// centers each step, so it defaults off for Monte Carlo backends.
    pub descent_diagnostics: bool,
}

impl FlowParams {
    /// Defaults tied to the geometry and the registered critical points:
    /// d₀ = 0.05 diam, η = half the minimal critical-point separation
    /// (twice the largest template radius when fewer than two points).
    pub fn for_setup(domain: &Domain, kfield: &KField) -> Self {
        let diam = domain.diameter();
        let eta = match kfield.min_separation() {
            Some(s) => 0.5 * s,
            None => kfield
                .critical_points()
                .iter()
                .map(|s| 2.0 * s.eta)
                .fold(0.0, f64::max)
                .max(0.05 * diam),
        };
        FlowParams {
            d0: 0.05 * diam,
            eta,
            delta_cap: 0.1,
            gamma_eigvec: 0.2,
            psi_cutoff: 10.0,
            chi_gamma: 0.2,
            c1_ratio: 0.1,
            c2_ratio: 0.1,
            m_ratio: 10.0,
            m3_weight: 10.0,
            m_weight: 10.0,
            m_small_weight: 10.0,
            m1_weight: 10.0,
            chi_c_weight: 10.0,
            lambda_max: 1e6,
            lambda_floor: 2.0,
            hysteresis: 0.05,
            eps_model: 0.05,
            rho_tol: 1e-10,
            fd_step: 1e-5 * diam,
            max_rel_lambda_step: 0.02,
            max_center_step: eta / 10.0,
            dt_max: 5.0,
            j_budget: 20_000,
            j_seed: 0,
            j_every: 1,
            max_steps: 20_000,
            descent_diagnostics: true,
        }
    }

    pub(crate) fn criterion_params(&self) -> CriterionParams {
        CriterionParams {
            rho_tol_analytic: self.rho_tol,
            ..CriterionParams::default()
        }
    }

    pub(crate) fn quadrature(&self) -> QuadratureParams {
        QuadratureParams {
            budget: self.j_budget,
            seed: self.j_seed,
        }
    }
}

/// Shared evaluation context for one flow setup. Critical-point pair data
/// is cached once; tuple spectra are memoized across steps.
pub struct FlowContext<'a> {
    pub kfield: &'a KField,
    pub greens: &'a GreensEvaluator,
    pub domain: Domain,
    pub constants: DimensionalConstants,
    pub params: FlowParams,
    pair_table: PairTable,
    tuple_cache: Mutex<HashMap<Vec<usize>, Arc<InteractionMatrix>>>,
}

impl<'a> FlowContext<'a> {
    pub fn new(
        kfield: &'a KField,
        greens: &'a GreensEvaluator,
        params: FlowParams,
    ) -> Result<Self, FlowError> {
        let domain = kfield.domain().clone();
        let constants = dimensional_constants(domain.dim());
        let pair_table = PairTable::build(kfield, greens)?;
        Ok(FlowContext {
            kfield,
            greens,
            domain,
            constants,
            params,
            pair_table,
            tuple_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Spectral data of the interaction matrix for a sorted tuple of
    /// critical-point indices.
    pub fn tuple_spectrum(&self, tuple: &[usize]) -> Arc<InteractionMatrix> {
        let key = tuple.to_vec();
        let mut cache = self.tuple_cache.lock().unwrap();
        cache
            .entry(key)
            .or_insert_with(|| {
                Arc::new(interaction_matrix(
                    &self.pair_table,
                    tuple,
                    &self.params.criterion_params(),
                ))
            })
            .clone()
    }

    /// Slave the α weights to the centers: α_i ∝ K(a_i)^{-(n-2)/4}, scaled
    /// so that α_i^{4/(n-2)} K(a_i) J^{n/(n-2)} = 1 for the given J. J
    /// itself is scale-invariant, so the slaving is a single algebraic pass.
    pub fn slaved_alphas(&self, centers: &[Vec<f64>], j_value: f64) -> Vec<f64> {
        let n = self.domain.dim() as f64;
        centers
            .iter()
            .map(|a| j_value.powf(-n / 4.0) * self.kfield.eval(a).powf(-(n - 2.0) / 4.0))
            .collect()
    }
}

/// Reduced velocity: one λ̇ per bubble and one ȧ vector per bubble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Velocity {
    pub lambda_dot: Vec<f64>,
    pub center_dot: Vec<Vec<f64>>,
}

impl Velocity {
    pub fn zeros(p: usize, dim: usize) -> Self {
        Velocity {
            lambda_dot: vec![0.0; p],
            center_dot: vec![vec![0.0; dim]; p],
        }
    }

    pub fn add_scaled(&mut self, s: f64, other: &Velocity) {
        for (a, b) in self.lambda_dot.iter_mut().zip(&other.lambda_dot) {
            *a += s * b;
        }
        for (a, b) in self.center_dot.iter_mut().zip(&other.center_dot) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda_dot.iter().all(|v| v.is_finite())
            && self
                .center_dot
                .iter()
                .all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// max_i |λ̇_i| / λ_i.
    pub fn max_relative_lambda_rate(&self, lambdas: &[f64]) -> f64 {
        self.lambda_dot
            .iter()
            .zip(lambdas)
            .map(|(dl, l)| (dl / l).abs())
            .fold(0.0, f64::max)
    }

    /// max_i |ȧ_i|.
    pub fn max_center_rate(&self) -> f64 {
        self.center_dot
            .iter()
            .map(|c| crate::vecn::norm(c))
            .fold(0.0, f64::max)
    }
}

/// Cubic-smoothstep bridge: 1 for t ≤ lo, 0 for t ≥ hi.
pub(crate) fn cutoff_down(t: f64, lo: f64, hi: f64) -> f64 {
    if t <= lo {
        1.0
    } else if t >= hi {
        0.0
    } else {
        let u = (t - lo) / (hi - lo);
        1.0 - u * u * (3.0 - 2.0 * u)
    }
}

/// Cubic-smoothstep bridge: 0 for t ≤ lo, 1 for t ≥ hi.
pub(crate) fn cutoff_up(t: f64, lo: f64, hi: f64) -> f64 {
    1.0 - cutoff_down(t, lo, hi)
}

/// Hysteresis on a "value ≤ threshold" test: the previous state widens the
/// band in its own favour by the relative margin h.
pub(crate) fn hyst_le(value: f64, threshold: f64, prev: Option<bool>, h: f64) -> bool {
    let factor = match prev {
        Some(true) => 1.0 + h,
        Some(false) => 1.0 - h,
        None => 1.0,
    };
    value <= threshold * factor
}

/// Hysteresis on a "value ≥ threshold" test.
pub(crate) fn hyst_ge(value: f64, threshold: f64, prev: Option<bool>, h: f64) -> bool {
    let factor = match prev {
        Some(true) => 1.0 - h,
        Some(false) => 1.0 + h,
        None => 1.0,
    };
    value >= threshold * factor
}

/// Configurations must be nonempty and strictly interior.
pub(crate) fn validate_config(
    config: &BubbleConfiguration,
    domain: &Domain,
) -> Result<(), FlowError> {
    if config.is_empty() {
        return Err(FlowError::Shape("empty configuration".into()));
    }
    for a in &config.centers {
        domain.dist_boundary(a)?;
    }
    Ok(())
}
