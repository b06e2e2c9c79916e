//! Bubble profiles and their interactions.

pub mod constants;
pub mod fit;
pub mod quadrature;

pub use constants::{dimensional_constants, DimensionalConstants};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Domain;
use crate::greens::{Estimate, GreensError, GreensEvaluator};
use crate::kfield::KField;
use crate::vecn;

#[derive(Debug, Error)]
pub enum BubbleError {
    #[error("bubble scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("configuration size mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error("quadrature produced a nonpositive denominator estimate {0}")]
    QuadratureFailure(f64),
}

/// Normalization constant c_n = (n(n-2))^{(n-2)/4}, which makes
/// δ_{a,λ} solve −Δu = u^{(n+2)/(n−2)} on ℝⁿ.
pub fn bubble_norm_const(n: usize) -> f64 {
    let nf = n as f64;
    (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0)
}

/// δ_{a,λ}(x) = c_n (λ / (1 + λ²|x−a|²))^{(n−2)/2}.
pub fn delta(n: usize, a: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let nf = n as f64;
    let r2 = vecn::dist_sq(x, a);
    bubble_norm_const(n) * (lambda / (1.0 + lambda * lambda * r2)).powf((nf - 2.0) / 2.0)
}

/// Interaction parameter
/// ε_{ij} = (λ_i/λ_j + λ_j/λ_i + λ_iλ_j|a_i−a_j|²)^{−(n−2)/2}.
pub fn epsilon_ij(n: usize, a_i: &[f64], l_i: f64, a_j: &[f64], l_j: f64) -> f64 {
    let nf = n as f64;
    let g = l_i / l_j + l_j / l_i + l_i * l_j * vecn::dist_sq(a_i, a_j);
    g.powf(-(nf - 2.0) / 2.0)
}

/// λ_i ∂ε_ij/∂λ_i = −(n−2)/2 · ε_ij (1 − 2 (λ_j/λ_i) ε_ij^{2/(n−2)}).
pub fn epsilon_dlambda_scaled(n: usize, a_i: &[f64], l_i: f64, a_j: &[f64], l_j: f64) -> f64 {
    let nf = n as f64;
    let eps = epsilon_ij(n, a_i, l_i, a_j, l_j);
    -(nf - 2.0) / 2.0 * eps * (1.0 - 2.0 * (l_j / l_i) * eps.powf(2.0 / (nf - 2.0)))
}

/// (1/λ_i) ∂ε_ij/∂a_i = −(n−2) λ_j (a_i − a_j) ε_ij^{n/(n−2)}.
pub fn epsilon_da_over_lambda(
    n: usize,
    a_i: &[f64],
    l_i: f64,
    a_j: &[f64],
    l_j: f64,
) -> Vec<f64> {
    let nf = n as f64;
    let eps = epsilon_ij(n, a_i, l_i, a_j, l_j);
    let factor = -(nf - 2.0) * l_j * eps.powf(nf / (nf - 2.0));
    let _ = l_i;
    a_i.iter().zip(a_j).map(|(x, y)| factor * (x - y)).collect()
}

/// Reduced state: p bubbles with weights, centers, and concentrations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleConfiguration {
    pub alphas: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
}

impl BubbleConfiguration {
    pub fn new(
        alphas: Vec<f64>,
        centers: Vec<Vec<f64>>,
        lambdas: Vec<f64>,
    ) -> Result<Self, BubbleError> {
        if alphas.len() != centers.len() || alphas.len() != lambdas.len() {
            return Err(BubbleError::Shape(format!(
                "{} weights, {} centers, {} scales",
                alphas.len(),
                centers.len(),
                lambdas.len()
            )));
        }
        if let Some(&l) = lambdas.iter().find(|&&l| l <= 0.0) {
            return Err(BubbleError::InvalidScale(l));
        }
        if alphas.iter().any(|&a| a <= 0.0) {
            return Err(BubbleError::Shape("weights must be positive".into()));
        }
        Ok(BubbleConfiguration {
            alphas,
            centers,
            lambdas,
        })
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Restriction to a subset of bubbles (indices need not be sorted).
    pub fn select(&self, idx: &[usize]) -> BubbleConfiguration {
        BubbleConfiguration {
            alphas: idx.iter().map(|&i| self.alphas[i]).collect(),
            centers: idx.iter().map(|&i| self.centers[i].clone()).collect(),
            lambdas: idx.iter().map(|&i| self.lambdas[i]).collect(),
        }
    }
}

/// Evaluates Σ α_i Pδ_i pointwise for quadrature and fitting.
///
/// The harmonic correction uses the method of images on balls. On generic
/// domains it is dropped: inside V(p,ε) the correction is O((λ d)^{-(n-2)})
/// relative, below the quadrature noise this evaluator feeds.
#[derive(Debug, Clone)]
pub struct BubbleFieldEvaluator {
    domain: Domain,
    analytic_correction: bool,
}

impl BubbleFieldEvaluator {
    pub fn new(domain: Domain) -> Self {
        let analytic_correction = domain.is_ball().is_some();
        BubbleFieldEvaluator {
            domain,
            analytic_correction,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn corrects_projection(&self) -> bool {
        self.analytic_correction
    }

    /// Images-formula H(a, x) on the ball (paper normalization).
    fn images_h(&self, a: &[f64], x: &[f64]) -> f64 {
        let (center, radius) = self.domain.is_ball().expect("correction needs a ball");
        let n = self.domain.dim() as f64;
        let u = vecn::scale(&vecn::sub(a, center), 1.0 / radius);
        let v = vecn::scale(&vecn::sub(x, center), 1.0 / radius);
        let s_sq = vecn::norm_sq(&u) * vecn::norm_sq(&v) - 2.0 * vecn::dot(&u, &v) + 1.0;
        radius.powf(2.0 - n) * s_sq.powf(-(n - 2.0) / 2.0)
    }

    /// Pδ_{a,λ}(x) to leading order: δ − c_n λ^{-(n-2)/2} H(a, x) on balls.
    pub fn p_delta(&self, a: &[f64], lambda: f64, x: &[f64]) -> f64 {
        let n = self.domain.dim();
        let nf = n as f64;
        let d = delta(n, a, lambda, x);
        if self.analytic_correction {
            d - bubble_norm_const(n) * lambda.powf(-(nf - 2.0) / 2.0) * self.images_h(a, x)
        } else {
            d
        }
    }

    /// u(x) = Σ α_i Pδ_i(x), summed in the caller-provided order.
    pub fn eval(&self, config: &BubbleConfiguration, x: &[f64]) -> f64 {
        config
            .alphas
            .iter()
            .zip(config.centers.iter().zip(&config.lambdas))
            .map(|(alpha, (a, &l))| alpha * self.p_delta(a, l, x))
            .sum()
    }
}

/// The spec-level projected bubble: exact harmonic correction by walks on
/// the Monte Carlo backend, images expansion on the analytic one.
pub fn p_delta(
    a: &[f64],
    lambda: f64,
    x: &[f64],
    greens: &GreensEvaluator,
) -> Result<Estimate, BubbleError> {
    if lambda <= 0.0 {
        return Err(BubbleError::InvalidScale(lambda));
    }
    let n = greens.domain().dim();
    let d = delta(n, a, lambda, x);
    if greens.is_analytic() {
        let ev = BubbleFieldEvaluator::new(greens.domain().clone());
        return Ok(Estimate {
            value: ev.p_delta(a, lambda, x),
            std_error: 0.0,
            walks: 0,
            truncated: 0,
        });
    }
    let a_owned = a.to_vec();
    let trace = move |z: &[f64]| delta(n, &a_owned, lambda, z);
    let h = greens.harmonic_extension(x, &trace)?;
    Ok(Estimate {
        value: d - h.value,
        ..h
    })
}

/// Membership report for the neighbourhood-at-infinity V(p, ε).
#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub member: bool,
    pub violated: Vec<String>,
    /// ‖u − Σ α_i Pδ_i‖ < ε holds identically for v ≡ 0 states.
    pub residual_clause: &'static str,
}

/// Check the defining clauses of V(p, ε) for a v ≡ 0 configuration.
pub fn membership_v_p_eps(
    config: &BubbleConfiguration,
    eps: f64,
    kfield: &KField,
    domain: &Domain,
) -> MembershipReport {
    let n = domain.dim() as f64;
    let p = config.len();
    let mut violated = Vec::new();
    for i in 0..p {
        if config.lambdas[i] <= 1.0 / eps {
            violated.push(format!("lambda[{i}] = {} <= 1/eps", config.lambdas[i]));
        }
        match domain.dist_boundary(&config.centers[i]) {
            Ok(d) => {
                if config.lambdas[i] * d <= 1.0 / eps {
                    violated.push(format!(
                        "lambda[{i}]*d[{i}] = {} <= 1/eps",
                        config.lambdas[i] * d
                    ));
                }
            }
            Err(_) => violated.push(format!("center[{i}] not interior")),
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let eps_ij = epsilon_ij(
                domain.dim(),
                &config.centers[i],
                config.lambdas[i],
                &config.centers[j],
                config.lambdas[j],
            );
            if eps_ij >= eps {
                violated.push(format!("eps[{i}][{j}] = {eps_ij} >= eps"));
            }
        }
    }
    let weights: Vec<f64> = (0..p)
        .map(|i| config.alphas[i].powf(4.0 / (n - 2.0)) * kfield.eval(&config.centers[i]))
        .collect();
    for i in 0..p {
        for j in 0..p {
            if i != j {
                let ratio = weights[i] / weights[j];
                if (ratio - 1.0).abs() >= eps {
                    violated.push(format!("alpha-K balance [{i}]/[{j}] = {ratio}"));
                }
            }
        }
    }
    MembershipReport {
        member: violated.is_empty(),
        violated,
        residual_clause: "satisfied by construction (v = 0)",
    }
}
