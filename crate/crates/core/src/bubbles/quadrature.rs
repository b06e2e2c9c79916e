//! Monte Carlo evaluation of J(u) = ∫|∇u|² / (∫ K |u|^{2n/(n-2)})^{(n-2)/n}.
//!
//! Both integrals concentrate at scale 1/λ around the bubble centers, so the
//! sampler stratifies over a mixture of per-bubble layers (radial
//! inverse-CDF of the normalized δ^{(n+2)/(n-2)} profile, which samples in
//! closed form) plus one uniform bounding-box layer.
//!
//! The numerator uses the divergence identity ∫|∇u|² = ∫ u·(−Δu) with
//! −ΔPδ_i = δ_i^{(n+2)/(n-2)}, which keeps the integrand concentrated and
//! makes J(t·u) = J(u) hold up to rounding with shared samples.

use rand::Rng;
use serde::Serialize;

use super::{constants, delta, BubbleConfiguration, BubbleError, BubbleFieldEvaluator};
use crate::geometry::Domain;
use crate::kfield::KField;
use crate::rng::substream;
use crate::vecn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureParams {
    pub budget: usize,
    pub seed: u64,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        QuadratureParams {
            budget: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct JEstimate {
    pub value: f64,
    pub std_error: f64,
    pub numerator: f64,
    pub numerator_std_error: f64,
    pub denominator: f64,
    pub denominator_std_error: f64,
    pub samples: usize,
}

/// Canonical bubble order: descending λ, ties broken lexicographically by
/// center. Makes the estimate exactly invariant under relabeling.
pub(crate) fn canonical_order(config: &BubbleConfiguration) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..config.len()).collect();
    idx.sort_by(|&i, &j| {
        config.lambdas[j]
            .partial_cmp(&config.lambdas[i])
            .unwrap()
            .then_with(|| {
                config.centers[i]
                    .partial_cmp(&config.centers[j])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

/// Density of the normalized bubble-power layer at x:
/// q(x) = (n/ω_{n-1}) λⁿ (1 + λ²|x-a|²)^{-(n+2)/2}.
fn layer_density(n: usize, a: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let nf = n as f64;
    let norm = nf / constants::sphere_area(n);
    norm * lambda.powi(n as i32) * (1.0 + lambda * lambda * vecn::dist_sq(x, a)).powf(-(nf + 2.0) / 2.0)
}

/// Draw from the bubble-power layer: u = U^{2/n}, r = √(u/(1-u)) gives the
/// exact radial inverse CDF of r^{n-1}(1+r²)^{-(n+2)/2}.
fn sample_layer<R: Rng>(rng: &mut R, n: usize, a: &[f64], lambda: f64) -> Vec<f64> {
    let u: f64 = rng.gen::<f64>().powf(2.0 / n as f64);
    let r = (u / (1.0 - u).max(1e-300)).sqrt();
    let dir = vecn::unit_sphere(rng, n);
    vecn::add_scaled(a, r / lambda, &dir)
}

pub fn functional_j(
    config: &BubbleConfiguration,
    kfield: &KField,
    domain: &Domain,
    params: &QuadratureParams,
) -> Result<JEstimate, BubbleError> {
    let n = domain.dim();
    let nf = n as f64;
    let p = config.len();
    if p == 0 {
        return Err(BubbleError::Shape("empty configuration".into()));
    }
    let order = canonical_order(config);
    let canon = config.select(&order);
    let evaluator = BubbleFieldEvaluator::new(domain.clone());
    let bbox = domain.bounding_box();
    let bbox_vol: f64 = bbox
        .lo
        .iter()
        .zip(&bbox.hi)
        .map(|(l, h)| h - l)
        .product();
    let layers = p + 1; // p bubble layers + uniform box layer
    let crit_exp = (nf + 2.0) / (nf - 2.0);
    let dens_exp = 2.0 * nf / (nf - 2.0);

    let mixture_density = |x: &[f64]| -> f64 {
        let mut q = 0.0;
        for i in 0..p {
            q += layer_density(n, &canon.centers[i], canon.lambdas[i], x);
        }
        let inside_box = bbox
            .lo
            .iter()
            .zip(&bbox.hi)
            .zip(x)
            .all(|((l, h), v)| v >= l && v <= h);
        if inside_box {
            q += 1.0 / bbox_vol;
        }
        q / layers as f64
    };

    let total = params.budget.max(layers);
    let mut sum_num = 0.0;
    let mut sum_den = 0.0;
    let mut sum_num2 = 0.0;
    let mut sum_den2 = 0.0;
    let mut sum_nd = 0.0;
    for s in 0..total {
        let mut rng = substream(params.seed, s as u64);
        let layer = s % layers;
        let x = if layer < p {
            sample_layer(&mut rng, n, &canon.centers[layer], canon.lambdas[layer])
        } else {
            bbox.sample(&mut rng)
        };
        if !domain.contains(&x) {
            continue; // integrand extended by zero outside Ω
        }
        let q = mixture_density(&x);
        if q <= 0.0 {
            continue;
        }
        let w = 1.0 / q;
        let u_val = evaluator.eval(&canon, &x);
        let source: f64 = (0..p)
            .map(|i| {
                canon.alphas[i]
                    * delta(n, &canon.centers[i], canon.lambdas[i], &x).powf(crit_exp)
            })
            .sum();
        let f_num = u_val * source * w;
        let f_den = kfield.eval(&x) * u_val.abs().powf(dens_exp) * w;
        sum_num += f_num;
        sum_den += f_den;
        sum_num2 += f_num * f_num;
        sum_den2 += f_den * f_den;
        sum_nd += f_num * f_den;
    }

    let m = total as f64;
    let num = sum_num / m;
    let den = sum_den / m;
    if den.is_nan() || den <= 0.0 {
        return Err(BubbleError::QuadratureFailure(den));
    }
    let var_num = ((sum_num2 / m - num * num) / m).max(0.0);
    let var_den = ((sum_den2 / m - den * den) / m).max(0.0);
    let cov = (sum_nd / m - num * den) / m;

    let c = (nf - 2.0) / nf;
    let value = num / den.powf(c);
    let rel_var =
        var_num / (num * num) + c * c * var_den / (den * den) - 2.0 * c * cov / (num * den);
    let std_error = value.abs() * rel_var.max(0.0).sqrt();

    Ok(JEstimate {
        value,
        std_error,
        numerator: num,
        numerator_std_error: var_num.sqrt(),
        denominator: den,
        denominator_std_error: var_den.sqrt(),
        samples: total,
    })
}
