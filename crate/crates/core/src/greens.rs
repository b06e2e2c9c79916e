//! Green's function of the Laplacian with Dirichlet boundary conditions.
//!
//! The decomposition used throughout is G(x,y) = |x-y|^{-(n-2)} - H(x,y)
//! with H(x,·) harmonic and G(x,·) = 0 on ∂Ω. No dimensional constant is
//! folded into G; the interaction matrices downstream expect exactly this
//! normalization.
//!
//! Two backends:
//! * `Analytic` — method of images, balls only.
//! * `MonteCarlo` — walk-on-spheres estimate of the harmonic extension,
//!   any domain, with antithetic direction pairs and per-walk substreams.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{Domain, GeometryError};
use crate::rng::substream;
use crate::vecn;

#[derive(Debug, Error)]
pub enum GreensError {
    #[error("analytic Green backend requires a ball domain")]
    AnalyticNeedsBall,
    #[error("harmonic extension requires the Monte Carlo backend")]
    NeedsMonteCarlo,
    #[error("G(x,y) is singular at x = y")]
    Singularity,
    #[error("point must be strictly interior: {0}")]
    NotInterior(#[from] GeometryError),
    #[error("invalid walk parameters: {0}")]
    InvalidParams(String),
}

/// Walk-on-spheres tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkParams {
    /// Number of walks per estimate (antithetic pairs count as two).
    pub walks: u64,
    /// Absolute shell width at which a walk is declared to have exited.
    pub shell: f64,
    /// Hard cap on steps per walk; hitting it is counted, not fatal.
    pub max_steps: u32,
    /// Evaluator seed; per-walk substreams derive from (seed, pair index).
    pub seed: u64,
    /// Mirror every direction of each odd walk (variance reduction).
    pub antithetic: bool,
}

pub const DEFAULT_SHELL_FRAC: f64 = 1e-4;
pub const DEFAULT_WALKS: u64 = 20_000;
pub const DEFAULT_MAX_STEPS: u32 = 10_000;

impl WalkParams {
    pub fn for_domain(domain: &Domain, seed: u64) -> Self {
        WalkParams {
            walks: DEFAULT_WALKS,
            shell: DEFAULT_SHELL_FRAC * domain.diameter(),
            max_steps: DEFAULT_MAX_STEPS,
            seed,
            antithetic: true,
        }
    }

    fn validate(&self, domain: &Domain) -> Result<(), GreensError> {
        if self.walks < 1 {
            return Err(GreensError::InvalidParams("walk count must be >= 1".into()));
        }
        if self.shell <= 0.0 || self.shell >= 0.1 * domain.diameter() {
            return Err(GreensError::InvalidParams(format!(
                "shell width {} must be positive and small against the diameter {}",
                self.shell,
                domain.diameter()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Analytic,
    MonteCarlo(WalkParams),
}

/// Point estimate with attached Monte Carlo diagnostics. Analytic values
/// carry zero standard error and no walks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub walks: u64,
    pub truncated: u64,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Estimate {
            value,
            std_error: 0.0,
            walks: 0,
            truncated: 0,
        }
    }
}

pub struct GreensEvaluator {
    domain: Domain,
    backend: Backend,
}

impl GreensEvaluator {
    /// Method-of-images evaluator; errors unless the domain is a ball.
    pub fn analytic(domain: Domain) -> Result<Self, GreensError> {
        if domain.is_ball().is_none() {
            return Err(GreensError::AnalyticNeedsBall);
        }
        Ok(GreensEvaluator {
            domain,
            backend: Backend::Analytic,
        })
    }

    pub fn monte_carlo(domain: Domain, params: WalkParams) -> Result<Self, GreensError> {
        params.validate(&domain)?;
        Ok(GreensEvaluator {
            domain,
            backend: Backend::MonteCarlo(params),
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.backend, Backend::Analytic)
    }

    pub fn walk_params(&self) -> Option<&WalkParams> {
        match &self.backend {
            Backend::Analytic => None,
            Backend::MonteCarlo(p) => Some(p),
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match &self.backend {
            Backend::Analytic => "analytic (method of images)",
            Backend::MonteCarlo(_) => "monte-carlo (walk on spheres)",
        }
    }

    fn require_interior(&self, x: &[f64]) -> Result<(), GreensError> {
        let d = self.domain.dist_boundary(x)?;
        if d <= 0.0 {
            return Err(GreensError::NotInterior(GeometryError::OutsideDomain {
                signed_distance: 0.0,
            }));
        }
        Ok(())
    }

    /// Regular part H(x,y) of the Green's function.
    pub fn regular_part(&self, x: &[f64], y: &[f64]) -> Result<Estimate, GreensError> {
        self.require_interior(x)?;
        self.require_interior(y)?;
        match &self.backend {
            Backend::Analytic => Ok(Estimate::exact(self.images_h(x, y))),
            Backend::MonteCarlo(params) => {
                let n = self.domain.dim();
                let pow = -(n as f64 - 2.0);
                self.estimate_extension(y, params, &|z: &[f64]| vecn::dist(x, z).powf(pow))
            }
        }
    }

    /// G(x,y) = |x-y|^{-(n-2)} - H(x,y); singular on the diagonal.
    pub fn greens(&self, x: &[f64], y: &[f64]) -> Result<Estimate, GreensError> {
        let r = vecn::dist(x, y);
        if r == 0.0 {
            return Err(GreensError::Singularity);
        }
        let h = self.regular_part(x, y)?;
        let kernel = r.powf(-(self.domain.dim() as f64 - 2.0));
        Ok(Estimate {
            value: kernel - h.value,
            ..h
        })
    }

    /// Harmonic function with the given Dirichlet data, evaluated at `x`.
    /// Monte Carlo backend only; unbiased up to O(shell) projection bias.
    pub fn harmonic_extension(
        &self,
        x: &[f64],
        boundary_data: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<Estimate, GreensError> {
        self.require_interior(x)?;
        match &self.backend {
            Backend::Analytic => Err(GreensError::NeedsMonteCarlo),
            Backend::MonteCarlo(params) => self.estimate_extension(x, params, boundary_data),
        }
    }

    /// Gradient of the Robin function a ↦ H(a,a) by central differences.
    pub fn robin_gradient(&self, a: &[f64], step: f64) -> Result<Vec<f64>, GreensError> {
        let mut g = vec![0.0; a.len()];
        let mut p = a.to_vec();
        for k in 0..a.len() {
            p[k] = a[k] + step;
            let hp = self.regular_part(&p, &p)?.value;
            p[k] = a[k] - step;
            let hm = self.regular_part(&p, &p)?.value;
            p[k] = a[k];
            g[k] = (hp - hm) / (2.0 * step);
        }
        Ok(g)
    }

    /// ∂H(x,y)/∂x by central differences (first slot only).
    pub fn regular_part_grad_x(
        &self,
        x: &[f64],
        y: &[f64],
        step: f64,
    ) -> Result<Vec<f64>, GreensError> {
        let mut g = vec![0.0; x.len()];
        let mut p = x.to_vec();
        for k in 0..x.len() {
            p[k] = x[k] + step;
            let hp = self.regular_part(&p, y)?.value;
            p[k] = x[k] - step;
            let hm = self.regular_part(&p, y)?.value;
            p[k] = x[k];
            g[k] = (hp - hm) / (2.0 * step);
        }
        Ok(g)
    }

    /// Images formula mapped from the unit ball: on B(0,1),
    /// H(x,y) = (|y|²|x|² - 2x·y + 1)^{-(n-2)/2}, and H(x,0) = 1.
    fn images_h(&self, x: &[f64], y: &[f64]) -> f64 {
        let (center, radius) = self.domain.is_ball().expect("analytic backend is ball-only");
        let n = self.domain.dim() as f64;
        let u = vecn::scale(&vecn::sub(x, center), 1.0 / radius);
        let v = vecn::scale(&vecn::sub(y, center), 1.0 / radius);
        let s_sq = vecn::norm_sq(&u) * vecn::norm_sq(&v) - 2.0 * vecn::dot(&u, &v) + 1.0;
        radius.powf(2.0 - n) * s_sq.powf(-(n - 2.0) / 2.0)
    }

    /// Mean and standard error over antithetic walk pairs started at `start`.
    /// Pair k draws from substream (seed, k); schedule-independent because
    /// per-pair values are collected in index order before reduction.
    fn estimate_extension(
        &self,
        start: &[f64],
        params: &WalkParams,
        boundary_data: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<Estimate, GreensError> {
        let pairs = if params.antithetic {
            params.walks.div_ceil(2)
        } else {
            params.walks
        };
        let results: Vec<(f64, u64)> = (0..pairs)
            .into_par_iter()
            .map(|k| {
                let mut rng = substream(params.seed, k);
                if params.antithetic {
                    let (v1, t1) = self.walk(start, params, &mut rng, false, boundary_data);
                    let mut rng = substream(params.seed, k);
                    let (v2, t2) = self.walk(start, params, &mut rng, true, boundary_data);
                    (0.5 * (v1 + v2), t1 + t2)
                } else {
                    self.walk(start, params, &mut rng, false, boundary_data)
                }
            })
            .collect();

        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut truncated = 0;
        for (i, (v, t)) in results.iter().enumerate() {
            truncated += t;
            let delta = v - mean;
            mean += delta / (i as f64 + 1.0);
            m2 += delta * (v - mean);
        }
        let n_samples = results.len() as f64;
        let std_error = if results.len() > 1 {
            (m2 / (n_samples * (n_samples - 1.0))).sqrt()
        } else {
            0.0
        };
        Ok(Estimate {
            value: mean,
            std_error,
            walks: if params.antithetic { 2 * pairs } else { pairs },
            truncated,
        })
    }

    /// One walk; returns (boundary value at exit, truncated flag as 0/1).
    fn walk(
        &self,
        start: &[f64],
        params: &WalkParams,
        rng: &mut rand_chacha::ChaCha8Rng,
        mirror: bool,
        boundary_data: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> (f64, u64) {
        let dim = self.domain.dim();
        let mut pos = start.to_vec();
        let mut dir = vec![0.0; dim];
        let mut truncated = 0;
        for _ in 0..params.max_steps {
            let d = -self.domain.signed_distance(&pos);
            if d <= params.shell {
                let exit = self
                    .domain
                    .closest_boundary_point(&pos)
                    .unwrap_or_else(|_| pos.clone());
                return (boundary_data(&exit), truncated);
            }
            vecn::unit_sphere_into(rng, &mut dir);
            let sign = if mirror { -d } else { d };
            for (p, v) in pos.iter_mut().zip(&dir) {
                *p += sign * v;
            }
        }
        truncated = 1;
        let exit = self
            .domain
            .closest_boundary_point(&pos)
            .unwrap_or_else(|_| pos.clone());
        (boundary_data(&exit), truncated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SdfKind;

    fn unit_ball(n: usize) -> Domain {
        Domain::ball(vec![0.0; n], 1.0).unwrap()
    }

    fn mc_eval(domain: Domain, walks: u64, seed: u64) -> GreensEvaluator {
        let mut p = WalkParams::for_domain(&domain, seed);
        p.walks = walks;
        GreensEvaluator::monte_carlo(domain, p).unwrap()
    }

    #[test]
    fn images_h_at_center_is_one() {
        let g = GreensEvaluator::analytic(unit_ball(4)).unwrap();
        let h = g.regular_part(&[0.0; 4], &[0.0; 4]).unwrap();
        assert!((h.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn greens_center_to_half_radius() {
        let g = GreensEvaluator::analytic(unit_ball(4)).unwrap();
        let v = g.greens(&[0.0; 4], &[0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!((v.value - 3.0).abs() < 1e-12, "got {}", v.value);
    }

    #[test]
    fn greens_vanishes_toward_boundary() {
        let g = GreensEvaluator::analytic(unit_ball(4)).unwrap();
        let x = [0.2, 0.1, 0.0, 0.0];
        let mut prev = f64::INFINITY;
        for r in [0.9, 0.99, 0.999] {
            let v = g.greens(&x, &[r, 0.0, 0.0, 0.0]).unwrap().value;
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        assert!(prev < 5e-2);
    }

    #[test]
    fn greens_positive_for_interior_pairs() {
        let g = GreensEvaluator::analytic(unit_ball(4)).unwrap();
        let mut rng = substream(23, 0);
        for _ in 0..100 {
            let x = g.domain().sample_interior(&mut rng);
            let y = g.domain().sample_interior(&mut rng);
            if vecn::dist(&x, &y) < 1e-6 {
                continue;
            }
            assert!(g.greens(&x, &y).unwrap().value > 0.0);
        }
    }

    #[test]
    fn singularity_and_domain_errors() {
        let g = GreensEvaluator::analytic(unit_ball(4)).unwrap();
        assert!(matches!(
            g.greens(&[0.1, 0.0, 0.0, 0.0], &[0.1, 0.0, 0.0, 0.0]),
            Err(GreensError::Singularity)
        ));
        assert!(g.regular_part(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).is_err());
    }

    #[test]
    fn constant_data_extends_exactly() {
        let g = mc_eval(unit_ball(4), 64, 1);
        let e = g
            .harmonic_extension(&[0.3, 0.0, 0.0, 0.0], &|_z: &[f64]| 1.0)
            .unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn linear_data_averages_to_center_value() {
        let g = mc_eval(unit_ball(4), 4000, 2);
        let e = g
            .harmonic_extension(&[0.0; 4], &|z: &[f64]| 1.5 * z[0] - 0.5 * z[2])
            .unwrap();
        assert!(
            e.value.abs() <= 3.0 * e.std_error.max(1e-6),
            "value {} se {}",
            e.value,
            e.std_error
        );
    }

    #[test]
    fn mc_regular_part_matches_images() {
        let g = mc_eval(unit_ball(4), 20_000, 3);
        let exact = GreensEvaluator::analytic(unit_ball(4)).unwrap();
        let x = [0.3, -0.2, 0.1, 0.0];
        let y = [-0.1, 0.4, 0.0, 0.2];
        let est = g.regular_part(&x, &y).unwrap();
        let reference = exact.regular_part(&x, &y).unwrap().value;
        let rel = (est.value - reference).abs() / reference;
        assert!(rel < 0.02, "rel err {rel}");
    }

    #[test]
    fn mc_symmetry_within_error_bars() {
        let g = mc_eval(unit_ball(4), 20_000, 4);
        let x = [0.4, 0.0, 0.0, 0.0];
        let y = [-0.3, 0.2, 0.0, 0.0];
        let a = g.greens(&x, &y).unwrap();
        let b = g.greens(&y, &x).unwrap();
        let combined = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(
            (a.value - b.value).abs() <= 3.0 * combined,
            "asym {} vs {} (3se {})",
            a.value,
            b.value,
            3.0 * combined
        );
    }

    #[test]
    fn regular_part_mean_value_property() {
        // Mean of H(x,·) over a small sphere around y equals H(x,y).
        let g = mc_eval(unit_ball(4), 4000, 5);
        let x = [0.35, 0.0, 0.0, 0.0];
        let y = [-0.2, 0.15, 0.0, 0.0];
        let center = g.regular_part(&x, &y).unwrap();
        let mut rng = substream(99, 0);
        let radius = 0.05;
        let m = 24;
        let mut mean = 0.0;
        let mut se_sq = 0.0;
        for _ in 0..m {
            let dir = vecn::unit_sphere(&mut rng, 4);
            let p = vecn::add_scaled(&y, radius, &dir);
            let e = g.regular_part(&x, &p).unwrap();
            mean += e.value / m as f64;
            se_sq += (e.std_error / m as f64).powi(2);
        }
        let combined = (se_sq + center.std_error.powi(2)).sqrt();
        assert!(
            (mean - center.value).abs() <= 3.0 * combined.max(1e-4),
            "mean {} vs {} (3se {})",
            mean,
            center.value,
            3.0 * combined
        );
    }

    #[test]
    fn self_regular_part_positive_on_generic_domain() {
        let domain = Domain::sdf(SdfKind::Ellipsoid {
            center: vec![0.0; 4],
            semi_axes: vec![1.0, 0.9, 1.1, 0.8],
        })
        .unwrap();
        let g = mc_eval(domain, 2000, 6);
        let y = [0.2, 0.1, -0.1, 0.0];
        let h = g.regular_part(&y, &y).unwrap();
        assert!(h.value > 0.0);
    }

    #[test]
    fn estimates_are_bit_reproducible() {
        let x = [0.3, 0.0, 0.0, 0.0];
        let y = [-0.1, 0.2, 0.0, 0.0];
        let a = mc_eval(unit_ball(4), 2000, 7).regular_part(&x, &y).unwrap();
        let b = mc_eval(unit_ball(4), 2000, 7).regular_part(&x, &y).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn truncation_is_counted() {
        let domain = unit_ball(4);
        let mut p = WalkParams::for_domain(&domain, 8);
        p.walks = 100;
        p.max_steps = 1;
        let g = GreensEvaluator::monte_carlo(domain, p).unwrap();
        let e = g.regular_part(&[0.0; 4], &[0.1, 0.0, 0.0, 0.0]).unwrap();
        assert!(e.truncated > 0);
    }
}
