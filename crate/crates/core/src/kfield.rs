//! The prescribed function K and its assumption checks.
//!
//! K is assembled from power-flatness templates
//! `K(y) + Σ_k b_k |(x-y)_k|^β` pinned at registered critical points, glued
//! to a boundary-decaying background by smooth partition functions. The
//! template holds *exactly* inside each ball B(y, η); outside the blend
//! radius K equals the background, whose inward growth makes ∂K/∂ν < 0 on
//! ∂Ω when the decay rate is positive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Domain;
use crate::vecn;

#[derive(Debug, Error)]
pub enum KFieldError {
    #[error("critical point {index}: location has {got} components, domain is {expected}-dimensional")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("critical point {index}: template radius must be positive, got {eta}")]
    InvalidRadius { index: usize, eta: f64 },
    #[error("critical point {index}: base value must be positive, got {k0}")]
    InvalidBase { index: usize, k0: f64 },
    #[error("critical point {index}: coefficient vector has {got} entries, expected {expected}")]
    CoefficientCount {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// One registered critical point of K with its flatness template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSpec {
    /// Location y, strictly interior.
    pub y: Vec<f64>,
    /// Flatness order β, required in (n-2, n).
    pub beta: f64,
    /// Template coefficients b_1..b_n, all nonzero.
    pub b: Vec<f64>,
    /// Template radius η: the identity holds exactly on B(y, η).
    pub eta: f64,
    /// K(y), the template's base value.
    #[serde(rename = "K0")]
    pub k0: f64,
}

impl CriticalPointSpec {
    /// Number of negative template coefficients (the Morse-like index ĩ).
    pub fn morse_like_index(&self) -> usize {
        self.b.iter().filter(|&&c| c < 0.0).count()
    }

    fn template(&self, x: &[f64]) -> f64 {
        self.k0
            + self
                .b
                .iter()
                .zip(x.iter().zip(&self.y))
                .map(|(bk, (xi, yi))| bk * (xi - yi).abs().powf(self.beta))
                .sum::<f64>()
    }

    fn template_grad(&self, x: &[f64], out: &mut [f64]) {
        for (k, g) in out.iter_mut().enumerate() {
            let t = x[k] - self.y[k];
            *g = self.beta * self.b[k] * t.abs().powf(self.beta - 1.0) * t.signum();
        }
    }
}

/// Radially decaying envelope; rate 0 gives a constant background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub decay_rate: f64,
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope { decay_rate: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct KField {
    domain: Domain,
    specs: Vec<CriticalPointSpec>,
    envelope: Envelope,
    base_level: f64,
    /// Outer blend radius per point; the partition function falls from 1 at
    /// η to 0 here. Kept clear of neighbouring blend balls.
    blend_outer: Vec<f64>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        0.0
    } else {
        6.0 * t * (1.0 - t)
    }
}

impl KField {
    pub fn new(
        domain: Domain,
        specs: Vec<CriticalPointSpec>,
        envelope: Envelope,
    ) -> Result<Self, KFieldError> {
        let n = domain.dim();
        for (i, s) in specs.iter().enumerate() {
            if s.y.len() != n {
                return Err(KFieldError::DimensionMismatch {
                    index: i,
                    expected: n,
                    got: s.y.len(),
                });
            }
            if s.b.len() != n {
                return Err(KFieldError::CoefficientCount {
                    index: i,
                    expected: n,
                    got: s.b.len(),
                });
            }
            if s.eta <= 0.0 {
                return Err(KFieldError::InvalidRadius {
                    index: i,
                    eta: s.eta,
                });
            }
            if s.k0 <= 0.0 {
                return Err(KFieldError::InvalidBase {
                    index: i,
                    k0: s.k0,
                });
            }
        }
        let base_level = if specs.is_empty() {
            1.0
        } else {
            specs.iter().map(|s| s.k0).sum::<f64>() / specs.len() as f64
        };
        let blend_outer = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let nearest = specs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| vecn::dist(&s.y, &o.y))
                    .fold(f64::INFINITY, f64::min);
                (2.0 * s.eta).min(0.45 * nearest).max(s.eta * 1.000001)
            })
            .collect();
        Ok(KField {
            domain,
            specs,
            envelope,
            base_level,
            blend_outer,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn critical_points(&self) -> &[CriticalPointSpec] {
        &self.specs
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    /// Minimum distance between registered critical points.
    pub fn min_separation(&self) -> Option<f64> {
        let mut best = f64::INFINITY;
        for i in 0..self.specs.len() {
            for j in (i + 1)..self.specs.len() {
                best = best.min(vecn::dist(&self.specs[i].y, &self.specs[j].y));
            }
        }
        (best < f64::INFINITY).then_some(best)
    }

    /// The whole field scaled by c > 0 (templates, background, everything).
    pub fn scaled(&self, c: f64) -> KField {
        let mut out = self.clone();
        out.base_level *= c;
        for s in &mut out.specs {
            s.k0 *= c;
            for bk in &mut s.b {
                *bk *= c;
            }
        }
        out
    }

    /// Smooth background profile: positive inside, gradient strictly inward
    /// against ν on ∂Ω when decay_rate > 0.
    fn background(&self, x: &[f64]) -> f64 {
        self.base_level * (1.0 + self.envelope.decay_rate * self.profile(x))
    }

    fn profile(&self, x: &[f64]) -> f64 {
        let diam = self.domain.diameter();
        if let Some((center, radius)) = self.domain.is_ball() {
            // (r² - |x-c|²)/diam² is smooth everywhere, unlike d(x,∂Ω).
            (radius * radius - vecn::dist_sq(x, center)) / (diam * diam)
        } else {
            -self.domain.signed_distance(x) / diam
        }
    }

    fn background_grad(&self, x: &[f64], out: &mut [f64]) {
        let diam = self.domain.diameter();
        let scale = self.base_level * self.envelope.decay_rate;
        if let Some((center, _)) = self.domain.is_ball() {
            for (k, g) in out.iter_mut().enumerate() {
                *g = scale * (-2.0 * (x[k] - center[k]) / (diam * diam));
            }
        } else {
            let h = 1e-6 * diam;
            let mut p = x.to_vec();
            for (k, g) in out.iter_mut().enumerate() {
                p[k] = x[k] + h;
                let fp = self.domain.signed_distance(&p);
                p[k] = x[k] - h;
                let fm = self.domain.signed_distance(&p);
                p[k] = x[k];
                *g = scale * (-(fp - fm) / (2.0 * h) / diam);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut k = self.background(x);
        for (s, &outer) in self.specs.iter().zip(&self.blend_outer) {
            let rho = vecn::dist(x, &s.y);
            if rho >= outer {
                continue;
            }
            let w = 1.0 - smoothstep((rho - s.eta) / (outer - s.eta));
            if w > 0.0 {
                k += w * (s.template(x) - self.background(x));
            }
        }
        k
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut g = vec![0.0; n];
        self.background_grad(x, &mut g);
        let bg = self.background(x);
        let mut tg = vec![0.0; n];
        let mut bgg = vec![0.0; n];
        for (s, &outer) in self.specs.iter().zip(&self.blend_outer) {
            let rho = vecn::dist(x, &s.y);
            if rho >= outer {
                continue;
            }
            let u = (rho - s.eta) / (outer - s.eta);
            let w = 1.0 - smoothstep(u);
            s.template_grad(x, &mut tg);
            self.background_grad(x, &mut bgg);
            // w * (∇T - ∇B) + (T - B) * ∇w
            let dwdrho = -smoothstep_deriv(u) / (outer - s.eta);
            let tmb = s.template(x) - bg;
            for k in 0..n {
                g[k] += w * (tg[k] - bgg[k]);
                if dwdrho != 0.0 && rho > 0.0 {
                    g[k] += tmb * dwdrho * (x[k] - s.y[k]) / rho;
                }
            }
        }
        g
    }

    /// Sample-based verification of the standing assumptions. Failures are
    /// report entries, never errors.
    pub fn check_assumptions(&self, budget: usize, seed: u64) -> AssumptionReport {
        let n = self.dim();
        let mut violations = Vec::new();

        for (i, s) in self.specs.iter().enumerate() {
            let margin = 1e-9;
            if s.beta <= n as f64 - 2.0 + margin || s.beta >= n as f64 - margin {
                violations.push(Violation::FlatnessOrder {
                    point: i,
                    beta: s.beta,
                });
            }
            for (k, &bk) in s.b.iter().enumerate() {
                if bk == 0.0 {
                    violations.push(Violation::ZeroCoefficient { point: i, axis: k });
                }
            }
            match self.domain.dist_boundary(&s.y) {
                Ok(d) if d > 4.0 * s.eta => {}
                Ok(d) => violations.push(Violation::TemplateBallEscapes {
                    point: i,
                    boundary_dist: d,
                    needed: 4.0 * s.eta,
                }),
                Err(_) => violations.push(Violation::TemplateBallEscapes {
                    point: i,
                    boundary_dist: 0.0,
                    needed: 4.0 * s.eta,
                }),
            }
            for (j, o) in self.specs.iter().enumerate().skip(i + 1) {
                let sep = vecn::dist(&s.y, &o.y);
                let needed = 2.0 * s.eta.max(o.eta);
                if sep <= needed {
                    violations.push(Violation::Separation {
                        first: i,
                        second: j,
                        dist: sep,
                        needed,
                    });
                }
            }
        }

        // (A1): one-sided inward difference of K along the outward normal.
        let mut rng = crate::rng::substream(seed, 0);
        let boundary_samples = budget.max(8);
        let h = 1e-5 * self.domain.diameter();
        let mut a1_min = f64::INFINITY;
        let mut a1_worst = vec![0.0; n];
        for _ in 0..boundary_samples {
            let z = self.domain.sample_boundary(&mut rng);
            let Ok(nu) = self.domain.normal_at(&z) else {
                continue;
            };
            let inner = vecn::add_scaled(&z, -h, &nu);
            let deriv = (self.eval(&z) - self.eval(&inner)) / h;
            let inward_decay = -deriv;
            if inward_decay < a1_min {
                a1_min = inward_decay;
                a1_worst = z;
            }
        }
        let scale = self.base_level.abs().max(1e-30);
        if a1_min.is_nan() || a1_min <= 1e-10 * scale {
            violations.push(Violation::OutwardDerivative {
                min_inward_decay: a1_min,
                at: a1_worst,
            });
        }

        // Positivity over a dense interior + boundary sample.
        let mut k_min = f64::INFINITY;
        let mut k_worst = vec![0.0; n];
        for i in 0..budget.max(8) {
            let x = if i % 8 == 0 {
                self.domain.sample_boundary(&mut rng)
            } else {
                self.domain.sample_interior(&mut rng)
            };
            let k = self.eval(&x);
            if k < k_min {
                k_min = k;
                k_worst = x;
            }
        }
        if k_min.is_nan() || k_min <= 0.0 {
            violations.push(Violation::NonPositive {
                value: k_min,
                at: k_worst,
            });
        }

        AssumptionReport {
            passed: violations.is_empty(),
            a1_min_inward_decay: a1_min,
            k_min,
            boundary_samples,
            interior_samples: budget.max(8),
            violations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// ∂K/∂ν failed to be strictly negative somewhere on ∂Ω.
    OutwardDerivative {
        min_inward_decay: f64,
        at: Vec<f64>,
    },
    FlatnessOrder {
        point: usize,
        beta: f64,
    },
    ZeroCoefficient {
        point: usize,
        axis: usize,
    },
    TemplateBallEscapes {
        point: usize,
        boundary_dist: f64,
        needed: f64,
    },
    Separation {
        first: usize,
        second: usize,
        dist: f64,
        needed: f64,
    },
    NonPositive {
        value: f64,
        at: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub passed: bool,
    pub a1_min_inward_decay: f64,
    pub k_min: f64,
    pub boundary_samples: usize,
    pub interior_samples: usize,
    pub violations: Vec<Violation>,
}
