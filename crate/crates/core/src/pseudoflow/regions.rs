//! Region classification of a bubble configuration.
//!
//! Bubbles split into an interior pack B₁ (far from ∂Ω, or chained to such
//! a bubble) and a boundary pack B₂. The interior pack lands in one of
//!
//! * V₁ — every center captured by a distinct critical point, ρ(tuple) > 0,
//! * V₂ — captured, distinct, ρ(tuple) < 0,
//! * V₃ — captured with a repeated critical point,
//! * V₄ — some center escapes every capture ball,
//!
//! and the boundary pack carries the index sets and the interaction-vs-H
//! condition that drive the boundary vector fields.

use serde::Serialize;

use super::{hyst_ge, hyst_le, FlowContext, FlowError};
use crate::bubbles::{epsilon_ij, BubbleConfiguration};
use crate::vecn;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InteriorKind {
    V1 {
        /// Sorted critical-point indices of the captured tuple.
        tuple: Vec<usize>,
        rho: f64,
        /// max λ_i^{α_i}|a_i - y_i| ≤ δ: all scales move up together.
        case1: bool,
    },
    V2 {
        tuple: Vec<usize>,
        rho: f64,
        /// Λ/|Λ| within γ of the positive least-eigenvector.
        near_eigenvector: bool,
    },
    V3 {
        /// Capture groups with two or more members (global bubble indices).
        clusters: Vec<Vec<usize>>,
    },
    V4 {
        /// First uncaptured bubble in ascending-λ order (global index).
        first_uncaptured: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorLabel {
    /// Global indices of the interior pack, ascending.
    pub members: Vec<usize>,
    pub kind: InteriorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryLabel {
    /// Global indices of the boundary pack, ascending.
    pub members: Vec<usize>,
    /// Per member (aligned with `members`): interaction condition
    /// Σ_k ε_ki / 2^{p+1} ≤ Σ_j H_ij (λ_iλ_j)^{-(n-2)/2}.
    pub t1: Vec<bool>,
    /// λd-comparability chain from the smallest λd (global indices).
    pub i2: Vec<usize>,
    /// λ-comparability group at the top scale of i2 (global indices).
    pub i_lambda_top: Vec<usize>,
    /// The reference bubble of `i_lambda_top` (largest λ within i2).
    pub scale_ref: usize,
    /// I₁ ∩ I_{λ₁}: near the smallest-λ bubble in space and scale.
    pub i1_near: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionLabel {
    /// Raw boundary-zone test d_i ≥ 2d₀ per bubble (before chaining).
    pub raw_far: Vec<bool>,
    /// Interior-pack membership after chaining.
    pub in_b1: Vec<bool>,
    /// Capture assignment per bubble (critical-point index), interior only.
    pub captured_by: Vec<Option<usize>>,
    pub interior: Option<InteriorLabel>,
    pub boundary: Option<BoundaryLabel>,
}

impl RegionLabel {
    /// Compact text form for trajectory dumps, e.g. `V1{0,2}+B2[1]`.
    pub fn tag(&self) -> String {
        let mut parts = Vec::new();
        if let Some(int) = &self.interior {
            let body = match &int.kind {
                InteriorKind::V1 { tuple, case1, .. } => format!(
                    "V1{{{}}}{}",
                    join(tuple),
                    if *case1 { "c1" } else { "c2" }
                ),
                InteriorKind::V2 {
                    tuple,
                    near_eigenvector,
                    ..
                } => format!(
                    "V2{{{}}}{}",
                    join(tuple),
                    if *near_eigenvector { "c1" } else { "c2" }
                ),
                InteriorKind::V3 { clusters } => {
                    let cs: Vec<String> =
                        clusters.iter().map(|c| format!("({})", join(c))).collect();
                    format!("V3{}", cs.join(""))
                }
                InteriorKind::V4 { first_uncaptured } => format!("V4[{first_uncaptured}]"),
            };
            parts.push(body);
        }
        if let Some(b) = &self.boundary {
            parts.push(format!("B2[{}]", join(&b.members)));
        }
        if parts.is_empty() {
            "-".into()
        } else {
            parts.join("+")
        }
    }

    fn prev_capture(&self, bubble: usize, point: usize) -> Option<bool> {
        Some(self.captured_by.get(bubble)?.is_some_and(|j| j == point))
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// V₁ escape score of one bubble: exceeds 1 when both the case split
/// max λ^{(n-3)/(β-1)} |a-y| > δ fires *and* the largest axis offset is
/// resolved by the cutoff (λ|t_k| ≥ 2C, so the axis moves are active).
/// Below the second threshold the gradient is unresolved at scale 1/λ and
/// the configuration behaves as if sitting at the critical point.
pub(crate) fn v1_escape_score(
    config: &BubbleConfiguration,
    i: usize,
    point: usize,
    ctx: &FlowContext,
) -> f64 {
    let params = &ctx.params;
    let s = &ctx.kfield.critical_points()[point];
    let nf = ctx.domain.dim() as f64;
    let exp = (nf - 3.0) / (s.beta - 1.0);
    let dist = vecn::dist(&config.centers[i], &s.y);
    let crit = config.lambdas[i].powf(exp) * dist / params.delta_cap;
    let max_axis = config.centers[i]
        .iter()
        .zip(&s.y)
        .map(|(a, y)| (a - y).abs())
        .fold(0.0, f64::max);
    let resolved = config.lambdas[i] * max_axis / (2.0 * params.psi_cutoff);
    crit.min(resolved)
}

/// Deterministic classification; the previous label (if any) supplies the
/// hysteresis state, so replaying a stored trajectory reproduces its labels
/// bit for bit.
pub fn classify_region(
    config: &BubbleConfiguration,
    ctx: &FlowContext,
    prev: Option<&RegionLabel>,
) -> Result<RegionLabel, FlowError> {
    super::validate_config(config, &ctx.domain)?;
    let p = config.len();
    let params = &ctx.params;
    let h = params.hysteresis;

    let dists: Vec<f64> = config
        .centers
        .iter()
        .map(|a| ctx.domain.dist_boundary(a))
        .collect::<Result<_, _>>()?;

    // Boundary split with chaining: interior is d ≥ 2d₀ or linked to an
    // interior bubble through hops shorter than d₀/p.
    let raw_far: Vec<bool> = (0..p)
        .map(|i| {
            let prev_state = prev.map(|l| l.raw_far[i]);
            hyst_ge(dists[i], 2.0 * params.d0, prev_state, h)
        })
        .collect();
    let hop = params.d0 / p as f64;
    let mut in_b1 = raw_far.clone();
    loop {
        let mut changed = false;
        for i in 0..p {
            if in_b1[i] {
                continue;
            }
            for j in 0..p {
                if in_b1[j] && vecn::dist(&config.centers[i], &config.centers[j]) < hop {
                    in_b1[i] = true;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Capture assignment against the nearest critical point.
    let specs = ctx.kfield.critical_points();
    let captured_by: Vec<Option<usize>> = (0..p)
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for (j, s) in specs.iter().enumerate() {
                let d = vecn::dist(&config.centers[i], &s.y);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            best.and_then(|(j, d)| {
                let prev_state = prev.and_then(|l| l.prev_capture(i, j));
                hyst_le(d, params.eta, prev_state, h).then_some(j)
            })
        })
        .collect();

    let b1: Vec<usize> = (0..p).filter(|&i| in_b1[i]).collect();
    let b2: Vec<usize> = (0..p).filter(|&i| !in_b1[i]).collect();

    let interior = if b1.is_empty() {
        None
    } else {
        Some(classify_interior(config, ctx, &b1, &captured_by, prev)?)
    };
    let boundary = if b2.is_empty() {
        None
    } else {
        Some(classify_boundary(config, ctx, &b2, &dists, prev))
    };

    Ok(RegionLabel {
        raw_far,
        in_b1,
        captured_by,
        interior,
        boundary,
    })
}

fn classify_interior(
    config: &BubbleConfiguration,
    ctx: &FlowContext,
    members: &[usize],
    captured_by: &[Option<usize>],
    prev: Option<&RegionLabel>,
) -> Result<InteriorLabel, FlowError> {
    let params = &ctx.params;

    // V₄: an escaped center; pick the first in ascending λ.
    let mut by_lambda: Vec<usize> = members.to_vec();
    by_lambda.sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());
    if let Some(&first) = by_lambda.iter().find(|&&i| captured_by[i].is_none()) {
        return Ok(InteriorLabel {
            members: members.to_vec(),
            kind: InteriorKind::V4 {
                first_uncaptured: first,
            },
        });
    }

    let capture: Vec<usize> = members.iter().map(|&i| captured_by[i].unwrap()).collect();
    let mut tuple: Vec<usize> = capture.clone();
    tuple.sort_unstable();
    tuple.dedup();

    if tuple.len() < members.len() {
        // Repeated critical point: record the multi-member capture groups.
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &point in &tuple {
            let group: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| captured_by[i] == Some(point))
                .collect();
            if group.len() >= 2 {
                clusters.push(group);
            }
        }
        return Ok(InteriorLabel {
            members: members.to_vec(),
            kind: InteriorKind::V3 { clusters },
        });
    }

    let spectrum = ctx.tuple_spectrum(&tuple);
    if spectrum.rho.abs() <= params.rho_tol.max(spectrum.rho_tol) {
        return Err(FlowError::AssumptionsViolated {
            subset: tuple,
            rho: spectrum.rho,
        });
    }

    let h = params.hysteresis;
    let kind = if spectrum.rho > 0.0 {
        let score = members
            .iter()
            .map(|&i| v1_escape_score(config, i, captured_by[i].unwrap(), ctx))
            .fold(0.0, f64::max);
        let prev_case1 = prev.and_then(|l| match &l.interior {
            Some(InteriorLabel {
                kind: InteriorKind::V1 { case1, .. },
                ..
            }) => Some(*case1),
            _ => None,
        });
        InteriorKind::V1 {
            tuple,
            rho: spectrum.rho,
            case1: hyst_le(score, 1.0, prev_case1, h),
        }
    } else {
        // Direction of Λ = (λ_i^{-(n-2)/2}) against the positive eigenvector.
        let n = ctx.domain.dim() as f64;
        let mut lam_vec: Vec<f64> = members
            .iter()
            .map(|&i| config.lambdas[i].powf(-(n - 2.0) / 2.0))
            .collect();
        let norm = vecn::normalize(&mut lam_vec);
        let e_per_member: Vec<f64> = members
            .iter()
            .map(|&i| {
                let pos = tuple
                    .iter()
                    .position(|&t| t == captured_by[i].unwrap())
                    .unwrap();
                spectrum.eigenvector[pos]
            })
            .collect();
        let dist_to_e = if norm > 0.0 {
            vecn::dist(&lam_vec, &e_per_member)
        } else {
            f64::INFINITY
        };
        let prev_near = prev.and_then(|l| match &l.interior {
            Some(InteriorLabel {
                kind: InteriorKind::V2 {
                    near_eigenvector, ..
                },
                ..
            }) => Some(*near_eigenvector),
            _ => None,
        });
        InteriorKind::V2 {
            tuple,
            rho: spectrum.rho,
            near_eigenvector: hyst_le(dist_to_e, params.gamma_eigvec, prev_near, h),
        }
    };

    Ok(InteriorLabel {
        members: members.to_vec(),
        kind,
    })
}

fn classify_boundary(
    config: &BubbleConfiguration,
    ctx: &FlowContext,
    members: &[usize],
    dists: &[f64],
    prev: Option<&RegionLabel>,
) -> BoundaryLabel {
    let params = &ctx.params;
    let n = ctx.domain.dim();
    let nf = n as f64;
    let pb = members.len();

    // Interaction condition per member, within the boundary pack:
    // (1/2^{p+1}) Σ_{k≠i} ε_ki ≤ Σ_j H_ij (λ_i λ_j)^{-(n-2)/2}.
    let h_band = params.hysteresis;
    let t1: Vec<bool> = members
        .iter()
        .map(|&i| {
            let lhs: f64 = members
                .iter()
                .filter(|&&k| k != i)
                .map(|&k| {
                    epsilon_ij(
                        n,
                        &config.centers[k],
                        config.lambdas[k],
                        &config.centers[i],
                        config.lambdas[i],
                    )
                })
                .sum::<f64>()
                / 2f64.powi(pb as i32 + 1);
            let rhs: f64 = members
                .iter()
                .map(|&j| {
                    let h = ctx
                        .greens
                        .regular_part(&config.centers[i], &config.centers[j])
                        .map(|e| e.value)
                        .unwrap_or(0.0);
                    h / (config.lambdas[i] * config.lambdas[j]).powf((nf - 2.0) / 2.0)
                })
                .sum();
            let prev_state = prev.and_then(|l| {
                let b = l.boundary.as_ref()?;
                let pos = b.members.iter().position(|&m| m == i)?;
                Some(b.t1[pos])
            });
            hyst_le(lhs, rhs, prev_state, h_band)
        })
        .collect();

    // λd-comparability chain from the smallest λd.
    let mut by_ld: Vec<usize> = members.to_vec();
    by_ld.sort_by(|&i, &j| {
        (config.lambdas[i] * dists[i])
            .partial_cmp(&(config.lambdas[j] * dists[j]))
            .unwrap()
    });
    let mut i2 = vec![by_ld[0]];
    for w in by_ld.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if params.c1_ratio * config.lambdas[hi] * dists[hi] <= config.lambdas[lo] * dists[lo] {
            i2.push(hi);
        } else {
            break;
        }
    }

    // Within i2, the λ-comparability group hanging from the largest λ.
    let mut i2_by_lambda = i2.clone();
    i2_by_lambda.sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());
    let scale_ref = *i2_by_lambda.last().unwrap();
    let mut i_lambda_top = vec![scale_ref];
    for w in i2_by_lambda.windows(2).rev() {
        let (lo, hi) = (w[0], w[1]);
        if params.c2_ratio * config.lambdas[hi] <= config.lambdas[lo] {
            i_lambda_top.push(lo);
        } else {
            break;
        }
    }
    i_lambda_top.sort_unstable();

    // Spatial + scale neighbourhood of the smallest-λ bubble.
    let mut by_lambda: Vec<usize> = members.to_vec();
    by_lambda.sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());
    let first = by_lambda[0];
    let d1 = dists[first];
    let far_station = 2.0 * d1 / params.m_ratio;
    let i1_prime: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| vecn::dist(&config.centers[i], &config.centers[first]) >= far_station)
        .collect();
    // Chain closure toward I₁′ with hops shorter than d₁/(p M).
    let hop = d1 / (pb as f64 * params.m_ratio);
    let mut absorbed: Vec<usize> = i1_prime.clone();
    loop {
        let mut changed = false;
        for &i in members {
            if absorbed.contains(&i) {
                continue;
            }
            if absorbed
                .iter()
                .any(|&j| vecn::dist(&config.centers[i], &config.centers[j]) < hop)
            {
                absorbed.push(i);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let i1: Vec<usize> = members
        .iter()
        .copied()
        .filter(|i| !absorbed.contains(i))
        .collect();
    let mut i_lambda_1 = vec![first];
    for w in by_lambda.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if params.c2_ratio * config.lambdas[hi] <= config.lambdas[lo] {
            i_lambda_1.push(hi);
        } else {
            break;
        }
    }
    let i1_near: Vec<usize> = i1
        .iter()
        .copied()
        .filter(|i| i_lambda_1.contains(i))
        .collect();

    BoundaryLabel {
        members: members.to_vec(),
        t1,
        i2,
        i_lambda_top,
        scale_ref,
        i1_near,
    }
}
