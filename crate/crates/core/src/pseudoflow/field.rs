//! Gradient expansions and pseudo-gradient assembly.
//!
//! `reduced_gradient_*` evaluate the leading-order pairings of ∂J with the
//! scale and center directions of one bubble (the o(·) remainders of the
//! expansions are dropped throughout; the reduced model is leading-order by
//! construction). `assemble_pseudogradient` builds the region-dependent
//! velocity field on (a, λ) that drives the trajectories.

use serde::Serialize;

use super::regions::{BoundaryLabel, InteriorKind, RegionLabel};
use super::{cutoff_down, FlowContext, FlowError, Velocity};
use crate::bubbles::{epsilon_da_over_lambda, epsilon_dlambda_scaled, BubbleConfiguration};
use crate::vecn;

/// Scalar expansion value plus a validity flag: leaving the model range
/// (λ_i d_i no longer large) is a signal, not an error.
#[derive(Debug, Clone, Serialize)]
pub struct GradientValue<T> {
    pub value: T,
    pub model_valid: bool,
}

fn model_valid(config: &BubbleConfiguration, i: usize, ctx: &FlowContext) -> bool {
    match ctx.domain.dist_boundary(&config.centers[i]) {
        Ok(d) => config.lambdas[i] * d > 1.0 / ctx.params.eps_model,
        Err(_) => false,
    }
}

/// ⟨∂J, λ_i ∂Pδ_i/∂λ_i⟩ to leading order:
/// 2c₂J [ -(n-2)/2 α_i H(a_i,a_i)/λ_i^{n-2}
///        - Σ_{j≠i} α_j (λ_i ∂ε_ij/∂λ_i + (n-2)/2 H(a_i,a_j)/(λ_iλ_j)^{(n-2)/2}) ].
pub fn reduced_gradient_lambda(
    config: &BubbleConfiguration,
    i: usize,
    ctx: &FlowContext,
    j_value: f64,
) -> Result<GradientValue<f64>, FlowError> {
    let n = ctx.domain.dim();
    let nf = n as f64;
    let a_i = &config.centers[i];
    let l_i = config.lambdas[i];
    let h_ii = ctx.greens.regular_part(a_i, a_i)?.value;
    let mut bracket = -(nf - 2.0) / 2.0 * config.alphas[i] * h_ii / l_i.powf(nf - 2.0);
    for j in 0..config.len() {
        if j == i {
            continue;
        }
        let a_j = &config.centers[j];
        let l_j = config.lambdas[j];
        let d_eps = epsilon_dlambda_scaled(n, a_i, l_i, a_j, l_j);
        let h_ij = ctx.greens.regular_part(a_i, a_j)?.value;
        bracket -= config.alphas[j]
            * (d_eps + (nf - 2.0) / 2.0 * h_ij / (l_i * l_j).powf((nf - 2.0) / 2.0));
    }
    Ok(GradientValue {
        value: 2.0 * ctx.constants.c2 * j_value * bracket,
        model_valid: model_valid(config, i, ctx),
    })
}

/// ⟨∂J, (1/λ_i) ∂Pδ_i/∂a_i⟩ to leading order:
/// 2J [ -α_i^{(n+2)/(n-2)} (n-2)/n c₄ J^{n/(n-2)} ∇K(a_i)/λ_i
///      + α_i c₂ λ_i^{1-n} ∂H(a_i,a_i)/∂a
///      - c₂ Σ_{j≠i} α_j ((1/λ_i) ∂ε_ij/∂a_i
///                        - (λ_iλ_j)^{-(n-2)/2} (1/λ_i) ∂H(a_i,a_j)/∂a_i) ].
///
/// Inside a template ball with λ_i|(a_i-y)_k| large, ∇K's k-component is
/// β b_k |t_k|^{β-1} sg(t_k), so the first term reduces componentwise to
/// -2(n-2) J^{(2n-2)/(n-2)} α^{(n+2)/(n-2)} sg(t_k) |t_k|^{β-1} b_k c₅ / λ
/// with c₅ = (β/n) c₄ — no separate branch is needed.
pub fn reduced_gradient_a(
    config: &BubbleConfiguration,
    i: usize,
    ctx: &FlowContext,
    j_value: f64,
) -> Result<GradientValue<Vec<f64>>, FlowError> {
    let n = ctx.domain.dim();
    let nf = n as f64;
    let a_i = &config.centers[i];
    let l_i = config.lambdas[i];
    let alpha_i = config.alphas[i];
    let c2 = ctx.constants.c2;
    let c4 = ctx.constants.c4;

    let grad_k = ctx.kfield.grad(a_i);
    let robin = ctx.greens.robin_gradient(a_i, ctx.params.fd_step)?;

    let w_gradk =
        -alpha_i.powf((nf + 2.0) / (nf - 2.0)) * (nf - 2.0) / nf * c4 * j_value.powf(nf / (nf - 2.0))
            / l_i;
    let w_robin = alpha_i * c2 / l_i.powf(nf - 1.0);

    let mut bracket: Vec<f64> = (0..n)
        .map(|k| w_gradk * grad_k[k] + w_robin * robin[k])
        .collect();

    for j in 0..config.len() {
        if j == i {
            continue;
        }
        let a_j = &config.centers[j];
        let l_j = config.lambdas[j];
        let d_eps = epsilon_da_over_lambda(n, a_i, l_i, a_j, l_j);
        let dh = ctx.greens.regular_part_grad_x(a_i, a_j, ctx.params.fd_step)?;
        let w_h = (l_i * l_j).powf(-(nf - 2.0) / 2.0) / l_i;
        for k in 0..n {
            bracket[k] -= c2 * config.alphas[j] * (d_eps[k] - w_h * dh[k]);
        }
    }

    Ok(GradientValue {
        value: bracket.iter().map(|v| 2.0 * j_value * v).collect(),
        model_valid: model_valid(config, i, ctx),
    })
}

/// ⟨∂J, W⟩ for a reduced velocity W, assembled from the expansions above.
pub fn descent_pairing(
    config: &BubbleConfiguration,
    vel: &Velocity,
    ctx: &FlowContext,
    j_value: f64,
) -> Result<f64, FlowError> {
    let mut total = 0.0;
    for i in 0..config.len() {
        let g_l = reduced_gradient_lambda(config, i, ctx, j_value)?;
        total += vel.lambda_dot[i] / config.lambdas[i] * g_l.value;
        let g_a = reduced_gradient_a(config, i, ctx, j_value)?;
        total += config.lambdas[i] * vecn::dot(&vel.center_dot[i], &g_a.value);
    }
    Ok(total)
}

/// The axis moves X̄: push each center along sg(t_k) b_k e_k at rate 1/λ,
/// gated by the cutoff Ψ(λ|t_k|) so only well-resolved components move.
fn template_moves(
    config: &BubbleConfiguration,
    i: usize,
    point: usize,
    ctx: &FlowContext,
    vel: &mut Velocity,
) {
    let spec = &ctx.kfield.critical_points()[point];
    let l = config.lambdas[i];
    let c = ctx.params.psi_cutoff;
    for k in 0..ctx.domain.dim() {
        let t = config.centers[i][k] - spec.y[k];
        let psi = cutoff_down(l * t.abs(), c, 2.0 * c);
        vel.center_dot[i][k] += (1.0 - psi) * spec.b[k] * t.signum() / l;
    }
}

/// Interior field on a sub-pack, with the kind recomputed fresh (recursive
/// sub-packs carry no hysteresis state).
fn interior_velocity_raw(
    config: &BubbleConfiguration,
    members: &[usize],
    captured_by: &[Option<usize>],
    ctx: &FlowContext,
    vel: &mut Velocity,
    depth: usize,
) -> Result<(), FlowError> {
    if members.is_empty() {
        return Ok(());
    }
    if depth > config.len() + 1 {
        return Err(FlowError::Shape("sub-pack recursion failed to shrink".into()));
    }
    let mut by_lambda: Vec<usize> = members.to_vec();
    by_lambda.sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());

    if let Some(&first) = by_lambda.iter().find(|&&i| captured_by[i].is_none()) {
        let kind = InteriorKind::V4 {
            first_uncaptured: first,
        };
        return interior_velocity(config, members, &kind, captured_by, ctx, vel, depth);
    }
    let mut tuple: Vec<usize> = members.iter().map(|&i| captured_by[i].unwrap()).collect();
    tuple.sort_unstable();
    tuple.dedup();
    if tuple.len() < members.len() {
        let mut clusters = Vec::new();
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
        let kind = InteriorKind::V3 { clusters };
        return interior_velocity(config, members, &kind, captured_by, ctx, vel, depth);
    }
    let spectrum = ctx.tuple_spectrum(&tuple);
    if spectrum.rho.abs() <= ctx.params.rho_tol.max(spectrum.rho_tol) {
        return Err(FlowError::AssumptionsViolated {
            subset: tuple,
            rho: spectrum.rho,
        });
    }
    let kind = if spectrum.rho > 0.0 {
        let score = members
            .iter()
            .map(|&i| super::regions::v1_escape_score(config, i, captured_by[i].unwrap(), ctx))
            .fold(0.0, f64::max);
        InteriorKind::V1 {
            tuple,
            rho: spectrum.rho,
            case1: score <= 1.0,
        }
    } else {
        let nf = ctx.domain.dim() as f64;
        let mut lam_vec: Vec<f64> = members
            .iter()
            .map(|&i| config.lambdas[i].powf(-(nf - 2.0) / 2.0))
            .collect();
        vecn::normalize(&mut lam_vec);
        let e: Vec<f64> = members
            .iter()
            .map(|&i| {
                let pos = tuple
                    .iter()
                    .position(|&t| t == captured_by[i].unwrap())
                    .unwrap();
                spectrum.eigenvector[pos]
            })
            .collect();
        InteriorKind::V2 {
            tuple,
            rho: spectrum.rho,
            near_eigenvector: vecn::dist(&lam_vec, &e) <= ctx.params.gamma_eigvec,
        }
    };
    interior_velocity(config, members, &kind, captured_by, ctx, vel, depth)
}

fn interior_velocity(
    config: &BubbleConfiguration,
    members: &[usize],
    kind: &InteriorKind,
    captured_by: &[Option<usize>],
    ctx: &FlowContext,
    vel: &mut Velocity,
    depth: usize,
) -> Result<(), FlowError> {
    let params = &ctx.params;
    let nf = ctx.domain.dim() as f64;

    match kind {
        InteriorKind::V1 { tuple, case1, .. } => {
            if *case1 {
                // All scales ride up together.
                for &i in members {
                    vel.lambda_dot[i] += config.alphas[i] * config.lambdas[i];
                }
            } else {
                let mut by_lambda: Vec<usize> = members.to_vec();
                by_lambda
                    .sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());
                let score = |i: usize| {
                    super::regions::v1_escape_score(config, i, captured_by[i].unwrap(), ctx)
                };
                let i1_rank = by_lambda
                    .iter()
                    .position(|&i| score(i) > 1.0)
                    .unwrap_or_else(|| {
                        // Hysteresis can hold case 2 with every score at or
                        // below 1; fall back to the largest offender.
                        (0..by_lambda.len())
                            .max_by(|&a, &b| {
                                score(by_lambda[a]).partial_cmp(&score(by_lambda[b])).unwrap()
                            })
                            .unwrap()
                    });
                // λ-comparability chain below i1.
                let mut i0_rank = i1_rank;
                while i0_rank > 0 {
                    let lo = by_lambda[i0_rank - 1];
                    let hi = by_lambda[i0_rank];
                    if config.lambdas[lo] >= config.lambdas[hi] / params.m_ratio {
                        i0_rank -= 1;
                    } else {
                        break;
                    }
                }
                if i0_rank > 0 {
                    let sub: Vec<usize> = by_lambda[..i0_rank].to_vec();
                    interior_velocity_raw(config, &sub, captured_by, ctx, vel, depth + 1)?;
                    for &i in &by_lambda[i0_rank..] {
                        template_moves(config, i, captured_by[i].unwrap(), ctx, vel);
                    }
                } else {
                    for &i in members {
                        template_moves(config, i, captured_by[i].unwrap(), ctx, vel);
                    }
                }
                let _ = tuple;
            }
        }
        InteriorKind::V2 {
            tuple,
            near_eigenvector,
            ..
        } => {
            if *near_eigenvector {
                for &i in members {
                    vel.lambda_dot[i] -= config.alphas[i] * config.lambdas[i];
                }
            } else {
                let spectrum = ctx.tuple_spectrum(tuple);
                let lam: Vec<f64> = members
                    .iter()
                    .map(|&i| config.lambdas[i].powf(-(nf - 2.0) / 2.0))
                    .collect();
                let lam_norm = vecn::norm(&lam);
                let e: Vec<f64> = members
                    .iter()
                    .map(|&i| {
                        let pos = tuple
                            .iter()
                            .position(|&t| t == captured_by[i].unwrap())
                            .unwrap();
                        spectrum.eigenvector[pos]
                    })
                    .collect();
                // β = d/dt [y(t)/‖y(t)‖] at t = 0 along y(t) = (1-t)Λ + t|Λ|e.
                let target = vecn::scale(&e, lam_norm);
                let diff = vecn::sub(&target, &lam);
                let proj = vecn::dot(&lam, &diff) / lam_norm.powi(3);
                for (idx, &i) in members.iter().enumerate() {
                    let beta_i = diff[idx] / lam_norm - lam[idx] * proj;
                    vel.lambda_dot[i] -= lam_norm
                        * config.alphas[i]
                        * beta_i
                        * config.lambdas[i].powf(nf / 2.0);
                }
            }
            for &i in members {
                template_moves(config, i, captured_by[i].unwrap(), ctx, vel);
            }
        }
        InteriorKind::V3 { clusters } => {
            let chi_bar = |j: usize| -> f64 {
                clusters
                    .iter()
                    .find(|c| c.contains(&j))
                    .map(|c| {
                        c.iter()
                            .filter(|&&i| i != j)
                            .map(|&i| {
                                super::cutoff_up(
                                    config.lambdas[j] / config.lambdas[i],
                                    params.chi_gamma,
                                    1.0,
                                )
                            })
                            .sum()
                    })
                    .unwrap_or(0.0)
            };
            let mut w3 = Velocity::zeros(config.len(), ctx.domain.dim());
            for cluster in clusters {
                for &j in cluster {
                    w3.lambda_dot[j] -= config.alphas[j] * chi_bar(j) * config.lambdas[j];
                }
            }
            let i0 = *members
                .iter()
                .min_by(|&&i, &&j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap())
                .unwrap();
            let in_multi = clusters.iter().any(|c| c.contains(&i0));
            if in_multi && chi_bar(i0) > 0.0 {
                vel.add_scaled(1.0, &w3);
            } else {
                // Recursive escape field on the slow pack D.
                let d_set: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let slow = config.lambdas[i] / config.lambdas[i0] < 1.0 / params.chi_gamma;
                        let loose = clusters.iter().all(|c| !c.contains(&i)) || chi_bar(i) == 0.0;
                        slow && loose
                    })
                    .collect();
                vel.add_scaled(params.chi_c_weight, &w3);
                interior_velocity_raw(config, &d_set, captured_by, ctx, vel, depth + 1)?;
            }
            for &i in members {
                if let Some(point) = captured_by[i] {
                    template_moves(config, i, point, ctx, vel);
                }
            }
        }
        InteriorKind::V4 { first_uncaptured } => {
            let mut by_lambda: Vec<usize> = members.to_vec();
            by_lambda
                .sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());
            let i1_rank = by_lambda
                .iter()
                .position(|&i| i == *first_uncaptured)
                .unwrap_or(0);
            let mut z4 = Velocity::zeros(config.len(), ctx.domain.dim());
            let i1 = by_lambda[i1_rank];
            let mut grad = ctx.kfield.grad(&config.centers[i1]);
            if vecn::normalize(&mut grad) > 1e-14 {
                for (k, g) in grad.iter().enumerate() {
                    z4.center_dot[i1][k] += g / config.lambdas[i1];
                }
            }
            for (pow, &i) in by_lambda[i1_rank..].iter().enumerate() {
                z4.lambda_dot[i] -=
                    params.m3_weight * 2f64.powi(pow as i32 + 1) * config.lambdas[i];
            }
            vel.add_scaled(params.m_weight, &z4);
            let sub: Vec<usize> = by_lambda[..i1_rank].to_vec();
            interior_velocity_raw(config, &sub, captured_by, ctx, vel, depth + 1)?;
        }
    }
    Ok(())
}

fn boundary_velocity(
    config: &BubbleConfiguration,
    label: &BoundaryLabel,
    ctx: &FlowContext,
    vel: &mut Velocity,
) -> Result<(), FlowError> {
    let params = &ctx.params;
    // Y₁²: inward normal drift of the top λ-comparability group, paced by
    // the largest comparable scale.
    let l_ref = config.lambdas[label.scale_ref];
    for &i in &label.i_lambda_top {
        let nu = ctx.domain.normal_at(&config.centers[i])?;
        let rate = params.m1_weight * config.alphas[i] / l_ref;
        for (k, v) in nu.iter().enumerate() {
            vel.center_dot[i][k] -= rate * v;
        }
    }
    // Y₂²: geometric λ-decrease of the bubbles failing the interaction
    // condition, in ascending λ.
    let mut t2: Vec<usize> = label
        .members
        .iter()
        .zip(&label.t1)
        .filter(|(_, &ok)| !ok)
        .map(|(&i, _)| i)
        .collect();
    t2.sort_by(|&i, &j| config.lambdas[i].partial_cmp(&config.lambdas[j]).unwrap());
    for (k, &i) in t2.iter().enumerate() {
        vel.lambda_dot[i] -= params.m1_weight
            * params.m_small_weight
            * 2f64.powi(k as i32 + 1)
            * config.alphas[i]
            * config.lambdas[i];
    }
    // X₂: inward drift of the group around the smallest λ.
    let l1 = label
        .members
        .iter()
        .map(|&i| config.lambdas[i])
        .fold(f64::INFINITY, f64::min);
    for &i in &label.i1_near {
        let nu = ctx.domain.normal_at(&config.centers[i])?;
        let rate = config.alphas[i] / l1;
        for (k, v) in nu.iter().enumerate() {
            vel.center_dot[i][k] -= rate * v;
        }
    }
    Ok(())
}

/// Velocity of the full configuration under its region label. The interior
/// and boundary packs contribute independently.
pub fn assemble_pseudogradient(
    config: &BubbleConfiguration,
    label: &RegionLabel,
    ctx: &FlowContext,
) -> Result<Velocity, FlowError> {
    let mut vel = Velocity::zeros(config.len(), ctx.domain.dim());
    if let Some(int) = &label.interior {
        interior_velocity(
            config,
            &int.members,
            &int.kind,
            &label.captured_by,
            ctx,
            &mut vel,
            0,
        )?;
    }
    if let Some(b) = &label.boundary {
        boundary_velocity(config, b, ctx, &mut vel)?;
    }
    Ok(vel)
}
