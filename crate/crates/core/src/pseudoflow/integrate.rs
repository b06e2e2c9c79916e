//! Adaptive Euler integration of the reduced flow and blow-up detection.
//!
//! The field is only piecewise smooth across region switches, so a
//! higher-order integrator would buy nothing; steps are capped so the
//! relative λ change stays below `max_rel_lambda_step` and centers move at
//! most `max_center_step` per step.

use std::io::Write;

use serde::Serialize;

use super::field::{assemble_pseudogradient, descent_pairing};
use super::regions::{classify_region, InteriorKind, RegionLabel};
use super::{FlowContext, FlowError};
use crate::bubbles::quadrature::{functional_j, JEstimate};
use crate::bubbles::{epsilon_ij, BubbleConfiguration};
use crate::vecn;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FlowVerdict {
    /// Max λ crossed the blow-up threshold in V₁; payload is the sorted
    /// critical-point tuple the centers settled at.
    BlewUpAt(Vec<usize>),
    BoundedOverHorizon,
    /// The trajectory left the validity range of the reduced model
    /// (center at the boundary, λ under the floor, or ε_ij too large).
    ExitedModel,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowStep {
    pub time: f64,
    pub config: BubbleConfiguration,
    pub label: RegionLabel,
    /// max_i |λ̇_i|/λ_i of the step taken from here.
    pub lambda_rate: f64,
    /// max_i |ȧ_i|.
    pub center_rate: f64,
    pub j_estimate: Option<JEstimate>,
    /// ⟨∂J, W⟩ from the leading-order expansions.
    pub descent: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    pub steps: Vec<FlowStep>,
    pub verdict: FlowVerdict,
    /// Set when the run ends in a state that contradicts the dichotomy
    /// (e.g. threshold crossed outside V₁).
    pub alarm: Option<String>,
}

impl FlowTrajectory {
    pub fn max_lambda(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.config.lambdas.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn final_config(&self) -> &BubbleConfiguration {
        &self.steps.last().expect("nonempty trajectory").config
    }
}

/// Integrate from `start` (α entries are re-slaved, only centers and scales
/// matter) until blow-up, model exit, or the time horizon.
pub fn integrate_flow(
    start: &BubbleConfiguration,
    ctx: &FlowContext,
    horizon: f64,
    run_seed: u64,
) -> Result<FlowTrajectory, FlowError> {
    super::validate_config(start, &ctx.domain)?;
    let params = ctx.params;
    let p = start.len();
    let mut centers = start.centers.clone();
    let mut lambdas = start.lambdas.clone();
    let mut time = 0.0;
    let mut steps: Vec<FlowStep> = Vec::new();
    let mut prev_label: Option<RegionLabel> = None;
    let mut last_j: Option<JEstimate> = None;
    let mut alarm = None;

    let mut quad = params.quadrature();
    quad.seed = run_seed;

    let verdict = loop {
        // Re-slave the weights to the current centers through J.
        let provisional: Vec<f64> = centers
            .iter()
            .map(|a| ctx.kfield.eval(a).powf(-(ctx.domain.dim() as f64 - 2.0) / 4.0))
            .collect();
        let config = BubbleConfiguration::new(provisional, centers.clone(), lambdas.clone())?;
        let j_est = if steps.len().is_multiple_of(params.j_every) || last_j.is_none() {
            Some(functional_j(&config, ctx.kfield, &ctx.domain, &quad)?)
        } else {
            None
        };
        if let Some(j) = j_est {
            last_j = Some(j);
        }
        let j_val = last_j.expect("J estimated on first step").value;
        if !j_val.is_finite() || j_val <= 0.0 {
            // The leading-order energy lost meaning; the state is far
            // outside the neighbourhood at infinity.
            record_terminal(&mut steps, time, &config, &prev_label, j_est, ctx);
            break FlowVerdict::ExitedModel;
        }
        let alphas = ctx.slaved_alphas(&centers, j_val);
        let config = BubbleConfiguration::new(alphas, centers.clone(), lambdas.clone())?;

        // Model-exit checks before classification.
        if lambdas.iter().any(|&l| l < params.lambda_floor) {
            record_terminal(&mut steps, time, &config, &prev_label, j_est, ctx);
            break FlowVerdict::ExitedModel;
        }
        let ld_floor = 1.0 / (2.0 * params.eps_model);
        let ld_exit = centers.iter().zip(&lambdas).any(|(a, &l)| {
            ctx.domain
                .dist_boundary(a)
                .map_or(true, |d| l * d < ld_floor)
        });
        if ld_exit {
            record_terminal(&mut steps, time, &config, &prev_label, j_est, ctx);
            break FlowVerdict::ExitedModel;
        }
        let mut eps_violation = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let e = epsilon_ij(ctx.domain.dim(), &centers[i], lambdas[i], &centers[j], lambdas[j]);
                if e >= params.eps_model {
                    eps_violation = true;
                }
            }
        }
        if eps_violation {
            record_terminal(&mut steps, time, &config, &prev_label, j_est, ctx);
            break FlowVerdict::ExitedModel;
        }
        if centers
            .iter()
            .any(|a| ctx.domain.dist_boundary(a).is_err())
        {
            record_terminal(&mut steps, time, &config, &prev_label, j_est, ctx);
            break FlowVerdict::ExitedModel;
        }

        let label = classify_region(&config, ctx, prev_label.as_ref())?;

        // Blow-up threshold.
        let max_lambda = lambdas.iter().cloned().fold(0.0, f64::max);
        if max_lambda > params.lambda_max {
            let tuple = match &label.interior {
                Some(int) => match &int.kind {
                    InteriorKind::V1 { tuple, .. } => Some(tuple.clone()),
                    _ => None,
                },
                None => None,
            };
            steps.push(FlowStep {
                time,
                config: config.clone(),
                label: label.clone(),
                lambda_rate: 0.0,
                center_rate: 0.0,
                j_estimate: j_est,
                descent: None,
            });
            match tuple {
                Some(t) => break FlowVerdict::BlewUpAt(t),
                None => {
                    alarm = Some(format!(
                        "λ exceeded {} outside V1 (label {})",
                        params.lambda_max,
                        label.tag()
                    ));
                    break FlowVerdict::ExitedModel;
                }
            }
        }

        let vel = assemble_pseudogradient(&config, &label, ctx)?;
        if !vel.is_finite() {
            return Err(FlowError::NonFiniteVelocity { time });
        }
        let lambda_rate = vel.max_relative_lambda_rate(&lambdas);
        let center_rate = vel.max_center_rate();
        let descent = if params.descent_diagnostics && j_est.is_some() {
            Some(descent_pairing(&config, &vel, ctx, j_val)?)
        } else {
            None
        };

        steps.push(FlowStep {
            time,
            config: config.clone(),
            label: label.clone(),
            lambda_rate,
            center_rate,
            j_estimate: j_est,
            descent,
        });

        if time >= horizon {
            break FlowVerdict::BoundedOverHorizon;
        }
        if steps.len() >= params.max_steps {
            alarm = Some(format!("step cap {} reached before horizon", params.max_steps));
            break FlowVerdict::BoundedOverHorizon;
        }
        // Leading-order field vanished: the state is stationary for the
        // reduced model, nothing further can happen.
        if lambda_rate < 1e-13 && center_rate < 1e-13 {
            break FlowVerdict::BoundedOverHorizon;
        }

        let mut dt = params.dt_max.min(horizon - time);
        if lambda_rate > 0.0 {
            dt = dt.min(params.max_rel_lambda_step / lambda_rate);
        }
        if center_rate > 0.0 {
            dt = dt.min(params.max_center_step / center_rate);
        }

        for i in 0..p {
            lambdas[i] += dt * vel.lambda_dot[i];
            for (c, v) in centers[i].iter_mut().zip(&vel.center_dot[i]) {
                *c += dt * v;
            }
        }
        time += dt;
        prev_label = Some(label);
    };

    Ok(FlowTrajectory {
        steps,
        verdict,
        alarm,
    })
}

fn record_terminal(
    steps: &mut Vec<FlowStep>,
    time: f64,
    config: &BubbleConfiguration,
    prev_label: &Option<RegionLabel>,
    j_est: Option<JEstimate>,
    ctx: &FlowContext,
) {
    // Best-effort terminal snapshot; classification may no longer apply.
    let label = classify_region(config, ctx, prev_label.as_ref()).unwrap_or_else(|_| RegionLabel {
        raw_far: vec![false; config.len()],
        in_b1: vec![false; config.len()],
        captured_by: vec![None; config.len()],
        interior: None,
        boundary: None,
    });
    steps.push(FlowStep {
        time,
        config: config.clone(),
        label,
        lambda_rate: 0.0,
        center_rate: 0.0,
        j_estimate: j_est,
        descent: None,
    });
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub verdict: FlowVerdict,
    /// Critical points nearest the final centers (sorted), when blown up.
    pub limit_tuple: Option<Vec<usize>>,
    pub tuple_distinct: bool,
    pub rho: Option<f64>,
    pub in_c_infinity: Option<bool>,
    /// Set when the blow-up state contradicts the admissibility criterion.
    pub alarm: Option<String>,
}

/// Cross-check a finished trajectory: a blow-up must sit over a tuple of
/// distinct critical points with positive least eigenvalue. `rho_of` is
/// injected so the check can be exercised against corrupted spectra.
pub fn detect_blowup(
    trajectory: &FlowTrajectory,
    ctx: &FlowContext,
    rho_of: impl Fn(&[usize]) -> f64,
) -> BlowupReport {
    let FlowVerdict::BlewUpAt(stored) = &trajectory.verdict else {
        return BlowupReport {
            verdict: trajectory.verdict.clone(),
            limit_tuple: None,
            tuple_distinct: false,
            rho: None,
            in_c_infinity: None,
            alarm: trajectory.alarm.clone(),
        };
    };
    let config = trajectory.final_config();
    let specs = ctx.kfield.critical_points();
    let mut nearest: Vec<usize> = config
        .centers
        .iter()
        .map(|a| {
            (0..specs.len())
                .min_by(|&i, &j| {
                    vecn::dist(a, &specs[i].y)
                        .partial_cmp(&vecn::dist(a, &specs[j].y))
                        .unwrap()
                })
                .expect("at least one critical point")
        })
        .collect();
    let distinct = {
        let mut sorted = nearest.clone();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.len() == nearest.len()
    };
    nearest.sort_unstable();
    nearest.dedup();
    let rho = rho_of(&nearest);
    let in_c = distinct && rho > 0.0;
    let mut alarm = trajectory.alarm.clone();
    if !in_c {
        alarm = Some(format!(
            "blow-up tuple {nearest:?} is not admissible (distinct: {distinct}, rho: {rho:.3e})"
        ));
    } else if &nearest != stored {
        alarm = Some(format!(
            "blow-up tuple mismatch: trajectory recorded {stored:?}, nearest points are {nearest:?}"
        ));
    }
    BlowupReport {
        verdict: trajectory.verdict.clone(),
        limit_tuple: Some(nearest),
        tuple_distinct: distinct,
        rho: Some(rho),
        in_c_infinity: Some(in_c),
        alarm,
    }
}

/// Plain-text trajectory dump: one row per step with time, per-bubble
/// center components, λ and α, the region tag, and the J estimate.
pub fn write_trajectory<W: Write>(mut w: W, trajectory: &FlowTrajectory) -> std::io::Result<()> {
    let p = trajectory
        .steps
        .first()
        .map(|s| s.config.len())
        .unwrap_or(0);
    let dim = trajectory
        .steps
        .first()
        .map(|s| s.config.centers[0].len())
        .unwrap_or(0);
    write!(w, "# time")?;
    for i in 0..p {
        for k in 0..dim {
            write!(w, " a{i}_{k}")?;
        }
        write!(w, " lambda{i} alpha{i}")?;
    }
    writeln!(w, " label J")?;
    for s in &trajectory.steps {
        write!(w, "{:.9e}", s.time)?;
        for i in 0..p {
            for k in 0..dim {
                write!(w, " {:.9e}", s.config.centers[i][k])?;
            }
            write!(w, " {:.9e} {:.9e}", s.config.lambdas[i], s.config.alphas[i])?;
        }
        match &s.j_estimate {
            Some(j) => writeln!(w, " {} {:.9e}", s.label.tag(), j.value)?,
            None => writeln!(w, " {} nan", s.label.tag())?,
        }
    }
    writeln!(w, "# verdict: {:?}", trajectory.verdict)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::greens::GreensEvaluator;
    use crate::kfield::{CriticalPointSpec, Envelope, KField};
    use crate::pseudoflow::FlowParams;

    fn unit_ball() -> Domain {
        Domain::ball(vec![0.0; 4], 1.0).unwrap()
    }

    fn max_at(y: Vec<f64>, eta: f64) -> CriticalPointSpec {
        CriticalPointSpec {
            beta: 2.5,
            b: vec![-1.0; 4],
            y,
            eta,
            k0: 1.0,
        }
    }

    fn fast_params(f: &KField) -> FlowParams {
        let mut p = FlowParams::for_setup(f.domain(), f);
        p.j_budget = 4_000;
        p.lambda_max = 1e4;
        p
    }

    #[test]
    fn single_maximum_blows_up_monotonically() {
        let f = KField::new(
            unit_ball(),
            vec![max_at(vec![0.0; 4], 0.05)],
            Envelope { decay_rate: 1.0 },
        )
        .unwrap();
        let g = GreensEvaluator::analytic(unit_ball()).unwrap();
        let ctx = FlowContext::new(&f, &g, fast_params(&f)).unwrap();
        let start =
            BubbleConfiguration::new(vec![1.0], vec![vec![0.0; 4]], vec![20.0]).unwrap();
        let traj = integrate_flow(&start, &ctx, 1e4, 7).unwrap();
        assert!(matches!(traj.verdict, FlowVerdict::BlewUpAt(ref t) if t == &vec![0]));
        // λ is monotone along the run.
        let ls: Vec<f64> = traj.steps.iter().map(|s| s.config.lambdas[0]).collect();
        for w in ls.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let report = detect_blowup(&traj, &ctx, |t| ctx.tuple_spectrum(t).rho);
        assert_eq!(report.in_c_infinity, Some(true));
        assert!(report.alarm.is_none(), "{:?}", report.alarm);
    }

    #[test]
    fn negative_pair_stays_bounded() {
        let f = KField::new(
            unit_ball(),
            vec![
                max_at(vec![0.12, 0.0, 0.0, 0.0], 0.05),
                max_at(vec![-0.12, 0.0, 0.0, 0.0], 0.05),
            ],
            Envelope { decay_rate: 1.0 },
        )
        .unwrap();
        let g = GreensEvaluator::analytic(unit_ball()).unwrap();
        let ctx = FlowContext::new(&f, &g, fast_params(&f)).unwrap();
        let start = BubbleConfiguration::new(
            vec![1.0, 1.0],
            vec![vec![0.12, 0.0, 0.0, 0.0], vec![-0.12, 0.0, 0.0, 0.0]],
            vec![100.0, 100.0],
        )
        .unwrap();
        let traj = integrate_flow(&start, &ctx, 8.0, 8).unwrap();
        assert!(matches!(traj.verdict, FlowVerdict::BoundedOverHorizon));
        // Max λ never increases from the start in the V₂ contraction.
        let start_max: f64 = 100.0;
        assert!(traj.max_lambda() <= start_max * 1.0001);
    }

    #[test]
    fn cluster_lets_at_most_one_scale_grow() {
        let f = KField::new(
            unit_ball(),
            vec![
                max_at(vec![0.5, 0.0, 0.0, 0.0], 0.05),
                max_at(vec![-0.5, 0.0, 0.0, 0.0], 0.05),
            ],
            Envelope { decay_rate: 1.0 },
        )
        .unwrap();
        let g = GreensEvaluator::analytic(unit_ball()).unwrap();
        let ctx = FlowContext::new(&f, &g, fast_params(&f)).unwrap();
        let start = BubbleConfiguration::new(
            vec![1.0, 1.0],
            vec![vec![0.51, 0.01, 0.0, 0.0], vec![0.49, -0.01, 0.0, 0.0]],
            vec![60.0, 6000.0],
        )
        .unwrap();
        let traj = integrate_flow(&start, &ctx, 3.0, 9).unwrap();
        // The χ̄-weighted (faster) bubble contracts while in V₃.
        let mut saw_v3 = false;
        for w in traj.steps.windows(2) {
            if let Some(int) = &w[0].label.interior {
                if matches!(int.kind, InteriorKind::V3 { .. }) {
                    saw_v3 = true;
                    assert!(
                        w[1].config.lambdas[1] <= w[0].config.lambdas[1] + 1e-9,
                        "fast bubble grew inside V3"
                    );
                }
            }
        }
        assert!(saw_v3, "trajectory never visited V3");
    }

    #[test]
    fn corrupted_rho_raises_alarm() {
        let f = KField::new(
            unit_ball(),
            vec![max_at(vec![0.0; 4], 0.05)],
            Envelope { decay_rate: 1.0 },
        )
        .unwrap();
        let g = GreensEvaluator::analytic(unit_ball()).unwrap();
        let ctx = FlowContext::new(&f, &g, fast_params(&f)).unwrap();
        let start =
            BubbleConfiguration::new(vec![1.0], vec![vec![0.0; 4]], vec![20.0]).unwrap();
        let traj = integrate_flow(&start, &ctx, 1e4, 10).unwrap();
        let report = detect_blowup(&traj, &ctx, |_| -1.0);
        assert_eq!(report.in_c_infinity, Some(false));
        assert!(report.alarm.is_some());
    }

    #[test]
    fn labels_replay_bit_for_bit() {
        let f = KField::new(
            unit_ball(),
            vec![
                max_at(vec![0.12, 0.0, 0.0, 0.0], 0.05),
                max_at(vec![-0.12, 0.0, 0.0, 0.0], 0.05),
            ],
            Envelope { decay_rate: 1.0 },
        )
        .unwrap();
        let g = GreensEvaluator::analytic(unit_ball()).unwrap();
        let ctx = FlowContext::new(&f, &g, fast_params(&f)).unwrap();
        let start = BubbleConfiguration::new(
            vec![1.0, 1.0],
            vec![vec![0.13, 0.01, 0.0, 0.0], vec![-0.11, 0.0, 0.0, 0.0]],
            vec![90.0, 120.0],
        )
        .unwrap();
        let traj = integrate_flow(&start, &ctx, 4.0, 11).unwrap();
        let mut prev: Option<RegionLabel> = None;
        for step in &traj.steps {
            let redone = classify_region(&step.config, &ctx, prev.as_ref()).unwrap();
            assert_eq!(redone, step.label);
            prev = Some(redone);
        }
    }

    #[test]
    fn trajectory_dump_has_header_and_rows() {
        let f = KField::new(
            unit_ball(),
            vec![max_at(vec![0.0; 4], 0.05)],
            Envelope { decay_rate: 1.0 },
        )
        .unwrap();
        let g = GreensEvaluator::analytic(unit_ball()).unwrap();
        let mut params = fast_params(&f);
        params.lambda_max = 100.0;
        let ctx = FlowContext::new(&f, &g, params).unwrap();
        let start =
            BubbleConfiguration::new(vec![1.0], vec![vec![0.0; 4]], vec![20.0]).unwrap();
        let traj = integrate_flow(&start, &ctx, 50.0, 12).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# time"));
        assert!(text.lines().count() >= traj.steps.len() + 2);
        assert!(text.contains("verdict"));
    }
}
