//! Seeded trajectory batteries across the region taxonomy.
//!
//! A battery starts trajectories in every reachable region kind, integrates
//! them concurrently, and checks the global flow properties on each run:
//! the blow-up dichotomy, inward boundary motion, and monotone descent of
//! the J estimate.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::integrate::{detect_blowup, integrate_flow, FlowVerdict};
use super::{FlowContext, FlowError};
use crate::bubbles::BubbleConfiguration;
use crate::rng::substream;
use crate::vecn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartKind {
    /// One bubble at a critical point: V₁ singleton.
    SingleAtCriticalPoint,
    /// Bubbles at a tuple of distinct critical points (V₁ or V₂ by ρ).
    TupleAtCriticalPoints,
    /// Two scale-separated bubbles inside one capture ball: V₃.
    ClusterAtOnePoint,
    /// A bubble away from every capture ball: V₄.
    FreeCenter,
    /// A bubble in the boundary zone.
    NearBoundary,
}

const KIND_CYCLE: [StartKind; 5] = [
    StartKind::SingleAtCriticalPoint,
    StartKind::TupleAtCriticalPoints,
    StartKind::ClusterAtOnePoint,
    StartKind::FreeCenter,
    StartKind::NearBoundary,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryParams {
    pub runs: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            runs: 20,
            horizon: 12.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub kind: StartKind,
    pub seed: u64,
    pub verdict: FlowVerdict,
    pub final_label: String,
    pub steps: usize,
    pub max_lambda: f64,
    /// min_i d_i never decreased while below d₀.
    pub min_dist_monotone: bool,
    /// J estimate non-increasing within 3× combined standard errors.
    pub j_monotone: bool,
    /// Blow-up (if any) landed on a distinct tuple with ρ > 0.
    pub blowup_admissible: bool,
    pub alarm: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryReport {
    pub runs: Vec<RunSummary>,
    pub all_min_dist_monotone: bool,
    pub all_j_monotone: bool,
    /// Blow-up occurred exactly in the runs whose final label is V₁ with an
    /// admissible tuple; every other run stayed bounded.
    pub dichotomy_holds: bool,
}

/// Deterministic start configuration for (kind, seed).
pub fn seeded_start(
    kind: StartKind,
    ctx: &FlowContext,
    seed: u64,
) -> Result<BubbleConfiguration, FlowError> {
    let specs = ctx.kfield.critical_points();
    if specs.is_empty() {
        return Err(FlowError::Shape("battery needs at least one critical point".into()));
    }
    let n = ctx.domain.dim();
    let mut rng = substream(seed, 0xb17);
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng, scale: f64| -> Vec<f64> {
        let dir = vecn::unit_sphere(rng, n);
        let r: f64 = rng.gen_range(0.0..scale);
        vecn::scale(&dir, r)
    };
    let cfg = |centers: Vec<Vec<f64>>, lambdas: Vec<f64>| {
        let alphas = vec![1.0; lambdas.len()];
        BubbleConfiguration::new(alphas, centers, lambdas).map_err(FlowError::from)
    };
    match kind {
        StartKind::SingleAtCriticalPoint => {
            let which = (seed as usize) % specs.len();
            let off = jitter(&mut rng, 1e-4);
            cfg(
                vec![vecn::add(&specs[which].y, &off)],
                vec![rng.gen_range(20.0..40.0)],
            )
        }
        StartKind::TupleAtCriticalPoints => {
            let count = 2.min(specs.len());
            let mut centers = Vec::new();
            let mut lambdas = Vec::new();
            for s in specs.iter().take(count) {
                let off = jitter(&mut rng, 1e-3);
                centers.push(vecn::add(&s.y, &off));
                lambdas.push(rng.gen_range(80.0..140.0));
            }
            cfg(centers, lambdas)
        }
        StartKind::ClusterAtOnePoint => {
            let which = (seed as usize) % specs.len();
            let y = &specs[which].y;
            let off1 = jitter(&mut rng, 0.3 * ctx.params.eta);
            let off2 = jitter(&mut rng, 0.3 * ctx.params.eta);
            cfg(
                vec![vecn::add(y, &off1), vecn::add(y, &off2)],
                vec![rng.gen_range(40.0..80.0), rng.gen_range(4000.0..8000.0)],
            )
        }
        StartKind::FreeCenter => {
            // A point clear of every capture ball and of the boundary zone.
            let mut best: Option<(f64, Vec<f64>)> = None;
            for _ in 0..200 {
                let x = ctx.domain.sample_interior(&mut rng);
                let d_boundary = ctx.domain.dist_boundary(&x)?;
                if d_boundary < 2.5 * ctx.params.d0 {
                    continue;
                }
                let d_crit = specs
                    .iter()
                    .map(|s| vecn::dist(&x, &s.y))
                    .fold(f64::INFINITY, f64::min);
                if d_crit > 1.5 * ctx.params.eta
                    && best.as_ref().is_none_or(|(b, _)| d_crit > *b)
                {
                    best = Some((d_crit, x));
                }
            }
            let x = best
                .map(|(_, x)| x)
                .ok_or_else(|| FlowError::Shape("no free center found".into()))?;
            cfg(vec![x], vec![rng.gen_range(60.0..100.0)])
        }
        StartKind::NearBoundary => {
            let z = ctx.domain.sample_boundary(&mut rng);
            let nu = ctx.domain.normal_at(&z)?;
            let depth = 0.5 * ctx.params.d0;
            let x = vecn::add_scaled(&z, -depth, &nu);
            // λ d must clear 1/ε for the model clauses.
            let lambda = (2.5 / (ctx.params.eps_model * depth)).max(200.0);
            cfg(vec![x], vec![lambda])
        }
    }
}

fn check_min_dist_monotone(traj: &super::FlowTrajectory, d0: f64, ctx: &FlowContext) -> bool {
    let min_dist = |c: &BubbleConfiguration| -> f64 {
        c.centers
            .iter()
            .map(|a| ctx.domain.dist_boundary(a).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    };
    traj.steps.windows(2).all(|w| {
        let before = min_dist(&w[0].config);
        before >= d0 || min_dist(&w[1].config) >= before - 1e-9
    })
}

fn check_j_monotone(traj: &super::FlowTrajectory) -> bool {
    let ests: Vec<_> = traj
        .steps
        .iter()
        .filter_map(|s| s.j_estimate.as_ref())
        .collect();
    ests.windows(2).all(|w| {
        let slack = 3.0 * (w[0].std_error.hypot(w[1].std_error));
        w[1].value <= w[0].value + slack
    })
}

/// Integrate `runs` seeded trajectories (kinds cycled) and collect the
/// per-run checks. Runs are independent and execute in parallel.
pub fn run_battery(ctx: &FlowContext, params: &BatteryParams) -> Result<BatteryReport, FlowError> {
    run_battery_full(ctx, params).map(|(report, _)| report)
}

/// Like [`run_battery`], additionally returning the trajectories in run
/// order (for dumps).
pub fn run_battery_full(
    ctx: &FlowContext,
    params: &BatteryParams,
) -> Result<(BatteryReport, Vec<super::FlowTrajectory>), FlowError> {
    let runs: Vec<Result<(RunSummary, super::FlowTrajectory), FlowError>> = (0..params.runs)
        .into_par_iter()
        .map(|k| {
            let kind = KIND_CYCLE[k % KIND_CYCLE.len()];
            let seed = params.seed.wrapping_add(k as u64);
            let start = seeded_start(kind, ctx, seed)?;
            let traj = integrate_flow(&start, ctx, params.horizon, seed)?;
            let blow_report = detect_blowup(&traj, ctx, |t| ctx.tuple_spectrum(t).rho);
            let blew_up = matches!(traj.verdict, FlowVerdict::BlewUpAt(_));
            let summary = RunSummary {
                kind,
                seed,
                final_label: traj
                    .steps
                    .last()
                    .map(|s| s.label.tag())
                    .unwrap_or_default(),
                steps: traj.steps.len(),
                max_lambda: traj.max_lambda(),
                min_dist_monotone: check_min_dist_monotone(&traj, ctx.params.d0, ctx),
                j_monotone: check_j_monotone(&traj),
                blowup_admissible: !blew_up || blow_report.in_c_infinity == Some(true),
                alarm: blow_report.alarm,
                verdict: traj.verdict.clone(),
            };
            Ok((summary, traj))
        })
        .collect();
    let runs: Result<Vec<(RunSummary, super::FlowTrajectory)>, FlowError> =
        runs.into_iter().collect();
    let (runs, trajectories): (Vec<RunSummary>, Vec<super::FlowTrajectory>) =
        runs?.into_iter().unzip();

    let dichotomy_holds = runs.iter().all(|r| {
        let blew_up = matches!(r.verdict, FlowVerdict::BlewUpAt(_));
        if blew_up {
            r.blowup_admissible && r.final_label.starts_with("V1")
        } else {
            r.max_lambda <= ctx.params.lambda_max
        }
    });
    let report = BatteryReport {
        all_min_dist_monotone: runs.iter().all(|r| r.min_dist_monotone),
        all_j_monotone: runs.iter().all(|r| r.j_monotone),
        dichotomy_holds,
        runs,
    };
    Ok((report, trajectories))
}
