//! Batch front door: load a run config, execute the requested analyses in
//! order (assumptions → criterion → optional diagnostics and flow battery),
//! and emit a machine-readable report.
//!
//! Exit status: 0 = run completed (whatever the verdict), 2 = config error,
//! 3 = assumptions violated under --strict.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use critexp::bubbles::quadrature::{functional_j, QuadratureParams};
use critexp::bubbles::{dimensional_constants, membership_v_p_eps, BubbleConfiguration};
use critexp::euler_hopf::{euler_hopf_verdict, Verdict};
use critexp::pseudoflow::{integrate::write_trajectory, run_battery_full, FlowContext};
use critexp::rng::RNG_ALGORITHM;

use config::RunConfig;
use report::{BubbleDiagnostics, EffectiveParams, RunReport, ToolInfo};

#[derive(Parser)]
#[command(name = "critexp", version, about = "Existence certification and bubble dynamics for the critical-exponent Dirichlet problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run configuration and write the report.
    Run {
        /// Path to the JSON run configuration.
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with status 3 when assumptions are violated.
        #[arg(long)]
        strict: bool,
        /// Omit the timestamp so identical runs are byte-identical.
        #[arg(long)]
        no_timestamp: bool,
        /// Output directory (overrides the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one trajectory dump per battery run.
        #[arg(long)]
        trajectories: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            strict,
            no_timestamp,
            out,
            trajectories,
        } => match run(&config, seed, strict, no_timestamp, out, trajectories) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
}

fn run(
    config_path: &Path,
    seed_override: Option<u64>,
    strict: bool,
    no_timestamp: bool,
    out_override: Option<PathBuf>,
    trajectories: bool,
) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let seed = cfg.seed;

    let domain = cfg.domain.build()?;
    let kfield = cfg.kfield.build(&domain)?;
    let (greens, walk_params) = cfg.greens.build(&domain, seed)?;
    let criterion_params = cfg.criterion.resolve(seed);
    let flow_params = cfg.flow.resolve(&domain, &kfield, seed, greens.is_analytic());

    let out_dir = out_override
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    let effective = EffectiveParams {
        walk: walk_params,
        criterion: criterion_params,
        flow: flow_params,
        greens_backend: greens.backend_name().to_string(),
        domain_smoothness_note: domain.smoothness_note().map(str::to_string),
    };

    // Stage 1: assumptions.
    let assumptions = cfg.analyses.assumptions.then(|| {
        kfield.check_assumptions(criterion_params.assumption_budget, seed)
    });
    let assumptions_failed = assumptions.as_ref().is_some_and(|a| !a.passed);

    // Stage 2: criterion (its pipeline re-checks assumptions internally).
    let criterion = if cfg.analyses.criterion {
        Some(euler_hopf_verdict(&kfield, &greens, &criterion_params)?)
    } else {
        None
    };

    // Stage 3: bubble diagnostics.
    let bubble_diagnostics = if cfg.analyses.bubble_diagnostics {
        Some(bubble_diagnostics(&kfield, seed)?)
    } else {
        None
    };

    // Stage 4: flow battery.
    let mut flow_battery = None;
    if let Some(battery_cfg) = &cfg.analyses.flow_battery {
        let ctx = FlowContext::new(&kfield, &greens, flow_params)?;
        let (battery, trajs) = run_battery_full(&ctx, &battery_cfg.to_params(seed))?;
        if trajectories {
            for (k, traj) in trajs.iter().enumerate() {
                let path = out_dir.join(format!("trajectory_{k:03}.txt"));
                let mut file = fs::File::create(&path)?;
                write_trajectory(&mut file, traj)?;
            }
        }
        flow_battery = Some(battery);
    }

    let report = RunReport {
        tool: ToolInfo {
            name: "critexp",
            version: env!("CARGO_PKG_VERSION"),
            rng_algorithm: RNG_ALGORITHM,
        },
        timestamp_unix: (!no_timestamp).then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }),
        seed,
        config: cfg,
        effective,
        assumptions,
        criterion,
        bubble_diagnostics,
        flow_battery,
    };

    let report_path = out_dir.join("report.json");
    fs::write(&report_path, report.to_json())?;

    match report.criterion.as_ref().map(|c| c.verdict) {
        Some(v) => println!(
            "verdict: {v:?} (S = {}), report: {}",
            report
                .criterion
                .as_ref()
                .map(|c| c.euler_hopf_sum)
                .unwrap_or_default(),
            report_path.display()
        ),
        None => println!("report: {}", report_path.display()),
    }

    let violated = assumptions_failed
        || report
            .criterion
            .as_ref()
            .is_some_and(|c| c.verdict == Verdict::AssumptionsViolated);
    if strict && violated {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn bubble_diagnostics(
    kfield: &critexp::KField,
    seed: u64,
) -> anyhow::Result<BubbleDiagnostics> {
    let domain = kfield.domain().clone();
    let n = domain.dim();
    let constants = dimensional_constants(n);
    let center = kfield
        .critical_points()
        .first()
        .map(|s| s.y.clone())
        .unwrap_or_else(|| vec![0.0; n]);
    let lambda = 1e3;
    let alpha = kfield.eval(&center).powf(-(n as f64 - 2.0) / 4.0);
    let config = BubbleConfiguration::new(vec![alpha], vec![center], vec![lambda])?;
    let quad = QuadratureParams {
        budget: 50_000,
        seed,
    };
    let single_bubble_j = functional_j(&config, kfield, &domain, &quad)?;
    // Re-slave α through J so the membership balance clause is exact.
    let alphas = vec![
        single_bubble_j.value.powf(-(n as f64) / 4.0)
            * kfield.eval(&config.centers[0]).powf(-(n as f64 - 2.0) / 4.0),
    ];
    let config = BubbleConfiguration::new(alphas, config.centers, config.lambdas)?;
    let single_bubble_membership = membership_v_p_eps(&config, 0.1, kfield, &domain);
    Ok(BubbleDiagnostics {
        constants,
        single_bubble_j,
        single_bubble_membership,
    })
}
