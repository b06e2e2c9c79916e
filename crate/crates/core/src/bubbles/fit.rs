//! Damped Gauss-Newton fit of bubble parameters to a sampled field.
//!
//! Minimizes the sampled L² distance ‖u − Σ αᵢ Pδ_{aᵢ,λᵢ}‖ over
//! (α, a, λ). The recovered bubbles come back in canonical order
//! (descending λ, ties by lexicographic center).

use std::io::{BufRead, Write};

use thiserror::Error;

use super::quadrature::canonical_order;
use super::{BubbleConfiguration, BubbleFieldEvaluator};
use crate::eigen::{solve_spd, SymMat};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no samples supplied")]
    NoSamples,
    #[error("initial guess has {got} bubbles, expected {expected}")]
    WrongBubbleCount { expected: usize, got: usize },
    #[error("did not converge after {iterations} iterations (best residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Box<FitResult>,
    },
    #[error("sample file parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Step-size convergence threshold (relative to parameter norm).
    pub step_tol: f64,
    /// RMS residual above which the field is flagged as not in V(p,ε).
    pub residual_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            step_tol: 1e-12,
            residual_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub config: BubbleConfiguration,
    /// Root-mean-square residual over the samples.
    pub residual: f64,
    pub iterations: usize,
    pub residual_above_threshold: bool,
}

struct Packing {
    p: usize,
    dim: usize,
}

impl Packing {
    fn len(&self) -> usize {
        self.p * (self.dim + 2)
    }

    fn unpack(&self, theta: &[f64]) -> Option<BubbleConfiguration> {
        let stride = self.dim + 2;
        let mut alphas = Vec::with_capacity(self.p);
        let mut centers = Vec::with_capacity(self.p);
        let mut lambdas = Vec::with_capacity(self.p);
        for i in 0..self.p {
            let base = i * stride;
            let alpha = theta[base];
            let lambda = theta[base + 1 + self.dim];
            if alpha <= 0.0 || lambda <= 0.0 {
                return None;
            }
            alphas.push(alpha);
            centers.push(theta[base + 1..base + 1 + self.dim].to_vec());
            lambdas.push(lambda);
        }
        BubbleConfiguration::new(alphas, centers, lambdas).ok()
    }

    fn pack(&self, config: &BubbleConfiguration) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        for i in 0..self.p {
            theta.push(config.alphas[i]);
            theta.extend_from_slice(&config.centers[i]);
            theta.push(config.lambdas[i]);
        }
        theta
    }
}

fn rms(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Fit `p` bubbles to `samples` starting from `init` (caller supplies a
/// guess in the basin). Levenberg-style damping around Gauss-Newton with a
/// finite-difference Jacobian.
pub fn fit_parameters(
    samples: &[(Vec<f64>, f64)],
    p: usize,
    init: &BubbleConfiguration,
    evaluator: &BubbleFieldEvaluator,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    if samples.is_empty() {
        return Err(FitError::NoSamples);
    }
    if init.len() != p {
        return Err(FitError::WrongBubbleCount {
            expected: p,
            got: init.len(),
        });
    }
    let dim = evaluator.domain().dim();
    let packing = Packing { p, dim };
    let nparams = packing.len();

    let residuals = |theta: &[f64]| -> Option<Vec<f64>> {
        let config = packing.unpack(theta)?;
        Some(
            samples
                .iter()
                .map(|(x, u)| evaluator.eval(&config, x) - u)
                .collect(),
        )
    };

    let mut theta = packing.pack(init);
    let mut r = residuals(&theta).ok_or(FitError::WrongBubbleCount {
        expected: p,
        got: init.len(),
    })?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut mu = 1e-3;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        // Finite-difference Jacobian, column per parameter.
        let mut jac = vec![vec![0.0; nparams]; samples.len()];
        for k in 0..nparams {
            let h = 1e-6 * theta[k].abs().max(1e-3);
            let mut tp = theta.clone();
            tp[k] += h;
            let rp = residuals(&tp);
            tp[k] = theta[k] - h;
            let rm = residuals(&tp);
            match (rp, rm) {
                (Some(rp), Some(rm)) => {
                    for (s, row) in jac.iter_mut().enumerate() {
                        row[k] = (rp[s] - rm[s]) / (2.0 * h);
                    }
                }
                _ => {
                    // One-sided fallback when the step leaves the valid range.
                    let mut tp = theta.clone();
                    tp[k] += h;
                    if let Some(rp) = residuals(&tp) {
                        for (s, row) in jac.iter_mut().enumerate() {
                            row[k] = (rp[s] - r[s]) / h;
                        }
                    }
                }
            }
        }
        let mut jtj = SymMat::zeros(nparams);
        let mut jtr = vec![0.0; nparams];
        for (s, row) in jac.iter().enumerate() {
            for a in 0..nparams {
                jtr[a] += row[a] * r[s];
                for b in a..nparams {
                    jtj.set(a, b, jtj.get(a, b) + row[a] * row[b]);
                }
            }
        }

        let mut improved = false;
        for _ in 0..12 {
            let mut damped = jtj.clone();
            for k in 0..nparams {
                damped.set(k, k, jtj.get(k, k) * (1.0 + mu) + 1e-18);
            }
            let Some(step) = solve_spd(&damped, &jtr) else {
                mu *= 4.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - s).collect();
            if let Some(rt) = residuals(&trial) {
                let trial_cost: f64 = rt.iter().map(|v| v * v).sum();
                if trial_cost < cost {
                    let step_norm: f64 = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                    let theta_norm: f64 = theta.iter().map(|s| s * s).sum::<f64>().sqrt();
                    theta = trial;
                    r = rt;
                    let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                    cost = trial_cost;
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    if step_norm <= opts.step_tol * (1.0 + theta_norm)
                        || cost < 1e-30
                        || rel_drop < 1e-15
                    {
                        iterations = usize::MAX; // converged
                    }
                    break;
                }
            }
            mu *= 4.0;
        }
        if iterations == usize::MAX {
            break;
        }
        if !improved {
            break;
        }
    }

    let config = packing.unpack(&theta).expect("accepted iterates are valid");
    let order = canonical_order(&config);
    let canon = config.select(&order);
    let residual = rms(&r);
    let converged = iterations == usize::MAX || residual < opts.residual_threshold * 1e-3;
    let result = FitResult {
        config: canon,
        residual,
        iterations: iterations.min(opts.max_iterations),
        residual_above_threshold: residual > opts.residual_threshold,
    };
    if !converged && result.residual_above_threshold {
        return Err(FitError::NotConverged {
            iterations: result.iterations,
            residual,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Read a sampled field: whitespace-delimited rows `x_1 ... x_n value`.
/// Blank lines and `#` comments are skipped.
pub fn read_sampled_field<R: BufRead>(reader: R, dim: usize) -> Result<Vec<(Vec<f64>, f64)>, FitError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Result<Vec<f64>, _> = trimmed.split_whitespace().map(str::parse).collect();
        let fields = fields.map_err(|e| FitError::Parse {
            line: lineno + 1,
            message: format!("{e}"),
        })?;
        if fields.len() != dim + 1 {
            return Err(FitError::Parse {
                line: lineno + 1,
                message: format!("expected {} columns, found {}", dim + 1, fields.len()),
            });
        }
        let (x, v) = fields.split_at(dim);
        out.push((x.to_vec(), v[0]));
    }
    Ok(out)
}

/// Write a sampled field in the same row format.
pub fn write_sampled_field<W: Write>(
    mut writer: W,
    samples: &[(Vec<f64>, f64)],
) -> std::io::Result<()> {
    for (x, v) in samples {
        for c in x {
            write!(writer, "{c:.17e} ")?;
        }
        writeln!(writer, "{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::vecn;

    fn evaluator() -> BubbleFieldEvaluator {
        BubbleFieldEvaluator::new(Domain::ball(vec![0.0; 4], 1.0).unwrap())
    }

    fn sample_grid(ev: &BubbleFieldEvaluator, config: &BubbleConfiguration, m: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = crate::rng::substream(seed, 0);
        let mut out = Vec::with_capacity(m);
        // Cover each bubble at its own scale plus global context.
        for i in 0..m {
            let x = if i % 3 == 0 {
                ev.domain().sample_interior(&mut rng)
            } else {
                let b = i % config.len();
                let dir = vecn::unit_sphere(&mut rng, 4);
                let r: f64 = rand::Rng::gen_range(&mut rng, 0.0..4.0) / config.lambdas[b];
                let x = vecn::add_scaled(&config.centers[b], r, &dir);
                if ev.domain().contains(&x) {
                    x
                } else {
                    ev.domain().sample_interior(&mut rng)
                }
            };
            let v = ev.eval(config, &x);
            out.push((x, v));
        }
        out
    }

    #[test]
    fn exact_single_bubble_roundtrip() {
        let ev = evaluator();
        let truth =
            BubbleConfiguration::new(vec![1.0], vec![vec![0.0; 4]], vec![50.0]).unwrap();
        let samples = sample_grid(&ev, &truth, 600, 1);
        let init = BubbleConfiguration::new(
            vec![1.3],
            vec![vec![0.05, -0.02, 0.0, 0.01]],
            vec![35.0],
        )
        .unwrap();
        let fit = fit_parameters(&samples, 1, &init, &ev, &FitOptions::default()).unwrap();
        assert!(fit.residual <= 1e-8, "residual {}", fit.residual);
        assert!((fit.config.alphas[0] - 1.0).abs() < 1e-6);
        assert!((fit.config.lambdas[0] - 50.0).abs() < 1e-4);
        assert!(vecn::norm(&fit.config.centers[0]) < 1e-6);
    }

    #[test]
    fn two_bubbles_recovered_up_to_permutation() {
        let ev = evaluator();
        let truth = BubbleConfiguration::new(
            vec![1.0, 0.9],
            vec![vec![0.4, 0.0, 0.0, 0.0], vec![-0.4, 0.1, 0.0, 0.0]],
            vec![60.0, 40.0],
        )
        .unwrap();
        let samples = sample_grid(&ev, &truth, 1200, 2);
        // Deliberately permuted initial guess.
        let init = BubbleConfiguration::new(
            vec![0.8, 1.1],
            vec![vec![-0.38, 0.12, 0.0, 0.0], vec![0.42, -0.01, 0.0, 0.0]],
            vec![45.0, 55.0],
        )
        .unwrap();
        let fit = fit_parameters(&samples, 2, &init, &ev, &FitOptions::default()).unwrap();
        assert!(fit.residual <= 1e-8, "residual {}", fit.residual);
        // Canonical order puts λ=60 first.
        assert!((fit.config.lambdas[0] - 60.0).abs() < 1e-4);
        assert!((fit.config.lambdas[1] - 40.0).abs() < 1e-4);
        assert!(vecn::dist(&fit.config.centers[0], &[0.4, 0.0, 0.0, 0.0]) < 1e-6);
        assert!(vecn::dist(&fit.config.centers[1], &[-0.4, 0.1, 0.0, 0.0]) < 1e-6);
        assert!((fit.config.alphas[0] - 1.0).abs() < 1e-6);
        assert!((fit.config.alphas[1] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn perturbed_field_degrades_gracefully() {
        let ev = evaluator();
        let truth =
            BubbleConfiguration::new(vec![1.0], vec![vec![0.1, 0.0, 0.0, 0.0]], vec![45.0])
                .unwrap();
        let mut samples = sample_grid(&ev, &truth, 800, 3);
        // RMS-1e-3 perturbation.
        let mut rng = crate::rng::substream(4, 0);
        for (_, v) in samples.iter_mut() {
            *v += 1e-3 * vecn::standard_normal(&mut rng);
        }
        let init = BubbleConfiguration::new(
            vec![1.2],
            vec![vec![0.12, -0.03, 0.0, 0.0]],
            vec![38.0],
        )
        .unwrap();
        let fit = fit_parameters(&samples, 1, &init, &ev, &FitOptions::default()).unwrap();
        assert!((fit.residual - 1e-3).abs() < 5e-4, "residual {}", fit.residual);
        assert!((fit.config.lambdas[0] - 45.0).abs() < 45.0 * 1e-2);
        assert!(vecn::dist(&fit.config.centers[0], &truth.centers[0]) < 1e-2);
        assert!((fit.config.alphas[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn sampled_field_roundtrip_io() {
        let samples = vec![
            (vec![0.1, 0.2, 0.3, 0.4], 1.5),
            (vec![-0.1, 0.0, 0.25, -0.3], -2.25),
        ];
        let mut buf = Vec::new();
        write_sampled_field(&mut buf, &samples).unwrap();
        let parsed = read_sampled_field(std::io::Cursor::new(buf), 4).unwrap();
        assert_eq!(parsed.len(), 2);
        for ((x0, v0), (x1, v1)) in samples.iter().zip(&parsed) {
            assert_eq!(v0, v1);
            assert_eq!(x0, x1);
        }
        let bad = read_sampled_field(std::io::Cursor::new(b"0.0 1.0\n".to_vec()), 4);
        assert!(matches!(bad, Err(FitError::Parse { line: 1, .. })));
    }
}
