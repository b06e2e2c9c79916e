//! Interaction matrices, blow-up configurations, and the existence verdict.
//!
//! For a tuple of distinct critical points the interaction matrix is
//!
//! ```text
//! m_jj =  H(y_j, y_j) / K(y_j)^{(n-2)/2}
//! m_jk = -G(y_j, y_k) / (K(y_j) K(y_k))^{(n-2)/4}   (j ≠ k)
//! ```
//!
//! Tuples whose least eigenvalue ρ is positive are the admissible blow-up
//! configurations; the alternating sum of their indices decides the verdict:
//! existence is certified when Σ (-1)^{i(τ)} ≠ 1.

use serde::Serialize;
use thiserror::Error;

use crate::eigen::{jacobi_eigen, SymMat};
use crate::greens::{Estimate, GreensError, GreensEvaluator};
use crate::kfield::{AssumptionReport, KField};
use crate::vecn;

#[derive(Debug, Error)]
pub enum CriterionError {
    #[error(
        "{count} critical points exceed the subset cap {cap} (2^m - 1 subsets); \
         raise the cap explicitly to override"
    )]
    TooManyPoints { count: usize, cap: usize },
    #[error("least eigenvalue {rho:.6e} of subset {subset:?} is within tolerance {tol:.3e} of zero")]
    A2Violation {
        subset: Vec<usize>,
        rho: f64,
        tol: f64,
    },
    #[error(transparent)]
    Greens(#[from] GreensError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionParams {
    /// |ρ| at or below the tolerance flags an (A2) violation. For the
    /// analytic backend the tolerance is this constant; for Monte Carlo it
    /// is `rho_se_factor` times the propagated standard error.
    pub rho_tol_analytic: f64,
    pub rho_se_factor: f64,
    /// Maximum number of critical points enumerated (2^m - 1 subsets).
    pub subset_cap: usize,
    /// Sample budget for the assumption checks.
    pub assumption_budget: usize,
    pub assumption_seed: u64,
}

impl Default for CriterionParams {
    fn default() -> Self {
        CriterionParams {
            rho_tol_analytic: 1e-10,
            rho_se_factor: 3.0,
            subset_cap: 12,
            assumption_budget: 400,
            assumption_seed: 0,
        }
    }
}

/// Cached pair evaluations H(y_i, y_j) and K(y_i) shared by every subset.
pub struct PairTable {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub k_values: Vec<f64>,
    pub h: Vec<Vec<Estimate>>,
    pub analytic: bool,
}

impl PairTable {
    pub fn build(kfield: &KField, greens: &GreensEvaluator) -> Result<Self, GreensError> {
        let points: Vec<Vec<f64>> = kfield
            .critical_points()
            .iter()
            .map(|s| s.y.clone())
            .collect();
        let k_values: Vec<f64> = points.iter().map(|y| kfield.eval(y)).collect();
        let m = points.len();
        let mut h = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                row.push(greens.regular_part(&points[i], &points[j])?);
            }
            h.push(row);
        }
        Ok(PairTable {
            dim: kfield.dim(),
            points,
            k_values,
            h,
            analytic: greens.is_analytic(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn greens_value(&self, i: usize, j: usize) -> (f64, f64) {
        let kernel = vecn::dist(&self.points[i], &self.points[j]).powf(-(self.dim as f64 - 2.0));
        (kernel - self.h[i][j].value, self.h[i][j].std_error)
    }

    pub fn total_walks(&self) -> u64 {
        self.h.iter().flatten().map(|e| e.walks).sum()
    }

    pub fn total_truncated(&self) -> u64 {
        self.h.iter().flatten().map(|e| e.truncated).sum()
    }
}

/// Interaction matrix of one tuple together with its spectral data.
#[derive(Debug, Clone, Serialize)]
pub struct InteractionMatrix {
    /// Indices into the registered critical points, ascending.
    pub point_indices: Vec<usize>,
    pub entries: Vec<Vec<f64>>,
    pub entry_std_errors: Vec<Vec<f64>>,
    /// Least eigenvalue ρ(τ) and its propagated standard error.
    pub rho: f64,
    pub rho_std_error: f64,
    /// Unit eigenvector of ρ, sign-fixed so the largest entry is positive.
    pub eigenvector: Vec<f64>,
    pub rho_tol: f64,
    pub a2_violated: bool,
}

/// Build M(τ) for the subset `idx` (ascending indices into the table).
pub fn interaction_matrix(
    table: &PairTable,
    idx: &[usize],
    params: &CriterionParams,
) -> InteractionMatrix {
    let s = idx.len();
    let n = table.dim as f64;
    let mut m = SymMat::zeros(s);
    let mut se = SymMat::zeros(s);
    for (r, &i) in idx.iter().enumerate() {
        let k_i = table.k_values[i];
        m.set(r, r, table.h[i][i].value / k_i.powf((n - 2.0) / 2.0));
        se.set(r, r, table.h[i][i].std_error / k_i.powf((n - 2.0) / 2.0));
        for (c, &j) in idx.iter().enumerate().skip(r + 1) {
            let k_j = table.k_values[j];
            let weight = (k_i * k_j).powf((n - 2.0) / 4.0);
            // Both orientations are estimated; (M + Mᵀ)/2 restores symmetry
            // for the Monte Carlo backend and is a no-op for the analytic one.
            let (g_ij, se_ij) = table.greens_value(i, j);
            let (g_ji, se_ji) = table.greens_value(j, i);
            m.set(r, c, -0.5 * (g_ij + g_ji) / weight);
            se.set(r, c, 0.5 * (se_ij.powi(2) + se_ji.powi(2)).sqrt() / weight);
        }
    }

    let eig = jacobi_eigen(&m);
    let rho = eig.values[0];
    let mut evec = eig.vectors[0].clone();
    let max_idx = (0..s)
        .max_by(|&a, &b| evec[a].abs().partial_cmp(&evec[b].abs()).unwrap())
        .unwrap_or(0);
    if evec[max_idx] < 0.0 {
        for v in evec.iter_mut() {
            *v = -*v;
        }
    }

    // First-order propagation: dρ = eᵀ dM e.
    let mut var = 0.0;
    for r in 0..s {
        var += (evec[r] * evec[r] * se.get(r, r)).powi(2);
        for c in (r + 1)..s {
            var += (2.0 * evec[r] * evec[c] * se.get(r, c)).powi(2);
        }
    }
    let rho_se = var.sqrt();
    let rho_tol = if table.analytic {
        params.rho_tol_analytic
    } else {
        params.rho_se_factor * rho_se
    };

    InteractionMatrix {
        point_indices: idx.to_vec(),
        entries: (0..s).map(|r| (0..s).map(|c| m.get(r, c)).collect()).collect(),
        entry_std_errors: (0..s)
            .map(|r| (0..s).map(|c| se.get(r, c)).collect())
            .collect(),
        rho,
        rho_std_error: rho_se,
        eigenvector: evec,
        rho_tol,
        a2_violated: rho.abs() <= rho_tol,
    }
}

/// Convenience single-tuple entry point that builds its own pair cache.
pub fn interaction_matrix_for(
    tuple: &[usize],
    kfield: &KField,
    greens: &GreensEvaluator,
    params: &CriterionParams,
) -> Result<InteractionMatrix, CriterionError> {
    let table = PairTable::build(kfield, greens)?;
    Ok(interaction_matrix(&table, tuple, params))
}

/// Index at infinity: i(τ_p) = p - 1 + Σ_j (n - ĩ(y_j)).
pub fn infinity_index(dim: usize, morse_like: &[usize]) -> i64 {
    morse_like.len() as i64 - 1
        + morse_like
            .iter()
            .map(|&i| dim as i64 - i as i64)
            .sum::<i64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct TupleRecord {
    pub indices: Vec<usize>,
    pub rho: f64,
    pub rho_std_error: f64,
    pub in_c_infinity: bool,
    /// i(τ) = p - 1 + Σ (n - ĩ); meaningful when the tuple is in C_∞.
    pub index_at_infinity: i64,
    /// (-1)^{i(τ)} for members, 0 otherwise.
    pub sign: i64,
}

/// All nonempty subsets in lexicographic order of their sorted index lists,
/// with ρ and membership. Near-zero ρ aborts with an (A2) violation.
pub fn enumerate_c_infinity(
    table: &PairTable,
    kfield: &KField,
    params: &CriterionParams,
) -> Result<Vec<TupleRecord>, CriterionError> {
    let m = table.len();
    if m > params.subset_cap {
        return Err(CriterionError::TooManyPoints {
            count: m,
            cap: params.subset_cap,
        });
    }
    let mut subsets: Vec<Vec<usize>> = (1u64..(1 << m))
        .map(|mask| (0..m).filter(|&i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort();

    let mut records = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let im = interaction_matrix(table, &subset, params);
        if im.a2_violated {
            return Err(CriterionError::A2Violation {
                subset,
                rho: im.rho,
                tol: im.rho_tol,
            });
        }
        let morse: Vec<usize> = subset
            .iter()
            .map(|&i| kfield.critical_points()[i].morse_like_index())
            .collect();
        let idx = infinity_index(table.dim, &morse);
        let in_c = im.rho > im.rho_tol;
        records.push(TupleRecord {
            indices: subset,
            rho: im.rho,
            rho_std_error: im.rho_std_error,
            in_c_infinity: in_c,
            index_at_infinity: idx,
            sign: if in_c { (-1i64).pow((idx.rem_euclid(2)) as u32) } else { 0 },
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ExistenceCertified,
    Inconclusive,
    AssumptionsViolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreensDiagnostics {
    pub backend: String,
    pub total_walks: u64,
    pub total_truncated: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub assumptions: AssumptionReport,
    pub tuples: Vec<TupleRecord>,
    pub c_infinity: Vec<Vec<usize>>,
    pub euler_hopf_sum: i64,
    pub verdict: Verdict,
    /// Subsets whose |ρ| fell within tolerance of zero (fatal when nonempty).
    pub near_zero_subsets: Vec<Vec<usize>>,
    pub params: CriterionParams,
    pub greens: GreensDiagnostics,
}

/// Full pipeline: assumptions, enumeration, Euler-Hopf sum, verdict.
pub fn euler_hopf_verdict(
    kfield: &KField,
    greens: &GreensEvaluator,
    params: &CriterionParams,
) -> Result<CriterionReport, CriterionError> {
    let assumptions = kfield.check_assumptions(params.assumption_budget, params.assumption_seed);
    let diagnostics = |table: Option<&PairTable>| GreensDiagnostics {
        backend: greens.backend_name().to_string(),
        total_walks: table.map_or(0, |t| t.total_walks()),
        total_truncated: table.map_or(0, |t| t.total_truncated()),
    };

    if !assumptions.passed {
        return Ok(CriterionReport {
            assumptions,
            tuples: vec![],
            c_infinity: vec![],
            euler_hopf_sum: 0,
            verdict: Verdict::AssumptionsViolated,
            near_zero_subsets: vec![],
            params: *params,
            greens: diagnostics(None),
        });
    }

    let table = PairTable::build(kfield, greens)?;
    match enumerate_c_infinity(&table, kfield, params) {
        Ok(tuples) => {
            let c_infinity: Vec<Vec<usize>> = tuples
                .iter()
                .filter(|t| t.in_c_infinity)
                .map(|t| t.indices.clone())
                .collect();
            let sum: i64 = tuples.iter().map(|t| t.sign).sum();
            let verdict = if sum != 1 {
                Verdict::ExistenceCertified
            } else {
                Verdict::Inconclusive
            };
            Ok(CriterionReport {
                assumptions,
                tuples,
                c_infinity,
                euler_hopf_sum: sum,
                verdict,
                near_zero_subsets: vec![],
                params: *params,
                greens: diagnostics(Some(&table)),
            })
        }
        Err(CriterionError::A2Violation { subset, .. }) => Ok(CriterionReport {
            assumptions,
            tuples: vec![],
            c_infinity: vec![],
            euler_hopf_sum: 0,
            verdict: Verdict::AssumptionsViolated,
            near_zero_subsets: vec![subset],
            params: *params,
            greens: diagnostics(Some(&table)),
        }),
        Err(e) => Err(e),
    }
}
