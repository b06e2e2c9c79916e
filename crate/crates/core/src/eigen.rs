//! Dense symmetric linear algebra for small matrices.
//!
//! Interaction matrices are at most `cap = 12` on a side and Gauss-Newton
//! normal systems a few dozen, so a cyclic Jacobi eigensolver and an
//! unpivoted Cholesky cover everything without an external linear algebra
//! dependency.

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "row data length mismatch");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Principal submatrix on the given (distinct) index set.
    pub fn principal_submatrix(&self, idx: &[usize]) -> SymMat {
        let m = idx.len();
        let mut out = SymMat::zeros(m);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                out.data[r * m + c] = self.get(i, j);
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Eigenvalues ascending, with matching unit eigenvectors (as rows).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is
/// negligible relative to the matrix scale.
pub fn jacobi_eigen(m: &SymMat) -> Eigen {
    let n = m.dim();
    let mut a = m.clone();
    // v holds accumulated rotations; row k of the result is eigenvector k.
    let mut v = vec![vec![0.0; n]; n];
    for (k, row) in v.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    if n == 0 {
        return Eigen {
            values: vec![],
            vectors: vec![],
        };
    }
    let scale: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a.get(i, j).abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let tol = 1e-15 * scale;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j).powi(2);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // The store mirrors writes, so one pass over k ∉ {p,q}
                // updates rows and columns together.
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    Eigen { values, vectors }
}

/// Lower Cholesky factor, or `None` when the matrix is not positive definite.
pub fn cholesky(m: &SymMat) -> Option<Vec<f64>> {
    let n = m.dim();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve `m x = rhs` for symmetric positive definite `m`.
pub fn solve_spd(m: &SymMat, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = m.dim();
    let l = cholesky(m)?;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecn;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_by_two_known_spectra() {
        // [[2,-1],[-1,2]] -> least eigenvalue 1, eigenvector (1,1)/sqrt(2)
        let m = SymMat::from_rows(2, vec![2.0, -1.0, -1.0, 2.0]);
        let e = jacobi_eigen(&m);
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        let v = &e.vectors[0];
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-12);

        // [[1,-3],[-3,1]] -> least eigenvalue -2, eigenvector (1,1)/sqrt(2)
        let m = SymMat::from_rows(2, vec![1.0, -3.0, -3.0, 1.0]);
        let e = jacobi_eigen(&m);
        assert!((e.values[0] + 2.0).abs() < 1e-12);
        let v = &e.vectors[0];
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_residuals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8usize {
            let mut m = SymMat::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    m.set(i, j, rng.gen_range(-2.0..2.0));
                }
            }
            let e = jacobi_eigen(&m);
            for (val, vec) in e.values.iter().zip(&e.vectors) {
                let mv = m.mul_vec(vec);
                let resid: f64 = mv
                    .iter()
                    .zip(vec)
                    .map(|(a, b)| (a - val * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(resid < 1e-10, "n={n} residual {resid}");
                assert!((vecn::norm(vec) - 1.0).abs() < 1e-10);
            }
            for w in e.values.windows(2) {
                assert!(w[0] <= w[1] + 1e-14);
            }
        }
    }

    #[test]
    fn cholesky_matches_pd_detection() {
        let pd = SymMat::from_rows(2, vec![2.0, -1.0, -1.0, 2.0]);
        assert!(cholesky(&pd).is_some());
        let indef = SymMat::from_rows(2, vec![1.0, -3.0, -3.0, 1.0]);
        assert!(cholesky(&indef).is_none());
    }

    #[test]
    fn spd_solve_roundtrip() {
        let m = SymMat::from_rows(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let x_true = vec![1.0, -2.0, 0.5];
        let rhs = m.mul_vec(&x_true);
        let x = solve_spd(&m, &rhs).unwrap();
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
