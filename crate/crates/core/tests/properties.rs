//! Property tests for the algebraic invariants.

use proptest::prelude::*;

use critexp::bubbles::{delta, epsilon_ij};
use critexp::eigen::{jacobi_eigen, SymMat};
use critexp::geometry::{Domain, SdfKind};
use critexp::vecn;

fn point4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.6..0.6f64, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// dist_boundary(x) + |x - center| = radius, exactly, inside a ball.
    #[test]
    fn ball_distance_identity(
        center in point4(),
        radius in 0.5..3.0f64,
        dir in point4(),
        frac in 0.0..0.99f64,
    ) {
        let domain = Domain::ball(center.clone(), radius).unwrap();
        let mut d = dir;
        if vecn::normalize(&mut d) < 1e-12 {
            d = vec![1.0, 0.0, 0.0, 0.0];
        }
        let x = vecn::add_scaled(&center, frac * radius, &d);
        let dist = domain.dist_boundary(&x).unwrap();
        prop_assert!((dist + frac * radius - radius).abs() < 1e-12);
    }

    /// A ball wrapped as a signed-distance oracle answers like the ball.
    #[test]
    fn sdf_ball_agrees_with_analytic(x in point4()) {
        let ball = Domain::ball(vec![0.0; 4], 1.0).unwrap();
        let oracle = Domain::sdf(SdfKind::Ball { center: vec![0.0; 4], radius: 1.0 }).unwrap();
        if ball.contains(&x) {
            let a = ball.dist_boundary(&x).unwrap();
            let b = oracle.dist_boundary(&x).unwrap();
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    /// δ_{a,λ}(x) = λ^{(n-2)/2} δ_{0,1}(λ(x-a)) to 1e-12 relative.
    #[test]
    fn delta_scaling_identity(
        a in point4(),
        x in point4(),
        lambda in 0.1..200.0f64,
    ) {
        for n in [4usize, 5] {
            let (a, x) = (&a[..n.min(4)].to_vec(), &x[..n.min(4)].to_vec());
            let (a, x): (Vec<f64>, Vec<f64>) = if n == 5 {
                (a.iter().chain([&0.1]).cloned().collect(),
                 x.iter().chain([&-0.2]).cloned().collect())
            } else {
                (a.clone(), x.clone())
            };
            let lhs = delta(n, &a, lambda, &x);
            let rescaled: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| lambda * (xi - ai)).collect();
            let rhs = lambda.powf((n as f64 - 2.0) / 2.0) * delta(n, &vec![0.0; n], 1.0, &rescaled);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300));
        }
    }

    /// ε_ij is symmetric and decreases with spatial separation.
    #[test]
    fn epsilon_symmetry_and_separation_monotonicity(
        a in point4(),
        li in 1.0..500.0f64,
        lj in 1.0..500.0f64,
        step in 0.01..0.5f64,
    ) {
        let b: Vec<f64> = a.iter().map(|v| v + step).collect();
        let c: Vec<f64> = a.iter().map(|v| v + 2.0 * step).collect();
        prop_assert_eq!(epsilon_ij(4, &a, li, &b, lj), epsilon_ij(4, &b, lj, &a, li));
        prop_assert!(epsilon_ij(4, &a, li, &c, lj) < epsilon_ij(4, &a, li, &b, lj));
    }

    /// Jacobi spectra satisfy the residual and orthonormality identities.
    #[test]
    fn jacobi_eigen_residuals(entries in prop::collection::vec(-3.0..3.0f64, 15)) {
        // 5x5 symmetric matrix from the lower triangle.
        let n = 5;
        let mut m = SymMat::zeros(n);
        let mut it = entries.into_iter();
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, it.next().unwrap());
            }
        }
        let eig = jacobi_eigen(&m);
        for (val, vec) in eig.values.iter().zip(&eig.vectors) {
            let mv = m.mul_vec(vec);
            let resid: f64 = mv.iter().zip(vec).map(|(a, b)| (a - val * b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(resid < 1e-9, "residual {}", resid);
        }
        for w in eig.values.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-12);
        }
    }
}
