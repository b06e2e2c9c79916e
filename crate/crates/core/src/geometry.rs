//! Bounded domains and their geometric queries.
//!
//! A [`Domain`] is either an analytic ball or a built-in signed-distance
//! oracle (negative inside). The oracle interface is exactly what the
//! walk-on-spheres estimator needs: membership, distance to the boundary,
//! and outward normals near the boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecn;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point lies outside the domain (signed distance {signed_distance:.3e})")]
    OutsideDomain { signed_distance: f64 },
    #[error("point is {dist:.3e} from the boundary, outside the normal shell {shell:.3e}")]
    NotNearBoundary { dist: f64, shell: f64 },
    #[error("degenerate geometry: oracle gradient vanished at the query point")]
    DegenerateGeometry,
    #[error("ball radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("oracle failed the 1-Lipschitz check: |φ(x)-φ(y)| = {lhs:.6e} > |x-y| = {rhs:.6e}")]
    NotLipschitz { lhs: f64, rhs: f64 },
    #[error("dimension mismatch: domain is {expected}-dimensional, point has {got} components")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid oracle parameters: {0}")]
    InvalidOracle(String),
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn diagonal(&self) -> f64 {
        vecn::dist(&self.lo, &self.hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| rng.gen_range(l..h))
            .collect()
    }
}

/// Built-in signed-distance oracles (negative inside).
///
/// All three vanish exactly on the boundary and are 1-Lipschitz, so WoS
/// jump radii never overshoot the true boundary distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdfKind {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Ellipsoid {
        center: Vec<f64>,
        semi_axes: Vec<f64>,
    },
    /// Box with edges rounded at `corner_radius`; only C^{1,1} along the
    /// rounded seams, which is flagged in reports.
    RoundedBox {
        center: Vec<f64>,
        half_widths: Vec<f64>,
        corner_radius: f64,
    },
}

impl SdfKind {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SdfKind::Ball { center, radius } => vecn::dist(x, center) - radius,
            SdfKind::Ellipsoid { center, semi_axes } => {
                // (|T(x)| - 1) * min(semi_axes) with T the per-axis rescale:
                // |grad|^2 = min^2 * sum t_k^2/(r_k^2 |t|^2) <= 1, so 1-Lipschitz,
                // and it vanishes exactly on the ellipsoid.
                let t: Vec<f64> = x
                    .iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((xi, ci), ri)| (xi - ci) / ri)
                    .collect();
                let min_axis = semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
                (vecn::norm(&t) - 1.0) * min_axis
            }
            SdfKind::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => {
                let q: Vec<f64> = x
                    .iter()
                    .zip(center)
                    .zip(half_widths)
                    .map(|((xi, ci), hi)| (xi - ci).abs() - (hi - corner_radius))
                    .collect();
                let outside: f64 = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(0.0);
                outside + inside - corner_radius
            }
        }
    }

    fn anchor(&self) -> &[f64] {
        match self {
            SdfKind::Ball { center, .. } => center,
            SdfKind::Ellipsoid { center, .. } => center,
            SdfKind::RoundedBox { center, .. } => center,
        }
    }

    fn bounding_box(&self) -> Aabb {
        let (center, extent): (&[f64], Vec<f64>) = match self {
            SdfKind::Ball { center, radius } => (center, vec![*radius; center.len()]),
            SdfKind::Ellipsoid { center, semi_axes } => (center, semi_axes.clone()),
            SdfKind::RoundedBox {
                center,
                half_widths,
                ..
            } => (center, half_widths.clone()),
        };
        let margin = 1e-9;
        Aabb {
            lo: center
                .iter()
                .zip(&extent)
                .map(|(c, e)| c - e - margin)
                .collect(),
            hi: center
                .iter()
                .zip(&extent)
                .map(|(c, e)| c + e + margin)
                .collect(),
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidOracle(msg));
        match self {
            SdfKind::Ball { radius, .. } if *radius <= 0.0 => {
                bad(format!("ball radius {radius} must be positive"))
            }
            SdfKind::Ellipsoid { center, semi_axes } => {
                if semi_axes.len() != center.len() {
                    return bad("semi_axes/center length mismatch".into());
                }
                if semi_axes.iter().any(|&r| r <= 0.0) {
                    return bad("ellipsoid semi-axes must be positive".into());
                }
                Ok(())
            }
            SdfKind::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => {
                if half_widths.len() != center.len() {
                    return bad("half_widths/center length mismatch".into());
                }
                let min_hw = half_widths.iter().cloned().fold(f64::INFINITY, f64::min);
                if *corner_radius <= 0.0 || *corner_radius >= min_hw {
                    return bad(format!(
                        "corner radius {corner_radius} must lie in (0, min half width)"
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Sdf { kind: SdfKind, bbox: Aabb },
}

/// The domain Ω together with its dimension and normal-shell width.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    dim: usize,
    shape: Shape,
    normal_shell: f64,
}

/// Default normal-shell width as a fraction of the domain diameter.
pub const DEFAULT_NORMAL_SHELL_FRAC: f64 = 1e-2;

const LIPSCHITZ_SAMPLE_PAIRS: usize = 2_000;

impl Domain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        if radius <= 0.0 {
            return Err(GeometryError::InvalidRadius(radius));
        }
        let dim = center.len();
        let mut d = Domain {
            dim,
            shape: Shape::Ball { center, radius },
            normal_shell: 0.0,
        };
        d.normal_shell = DEFAULT_NORMAL_SHELL_FRAC * d.diameter();
        Ok(d)
    }

    /// Wrap a built-in signed-distance oracle. The 1-Lipschitz property is
    /// validated by sampling pairs over the bounding box.
    pub fn sdf(kind: SdfKind) -> Result<Self, GeometryError> {
        kind.validate()?;
        let bbox = kind.bounding_box();
        let dim = kind.anchor().len();
        let mut rng = crate::rng::substream(0x9e0_17ab, 0);
        for _ in 0..LIPSCHITZ_SAMPLE_PAIRS {
            let x = bbox.sample(&mut rng);
            let y = bbox.sample(&mut rng);
            let lhs = (kind.eval(&x) - kind.eval(&y)).abs();
            let rhs = vecn::dist(&x, &y);
            if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                return Err(GeometryError::NotLipschitz { lhs, rhs });
            }
        }
        let mut d = Domain {
            dim,
            shape: Shape::Sdf { kind, bbox },
            normal_shell: 0.0,
        };
        d.normal_shell = DEFAULT_NORMAL_SHELL_FRAC * d.diameter();
        Ok(d)
    }

    pub fn with_normal_shell(mut self, shell: f64) -> Self {
        self.normal_shell = shell;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normal_shell(&self) -> f64 {
        self.normal_shell
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Sdf { bbox, .. } => bbox.diagonal(),
        }
    }

    pub fn is_ball(&self) -> Option<(&[f64], f64)> {
        match &self.shape {
            Shape::Ball { center, radius } => Some((center, *radius)),
            Shape::Sdf { .. } => None,
        }
    }

    /// Note attached to reports when the boundary is not C^∞.
    pub fn smoothness_note(&self) -> Option<&'static str> {
        match &self.shape {
            Shape::Sdf {
                kind: SdfKind::RoundedBox { .. },
                ..
            } => Some("rounded-box boundary is only C^{1,1} along edge seams"),
            _ => None,
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match &self.shape {
            Shape::Ball { center, radius } => Aabb {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            },
            Shape::Sdf { bbox, .. } => bbox.clone(),
        }
    }

    /// Signed distance: negative inside, zero on the boundary.
    /// Exact for balls, oracle value otherwise.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => vecn::dist(x, center) - radius,
            Shape::Sdf { kind, .. } => kind.eval(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Distance from an interior (or boundary) point to ∂Ω.
    pub fn dist_boundary(&self, x: &[f64]) -> Result<f64, GeometryError> {
        self.check_dim(x)?;
        let phi = self.signed_distance(x);
        let tol = 1e-12 * self.diameter().max(1.0);
        if phi > tol {
            return Err(GeometryError::OutsideDomain {
                signed_distance: phi,
            });
        }
        Ok((-phi).max(0.0))
    }

    /// Outward unit normal for points within the normal shell of ∂Ω.
    pub fn outward_normal(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(x)?;
        let dist = self.signed_distance(x).abs();
        if dist > self.normal_shell {
            return Err(GeometryError::NotNearBoundary {
                dist,
                shell: self.normal_shell,
            });
        }
        self.normal_at(x)
    }

    /// Outward normal direction without the shell restriction (used by the
    /// reduced dynamics, whose boundary zone is wider than the shell).
    pub fn normal_at(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(x)?;
        match &self.shape {
            Shape::Ball { center, .. } => {
                let mut v = vecn::sub(x, center);
                if vecn::normalize(&mut v) < 1e-14 {
                    return Err(GeometryError::DegenerateGeometry);
                }
                Ok(v)
            }
            Shape::Sdf { kind, .. } => {
                let h = 1e-6 * self.diameter();
                let mut g = vec![0.0; self.dim];
                let mut xp = x.to_vec();
                for k in 0..self.dim {
                    xp[k] = x[k] + h;
                    let fp = kind.eval(&xp);
                    xp[k] = x[k] - h;
                    let fm = kind.eval(&xp);
                    xp[k] = x[k];
                    g[k] = (fp - fm) / (2.0 * h);
                }
                if vecn::normalize(&mut g) < 1e-8 {
                    return Err(GeometryError::DegenerateGeometry);
                }
                Ok(g)
            }
        }
    }

    /// Closest boundary point (exact for balls, one Newton projection along
    /// the oracle gradient otherwise; accurate to O(dist²) near ∂Ω).
    pub fn closest_boundary_point(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let mut v = vecn::sub(x, center);
                if vecn::normalize(&mut v) < 1e-14 {
                    // Center of the ball: any direction works.
                    v = vec![0.0; self.dim];
                    v[0] = 1.0;
                }
                Ok(vecn::add_scaled(center, *radius, &v))
            }
            Shape::Sdf { kind, .. } => {
                let n = self.normal_at(x)?;
                let phi = kind.eval(x);
                Ok(vecn::add_scaled(x, -phi, &n))
            }
        }
    }

    /// Uniform interior sample by rejection from the bounding box.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let bbox = self.bounding_box();
        loop {
            let x = bbox.sample(rng);
            if self.contains(&x) {
                return x;
            }
        }
    }

    /// Boundary sample: direct for balls, bisection along a random ray from
    /// the anchor otherwise (all built-in oracles are star-shaped).
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let dir = vecn::unit_sphere(rng, self.dim);
                vecn::add_scaled(center, *radius, &dir)
            }
            Shape::Sdf { kind, bbox } => {
                let anchor = kind.anchor().to_vec();
                let dir = vecn::unit_sphere(rng, self.dim);
                let mut t_lo = 0.0;
                let mut t_hi = bbox.diagonal();
                debug_assert!(kind.eval(&anchor) < 0.0);
                for _ in 0..80 {
                    let mid = 0.5 * (t_lo + t_hi);
                    let p = vecn::add_scaled(&anchor, mid, &dir);
                    if kind.eval(&p) < 0.0 {
                        t_lo = mid;
                    } else {
                        t_hi = mid;
                    }
                }
                vecn::add_scaled(&anchor, 0.5 * (t_lo + t_hi), &dir)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn unit_ball4() -> Domain {
        Domain::ball(vec![0.0; 4], 1.0).unwrap()
    }

    #[test]
    fn dist_boundary_on_unit_ball() {
        let d = unit_ball4();
        assert!((d.dist_boundary(&[0.5, 0.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((d.dist_boundary(&[0.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(d.dist_boundary(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            d.dist_boundary(&[1.5, 0.0, 0.0, 0.0]),
            Err(GeometryError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn outward_normal_is_radial() {
        let d = unit_ball4();
        let n = d.outward_normal(&[0.99, 0.0, 0.0, 0.0]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-12);

        let shifted = Domain::ball(vec![1.0, 2.0, 0.0, -1.0], 0.5).unwrap();
        let x = [1.0, 2.0 + 0.99 * 0.5, 0.0, -1.0];
        let n = shifted.outward_normal(&x).unwrap();
        assert!((n[1] - 1.0).abs() < 1e-12);

        assert!(matches!(
            d.outward_normal(&[0.5, 0.0, 0.0, 0.0]),
            Err(GeometryError::NotNearBoundary { .. })
        ));
    }

    #[test]
    fn sdf_ball_matches_analytic_ball() {
        let ball = unit_ball4();
        let oracle = Domain::sdf(SdfKind::Ball {
            center: vec![0.0; 4],
            radius: 1.0,
        })
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = ball.sample_interior(&mut rng);
            let da = ball.dist_boundary(&x).unwrap();
            let dg = oracle.dist_boundary(&x).unwrap();
            assert!((da - dg).abs() < 1e-6, "dist mismatch {da} vs {dg}");
        }
        let near = [0.99, 0.0, 0.0, 0.0];
        let na = ball.outward_normal(&near).unwrap();
        let ng = oracle.outward_normal(&near).unwrap();
        for (a, b) in na.iter().zip(&ng) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn ball_identity_dist_plus_radius() {
        let d = Domain::ball(vec![0.5, -0.25, 0.0, 1.0], 2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = d.sample_interior(&mut rng);
            let r = vecn::dist(&x, &[0.5, -0.25, 0.0, 1.0]);
            let db = d.dist_boundary(&x).unwrap();
            assert!((db + r - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normals_have_unit_norm() {
        let shapes = [
            Domain::sdf(SdfKind::Ellipsoid {
                center: vec![0.0; 4],
                semi_axes: vec![1.0, 0.8, 1.2, 0.9],
            })
            .unwrap(),
            Domain::sdf(SdfKind::RoundedBox {
                center: vec![0.0; 4],
                half_widths: vec![1.0; 4],
                corner_radius: 0.2,
            })
            .unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for d in &shapes {
            for _ in 0..50 {
                let b = d.sample_boundary(&mut rng);
                assert!(d.signed_distance(&b).abs() < 1e-9);
                let n = d.normal_at(&b).unwrap();
                assert!((vecn::norm(&n) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rounded_box_flags_smoothness() {
        let d = Domain::sdf(SdfKind::RoundedBox {
            center: vec![0.0; 4],
            half_widths: vec![1.0; 4],
            corner_radius: 0.3,
        })
        .unwrap();
        assert!(d.smoothness_note().is_some());
        assert!(unit_ball4().smoothness_note().is_none());
    }

    #[test]
    fn non_lipschitz_rejected() {
        // A "ball" with doubled slope masquerading via ellipsoid params cannot
        // be produced by the built-ins, so validate the validator directly on
        // an inflated corner radius instead.
        let bad = Domain::sdf(SdfKind::RoundedBox {
            center: vec![0.0; 4],
            half_widths: vec![1.0; 4],
            corner_radius: 1.5,
        });
        assert!(bad.is_err());
    }
}
