//! Small helpers for points and vectors of runtime dimension.
//!
//! Points are plain `Vec<f64>` / `&[f64]`; the dimension is carried by the
//! owning object (domain, field, configuration) and checked at construction
//! time, so these helpers assume matching lengths.

use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// a + s * d, without intermediate allocations beyond the result.
pub fn add_scaled(a: &[f64], s: f64, d: &[f64]) -> Vec<f64> {
    a.iter().zip(d).map(|(x, y)| x + s * y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Normalize in place; returns the original norm. Zero vectors are left as-is.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Standard-normal sample via Box-Muller (`rand_distr` would pull a second
/// RNG ecosystem version; two uniforms are enough here).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn unit_sphere<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    unit_sphere_into(rng, &mut v);
    v
}

/// In-place variant of [`unit_sphere`] for hot loops.
pub fn unit_sphere_into<R: Rng>(rng: &mut R, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = standard_normal(rng);
        }
        if normalize(out) > 1e-12 {
            return;
        }
    }
}
