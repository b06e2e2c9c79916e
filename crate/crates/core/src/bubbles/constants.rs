//! Dimension-dependent constants of the bubble calculus.
//!
//! Everything reduces to radial integrals ∫_{ℝⁿ} f(|x|) dx
//! = ω_{n-1} ∫₀^∞ r^{n-1} f(r) dr, evaluated by adaptive Simpson on the
//! compactified variable r = t/(1-t).

use serde::Serialize;

use super::bubble_norm_const;

/// Constants attached to a fixed ambient dimension n ≥ 3.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DimensionalConstants {
    pub n: usize,
    /// Bubble normalization c_n = (n(n-2))^{(n-2)/4}.
    pub c_n: f64,
    /// c₂ = c_n^{2n/(n-2)} ∫ (1+|x|²)^{-(n+2)/2}.
    pub c2: f64,
    /// c₄ = c_n^{2n/(n-2)} ∫ |x|² (1+|x|²)^{-(n+1)}.
    pub c4: f64,
    /// S_n = ∫ δ_{0,1}^{2n/(n-2)}.
    pub s_n: f64,
}

impl DimensionalConstants {
    /// c₅(β) = (β/n)·c₄, the flatness-weighted companion of c₄.
    pub fn c5(&self, beta: f64) -> f64 {
        beta / self.n as f64 * self.c4
    }
}

/// Surface area of the unit (n-1)-sphere, 2 π^{n/2} / Γ(n/2), with the
/// half-integer gamma evaluated exactly.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// Γ(n/2) for integer n ≥ 1.
fn gamma_half(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        // Γ(k) = (k-1)!
        let k = n / 2;
        (1..k).map(|i| i as f64).product()
    } else {
        // Γ(k + 1/2) = (2k)! / (4^k k!) √π
        let k = n / 2;
        let mut v = std::f64::consts::PI.sqrt();
        for i in 0..k {
            v *= i as f64 + 0.5;
        }
        v
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// ω_{n-1} ∫₀^∞ r^{n-1} f(r) dr on the compactified interval.
pub fn radial_integral(n: usize, f: &dyn Fn(f64) -> f64) -> f64 {
    let g = move |t: f64| -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let r = t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        r.powi(n as i32 - 1) * f(r) * jac
    };
    sphere_area(n) * adaptive_simpson(&g, 0.0, 1.0, 1e-13, 48)
}

pub fn dimensional_constants(n: usize) -> DimensionalConstants {
    assert!(n >= 3, "constants need n >= 3");
    let nf = n as f64;
    let c_n = bubble_norm_const(n);
    let amp = c_n.powf(2.0 * nf / (nf - 2.0));
    let c2 = amp * radial_integral(n, &|r| (1.0 + r * r).powf(-(nf + 2.0) / 2.0));
    let c4 = amp * radial_integral(n, &|r| r * r * (1.0 + r * r).powf(-(nf + 1.0)));
    let s_n = amp * radial_integral(n, &|r| (1.0 + r * r).powf(-nf));
    DimensionalConstants { n, c_n, c2, c4, s_n }
}
