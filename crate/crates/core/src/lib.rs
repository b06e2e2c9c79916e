//! Certification of solutions to the critical-exponent Dirichlet problem
//! −Δu = K(x) u^{(n+2)/(n−2)}, u > 0 in Ω, u = 0 on ∂Ω, together with the
//! reduced pseudo-gradient dynamics on bubble parameters that exhibits the
//! admissible blow-up configurations.
//!
//! Module map:
//! * [`geometry`] — the domain Ω (balls and signed-distance oracles).
//! * [`greens`] — Green's function G = |x−y|^{−(n−2)} − H via images or
//!   walk-on-spheres Monte Carlo.
//! * [`kfield`] — the prescribed K with flatness templates and assumption
//!   checks.
//! * [`euler_hopf`] — interaction matrices, C_∞ enumeration, and the
//!   existence verdict.
//! * [`bubbles`] — bubble profiles, projections, interactions, the
//!   functional J, and parameter fitting.
//! * [`pseudoflow`] — region classification, pseudo-gradient assembly, and
//!   trajectory integration with blow-up detection.

pub mod bubbles;
pub mod eigen;
pub mod euler_hopf;
pub mod geometry;
pub mod greens;
pub mod kfield;
pub mod pseudoflow;
pub mod rng;
pub mod vecn;

pub use euler_hopf::{CriterionParams, CriterionReport, Verdict};
pub use geometry::{Domain, SdfKind};
pub use greens::{Estimate, GreensEvaluator, WalkParams};
pub use kfield::{CriticalPointSpec, Envelope, KField};
