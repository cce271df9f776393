//! Lattice computation engine for the generalized divisible sandpile on
//! scaled lattices ξℤ^d (d = 2, 3), its obstacle-problem characterization,
//! energy identities, and its scaling limit toward partial balayage.
//!
//! Modules:
//!
//! - [`lattice`]: windows of ξℤ^d, mass configurations and fields,
//!   discretization of continuous sources, ε-neighborhood set checks.
//! - [`green`]: discrete Green's functions / potential kernels and the
//!   potentials `U^μ` with `−ΔU^μ = μ`.
//! - [`sandpile`]: the toppling engine, schedules, odometer, diagnostics.
//! - [`obstacle`]: projected Gauss–Seidel solver for the equivalent obstacle
//!   problem; the engine's independent cross-check.
//! - [`energy`]: quadratic-form energies, per-toppling audit, variational
//!   minimality probes.
//! - [`scenario`]: declarative continuous sources with analytic radial
//!   references.
//! - [`study`]: lattice-refinement and boundary-mass experiments.
//! - [`gridcsv`]: the Grid CSV interchange format.

pub mod energy;
pub mod error;
pub mod green;
pub mod gridcsv;
pub mod lattice;
pub mod obstacle;
pub mod sandpile;
pub mod scenario;
pub mod study;

pub use error::{GdsError, Result};

/// Γ(n/2) for positive integer `n`, via Γ(1) = 1, Γ(1/2) = √π and the
/// recurrence Γ(x+1) = xΓ(x). Covers every dimension constant we need.
pub fn gamma_half_integer(n_halves: u32) -> f64 {
    assert!(n_halves >= 1);
    let mut x = if n_halves % 2 == 0 {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut k = if n_halves % 2 == 0 { 2 } else { 1 };
    while k + 2 <= n_halves {
        x *= k as f64 / 2.0;
        k += 2;
    }
    x
}

/// Volume of the unit ball in ℝ^d: `ω_d = π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_integer(d as u32 + 2)
}

/// Surface area of the unit sphere `S^{d−1}`: `2π^{d/2} / Γ(d/2)`.
pub fn sphere_surface_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_integer(d as u32)
}
