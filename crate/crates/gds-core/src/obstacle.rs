//! Independent obstacle-problem solver for cross-validating the toppling
//! engine.
//!
//! The limit configuration of the sandpile is characterized without any
//! schedule: `v(x) = sup{f(x) : Δf ≥ 0 in B̂_R, f ≤ U^σ on ξℤ^d}`, and then
//! `u = U^σ − v`, `ν = σ + Δu`. The sup is computed by projected Gauss–Seidel
//! (optionally SOR): start from `v = U^σ` and relax
//! `v(x) ← min(U^σ(x), mean of neighbors)` over `B̂_R` until the largest
//! update falls below tolerance; sites outside the ball stay clamped at
//! `U^σ`, which is exact for the sup.

use crate::error::{GdsError, Result};
use crate::green::{potential, GreenKernel};
use crate::lattice::{discrete_laplacian_or, LatticeField, MassConfig, Site};
use crate::sandpile::neighbor_offsets_for;

#[derive(Debug, Clone)]
pub struct ObstacleOptions {
    /// Sweep-update tolerance; defaults to `1e-12 · (max U^σ − min U^σ)`.
    pub tol: Option<f64>,
    pub max_iters: u64,
    /// SOR relaxation factor in `[1, 1.9]`; 1 is plain Gauss–Seidel.
    pub omega: f64,
    pub enforce_admissibility: bool,
}

impl Default for ObstacleOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iters: 2_000_000,
            omega: 1.0,
            enforce_admissibility: true,
        }
    }
}

/// Solution triple of the discrete obstacle problem.
#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    /// Sup of discretely subharmonic minorants of `U^σ` on `B̂_R`.
    pub v: LatticeField,
    /// Odometer `u = U^σ − v`.
    pub u: LatticeField,
    /// `ν = σ + Δu`.
    pub nu: MassConfig,
    pub iterations: u64,
    /// Final largest sweep update.
    pub residual: f64,
}

/// Solve the obstacle problem for `σ` in `B̂_R` using the given kernel for
/// the potential `U^σ`.
pub fn solve_obstacle(
    sigma: &MassConfig,
    r: f64,
    kernel: &GreenKernel,
    options: &ObstacleOptions,
) -> Result<ObstacleSolution> {
    let window = sigma.window().clone();
    let d = window.dimension();
    if options.enforce_admissibility && !sigma.is_admissible() {
        let (m_plus, m_minus) = sigma.mass_totals();
        return Err(GdsError::Inadmissible { m_plus, m_minus });
    }
    for (i, &v) in sigma.values().iter().enumerate() {
        if v != 0.0 && !window.in_ball(window.site_at(i), r) {
            return Err(GdsError::InvariantViolation(format!(
                "support leaves the confining ball at {:?}",
                window.site_at(i)
            )));
        }
    }

    let u_sigma = potential(sigma, kernel)?;
    let obstacle = u_sigma.values();
    let range = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in obstacle {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (hi - lo).max(0.0)
    };
    let tol = options.tol.unwrap_or(1e-12 * range).max(1e-300);
    let omega = options.omega.clamp(0.0, 1.95);

    let inside: Vec<usize> = (0..window.len())
        .filter(|&i| window.in_ball(window.site_at(i), r))
        .collect();
    let offsets = neighbor_offsets_for(&window);
    let inv_2d = 1.0 / (2.0 * d as f64);

    let mut v = u_sigma.values().to_vec();
    let mut iterations = 0u64;
    let mut residual = f64::INFINITY;
    while residual >= tol {
        if iterations >= options.max_iters {
            return Err(GdsError::NonConvergence {
                residual,
                tol,
                iterations,
            });
        }
        residual = 0.0;
        for &i in &inside {
            let mut mean = 0.0;
            for &off in &offsets {
                mean += v[(i as isize + off) as usize];
            }
            mean *= inv_2d;
            let relaxed = (1.0 - omega) * v[i] + omega * mean;
            let candidate = relaxed.min(obstacle[i]);
            let delta = (candidate - v[i]).abs();
            if delta > residual {
                residual = delta;
            }
            v[i] = candidate;
        }
        iterations += 1;
    }

    let v = LatticeField::from_values(window.clone(), v)?;
    let mut u = LatticeField::zeros(window.clone());
    for i in 0..window.len() {
        u.values_mut()[i] = u_sigma.values()[i] - v.values()[i];
    }
    let mut nu = MassConfig::zeros(window.clone());
    for i in 0..window.len() {
        let site = window.site_at(i);
        nu.values_mut()[i] = sigma.values()[i] + discrete_laplacian_or(&u, site, 0.0);
    }
    Ok(ObstacleSolution {
        v,
        u,
        nu,
        iterations,
        residual,
    })
}

/// Maximum violations of the complementarity system satisfied by a converged
/// solution.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ComplementarityReport {
    /// `min u` (should be `≥ 0` up to solver tolerance).
    pub u_min: f64,
    /// `max |u|` outside `B̂_R` (should be 0).
    pub u_outside_max_abs: f64,
    /// `max ν` inside `B̂_R` (positive values are violations).
    pub nu_pos_max_inside: f64,
    /// `max over B̂_R of min(u₊, (−ν)₊)`: both factors of `u·ν` nonzero at
    /// once.
    pub compl_max: f64,
}

pub fn complementarity_report(sol: &ObstacleSolution, r: f64) -> ComplementarityReport {
    let window = sol.u.window();
    let mut u_min = f64::INFINITY;
    let mut u_outside_max_abs: f64 = 0.0;
    let mut nu_pos_max_inside = f64::NEG_INFINITY;
    let mut compl_max: f64 = 0.0;
    for i in 0..window.len() {
        let site: Site = window.site_at(i);
        let u = sol.u.values()[i];
        u_min = u_min.min(u);
        if window.in_ball(site, r) {
            let nu = sol.nu.values()[i];
            nu_pos_max_inside = nu_pos_max_inside.max(nu);
            compl_max = compl_max.max(u.max(0.0).min((-nu).max(0.0)));
        } else {
            u_outside_max_abs = u_outside_max_abs.max(u.abs());
        }
    }
    ComplementarityReport {
        u_min,
        u_outside_max_abs,
        nu_pos_max_inside: nu_pos_max_inside.max(0.0),
        compl_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::kernel_table;
    use crate::lattice::LatticeWindow;
    use crate::sandpile::{run_gds, RunOptions, TopplingSchedule};
    use approx::assert_abs_diff_eq;

    fn kernel_for(window: &LatticeWindow) -> GreenKernel {
        let span = crate::green::window_offset_span(window);
        kernel_table(window.dimension(), window.xi(), span + 1).unwrap()
    }

    #[test]
    fn nonpositive_sigma_leaves_obstacle_inactive() {
        let w = LatticeWindow::for_ball(2, 1.0, 3.0).unwrap();
        let mut sigma = MassConfig::zeros(w.clone());
        sigma.set([0, 0, 0], -1.0).unwrap();
        sigma.set([1, 1, 0], -0.25).unwrap();
        let kernel = kernel_for(&w);
        let sol = solve_obstacle(&sigma, 3.0, &kernel, &ObstacleOptions::default()).unwrap();
        // v = U^σ, u ≡ 0, ν = σ
        assert!(sol.u.max_abs() < 1e-10);
        for i in 0..w.len() {
            assert_abs_diff_eq!(sol.nu.values()[i], sigma.values()[i], epsilon = 1e-9);
        }
        let rep = complementarity_report(&sol, 3.0);
        assert!(rep.compl_max < 1e-10);
        assert!(rep.u_outside_max_abs < 1e-12);
    }

    #[test]
    fn five_site_example_matches_hand_solution() {
        let w = LatticeWindow::for_ball(2, 1.0, 2.5).unwrap();
        let mut sigma = MassConfig::zeros(w.clone());
        sigma.set([0, 0, 0], 1.0).unwrap();
        for s in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]] {
            sigma.set(s, -1.0).unwrap();
        }
        let kernel = kernel_for(&w);
        let sol = solve_obstacle(
            &sigma,
            2.5,
            &kernel,
            &ObstacleOptions {
                tol: Some(1e-14),
                ..Default::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(sol.u.get([0, 0, 0]), 1.0, epsilon = 1e-8);
        for site in w.sites() {
            if site != [0, 0, 0] {
                assert!(sol.u.get(site).abs() < 1e-8, "u({site:?}) = {}", sol.u.get(site));
            }
        }
        assert_abs_diff_eq!(sol.nu.get([1, 0, 0]), -0.75, epsilon = 1e-8);
        let rep = complementarity_report(&sol, 2.5);
        assert!(rep.compl_max <= 1e-10);
    }

    #[test]
    fn obstacle_agrees_with_toppling_on_a_small_instance() {
        let w = LatticeWindow::for_ball(2, 1.0, 5.0).unwrap();
        let mut sigma = MassConfig::zeros(w.clone());
        sigma.set([0, 0, 0], 2.5).unwrap();
        sigma.set([2, -1, 0], 0.5).unwrap();
        sigma.set([-1, 1, 0], -2.0).unwrap();
        sigma.set([1, 2, 0], -1.5).unwrap();
        sigma.set([-2, -2, 0], -1.0).unwrap();
        let kernel = kernel_for(&w);
        let sol = solve_obstacle(&sigma, 5.0, &kernel, &ObstacleOptions::default()).unwrap();
        let run = run_gds(
            &sigma,
            5.0,
            TopplingSchedule::Queue,
            &RunOptions {
                stop_tol: Some(1e-11),
                ..Default::default()
            },
        )
        .unwrap();
        let max_u = run.odometer.max_abs().max(1e-300);
        for i in 0..w.len() {
            assert!(
                (sol.nu.values()[i] - run.nu.values()[i]).abs() <= 1e-6 * sigma.max_abs(),
                "nu mismatch at {i}"
            );
            assert!(
                (sol.u.values()[i] - run.odometer.values()[i]).abs() <= 1e-6 * max_u,
                "u mismatch at {i}"
            );
        }
    }

    #[test]
    fn enlarging_the_ball_lowers_v() {
        let w = LatticeWindow::for_ball(2, 1.0, 6.0).unwrap();
        let mut sigma = MassConfig::zeros(w.clone());
        sigma.set([0, 0, 0], 1.5).unwrap();
        sigma.set([1, -2, 0], -2.0).unwrap();
        let kernel = kernel_for(&w);
        let sol_small = solve_obstacle(&sigma, 3.0, &kernel, &ObstacleOptions::default()).unwrap();
        let sol_big = solve_obstacle(&sigma, 5.0, &kernel, &ObstacleOptions::default()).unwrap();
        for i in 0..w.len() {
            assert!(sol_big.v.values()[i] <= sol_small.v.values()[i] + 1e-9);
        }
    }

    #[test]
    fn v_stays_between_obstacle_and_lower_seed() {
        let w = LatticeWindow::for_ball(2, 1.0, 4.0).unwrap();
        let mut sigma = MassConfig::zeros(w.clone());
        sigma.set([0, 0, 0], 1.0).unwrap();
        sigma.set([0, 2, 0], -1.25).unwrap();
        let kernel = kernel_for(&w);
        let u_sigma = potential(&sigma, &kernel).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in u_sigma.values() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let sol = solve_obstacle(&sigma, 4.0, &kernel, &ObstacleOptions::default()).unwrap();
        for i in 0..w.len() {
            assert!(sol.v.values()[i] <= u_sigma.values()[i] + 1e-12 * (hi - lo));
            assert!(sol.v.values()[i] >= lo - (hi - lo) - 1e-12);
        }
    }
}
