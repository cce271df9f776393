//! Discrete energy functionals and the variational audit of sandpile runs.
//!
//! The energy of a configuration is the quadratic form of the lattice Green's
//! function, `E[η] = ξ^d Σ_y U^η(y) η(y) = ξ^{2d} Σ_{x,y} g_ξ(x,y)η(x)η(y)`,
//! with mutual energy `E[η,κ] = ξ^d Σ U^η κ`. Each toppling of emitted mass
//! `m` lowers the energy by exactly `ξ^{d+2} m²`, which makes the run
//! auditable: the recorded emission trace predicts every intermediate energy
//! and the final `E[σ−ν]`, and the limit configuration minimizes `E[σ−ν̃]`
//! over feasible `ν̃` (nonpositive in the ball, same total mass).
//!
//! In two dimensions the kernel's additive constant contributes
//! `c·(ξ^d Σ η)²` to `E[η]`; the audit identities compare energies of
//! configurations with matching totals, so they hold with the constant
//! included.

use crate::error::{GdsError, Result};
use crate::green::{potential_at, GreenKernel};
use crate::lattice::{MassConfig, Site};
use crate::sandpile::GdsResult;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn support_sites(config: &MassConfig) -> Vec<Site> {
    let w = config.window();
    config
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| w.site_at(i))
        .collect()
}

/// `E[η] = ξ^d Σ U^η(y) η(y)`, evaluated over the support of `η`.
pub fn energy(eta: &MassConfig, kernel: &GreenKernel) -> Result<f64> {
    mutual_energy(eta, eta, kernel)
}

/// `E[η, κ] = ξ^d Σ U^η(y) κ(y)`; symmetric in its arguments.
pub fn mutual_energy(eta: &MassConfig, kappa: &MassConfig, kernel: &GreenKernel) -> Result<f64> {
    let w = kappa.window();
    let scale = w.xi().powi(w.dimension() as i32);
    let sites = support_sites(kappa);
    let u = potential_at(eta, kernel, &sites)?;
    let mut acc = 0.0;
    for (site, u_val) in sites.iter().zip(u) {
        acc += u_val * kappa.get(*site);
    }
    Ok(scale * acc)
}

fn config_difference(a: &MassConfig, b: &MassConfig) -> MassConfig {
    let mut out = a.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        *v -= b.values()[i];
    }
    out
}

/// Energy audit of a recorded run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyAudit {
    /// `E[σ]`.
    pub e0: f64,
    pub n_topplings: usize,
    /// `(k, direct E[σ_k], predicted E_0 − ξ^{d+2} Σ_{j≤k} emitted²)`.
    pub checkpoints: Vec<(usize, f64, f64)>,
    /// Largest relative error among the checkpoint identities.
    pub max_identity_err: f64,
    /// Direct `E[σ−ν]`.
    pub e_final_direct: f64,
    /// Closed-form `ξ^{d+2} Σ emitted_j (2σ(x_j) − emitted_j)`.
    pub e_final_predicted: f64,
    /// Relative error between the two `E[σ−ν]` routes.
    pub final_rel_err: f64,
}

/// Replay a recorded toppling trace, checking the per-toppling energy
/// identities at `n_checkpoints` evenly spaced points.
///
/// Requires the run to have been made with [`crate::sandpile::RunOptions::record_trace`].
pub fn audit_run(
    result: &GdsResult,
    sigma: &MassConfig,
    kernel: &GreenKernel,
    n_checkpoints: usize,
) -> Result<EnergyAudit> {
    let trace = result.trace.as_ref().ok_or_else(|| {
        GdsError::InvariantViolation(
            "energy audit needs a per-toppling trace; run with record_trace".into(),
        )
    })?;
    let w = sigma.window();
    let d = w.dimension();
    let xi = w.xi();
    let drop_scale = xi.powi(d as i32 + 2);

    let e0 = energy(sigma, kernel)?;
    let n = trace.len();
    let stride = (n / n_checkpoints.max(1)).max(1);

    let mut config = sigma.clone();
    let mut emitted_sq_sum = 0.0;
    let mut closed_form = 0.0;
    let inv_2d = 1.0 / (2.0 * d as f64);
    let mut checkpoints = Vec::new();
    let mut max_identity_err: f64 = 0.0;

    for (k, &(idx, emitted)) in trace.iter().enumerate() {
        // replay exactly what the engine did
        let v = config.values()[idx];
        debug_assert!((v - emitted).abs() <= 1e-12 * emitted.abs().max(1e-300));
        config.values_mut()[idx] = 0.0;
        let share = v * inv_2d;
        let site = w.site_at(idx);
        for nb in crate::lattice::neighbors(site, d) {
            config.add(nb, share)?;
        }
        emitted_sq_sum += emitted * emitted;
        closed_form += emitted * (2.0 * sigma.values()[idx] - emitted);

        let is_checkpoint = (k + 1) % stride == 0 || k + 1 == n;
        if is_checkpoint {
            let direct = energy(&config, kernel)?;
            let predicted = e0 - drop_scale * emitted_sq_sum;
            let scale = direct.abs().max(e0.abs()).max(1e-300);
            max_identity_err = max_identity_err.max((direct - predicted).abs() / scale);
            checkpoints.push((k + 1, direct, predicted));
        }
    }

    let diff = config_difference(sigma, &config);
    let e_final_direct = energy(&diff, kernel)?;
    let e_final_predicted = drop_scale * closed_form;
    let final_rel_err = (e_final_direct - e_final_predicted).abs()
        / e_final_direct.abs().max(e_final_predicted.abs()).max(1e-300);

    Ok(EnergyAudit {
        e0,
        n_topplings: n,
        checkpoints,
        max_identity_err,
        e_final_direct,
        e_final_predicted,
        final_rel_err,
    })
}

/// Result of probing the variational characterization with random feasible
/// competitors.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MinimizerCheck {
    /// `max over trials of E[σ−ν] − E[σ−ν̃]` (minimality: should be ≤ 0 up
    /// to rounding).
    pub max_violation: f64,
    /// `min over trials of E[σ−ν, ν−ν̃]` (first-order condition: should be
    /// ≥ 0 up to rounding).
    pub min_first_order: f64,
    pub trials_run: usize,
    pub trials_skipped: usize,
}

/// Probe minimality of `E[σ−·]` at `ν` over random feasible competitors
/// `ν̃ ≤ 0` in `B̂_R` with the same total mass, generated by mass-preserving
/// redistributions of `ν`.
pub fn verify_minimizer(
    sigma: &MassConfig,
    nu: &MassConfig,
    kernel: &GreenKernel,
    r: f64,
    trials: usize,
    perturbation_scale: f64,
    seed: u64,
) -> Result<MinimizerCheck> {
    let w = nu.window();
    let base = energy(&config_difference(sigma, nu), kernel)?;

    // donors: interior sites with room to become less negative;
    // boundary donors: positive mass on ∂B̂_R that can move inward
    let mut interior: Vec<usize> = Vec::new();
    let mut interior_neg: Vec<usize> = Vec::new();
    let mut boundary_pos: Vec<usize> = Vec::new();
    for i in 0..w.len() {
        let site = w.site_at(i);
        if w.in_ball(site, r) {
            interior.push(i);
            if nu.values()[i] < 0.0 {
                interior_neg.push(i);
            }
        } else if nu.values()[i] > 0.0 {
            boundary_pos.push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut min_first_order = f64::INFINITY;
    let mut run = 0usize;
    let mut skipped = 0usize;

    while run < trials && skipped < 20 * trials.max(1) {
        let mut tilde = nu.clone();
        let use_boundary = !boundary_pos.is_empty() && rng.gen_bool(0.5);
        let moved = if use_boundary {
            // boundary mass moves inward onto a site with negative headroom
            if interior_neg.is_empty() {
                skipped += 1;
                continue;
            }
            let c = boundary_pos[rng.gen_range(0..boundary_pos.len())];
            let a = interior_neg[rng.gen_range(0..interior_neg.len())];
            let headroom = (-nu.values()[a]).min(nu.values()[c]);
            if headroom <= 0.0 {
                skipped += 1;
                continue;
            }
            let delta = perturbation_scale.min(1.0) * rng.gen_range(0.1..1.0) * headroom;
            tilde.values_mut()[c] -= delta;
            tilde.values_mut()[a] += delta;
            delta
        } else {
            // move mass between two interior sites, keeping ν̃ ≤ 0 at the donor
            if interior_neg.is_empty() || interior.len() < 2 {
                skipped += 1;
                continue;
            }
            let a = interior_neg[rng.gen_range(0..interior_neg.len())];
            let mut b = interior[rng.gen_range(0..interior.len())];
            if b == a {
                b = interior[(interior.iter().position(|&x| x == a).unwrap() + 1) % interior.len()];
            }
            // receiving site must stay ≤ 0: only sites already ≤ 0 receive
            if nu.values()[b] > 0.0 {
                skipped += 1;
                continue;
            }
            let headroom = -nu.values()[a];
            let delta = perturbation_scale.min(1.0) * rng.gen_range(0.1..1.0) * headroom;
            tilde.values_mut()[a] += delta;
            tilde.values_mut()[b] -= delta;
            delta
        };
        if moved == 0.0 {
            skipped += 1;
            continue;
        }
        run += 1;
        let perturbed = energy(&config_difference(sigma, &tilde), kernel)?;
        max_violation = max_violation.max(base - perturbed);
        let direction = config_difference(nu, &tilde);
        let first_order = mutual_energy(&config_difference(sigma, nu), &direction, kernel)?;
        min_first_order = min_first_order.min(first_order);
    }

    Ok(MinimizerCheck {
        max_violation: if run > 0 { max_violation } else { 0.0 },
        min_first_order: if run > 0 { min_first_order } else { 0.0 },
        trials_run: run,
        trials_skipped: skipped,
    })
}
