#![allow(dead_code)]

//! Shared helpers for the integration and acceptance suites.

use gds_core::lattice::{LatticeWindow, MassConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Seeded random admissible configuration in `B(0, r)`: a handful of positive
/// sites near the center, more negative sites spread wider, scaled so
/// `Σσ_- = ratio · Σσ_+` with `ratio ≥ 1`.
pub fn random_admissible_config(
    d: usize,
    xi: f64,
    r: f64,
    seed: u64,
    minus_over_plus: f64,
) -> MassConfig {
    assert!(minus_over_plus >= 1.0);
    let window = LatticeWindow::for_ball(d, xi, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = MassConfig::zeros(window.clone());

    let rand_site = |rng: &mut ChaCha8Rng, max_radius: f64| -> [i64; 3] {
        loop {
            let mut site = [0i64; 3];
            let k = (max_radius / xi).floor() as i64;
            for a in 0..d {
                site[a] = rng.gen_range(-k..=k);
            }
            if window.site_norm(site) <= max_radius {
                return site;
            }
        }
    };

    let n_pos = rng.gen_range(3..=8);
    for _ in 0..n_pos {
        let site = rand_site(&mut rng, 0.45 * r);
        let mass: f64 = rng.gen_range(0.2..1.5);
        let i = window.index(site).unwrap();
        config.values_mut()[i] += mass;
    }
    let n_neg = rng.gen_range(10..=25);
    for _ in 0..n_neg {
        let site = rand_site(&mut rng, 0.8 * r);
        let mass: f64 = rng.gen_range(0.1..0.8);
        let i = window.index(site).unwrap();
        config.values_mut()[i] -= mass;
    }
    // rescale the negative part so the totals come out at the requested ratio
    let (p, n) = config.mass_totals();
    let scale = minus_over_plus * p / n;
    for v in config.values_mut() {
        if *v < 0.0 {
            *v *= scale;
        }
    }
    config
}

/// Variant engineered so that positive mass reaches the confining boundary:
/// a strong central cluster against thinly spread absorbers.
pub fn boundary_contact_config(d: usize, xi: f64, r: f64, seed: u64) -> MassConfig {
    let window = LatticeWindow::for_ball(d, xi, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = MassConfig::zeros(window.clone());
    let total_plus: f64 = rng.gen_range(8.0..16.0);
    let i = window.index([0, 0, 0]).unwrap();
    config.values_mut()[i] = total_plus;
    // weak absorbers in a mid annulus, barely admissible
    let mut placed = 0.0;
    let target = total_plus * rng.gen_range(1.01..1.1);
    let k = (0.7 * r / xi).floor() as i64;
    while placed < target {
        let mut site = [0i64; 3];
        for a in 0..d {
            site[a] = rng.gen_range(-k..=k);
        }
        let norm = window.site_norm(site);
        if norm < 0.25 * r || norm > 0.7 * r {
            continue;
        }
        let m: f64 = rng.gen_range(0.02..0.12);
        let m = m.min(target - placed);
        let j = window.index(site).unwrap();
        config.values_mut()[j] -= m;
        placed += m;
    }
    config
}

/// Monte Carlo estimate of the expected number of visits to the origin for
/// simple random walk on ℤ³, independent of the Fourier quadrature route.
///
/// Each walk runs until it leaves the ball of radius `escape_radius`; the
/// remaining expected visits are added via the exact optional-stopping
/// identity `E[total] = E[visits before exit] + E[γ1(X_exit)]`, with
/// `γ1(x) ≈ 3/(2π|x|)` at the exit (far-field error `O(|x|^-3)`).
pub fn mc_visits_to_origin_3d(walks: u64, escape_radius: f64, seed: u64) -> f64 {
    let r2_limit = escape_radius * escape_radius;
    let chunks = 256u64;
    let per_chunk = walks / chunks;
    let total: f64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut acc = 0.0;
            for _ in 0..per_chunk {
                let mut pos = [0i64; 3];
                let mut visits = 1.0f64;
                'walk: loop {
                    let mut bits = rng.gen::<u64>();
                    for _ in 0..16 {
                        let nibble = (bits & 0xf) as u8;
                        bits >>= 4;
                        if nibble >= 12 {
                            continue;
                        }
                        let dir = nibble % 6;
                        let axis = (dir / 2) as usize;
                        pos[axis] += if dir % 2 == 0 { 1 } else { -1 };
                        let r2 = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]) as f64;
                        if pos == [0, 0, 0] {
                            visits += 1.0;
                        } else if r2 > r2_limit {
                            visits += 1.5 / (std::f64::consts::PI * r2.sqrt());
                            break 'walk;
                        }
                    }
                }
                acc += visits;
            }
            acc
        })
        .sum();
    total / (per_chunk * chunks) as f64
}
