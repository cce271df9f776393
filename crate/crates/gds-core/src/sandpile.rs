//! The generalized divisible sandpile engine.
//!
//! Toppling a site `x` of a signed mass configuration zeroes its positive
//! mass and distributes it equally to the `2d` neighbors:
//! `T_x η(y) = η(y) + η_+(x)·ξ²·Δδ_x(y)`. The engine applies topplings under
//! an infinitely covering schedule restricted to the confining ball
//! `B̂_R = B(0,R) ∩ ξℤ^d` until the largest remaining positive mass inside the
//! ball falls below a stopping tolerance, accumulating the odometer
//! `u(x) = ξ² ×` total mass emitted from `x`.
//!
//! The final pair `(ν, u)` is schedule-independent; `ν = σ + Δu`, `ν ≤ 0` in
//! `B̂_R` up to the stopping tolerance, positive leftovers sit on the outer
//! boundary `∂B̂_R`, and `ν_- ≤ σ_-` pointwise.

use crate::error::{GdsError, Result};
use crate::lattice::{neighbors, LatticeField, LatticeWindow, MassConfig, Site};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Order in which sites of `B̂_R` are offered for toppling, round by round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopplingSchedule {
    /// Lexicographic pass over all of `B̂_R` each round.
    Sweep,
    /// FIFO queue of currently positive sites; sites pushed positive are
    /// enqueued for the next round. Equivalent to an infinitely covering
    /// sequence because toppling a nonpositive site is the identity.
    Queue,
    /// Freshly seeded permutation of `B̂_R` each round.
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stop when the largest positive mass in `B̂_R` falls below this.
    /// Defaults to `1e-10 · max(1, M_+)`.
    pub stop_tol: Option<f64>,
    pub max_rounds: u64,
    /// Record every toppling `(site index, emitted mass)` for energy audits.
    pub record_trace: bool,
    /// Reject configurations with `Σσ_+ > Σσ_-`. The bounded process
    /// converges regardless (excess lands on `∂B̂_R`), so studies that probe
    /// boundary mass may disable the check.
    pub enforce_admissibility: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop_tol: None,
            max_rounds: 10_000_000,
            record_trace: false,
            enforce_admissibility: true,
        }
    }
}

/// Per-round diagnostics row: `round,residual,M_plus,M_minus,Q,total_emitted`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RoundDiagnostics {
    pub round: u64,
    pub residual: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub q: f64,
    pub total_emitted: f64,
}

/// Outcome of a run: limit configuration, odometer, and the bookkeeping
/// series behind the convergence and energy arguments.
#[derive(Debug, Clone)]
pub struct GdsResult {
    pub nu: MassConfig,
    pub odometer: LatticeField,
    pub r: f64,
    pub rounds: u64,
    pub topplings: u64,
    pub stop_tol: f64,
    /// Largest positive mass left in `B̂_R`.
    pub stop_residual: f64,
    /// Kahan-compensated `Σ_j emitted_j` over all topplings.
    pub total_emitted: f64,
    /// Per-round emitted totals.
    pub emitted_series: Vec<f64>,
    /// Per-round quadratic weight samples `Q_k = Σ σ_k(x)|x|²`.
    pub q_series: Vec<f64>,
    pub diagnostics: Vec<RoundDiagnostics>,
    /// Per-toppling `(site index, emitted)` when requested via
    /// [`RunOptions::record_trace`].
    pub trace: Option<Vec<(usize, f64)>>,
    /// Direct energy samples, filled in by the energy audit when one is run.
    pub energy_series: Option<Vec<(u64, f64)>>,
}

impl GdsResult {
    /// `M_R = ξ^d · Σ ν_+`: total positive mass in measure units (up to the
    /// stopping tolerance this is the mass on `∂B̂_R`).
    pub fn boundary_mass(&self) -> f64 {
        let w = self.nu.window();
        let scale = w.xi().powi(w.dimension() as i32);
        scale * self.nu.values().iter().filter(|v| **v > 0.0).sum::<f64>()
    }

    /// Sites whose odometer exceeds `threshold`: the region mass actually
    /// moved through.
    pub fn occupied_sites(&self, threshold: f64) -> Vec<Site> {
        let w = self.odometer.window();
        self.odometer
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &u)| u > threshold)
            .map(|(i, _)| w.site_at(i))
            .collect()
    }
}

/// Topple one site inside `B̂_R`: zero its positive mass, give each of the
/// `2d` neighbors an equal share, and return the emitted mass (0 when the
/// site is nonpositive, which leaves the configuration unchanged).
pub fn topple(config: &mut MassConfig, site: Site, r: f64) -> Result<f64> {
    let w = config.window();
    if !w.contains(site) {
        return Err(GdsError::OutsideWindow { site });
    }
    if !w.in_ball(site, r) {
        return Err(GdsError::TopplingOutsideBall {
            site,
            norm: w.site_norm(site),
            r,
        });
    }
    let d = w.dimension();
    for nb in neighbors(site, d) {
        if !w.contains(nb) {
            return Err(GdsError::MissingNeighbor { site });
        }
    }
    let v = config.get(site);
    if v <= 0.0 {
        return Ok(0.0);
    }
    config.set(site, 0.0)?;
    let share = v / (2.0 * d as f64);
    for nb in neighbors(site, d) {
        config.add(nb, share)?;
    }
    Ok(v)
}

struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn new() -> Self {
        Self { sum: 0.0, c: 0.0 }
    }

    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

struct Engine {
    values: Vec<f64>,
    odometer: Vec<f64>,
    inside: Vec<bool>,
    inside_sites: Vec<usize>,
    nb_offsets: Vec<isize>,
    norm_sq: Vec<f64>,
    xi_sq: f64,
    inv_2d: f64,
    topplings: u64,
    total_emitted: KahanSum,
    round_emitted: KahanSum,
    trace: Option<Vec<(usize, f64)>>,
}

impl Engine {
    #[inline]
    fn topple_idx(&mut self, idx: usize) {
        let v = self.values[idx];
        if v <= 0.0 {
            return;
        }
        self.values[idx] = 0.0;
        let share = v * self.inv_2d;
        for &off in &self.nb_offsets {
            let j = (idx as isize + off) as usize;
            self.values[j] += share;
        }
        self.odometer[idx] += self.xi_sq * v;
        self.round_emitted.add(v);
        self.topplings += 1;
        if let Some(t) = self.trace.as_mut() {
            t.push((idx, v));
        }
    }

    fn residual(&self) -> f64 {
        let mut m: f64 = 0.0;
        for &i in &self.inside_sites {
            m = m.max(self.values[i]);
        }
        m
    }

    fn scan(&self) -> (f64, f64, f64) {
        let mut p = 0.0;
        let mut n = 0.0;
        let mut q = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > 0.0 {
                p += v;
            } else {
                n -= v;
            }
            if v != 0.0 {
                q += v * self.norm_sq[i];
            }
        }
        (p, n, q)
    }
}

/// Flat-index offsets of the `2d` neighbors for a window's row-major layout.
/// Valid for sites that do not touch the window's box edge.
pub(crate) fn neighbor_offsets_for(window: &LatticeWindow) -> Vec<isize> {
    let d = window.dimension();
    let mut extents = [1usize; 3];
    for a in 0..d {
        extents[a] = (window.hi()[a] - window.lo()[a] + 1) as usize;
    }
    // row-major, last axis fastest
    let mut strides = [0isize; 3];
    let mut s = 1isize;
    for a in (0..d).rev() {
        strides[a] = s;
        s *= extents[a] as isize;
    }
    let mut offs = Vec::with_capacity(2 * d);
    for a in 0..d {
        offs.push(strides[a]);
        offs.push(-strides[a]);
    }
    offs
}

/// Run the generalized divisible sandpile from `sigma` in the confining ball
/// of radius `r` under the given schedule.
pub fn run_gds(
    sigma: &MassConfig,
    r: f64,
    schedule: TopplingSchedule,
    options: &RunOptions,
) -> Result<GdsResult> {
    let window = sigma.window().clone();
    let d = window.dimension();
    let xi = window.xi();

    // the window must hold the ball and its one-site halo
    let k_needed = ((r + xi) / xi).floor() as i64;
    for a in 0..d {
        if window.lo()[a] > -k_needed || window.hi()[a] < k_needed {
            return Err(GdsError::WindowTooSmall(format!(
                "window does not contain B(0, R+xi) for R = {r}: axis {a} needs ±{k_needed}"
            )));
        }
    }

    let (m_plus0, m_minus0) = sigma.mass_totals();
    if options.enforce_admissibility && !sigma.is_admissible() {
        return Err(GdsError::Inadmissible {
            m_plus: m_plus0,
            m_minus: m_minus0,
        });
    }

    let mut inside = vec![false; window.len()];
    let mut inside_sites = Vec::new();
    let mut norm_sq = vec![0.0; window.len()];
    for i in 0..window.len() {
        let site = window.site_at(i);
        norm_sq[i] = window.site_norm_sq(site);
        if window.in_ball(site, r) {
            inside[i] = true;
            inside_sites.push(i);
        }
    }

    // support confinement precondition
    for (i, &v) in sigma.values().iter().enumerate() {
        if v != 0.0 && !inside[i] {
            let site = window.site_at(i);
            return Err(GdsError::InvariantViolation(format!(
                "support leaves the confining ball: sigma({site:?}) = {v} at |x| = {}",
                window.site_norm(site)
            )));
        }
    }

    let stop_tol = options.stop_tol.unwrap_or(1e-10 * m_plus0.max(1.0));
    let activation = stop_tol * 0.5;
    let q_hi = (r + xi) * (r + xi) * m_plus0;
    let q_lo = -(r + xi) * (r + xi) * m_minus0;
    let q_slack = 1e-9 * (r + xi) * (r + xi) * (m_plus0 + m_minus0) + 1e-300;

    let mut eng = Engine {
        values: sigma.values().to_vec(),
        odometer: vec![0.0; window.len()],
        inside,
        inside_sites,
        nb_offsets: neighbor_offsets_for(&window),
        norm_sq,
        xi_sq: xi * xi,
        inv_2d: 1.0 / (2.0 * d as f64),
        topplings: 0,
        total_emitted: KahanSum::new(),
        round_emitted: KahanSum::new(),
        trace: if options.record_trace {
            Some(Vec::new())
        } else {
            None
        },
    };

    let mut rng = match schedule {
        TopplingSchedule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut shuffled = eng.inside_sites.clone();
    let mut queue: Vec<usize> = eng
        .inside_sites
        .iter()
        .copied()
        .filter(|&i| eng.values[i] > activation)
        .collect();
    let mut in_next = vec![false; window.len()];

    let mut rounds = 0u64;
    let mut emitted_series = Vec::new();
    let mut q_series = Vec::new();
    let mut diagnostics = Vec::new();
    let mut residual = eng.residual();

    while residual >= stop_tol {
        if rounds >= options.max_rounds {
            return Err(GdsError::MaxRoundsExceeded {
                max_rounds: options.max_rounds,
                residual,
                stop_tol,
                topplings: eng.topplings,
            });
        }
        eng.round_emitted = KahanSum::new();
        match schedule {
            TopplingSchedule::Sweep => {
                for k in 0..eng.inside_sites.len() {
                    eng.topple_idx(eng.inside_sites[k]);
                }
            }
            TopplingSchedule::Random { .. } => {
                shuffled.shuffle(rng.as_mut().expect("rng present for random schedule"));
                for k in 0..shuffled.len() {
                    eng.topple_idx(shuffled[k]);
                }
            }
            TopplingSchedule::Queue => {
                if queue.is_empty() {
                    // residual is still above stop_tol: rebuild from a scan
                    queue = eng
                        .inside_sites
                        .iter()
                        .copied()
                        .filter(|&i| eng.values[i] > activation)
                        .collect();
                }
                let mut next = Vec::new();
                for k in 0..queue.len() {
                    let idx = queue[k];
                    let v = eng.values[idx];
                    if v <= 0.0 {
                        continue;
                    }
                    eng.topple_idx(idx);
                    for &off in &eng.nb_offsets.clone() {
                        let j = (idx as isize + off) as usize;
                        if eng.inside[j] && !in_next[j] && eng.values[j] > activation {
                            in_next[j] = true;
                            next.push(j);
                        }
                    }
                }
                for &j in &next {
                    in_next[j] = false;
                }
                queue = next;
            }
        }
        rounds += 1;
        let round_emitted = eng.round_emitted.value();
        eng.total_emitted.add(round_emitted);
        emitted_series.push(round_emitted);

        let (m_plus, m_minus, q) = eng.scan();
        residual = eng.residual();
        q_series.push(q);
        diagnostics.push(RoundDiagnostics {
            round: rounds,
            residual,
            m_plus,
            m_minus,
            q,
            total_emitted: eng.total_emitted.value(),
        });
        if q > q_hi + q_slack || q < q_lo - q_slack {
            return Err(GdsError::InvariantViolation(format!(
                "quadratic weight {q} escaped [{q_lo}, {q_hi}] at round {rounds}"
            )));
        }
    }

    let nu = MassConfig::from_values(window.clone(), eng.values)?;
    let odometer = LatticeField::from_values(window.clone(), eng.odometer)?;

    // structural postconditions
    let sum_sigma = sigma.total();
    let sum_nu = nu.total();
    let scale: f64 = sigma.values().iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    if (sum_nu - sum_sigma).abs() > 1e-12 * scale {
        return Err(GdsError::InvariantViolation(format!(
            "mass not conserved: {sum_sigma} -> {sum_nu}"
        )));
    }
    for (i, &v) in nu.values().iter().enumerate() {
        let site = window.site_at(i);
        if eng.inside[i] {
            if v > stop_tol {
                return Err(GdsError::InvariantViolation(format!(
                    "nu({site:?}) = {v} > stop_tol inside the ball"
                )));
            }
            let sigma_neg = (-sigma.values()[i]).max(0.0);
            if v < -sigma_neg - stop_tol {
                return Err(GdsError::InvariantViolation(format!(
                    "nu({site:?}) = {v} dips below -sigma_-({site:?}) = {}",
                    -sigma_neg
                )));
            }
        } else if v > stop_tol {
            // positive mass outside the ball must sit on its outer boundary
            let touches_ball = neighbors(site, d)
                .into_iter()
                .any(|nb| window.contains(nb) && window.in_ball(nb, r));
            if !touches_ball {
                return Err(GdsError::InvariantViolation(format!(
                    "positive mass {v} at {site:?} beyond the outer boundary"
                )));
            }
        } else if v < -stop_tol && sigma.values()[i] >= 0.0 {
            return Err(GdsError::InvariantViolation(format!(
                "negative mass {v} appeared outside supp sigma_- at {site:?}"
            )));
        }
    }

    Ok(GdsResult {
        nu,
        odometer,
        r,
        rounds,
        topplings: eng.topplings,
        stop_tol,
        stop_residual: residual,
        total_emitted: eng.total_emitted.value(),
        emitted_series,
        q_series,
        diagnostics,
        trace: eng.trace,
        energy_series: None,
    })
}

/// `(M_+, M_-)` of a configuration; re-exported here because the series of
/// these totals is the engine's convergence bookkeeping.
pub fn mass_totals(config: &MassConfig) -> (f64, f64) {
    config.mass_totals()
}

/// `Q = Σ config(x)·|x|²` with site positions in length units.
pub fn quadratic_weight(config: &MassConfig) -> f64 {
    config.quadratic_weight()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn five_site_sigma(xi: f64) -> MassConfig {
        let w = LatticeWindow::for_ball(2, xi, 2.5).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 1.0).unwrap();
        for s in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]] {
            m.set(s, -1.0).unwrap();
        }
        m
    }

    #[test]
    fn topple_splits_mass_equally() {
        let w = LatticeWindow::for_ball(2, 1.0, 3.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 4.0).unwrap();
        let emitted = topple(&mut m, [0, 0, 0], 3.0).unwrap();
        assert_eq!(emitted, 4.0);
        assert_eq!(m.get([0, 0, 0]), 0.0);
        for s in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]] {
            assert_eq!(m.get(s), 1.0);
        }
    }

    #[test]
    fn topple_of_nonpositive_site_is_identity() {
        let w = LatticeWindow::for_ball(2, 1.0, 3.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([1, 0, 0], -2.0).unwrap();
        let before = m.values().to_vec();
        let emitted = topple(&mut m, [1, 0, 0], 3.0).unwrap();
        assert_eq!(emitted, 0.0);
        assert_eq!(m.values(), &before[..]);
    }

    #[test]
    fn topple_with_negative_neighbor() {
        let w = LatticeWindow::for_ball(2, 1.0, 3.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 4.0).unwrap();
        m.set([1, 0, 0], -1.0).unwrap();
        topple(&mut m, [0, 0, 0], 3.0).unwrap();
        assert_eq!(m.get([0, 0, 0]), 0.0);
        assert_eq!(m.get([1, 0, 0]), 0.0);
        for s in [[-1i64, 0, 0], [0, 1, 0], [0, -1, 0]] {
            assert_eq!(m.get(s), 1.0);
        }
    }

    #[test]
    fn topple_outside_ball_is_an_error() {
        let w = LatticeWindow::for_ball(2, 1.0, 2.5).unwrap();
        let mut m = MassConfig::zeros(w);
        assert!(matches!(
            topple(&mut m, [3, 0, 0], 2.5),
            Err(GdsError::TopplingOutsideBall { .. })
        ));
        // |x| = R exactly belongs to the exterior
        let w = LatticeWindow::for_ball(2, 1.0, 2.0).unwrap();
        let mut m = MassConfig::zeros(w);
        assert!(topple(&mut m, [2, 0, 0], 2.0).is_err());
    }

    #[test]
    fn quadratic_weight_increases_by_xi_sq_times_emitted() {
        let w = LatticeWindow::for_ball(2, 0.5, 3.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([2, -1, 0], 1.75).unwrap();
        m.set([0, 1, 0], -3.0).unwrap();
        let q0 = quadratic_weight(&m);
        let emitted = topple(&mut m, [2, -1, 0], 3.0).unwrap();
        let q1 = quadratic_weight(&m);
        assert_abs_diff_eq!(q1 - q0, 0.25 * emitted, epsilon = 1e-14);
    }

    #[test]
    fn sigma_nonpositive_returns_immediately() {
        let w = LatticeWindow::for_ball(2, 1.0, 3.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], -2.0).unwrap();
        m.set([1, 1, 0], -0.5).unwrap();
        let out = run_gds(&m, 3.0, TopplingSchedule::Sweep, &RunOptions::default()).unwrap();
        assert_eq!(out.rounds, 0);
        assert_eq!(out.topplings, 0);
        assert_eq!(out.nu.values(), m.values());
        assert!(out.odometer.values().iter().all(|&u| u == 0.0));
    }

    #[test]
    fn five_site_example_settles_in_one_toppling() {
        let sigma = five_site_sigma(1.0);
        let opts = RunOptions {
            stop_tol: Some(1e-12),
            ..Default::default()
        };
        for schedule in [
            TopplingSchedule::Sweep,
            TopplingSchedule::Queue,
            TopplingSchedule::Random { seed: 7 },
        ] {
            let out = run_gds(&sigma, 2.5, schedule, &opts).unwrap();
            assert_eq!(out.topplings, 1, "{schedule:?}");
            assert_eq!(out.nu.get([0, 0, 0]), 0.0);
            for s in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]] {
                assert_eq!(out.nu.get(s), -0.75);
            }
            assert_eq!(out.odometer.get([0, 0, 0]), 1.0);
            let u_elsewhere: f64 = out
                .odometer
                .values()
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
                - out.odometer.get([0, 0, 0]);
            assert_eq!(u_elsewhere, 0.0);
        }
    }

    #[test]
    fn inadmissible_sigma_is_rejected_unless_allowed() {
        let w = LatticeWindow::for_ball(2, 1.0, 3.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 2.0).unwrap();
        m.set([1, 0, 0], -0.5).unwrap();
        assert!(matches!(
            run_gds(&m, 3.0, TopplingSchedule::Queue, &RunOptions::default()),
            Err(GdsError::Inadmissible { .. })
        ));
        let out = run_gds(
            &m,
            3.0,
            TopplingSchedule::Queue,
            &RunOptions {
                enforce_admissibility: false,
                ..Default::default()
            },
        )
        .unwrap();
        // the excess ends up on the outer boundary
        assert!(out.boundary_mass() > 0.0);
    }

    #[test]
    fn support_outside_ball_is_rejected() {
        let w = LatticeWindow::for_ball(2, 1.0, 2.5).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([3, 0, 0], -1.0).unwrap();
        assert!(run_gds(&m, 2.5, TopplingSchedule::Sweep, &RunOptions::default()).is_err());
    }

    #[test]
    fn max_rounds_is_reported() {
        // mass must diffuse two sites to reach the sink: needs several rounds
        let w = LatticeWindow::for_ball(2, 1.0, 3.5).unwrap();
        let mut sigma = MassConfig::zeros(w);
        sigma.set([0, 0, 0], 2.0).unwrap();
        sigma.set([2, 0, 0], -3.0).unwrap();
        let err = run_gds(
            &sigma,
            3.5,
            TopplingSchedule::Sweep,
            &RunOptions {
                stop_tol: Some(1e-13),
                max_rounds: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            GdsError::MaxRoundsExceeded {
                residual,
                topplings,
                ..
            } => {
                assert!(residual > 1e-13);
                assert!(topplings >= 1);
            }
            other => panic!("expected MaxRoundsExceeded, got {other:?}"),
        }
    }

    #[test]
    fn conservation_and_structure_on_a_random_run() {
        let w = LatticeWindow::for_ball(2, 1.0, 6.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 3.0).unwrap();
        m.set([2, 1, 0], 1.0).unwrap();
        m.set([-1, 2, 0], -2.5).unwrap();
        m.set([1, -3, 0], -2.0).unwrap();
        m.set([0, 3, 0], -1.5).unwrap();
        let out = run_gds(&m, 6.0, TopplingSchedule::Queue, &RunOptions::default()).unwrap();
        assert_abs_diff_eq!(out.nu.total(), m.total(), epsilon = 1e-12 * 10.0);
        // odometer identity: Σu = ξ²·Σ emitted
        let u_sum: f64 = out.odometer.values().iter().sum();
        assert_abs_diff_eq!(
            u_sum,
            out.total_emitted,
            epsilon = 1e-10 * out.total_emitted.abs().max(1.0)
        );
        // M± series nonincreasing
        for w in out.diagnostics.windows(2) {
            assert!(w[1].m_plus <= w[0].m_plus * (1.0 + 1e-12) + 1e-12);
            assert!(w[1].m_minus <= w[0].m_minus * (1.0 + 1e-12) + 1e-12);
        }
        // odometer nonnegative, zero outside the ball
        for (i, &u) in out.odometer.values().iter().enumerate() {
            assert!(u >= 0.0);
            let site = out.odometer.window().site_at(i);
            if !out.odometer.window().in_ball(site, 6.0) {
                assert_eq!(u, 0.0);
            }
        }
    }

    #[test]
    fn nu_equals_sigma_plus_laplacian_of_odometer() {
        let sigma = five_site_sigma(0.5);
        let out = run_gds(
            &sigma,
            2.5,
            TopplingSchedule::Sweep,
            &RunOptions {
                stop_tol: Some(1e-12),
                ..Default::default()
            },
        )
        .unwrap();
        let w = sigma.window();
        for i in 0..w.len() {
            let site = w.site_at(i);
            let lap = crate::lattice::discrete_laplacian_or(&out.odometer, site, 0.0);
            assert_abs_diff_eq!(
                out.nu.get(site),
                sigma.get(site) + lap,
                epsilon = 1e-8 * sigma.max_abs()
            );
        }
    }

    #[test]
    fn schedules_agree_on_a_small_instance() {
        let w = LatticeWindow::for_ball(2, 1.0, 5.0).unwrap();
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 2.0).unwrap();
        m.set([1, 1, 0], 1.0).unwrap();
        m.set([-2, 0, 0], -2.0).unwrap();
        m.set([0, -2, 0], -2.0).unwrap();
        let opts = RunOptions {
            stop_tol: Some(1e-10),
            ..Default::default()
        };
        let a = run_gds(&m, 5.0, TopplingSchedule::Sweep, &opts).unwrap();
        let b = run_gds(&m, 5.0, TopplingSchedule::Queue, &opts).unwrap();
        let c = run_gds(&m, 5.0, TopplingSchedule::Random { seed: 3 }, &opts).unwrap();
        let max_u = a.odometer.max_abs().max(1e-300);
        for other in [&b, &c] {
            for i in 0..m.window().len() {
                assert!((a.nu.values()[i] - other.nu.values()[i]).abs() <= 1e-6 * m.max_abs());
                assert!(
                    (a.odometer.values()[i] - other.odometer.values()[i]).abs() <= 1e-6 * max_u
                );
            }
        }
    }
}
