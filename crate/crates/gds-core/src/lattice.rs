//! Finite windows of the scaled lattice ξℤ^d and the functions living on them.
//!
//! Sites are integer vectors `k` (stored as `[i64; 3]`, unused axes pinned to
//! zero) representing the points `ξ·k ∈ ℝ^d`. A [`LatticeWindow`] is a dense
//! axis-aligned box of sites; [`MassConfig`] and [`LatticeField`] are dense
//! real-valued functions on a window. Discretization of continuous sources
//! (cell averages, point atoms, sphere layers) and the inner/outer
//! ε-neighborhood set checks also live here.

use crate::error::{GdsError, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Integer lattice coordinates. Axes `>= d` are always zero.
pub type Site = [i64; 3];

/// Dense axis-aligned box of sites of ξℤ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWindow {
    d: usize,
    xi: f64,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl LatticeWindow {
    /// A window with per-axis integer bounds `lo ≤ k ≤ hi`.
    pub fn new(d: usize, xi: f64, lo: [i64; 3], hi: [i64; 3]) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(GdsError::WindowTooSmall(format!("dimension must be 2 or 3, got {d}")));
        }
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(GdsError::WindowTooSmall(format!("lattice spacing must be positive, got {xi}")));
        }
        let mut lo = lo;
        let mut hi = hi;
        for a in d..3 {
            lo[a] = 0;
            hi[a] = 0;
        }
        for a in 0..d {
            if hi[a] < lo[a] {
                return Err(GdsError::WindowTooSmall(format!(
                    "axis {a}: hi {} < lo {}",
                    hi[a], lo[a]
                )));
            }
        }
        Ok(Self { d, xi, lo, hi })
    }

    /// Symmetric window containing `B(0, R + ξ) ∩ ξℤ^d`: the confining ball
    /// plus a one-site halo, since toppling deposits mass on the outer
    /// boundary of the ball.
    pub fn for_ball(d: usize, xi: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(GdsError::WindowTooSmall(format!("confining radius must be positive, got {r}")));
        }
        let k = ((r + xi) / xi).floor() as i64;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..d {
            lo[a] = -k;
            hi[a] = k;
        }
        Self::new(d, xi, lo, hi)
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn lo(&self) -> [i64; 3] {
        self.lo
    }

    pub fn hi(&self) -> [i64; 3] {
        self.hi
    }

    /// Total number of sites.
    pub fn len(&self) -> usize {
        let mut n = 1usize;
        for a in 0..self.d {
            n *= (self.hi[a] - self.lo[a] + 1) as usize;
        }
        n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: Site) -> bool {
        (0..3).all(|a| site[a] >= self.lo[a] && site[a] <= self.hi[a])
    }

    /// Row-major flat index (last axis fastest).
    pub fn index(&self, site: Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..self.d {
            let extent = (self.hi[a] - self.lo[a] + 1) as usize;
            idx = idx * extent + (site[a] - self.lo[a]) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut site = [0i64; 3];
        for a in (0..self.d).rev() {
            let extent = (self.hi[a] - self.lo[a] + 1) as usize;
            site[a] = self.lo[a] + (idx % extent) as i64;
            idx /= extent;
        }
        site
    }

    /// Lexicographic iteration over all sites.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site_at(i))
    }

    /// Physical position `ξ·k` of a site.
    pub fn position(&self, site: Site) -> [f64; 3] {
        [
            site[0] as f64 * self.xi,
            site[1] as f64 * self.xi,
            site[2] as f64 * self.xi,
        ]
    }

    /// Euclidean norm of the site's position.
    pub fn site_norm(&self, site: Site) -> f64 {
        self.site_norm_sq(site).sqrt()
    }

    pub fn site_norm_sq(&self, site: Site) -> f64 {
        let mut s = 0.0;
        for a in 0..self.d {
            let x = site[a] as f64 * self.xi;
            s += x * x;
        }
        s
    }

    /// Is the site in `B̂_R = B(0,R) ∩ ξℤ^d`? The ball is open: `|x| = R`
    /// belongs to the exterior.
    pub fn in_ball(&self, site: Site, r: f64) -> bool {
        self.site_norm_sq(site) < r * r
    }
}

/// The `2d` lattice neighbors of a site, at distance ξ. Sites outside the
/// window are still returned; callers decide the extension rule.
pub fn neighbors(site: Site, d: usize) -> Vec<Site> {
    let mut out = Vec::with_capacity(2 * d);
    for a in 0..d {
        let mut p = site;
        p[a] += 1;
        out.push(p);
        let mut m = site;
        m[a] -= 1;
        out.push(m);
    }
    out
}

/// The closest lattice point `x^::`: the unique site in `x + (-ξ/2, ξ/2]^d`
/// (ties round half-up per axis).
pub fn nearest_site(x: &[f64], window: &LatticeWindow) -> Result<Site> {
    let mut site = [0i64; 3];
    for a in 0..window.d {
        site[a] = (x[a] / window.xi + 0.5).floor() as i64;
    }
    if window.contains(site) {
        Ok(site)
    } else {
        Err(GdsError::OutsideWindow { site })
    }
}

macro_rules! grid_common {
    ($name:ident) => {
        impl $name {
            pub fn zeros(window: LatticeWindow) -> Self {
                let n = window.len();
                Self {
                    window,
                    values: vec![0.0; n],
                }
            }

            pub fn from_values(window: LatticeWindow, values: Vec<f64>) -> Result<Self> {
                if values.len() != window.len() {
                    return Err(GdsError::WindowTooSmall(format!(
                        "value count {} does not match window site count {}",
                        values.len(),
                        window.len()
                    )));
                }
                Ok(Self { window, values })
            }

            pub fn window(&self) -> &LatticeWindow {
                &self.window
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            /// Value at a site; 0 outside the window.
            pub fn get(&self, site: Site) -> f64 {
                match self.window.index(site) {
                    Some(i) => self.values[i],
                    None => 0.0,
                }
            }

            pub fn set(&mut self, site: Site, v: f64) -> Result<()> {
                let i = self
                    .window
                    .index(site)
                    .ok_or(GdsError::OutsideWindow { site })?;
                self.values[i] = v;
                Ok(())
            }

            pub fn add(&mut self, site: Site, v: f64) -> Result<()> {
                let i = self
                    .window
                    .index(site)
                    .ok_or(GdsError::OutsideWindow { site })?;
                self.values[i] += v;
                Ok(())
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            /// Copy into another window; nonzero values falling outside the
            /// target window are an error.
            pub fn embedded(&self, window: LatticeWindow) -> Result<Self> {
                let mut out = Self::zeros(window);
                for (i, &v) in self.values.iter().enumerate() {
                    if v != 0.0 {
                        let site = self.window.site_at(i);
                        out.set(site, v).map_err(|_| {
                            GdsError::WindowTooSmall(format!(
                                "target window does not contain site {site:?} carrying {v}"
                            ))
                        })?;
                    }
                }
                Ok(out)
            }
        }
    };
}

/// Signed lattice mass density on a finite window (mass per site).
#[derive(Debug, Clone)]
pub struct MassConfig {
    window: LatticeWindow,
    values: Vec<f64>,
}

grid_common!(MassConfig);

impl MassConfig {
    /// `max(values(x), 0)` pointwise.
    pub fn positive_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.max(0.0)).collect()
    }

    /// `-min(values(x), 0)` pointwise.
    pub fn negative_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| (-v).max(0.0)).collect()
    }

    /// `(M_+, M_-)`: plain lattice sums of the positive and negative parts.
    pub fn mass_totals(&self) -> (f64, f64) {
        let mut p = 0.0;
        let mut n = 0.0;
        for &v in &self.values {
            if v > 0.0 {
                p += v;
            } else {
                n -= v;
            }
        }
        (p, n)
    }

    /// Plain lattice sum of all values.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Total mass in measure units, `ξ^d · Σ values`.
    pub fn measure_total(&self) -> f64 {
        self.window.xi.powi(self.window.dimension() as i32) * self.total()
    }

    /// `Σ σ_-(x) ≥ Σ σ_+(x)` up to rounding slack.
    pub fn is_admissible(&self) -> bool {
        let (p, n) = self.mass_totals();
        p - n <= 1e-12 * (p + n).max(1.0)
    }

    /// Second moment `Σ values(x)·|x|²` (positions in length units).
    pub fn quadratic_weight(&self) -> f64 {
        let mut q = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                q += v * self.window.site_norm_sq(self.window.site_at(i));
            }
        }
        q
    }
}

/// Real-valued lattice function on a window (odometers, potentials, obstacle
/// iterates).
#[derive(Debug, Clone)]
pub struct LatticeField {
    window: LatticeWindow,
    values: Vec<f64>,
}

grid_common!(LatticeField);

impl LatticeField {
    /// Step-function extension `f^□(x) := f(x^::)`; 0 outside the window.
    pub fn step_extension(&self, x: &[f64]) -> f64 {
        match nearest_site(x, &self.window) {
            Ok(site) => self.get(site),
            Err(_) => 0.0,
        }
    }
}

/// `Δf(site) = (1/(2d·ξ²)) Σ_{y∼site} (f(y) − f(site))`.
///
/// Errors with `MissingNeighbor` when the stencil leaves the window; use
/// [`discrete_laplacian_or`] to supply an extension value instead.
pub fn discrete_laplacian(f: &LatticeField, site: Site) -> Result<f64> {
    let w = f.window();
    let center = f
        .get_checked(site)
        .ok_or(GdsError::OutsideWindow { site })?;
    let d = w.dimension();
    let mut acc = 0.0;
    for nb in neighbors(site, d) {
        match w.index(nb) {
            Some(i) => acc += f.values()[i] - center,
            None => return Err(GdsError::MissingNeighbor { site }),
        }
    }
    Ok(acc / (2.0 * d as f64 * w.xi() * w.xi()))
}

/// Same stencil, with out-of-window neighbors read as `fill`.
pub fn discrete_laplacian_or(f: &LatticeField, site: Site, fill: f64) -> f64 {
    let w = f.window();
    let center = match w.index(site) {
        Some(i) => f.values()[i],
        None => fill,
    };
    let d = w.dimension();
    let mut acc = 0.0;
    for nb in neighbors(site, d) {
        let v = match w.index(nb) {
            Some(i) => f.values()[i],
            None => fill,
        };
        acc += v - center;
    }
    acc / (2.0 * d as f64 * w.xi() * w.xi())
}

impl LatticeField {
    fn get_checked(&self, site: Site) -> Option<f64> {
        self.window.index(site).map(|i| self.values[i])
    }
}

/// A continuous source term to be discretized onto a window.
pub enum DensitySource<'a> {
    /// Bounded a.e.-continuous density; cell value is the mean over the cell
    /// cube `x^□` via a fixed tensor-product midpoint rule with `q^d` samples.
    Density(&'a dyn Fn(&[f64]) -> f64),
    /// Point atom of the given mass: adds `mass/ξ^d` to the cell containing
    /// the point (half-up rounding per axis).
    Atom { at: [f64; 3], mass: f64 },
    /// Surface density `t` on the sphere `|x| = radius`: total mass
    /// `t·|S^{d−1}|·radius^{d−1}` spread over the cells the sphere meets, in
    /// proportion to seeded Monte Carlo surface-fraction estimates.
    SphereLayer { t: f64, radius: f64 },
}

/// Discretization controls: midpoint subdivision `q` per axis and the Monte
/// Carlo budget/seed for sphere layers.
#[derive(Debug, Clone)]
pub struct DiscretizeOptions {
    pub quadrature_points: usize,
    pub sphere_samples: usize,
    pub seed: u64,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        Self {
            quadrature_points: 4,
            sphere_samples: 400_000,
            seed: 0,
        }
    }
}

/// Discretize a list of continuous sources onto `window`:
/// `σ_n(x) = (1/ξ^d) ∫_{x^□} σ(y) dy` for densities, `m/ξ^d` point values for
/// atoms, Monte Carlo surface fractions for sphere layers.
pub fn discretize(
    sources: &[DensitySource<'_>],
    window: &LatticeWindow,
    opts: &DiscretizeOptions,
) -> Result<MassConfig> {
    let d = window.dimension();
    let xi = window.xi();
    let cell_density = xi.powi(-(d as i32));
    let mut out = MassConfig::zeros(window.clone());

    for source in sources {
        match source {
            DensitySource::Density(f) => {
                let q = opts.quadrature_points.max(1);
                // midpoints of the q^d subcells of [-ξ/2, ξ/2]^d
                let offsets: Vec<f64> = (0..q)
                    .map(|i| ((i as f64 + 0.5) / q as f64 - 0.5) * xi)
                    .collect();
                let nsub = q.pow(d as u32);
                for i in 0..window.len() {
                    let site = window.site_at(i);
                    let p = window.position(site);
                    let mut acc = 0.0;
                    for s in 0..nsub {
                        let mut rest = s;
                        let mut y = [0.0f64; 3];
                        for a in 0..d {
                            y[a] = p[a] + offsets[rest % q];
                            rest /= q;
                        }
                        acc += f(&y[..d]);
                    }
                    out.values_mut()[i] += acc / nsub as f64;
                }
            }
            DensitySource::Atom { at, mass } => {
                let site = nearest_site(&at[..d], window).map_err(|_| {
                    GdsError::WindowTooSmall(format!("window too small: atom at {at:?} falls outside"))
                })?;
                let i = window.index(site).expect("nearest_site returned in-window");
                out.values_mut()[i] += mass * cell_density;
            }
            DensitySource::SphereLayer { t, radius } => {
                if !(*radius > 0.0) {
                    return Err(GdsError::InvalidScenario(format!(
                        "sphere layer radius must be positive, got {radius}"
                    )));
                }
                let total = t * crate::sphere_surface_area(d) * radius.powi(d as i32 - 1);
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5ee1_5ca1e);
                let n = opts.sphere_samples.max(1);
                let per_sample = total / n as f64 * cell_density;
                for _ in 0..n {
                    let p = sample_unit_sphere(d, &mut rng);
                    let mut x = [0.0f64; 3];
                    for a in 0..d {
                        x[a] = p[a] * radius;
                    }
                    let site = nearest_site(&x[..d], window).map_err(|_| {
                        GdsError::WindowTooSmall(format!(
                            "window too small: sphere of radius {radius} leaves the window"
                        ))
                    })?;
                    let i = window.index(site).expect("in-window");
                    out.values_mut()[i] += per_sample;
                }
            }
        }
    }
    Ok(out)
}

fn sample_unit_sphere(d: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    if d == 2 {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        [theta.cos(), theta.sin(), 0.0]
    } else {
        // Marsaglia: normalize a Gaussian triple, redrawing near-zero vectors.
        loop {
            let g = [gauss(rng), gauss(rng), gauss(rng)];
            let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if n > 1e-6 {
                return [g[0] / n, g[1] / n, g[2] / n];
            }
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Radial/rectangular region descriptors for occupied-set diagnostics.
#[derive(Debug, Clone)]
pub enum ContinuousSet {
    /// Open ball `B(center, radius)`.
    Ball { center: [f64; 3], radius: f64 },
    /// Open annulus `inner < |x - center| < outer`.
    Annulus {
        center: [f64; 3],
        inner: f64,
        outer: f64,
    },
    Union(Vec<ContinuousSet>),
}

impl ContinuousSet {
    pub fn ball(radius: f64) -> Self {
        ContinuousSet::Ball {
            center: [0.0; 3],
            radius,
        }
    }

    fn dist_to_center(&self, x: &[f64], center: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for a in 0..x.len() {
            let t = x[a] - center[a];
            s += t * t;
        }
        s.sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ContinuousSet::Ball { center, radius } => self.dist_to_center(x, center) < *radius,
            ContinuousSet::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = self.dist_to_center(x, center);
                r > *inner && r < *outer
            }
            ContinuousSet::Union(parts) => parts.iter().any(|p| p.contains(x)),
        }
    }

    /// Membership in the inner neighborhood `D_ε = {x ∈ D : B(x,ε) ⊂ D}`.
    /// For unions this tests the union of the parts' inner neighborhoods,
    /// which is exact for disjoint or nested parts.
    pub fn in_inner(&self, x: &[f64], eps: f64) -> bool {
        match self {
            ContinuousSet::Ball { center, radius } => {
                self.dist_to_center(x, center) + eps <= *radius
            }
            ContinuousSet::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = self.dist_to_center(x, center);
                r - eps >= *inner && r + eps <= *outer
            }
            ContinuousSet::Union(parts) => parts.iter().any(|p| p.in_inner(x, eps)),
        }
    }

    /// Membership in the outer neighborhood `D^ε = {x : B(x,ε) ∩ D ≠ ∅}`,
    /// i.e. `dist(x, D) < ε`.
    pub fn in_outer(&self, x: &[f64], eps: f64) -> bool {
        match self {
            ContinuousSet::Ball { center, radius } => {
                self.dist_to_center(x, center) < *radius + eps
            }
            ContinuousSet::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = self.dist_to_center(x, center);
                r < *outer + eps && r > *inner - eps
            }
            ContinuousSet::Union(parts) => parts.iter().any(|p| p.in_outer(x, eps)),
        }
    }
}

/// `D_ε ∩ window ⊂ A` and `A ⊂ D^ε`?
pub fn set_sandwich_check(
    a: &[Site],
    d_set: &ContinuousSet,
    eps: f64,
    window: &LatticeWindow,
) -> bool {
    let dim = window.dimension();
    let member: std::collections::HashSet<Site> = a.iter().copied().collect();
    for &site in a {
        let p = window.position(site);
        if !d_set.in_outer(&p[..dim], eps) {
            return false;
        }
    }
    for site in window.sites() {
        let p = window.position(site);
        if d_set.in_inner(&p[..dim], eps) && !member.contains(&site) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window2(xi: f64, k: i64) -> LatticeWindow {
        LatticeWindow::new(2, xi, [-k, -k, 0], [k, k, 0]).unwrap()
    }

    #[test]
    fn neighbors_are_the_2d_adjacent_sites() {
        let nb = neighbors([0, 0, 0], 2);
        assert_eq!(nb.len(), 4);
        for s in [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]] {
            assert!(nb.contains(&s));
        }
        assert_eq!(neighbors([0, 0, 0], 3).len(), 6);
        // symmetry of adjacency
        assert!(neighbors([1, 0, 0], 2).contains(&[0, 0, 0]));
    }

    #[test]
    fn nearest_site_half_open_convention() {
        let w = window2(1.0, 4);
        assert_eq!(nearest_site(&[2.0, -1.0], &w).unwrap(), [2, -1, 0]);
        // x = 0.5ξ rounds up to ξ (upper end of the half-open cell included)
        assert_eq!(nearest_site(&[0.5, 0.0], &w).unwrap(), [1, 0, 0]);
        assert_eq!(nearest_site(&[-0.5, 0.0], &w).unwrap(), [0, 0, 0]);
        let w = window2(0.25, 8);
        assert_eq!(nearest_site(&[0.125, 0.0], &w).unwrap(), [1, 0, 0]);
        assert!(nearest_site(&[100.0, 0.0], &w).is_err());
    }

    #[test]
    fn nearest_site_is_identity_on_sites() {
        let w = window2(0.5, 6);
        for site in w.sites() {
            let p = w.position(site);
            assert_eq!(nearest_site(&p[..2], &w).unwrap(), site);
        }
    }

    #[test]
    fn laplacian_of_delta() {
        let w = window2(1.0, 3);
        let mut f = LatticeField::zeros(w);
        f.set([0, 0, 0], 1.0).unwrap();
        assert_eq!(discrete_laplacian(&f, [0, 0, 0]).unwrap(), -1.0);
        assert_eq!(discrete_laplacian(&f, [1, 0, 0]).unwrap(), 0.25);
        assert_eq!(discrete_laplacian(&f, [2, 2, 0]).unwrap(), 0.0);
    }

    #[test]
    fn laplacian_of_norm_squared_is_one() {
        for (d, xi) in [(2usize, 1.0f64), (2, 0.25), (3, 0.5)] {
            let k = 3;
            let w = if d == 2 {
                LatticeWindow::new(2, xi, [-k, -k, 0], [k, k, 0]).unwrap()
            } else {
                LatticeWindow::new(3, xi, [-k, -k, -k], [k, k, k]).unwrap()
            };
            let mut f = LatticeField::zeros(w.clone());
            for (i, site) in w.sites().enumerate() {
                f.values_mut()[i] = w.site_norm_sq(site);
            }
            let got = discrete_laplacian(&f, [1, -1, 0]).unwrap();
            assert!((got - 1.0).abs() < 1e-12, "d={d} xi={xi}: {got}");
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let w = window2(0.5, 4);
        let mut f = LatticeField::zeros(w.clone());
        for v in f.values_mut() {
            *v = 3.25;
        }
        for site in w.sites() {
            let interior = (0..2).all(|a| site[a] > w.lo()[a] && site[a] < w.hi()[a]);
            if interior {
                assert_eq!(discrete_laplacian(&f, site).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn laplacian_missing_neighbor_is_an_error() {
        let w = window2(1.0, 2);
        let f = LatticeField::zeros(w);
        assert!(matches!(
            discrete_laplacian(&f, [2, 0, 0]),
            Err(GdsError::MissingNeighbor { .. })
        ));
        assert_eq!(discrete_laplacian_or(&f, [2, 0, 0], 0.0), 0.0);
    }

    #[test]
    fn discretize_constant_density_gives_constant_cells() {
        let w = window2(0.5, 4);
        let c = 0.7;
        let f = move |x: &[f64]| {
            if x[0].abs() <= 1.2 && x[1].abs() <= 1.2 {
                c
            } else {
                c
            }
        };
        let m = discretize(&[DensitySource::Density(&f)], &w, &DiscretizeOptions::default()).unwrap();
        for &v in m.values() {
            assert!((v - c).abs() < 1e-15);
        }
    }

    #[test]
    fn discretize_atom_density_is_mass_over_cell_volume() {
        let w = window2(0.5, 4);
        let m = discretize(
            &[DensitySource::Atom {
                at: [0.0, 0.0, 0.0],
                mass: 2.0,
            }],
            &w,
            &DiscretizeOptions::default(),
        )
        .unwrap();
        assert_eq!(m.get([0, 0, 0]), 2.0 / 0.25);
        assert_eq!(m.total(), 8.0);
    }

    #[test]
    fn discretize_abs_density_converges_to_quarter() {
        // σ(x)=|x₁| averaged over the unit cell at the origin → ∫|t|dt = 1/4.
        let w = window2(1.0, 1);
        let f = |x: &[f64]| x[0].abs();
        let mut prev_err = f64::INFINITY;
        for q in [4usize, 16, 64, 256] {
            let m = discretize(
                &[DensitySource::Density(&f)],
                &w,
                &DiscretizeOptions {
                    quadrature_points: q,
                    ..Default::default()
                },
            )
            .unwrap();
            let err = (m.get([0, 0, 0]) - 0.25).abs();
            assert!(err <= prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-5);
    }

    #[test]
    fn discretize_preserves_mass_of_smooth_density() {
        // smooth gaussian bump: total mass ∫exp(-4|x|²) = π/4 to quadrature
        // tolerance at the default q=4
        let w = window2(1.0 / 8.0, 24);
        let f = |x: &[f64]| (-4.0 * (x[0] * x[0] + x[1] * x[1])).exp();
        let m = discretize(&[DensitySource::Density(&f)], &w, &DiscretizeOptions::default()).unwrap();
        let total = m.measure_total();
        let expect = std::f64::consts::PI / 4.0;
        assert!((total - expect).abs() <= 1e-3 * expect, "total {total}");
    }

    #[test]
    fn discretize_of_indicator_density_converges_with_q() {
        // the ball indicator is only a.e. continuous: the cell-average error
        // shrinks as the midpoint rule is refined
        let w = window2(1.0 / 8.0, 10);
        let f = |x: &[f64]| {
            if x[0] * x[0] + x[1] * x[1] < 1.0 {
                1.0
            } else {
                0.0
            }
        };
        let mut errors = Vec::new();
        for q in [4usize, 16, 64] {
            let m = discretize(
                &[DensitySource::Density(&f)],
                &w,
                &DiscretizeOptions {
                    quadrature_points: q,
                    ..Default::default()
                },
            )
            .unwrap();
            errors.push((m.measure_total() - std::f64::consts::PI).abs());
        }
        assert!(errors[2] < errors[0]);
        assert!(errors[2] < 1e-3 * std::f64::consts::PI, "{errors:?}");
    }

    #[test]
    fn sphere_layer_mass_is_exact_and_supported_near_sphere() {
        let w = window2(1.0 / 8.0, 12);
        let t = 0.05;
        let m = discretize(
            &[DensitySource::SphereLayer { t, radius: 1.0 }],
            &w,
            &DiscretizeOptions::default(),
        )
        .unwrap();
        let expect = t * 2.0 * std::f64::consts::PI;
        assert!((m.measure_total() - expect).abs() < 1e-12 * expect.abs());
        for (i, &v) in m.values().iter().enumerate() {
            if v != 0.0 {
                let r = m.window().site_norm(m.window().site_at(i));
                assert!((r - 1.0).abs() < 0.2, "mass at radius {r}");
            }
        }
    }

    #[test]
    fn mass_decomposition_sums() {
        let w = window2(1.0, 3);
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 2.0).unwrap();
        m.set([1, 0, 0], -3.0).unwrap();
        let (p, n) = m.mass_totals();
        assert_eq!((p, n), (2.0, 3.0));
        assert_eq!(m.total(), -1.0);
        assert!(m.is_admissible());
        m.set([2, 2, 0], 1.5).unwrap();
        assert!(!m.is_admissible());
    }

    #[test]
    fn quadratic_weight_examples() {
        let w = window2(0.5, 3);
        let mut m = MassConfig::zeros(w);
        m.set([0, 0, 0], 1.0).unwrap();
        assert_eq!(m.quadratic_weight(), 0.0);
        m.set([0, 0, 0], 0.0).unwrap();
        m.set([1, 0, 0], 1.0).unwrap();
        assert_eq!(m.quadratic_weight(), 0.25);
    }

    #[test]
    fn sandwich_check_cases() {
        let w = window2(1.0 / 16.0, 20);
        let d = ContinuousSet::ball(1.0);
        let all_in_ball: Vec<Site> = w.sites().filter(|&s| w.in_ball(s, 1.0)).collect();
        assert!(set_sandwich_check(&all_in_ball, &d, 2.0 / 16.0, &w));
        // empty A misses the inner neighborhood
        assert!(!set_sandwich_check(&[], &d, 0.01, &w));
        // A = sites of B(0,1.15) fits in D^0.6 and covers D_0.6
        let bigger: Vec<Site> = w.sites().filter(|&s| w.in_ball(s, 1.15)).collect();
        assert!(set_sandwich_check(&bigger, &d, 0.6, &w));
        assert!(!set_sandwich_check(&bigger, &d, 0.05, &w));
    }

    #[test]
    fn window_for_ball_contains_halo() {
        let w = LatticeWindow::for_ball(2, 0.25, 2.0).unwrap();
        for site in w.sites() {
            let _ = site;
        }
        // every site of B(0, R+ξ) is inside
        let k = ((2.0 + 0.25) / 0.25_f64).floor() as i64;
        assert_eq!(w.hi()[0], k);
        let mut count = 0;
        for site in w.sites() {
            if w.in_ball(site, 2.0 + 0.25) {
                count += 1;
            }
        }
        assert!(count > 0);
    }

    #[test]
    fn embedded_roundtrip() {
        let small = window2(1.0, 2);
        let big = window2(1.0, 5);
        let mut m = MassConfig::zeros(small);
        m.set([1, -2, 0], 4.5).unwrap();
        let e = m.embedded(big).unwrap();
        assert_eq!(e.get([1, -2, 0]), 4.5);
        assert_eq!(e.total(), 4.5);
    }
}
