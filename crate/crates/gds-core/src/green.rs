//! Discrete Green's functions on ξℤ^d and the potentials they generate.
//!
//! Two translation-invariant kernels underlie everything:
//!
//! - `d = 2`: the recurrent potential kernel `a(z)` of simple random walk on
//!   ℤ², normalized so `a(0) = 0` and `(1/4)Σ_{w∼z}(a(w) − a(z)) = δ_0(z)`.
//!   The lattice kernel is `g_ξ(z) = (2/π)·ln ξ − a(z/ξ)`.
//! - `d = 3`: the transient Green's function `γ1(z)` (expected visits to `z`
//!   from the origin), giving `g_ξ(z) = ξ^{2−d}·γ1(z/ξ)`.
//!
//! Both are evaluated by deterministic quadrature of their lattice Fourier
//! representations, reduced to one angular dimension less in closed form.
//! With either kernel the discrete potential `U^μ(x) = ξ^d Σ_y g_ξ(x−y)μ(y)`
//! satisfies `−ΔU^μ = μ` for the `1/(2dξ²)`-normalized Laplacian.
//!
//! In two dimensions the `(2/π)·ln ξ` term shifts potentials of configurations
//! with nonzero total mass by a constant. Every identity used downstream
//! (Laplacians, energies of balanced differences, obstacle odometers) is
//! invariant under that constant; diagnostics that compare raw potentials
//! across spacings should compare differences between probe points instead.

use crate::error::{GdsError, Result};
use crate::lattice::{LatticeField, LatticeWindow, MassConfig, Site};
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

const GL_NODES: usize = 48;

/// Gauss–Legendre nodes and weights on [0, 1], computed once by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_unit() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| {
        let n = GL_NODES;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // initial guess (Chebyshev-like) for the i-th root of P_n
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_deriv(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_and_deriv(n, x);
            nodes[i] = 0.5 * (1.0 - x); // map [-1,1] -> [0,1], reversed order is fine
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate `f` over `[0, end]` on panels that grow geometrically from an
/// initial width `w0` up to a cap `h_max`: a graded mesh resolving both a
/// boundary layer at 0 and a global oscillation scale.
fn integrate_graded(f: impl Fn(f64) -> f64, end: f64, w0: f64, h_max: f64) -> f64 {
    let (nodes, weights) = gauss_legendre_unit();
    let mut total = 0.0;
    let mut a = 0.0;
    let mut w = w0.min(h_max).min(end);
    while a < end {
        let b = (a + w).min(end);
        let len = b - a;
        let mut acc = 0.0;
        for (&t, &wt) in nodes.iter().zip(weights.iter()) {
            acc += wt * f(a + t * len);
        }
        total += acc * len;
        a = b;
        w = (2.0 * w).min(h_max);
    }
    total
}

/// Recurrent potential kernel `a(z)` for simple random walk on ℤ².
///
/// `a(0) = 0`, `a(±1,0) = a(0,±1) = 1`, `a(1,1) = 4/π`; on the diagonal
/// `a(n,n) = (4/π)·Σ_{k=1}^n 1/(2k−1)` exactly. Off-diagonal values come from
/// the Fourier representation reduced to one dimension,
/// `a(m,n) = (2/π)∫_0^π (1 − ρ(t)^{|m|} cos(nt))/√(u(t)²−1) dt` with
/// `u = 2 − cos t`, `ρ = u − √(u²−1)`. Values are memoized.
pub fn potential_kernel_2d(z: [i64; 2]) -> f64 {
    let (m, n) = canonical_pair(z[0], z[1]);
    static CACHE: OnceLock<Mutex<HashMap<(i64, i64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&(m, n)) {
        return v;
    }
    let v = potential_kernel_2d_uncached(m, n);
    cache.lock().unwrap().insert((m, n), v);
    v
}

fn canonical_pair(m: i64, n: i64) -> (i64, i64) {
    let (m, n) = (m.abs(), n.abs());
    if m >= n {
        (m, n)
    } else {
        (n, m)
    }
}

fn potential_kernel_2d_uncached(m: i64, n: i64) -> f64 {
    debug_assert!(m >= n && n >= 0);
    if m == 0 {
        return 0.0;
    }
    if m == n {
        // exact diagonal closed form
        let mut s = 0.0;
        for k in 1..=m {
            s += 1.0 / (2.0 * k as f64 - 1.0);
        }
        return 4.0 / PI * s;
    }
    let mf = m as f64;
    let nf = n as f64;
    let f = |t: f64| {
        let u = 2.0 - t.cos();
        let s = (u * u - 1.0).sqrt();
        let rho = u - s;
        (1.0 - rho.powi(m as i32) * (nf * t).cos()) / s
    };
    let w0 = 0.5 / (mf + 1.0);
    let h_max = (12.0 / (nf + 1.0)).min(0.75);
    2.0 / PI * integrate_graded(f, PI, w0, h_max)
}

/// Transient Green's function `γ1(z)` for simple random walk on ℤ³: the
/// expected number of visits to `z` starting from the origin.
///
/// Evaluated from the Fourier representation with one coordinate integrated
/// out in closed form and the remaining plane integral taken in polar
/// coordinates (the Jacobian cancels the `1/|θ|` singularity at the origin).
/// Values are memoized.
pub fn greens_function_transient(z: [i64; 3]) -> f64 {
    let key = canonical_triple(z);
    static CACHE: OnceLock<Mutex<HashMap<(i64, i64, i64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&key) {
        return v;
    }
    let v = greens_function_transient_uncached(key.0, key.1, key.2);
    cache.lock().unwrap().insert(key, v);
    v
}

fn canonical_triple(z: [i64; 3]) -> (i64, i64, i64) {
    let mut a = [z[0].abs(), z[1].abs(), z[2].abs()];
    a.sort_unstable_by(|x, y| y.cmp(x));
    (a[0], a[1], a[2])
}

fn greens_function_transient_uncached(x1: i64, x2: i64, x3: i64) -> f64 {
    debug_assert!(x1 >= x2 && x2 >= x3 && x3 >= 0);
    let (x2f, x3f) = (x2 as f64, x3 as f64);
    let osc = (x2 + x3) as f64;
    let radial = |r: f64, phi: f64| {
        let t2 = r * phi.cos();
        let t3 = r * phi.sin();
        let u = 3.0 - t2.cos() - t3.cos();
        let s2 = u * u - 1.0;
        let s = s2.sqrt();
        let rho = u - s;
        (x2f * t2).cos() * (x3f * t3).cos() * rho.powi(x1 as i32) * r / s
    };
    let r_w0 = 0.5 / (x1 as f64 + 1.0);
    let r_hmax = (8.0 / (osc + 1.0)).min(0.75);
    let phi_h = (10.0 / (osc + 1.0)).min(0.5);
    // φ ∈ [0, π/4] with r up to π/cos φ, then [π/4, π/2] with r up to π/sin φ
    let outer = |phi_lo: f64, phi_hi: f64, r_max: &dyn Fn(f64) -> f64| {
        integrate_graded(
            |phi| {
                let p = phi_lo + phi;
                integrate_graded(|r| radial(r, p), r_max(p), r_w0, r_hmax)
            },
            phi_hi - phi_lo,
            phi_h,
            phi_h,
        )
    };
    let part1 = outer(0.0, PI / 4.0, &|p: f64| PI / p.cos());
    let part2 = outer(PI / 4.0, PI / 2.0, &|p: f64| PI / p.sin());
    3.0 / (PI * PI) * (part1 + part2)
}

/// Translation-invariant table of lattice Green's-function values
/// `g(z) = g_ξ(x, y)` for integer offsets `z = (x−y)/ξ` with `|z|_∞ ≤ radius`.
///
/// The table is constructed from the canonical octant and reflected, so the
/// symmetries `g(z) = g(−z)` and coordinate permutations hold exactly.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    d: usize,
    xi: f64,
    radius: i64,
    side: usize,
    table: Vec<f64>,
}

impl GreenKernel {
    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// `g(z)` for an integer site offset, `|z_a| ≤ radius` on the first `d`
    /// axes.
    pub fn value(&self, dz: Site) -> Result<f64> {
        self.offset_index(dz)
            .map(|i| self.table[i])
            .ok_or_else(|| GdsError::KernelRadiusTooSmall {
                radius: self.radius,
                needed: (0..self.d).map(|a| dz[a].abs()).max().unwrap_or(0),
            })
    }

    #[inline]
    fn offset_index(&self, dz: Site) -> Option<usize> {
        let mut idx = 0usize;
        for a in 0..self.d {
            if dz[a].abs() > self.radius {
                return None;
            }
            idx = idx * self.side + (dz[a] + self.radius) as usize;
        }
        Some(idx)
    }

    #[inline]
    fn value_unchecked(&self, dz: Site) -> f64 {
        let mut idx = 0usize;
        for a in 0..self.d {
            idx = idx * self.side + (dz[a] + self.radius) as usize;
        }
        self.table[idx]
    }

    pub(crate) fn from_raw(d: usize, xi: f64, radius: i64, table: Vec<f64>) -> Result<Self> {
        let side = (2 * radius + 1) as usize;
        if table.len() != side.pow(d as u32) {
            return Err(GdsError::Parse(format!(
                "kernel table length {} does not match radius {radius} in {d}D",
                table.len()
            )));
        }
        Ok(Self {
            d,
            xi,
            radius,
            side,
            table,
        })
    }

    pub(crate) fn raw_table(&self) -> &[f64] {
        &self.table
    }
}

/// Build the kernel table for spacing `xi` out to `radius` sites per axis:
/// `g(z) = (2/π)·ln ξ − a(z)` in 2D, `g(z) = ξ^{2−d}·γ1(z)` in 3D.
pub fn kernel_table(d: usize, xi: f64, radius: i64) -> Result<GreenKernel> {
    if d != 2 && d != 3 {
        return Err(GdsError::WindowTooSmall(format!("kernel dimension must be 2 or 3, got {d}")));
    }
    if !(xi > 0.0) || radius < 0 {
        return Err(GdsError::WindowTooSmall(format!(
            "kernel needs positive spacing and radius, got xi={xi}, radius={radius}"
        )));
    }
    let side = (2 * radius + 1) as usize;

    // canonical offsets: sorted absolute coordinates, largest first
    let mut canonical: Vec<(i64, i64, i64)> = Vec::new();
    if d == 2 {
        for m in 0..=radius {
            for n in 0..=m {
                canonical.push((m, n, 0));
            }
        }
    } else {
        for m in 0..=radius {
            for n in 0..=m {
                for p in 0..=n {
                    canonical.push((m, n, p));
                }
            }
        }
    }

    let computed: Vec<f64> = canonical
        .par_iter()
        .map(|&(m, n, p)| {
            if d == 2 {
                2.0 / PI * xi.ln() - potential_kernel_2d([m, n])
            } else {
                xi.powi(2 - d as i32) * greens_function_transient([m, n, p])
            }
        })
        .collect();
    let values: HashMap<(i64, i64, i64), f64> =
        canonical.into_iter().zip(computed).collect();

    let mut table = vec![0.0; side.pow(d as u32)];
    let mut fill = |idx: usize, z: Site| {
        let key = canonical_triple(z);
        table[idx] = values[&key];
    };
    if d == 2 {
        let mut idx = 0;
        for i in -radius..=radius {
            for j in -radius..=radius {
                fill(idx, [i, j, 0]);
                idx += 1;
            }
        }
    } else {
        let mut idx = 0;
        for i in -radius..=radius {
            for j in -radius..=radius {
                for k in -radius..=radius {
                    fill(idx, [i, j, k]);
                    idx += 1;
                }
            }
        }
    }
    GreenKernel::from_raw(d, xi, radius, table)
}

fn check_kernel(window: &LatticeWindow, kernel: &GreenKernel, needed: i64) -> Result<()> {
    if kernel.d != window.dimension() || kernel.xi != window.xi() {
        return Err(GdsError::KernelMismatch {
            kernel_d: kernel.d,
            kernel_xi: kernel.xi,
            grid_d: window.dimension(),
            grid_xi: window.xi(),
        });
    }
    if kernel.radius < needed {
        return Err(GdsError::KernelRadiusTooSmall {
            radius: kernel.radius,
            needed,
        });
    }
    Ok(())
}

/// Offsets a window can produce between two of its own sites.
pub fn window_offset_span(window: &LatticeWindow) -> i64 {
    (0..window.dimension())
        .map(|a| window.hi()[a] - window.lo()[a])
        .max()
        .unwrap_or(0)
}

fn support_of(mu: &MassConfig) -> Vec<(Site, f64)> {
    let w = mu.window();
    mu.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (w.site_at(i), v))
        .collect()
}

/// Discrete Newtonian potential `U^μ(x) = ξ^d · Σ_y g(x−y) μ(y)` over the
/// whole window, by direct summation over the support of `μ` in a fixed
/// order (bit-reproducible regardless of thread count).
pub fn potential(mu: &MassConfig, kernel: &GreenKernel) -> Result<LatticeField> {
    let w = mu.window();
    check_kernel(w, kernel, window_offset_span(w))?;
    let support = support_of(mu);
    let scale = w.xi().powi(w.dimension() as i32);
    let values: Vec<f64> = (0..w.len())
        .into_par_iter()
        .map(|i| {
            let x = w.site_at(i);
            let mut acc = 0.0;
            for &(y, v) in &support {
                let dz = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
                acc += kernel.value_unchecked(dz) * v;
            }
            acc * scale
        })
        .collect();
    LatticeField::from_values(w.clone(), values)
}

/// `U^μ` sampled at selected sites only (targets need not lie in μ's window,
/// but the kernel must cover the offsets).
pub fn potential_at(mu: &MassConfig, kernel: &GreenKernel, sites: &[Site]) -> Result<Vec<f64>> {
    let w = mu.window();
    check_kernel(w, kernel, 0)?;
    let support = support_of(mu);
    let scale = w.xi().powi(w.dimension() as i32);
    let mut needed = 0i64;
    for &x in sites {
        for &(y, _) in &support {
            for a in 0..w.dimension() {
                needed = needed.max((x[a] - y[a]).abs());
            }
        }
    }
    check_kernel(w, kernel, needed)?;
    Ok(sites
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &(y, v) in &support {
                let dz = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
                acc += kernel.value_unchecked(dz) * v;
            }
            acc * scale
        })
        .collect())
}
