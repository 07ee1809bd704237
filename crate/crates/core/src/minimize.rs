//! Discrete p-Dirichlet energies and their minimization.
//!
//! The energy of a grid field `u` (zero ghost values outside `Ω`) is
//!
//! ```text
//! J(u) = h^N [ Σ_e (a_e/p) ψ(|∇_h u|_e^2) + Σ_i ( m/2 (u_i - w_i)^2 + c Ĝ(u_i) - f_i u_i ) ]
//! ```
//!
//! where `e` runs over forward-difference gradient points, `ψ(s) = (s+ε²)^{p/2}`,
//! `m` is an optional mass coefficient (`1/τ` in time stepping) and `Ĝ` the
//! primitive of an absorption term. Minimization is damped Newton with a
//! Jacobi-preconditioned CG inner solve and Armijo backtracking on `J`.

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `max_i |∂J/∂u_i| / h^N < tol`.
    pub tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 400,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// Energy after each accepted iteration, starting with the initial guess.
    pub energies: Vec<f64>,
    pub cg_iterations: usize,
}

/// All data of one discrete energy.
pub struct Energy<'a> {
    pub grid: &'a Grid,
    pub p: f64,
    /// Weight `a(x)` per cell; uniform 1 when absent.
    pub weight: Option<&'a [f64]>,
    pub rhs: &'a [f64],
    pub mass: f64,
    pub anchor: Option<&'a [f64]>,
    pub absorption: Option<(Nonlinearity, f64)>,
}

struct Layout {
    n0: usize,
    n1: usize,
    dim: usize,
    inv_h: [f64; 2],
    eps2: f64,
}

impl Layout {
    fn new(grid: &Grid, p: f64) -> Self {
        let eps = if p < 2.0 { 1e-8 * grid.h() } else { 0.0 };
        Self {
            n0: grid.cells(0),
            n1: grid.cells(1),
            dim: grid.dim(),
            inv_h: [1.0 / grid.spacing(0), 1.0 / grid.spacing(1)],
            eps2: eps * eps,
        }
    }

    fn j_range(&self) -> std::ops::Range<isize> {
        if self.dim == 1 {
            0..1
        } else {
            -1..self.n1 as isize
        }
    }

    #[inline]
    fn idx(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.n0 || j as usize >= self.n1 {
            None
        } else {
            Some(j as usize * self.n0 + i as usize)
        }
    }

    #[inline]
    fn val(&self, u: &[f64], i: isize, j: isize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| u[k])
    }

    /// Cell whose weight is used at gradient point `(i, j)`.
    #[inline]
    fn weight_cell(&self, i: isize, j: isize) -> usize {
        let ii = i.clamp(0, self.n0 as isize - 1) as usize;
        let jj = j.clamp(0, self.n1 as isize - 1) as usize;
        jj * self.n0 + ii
    }

    /// Visits every gradient point with its neighbour indices and gradient.
    fn for_each_point(&self, u: &[f64], mut f: impl FnMut(isize, isize, [f64; 2])) {
        for j in self.j_range() {
            for i in -1..self.n0 as isize {
                let c = self.val(u, i, j);
                let gx = (self.val(u, i + 1, j) - c) * self.inv_h[0];
                let gy = if self.dim == 2 {
                    (self.val(u, i, j + 1) - c) * self.inv_h[1]
                } else {
                    0.0
                };
                f(i, j, [gx, gy]);
            }
        }
    }

    /// Scatters a flux vector at gradient point `(i, j)` into `out` as `B^T flux`.
    #[inline]
    fn scatter(&self, out: &mut [f64], i: isize, j: isize, flux: [f64; 2]) {
        let fx = flux[0] * self.inv_h[0];
        if let Some(k) = self.idx(i + 1, j) {
            out[k] += fx;
        }
        let mut centre = -fx;
        if self.dim == 2 {
            let fy = flux[1] * self.inv_h[1];
            if let Some(k) = self.idx(i, j + 1) {
                out[k] += fy;
            }
            centre -= fy;
        }
        if let Some(k) = self.idx(i, j) {
            out[k] += centre;
        }
    }
}

impl<'a> Energy<'a> {
    fn weight_at(&self, lay: &Layout, i: isize, j: isize) -> f64 {
        self.weight.map_or(1.0, |w| w[lay.weight_cell(i, j)])
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let lay = Layout::new(self.grid, self.p);
        let mut dirichlet = 0.0;
        lay.for_each_point(u, |i, j, g| {
            let s = g[0] * g[0] + g[1] * g[1] + lay.eps2;
            if s > 0.0 {
                dirichlet += self.weight_at(&lay, i, j) * s.powf(0.5 * self.p) / self.p;
            }
        });
        let mut local = 0.0;
        for (k, &ui) in u.iter().enumerate() {
            if self.mass != 0.0 {
                let w = self.anchor.map_or(0.0, |a| a[k]);
                local += 0.5 * self.mass * (ui - w) * (ui - w);
            }
            if let Some((g, c)) = self.absorption {
                local += c * g.primitive(ui);
            }
            local -= self.rhs[k] * ui;
        }
        (dirichlet + local) * self.grid.cell_volume()
    }

    /// Size of the data terms of `J(u)`, the scale of its rounding error.
    fn magnitude(&self, u: &[f64]) -> f64 {
        let mut m = 0.0;
        for (k, &ui) in u.iter().enumerate() {
            let w = self.anchor.map_or(0.0, |a| a[k]);
            m += (self.rhs[k] * ui).abs() + 0.5 * self.mass * (ui * ui + w * w);
        }
        m * self.grid.cell_volume()
    }

    /// `∂J/∂u / h^N`, the pointwise discrete residual.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let lay = Layout::new(self.grid, self.p);
        let mut out = vec![0.0; u.len()];
        lay.for_each_point(u, |i, j, g| {
            let s = g[0] * g[0] + g[1] * g[1] + lay.eps2;
            if s > 0.0 {
                let c = self.weight_at(&lay, i, j) * s.powf(0.5 * self.p - 1.0);
                lay.scatter(&mut out, i, j, [c * g[0], c * g[1]]);
            }
        });
        for (k, o) in out.iter_mut().enumerate() {
            let ui = u[k];
            if self.mass != 0.0 {
                *o += self.mass * (ui - self.anchor.map_or(0.0, |a| a[k]));
            }
            if let Some((g, c)) = self.absorption {
                *o += c * g.value(ui);
            }
            *o -= self.rhs[k];
        }
        out
    }

    /// Per-point Hessian blocks of the gradient term (with floor `floor2`
    /// added to `|g|^2`) and the local diagonal.
    fn hessian(&self, u: &[f64], floor2: f64) -> Hessian {
        let lay = Layout::new(self.grid, self.p);
        let mut blocks = Vec::new();
        lay.for_each_point(u, |i, j, g| {
            let s = g[0] * g[0] + g[1] * g[1] + lay.eps2 + floor2;
            let a = self.weight_at(&lay, i, j);
            let (base, rank) = if s > 0.0 {
                (a * s.powf(0.5 * self.p - 1.0), a * (self.p - 2.0) * s.powf(0.5 * self.p - 2.0))
            } else if self.p == 2.0 {
                (a, 0.0)
            } else {
                (0.0, 0.0)
            };
            blocks.push([
                base + rank * g[0] * g[0],
                rank * g[0] * g[1],
                base + rank * g[1] * g[1],
            ]);
        });
        let local = u
            .iter()
            .map(|&ui| {
                let mut d = self.mass;
                if let Some((g, c)) = self.absorption {
                    let gp = g.derivative(ui);
                    d += c * if gp.is_finite() { gp } else { 1e12 };
                }
                d
            })
            .collect();
        Hessian { lay, blocks, local }
    }
}

struct Hessian {
    lay: Layout,
    blocks: Vec<[f64; 3]>,
    local: Vec<f64>,
}

impl Hessian {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().zip(&self.local).zip(v).for_each(|((o, l), x)| *o = l * x);
        let lay = &self.lay;
        let mut k = 0;
        lay.for_each_point(v, |i, j, g| {
            let b = self.blocks[k];
            k += 1;
            lay.scatter(out, i, j, [b[0] * g[0] + b[1] * g[1], b[1] * g[0] + b[2] * g[1]]);
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let lay = &self.lay;
        let mut d = self.local.clone();
        let mut k = 0;
        for j in lay.j_range() {
            for i in -1..lay.n0 as isize {
                let b = self.blocks[k];
                k += 1;
                let (hx, hy) = (lay.inv_h[0], lay.inv_h[1]);
                if let Some(c) = lay.idx(i + 1, j) {
                    d[c] += b[0] * hx * hx;
                }
                if lay.dim == 2 {
                    if let Some(c) = lay.idx(i, j + 1) {
                        d[c] += b[2] * hy * hy;
                    }
                }
                if let Some(c) = lay.idx(i, j) {
                    let (dx, dy) = (-hx, if lay.dim == 2 { -hy } else { 0.0 });
                    d[c] += b[0] * dx * dx + 2.0 * b[1] * dx * dy + b[2] * dy * dy;
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Preconditioned CG on `H d = b`; stops at `||r||_∞ ≤ target`.
fn pcg(h: &Hessian, b: &[f64], target: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = b.len();
    let diag: Vec<f64> = h.diagonal().into_iter().map(|d| if d > 0.0 { d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut hp = vec![0.0; n];
    for it in 0..max_iter {
        if inf_norm(&r) <= target {
            return (x, it);
        }
        h.apply(&p, &mut hp);
        let php = dot(&p, &hp);
        if !(php > 0.0) {
            return (x, it);
        }
        let alpha = rz / php;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    (x, max_iter)
}

/// Minimizes `energy` starting from `u`, in place.
pub fn minimize(energy: &Energy<'_>, u: &mut [f64], opts: &NewtonOptions) -> Result<SolveStats> {
    let n = u.len();
    let mut stats = SolveStats::default();
    let mut j_cur = energy.value(u);
    stats.energies.push(j_cur);
    let mut trial = vec![0.0; n];
    // residuals below this are rounding noise of the data terms
    let floor = 64.0
        * f64::EPSILON
        * (inf_norm(energy.rhs) + energy.mass * energy.anchor.map_or(0.0, inf_norm));
    for it in 0..=opts.max_iterations {
        let res = energy.residual(u);
        let res_norm = inf_norm(&res);
        stats.residual = res_norm;
        stats.iterations = it;
        if !res_norm.is_finite() || !j_cur.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        if res_norm < opts.tol.max(floor) {
            return Ok(stats);
        }
        if it == opts.max_iterations {
            break;
        }
        // gradient scale sets the Hessian floor for degenerate p > 2
        let mut gmax: f64 = 0.0;
        Layout::new(energy.grid, energy.p).for_each_point(u, |_, _, g| gmax = gmax.max(g[0].hypot(g[1])));
        let floor2 = if energy.p > 2.0 { (1e-3 * gmax.max(1e-6)).powi(2) } else { 0.0 };
        let h = energy.hessian(u, floor2);
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let target = (0.1 * opts.tol).max(res_norm * res_norm.min(0.1));
        let (mut d, cg_its) = pcg(&h, &rhs, target, 20 * n + 100);
        stats.cg_iterations += cg_its;
        // J-gradient is residual * h^N; Armijo works with the residual scale
        let mut slope = -dot(&rhs, &d);
        if !(slope < 0.0) {
            d = rhs.clone();
            slope = -dot(&rhs, &rhs);
        }
        let vol = energy.grid.cell_volume();
        let noise = 1e-12 * (j_cur.abs() + energy.magnitude(u));
        let mut accepted = false;
        if -slope * vol > 1e2 * noise {
            let mut t = 1.0;
            for _ in 0..60 {
                for k in 0..n {
                    trial[k] = u[k] + t * d[k];
                }
                let j_new = energy.value(&trial);
                if j_new.is_finite() && j_new <= j_cur + opts.armijo * t * slope * vol + noise {
                    u.copy_from_slice(&trial);
                    j_cur = j_new;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            // the decrease is below the rounding of J: globalize on the residual
            let mut t = 1.0;
            for _ in 0..30 {
                for k in 0..n {
                    trial[k] = u[k] + t * d[k];
                }
                if inf_norm(&energy.residual(&trial)) < (1.0 - 1e-4 * t) * res_norm {
                    u.copy_from_slice(&trial);
                    j_cur = energy.value(u);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: res_norm,
                });
            }
        }
        stats.energies.push(j_cur);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: stats.residual,
    })
}

/// A forward-difference gradient point as seen by the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientPoint {
    /// Location `x_{ij} + h/2` per axis.
    pub x: Point,
    /// Mean of the cell values entering the stencil.
    pub mean: f64,
    pub grad: [f64; 2],
    /// Cell whose weight applies here.
    pub weight_cell: usize,
}

/// Visits all gradient points of `u` (zero ghost values).
pub fn for_each_gradient(grid: &Grid, u: &[f64], mut f: impl FnMut(GradientPoint)) {
    let lay = Layout::new(grid, 2.0);
    let lo = grid.lower();
    let (h0, h1) = (grid.spacing(0), grid.spacing(1));
    lay.for_each_point(u, |i, j, g| {
        let c = lay.val(u, i, j);
        let (x, mean) = if lay.dim == 1 {
            ([lo[0] + (i as f64 + 1.0) * h0, 0.0], 0.5 * (c + lay.val(u, i + 1, j)))
        } else {
            (
                [lo[0] + (i as f64 + 1.0) * h0, lo[1] + (j as f64 + 1.0) * h1],
                (c + lay.val(u, i + 1, j) + lay.val(u, i, j + 1)) / 3.0,
            )
        };
        f(GradientPoint {
            x,
            mean,
            grad: g,
            weight_cell: lay.weight_cell(i, j),
        })
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn residual_matches_energy_gradient() {
        for (dim, p) in [(1, 2.0), (1, 3.0), (2, 2.5), (2, 1.6)] {
            let grid = if dim == 1 {
                GridSpec::interval(-1.0, 1.0, 9, 1.0, 1).build().unwrap()
            } else {
                GridSpec::rectangle([[0.0, 1.0], [0.0, 2.0]], [5, 6], 1.0, 1).build().unwrap()
            };
            let n = grid.n_cells();
            let u: Vec<f64> = (0..n).map(|k| ((k * 7 % 11) as f64 * 0.3).sin()).collect();
            let rhs: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).cos()).collect();
            let anchor: Vec<f64> = (0..n).map(|k| 0.1 * k as f64).collect();
            let weight: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * (k as f64).sin().abs()).collect();
            let e = Energy {
                grid: &grid,
                p,
                weight: Some(&weight),
                rhs: &rhs,
                mass: 3.0,
                anchor: Some(&anchor),
                absorption: Some((Nonlinearity::Power { q: 1.5 }, 0.7)),
            };
            let r = e.residual(&u);
            let vol = grid.cell_volume();
            for k in 0..n {
                let mut a = u.clone();
                let mut b = u.clone();
                let d = 1e-6;
                a[k] += d;
                b[k] -= d;
                let fd = (e.value(&a) - e.value(&b)) / (2.0 * d) / vol;
                assert!((fd - r[k]).abs() < 1e-5 * (1.0 + fd.abs()), "dim {dim} p {p} k {k}: {fd} vs {}", r[k]);
            }
        }
    }

    #[test]
    fn hessian_matches_residual_derivative() {
        let grid = GridSpec::rectangle([[0.0, 1.0], [0.0, 1.0]], [5, 5], 1.0, 1).build().unwrap();
        let n = grid.n_cells();
        let u: Vec<f64> = (0..n).map(|k| ((k * 5 % 7) as f64 * 0.4).sin()).collect();
        let rhs = vec![0.0; n];
        let e = Energy {
            grid: &grid,
            p: 3.0,
            weight: None,
            rhs: &rhs,
            mass: 0.0,
            anchor: None,
            absorption: None,
        };
        let h = e.hessian(&u, 0.0);
        let v: Vec<f64> = (0..n).map(|k| (k as f64 * 0.9).cos()).collect();
        let mut hv = vec![0.0; n];
        h.apply(&v, &mut hv);
        let d = 1e-6;
        let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + d * b).collect();
        let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - d * b).collect();
        let (rp, rm) = (e.residual(&up), e.residual(&um));
        for k in 0..n {
            let fd = (rp[k] - rm[k]) / (2.0 * d);
            assert!((fd - hv[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{k}: {fd} vs {}", hv[k]);
        }
        let diag = h.diagonal();
        for k in [0, 7, 12, 24] {
            let mut ek = vec![0.0; n];
            ek[k] = 1.0;
            h.apply(&ek, &mut hv);
            assert!((hv[k] - diag[k]).abs() < 1e-9 * diag[k].abs().max(1.0));
        }
    }
}
