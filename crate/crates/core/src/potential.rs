//! Nonlinear potential theory: truncated Wolff potentials, fractional
//! maximal operators, critical exponents, Bessel capacity upper bounds and
//! exponential integrability.
//!
//! Both potentials only need the ball masses `ω(B(x, r))`, supplied through
//! [`BallMass`]. Grid measures ([`SpatialMeasure`]) use the grid geometry;
//! [`RadialMeasure`] describes radially symmetric measures in `R^N` for any
//! `N`, which is how closed-form checks in dimension 3 are run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid, Point};
use crate::measures::SpatialMeasure;
use crate::nonlinearity::Nonlinearity;

pub const DEFAULT_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub n: usize,
    pub p: f64,
    pub p_1: f64,
    pub p_c: f64,
    /// `+∞` when `p ≥ N`.
    pub p_e: f64,
    pub above_p1: bool,
    pub below_n: bool,
}

/// Critical exponents `p_c = p - 1 + p/N`, `p_e = N(p-1)/(N-p)` and
/// `p_1 = (2N+1)/(N+1)`.
pub fn exponents(n: usize, p: f64) -> Result<ExponentReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    if n == 0 {
        return Err(invalid("N", "dimension must be positive"));
    }
    let nf = n as f64;
    let p_1 = (2.0 * nf + 1.0) / (nf + 1.0);
    let p_c = p - 1.0 + p / nf;
    let p_e = if p < nf { nf * (p - 1.0) / (nf - p) } else { f64::INFINITY };
    Ok(ExponentReport {
        n,
        p,
        p_1,
        p_c,
        p_e,
        above_p1: p > p_1,
        below_n: p < nf,
    })
}

/// Volume of the unit ball in `R^N`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    std::f64::consts::PI.powf(h) / gamma(h + 1.0)
}

/// Surface area of the unit sphere in `R^N`.
pub fn unit_sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// Source of ball masses for the potentials.
pub trait BallMass: Sync {
    /// Dimension `N` entering `r^{p-N}`.
    fn dim(&self) -> usize;

    /// `ω(B(x, r))` with the open ball.
    fn ball_mass(&self, x: &Point, r: f64) -> f64;

    /// Radii where `r ↦ ω(B(x, r))` jumps.
    fn jumps(&self, x: &Point) -> Vec<f64>;

    fn is_nonnegative(&self) -> bool;
}

/// Ball masses of a grid measure. Densities are piecewise constant on
/// cells; 1D balls are integrated exactly, 2D balls row by row on four
/// sub-lines per row.
pub struct GridBallMass<'a> {
    measure: &'a SpatialMeasure,
    // prefix integrals along axis 0, one row per cells(1)
    prefix: Vec<Vec<f64>>,
    nonnegative: bool,
}

impl<'a> GridBallMass<'a> {
    pub fn new(measure: &'a SpatialMeasure) -> Self {
        let g = measure.grid();
        let h0 = g.spacing(0);
        let prefix = (0..g.cells(1))
            .map(|j| {
                let mut acc = vec![0.0; g.cells(0) + 1];
                for i in 0..g.cells(0) {
                    acc[i + 1] = acc[i] + measure.density()[g.index(i, j)] * h0;
                }
                acc
            })
            .collect();
        Self {
            measure,
            prefix,
            nonnegative: measure.is_nonnegative(),
        }
    }

    /// `∫_{a}^{b} ρ(s, row j) ds`, clipped to the box.
    fn row_integral(&self, j: usize, a: f64, b: f64) -> f64 {
        let g = self.measure.grid();
        let lo = g.lower()[0];
        let h = g.spacing(0);
        let n = g.cells(0);
        let cum = |y: f64| -> f64 {
            let s = ((y - lo) / h).clamp(0.0, n as f64);
            let k = (s.floor() as usize).min(n.saturating_sub(1));
            let frac = s - k as f64;
            let row = &self.prefix[j];
            row[k] + frac * (row[k + 1] - row[k])
        };
        if b <= a {
            0.0
        } else {
            cum(b) - cum(a)
        }
    }

    fn density_ball(&self, x: &Point, r: f64) -> f64 {
        let g = self.measure.grid();
        if g.dim() == 1 {
            return self.row_integral(0, x[0] - r, x[0] + r);
        }
        const SUB: usize = 4;
        let h1 = g.spacing(1);
        let mut total = 0.0;
        let j_lo = (((x[1] - r - g.lower()[1]) / h1).floor().max(0.0)) as usize;
        let j_hi = ((((x[1] + r - g.lower()[1]) / h1).ceil()) as usize).min(g.cells(1));
        for j in j_lo..j_hi {
            let y0 = g.lower()[1] + j as f64 * h1;
            for s in 0..SUB {
                let y = y0 + (s as f64 + 0.5) / SUB as f64 * h1;
                let dy = y - x[1];
                if dy.abs() >= r {
                    continue;
                }
                let w = (r * r - dy * dy).sqrt();
                total += self.row_integral(j, x[0] - w, x[0] + w) * h1 / SUB as f64;
            }
        }
        total
    }
}

impl BallMass for GridBallMass<'_> {
    fn dim(&self) -> usize {
        self.measure.grid().dim()
    }

    fn ball_mass(&self, x: &Point, r: f64) -> f64 {
        let g = self.measure.grid();
        let atoms: f64 = self
            .measure
            .atoms()
            .iter()
            .filter(|a| g.distance(&a.x, x) < r)
            .map(|a| a.mass)
            .sum();
        atoms + self.density_ball(x, r)
    }

    fn jumps(&self, x: &Point) -> Vec<f64> {
        let g = self.measure.grid();
        self.measure.atoms().iter().map(|a| g.distance(&a.x, x)).collect()
    }

    fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }
}

/// Radially symmetric measure on `R^N`: an atom at the origin plus a
/// density `ρ(|y|)` supported in `|y| < support`.
pub struct RadialMeasure {
    dim: usize,
    atom: f64,
    density: Option<Box<dyn Fn(f64) -> f64 + Sync + Send>>,
    support: f64,
    // quadrature panels for shell integrals
    panels: usize,
}

impl RadialMeasure {
    pub fn dirac(dim: usize, mass: f64) -> Self {
        Self {
            dim,
            atom: mass,
            density: None,
            support: 0.0,
            panels: 48,
        }
    }

    pub fn with_density(dim: usize, support: f64, density: impl Fn(f64) -> f64 + Sync + Send + 'static) -> Self {
        Self {
            dim,
            atom: 0.0,
            density: Some(Box::new(density)),
            support,
            panels: 48,
        }
    }

    /// Shell quadrature refinement (panels per unit of `log` radius span).
    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = panels.max(4);
        self
    }

    /// Fraction of the sphere `|y| = s` lying in `B(x, r)` with `|x| = d`.
    fn cap_fraction(&self, s: f64, d: f64, r: f64) -> f64 {
        if d == 0.0 || s == 0.0 {
            return if s.max(d) < r || (d == 0.0 && s < r) { 1.0 } else { 0.0 };
        }
        let c = (s * s + d * d - r * r) / (2.0 * s * d);
        if c >= 1.0 {
            return 0.0;
        }
        if c <= -1.0 {
            return 1.0;
        }
        match self.dim {
            1 => 0.5,
            2 => c.acos() / std::f64::consts::PI,
            3 => 0.5 * (1.0 - c),
            n => {
                let half = 0.5 * beta_reg((n as f64 - 1.0) / 2.0, 0.5, 1.0 - c * c);
                if c >= 0.0 {
                    half
                } else {
                    1.0 - half
                }
            }
        }
    }

    fn shell_integral(&self, lo: f64, hi: f64, weight: impl Fn(f64) -> f64) -> f64 {
        let rho = self.density.as_ref().expect("density present");
        if hi <= lo {
            return 0.0;
        }
        let area = unit_sphere_area(self.dim);
        let nd = self.dim as i32;
        // geometric panels toward lo resolve endpoint behaviour
        let panels = self.panels;
        let mut sum = 0.0;
        let lo_eff = if lo <= 0.0 { hi * 1e-9 } else { lo };
        let ratio = (hi / lo_eff).ln();
        let graded = ratio > 1.0;
        for k in 0..panels {
            let (a, b) = if graded {
                (lo_eff * (ratio * k as f64 / panels as f64).exp(), lo_eff * (ratio * (k + 1) as f64 / panels as f64).exp())
            } else {
                (lo + (hi - lo) * k as f64 / panels as f64, lo + (hi - lo) * (k + 1) as f64 / panels as f64)
            };
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, w) in &GAUSS_LEGENDRE_6 {
                let s = mid + half * x;
                sum += w * half * rho(s) * s.powi(nd - 1) * weight(s);
            }
        }
        area * sum
    }
}

impl BallMass for RadialMeasure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn ball_mass(&self, x: &Point, r: f64) -> f64 {
        let d = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let mut m = if d < r { self.atom } else { 0.0 };
        if self.density.is_some() {
            let inner = (r - d).max(0.0).min(self.support);
            let outer = (d + r).min(self.support);
            if inner > 0.0 {
                m += self.shell_integral(0.0, inner, |_| 1.0);
            }
            let a = (d - r).abs().max(inner);
            if outer > a {
                m += self.shell_integral(a, outer, |s| self.cap_fraction(s, d, r));
            }
        }
        m
    }

    fn jumps(&self, x: &Point) -> Vec<f64> {
        if self.atom != 0.0 {
            vec![(x[0] * x[0] + x[1] * x[1]).sqrt()]
        } else {
            Vec::new()
        }
    }

    fn is_nonnegative(&self) -> bool {
        self.atom >= 0.0
    }
}

const GAUSS_LEGENDRE_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

const GAUSS_LEGENDRE_6: [(f64, f64); 6] = [
    (-0.932_469_514_203_152, 0.171_324_492_379_170_35),
    (-0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
    (-0.238_619_186_083_196_9, 0.467_913_934_572_691),
    (0.238_619_186_083_196_9, 0.467_913_934_572_691),
    (0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
    (0.932_469_514_203_152, 0.171_324_492_379_170_35),
];

/// Radial quadrature settings shared by the potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialQuadrature {
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
}

impl RadialQuadrature {
    /// `r_min = h/4`, `R` given.
    pub fn for_grid(grid: &Grid, r_max: f64) -> Self {
        Self {
            r_min: grid.h() / 4.0,
            r_max,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0) || !(self.r_min > 0.0) || self.nodes < 2 {
            return Err(invalid("quadrature", format!("need r_min > 0, R > 0 and nodes >= 2, got {self:?}")));
        }
        Ok(())
    }

    /// Log-spaced node radii in `[r_min, R]`.
    pub fn radii(&self) -> Vec<f64> {
        if self.r_min >= self.r_max {
            return Vec::new();
        }
        let (a, b) = (self.r_min.ln(), self.r_max.ln());
        (0..self.nodes)
            .map(|i| (a + (b - a) * i as f64 / (self.nodes - 1) as f64).exp())
            .collect()
    }

    /// Panel boundaries in `log r`, with jump radii inserted.
    fn panels(&self, jumps: &[f64]) -> Vec<f64> {
        let mut s: Vec<f64> = self.radii().into_iter().map(f64::ln).collect();
        for &j in jumps {
            if j > self.r_min && j < self.r_max {
                s.push(j.ln());
            }
        }
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        s
    }
}

/// `W^R_{1,p}[ω](x) = ∫_0^R (r^{p-N} ω(B(x,r)))^{1/(p-1)} dr/r`, integrated
/// over `[r_min, R]` with Gauss panels in `log r`.
pub fn wolff<M: BallMass + ?Sized>(omega: &M, p: f64, quad: &RadialQuadrature, x: &Point) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    quad.validate()?;
    if !omega.is_nonnegative() {
        return Err(invalid("measure", "Wolff potential needs a nonnegative measure"));
    }
    Ok(wolff_unchecked(omega, p, quad, x))
}

fn wolff_unchecked<M: BallMass + ?Sized>(omega: &M, p: f64, quad: &RadialQuadrature, x: &Point) -> f64 {
    let s = quad.panels(&omega.jumps(x));
    let n = omega.dim() as f64;
    let expo = 1.0 / (p - 1.0);
    let mut total = 0.0;
    for w in s.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(t, wt) in &GAUSS_LEGENDRE_4 {
            let ls = mid + half * t;
            let r = ls.exp();
            let mass = omega.ball_mass(x, r);
            if mass > 0.0 {
                total += wt * half * (r.powf(p - n) * mass).powf(expo);
            }
        }
    }
    total
}

/// `h_η(r) = inf((-ln r)^{-η}, (ln 2)^{-η})`; the second branch holds for
/// all `r ≥ 1/2`.
pub fn h_eta(r: f64, eta: f64) -> f64 {
    if r < 0.5 {
        (-r.ln()).powf(-eta)
    } else {
        std::f64::consts::LN_2.powf(-eta)
    }
}

/// `M^η_{p,R}[ω](x) = sup_{0<r<R} ω(B(x,r)) / (r^{N-p} h_η(r))` over the
/// log-spaced radii plus the radii just past each jump.
pub fn maximal<M: BallMass + ?Sized>(omega: &M, p: f64, eta: f64, quad: &RadialQuadrature, x: &Point) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(invalid("eta", format!("need eta >= 0, got {eta}")));
    }
    if !(p > 1.0) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    quad.validate()?;
    if !omega.is_nonnegative() {
        return Err(invalid("measure", "maximal function needs a nonnegative measure"));
    }
    Ok(maximal_unchecked(omega, p, eta, quad, x))
}

fn maximal_unchecked<M: BallMass + ?Sized>(omega: &M, p: f64, eta: f64, quad: &RadialQuadrature, x: &Point) -> f64 {
    let n = omega.dim() as f64;
    let mut radii = quad.radii();
    if let Some(last) = radii.last_mut() {
        *last *= 1.0 - 1e-12;
    }
    for j in omega.jumps(x) {
        let r = j * (1.0 + 1e-12);
        if r > quad.r_min && r < quad.r_max {
            radii.push(r);
        }
    }
    radii
        .into_iter()
        .map(|r| omega.ball_mass(x, r) / (r.powf(n - p) * h_eta(r, eta)))
        .fold(0.0, f64::max)
}

/// Per-cell potential values.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub field: Field,
    pub p: f64,
    pub radius: f64,
    pub nodes: usize,
}

impl PotentialField {
    pub fn values(&self) -> &[f64] {
        self.field.values()
    }
}

/// Wolff potential of a grid measure at every cell center.
pub fn wolff_field(omega: &SpatialMeasure, p: f64, quad: &RadialQuadrature) -> Result<PotentialField> {
    let bm = GridBallMass::new(omega);
    if !(p > 1.0) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    quad.validate()?;
    if !bm.is_nonnegative() {
        return Err(invalid("measure", "Wolff potential needs a nonnegative measure"));
    }
    let g = *omega.grid();
    let values: Vec<f64> = (0..g.n_cells())
        .into_par_iter()
        .map(|k| wolff_unchecked(&bm, p, quad, &g.center(k)))
        .collect();
    Ok(PotentialField {
        field: Field::new(g, values)?,
        p,
        radius: quad.r_max,
        nodes: quad.nodes,
    })
}

/// `W^{2D}_{1,p}[ω]` on the grid with default quadrature.
pub fn wolff_field_2d(omega: &SpatialMeasure, p: f64) -> Result<PotentialField> {
    let g = omega.grid();
    wolff_field(omega, p, &RadialQuadrature::for_grid(g, 2.0 * g.diameter()))
}

pub fn maximal_field(omega: &SpatialMeasure, p: f64, eta: f64, quad: &RadialQuadrature) -> Result<PotentialField> {
    let bm = GridBallMass::new(omega);
    let g = *omega.grid();
    if !bm.is_nonnegative() {
        return Err(invalid("measure", "maximal function needs a nonnegative measure"));
    }
    maximal(&bm, p, eta, quad, &g.center(0))?;
    let values: Vec<f64> = (0..g.n_cells())
        .into_par_iter()
        .map(|k| maximal_unchecked(&bm, p, eta, quad, &g.center(k)))
        .collect();
    Ok(PotentialField {
        field: Field::new(g, values)?,
        p,
        radius: quad.r_max,
        nodes: quad.nodes,
    })
}

/// `||M^η_{p,2D}[ω]||_∞` sampled at cell centers.
pub fn maximal_norm_2d(omega: &SpatialMeasure, p: f64, eta: f64) -> Result<f64> {
    let g = omega.grid();
    let f = maximal_field(omega, p, eta, &RadialQuadrature::for_grid(g, 2.0 * g.diameter()))?;
    Ok(f.field.norm_inf())
}

/// `∫_1^∞ G(s) s^{-1-p_c} ds < ∞`.
pub fn subcritical_check(g: &Nonlinearity, n: usize, p: f64) -> Result<bool> {
    g.validate()?;
    let e = exponents(n, p)?;
    Ok(match *g {
        Nonlinearity::Power { q } => q < e.p_c,
        Nonlinearity::Exponential { .. } | Nonlinearity::TruncatedExponential { .. } => false,
    })
}

/// `δ_0 = (12β)^{-β} p ln 2`.
pub fn delta0(p: f64, beta: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(invalid("beta", format!("need beta > 1, got {beta}")));
    }
    if !(p > 1.0) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    Ok((12.0 * beta).recip().powf(beta) * p * std::f64::consts::LN_2)
}

/// Exponents above this are treated as overflow.
pub const EXP_OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpIntegral {
    pub finite: bool,
    pub value: f64,
}

/// Midpoint quadrature of `exp(e(x))` with overflow guard and cap.
pub fn exp_quadrature(grid: &Grid, exponents: &[f64], cap: f64) -> ExpIntegral {
    if exponents.iter().any(|&e| !(e <= EXP_OVERFLOW_GUARD)) {
        return ExpIntegral {
            finite: false,
            value: f64::INFINITY,
        };
    }
    let value = exponents.iter().map(|e| e.exp()).sum::<f64>() * grid.cell_volume();
    ExpIntegral {
        finite: value.is_finite() && value <= cap,
        value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpIntegrability {
    pub finite: bool,
    pub integral: f64,
    pub delta0: f64,
    pub maximal_norm: f64,
    pub wolff_max: f64,
}

/// `∫_Ω exp(δ (W^{2D}_{1,p}[ω])^β / ||M^{(p-1)/β'}_{p,2D}[ω]||_∞^{β/(p-1)}) dx`.
pub fn exp_integrability(omega: &SpatialMeasure, p: f64, beta: f64, delta: f64, cap: f64) -> Result<ExpIntegrability> {
    let d0 = delta0(p, beta)?;
    if !(delta > 0.0 && delta < d0) {
        return Err(invalid("delta", format!("need 0 < delta < delta0 = {d0:.6e}, got {delta}")));
    }
    let eta = (p - 1.0) * (beta - 1.0) / beta;
    let m = maximal_norm_2d(omega, p, eta)?;
    if !(m > 0.0) {
        return Err(invalid("measure", "maximal function vanishes; the normalization is undefined"));
    }
    let w = wolff_field_2d(omega, p)?;
    let norm = m.powf(beta / (p - 1.0));
    let e: Vec<f64> = w.values().iter().map(|v| delta * v.powf(beta) / norm).collect();
    let r = exp_quadrature(omega.grid(), &e, cap);
    Ok(ExpIntegrability {
        finite: r.finite,
        integral: r.value,
        delta0: d0,
        maximal_norm: m,
        wolff_max: w.field.norm_inf(),
    })
}

/// `∫_{B(0,r)} G_α` for the Bessel kernel `G_α` of `R^N`
/// (Fourier symbol `(1+|ξ|^2)^{-α/2}`).
pub fn bessel_ball_integral(n: usize, alpha: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    // ∫_{B_r} G_α = Γ(α/2)^{-1} ∫_0^∞ e^{-t} t^{α/2-1} P(N/2, r²/(4t)) dt, t = e^u
    let (u_lo, u_hi) = (-60.0f64, 5.0f64);
    let steps = 4000;
    let du = (u_hi - u_lo) / steps as f64;
    let a = n as f64 / 2.0;
    let f = |u: f64| {
        let t = u.exp();
        let y = r * r / (4.0 * t);
        let pr = if y > 700.0 { 1.0 } else { gamma_lr(a, y) };
        (-t).exp() * t.powf(alpha / 2.0) * pr
    };
    let mut sum = f(u_lo) + f(u_hi);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(u_lo + k as f64 * du);
    }
    sum * du / 3.0 / gamma(alpha / 2.0)
}

/// A closed ball; radius 0 is a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

/// Upper bound on `Cap_{G_α,s}(E)` for a finite union of balls.
///
/// Each ball `B(a, ρ)` (points use `point_radius`) gets the test density
/// `φ = χ_{B(a,2ρ)} / ∫_{B_ρ} G_α`, which satisfies `G_α * φ ≥ 1` on the
/// ball. Subadditivity gives the bound `Σ ||φ_i||_s^s`.
pub fn capacity_upper(set: &[Ball], alpha: f64, s: f64, grid: &Grid, point_radius: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(s > 1.0) {
        return Err(invalid("capacity", format!("need alpha > 0 and s > 1, got alpha={alpha}, s={s}")));
    }
    if !(point_radius > 0.0) {
        return Err(invalid("capacity", "point radius must be positive"));
    }
    let n = grid.dim();
    let mut total = 0.0;
    for b in set {
        let inside = (0..n).all(|a| b.center[a] - b.radius >= grid.lower()[a] && b.center[a] + b.radius <= grid.upper()[a]);
        if !inside || b.radius < 0.0 {
            return Err(invalid("capacity", format!("ball {b:?} is not inside the grid box")));
        }
        let rho = if b.radius > 0.0 { b.radius } else { point_radius };
        let c = bessel_ball_integral(n, alpha, rho).recip();
        total += c.powf(s) * unit_ball_volume(n) * (2.0 * rho).powi(n as i32);
    }
    Ok(total)
}

/// A point has positive `Cap_{G_p, q/(q+1-p)}` iff `p q/(q+1-p) > N`,
/// equivalently `q < p_e` when `p < N`.
pub fn dirac_admissible(n: usize, p: f64, q: f64) -> Result<bool> {
    if !(q > p - 1.0) {
        return Err(invalid("q", format!("need q > p - 1, got q={q}, p={p}")));
    }
    exponents(n, p)?;
    Ok(p * q / (q + 1.0 - p) > n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn quad(r_min: f64, r_max: f64) -> RadialQuadrature {
        RadialQuadrature {
            r_min,
            r_max,
            nodes: DEFAULT_NODES,
        }
    }

    #[test]
    fn exponent_examples() {
        let e = exponents(3, 2.0).unwrap();
        assert_relative_eq!(e.p_c, 5.0 / 3.0);
        assert_relative_eq!(e.p_e, 3.0);
        assert_relative_eq!(e.p_1, 7.0 / 4.0);
        let e = exponents(2, 2.0).unwrap();
        assert_eq!(e.p_c, 2.0);
        assert!(e.p_e.is_infinite());
        let e = exponents(1, 2.0).unwrap();
        assert_eq!((e.p_1, e.p_c), (1.5, 3.0));
        assert!(exponents(2, 1.0).is_err());
    }

    #[test]
    fn wolff_of_zero_vanishes() {
        let g = GridSpec::interval(-1.0, 1.0, 16, 1.0, 1).build().unwrap();
        let w = wolff_field_2d(&SpatialMeasure::zero(g), 2.0).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wolff_dirac_closed_form() {
        let d = RadialMeasure::dirac(3, 1.0);
        let v = wolff(&d, 2.0, &quad(1e-3, 1.0), &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-3);
        let h = 0.01;
        let v0 = wolff(&d, 2.0, &quad(h / 4.0, 1.0), &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v0, 4.0 / h - 1.0, max_relative = 1e-3);
    }

    #[test]
    fn maximal_examples() {
        let d = RadialMeasure::dirac(3, 1.0);
        let m = maximal(&d, 2.0, 0.0, &quad(1e-3, 1.0), &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-6);
        let z = RadialMeasure::dirac(3, 0.0);
        assert_eq!(maximal(&z, 2.0, 1.0, &quad(1e-3, 1.0), &[0.5, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(h_eta(0.4, 1.0), 1.0 / (-(0.4f64).ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(h_eta(0.4, 1.0), 1.0914, epsilon = 1e-4);
    }

    #[test]
    fn h_eta_branches() {
        for r in [0.5, 0.7, 1.0, 3.0] {
            assert_abs_diff_eq!(h_eta(r, 2.0), std::f64::consts::LN_2.powi(-2), epsilon = 1e-14);
        }
        for r in [1e-6, 0.01, 0.3, 0.49] {
            assert!(h_eta(r, 1.5) <= std::f64::consts::LN_2.powf(-1.5));
        }
        assert_eq!(h_eta(0.2, 0.0), 1.0);
    }

    #[test]
    fn subcritical_examples() {
        assert!(subcritical_check(&Nonlinearity::Power { q: 1.5 }, 2, 2.0).unwrap());
        assert!(!subcritical_check(&Nonlinearity::Power { q: 2.0 }, 2, 2.0).unwrap());
        assert!(!subcritical_check(&Nonlinearity::Exponential { tau: 1.0, beta: 1.0 }, 2, 2.0).unwrap());
    }

    #[test]
    fn delta0_examples() {
        assert_relative_eq!(delta0(2.0, 2.0).unwrap(), std::f64::consts::LN_2 / 288.0, max_relative = 1e-12);
        assert_relative_eq!(delta0(2.0, 2.0).unwrap(), 2.4068e-3, max_relative = 1e-4);
        assert_relative_eq!(delta0(2.0, 1.0 + 1e-12).unwrap(), 2.0 * std::f64::consts::LN_2 / 12.0, max_relative = 1e-9);
        assert!(delta0(2.0, 1.0).is_err());
    }

    #[test]
    fn exp_integrability_dirac() {
        let g = GridSpec::interval(-1.0, 1.0, 64, 1.0, 1).build().unwrap();
        let d = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        let d0 = delta0(2.0, 2.0).unwrap();
        let half = exp_integrability(&d, 2.0, 2.0, d0 / 2.0, 1e12).unwrap();
        assert!(half.finite);
        let quarter = exp_integrability(&d, 2.0, 2.0, d0 / 4.0, 1e12).unwrap();
        assert!(half.integral >= quarter.integral);
        assert!(exp_integrability(&d, 2.0, 2.0, d0, 1e12).is_err());
        assert!(exp_integrability(&SpatialMeasure::zero(g), 2.0, 2.0, d0 / 2.0, 1e12).is_err());
    }

    #[test]
    fn bessel_kernel_has_unit_mass() {
        for (n, a) in [(1, 0.5), (2, 1.0), (3, 2.0)] {
            assert_relative_eq!(bessel_ball_integral(n, a, 60.0), 1.0, max_relative = 1e-6);
            let small = bessel_ball_integral(n, a, 0.1);
            let large = bessel_ball_integral(n, a, 0.2);
            assert!(small < large);
        }
    }

    #[test]
    fn capacity_examples() {
        let g = GridSpec::rectangle([[-1.0, 1.0], [-1.0, 1.0]], [8, 8], 1.0, 1).build().unwrap();
        assert_eq!(capacity_upper(&[], 1.0, 1.5, &g, 0.1).unwrap(), 0.0);
        let pt = [Ball { center: [0.0, 0.0], radius: 0.0 }];
        // αs = 1.5 < N = 2: a point has zero capacity
        let r = 0.1;
        let big = capacity_upper(&pt, 1.0, 1.5, &g, r).unwrap();
        let small = capacity_upper(&pt, 1.0, 1.5, &g, r / 2.0).unwrap();
        assert!(small < big);
        let two = [pt[0], Ball { center: [0.5, 0.5], radius: 0.2 }];
        assert!(capacity_upper(&two, 1.0, 1.5, &g, r).unwrap() >= big);
        let outside = [Ball { center: [0.95, 0.0], radius: 0.2 }];
        assert!(capacity_upper(&outside, 1.0, 1.5, &g, r).is_err());
    }

    #[test]
    fn dirac_admissible_examples() {
        assert!(dirac_admissible(3, 2.0, 2.0).unwrap());
        assert!(!dirac_admissible(3, 2.0, 3.0).unwrap());
        assert!(dirac_admissible(3, 2.0, 1.01).unwrap());
        assert!(dirac_admissible(3, 2.0, 1.0).is_err());
        // equivalence with q < p_e over a sweep
        let pe = exponents(3, 2.0).unwrap().p_e;
        for k in 1..60 {
            let q = 1.0 + 0.1 * k as f64;
            if (q - pe).abs() > 1e-9 {
                assert_eq!(dirac_admissible(3, 2.0, q).unwrap(), q < pe);
            }
        }
    }

    #[test]
    fn grid_ball_mass_1d_exact() {
        let g = GridSpec::interval(-1.0, 1.0, 40, 1.0, 1).build().unwrap();
        let one = SpatialMeasure::from_density(&Field::from_fn(g, |_| 1.0));
        let bm = GridBallMass::new(&one);
        assert_relative_eq!(bm.ball_mass(&[0.1, 0.0], 0.3), 0.6, max_relative = 1e-12);
        assert_relative_eq!(bm.ball_mass(&[0.9, 0.0], 0.3), 0.4, max_relative = 1e-12);
    }

    #[test]
    fn grid_ball_mass_2d_area() {
        let g = GridSpec::rectangle([[-1.0, 1.0], [-1.0, 1.0]], [80, 80], 1.0, 1).build().unwrap();
        let one = SpatialMeasure::from_density(&Field::from_fn(g, |_| 1.0));
        let bm = GridBallMass::new(&one);
        let area = bm.ball_mass(&[0.0, 0.0], 0.5);
        assert_relative_eq!(area, std::f64::consts::PI * 0.25, max_relative = 2e-3);
    }

    #[test]
    fn radial_density_ball_mass() {
        // uniform density in the unit ball of R^3
        let m = RadialMeasure::with_density(3, 1.0, |_| 1.0);
        let full = m.ball_mass(&[0.0, 0.0], 2.0);
        assert_relative_eq!(full, 4.0 / 3.0 * std::f64::consts::PI, max_relative = 1e-6);
        let inner = m.ball_mass(&[0.3, 0.0], 0.2);
        assert_relative_eq!(inner, 4.0 / 3.0 * std::f64::consts::PI * 0.008, max_relative = 1e-4);
    }
}
