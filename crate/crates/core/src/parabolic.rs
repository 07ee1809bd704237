//! Backward-Euler solver for `u_t − div(a|∇u|^{p−2}∇u) ± G(u) = μ` with zero
//! lateral boundary values, plus renormalized-solution diagnostics.

use serde::{Deserialize, Serialize};

use crate::elliptic::Weight;
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid, Point, SpaceTimeField};
use crate::measures::SpaceTimeMeasure;
use crate::minimize::{for_each_gradient, minimize, Energy, NewtonOptions};
use crate::nonlinearity::Nonlinearity;
use crate::potential::exponents;

/// `T_k(r) = max(min(r, k), −k)`.
pub fn truncate(r: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(invalid("k", format!("truncation level must be positive, got {k}")));
    }
    Ok(r.clamp(-k, k))
}

/// Zero-order term of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// `+c G(u)` on the left side.
    Absorption { g: Nonlinearity, coef: f64 },
    /// `+c G(u)` on the right side, lagged by one step.
    Source { g: Nonlinearity, coef: f64 },
}

impl Perturbation {
    fn validate(&self) -> Result<()> {
        match self {
            Perturbation::None => Ok(()),
            Perturbation::Absorption { g, coef } | Perturbation::Source { g, coef } => {
                g.validate()?;
                if !(*coef >= 0.0 && coef.is_finite()) {
                    return Err(invalid("perturbation", format!("coefficient must be nonnegative, got {coef}")));
                }
                Ok(())
            }
        }
    }

    /// Signed contribution to the left-hand side.
    fn lhs(&self, u: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Absorption { g, coef } => coef * g.value(u),
            Perturbation::Source { g, coef } => -coef * g.value(u),
        }
    }

    fn magnitude(&self, u: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Absorption { g, coef } | Perturbation::Source { g, coef } => coef * g.value(u).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicProblem {
    pub mu: SpaceTimeMeasure,
    pub u0: Field,
    pub p: f64,
    pub perturbation: Perturbation,
    pub weight: Option<Weight>,
    /// Mollification level for `μ`; `None` uses radius `2h`.
    pub mollify_level: Option<usize>,
    /// Extra density added to the right side without mollification.
    pub forcing: Option<SpaceTimeField>,
}

impl ParabolicProblem {
    pub fn new(mu: SpaceTimeMeasure, u0: Field, p: f64) -> Self {
        Self {
            mu,
            u0,
            p,
            perturbation: Perturbation::None,
            weight: None,
            mollify_level: None,
            forcing: None,
        }
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }

    /// Step-averaged right-hand side densities.
    pub fn source_density(&self) -> SpaceTimeField {
        let mut rhs = self.mu.mollify(self.mollify_level.unwrap_or(usize::MAX)).density_field();
        if let Some(f) = &self.forcing {
            rhs.values_mut().iter_mut().zip(f.values()).for_each(|(r, v)| *r += v);
        }
        rhs
    }

    /// `‖u₀‖₁ + |μ|(Q)`, plus the forcing mass when present.
    pub fn data_mass(&self) -> f64 {
        self.u0.norm_l1() + self.mu.total_variation() + self.forcing.as_ref().map_or(0.0, |f| f.norm_l1())
    }

    fn validate(&self, tol: f64) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(invalid("p", format!("need p > 1, got {}", self.p)));
        }
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("need tol > 0, got {tol}")));
        }
        let g = self.grid();
        if self.u0.grid() != g {
            return Err(invalid("u0", "initial data lives on a different grid"));
        }
        if let Some(f) = &self.forcing {
            if f.grid() != g {
                return Err(invalid("forcing", "forcing lives on a different grid"));
            }
        }
        if let Some(w) = &self.weight {
            w.check_grid(g)?;
        }
        self.perturbation.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    /// `∫ a|∇_h u|^p` at the end of the step.
    pub gradient_energy: f64,
    /// `∫ |c G(u)|` at the end of the step.
    pub g_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: SpaceTimeField,
    pub u0: Field,
    pub p: f64,
    pub perturbation: Perturbation,
    pub weight: Option<Weight>,
    /// Right-hand side actually used, per step.
    pub data: SpaceTimeField,
    pub steps: Vec<StepDiagnostics>,
    pub warnings: Vec<String>,
}

impl Solution {
    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `∫_Q |c G(u)|`.
    pub fn g_mass(&self) -> f64 {
        self.steps.iter().map(|s| s.g_mass).sum::<f64>() * self.grid().tau()
    }

    fn weight_at(&self, cell: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w.values[cell])
    }
}

pub fn solve_parabolic(prob: &ParabolicProblem, tol: f64) -> Result<Solution> {
    prob.validate(tol)?;
    let grid = *prob.grid();
    let mut warnings = Vec::new();
    let ex = exponents(grid.dim(), prob.p)?;
    if !ex.above_p1 {
        warnings.push(format!("p = {} does not exceed p_1 = {:.4}", prob.p, ex.p_1));
    }
    let data = prob.source_density();
    let c = grid.n_cells();
    let tau = grid.tau();
    let opts = NewtonOptions {
        tol,
        ..Default::default()
    };
    let weight = prob.weight.as_ref().map(|w| w.values.as_slice());
    let absorption = match prob.perturbation {
        Perturbation::Absorption { g, coef } => Some((g, coef)),
        _ => None,
    };
    let mut values = Vec::with_capacity(c * grid.steps());
    let mut steps = Vec::with_capacity(grid.steps());
    let mut prev = prob.u0.values().to_vec();
    let mut rhs = vec![0.0; c];
    for n in 0..grid.steps() {
        rhs.copy_from_slice(data.step(n));
        if let Perturbation::Source { g, coef } = prob.perturbation {
            for (r, &v) in rhs.iter_mut().zip(&prev) {
                *r += coef * g.value(v);
            }
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: n });
        }
        let energy = Energy {
            grid: &grid,
            p: prob.p,
            weight,
            rhs: &rhs,
            mass: 1.0 / tau,
            anchor: Some(&prev),
            absorption,
        };
        let mut u = prev.clone();
        let stats = match minimize(&energy, &mut u, &opts) {
            Ok(s) => s,
            Err(Error::NonConvergence { residual, .. })
                if !residual.is_finite() && !matches!(prob.perturbation, Perturbation::None) =>
            {
                return Err(Error::BlowUp { step: n })
            }
            Err(e) => return Err(e),
        };
        if u.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(Error::BlowUp { step: n });
        }
        let mut grad_energy = 0.0;
        for_each_gradient(&grid, &u, |gp| {
            let s = gp.grad[0].hypot(gp.grad[1]);
            grad_energy += weight.map_or(1.0, |w| w[gp.weight_cell]) * s.powf(prob.p);
        });
        steps.push(StepDiagnostics {
            iterations: stats.iterations,
            residual: stats.residual,
            gradient_energy: grad_energy * grid.cell_volume(),
            g_mass: u.iter().map(|&v| prob.perturbation.magnitude(v)).sum::<f64>() * grid.cell_volume(),
        });
        values.extend_from_slice(&u);
        prev = u;
    }
    Ok(Solution {
        u: SpaceTimeField::new(grid, values)?,
        u0: prob.u0.clone(),
        p: prob.p,
        perturbation: prob.perturbation,
        weight: prob.weight.clone(),
        data,
        steps,
        warnings,
    })
}

/// Result of the level-set decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c_hat: f64,
    /// Slope of `log meas{|u|>k}` against `log k`; `None` when undefined.
    pub exponent: Option<f64>,
    pub p_c: f64,
}

/// Fits `meas{|u| > k} ≈ C k^{−p_c}` on a log grid of levels in
/// `[0.05, 0.8]·sup|u|`.
pub fn levelset_decay_check(sol: &Solution, data_mass: f64) -> Result<DecayFit> {
    let g = sol.grid();
    let p_c = exponents(g.dim(), sol.p)?.p_c;
    let sup = sol.u.norm_inf();
    if sup == 0.0 || data_mass <= 0.0 {
        return Ok(DecayFit {
            c_hat: 0.0,
            exponent: None,
            p_c,
        });
    }
    let levels = 16;
    let (lo, hi) = ((0.05 * sup).ln(), (0.8 * sup).ln());
    let scale = data_mass.powf((sol.p + g.dim() as f64) / g.dim() as f64);
    let mut c_hat: f64 = 0.0;
    let mut pts = Vec::new();
    for i in 0..levels {
        let k = (lo + (hi - lo) * i as f64 / (levels - 1) as f64).exp();
        let m = sol.u.level_set_measure(k);
        c_hat = c_hat.max(m * k.powf(p_c) / scale);
        if m > 0.0 {
            pts.push((k.ln(), m.ln()));
        }
    }
    let exponent = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / n, sy / n);
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(DecayFit { c_hat, exponent, p_c })
}

/// Smoothed truncation `S` with `S' = 1` on `[−k, k]`, decaying to 0 on
/// `[k, 2k]` as a cubic; returns `(S, S', S'')`.
pub fn smoothed_truncation(r: f64, k: f64) -> (f64, f64, f64) {
    let a = r.abs();
    let sg = if r < 0.0 { -1.0 } else { 1.0 };
    if a <= k {
        (r, 1.0, 0.0)
    } else if a >= 2.0 * k {
        (sg * 1.5 * k, 0.0, 0.0)
    } else {
        let s = (a - k) / k;
        let val = k * (1.0 + s - s.powi(3) + 0.5 * s.powi(4));
        let d1 = 1.0 - 3.0 * s * s + 2.0 * s.powi(3);
        let d2 = (-6.0 * s + 6.0 * s * s) / k;
        (sg * val, d1, sg * d2)
    }
}

/// Smooth test function `b(|x−c|/r) (1 − t/T)^2` with `b(ρ) = (1−ρ²)^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub center: Point,
    pub radius: f64,
}

impl TestBump {
    /// Value, time derivative and spatial gradient at `(x, t)`.
    fn eval(&self, dim: usize, x: &Point, t: f64, t_final: f64) -> (f64, f64, [f64; 2]) {
        let d = [x[0] - self.center[0], if dim == 2 { x[1] - self.center[1] } else { 0.0 }];
        let rho2 = (d[0] * d[0] + d[1] * d[1]) / (self.radius * self.radius);
        if rho2 >= 1.0 {
            return (0.0, 0.0, [0.0, 0.0]);
        }
        let q = 1.0 - rho2;
        let b = q.powi(4);
        // d/dx (1-ρ²)^4 = -8 (1-ρ²)^3 (x-c)/r²
        let db = -8.0 * q.powi(3) / (self.radius * self.radius);
        let s = 1.0 - t / t_final;
        let time = s * s;
        let dtime = -2.0 * s / t_final;
        (b * time, b * dtime, [db * d[0] * time, db * d[1] * time])
    }

    /// Fixed family: the domain centre plus the points halfway towards
    /// each corner (each end in 1D), with radius a quarter of the smallest side.
    pub fn family(grid: &Grid) -> Vec<TestBump> {
        let (lo, hi) = (grid.lower(), grid.upper());
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let side = if grid.dim() == 1 { hi[0] - lo[0] } else { (hi[0] - lo[0]).min(hi[1] - lo[1]) };
        let radius = 0.25 * side;
        let mut out = vec![TestBump { center: mid, radius }];
        let q = [0.25 * (hi[0] - lo[0]), 0.25 * (hi[1] - lo[1])];
        if grid.dim() == 1 {
            for sx in [-1.0, 1.0] {
                out.push(TestBump {
                    center: [mid[0] + sx * q[0], mid[1]],
                    radius,
                });
            }
        } else {
            for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                out.push(TestBump {
                    center: [mid[0] + sx * q[0], mid[1] + sy * q[1]],
                    radius,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub k: f64,
    pub bump: usize,
    pub residual: f64,
}

/// Discrete weak identity of the renormalized formulation, per `(k, φ)`:
///
/// ```text
/// −∫S(u₀)φ(0) − ∫∫φ_t S(u) + ∫∫S'(u) a|∇u|^{p−2}∇u·∇φ + ∫∫S''(u) φ a|∇u|^p
///   ± ∫∫S'(u) φ G(u) − ∫∫S'(u) φ f
/// ```
///
/// with `f` the right-hand side used by the solver.
pub fn renormalized_residual(sol: &Solution, k_list: &[f64], bumps: &[TestBump]) -> Result<Vec<ResidualEntry>> {
    if let Some(k) = k_list.iter().find(|&&k| !(k > 0.0)) {
        return Err(invalid("k", format!("truncation level must be positive, got {k}")));
    }
    let g = *sol.grid();
    let (dim, tf, tau, vol) = (g.dim(), g.t_final(), g.tau(), g.cell_volume());
    let centers: Vec<Point> = g.centers().collect();
    let mut out = Vec::new();
    for &k in k_list {
        for (bi, bump) in bumps.iter().enumerate() {
            let mut r = 0.0;
            for (x, &v) in centers.iter().zip(sol.u0.values()) {
                r -= smoothed_truncation(v, k).0 * bump.eval(dim, x, 0.0, tf).0 * vol;
            }
            for n in 0..g.steps() {
                let t = g.time(n + 1);
                let u = sol.u.step(n);
                let f = sol.data.step(n);
                let mut acc = 0.0;
                for (i, x) in centers.iter().enumerate() {
                    let (phi, phi_t, _) = bump.eval(dim, x, t, tf);
                    if phi == 0.0 && phi_t == 0.0 {
                        continue;
                    }
                    let (s, ds, _) = smoothed_truncation(u[i], k);
                    acc -= phi_t * s;
                    acc += ds * phi * (sol.perturbation.lhs(u[i]) - f[i]);
                }
                for_each_gradient(&g, u, |gp| {
                    let (phi, _, dphi) = bump.eval(dim, &gp.x, t, tf);
                    if phi == 0.0 {
                        return;
                    }
                    let (_, ds, dds) = smoothed_truncation(gp.mean, k);
                    let a = sol.weight_at(gp.weight_cell);
                    let s2 = gp.grad[0] * gp.grad[0] + gp.grad[1] * gp.grad[1];
                    let flux = a * s2.powf(0.5 * sol.p - 1.0);
                    let flux = if s2 > 0.0 { flux } else { 0.0 };
                    acc += ds * flux * (gp.grad[0] * dphi[0] + gp.grad[1] * dphi[1]);
                    acc += dds * phi * flux * s2;
                });
                r += acc * tau * vol;
            }
            out.push(ResidualEntry { k, bump: bi, residual: r });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEntry {
    pub m: f64,
    pub value: f64,
}

/// `(1/m) ∫∫_{m ≤ u < 2m} φ a|∇u|^p` for each `m`.
pub fn energy_concentration(sol: &Solution, m_list: &[f64], bump: &TestBump) -> Result<Vec<ConcentrationEntry>> {
    if let Some(m) = m_list.iter().find(|&&m| !(m > 0.0)) {
        return Err(invalid("m", format!("level must be positive, got {m}")));
    }
    let g = *sol.grid();
    let (dim, tf) = (g.dim(), g.t_final());
    let scale = g.tau() * g.cell_volume();
    Ok(m_list
        .iter()
        .map(|&m| {
            let mut acc = 0.0;
            for n in 0..g.steps() {
                let t = g.time(n + 1);
                for_each_gradient(&g, sol.u.step(n), |gp| {
                    if gp.mean >= m && gp.mean < 2.0 * m {
                        let phi = bump.eval(dim, &gp.x, t, tf).0;
                        let s = gp.grad[0].hypot(gp.grad[1]);
                        acc += phi * sol.weight_at(gp.weight_cell) * s.powf(sol.p);
                    }
                });
            }
            ConcentrationEntry {
                m,
                value: acc * scale / m,
            }
        })
        .collect())
}

/// Solves two ordered problems on the same schedule and checks `u ≤ v`.
pub fn comparison_solve(lower: &ParabolicProblem, upper: &ParabolicProblem, tol: f64) -> Result<(Solution, Solution)> {
    if lower.grid() != upper.grid() || lower.p != upper.p || lower.mollify_level != upper.mollify_level {
        return Err(invalid("problems", "comparison needs the same grid, p and mollification level"));
    }
    if lower.weight != upper.weight || lower.perturbation != upper.perturbation {
        return Err(invalid("problems", "comparison needs the same operator and perturbation"));
    }
    if !lower.mu.le(&upper.mu, 1e-12)? {
        return Err(invalid("measures", "lower data is not below upper data"));
    }
    if lower.u0.values().iter().zip(upper.u0.values()).any(|(a, b)| a > b) {
        return Err(invalid("u0", "lower initial data is not below upper initial data"));
    }
    let slack = 2.0 * tol;
    let (a, b) = rayon::join(|| solve_parabolic(lower, tol), || solve_parabolic(upper, tol));
    let (a, b) = (a?, b?);
    let c = a.grid().n_cells();
    if let Some((idx, (x, y))) = a
        .u
        .values()
        .iter()
        .zip(b.u.values())
        .enumerate()
        .find(|(_, (x, y))| **x > **y + slack)
    {
        return Err(Error::Invariant(format!(
            "comparison violated at step {} cell {}: {x} > {y}",
            idx / c,
            idx % c
        )));
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(3.0, 2.0).unwrap(), 2.0);
        assert_eq!(truncate(-3.0, 2.0).unwrap(), -2.0);
        assert_eq!(truncate(1.0, 2.0).unwrap(), 1.0);
        assert!(truncate(1.0, 0.0).is_err());
    }

    #[test]
    fn smoothed_truncation_is_c1() {
        let k = 0.7;
        for r in [k, 2.0 * k, -k, -2.0 * k] {
            let (a, da, _) = smoothed_truncation(r - 1e-9, k);
            let (b, db, _) = smoothed_truncation(r + 1e-9, k);
            assert!((a - b).abs() < 1e-8 && (da - db).abs() < 1e-6);
        }
        for r in [0.8, 1.1, -1.3] {
            let e = 1e-6;
            let (a, _, _) = smoothed_truncation(r - e, k);
            let (b, _, _) = smoothed_truncation(r + e, k);
            let (_, d, dd) = smoothed_truncation(r, k);
            assert!(((b - a) / (2.0 * e) - d).abs() < 1e-6);
            let (_, da, _) = smoothed_truncation(r - e, k);
            let (_, db, _) = smoothed_truncation(r + e, k);
            assert!(((db - da) / (2.0 * e) - dd).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = GridSpec::interval(-1.0, 1.0, 20, 0.5, 10).build().unwrap();
        let prob = ParabolicProblem::new(SpaceTimeMeasure::zero(g), Field::zeros(g), 3.0);
        let sol = solve_parabolic(&prob, 1e-10).unwrap();
        assert_eq!(sol.u.norm_inf(), 0.0);
        let fit = levelset_decay_check(&sol, 0.0).unwrap();
        assert_eq!(fit.c_hat, 0.0);
        assert!(fit.exponent.is_none());
        let r = renormalized_residual(&sol, &[1.0], &TestBump::family(&g)).unwrap();
        assert!(r.iter().all(|e| e.residual.abs() < 1e-14));
        let e = energy_concentration(&sol, &[0.5, 1.0], &TestBump::family(&g)[0]).unwrap();
        assert!(e.iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn heat_eigenfunction_decays() {
        let g = GridSpec::interval(-1.0, 1.0, 200, 0.5, 400).build().unwrap();
        let u0 = Field::from_fn(g, |x| (PI * x[0] / 2.0).cos());
        let sol = solve_parabolic(&ParabolicProblem::new(SpaceTimeMeasure::zero(g), u0, 2.0), 1e-10).unwrap();
        let decay = (-(PI / 2.0).powi(2) * 0.5).exp();
        let last = sol.u.step_field(g.steps() - 1);
        let exact = Field::from_fn(g, |x| decay * (PI * x[0] / 2.0).cos());
        let err = Field::linear_combination(1.0, &last, -1.0, &exact).unwrap().norm_l1() / exact.norm_l1();
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn absorption_lowers_and_respects_mass_bound() {
        let g = GridSpec::interval(-1.0, 1.0, 60, 0.5, 50).build().unwrap();
        let mu = SpaceTimeMeasure::dirac(g, [0.0, 0.0], 0.1, 1.0).unwrap();
        let free = ParabolicProblem::new(mu.clone(), Field::zeros(g), 2.0);
        let abs = free.clone().with_perturbation(Perturbation::Absorption {
            g: Nonlinearity::Power { q: 1.5 },
            coef: 1.0,
        });
        let tol = 1e-10;
        let a = solve_parabolic(&free, tol).unwrap();
        let b = solve_parabolic(&abs, tol).unwrap();
        assert!(b.u.values().iter().zip(a.u.values()).all(|(x, y)| *x <= y + 2.0 * tol));
        assert!(b.g_mass() <= abs.data_mass() + 5.0 * tol * g.space_time_volume());
        assert!(b.g_mass() > 0.0);
    }

    #[test]
    fn source_blow_up_is_reported() {
        let g = GridSpec::interval(-1.0, 1.0, 20, 2.0, 40).build().unwrap();
        let u0 = Field::from_fn(g, |x| 50.0 * (PI * x[0] / 2.0).cos());
        let prob = ParabolicProblem::new(SpaceTimeMeasure::zero(g), u0, 2.0).with_perturbation(Perturbation::Source {
            g: Nonlinearity::Exponential { tau: 1.0, beta: 1.0 },
            coef: 1.0,
        });
        let r = solve_parabolic(&prob, 1e-8);
        assert!(matches!(r, Err(Error::BlowUp { .. })), "{r:?}");
    }

    #[test]
    fn comparison_of_identical_data() {
        let g = GridSpec::interval(-1.0, 1.0, 30, 0.2, 10).build().unwrap();
        let u0 = Field::from_fn(g, |x| 1.0 - x[0] * x[0]);
        let prob = ParabolicProblem::new(SpaceTimeMeasure::zero(g), u0, 3.0);
        let (a, b) = comparison_solve(&prob, &prob, 1e-10).unwrap();
        assert_eq!(a.u, b.u);
    }
}
