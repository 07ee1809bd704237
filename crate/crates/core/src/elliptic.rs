//! Weighted p-Laplace Dirichlet problems `−div(a|∇u|^{p−2}∇u) = ω` with
//! measure data, solved by discrete energy minimization, and the two-sided
//! Wolff bound check.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid};
use crate::measures::SpatialMeasure;
use crate::minimize::{minimize, Energy, NewtonOptions, SolveStats};
use crate::potential::wolff_field_2d;

/// Bounded positive coefficient `a(x)` with `Λ₁ ≤ a ≤ Λ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub values: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Weight {
    pub fn new(values: Vec<f64>, lambda1: f64, lambda2: f64) -> Result<Self> {
        let w = Self { values, lambda1, lambda2 };
        w.check()?;
        Ok(w)
    }

    pub fn uniform(grid: &Grid, a: f64) -> Result<Self> {
        Self::new(vec![a; grid.n_cells()], a, a)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda2 >= self.lambda1) {
            return Err(invalid("weight", format!("need 0 < Λ₁ ≤ Λ₂, got {} and {}", self.lambda1, self.lambda2)));
        }
        let tol = 1e-12 * self.lambda2;
        if let Some(v) = self
            .values
            .iter()
            .find(|&&v| !(v >= self.lambda1 - tol && v <= self.lambda2 + tol))
        {
            return Err(invalid("weight", format!("value {v} outside [Λ₁, Λ₂]")));
        }
        Ok(())
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        self.check()?;
        if self.values.len() != grid.n_cells() {
            return Err(invalid("weight", format!("expected {} values, got {}", grid.n_cells(), self.values.len())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticProblem {
    pub omega: SpatialMeasure,
    pub p: f64,
    pub weight: Option<Weight>,
    /// Mollification level `n` (radius `max(2h, D/n)`); `None` uses `2h`.
    pub mollify_level: Option<usize>,
}

impl EllipticProblem {
    pub fn new(omega: SpatialMeasure, p: f64) -> Self {
        Self {
            omega,
            p,
            weight: None,
            mollify_level: None,
        }
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn grid(&self) -> &Grid {
        self.omega.grid()
    }

    /// Right-hand side density after mollification.
    pub fn source_density(&self) -> Vec<f64> {
        let n = self.mollify_level.unwrap_or(usize::MAX);
        self.omega.mollify(n).density().to_vec()
    }

    fn validate(&self, tol: f64) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(invalid("p", format!("need p > 1, got {}", self.p)));
        }
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("need tol > 0, got {tol}")));
        }
        if let Some(w) = &self.weight {
            w.check_grid(self.grid())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSolution {
    pub u: Field,
    pub stats: SolveStats,
}

pub fn solve_elliptic(prob: &EllipticProblem, tol: f64) -> Result<Field> {
    solve_elliptic_detailed(prob, tol).map(|s| s.u)
}

/// Like [`solve_elliptic`] but also returns iteration statistics.
pub fn solve_elliptic_detailed(prob: &EllipticProblem, tol: f64) -> Result<EllipticSolution> {
    prob.validate(tol)?;
    let grid = *prob.grid();
    let rhs = prob.source_density();
    let n = grid.n_cells();
    let opts = NewtonOptions {
        tol,
        ..Default::default()
    };
    let weight = prob.weight.as_ref().map(|w| w.values.as_slice());
    let mut u = vec![0.0; n];
    if rhs.iter().all(|&v| v == 0.0) {
        let energy = energy(&grid, 2.0, weight, &rhs);
        let stats = minimize(&energy, &mut u, &opts)?;
        return Ok(EllipticSolution { u: Field::new(grid, u)?, stats });
    }
    if prob.p != 2.0 {
        // the linear problem, rescaled along its ray, is a good start
        let lin = energy(&grid, 2.0, weight, &rhs);
        minimize(&lin, &mut u, &NewtonOptions { tol: tol.max(1e-6), ..opts })?;
        let target = energy(&grid, prob.p, weight, &rhs);
        let c = ray_minimizer(&target, &u, prob.p);
        u.iter_mut().for_each(|v| *v *= c);
    }
    let target = energy(&grid, prob.p, weight, &rhs);
    let stats = minimize(&target, &mut u, &opts)?;
    Ok(EllipticSolution { u: Field::new(grid, u)?, stats })
}

fn energy<'a>(grid: &'a Grid, p: f64, weight: Option<&'a [f64]>, rhs: &'a [f64]) -> Energy<'a> {
    Energy {
        grid,
        p,
        weight,
        rhs,
        mass: 0.0,
        anchor: None,
        absorption: None,
    }
}

/// `argmin_c J(c v)` for `J = A/p - B` homogeneous of degree `p` plus linear.
fn ray_minimizer(e: &Energy<'_>, v: &[f64], p: f64) -> f64 {
    let b: f64 = e.rhs.iter().zip(v).map(|(f, x)| f * x).sum::<f64>() * e.grid.cell_volume();
    let a = p * (e.value(v) + b);
    if a > 0.0 && b > 0.0 {
        (b / a).powf(1.0 / (p - 1.0))
    } else {
        1.0
    }
}

/// Outcome of the two-sided Wolff bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncaCheck {
    pub holds: bool,
    pub kappa: f64,
}

/// Potentials below this are treated as zero.
pub const WOLFF_FLOOR: f64 = 1e-12;

/// `κ̂ = max |u| / W^{2D}_{1,p}[ω^±]`, using `ω⁺` where `u > 0` and `ω⁻`
/// where `u < 0`.
pub fn check_enca(u: &Field, omega: &SpatialMeasure, p: f64, kappa_cap: f64) -> Result<EncaCheck> {
    if !u.grid().same_shape(omega.grid()) {
        return Err(invalid("grid", "solution and measure live on different grids"));
    }
    let plus = omega.positive_part();
    let minus = omega.negative_part();
    let w_plus = if plus.is_zero() { None } else { Some(wolff_field_2d(&plus, p)?) };
    let w_minus = if minus.is_zero() { None } else { Some(wolff_field_2d(&minus, p)?) };
    let mut kappa: f64 = 0.0;
    for (k, &v) in u.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let w = if v > 0.0 { &w_plus } else { &w_minus };
        let w = w.as_ref().map_or(0.0, |f| f.values()[k]);
        kappa = kappa.max(v.abs() / w.max(WOLFF_FLOOR));
    }
    Ok(EncaCheck {
        holds: kappa <= kappa_cap,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn line(cells: usize) -> Grid {
        GridSpec::interval(-1.0, 1.0, cells, 1.0, 1).build().unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = line(20);
        let u = solve_elliptic(&EllipticProblem::new(SpatialMeasure::zero(g), 3.0), 1e-10).unwrap();
        assert_eq!(u.norm_inf(), 0.0);
        let c = check_enca(&u, &SpatialMeasure::zero(g), 3.0, 1.0).unwrap();
        assert_eq!(c.kappa, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn green_function_p2() {
        let g = line(200);
        let om = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        let u = solve_elliptic(&EllipticProblem::new(om, 2.0), 1e-9).unwrap();
        let err = g
            .centers()
            .zip(u.values())
            .map(|(x, v)| (v - (1.0 - x[0].abs()) / 2.0).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2.0 * g.h(), "err {err}");
    }

    #[test]
    fn green_function_p3() {
        let g = line(200);
        let om = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        let sol = solve_elliptic_detailed(&EllipticProblem::new(om, 3.0), 1e-9).unwrap();
        let err = g
            .centers()
            .zip(sol.u.values())
            .map(|(x, v)| (v - (1.0 - x[0].abs()) / 2f64.sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 3.0 * g.h(), "err {err}");
        assert!(sol.stats.energies.windows(2).all(|w| w[1] < w[0] + 1e-14 * w[0].abs()));
    }

    #[test]
    fn singular_p_converges() {
        let g = GridSpec::rectangle([[0.0, 1.0], [0.0, 1.0]], [16, 16], 1.0, 1).build().unwrap();
        let om = SpatialMeasure::from_density(&Field::from_fn(g, |_| 1.0));
        let u = solve_elliptic(&EllipticProblem::new(om, 1.6), 1e-7).unwrap();
        assert!(u.min() >= -1e-7 && u.max() > 0.0);
    }

    #[test]
    fn enca_dirac_p2() {
        let g = line(100);
        let om = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        let u = solve_elliptic(&EllipticProblem::new(om.clone(), 2.0), 1e-9).unwrap();
        let c = check_enca(&u, &om, 2.0, 1.0).unwrap();
        assert!((c.kappa - 0.125).abs() < 0.01, "{}", c.kappa);
        let om2 = om.scale(2.0);
        let u2 = solve_elliptic(&EllipticProblem::new(om2.clone(), 2.0), 1e-9).unwrap();
        let c2 = check_enca(&u2, &om2, 2.0, 1.0).unwrap();
        assert!((c.kappa - c2.kappa).abs() < 1e-6);
    }

    #[test]
    fn weighted_problem_scales() {
        let g = line(50);
        let om = SpatialMeasure::dirac(g, [0.1, 0.0], 1.0).unwrap();
        let u1 = solve_elliptic(&EllipticProblem::new(om.clone(), 2.0), 1e-10).unwrap();
        let w = Weight::uniform(&g, 2.0).unwrap();
        let u2 = solve_elliptic(&EllipticProblem::new(om, 2.0).with_weight(w), 1e-10).unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            assert!((a - 2.0 * b).abs() < 1e-8);
        }
        assert!(Weight::new(vec![1.0; 3], 2.0, 1.0).is_err());
    }
}
