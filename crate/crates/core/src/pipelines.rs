//! Existence constructions run numerically: approximation sequences for
//! absorption problems, monotone iterations for source problems, and the
//! smallness constants that gate them.

use serde::{Deserialize, Serialize};

use crate::elliptic::{check_enca, solve_elliptic, EllipticProblem};
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid, SpaceTimeField};
use crate::measures::{truncate_profile, SpaceTimeMeasure, SpatialMeasure};
use crate::nonlinearity::{truncated_exp_unchecked, Nonlinearity};
use crate::parabolic::{solve_parabolic, ParabolicProblem, Perturbation, Solution};
use crate::potential::{
    delta0, dirac_admissible, exp_quadrature, exponents, maximal_norm_2d, subcritical_check, unit_ball_volume, wolff,
    wolff_field_2d, ExponentReport, RadialMeasure, RadialQuadrature, EXP_OVERFLOW_GUARD,
};

pub use crate::nonlinearity::truncated_exp as e_function;

/// Aggregated empirical and closed-form constants of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
}

impl ConstantsReport {
    pub fn with_smallness(mut self, c: &SmallnessConstants) -> Self {
        self.beta_p = Some(c.beta_p);
        self.a1 = Some(c.a1);
        self.a2 = Some(c.a2);
        self.lambda0 = Some(c.lambda0);
        self.b0 = Some(c.b0);
        self.c_p = Some(c.c_p);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessConstants {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub k: f64,
    pub d: f64,
    pub m_hat: f64,
    pub beta_p: f64,
    pub a1: f64,
    pub a2: f64,
    pub lambda0: f64,
    pub b0: f64,
    pub c_p: f64,
}

/// `β_p = max(1, 3^{(2−p)/(p−1)})`.
pub fn beta_p(p: f64) -> f64 {
    3f64.powf((2.0 - p) / (p - 1.0)).max(1.0)
}

/// `c_p = 2 max(1, 2^{(2−p)/(p−1)})`.
pub fn c_p(p: f64) -> f64 {
    2.0 * 2f64.powf((2.0 - p) / (p - 1.0)).max(1.0)
}

pub fn smallness_constants(n: usize, p: f64, q: f64, k: f64, d: f64, m_hat: f64) -> Result<SmallnessConstants> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    if !(q > p - 1.0) {
        return Err(invalid("q", format!("need q > p - 1, got q={q}, p={p}")));
    }
    if !(k > 0.0 && d > 0.0 && m_hat > 0.0) || n == 0 {
        return Err(invalid("constants", "need N ≥ 1 and K, D, M̂ > 0"));
    }
    let bp = beta_p(p);
    let a1 = (2f64.powf(q - 1.0) * (2.0 * bp).powf(q) * k.powf(q)).powf(1.0 / (p - 1.0));
    let pp = p / (p - 1.0);
    let a2 = bp * k * 2f64.powf(q / (p - 1.0)) * unit_ball_volume(n).powf(1.0 / (p - 1.0)) / pp * (2.0 * d).powf(pp);
    let gap = q - p + 1.0;
    Ok(SmallnessConstants {
        n,
        p,
        q,
        k,
        d,
        m_hat,
        beta_p: bp,
        a1,
        a2,
        lambda0: (a1 * m_hat).powf(-(p - 1.0) * (p - 1.0) / gap),
        b0: a2.powf(-(p - 1.0) / gap),
        c_p: c_p(p),
    })
}

/// Potentials at or below this are excluded from ratio estimates.
pub const RATIO_FLOOR: f64 = 1e-12;

fn composition_exponent(p: f64, q: f64) -> Result<f64> {
    if !(q > p - 1.0) {
        return Err(invalid("q", format!("need q > p - 1, got q={q}, p={p}")));
    }
    Ok((q - p + 1.0) / ((p - 1.0) * (p - 1.0)))
}

/// `M̂ = max W[(W[ω])^q] / (λ^{(q−p+1)/(p−1)²} W[ω])` over grid cells, with
/// `W = W^{2D}_{1,p}` and `quad` used for both potentials.
pub fn wolff_composition_check(omega: &SpatialMeasure, p: f64, q: f64, lambda: f64, nodes: usize) -> Result<f64> {
    let e = composition_exponent(p, q)?;
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "λ must be positive"));
    }
    if omega.is_zero() {
        return Ok(0.0);
    }
    let g = *omega.grid();
    let quad = RadialQuadrature::for_grid(&g, 2.0 * g.diameter()).with_nodes(nodes);
    let w = crate::potential::wolff_field(omega, p, &quad)?;
    let inner = SpatialMeasure::from_density(&w.field.map(|v| v.powf(q)));
    let outer = crate::potential::wolff_field(&inner, p, &quad)?;
    let scale = lambda.powf(e);
    Ok(w.values()
        .iter()
        .zip(outer.values())
        .filter(|(w, _)| **w > RATIO_FLOOR)
        .map(|(w, o)| o / (scale * w))
        .fold(0.0, f64::max))
}

/// The composition ratio for `ω = m δ₀` in `R^N` restricted to the ball
/// `Ω = B(0, D/2)`, using the closed-form inner potential.
///
/// The maximum is taken over `samples` radii in `(0, D/2)`; `nodes` sets the
/// quadrature resolution of the outer potential.
#[allow(clippy::too_many_arguments)]
pub fn wolff_composition_radial(
    dim: usize,
    mass: f64,
    p: f64,
    q: f64,
    lambda: f64,
    diameter: f64,
    nodes: usize,
    samples: usize,
) -> Result<f64> {
    let e = composition_exponent(p, q)?;
    if !(mass > 0.0 && lambda > 0.0 && diameter > 0.0) || samples == 0 {
        return Err(invalid("composition", "need positive mass, λ, diameter and samples"));
    }
    let r_max = 2.0 * diameter;
    let radius = 0.5 * diameter;
    let inner = move |rho: f64| dirac_wolff(dim, mass, p, r_max, rho);
    let f = RadialMeasure::with_density(dim, radius, move |rho| inner(rho).powf(q)).with_panels(nodes);
    let quad = RadialQuadrature {
        r_min: 1e-4 * radius,
        r_max,
        nodes,
    };
    let scale = lambda.powf(e);
    let mut best: f64 = 0.0;
    for i in 0..samples {
        let rho = radius * (i as f64 + 0.5) / samples as f64;
        let outer = wolff(&f, p, &quad, &[rho, 0.0])?;
        best = best.max(outer / (scale * inner(rho)));
    }
    Ok(best)
}

/// `W^R_{1,p}[m δ₀]` at distance `ρ` in `R^N`.
pub fn dirac_wolff(dim: usize, mass: f64, p: f64, r_max: f64, rho: f64) -> f64 {
    if rho >= r_max {
        return 0.0;
    }
    let e = (p - dim as f64) / (p - 1.0);
    let integral = if e.abs() < 1e-14 {
        (r_max / rho).ln()
    } else {
        (r_max.powf(e) - rho.powf(e)) / e
    };
    mass.powf(1.0 / (p - 1.0)) * integral
}

/// One discrete induction step: `K W[(v⁺)^q + ω] + b`.
pub fn envelope_map(v: &Field, omega: &SpatialMeasure, p: f64, q: f64, k: f64, b: f64) -> Result<Field> {
    let src = SpatialMeasure::from_density(&v.map(|x| x.max(0.0).powf(q)));
    let w = wolff_field_2d(&src.add(omega)?, p)?;
    Ok(w.field.map(|x| k * x + b))
}

/// `2β_p K W[ω] + 2b`.
pub fn power_envelope(omega: &SpatialMeasure, p: f64, k: f64, b: f64) -> Result<Field> {
    let w = wolff_field_2d(omega, p)?;
    let c = 2.0 * beta_p(p) * k;
    Ok(w.field.map(|x| c * x + 2.0 * b))
}

/// Per-level record of an approximation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    /// `∫_Q |G(u_n)|`.
    pub g_mass: f64,
    /// `|μ_n|(Q) + ‖u₀‖₁`.
    pub bound: f64,
    /// `(L, ∫_{|u_n| ≥ L} |G(u_n)|)`.
    pub tail: Vec<(f64, f64)>,
    /// L¹ distance to the previous level.
    pub distance: Option<f64>,
}

impl LevelReport {
    pub fn within(&self, slack: f64) -> bool {
        self.g_mass <= self.bound * (1.0 + slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub levels: Vec<LevelReport>,
    pub solution: Solution,
}

impl PipelineRun {
    /// Consecutive-level distances are nonincreasing.
    pub fn cauchy_trend(&self) -> bool {
        let d: Vec<f64> = self.levels.iter().filter_map(|l| l.distance).collect();
        d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
    }
}

fn tail_table(sol: &Solution) -> Vec<(f64, f64)> {
    let sup = sol.u.norm_inf();
    let g = sol.grid();
    let scale = g.cell_volume() * g.tau();
    let mut out = Vec::new();
    let mut level = 1.0;
    loop {
        let mass: f64 = sol
            .u
            .values()
            .iter()
            .filter(|v| v.abs() >= level)
            .map(|&v| match sol.perturbation {
                Perturbation::Absorption { g, coef } | Perturbation::Source { g, coef } => coef * g.value(v).abs(),
                Perturbation::None => 0.0,
            })
            .sum();
        out.push((level, mass * scale));
        if level > sup || out.len() >= 4 && level > 2.0 * sup {
            break;
        }
        level *= 2.0;
    }
    out
}

fn level_report(level: usize, sol: &Solution, bound: f64, prev: Option<&Solution>) -> Result<LevelReport> {
    Ok(LevelReport {
        level,
        g_mass: sol.g_mass(),
        bound,
        tail: tail_table(sol),
        distance: prev.map(|p| p.u.l1_distance(&sol.u)).transpose()?,
    })
}

/// Subcritical absorption: solves at each mollification level and records
/// mass bounds, tail masses and Cauchy distances.
pub fn subcritical_absorption(prob: &ParabolicProblem, levels: &[usize], tol: f64) -> Result<PipelineRun> {
    let Perturbation::Absorption { g, .. } = prob.perturbation else {
        return Err(invalid("perturbation", "subcritical absorption needs an absorption term"));
    };
    let grid = prob.grid();
    if !subcritical_check(&g, grid.dim(), prob.p)? {
        return Err(invalid("nonlinearity", "absorption is not subcritical"));
    }
    if levels.is_empty() {
        return Err(invalid("levels", "need at least one level"));
    }
    let sols: Vec<Solution> = {
        use rayon::prelude::*;
        levels
            .par_iter()
            .map(|&n| {
                let mut pr = prob.clone();
                pr.mollify_level = Some(n);
                solve_parabolic(&pr, tol)
            })
            .collect::<Result<_>>()?
    };
    let bound = prob.data_mass();
    let mut reports = Vec::with_capacity(levels.len());
    for (i, (&n, sol)) in levels.iter().zip(&sols).enumerate() {
        reports.push(level_report(n, sol, bound, i.checked_sub(1).map(|j| &sols[j]))?);
    }
    Ok(PipelineRun {
        levels: reports,
        solution: sols.into_iter().last().expect("nonempty"),
    })
}

/// Scalar model `k_{n+1} = c (k_n^{1+e} + 1)` of the source recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowTrace {
    pub values: Vec<f64>,
    pub bounded: bool,
}

pub fn shadow_recursion(c: f64, e: f64, k0: f64, max_iter: usize) -> ShadowTrace {
    let mut values = vec![k0];
    let mut k = k0;
    for _ in 0..max_iter {
        let next = c * (k.powf(1.0 + e) + 1.0);
        values.push(next);
        if !next.is_finite() || next > 1e6 {
            return ShadowTrace { values, bounded: false };
        }
        if (next - k).abs() <= 1e-15 * next.abs().max(1.0) {
            return ShadowTrace { values, bounded: true };
        }
        k = next;
    }
    ShadowTrace { values, bounded: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationStatus {
    Converged,
    BlowUp,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub m: usize,
    pub sup: f64,
    pub increment: f64,
    /// `min_x (envelope − sup_t u_m)`; `NaN` when no envelope applies.
    pub margin: f64,
    /// Auxiliary per-iteration quantity (surrogate `K_n` for the
    /// subcritical source iteration).
    pub aux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub rows: Vec<IterationRow>,
    pub status: IterationStatus,
    /// Iteration index at which blow-up was detected.
    pub blow_up_at: Option<usize>,
    pub monotone: bool,
    pub gate_passed: Option<bool>,
}

impl IterationTrace {
    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    /// One row per iterate; the iterate at which blow-up was detected is
    /// marked `blow_up`, with a placeholder row if it never completed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,sup,increment,margin,status\n");
        for r in &self.rows {
            let status = if Some(r.m) == self.blow_up_at { "blow_up" } else { "ok" };
            s.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{status}\n", r.m, r.sup, r.increment, r.margin));
        }
        if let Some(m) = self.blow_up_at {
            if self.rows.iter().all(|r| r.m != m) {
                s.push_str(&format!("{m},NaN,NaN,NaN,blow_up\n"));
            }
        }
        s
    }
}

struct Iteration<'a> {
    base: &'a ParabolicProblem,
    tol: f64,
    increment_tol: f64,
    m_max: usize,
    envelope: Option<&'a Field>,
    blow_up_sup: f64,
}

impl Iteration<'_> {
    /// Runs `u_{m+1} = S(data + source(u_m))` from `u_1 = S(data)`.
    fn run(&self, source: impl Fn(f64) -> f64, mut aux: impl FnMut(&Solution) -> f64) -> Result<(IterationTrace, Option<Solution>)> {
        let mut rows = Vec::new();
        let mut prev: Option<Solution> = None;
        let mut monotone = true;
        let slack = 2.0 * self.tol;
        for m in 1..=self.m_max {
            let mut pr = self.base.clone();
            if let Some(u) = &prev {
                let forcing = u.u.map(&source);
                if forcing.values().iter().any(|v| !v.is_finite()) {
                    return Ok((self.finish(rows, IterationStatus::BlowUp, Some(m), monotone), prev));
                }
                pr.forcing = Some(match &pr.forcing {
                    Some(f) => SpaceTimeField::new(*f.grid(), f.values().iter().zip(forcing.values()).map(|(a, b)| a + b).collect())?,
                    None => forcing,
                });
            }
            let sol = match solve_parabolic(&pr, self.tol) {
                Ok(s) => s,
                Err(Error::BlowUp { .. }) | Err(Error::NonConvergence { .. }) | Err(Error::Invalid { what: "field", .. }) => {
                    return Ok((self.finish(rows, IterationStatus::BlowUp, Some(m), monotone), prev));
                }
                Err(e) => return Err(e),
            };
            let sup = sol.u.norm_inf();
            let increment = match &prev {
                Some(p) => {
                    monotone &= p.u.values().iter().zip(sol.u.values()).all(|(a, b)| *a <= b + slack);
                    p.u.l1_distance(&sol.u)?
                }
                None => sol.u.norm_l1(),
            };
            let margin = self.envelope.map_or(f64::NAN, |e| {
                let bar = sol.u.sup_in_time();
                e.values().iter().zip(bar.values()).map(|(e, u)| e - u).fold(f64::INFINITY, f64::min)
            });
            rows.push(IterationRow {
                m,
                sup,
                increment,
                margin,
                aux: aux(&sol),
            });
            if !sup.is_finite() || sup > self.blow_up_sup {
                return Ok((self.finish(rows, IterationStatus::BlowUp, Some(m), monotone), Some(sol)));
            }
            let done = m > 1 && increment < self.increment_tol;
            prev = Some(sol);
            if done {
                return Ok((self.finish(rows, IterationStatus::Converged, None, monotone), prev));
            }
        }
        Ok((self.finish(rows, IterationStatus::Cap, None, monotone), prev))
    }

    fn finish(&self, rows: Vec<IterationRow>, status: IterationStatus, at: Option<usize>, monotone: bool) -> IterationTrace {
        IterationTrace {
            rows,
            status,
            blow_up_at: at,
            monotone,
            gate_passed: None,
        }
    }
}

/// Default L¹ increment below which an iteration is converged.
pub const INCREMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRun {
    pub trace: IterationTrace,
    pub solution: Option<Solution>,
}

/// Subcritical source: `u_{n+1}` solves the problem with extra data
/// `λ G(u_n)`; `aux` in the trace is the surrogate
/// `(‖u₀‖₁ + |μ|(Q) + λ‖G(u_n)‖₁)^{(p+N)/N}`.
pub fn subcritical_source(
    prob: &ParabolicProblem,
    g: Nonlinearity,
    lambda: f64,
    eps_budget: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SourceRun> {
    let grid = *prob.grid();
    if !subcritical_check(&g, grid.dim(), prob.p)? {
        return Err(invalid("nonlinearity", "source is not subcritical"));
    }
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", "λ must be nonnegative"));
    }
    let data = prob.data_mass();
    if lambda + data > eps_budget {
        return Err(invalid("budget", format!("λ + data mass = {} exceeds ε = {eps_budget}", lambda + data)));
    }
    let expo = (prob.p + grid.dim() as f64) / grid.dim() as f64;
    let it = Iteration {
        base: prob,
        tol,
        increment_tol: INCREMENT_TOL,
        m_max: if lambda == 0.0 { 1 } else { max_iter },
        envelope: None,
        blow_up_sup: f64::INFINITY,
    };
    let surrogate = |s: &Solution| (data + lambda * s.u.map(|v| g.value(v).abs()).integrate()).powf(expo);
    let (mut trace, solution) = it.run(|v| lambda * g.value(v), surrogate)?;
    if lambda == 0.0 && trace.status == IterationStatus::Cap {
        trace.status = IterationStatus::Converged;
    }
    // blow-up: surrogate doubles within a window of two iterations
    if trace.status != IterationStatus::Converged {
        if let Some(i) = (2..trace.rows.len()).find(|&i| trace.rows[i].aux > 2.0 * trace.rows[i - 2].aux) {
            trace.status = IterationStatus::BlowUp;
            trace.blow_up_at = Some(trace.rows[i].m);
        }
    }
    Ok(SourceRun { trace, solution })
}

/// Data of the general absorption construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionData {
    pub mu: SpaceTimeMeasure,
    pub omega: SpatialMeasure,
    /// Time profile `F ≥ 0`, one value per step.
    pub profile: Vec<f64>,
    pub f: Option<SpaceTimeField>,
    pub u0: Field,
    pub p: f64,
    pub g: Nonlinearity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub kappa: f64,
    /// `min (κ̂ W[γ] + ‖u₀‖∞ − |u|)` over the space-time grid.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionRun {
    pub run: PipelineRun,
    pub bound: Option<BoundCheck>,
}

/// `(μ_{1,n}, μ_{2,n})` with `ω_n = ω χ_{Ω_n}` and `F_n = T_n(χ_{(1/n, T−1/n)} F)`.
pub fn approximating_pair(data: &AbsorptionData, n: usize) -> Result<(SpaceTimeMeasure, SpaceTimeMeasure)> {
    let grid = *data.omega.grid();
    let omega_n = data.omega.restrict_interior(n);
    let f_n = truncate_profile(&grid, &data.profile, n);
    let cap = SpaceTimeMeasure::product(&omega_n, &f_n)?;
    let parts = |pos: bool| -> Result<SpaceTimeMeasure> {
        let m = if pos { data.mu.positive_part() } else { data.mu.negative_part() };
        let mut out = m.inf(&cap)?;
        if let Some(f) = &data.f {
            let fp = f.map(|v| if pos { v.max(0.0) } else { (-v).max(0.0) });
            let t = SpaceTimeMeasure::from_density(&fp).truncate_restrict(n)?;
            out = out.add(&t)?;
        }
        Ok(out)
    };
    Ok((parts(true)?, parts(false)?))
}

/// General absorption pipeline with the monotone approximations
/// `μ_{i,n}`; returns the finest-level solution.
pub fn absorption_general(data: &AbsorptionData, levels: &[usize], tol: f64) -> Result<AbsorptionRun> {
    let grid = *data.omega.grid();
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("levels", "need a nonempty increasing list of levels"));
    }
    if !data.omega.is_nonnegative() {
        return Err(invalid("omega", "ω must be nonnegative"));
    }
    if data.profile.len() != grid.steps() || data.profile.iter().any(|&v| !(v >= 0.0)) {
        return Err(invalid("profile", "F needs one nonnegative value per step"));
    }
    data.g.validate()?;
    let envelope = SpaceTimeMeasure::product(&data.omega, &data.profile)?;
    if !data.mu.abs().le(&envelope, 1e-12)? {
        return Err(invalid("mu", "|μ| ≤ ω⊗F fails"));
    }
    if let Nonlinearity::Power { q } = data.g {
        if data.omega.has_atoms() && !dirac_admissible(grid.dim(), data.p, q)? {
            return Err(invalid("omega", "atoms of ω charge sets of zero capacity for this q"));
        }
    }
    let mut pairs: Vec<(SpaceTimeMeasure, SpaceTimeMeasure)> = Vec::with_capacity(levels.len());
    for &n in levels {
        let pair = approximating_pair(data, n)?;
        if let Some((a, b)) = pairs.last() {
            if !a.le(&pair.0, 1e-12)? || !b.le(&pair.1, 1e-12)? {
                return Err(Error::Invariant(format!("approximating measures not nondecreasing at level {n}")));
            }
        }
        pairs.push(pair);
    }
    let problems: Vec<ParabolicProblem> = pairs
        .iter()
        .map(|(a, b)| -> Result<ParabolicProblem> {
            Ok(ParabolicProblem::new(a.sub(b)?, data.u0.clone(), data.p)
                .with_perturbation(Perturbation::Absorption { g: data.g, coef: 1.0 }))
        })
        .collect::<Result<_>>()?;
    let sols: Vec<Solution> = {
        use rayon::prelude::*;
        problems.par_iter().map(|pr| solve_parabolic(pr, tol)).collect::<Result<_>>()?
    };
    let mut reports = Vec::new();
    for (i, ((&n, sol), pr)) in levels.iter().zip(&sols).zip(&problems).enumerate() {
        reports.push(level_report(n, sol, pr.data_mass(), i.checked_sub(1).map(|j| &sols[j]))?);
    }
    let solution = sols.into_iter().last().expect("nonempty");
    let bound = bound_check(data, &solution, tol)?;
    Ok(AbsorptionRun {
        run: PipelineRun {
            levels: reports,
            solution,
        },
        bound,
    })
}

/// `|u| ≤ κ̂ W[γ] + ‖u₀‖∞` with `γ = ‖F‖∞ ω + ‖f‖∞ dx`; `κ̂` comes from
/// the elliptic problem with data `γ`.
fn bound_check(data: &AbsorptionData, sol: &Solution, tol: f64) -> Result<Option<BoundCheck>> {
    let grid = *data.omega.grid();
    let f_max = data.f.as_ref().map_or(0.0, |f| f.norm_inf());
    let gamma = data
        .omega
        .scale(data.profile.iter().copied().fold(0.0, f64::max))
        .add(&SpatialMeasure::from_density(&Field::from_fn(grid, |_| f_max)))?;
    if gamma.is_zero() {
        return Ok(None);
    }
    let u_gamma = solve_elliptic(&EllipticProblem::new(gamma.clone(), data.p), tol)?;
    let kappa = check_enca(&u_gamma, &gamma, data.p, f64::INFINITY)?.kappa;
    let w = wolff_field_2d(&gamma, data.p)?;
    let u0 = data.u0.norm_inf();
    let c = grid.n_cells();
    let margin = sol
        .u
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| kappa * w.values()[i % c] + u0 - v.abs())
        .fold(f64::INFINITY, f64::min);
    Ok(Some(BoundCheck {
        kappa,
        margin,
        holds: margin >= -2.0 * tol,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExpGateMode {
    /// `‖M^{(p−1)/β′}[ω]‖∞ < M₀` with `M₀ = (δ₀/(τ κ̂^β))^{(p−1)/β}`.
    Smallness { kappa: f64 },
    /// `M^{(p−1)/β₀′}[ω]` bounded for some `β₀ > β`.
    Integrable { beta0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpGateReport {
    pub eta: f64,
    pub norm: f64,
    pub threshold: Option<f64>,
    pub delta0: Option<f64>,
    pub passed: bool,
}

/// Admissibility of `ω` for the exponential absorption `(e^{τ|u|^β}−1) sign u`.
pub fn exponential_absorption_gate(
    omega: &SpatialMeasure,
    p: f64,
    beta: f64,
    tau: f64,
    mode: ExpGateMode,
) -> Result<ExpGateReport> {
    if !(beta > 1.0) {
        return Err(invalid("beta", format!("need β > 1, got {beta}")));
    }
    if !(tau > 0.0) {
        return Err(invalid("tau", format!("need τ > 0, got {tau}")));
    }
    let eta_of = |b: f64| (p - 1.0) * (b - 1.0) / b;
    match mode {
        ExpGateMode::Smallness { kappa } => {
            if !(kappa > 0.0) {
                return Err(invalid("kappa", "κ̂ must be positive"));
            }
            let eta = eta_of(beta);
            let norm = if omega.is_zero() { 0.0 } else { maximal_norm_2d(omega, p, eta)? };
            let d0 = delta0(p, beta)?;
            let m0 = (d0 / (tau * kappa.powf(beta))).powf((p - 1.0) / beta);
            Ok(ExpGateReport {
                eta,
                norm,
                threshold: Some(m0),
                delta0: Some(d0),
                passed: norm < m0,
            })
        }
        ExpGateMode::Integrable { beta0 } => {
            if !(beta0 > beta) {
                return Err(invalid("beta0", format!("need β₀ > β, got β₀={beta0}, β={beta}")));
            }
            let eta = eta_of(beta0);
            let norm = if omega.is_zero() { 0.0 } else { maximal_norm_2d(omega, p, eta)? };
            Ok(ExpGateReport {
                eta,
                norm,
                threshold: None,
                delta0: None,
                passed: norm.is_finite(),
            })
        }
    }
}

/// Gate followed, on success, by the general absorption pipeline with
/// `G(u) = (e^{τ|u|^β} − 1) sign u`.
pub fn exponential_absorption(
    data: &AbsorptionData,
    beta: f64,
    tau: f64,
    mode: ExpGateMode,
    levels: &[usize],
    tol: f64,
) -> Result<(ExpGateReport, Option<AbsorptionRun>)> {
    let gate = exponential_absorption_gate(&data.omega, data.p, beta, tau, mode)?;
    if let ExpGateMode::Smallness { .. } = mode {
        if data.profile.iter().any(|&f| f > 1.0) {
            return Err(invalid("profile", "mode (i) needs ‖F‖∞ ≤ 1"));
        }
    }
    if !gate.passed {
        return Ok((gate, None));
    }
    let mut d = data.clone();
    d.g = Nonlinearity::Exponential { tau, beta };
    Ok((gate, Some(absorption_general(&d, levels, tol)?)))
}

/// Checks `μ ≤ ω ⊗ χ_{(0,T)}` with `ω ≥ 0`.
fn check_dominated(mu: &SpaceTimeMeasure, omega: &SpatialMeasure) -> Result<()> {
    if !omega.is_nonnegative() || !mu.is_nonnegative() {
        return Err(invalid("measure", "source iterations need nonnegative μ and ω"));
    }
    let g = omega.grid();
    let env = SpaceTimeMeasure::product(omega, &vec![1.0; g.steps()])?;
    if !mu.le(&env, 1e-12)? {
        return Err(invalid("mu", "μ ≤ ω⊗χ_(0,T) fails"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSourceRun {
    pub trace: IterationTrace,
    pub solution: Option<Solution>,
    pub envelope: Field,
    /// `min (C W[ω] + 2‖u₀‖∞ − u)` for the last iterate, `C = 2β_p κ̂`.
    pub final_margin: f64,
}

/// Monotone iteration `u_{m+1}` solving the problem with data `u_m^q + μ`.
///
/// `lambda` is the caller's constant in `ω(E) ≤ λ Cap(E)`; the gate
/// `λ ≤ λ₀, ‖u₀‖∞ ≤ b₀` is recorded but the iteration always runs, with
/// margins against `2β_p κ̂ W[ω] + 2‖u₀‖∞` and a blow-up tripwire at ten
/// times that envelope.
#[allow(clippy::too_many_arguments)]
pub fn iterate_power_source(
    omega: &SpatialMeasure,
    mu: &SpaceTimeMeasure,
    u0: &Field,
    p: f64,
    constants: &SmallnessConstants,
    lambda: f64,
    m_max: usize,
    tol: f64,
) -> Result<PowerSourceRun> {
    check_dominated(mu, omega)?;
    if u0.min() < 0.0 {
        return Err(invalid("u0", "initial data must be nonnegative"));
    }
    let q = constants.q;
    let b = u0.norm_inf();
    let envelope = power_envelope(omega, p, constants.k, b)?;
    let gate = lambda <= constants.lambda0 && b <= constants.b0;
    let base = ParabolicProblem::new(mu.clone(), u0.clone(), p);
    let it = Iteration {
        base: &base,
        tol,
        increment_tol: INCREMENT_TOL,
        m_max,
        envelope: Some(&envelope),
        blow_up_sup: 10.0 * envelope.max().max(tol),
    };
    let (mut trace, solution) = it.run(|v| v.max(0.0).powf(q), |_| 0.0)?;
    trace.gate_passed = Some(gate);
    let final_margin = trace.rows.last().map_or(f64::NAN, |r| r.margin);
    Ok(PowerSourceRun {
        trace,
        solution,
        envelope,
        final_margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpSourceSettings {
    pub beta: f64,
    pub tau: f64,
    pub l: u32,
    /// Envelope constant `K` (empirical `κ̂`).
    pub kappa: f64,
    pub b0: f64,
    /// Threshold for `‖M^{(p−1)(β−1)/β}[ω]‖∞`; defaults to the absorption
    /// formula when `β > 1` and is otherwise unchecked.
    pub m0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpSourceRun {
    pub trace: IterationTrace,
    pub solution: Option<Solution>,
    pub maximal_norm: f64,
    pub m0: Option<f64>,
    /// `exp(τ(K c_p W + 2b₀)^β)` integrable on the grid.
    pub exp_integrable: bool,
    pub envelope: Field,
}

/// Monotone iteration with data `E(τ u_m^β) + μ`, `E` the truncated exponential.
pub fn iterate_exponential_source(
    omega: &SpatialMeasure,
    mu: &SpaceTimeMeasure,
    u0: &Field,
    p: f64,
    s: &ExpSourceSettings,
    m_max: usize,
    tol: f64,
) -> Result<ExpSourceRun> {
    if s.l < 1 {
        return Err(invalid("l", "l must be at least 1"));
    }
    if !(s.beta >= 1.0 && s.tau > 0.0) {
        return Err(invalid("exponential", format!("need β ≥ 1 and τ > 0, got β={}, τ={}", s.beta, s.tau)));
    }
    if !(s.l as f64 * s.beta > p - 1.0) {
        return Err(invalid("l", format!("need lβ > p − 1, got l={}, β={}, p={p}", s.l, s.beta)));
    }
    if !(s.kappa > 0.0 && s.b0 >= 0.0) {
        return Err(invalid("constants", "need K > 0 and b₀ ≥ 0"));
    }
    check_dominated(mu, omega)?;
    if u0.min() < 0.0 {
        return Err(invalid("u0", "initial data must be nonnegative"));
    }
    let eta = (p - 1.0) * (s.beta - 1.0) / s.beta;
    let maximal_norm = if omega.is_zero() { 0.0 } else { maximal_norm_2d(omega, p, eta)? };
    let m0 = match s.m0 {
        Some(m) => Some(m),
        None if s.beta > 1.0 => Some((delta0(p, s.beta)? / (s.tau * s.kappa.powf(s.beta))).powf((p - 1.0) / s.beta)),
        None => None,
    };
    let gate = m0.is_none_or(|m| maximal_norm <= m) && u0.norm_inf() <= s.b0;
    let w = wolff_field_2d(omega, p)?;
    let cp = c_p(p);
    let envelope = w.field.map(|v| s.kappa * cp * v + 2.0 * s.b0);
    let exps: Vec<f64> = envelope.values().iter().map(|e| s.tau * e.powf(s.beta)).collect();
    let exp_integrable = exp_quadrature(omega.grid(), &exps, EXP_OVERFLOW_GUARD).finite;
    let base = ParabolicProblem::new(mu.clone(), u0.clone(), p);
    let it = Iteration {
        base: &base,
        tol,
        increment_tol: INCREMENT_TOL,
        m_max,
        envelope: Some(&envelope),
        blow_up_sup: 10.0 * envelope.max().max(tol),
    };
    let (tau, beta, l) = (s.tau, s.beta, s.l);
    let (mut trace, solution) = it.run(move |v| truncated_exp_unchecked(tau * v.max(0.0).powf(beta), l), |_| 0.0)?;
    trace.gate_passed = Some(gate);
    Ok(ExpSourceRun {
        trace,
        solution,
        maximal_norm,
        m0,
        exp_integrable,
        envelope,
    })
}

/// Exponent summary for a grid and `p`.
pub fn exponents_for(grid: &Grid, p: f64) -> Result<ExponentReport> {
    exponents(grid.dim(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn smallness_row() {
        let c = smallness_constants(1, 2.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.beta_p, 1.0);
        assert!((c.a1 - 8.0).abs() < 1e-12);
        assert!((c.lambda0 - 0.125).abs() < 1e-12);
        assert!((c.a2 - 16.0).abs() < 1e-12);
        assert!((c.b0 - 0.0625).abs() < 1e-12);
        assert_eq!(c.c_p, 2.0);
        assert!(smallness_constants(1, 2.0, 1.0, 1.0, 1.0, 1.0).is_err());
        for n in 1..4 {
            let c = smallness_constants(n, 2.0, 3.5, 0.3, 2.0, 1.7).unwrap();
            assert_eq!((c.beta_p, c.c_p), (1.0, 2.0));
        }
    }

    #[test]
    fn shadow_recursion_examples() {
        let t = shadow_recursion(0.1, 2.0, 0.0, 200);
        assert!(t.bounded);
        assert!((t.values.last().unwrap() - 0.1001).abs() < 1e-4);
        let t = shadow_recursion(10.0, 2.0, 0.0, 10);
        assert!(!t.bounded);
        assert!(*t.values.last().unwrap() > 1e6);
    }

    #[test]
    fn composition_of_zero() {
        let g = GridSpec::interval(-1.0, 1.0, 20, 1.0, 1).build().unwrap();
        assert_eq!(wolff_composition_check(&SpatialMeasure::zero(g), 2.0, 2.0, 1.0, 32).unwrap(), 0.0);
        assert!(wolff_composition_check(&SpatialMeasure::zero(g), 2.0, 1.0, 1.0, 32).is_err());
    }

    #[test]
    fn exp_gate_examples() {
        let g = GridSpec::interval(-1.0, 1.0, 40, 1.0, 1).build().unwrap();
        let r = exponential_absorption_gate(&SpatialMeasure::zero(g), 2.0, 2.0, 5.0, ExpGateMode::Smallness { kappa: 0.2 }).unwrap();
        assert_eq!(r.norm, 0.0);
        assert!(r.passed);
        let d = SpatialMeasure::dirac(g, [0.0, 0.0], 1e-3).unwrap();
        let a = exponential_absorption_gate(&d, 2.0, 2.0, 1.0, ExpGateMode::Smallness { kappa: 0.2 }).unwrap();
        let b = exponential_absorption_gate(&d.scale(0.5), 2.0, 2.0, 1.0, ExpGateMode::Smallness { kappa: 0.2 }).unwrap();
        assert!((a.norm - 2.0 * b.norm).abs() < 1e-12 * a.norm);
        assert!(exponential_absorption_gate(&d, 2.0, 2.0, 1.0, ExpGateMode::Integrable { beta0: 2.0 }).is_err());
        assert!(exponential_absorption_gate(&d, 2.0, 1.0, 1.0, ExpGateMode::Integrable { beta0: 2.0 }).is_err());
    }

    #[test]
    fn zero_data_iterations_stay_zero() {
        let g = GridSpec::interval(-1.0, 1.0, 20, 0.5, 10).build().unwrap();
        let om = SpatialMeasure::zero(g);
        let mu = SpaceTimeMeasure::zero(g);
        let c = smallness_constants(1, 2.0, 2.0, 0.125, 2.0, 1.0).unwrap();
        let run = iterate_power_source(&om, &mu, &Field::zeros(g), 2.0, &c, 0.0, 5, 1e-10).unwrap();
        assert!(run.trace.rows.iter().all(|r| r.sup == 0.0));
        assert_eq!(run.trace.status, IterationStatus::Converged);
        let s = ExpSourceSettings {
            beta: 1.0,
            tau: 1.0,
            l: 2,
            kappa: 0.125,
            b0: 0.0,
            m0: None,
        };
        let run = iterate_exponential_source(&om, &mu, &Field::zeros(g), 2.0, &s, 5, 1e-10).unwrap();
        assert!(run.trace.rows.iter().all(|r| r.sup == 0.0));
        let bad = ExpSourceSettings { l: 1, ..s };
        assert!(iterate_exponential_source(&om, &mu, &Field::zeros(g), 2.0, &bad, 5, 1e-10).is_err());
    }

    #[test]
    fn approximations_are_monotone_and_exact_for_products() {
        let g = GridSpec::interval(-1.0, 1.0, 40, 1.0, 20).build().unwrap();
        let om = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        let profile = vec![1.0; 20];
        let mu = SpaceTimeMeasure::product(&om, &profile).unwrap();
        let data = AbsorptionData {
            mu: mu.clone(),
            omega: om,
            profile,
            f: None,
            u0: Field::zeros(g),
            p: 2.0,
            g: Nonlinearity::Power { q: 1.5 },
        };
        let mut prev: Option<SpaceTimeMeasure> = None;
        for n in [2, 4, 8, 16] {
            let (a, b) = approximating_pair(&data, n).unwrap();
            assert!(b.total_variation() == 0.0);
            if let Some(p) = &prev {
                assert!(p.le(&a, 1e-12).unwrap());
            }
            prev = Some(a);
        }
        // with ω_n = ω and F_n = F the first part is μ⁺ itself
        let inf = mu.positive_part().inf(&mu).unwrap();
        assert!((inf.total_variation() - mu.total_variation()).abs() < 1e-12);
    }
}
