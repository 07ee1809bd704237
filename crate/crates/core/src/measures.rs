//! Bounded Radon measures on `Ω` and on `Q = Ω × (0,T)` at grid level.
//!
//! A measure is a finite list of atoms (the singular part) plus a density
//! per cell (the diffuse part). Space-time measures additionally carry
//! product terms `ω ⊗ F`. All lattice operations work slice by slice: a
//! slice is the spatial measure charging one time step.

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid, Point, SpaceTimeField};

const COLOCATION_TOL: f64 = 1e-12;

fn colocated(a: &Point, b: &Point) -> bool {
    let scale = 1.0 + a[0].abs().max(a[1].abs());
    (a[0] - b[0]).abs() <= COLOCATION_TOL * scale && (a[1] - b[1]).abs() <= COLOCATION_TOL * scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: Point,
    pub mass: f64,
}

/// Signed measure on `Ω`: atoms plus a cellwise density (mass `value · h^N`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMeasure {
    grid: Grid,
    atoms: Vec<Atom>,
    density: Vec<f64>,
}

impl SpatialMeasure {
    pub fn zero(grid: Grid) -> Self {
        Self {
            density: vec![0.0; grid.n_cells()],
            atoms: Vec::new(),
            grid,
        }
    }

    pub fn dirac(grid: Grid, x: Point, mass: f64) -> Result<Self> {
        let mut m = Self::zero(grid);
        m.push_atom(x, mass)?;
        Ok(m)
    }

    pub fn from_density(density: &Field) -> Self {
        Self {
            grid: *density.grid(),
            atoms: Vec::new(),
            density: density.values().to_vec(),
        }
    }

    pub fn from_parts(grid: Grid, atoms: Vec<Atom>, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.n_cells() {
            return Err(invalid("measure", format!("{} density values for {} cells", density.len(), grid.n_cells())));
        }
        if density.iter().any(|v| !v.is_finite()) {
            return Err(invalid("measure", "non-finite density"));
        }
        let mut m = Self {
            grid,
            atoms: Vec::new(),
            density,
        };
        for a in atoms {
            m.push_atom(a.x, a.mass)?;
        }
        Ok(m)
    }

    pub fn push_atom(&mut self, x: Point, mass: f64) -> Result<()> {
        if !self.grid.contains_strictly(&x) {
            return Err(invalid("measure", format!("atom location {x:?} is not interior to the box")));
        }
        if !mass.is_finite() {
            return Err(invalid("measure", "non-finite atom mass"));
        }
        let mut x = x;
        if self.grid.dim() == 1 {
            x[1] = 0.0;
        }
        self.atoms.push(Atom { x, mass });
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn density_field(&self) -> Field {
        Field::new(self.grid, self.density.clone()).expect("density is finite by construction")
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.mass != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        !self.has_atoms() && self.density.iter().all(|&v| v == 0.0)
    }

    /// Merges co-located atoms and drops zero atoms.
    pub fn canonical(&self) -> Self {
        let mut atoms: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            match atoms.iter_mut().find(|b| colocated(&a.x, &b.x)) {
                Some(b) => b.mass += a.mass,
                None => atoms.push(*a),
            }
        }
        atoms.retain(|a| a.mass != 0.0);
        Self {
            grid: self.grid,
            atoms,
            density: self.density.clone(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>() + self.density.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn total_variation(&self) -> f64 {
        let c = self.canonical();
        c.atoms.iter().map(|a| a.mass.abs()).sum::<f64>()
            + c.density.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_nonnegative(&self) -> bool {
        let c = self.canonical();
        c.atoms.iter().all(|a| a.mass >= 0.0) && c.density.iter().all(|&v| v >= 0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            atoms: self.atoms.iter().map(|a| Atom { x: a.x, mass: c * a.mass }).collect(),
            density: self.density.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let density = self.density.iter().zip(&other.density).map(|(a, b)| a + b).collect();
        Ok(Self {
            grid: self.grid,
            atoms,
            density,
        }
        .canonical())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(invalid("measure", "measures live on different grids"));
        }
        Ok(())
    }

    fn split(&self, positive: bool) -> Self {
        let c = self.canonical();
        let keep = |v: f64| if positive { v.max(0.0) } else { (-v).max(0.0) };
        Self {
            grid: self.grid,
            atoms: c
                .atoms
                .iter()
                .map(|a| Atom { x: a.x, mass: keep(a.mass) })
                .filter(|a| a.mass > 0.0)
                .collect(),
            density: c.density.iter().map(|&v| keep(v)).collect(),
        }
    }

    pub fn positive_part(&self) -> Self {
        self.split(true)
    }

    pub fn negative_part(&self) -> Self {
        self.split(false)
    }

    /// `|μ|` as a measure.
    pub fn abs(&self) -> Self {
        let c = self.canonical();
        Self {
            grid: self.grid,
            atoms: c.atoms.iter().map(|a| Atom { x: a.x, mass: a.mass.abs() }).collect(),
            density: c.density.iter().map(|v| v.abs()).collect(),
        }
    }

    /// `self ≤ other` atomwise and cellwise, up to `tol`.
    pub fn le(&self, other: &Self, tol: f64) -> Result<bool> {
        let d = other.sub(self)?;
        Ok(d.atoms.iter().all(|a| a.mass >= -tol) && d.density.iter().all(|&v| v >= -tol))
    }

    /// `ω χ_{Ω_n}` with `Ω_n = {x : d(x, ∂Ω) > 1/n}`.
    pub fn restrict_interior(&self, n: usize) -> Self {
        let margin = 1.0 / n.max(1) as f64;
        let grid = self.grid;
        Self {
            grid,
            atoms: self
                .atoms
                .iter()
                .filter(|a| grid.distance_to_boundary(&a.x) > margin)
                .copied()
                .collect(),
            density: self
                .density
                .iter()
                .enumerate()
                .map(|(k, &v)| if grid.distance_to_boundary(&grid.center(k)) > margin { v } else { 0.0 })
                .collect(),
        }
    }

    /// Replaces atoms and densities by bump-smoothed densities of radius
    /// `max(2h, D/n)`; mass is preserved exactly, including near `∂Ω`.
    pub fn mollify(&self, n: usize) -> Self {
        let kernel = Mollifier::new(self.grid, mollifier_radius(&self.grid, n));
        let mut out = vec![0.0; self.grid.n_cells()];
        kernel.spread_measure(self, 1.0, &mut out);
        Self {
            grid: self.grid,
            atoms: Vec::new(),
            density: out,
        }
    }

    /// Lattice infimum of two nonnegative measures.
    ///
    /// Co-located atoms keep the smaller mass, densities take the pointwise
    /// minimum, and an atom facing only a density contributes nothing.
    pub fn inf(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        if !self.is_nonnegative() || !other.is_nonnegative() {
            return Err(invalid("measure", "inf_measures needs nonnegative measures"));
        }
        let a = self.canonical();
        let b = other.canonical();
        let atoms = a
            .atoms
            .iter()
            .filter_map(|x| {
                b.atoms
                    .iter()
                    .find(|y| colocated(&x.x, &y.x))
                    .map(|y| Atom { x: x.x, mass: x.mass.min(y.mass) })
            })
            .filter(|a| a.mass > 0.0)
            .collect();
        let density = a.density.iter().zip(&b.density).map(|(x, y)| x.min(*y)).collect();
        Ok(Self {
            grid: self.grid,
            atoms,
            density,
        })
    }
}

/// Mollifier radius `r_n = max(2h, D/n)`.
pub fn mollifier_radius(grid: &Grid, n: usize) -> f64 {
    (2.0 * grid.h()).max(grid.diameter() / n.max(1) as f64)
}

/// Polynomial bump `(1 - (|x|/r)^2)^2` on `|x| < r`.
pub fn bump(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        let s = 1.0 - rho * rho;
        s * s
    }
}

/// Discrete normalized bump: spreads point masses onto cell densities.
struct Mollifier {
    grid: Grid,
    radius: f64,
    // cell offsets and unnormalized weights for a mass sitting at a cell center
    stencil: Vec<(isize, isize, f64)>,
}

impl Mollifier {
    fn new(grid: Grid, radius: f64) -> Self {
        let reach = [
            (radius / grid.spacing(0)).ceil() as isize,
            if grid.dim() == 2 { (radius / grid.spacing(1)).ceil() as isize } else { 0 },
        ];
        let mut stencil = Vec::new();
        for dj in -reach[1]..=reach[1] {
            for di in -reach[0]..=reach[0] {
                let dx = di as f64 * grid.spacing(0);
                let dy = if grid.dim() == 2 { dj as f64 * grid.spacing(1) } else { 0.0 };
                let w = bump((dx * dx + dy * dy).sqrt() / radius);
                if w > 0.0 {
                    stencil.push((di, dj, w));
                }
            }
        }
        Self { grid, radius, stencil }
    }

    /// Adds `scale · mass` spread around cell `k` into `out`.
    fn spread_cell(&self, k: usize, mass: f64, out: &mut [f64]) {
        let g = &self.grid;
        let (i, j) = g.coords(k);
        let inside = |di: isize, dj: isize| {
            let ii = i as isize + di;
            let jj = j as isize + dj;
            ii >= 0 && jj >= 0 && (ii as usize) < g.cells(0) && (jj as usize) < g.cells(1)
        };
        let total: f64 = self.stencil.iter().filter(|s| inside(s.0, s.1)).map(|s| s.2).sum();
        let factor = mass / (total * g.cell_volume());
        for &(di, dj, w) in self.stencil.iter().filter(|s| inside(s.0, s.1)) {
            let idx = g.index((i as isize + di) as usize, (j as isize + dj) as usize);
            out[idx] += w * factor;
        }
    }

    fn spread_point(&self, x: &Point, mass: f64, out: &mut [f64]) {
        let g = &self.grid;
        let mut weights = Vec::new();
        let mut total = 0.0;
        let home = g.locate(x);
        let (hi, hj) = g.coords(home);
        let reach0 = (self.radius / g.spacing(0)).ceil() as isize + 1;
        let reach1 = if g.dim() == 2 { (self.radius / g.spacing(1)).ceil() as isize + 1 } else { 0 };
        for dj in -reach1..=reach1 {
            for di in -reach0..=reach0 {
                let ii = hi as isize + di;
                let jj = hj as isize + dj;
                if ii < 0 || jj < 0 || ii as usize >= g.cells(0) || jj as usize >= g.cells(1) {
                    continue;
                }
                let idx = g.index(ii as usize, jj as usize);
                let w = bump(g.distance(&g.center(idx), x) / self.radius);
                if w > 0.0 {
                    total += w;
                    weights.push((idx, w));
                }
            }
        }
        if total == 0.0 {
            out[home] += mass / g.cell_volume();
            return;
        }
        let factor = mass / (total * g.cell_volume());
        for (idx, w) in weights {
            out[idx] += w * factor;
        }
    }

    fn spread_measure(&self, m: &SpatialMeasure, scale: f64, out: &mut [f64]) {
        let vol = self.grid.cell_volume();
        for a in &m.atoms {
            if a.mass != 0.0 {
                self.spread_point(&a.x, scale * a.mass, out);
            }
        }
        for (k, &v) in m.density.iter().enumerate() {
            if v != 0.0 {
                self.spread_cell(k, scale * v * vol, out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeAtom {
    pub x: Point,
    pub t: f64,
    pub mass: f64,
}

/// `ω ⊗ F` with `F` given per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub spatial: SpatialMeasure,
    pub profile: Vec<f64>,
}

impl ProductTerm {
    pub fn mass(&self) -> f64 {
        let tau = self.spatial.grid().tau();
        self.spatial.total_mass() * self.profile.iter().sum::<f64>() * tau
    }
}

/// Signed measure on `Q`: space-time atoms, a density per cell per step,
/// and product terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeMeasure {
    grid: Grid,
    atoms: Vec<SpaceTimeAtom>,
    density: Vec<f64>,
    products: Vec<ProductTerm>,
}

impl SpaceTimeMeasure {
    pub fn zero(grid: Grid) -> Self {
        Self {
            density: vec![0.0; grid.n_cells() * grid.steps()],
            atoms: Vec::new(),
            products: Vec::new(),
            grid,
        }
    }

    pub fn dirac(grid: Grid, x: Point, t: f64, mass: f64) -> Result<Self> {
        let mut m = Self::zero(grid);
        m.push_atom(x, t, mass)?;
        Ok(m)
    }

    /// `ω ⊗ F`; `F` holds one nonnegative value per step.
    pub fn product(omega: &SpatialMeasure, profile: &[f64]) -> Result<Self> {
        let mut m = Self::zero(*omega.grid());
        m.push_product(omega.clone(), profile.to_vec())?;
        Ok(m)
    }

    pub fn from_density(density: &SpaceTimeField) -> Self {
        Self {
            grid: *density.grid(),
            atoms: Vec::new(),
            density: density.values().to_vec(),
            products: Vec::new(),
        }
    }

    pub fn push_atom(&mut self, x: Point, t: f64, mass: f64) -> Result<()> {
        if !self.grid.contains_strictly(&x) || !(t > 0.0 && t < self.grid.t_final()) {
            return Err(invalid("measure", format!("space-time atom ({x:?}, {t}) is not interior to Q")));
        }
        if !mass.is_finite() {
            return Err(invalid("measure", "non-finite atom mass"));
        }
        let mut x = x;
        if self.grid.dim() == 1 {
            x[1] = 0.0;
        }
        self.atoms.push(SpaceTimeAtom { x, t, mass });
        Ok(())
    }

    pub fn push_product(&mut self, spatial: SpatialMeasure, profile: Vec<f64>) -> Result<()> {
        if spatial.grid() != &self.grid {
            return Err(invalid("measure", "product factor lives on a different grid"));
        }
        if profile.len() != self.grid.steps() {
            return Err(invalid("measure", format!("profile has {} entries for {} steps", profile.len(), self.grid.steps())));
        }
        if let Some(k) = profile.iter().position(|&f| !(f >= 0.0) || !f.is_finite()) {
            return Err(invalid("measure", format!("time profile entry {k} is negative or non-finite")));
        }
        self.products.push(ProductTerm { spatial, profile });
        Ok(())
    }

    pub fn add_density(&mut self, density: &SpaceTimeField) -> Result<()> {
        if density.grid() != &self.grid {
            return Err(invalid("measure", "density lives on a different grid"));
        }
        for (d, v) in self.density.iter_mut().zip(density.values()) {
            *d += v;
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atoms(&self) -> &[SpaceTimeAtom] {
        &self.atoms
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn products(&self) -> &[ProductTerm] {
        &self.products
    }

    pub fn is_pure_density(&self) -> bool {
        self.atoms.iter().all(|a| a.mass == 0.0) && self.products.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        let g = &self.grid;
        self.atoms.iter().map(|a| a.mass).sum::<f64>()
            + self.density.iter().sum::<f64>() * g.cell_volume() * g.tau()
            + self.products.iter().map(ProductTerm::mass).sum::<f64>()
    }

    /// Spatial measure charged by each time step.
    pub fn slices(&self) -> Vec<SpatialMeasure> {
        let g = self.grid;
        let tau = g.tau();
        let c = g.n_cells();
        let mut out: Vec<SpatialMeasure> = (0..g.steps())
            .map(|n| SpatialMeasure {
                grid: g,
                atoms: Vec::new(),
                density: self.density[n * c..(n + 1) * c].iter().map(|v| v * tau).collect(),
            })
            .collect();
        for a in &self.atoms {
            out[g.step_of(a.t)].atoms.push(Atom { x: a.x, mass: a.mass });
        }
        for p in &self.products {
            for (n, &f) in p.profile.iter().enumerate() {
                if f == 0.0 {
                    continue;
                }
                let w = f * tau;
                let slice = &mut out[n];
                slice.atoms.extend(p.spatial.atoms.iter().map(|a| Atom { x: a.x, mass: a.mass * w }));
                for (d, v) in slice.density.iter_mut().zip(&p.spatial.density) {
                    *d += v * w;
                }
            }
        }
        out.into_iter().map(|s| s.canonical()).collect()
    }

    /// Rebuilds a measure from per-step slices; slice atoms are placed at
    /// the step midpoint.
    pub fn from_slices(grid: Grid, slices: &[SpatialMeasure]) -> Result<Self> {
        if slices.len() != grid.steps() {
            return Err(invalid("measure", "one slice per step required"));
        }
        let tau = grid.tau();
        let mut m = Self::zero(grid);
        let c = grid.n_cells();
        for (n, s) in slices.iter().enumerate() {
            if s.grid() != &grid {
                return Err(invalid("measure", "slice grid differs"));
            }
            let t = (n as f64 + 0.5) * tau;
            for a in &s.atoms {
                m.atoms.push(SpaceTimeAtom { x: a.x, t, mass: a.mass });
            }
            for (d, v) in m.density[n * c..(n + 1) * c].iter_mut().zip(&s.density) {
                *d = v / tau;
            }
        }
        Ok(m)
    }

    pub fn total_variation(&self) -> f64 {
        self.slices().iter().map(SpatialMeasure::total_variation).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.slices().iter().all(SpatialMeasure::is_nonnegative)
    }

    fn map_slices(&self, f: impl Fn(&SpatialMeasure) -> SpatialMeasure) -> Self {
        let s: Vec<_> = self.slices().iter().map(f).collect();
        Self::from_slices(self.grid, &s).expect("slices share the grid")
    }

    pub fn positive_part(&self) -> Self {
        self.map_slices(SpatialMeasure::positive_part)
    }

    pub fn negative_part(&self) -> Self {
        self.map_slices(SpatialMeasure::negative_part)
    }

    pub fn abs(&self) -> Self {
        self.map_slices(SpatialMeasure::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            atoms: self.atoms.iter().map(|a| SpaceTimeAtom { mass: c * a.mass, ..*a }).collect(),
            density: self.density.iter().map(|v| c * v).collect(),
            products: self
                .products
                .iter()
                .map(|p| ProductTerm {
                    spatial: p.spatial.scale(c),
                    profile: p.profile.clone(),
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(invalid("measure", "measures live on different grids"));
        }
        let mut m = self.clone();
        m.atoms.extend_from_slice(&other.atoms);
        for (d, v) in m.density.iter_mut().zip(&other.density) {
            *d += v;
        }
        m.products.extend(other.products.iter().cloned());
        Ok(m)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    fn zip_slices(
        &self,
        other: &Self,
        f: impl Fn(&SpatialMeasure, &SpatialMeasure) -> Result<SpatialMeasure>,
    ) -> Result<Self> {
        if self.grid != other.grid {
            return Err(invalid("measure", "measures live on different grids"));
        }
        let s = self
            .slices()
            .iter()
            .zip(other.slices().iter())
            .map(|(a, b)| f(a, b))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slices(self.grid, &s)
    }

    /// Lattice infimum, slice by slice.
    pub fn inf(&self, other: &Self) -> Result<Self> {
        self.zip_slices(other, |a, b| a.inf(b))
    }

    /// `self ≤ other` slice by slice, up to `tol` (in slice mass units).
    pub fn le(&self, other: &Self, tol: f64) -> Result<bool> {
        if self.grid != other.grid {
            return Err(invalid("measure", "measures live on different grids"));
        }
        for (a, b) in self.slices().iter().zip(other.slices().iter()) {
            if !a.le(b, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Pure-density approximation: each slice is mollified in space at
    /// radius `max(2h, D/n)` and spread uniformly over its step.
    pub fn mollify(&self, n: usize) -> Self {
        let g = self.grid;
        let tau = g.tau();
        let c = g.n_cells();
        let kernel = Mollifier::new(g, mollifier_radius(&g, n));
        let mut density = vec![0.0; c * g.steps()];
        for p in &self.products {
            let mut base = vec![0.0; c];
            kernel.spread_measure(&p.spatial, 1.0, &mut base);
            for (s, &f) in p.profile.iter().enumerate() {
                if f != 0.0 {
                    for (d, b) in density[s * c..(s + 1) * c].iter_mut().zip(&base) {
                        *d += f * b;
                    }
                }
            }
        }
        for a in &self.atoms {
            let s = g.step_of(a.t);
            kernel.spread_point(&a.x, a.mass / tau, &mut density[s * c..(s + 1) * c]);
        }
        let vol = g.cell_volume();
        for s in 0..g.steps() {
            for k in 0..c {
                let v = self.density[s * c + k];
                if v != 0.0 {
                    kernel.spread_cell(k, v * vol, &mut density[s * c..(s + 1) * c]);
                }
            }
        }
        Self {
            grid: g,
            atoms: Vec::new(),
            density,
            products: Vec::new(),
        }
    }

    /// `T_n(χ_{Q_n} f)` for a pure density `f`, where
    /// `Q_n = {(x,t) ∈ Ω × (1/n, T − 1/n) : d(x, ∂Ω) > 1/n}`.
    pub fn truncate_restrict(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("level", "n must be at least 1"));
        }
        if !self.is_pure_density() {
            return Err(invalid("measure", "truncate_restrict applies to density data only"));
        }
        let g = self.grid;
        let c = g.n_cells();
        let level = n as f64;
        let margin = 1.0 / level;
        let mut density = vec![0.0; self.density.len()];
        for s in 0..g.steps() {
            let t = (s as f64 + 0.5) * g.tau();
            if !(t > margin && t < g.t_final() - margin) {
                continue;
            }
            for k in 0..c {
                if g.distance_to_boundary(&g.center(k)) > margin {
                    density[s * c + k] = self.density[s * c + k].clamp(-level, level);
                }
            }
        }
        Ok(Self {
            grid: g,
            atoms: Vec::new(),
            density,
            products: Vec::new(),
        })
    }

    /// Density per step as a space-time field (only meaningful for pure
    /// densities; atoms and products are ignored).
    pub fn density_field(&self) -> SpaceTimeField {
        SpaceTimeField::new(self.grid, self.density.clone()).expect("finite density")
    }
}

/// `F_n = T_n(χ_{(1/n, T − 1/n)} F)` on step midpoints.
pub fn truncate_profile(grid: &Grid, profile: &[f64], n: usize) -> Vec<f64> {
    let level = n.max(1) as f64;
    let margin = 1.0 / level;
    profile
        .iter()
        .enumerate()
        .map(|(s, &f)| {
            let t = (s as f64 + 0.5) * grid.tau();
            if t > margin && t < grid.t_final() - margin {
                f.clamp(-level, level)
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(cells: usize, steps: usize) -> Grid {
        GridSpec::interval(-1.0, 1.0, cells, 1.0, steps).build().unwrap()
    }

    #[test]
    fn dirac_variation() {
        let g = line(32, 4);
        assert_eq!(SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap().total_variation(), 1.0);
        assert_eq!(SpatialMeasure::dirac(g, [0.0, 0.0], -2.0).unwrap().total_variation(), 2.0);
        assert!(SpatialMeasure::dirac(g, [1.5, 0.0], 1.0).is_err());
        assert!(SpatialMeasure::dirac(g, [1.0, 0.0], 1.0).is_err());
        assert!(SpaceTimeMeasure::dirac(g, [0.0, 0.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn product_masses() {
        let g = line(32, 10);
        let d = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        let m = SpaceTimeMeasure::product(&d, &[1.0; 10]).unwrap();
        assert_relative_eq!(m.total_mass(), 1.0, epsilon = 1e-14);
        let z = SpaceTimeMeasure::product(&d, &[0.0; 10]).unwrap();
        assert_eq!(z.total_variation(), 0.0);
        let dens = SpatialMeasure::from_density(&Field::from_fn(g, |_| 1.0));
        let m = SpaceTimeMeasure::product(&dens, &[2.0; 10]).unwrap();
        assert_relative_eq!(m.total_mass(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(m.total_variation(), 4.0, epsilon = 1e-12);
        let mut bad = vec![1.0; 10];
        bad[3] = -0.1;
        assert!(SpaceTimeMeasure::product(&d, &bad).is_err());
    }

    #[test]
    fn mollify_examples() {
        let g = line(256, 4);
        let d = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        for n in [1, 2, 4, 16, 64] {
            let m = d.mollify(n);
            assert!(!m.has_atoms());
            assert_relative_eq!(m.total_mass(), 1.0, max_relative = 1e-10);
        }
        let sup = |n| d.mollify(n).density().iter().copied().fold(0.0, f64::max);
        assert!(sup(4) < sup(16));
        assert!(SpatialMeasure::zero(g).mollify(3).is_zero());
    }

    #[test]
    fn mollify_clips_near_boundary() {
        let g = GridSpec::rectangle([[0.0, 1.0], [0.0, 1.0]], [20, 20], 1.0, 2).build().unwrap();
        let d = SpatialMeasure::dirac(g, [0.02, 0.97], 2.5).unwrap();
        let m = d.mollify(3);
        assert_relative_eq!(m.total_mass(), 2.5, max_relative = 1e-10);
        assert!(m.is_nonnegative());
    }

    #[test]
    fn inf_examples() {
        let g = line(16, 2);
        let a = SpatialMeasure::dirac(g, [0.0, 0.0], 2.0).unwrap();
        let b = SpatialMeasure::dirac(g, [0.0, 0.0], 1.0).unwrap();
        assert_eq!(a.inf(&b).unwrap().atoms(), b.atoms());
        let c = SpatialMeasure::dirac(g, [0.5, 0.0], 1.0).unwrap();
        assert!(b.inf(&c).unwrap().is_zero());
        let one = SpatialMeasure::from_density(&Field::from_fn(g, |_| 1.0));
        let half = SpatialMeasure::from_density(&Field::from_fn(g, |_| 0.5));
        assert_eq!(one.inf(&half).unwrap(), half);
        assert!(b.inf(&one).unwrap().atoms().is_empty());
        assert!(a.scale(-1.0).inf(&b).is_err());
    }

    #[test]
    fn truncate_restrict_examples() {
        let g = GridSpec::interval(-1.0, 1.0, 40, 4.0, 40).build().unwrap();
        let five = SpaceTimeMeasure::from_density(&SpaceTimeField::from_fn(g, |_, _| 5.0));
        let r = five.truncate_restrict(2).unwrap();
        let c = g.n_cells();
        for s in 0..g.steps() {
            let t = (s as f64 + 0.5) * g.tau();
            for k in 0..c {
                let x = g.center(k);
                let inside = t > 0.5 && t < 3.5 && g.distance_to_boundary(&x) > 0.5;
                let expected = if inside { 2.0 } else { 0.0 };
                assert_eq!(r.density()[s * c + k], expected);
            }
        }
        let big = five.truncate_restrict(1000).unwrap();
        assert_eq!(big.density(), five.density());
        assert!(SpaceTimeMeasure::zero(g).truncate_restrict(3).unwrap().total_variation() == 0.0);
        let atom = SpaceTimeMeasure::dirac(g, [0.0, 0.0], 1.0, 1.0).unwrap();
        assert!(atom.truncate_restrict(3).is_err());
    }

    #[test]
    fn truncate_restrict_monotone_in_level() {
        let g = GridSpec::interval(-1.0, 1.0, 30, 2.0, 20).build().unwrap();
        let f = SpaceTimeMeasure::from_density(&SpaceTimeField::from_fn(g, |x, t| 10.0 * (x[0] * 3.0 + t).sin().abs()));
        let mut prev = f.truncate_restrict(1).unwrap();
        for n in 2..12 {
            let next = f.truncate_restrict(n).unwrap();
            assert!(prev.le(&next, 0.0).unwrap());
            prev = next;
        }
    }

    #[test]
    fn space_time_atoms_land_in_step() {
        let g = line(16, 4);
        let m = SpaceTimeMeasure::dirac(g, [0.1, 0.0], 0.6, 3.0).unwrap();
        let s = m.slices();
        assert_eq!(s[2].atoms().len(), 1);
        assert_eq!(s[2].atoms()[0].mass, 3.0);
        let moll = m.mollify(4);
        let c = g.n_cells();
        let step2: f64 = moll.density()[2 * c..3 * c].iter().sum::<f64>() * g.cell_volume() * g.tau();
        assert_relative_eq!(step2, 3.0, max_relative = 1e-12);
        assert_relative_eq!(moll.total_mass(), 3.0, max_relative = 1e-12);
    }

    fn random_measure(g: Grid, seed: &[f64]) -> SpatialMeasure {
        let spots = [-0.5, -0.25, 0.0, 0.3];
        let mut m = SpatialMeasure::zero(g);
        for (k, &x) in spots.iter().enumerate() {
            let w = seed[k];
            if w > 0.3 {
                m.push_atom([x, 0.0], w).unwrap();
            }
        }
        let dens: Vec<f64> = (0..g.n_cells()).map(|k| (seed[4] * k as f64 + seed[5]).sin().max(0.0) * seed[6]).collect();
        SpatialMeasure::from_parts(g, m.atoms().to_vec(), dens).unwrap()
    }

    proptest! {
        #[test]
        fn inf_is_one_lipschitz(a in proptest::collection::vec(0.0f64..2.0, 7),
                                b in proptest::collection::vec(0.0f64..2.0, 7),
                                c in proptest::collection::vec(0.0f64..2.0, 7)) {
            let g = line(24, 1);
            let nu = random_measure(g, &a);
            let theta = random_measure(g, &b);
            let eta = random_measure(g, &c);
            let lhs = nu.inf(&theta).unwrap().sub(&nu.inf(&eta).unwrap()).unwrap().total_variation();
            let rhs = theta.sub(&eta).unwrap().total_variation();
            prop_assert!(lhs <= rhs + 1e-12);
            let m = nu.inf(&theta).unwrap();
            prop_assert!(m.le(&nu, 1e-15).unwrap() && m.le(&theta, 1e-15).unwrap());
            prop_assert!(nu.inf(&nu).unwrap().sub(&nu).unwrap().total_variation() < 1e-12);
        }

        #[test]
        fn mollify_preserves_mass(a in proptest::collection::vec(0.0f64..2.0, 7), n in 1usize..40) {
            let g = line(50, 1);
            let m = random_measure(g, &a);
            let s = m.mollify(n);
            prop_assert!((s.total_mass() - m.total_mass()).abs() <= 1e-10 * m.total_mass().max(1e-300));
            prop_assert!(s.is_nonnegative());
        }
    }
}
