//! Rectangular space-time grids, cell-centered fields and midpoint quadrature.
//!
//! Values live at cell centers. The homogeneous Dirichlet condition is
//! realized by ghost cells whose value is fixed at zero.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A point of the spatial box. In 1D the second coordinate is always 0.
pub type Point = [f64; 2];

/// JSON description of a grid: `{dim, bounds, cells, T, steps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn interval(lo: f64, hi: f64, cells: usize, t_final: f64, steps: usize) -> Self {
        Self {
            dim: 1,
            bounds: vec![[lo, hi]],
            cells: vec![cells],
            t_final,
            steps,
        }
    }

    pub fn rectangle(bounds: [[f64; 2]; 2], cells: [usize; 2], t_final: f64, steps: usize) -> Self {
        Self {
            dim: 2,
            bounds: bounds.to_vec(),
            cells: cells.to_vec(),
            t_final,
            steps,
        }
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self)
    }
}

/// Uniform cell-centered discretization of `Ω × (0,T)` with `Ω` a box in
/// `R^N`, `N ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    lower: Point,
    upper: Point,
    cells: [usize; 2],
    spacing: [f64; 2],
    t_final: f64,
    steps: usize,
    tau: f64,
}

impl Grid {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        if spec.dim != 1 && spec.dim != 2 {
            return Err(invalid("grid", format!("dimension {} not in {{1, 2}}", spec.dim)));
        }
        if spec.bounds.len() != spec.dim || spec.cells.len() != spec.dim {
            return Err(invalid("grid", "bounds and cells must have one entry per axis"));
        }
        let mut lower = [0.0; 2];
        let mut upper = [0.0; 2];
        let mut cells = [1usize; 2];
        let mut spacing = [1.0; 2];
        for axis in 0..spec.dim {
            let [lo, hi] = spec.bounds[axis];
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(invalid("grid", format!("axis {axis} has non-positive extent [{lo}, {hi}]")));
            }
            if spec.cells[axis] < 4 {
                return Err(invalid("grid", format!("axis {axis} needs at least 4 cells, got {}", spec.cells[axis])));
            }
            lower[axis] = lo;
            upper[axis] = hi;
            cells[axis] = spec.cells[axis];
            spacing[axis] = (hi - lo) / spec.cells[axis] as f64;
        }
        if !(spec.t_final.is_finite() && spec.t_final > 0.0) {
            return Err(invalid("grid", format!("time horizon must be positive, got {}", spec.t_final)));
        }
        if spec.steps == 0 {
            return Err(invalid("grid", "step count must be at least 1"));
        }
        Ok(Self {
            dim: spec.dim,
            lower,
            upper,
            cells,
            spacing,
            t_final: spec.t_final,
            steps: spec.steps,
            tau: spec.t_final / spec.steps as f64,
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            bounds: (0..self.dim).map(|a| [self.lower[a], self.upper[a]]).collect(),
            cells: self.cells[..self.dim].to_vec(),
            t_final: self.t_final,
            steps: self.steps,
        }
    }

    /// Same box and time horizon with different resolutions.
    pub fn refined(&self, cells_per_axis: usize, steps: usize) -> Result<Self> {
        let mut spec = self.spec();
        spec.cells = vec![cells_per_axis; self.dim];
        spec.steps = steps;
        Grid::new(&spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    /// Largest cell width.
    pub fn h(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).fold(0.0, f64::max)
    }

    /// `h^N` for square cells; the product of widths in general.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn upper(&self) -> Point {
        self.upper
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Time at the end of step `n` (1-based); `time(0) = 0`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }

    /// Index of the step `(t_{n-1}, t_n]` containing `t`, as a 0-based slot.
    pub fn step_of(&self, t: f64) -> usize {
        let k = (t / self.tau).ceil() as isize - 1;
        k.clamp(0, self.steps as isize - 1) as usize
    }

    /// Box diagonal, `sup |x - y|` over `Ω`.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.upper[a] - self.lower[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Lebesgue measure of `Ω`.
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Lebesgue measure of `Q = Ω × (0,T)`.
    pub fn space_time_volume(&self) -> f64 {
        self.volume() * self.t_final
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    /// Inverse of [`Grid::index`].
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        let mut p = [0.0; 2];
        p[0] = self.lower[0] + (i as f64 + 0.5) * self.spacing[0];
        if self.dim == 2 {
            p[1] = self.lower[1] + (j as f64 + 0.5) * self.spacing[1];
        }
        p
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.n_cells()).map(move |k| self.center(k))
    }

    /// Distance between two points using only the active axes.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        (0..self.dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains_strictly(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| p[a] > self.lower[a] && p[a] < self.upper[a])
    }

    /// `d(x, ∂Ω)` for a point inside the box (negative outside).
    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        (0..self.dim)
            .map(|a| (p[a] - self.lower[a]).min(self.upper[a] - p[a]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Cell containing `p`, clamped to the box.
    pub fn locate(&self, p: &Point) -> usize {
        let mut ij = [0usize; 2];
        for a in 0..self.dim {
            let s = ((p[a] - self.lower[a]) / self.spacing[a]).floor() as isize;
            ij[a] = s.clamp(0, self.cells[a] as isize - 1) as usize;
        }
        self.index(ij[0], ij[1])
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(invalid("field", format!("non-finite value {} at entry {k}", values[k]))),
        None => Ok(()),
    }
}

/// One scalar per spatial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(invalid(
                "field",
                format!("{} values for {} cells", values.len(), grid.n_cells()),
            ));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_cells()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = grid.centers().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Midpoint rule `Σ f_i h^N`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linear_combination(a: f64, f: &Field, b: f64, g: &Field) -> Result<Field> {
        if f.grid != g.grid {
            return Err(invalid("field", "grids differ"));
        }
        let values = f.values.iter().zip(&g.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Field { grid: f.grid, values })
    }
}

/// One scalar per spatial cell per time step; slot `n` holds the value at
/// `t_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.n_cells() * grid.steps();
        if values.len() != expected {
            return Err(invalid("field", format!("{} values for {expected} space-time cells", values.len())));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_cells() * grid.steps()],
            grid,
        }
    }

    /// Samples `f(x, t_n)` at the end of each step.
    pub fn from_fn(grid: Grid, f: impl Fn(Point, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells() * grid.steps());
        for n in 1..=grid.steps() {
            let t = grid.time(n);
            values.extend(grid.centers().map(|x| f(x, t)));
        }
        Self { grid, values }
    }

    /// Extends a spatial field constantly in time.
    pub fn constant_in_time(field: &Field) -> Self {
        let grid = *field.grid();
        let mut values = Vec::with_capacity(grid.n_cells() * grid.steps());
        for _ in 0..grid.steps() {
            values.extend_from_slice(field.values());
        }
        Self { grid, values }
    }

    pub fn from_steps(grid: Grid, steps: &[Field]) -> Result<Self> {
        if steps.len() != grid.steps() {
            return Err(invalid("field", format!("{} slices for {} steps", steps.len(), grid.steps())));
        }
        let mut values = Vec::with_capacity(grid.n_cells() * grid.steps());
        for s in steps {
            if s.grid() != &grid {
                return Err(invalid("field", "slice grid differs"));
            }
            values.extend_from_slice(s.values());
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Values of step slot `n` (0-based).
    pub fn step(&self, n: usize) -> &[f64] {
        let c = self.grid.n_cells();
        &self.values[n * c..(n + 1) * c]
    }

    pub fn step_field(&self, n: usize) -> Field {
        Field {
            grid: self.grid,
            values: self.step(n).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Midpoint rule `Σ f h^N τ`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume() * self.grid.tau()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume() * self.grid.tau()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup_t |f(x, t)|` per cell.
    pub fn sup_in_time(&self) -> Field {
        let c = self.grid.n_cells();
        let mut out = vec![0.0f64; c];
        for n in 0..self.grid.steps() {
            for (o, v) in out.iter_mut().zip(self.step(n)) {
                *o = o.max(v.abs());
            }
        }
        Field { grid: self.grid, values: out }
    }

    /// `h^N τ · #{cells with |f| > k}`.
    pub fn level_set_measure(&self, k: f64) -> f64 {
        let count = self.values.iter().filter(|v| v.abs() > k).count();
        count as f64 * self.grid.cell_volume() * self.grid.tau()
    }

    pub fn l1_distance(&self, other: &SpaceTimeField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("field", "grids differ"));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s * self.grid.cell_volume() * self.grid.tau())
    }
}

impl TryFrom<&GridSpec> for Grid {
    type Error = Error;

    fn try_from(spec: &GridSpec) -> Result<Self> {
        Grid::new(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(cells: usize) -> Grid {
        GridSpec::interval(-1.0, 1.0, cells, 1.0, 4).build().unwrap()
    }

    #[test]
    fn interval_spacing() {
        let g = line(8);
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.tau(), 0.25);
        assert_eq!(g.diameter(), 2.0);
        assert!((g.time(g.steps()) - g.t_final()).abs() < 1e-15);
    }

    #[test]
    fn square_diameter() {
        let g = GridSpec::rectangle([[0.0, 1.0], [0.0, 1.0]], [10, 10], 1.0, 1)
            .build()
            .unwrap();
        assert_abs_diff_eq!(g.diameter(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.h(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::interval(-1.0, 1.0, 0, 1.0, 4).build().is_err());
        assert!(GridSpec::interval(-1.0, 1.0, 3, 1.0, 4).build().is_err());
        assert!(GridSpec::interval(1.0, 1.0, 8, 1.0, 4).build().is_err());
        assert!(GridSpec::interval(-1.0, 1.0, 8, 0.0, 4).build().is_err());
        assert!(GridSpec::interval(-1.0, 1.0, 8, 1.0, 0).build().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let text = r#"{"dim":2,"bounds":[[0,1],[0,2]],"cells":[4,8],"T":0.5,"steps":5}"#;
        let spec: GridSpec = serde_json::from_str(text).unwrap();
        let g = spec.build().unwrap();
        assert_eq!(g.n_cells(), 32);
        assert_eq!(g.spec(), spec);
    }

    #[test]
    fn integrate_examples() {
        let g = line(64);
        assert_abs_diff_eq!(Field::from_fn(g, |_| 1.0).integrate(), 2.0, epsilon = 1e-14);
        assert_eq!(Field::zeros(g).integrate(), 0.0);
        assert_abs_diff_eq!(Field::from_fn(g, |x| x[0]).integrate(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn level_set_examples() {
        let g = GridSpec::interval(-1.0, 1.0, 40, 1.0, 10).build().unwrap();
        let one = SpaceTimeField::from_fn(g, |_, _| 1.0);
        assert_eq!(one.level_set_measure(2.0), 0.0);
        assert_abs_diff_eq!(one.level_set_measure(0.5), 2.0, epsilon = 1e-12);
        let x = SpaceTimeField::constant_in_time(&Field::from_fn(g, |p| p[0]));
        assert!((x.level_set_measure(0.5) - 1.0).abs() <= g.h());
    }

    #[test]
    fn field_rejects_nan() {
        let g = line(8);
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Field::new(g, v).is_err());
        assert!(Field::new(g, vec![0.0; 7]).is_err());
    }

    #[test]
    fn locate_and_step_of() {
        let g = line(8);
        assert_eq!(g.locate(&[-0.99, 0.0]), 0);
        assert_eq!(g.locate(&[0.99, 0.0]), 7);
        assert_eq!(g.step_of(0.25), 0);
        assert_eq!(g.step_of(0.26), 1);
        assert_eq!(g.step_of(1.0), 3);
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
            let g = GridSpec::rectangle([[0.0, 1.0], [-1.0, 1.0]], [6, 7], 1.0, 2).build().unwrap();
            let s = seed as f64;
            let f = Field::from_fn(g, |p| (p[0] * 3.0 + s).sin() + p[1]);
            let h = Field::from_fn(g, |p| (p[1] * 2.0 - s).cos() * p[0]);
            let lhs = Field::linear_combination(a, &f, b, &h).unwrap().integrate();
            let rhs = a * f.integrate() + b * h.integrate();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn level_set_monotone(k1 in 0.01f64..2.0, k2 in 0.01f64..2.0) {
            let g = GridSpec::interval(-1.0, 1.0, 32, 2.0, 8).build().unwrap();
            let u = SpaceTimeField::from_fn(g, |x, t| (x[0] * 2.0).sin() * (1.0 + t));
            let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
            prop_assert!(u.level_set_measure(hi) <= u.level_set_measure(lo));
            prop_assert!(u.level_set_measure(lo) <= g.space_time_volume() + 1e-12);
        }
    }
}
