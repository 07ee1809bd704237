//! JSON problem specifications and their conversion to library types.
//!
//! Densities, profiles, initial data and weights are either numbers or
//! expressions in `x`, `y`, `t` (e.g. `"cos(pi*x/2)*(1+t)"`). Integer
//! literals are read as floats, so `1/2` is `0.5`.

use std::fmt;

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, EvalexprError,
    Function, HashMapContext, Node, Value,
};
use serde::Deserialize;

use crate::elliptic::Weight;
use crate::grid::{Field, Grid, GridSpec, Point, SpaceTimeField};
use crate::measures::{SpaceTimeMeasure, SpatialMeasure};
use crate::nonlinearity::Nonlinearity;
use crate::parabolic::{ParabolicProblem, Perturbation};
use crate::pipelines::ExpGateMode;
use crate::Error;

type Unary = fn(f64) -> f64;

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Input(String),
    Violation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Violation(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Violation(m) => write!(f, "violation: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid { .. } | Error::Io(_) | Error::Json(_) => Failure::Input(e.to_string()),
            Error::Invariant(_) | Error::BlowUp { .. } | Error::NonConvergence { .. } => Failure::Violation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

/// A number or an expression in `x`, `y`, `t`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Number(f64),
    Text(String),
}

/// Appends `.0` to bare integer literals so that arithmetic is in floats.
fn floatify(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let starts_number = c.is_ascii_digit() && !prev.is_some_and(|p| p.is_alphanumeric() || p == '_' || p == '.');
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        while i < chars.len() && chars[i].is_ascii_digit() {
            out.push(chars[i]);
            i += 1;
        }
        let next = chars.get(i).copied();
        if !matches!(next, Some('.') | Some('e') | Some('E')) {
            out.push_str(".0");
        }
    }
    out
}

fn unary(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?))))
}

/// Compiled expression with its evaluation context.
pub struct Compiled {
    node: Option<Node<DefaultNumericTypes>>,
    constant: f64,
    context: HashMapContext<DefaultNumericTypes>,
    field: &'static str,
}

impl Expr {
    pub fn compile(&self, field: &'static str) -> CliResult<Compiled> {
        let mut context = HashMapContext::<DefaultNumericTypes>::new();
        let (node, constant) = match self {
            Expr::Number(v) => (None, *v),
            Expr::Text(s) => {
                let node = build_operator_tree::<DefaultNumericTypes>(&floatify(s))
                    .map_err(|e| input(format!("{field}: cannot parse {s:?}: {e}")))?;
                let fns: [(&str, Unary); 11] = [
                    ("sin", f64::sin),
                    ("cos", f64::cos),
                    ("tan", f64::tan),
                    ("exp", f64::exp),
                    ("ln", f64::ln),
                    ("sqrt", f64::sqrt),
                    ("abs", f64::abs),
                    ("sinh", f64::sinh),
                    ("cosh", f64::cosh),
                    ("tanh", f64::tanh),
                    ("sign", f64::signum),
                ];
                for (name, f) in fns {
                    context.set_function(name.into(), unary(f)).expect("mutable context");
                }
                context
                    .set_value("pi".into(), Value::Float(std::f64::consts::PI))
                    .expect("mutable context");
                (Some(node), 0.0)
            }
        };
        Ok(Compiled {
            node,
            constant,
            context,
            field,
        })
    }
}

impl Compiled {
    pub fn eval(&mut self, x: &Point, t: f64) -> CliResult<f64> {
        let Some(node) = &self.node else {
            return Ok(self.constant);
        };
        for (name, v) in [("x", x[0]), ("y", x[1]), ("t", t)] {
            self.context.set_value(name.into(), Value::Float(v)).expect("mutable context");
        }
        let v = node.eval_number_with_context(&self.context).map_err(|e: EvalexprError<DefaultNumericTypes>| {
            input(format!("{}: evaluation failed at x={:?}, t={t}: {e}", self.field, x))
        })?;
        if !v.is_finite() {
            return Err(input(format!("{}: non-finite value at x={x:?}, t={t}", self.field)));
        }
        Ok(v)
    }

    pub fn field(&mut self, grid: Grid) -> CliResult<Field> {
        let vals = grid.centers().map(|x| self.eval(&x, 0.0)).collect::<CliResult<Vec<_>>>()?;
        Ok(Field::new(grid, vals)?)
    }

    /// Samples at the end of each step, matching [`SpaceTimeField::from_fn`].
    pub fn space_time(&mut self, grid: Grid) -> CliResult<SpaceTimeField> {
        let mut vals = Vec::with_capacity(grid.n_cells() * grid.steps());
        for n in 1..=grid.steps() {
            let t = grid.time(n);
            for x in grid.centers() {
                vals.push(self.eval(&x, t)?);
            }
        }
        Ok(SpaceTimeField::new(grid, vals)?)
    }

    /// One value per step, at the end of the step.
    pub fn profile(&mut self, grid: Grid) -> CliResult<Vec<f64>> {
        (1..=grid.steps()).map(|n| self.eval(&[0.0, 0.0], grid.time(n))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    #[serde(rename = "T", default = "one")]
    pub t_final: f64,
    #[serde(default = "one_step")]
    pub steps: usize,
}

fn one() -> f64 {
    1.0
}

fn one_step() -> usize {
    1
}

impl GridConfig {
    pub fn build(&self, cells: Option<usize>, steps: Option<usize>) -> CliResult<Grid> {
        let steps = steps.unwrap_or(self.steps);
        let spec = match (self.bounds.as_slice(), self.cells.as_slice()) {
            ([b], [c]) => GridSpec::interval(b[0], b[1], cells.unwrap_or(*c), self.t_final, steps),
            ([b0, b1], [c0, c1]) => {
                let c = cells.map_or([*c0, *c1], |c| [c, c]);
                GridSpec::rectangle([*b0, *b1], c, self.t_final, steps)
            }
            _ => return Err(input("grid: bounds and cells need one entry per axis (1 or 2 axes)")),
        };
        Ok(spec.build()?)
    }
}

fn point(x: &[f64], field: &str) -> CliResult<Point> {
    match x {
        [a] => Ok([*a, 0.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(input(format!("{field}: points need 1 or 2 coordinates, got {}", x.len()))),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub x: Vec<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    pub mass: f64,
}

/// Spatial measure: atoms plus an optional density.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Option<Expr>,
}

impl MeasureSpec {
    pub fn build(&self, grid: Grid, field: &'static str) -> CliResult<SpatialMeasure> {
        let mut m = match &self.density {
            Some(d) => SpatialMeasure::from_density(&d.compile(field)?.field(grid)?),
            None => SpatialMeasure::zero(grid),
        };
        for a in &self.atoms {
            if a.t.is_some() {
                return Err(input(format!("{field}: spatial atoms take no time coordinate")));
            }
            m.push_atom(point(&a.x, field)?, a.mass)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSpec {
    pub omega: MeasureSpec,
    pub profile: Expr,
}

/// Space-time measure: atoms `(x, t)`, a density in `(x, y, t)` and
/// products `ω ⊗ F(t)`.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTimeSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Option<Expr>,
    #[serde(default)]
    pub products: Vec<ProductSpec>,
}

impl SpaceTimeSpec {
    pub fn build(&self, grid: Grid, field: &'static str) -> CliResult<SpaceTimeMeasure> {
        let mut m = match &self.density {
            Some(d) => SpaceTimeMeasure::from_density(&d.compile(field)?.space_time(grid)?),
            None => SpaceTimeMeasure::zero(grid),
        };
        for a in &self.atoms {
            let t = a.t.ok_or_else(|| input(format!("{field}: space-time atoms need a time `t`")))?;
            m.push_atom(point(&a.x, field)?, t, a.mass)?;
        }
        for p in &self.products {
            let om = p.omega.build(grid, field)?;
            m.push_product(om, p.profile.compile(field)?.profile(grid)?)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub a: Expr,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl WeightSpec {
    pub fn build(&self, grid: Grid) -> CliResult<Weight> {
        let f = self.a.compile("weight")?.field(grid)?;
        Ok(Weight::new(f.into_values(), self.lambda1, self.lambda2)?)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Wolff,
    Maximal,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialSpec {
    pub beta: f64,
    pub tau: f64,
    /// Truncation order for the exponential source.
    #[serde(default)]
    pub l: Option<u32>,
    #[serde(default)]
    pub mode: Option<ExpGateMode>,
    #[serde(default)]
    pub b0: Option<f64>,
    #[serde(default)]
    pub m0: Option<f64>,
}

/// Union of all command inputs; each command reads the fields it needs
/// and reports missing ones by name.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: Option<GridConfig>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub omega: Option<MeasureSpec>,
    pub mu: Option<SpaceTimeSpec>,
    pub u0: Option<Expr>,
    pub forcing: Option<Expr>,
    pub weight: Option<WeightSpec>,
    pub perturbation: Option<Perturbation>,
    pub g: Option<Nonlinearity>,
    /// Time profile `F` bounding `μ` by `ω ⊗ F`.
    pub profile: Option<Expr>,
    /// Diffuse part `f` of the absorption data.
    pub f: Option<Expr>,
    pub mollify_level: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_cap: Option<f64>,
    pub m_hat: Option<f64>,
    pub m_max: Option<usize>,
    pub eps_budget: Option<f64>,
    pub exponential: Option<ExponentialSpec>,
    pub potential: Option<PotentialKind>,
    pub eta: Option<f64>,
    pub nodes: Option<usize>,
    pub alpha: Option<f64>,
    pub s: Option<f64>,
    pub balls: Option<Vec<BallSpec>>,
    pub point_radius: Option<f64>,
    pub k_list: Option<Vec<f64>>,
    pub pairs: Option<usize>,
    pub lower: Option<Box<Config>>,
    pub upper: Option<Box<Config>>,
}

pub fn require<T: Clone>(v: &Option<T>, field: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| input(format!("missing field `{field}`")))
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| input(format!("config: {e}")))
    }

    pub fn grid(&self, cells: Option<usize>, steps: Option<usize>) -> CliResult<Grid> {
        self.grid.as_ref().ok_or_else(|| input("missing field `grid`"))?.build(cells, steps)
    }

    pub fn p(&self) -> CliResult<f64> {
        require(&self.p, "p")
    }

    pub fn omega(&self, grid: Grid) -> CliResult<SpatialMeasure> {
        self.omega.as_ref().map_or(Ok(SpatialMeasure::zero(grid)), |m| m.build(grid, "omega"))
    }

    pub fn mu(&self, grid: Grid) -> CliResult<SpaceTimeMeasure> {
        self.mu.as_ref().map_or(Ok(SpaceTimeMeasure::zero(grid)), |m| m.build(grid, "mu"))
    }

    pub fn u0(&self, grid: Grid) -> CliResult<Field> {
        self.u0.as_ref().map_or(Ok(Field::zeros(grid)), |e| e.compile("u0")?.field(grid))
    }

    pub fn weight(&self, grid: Grid) -> CliResult<Option<Weight>> {
        self.weight.as_ref().map(|w| w.build(grid)).transpose()
    }

    pub fn parabolic(&self, grid: Grid) -> CliResult<ParabolicProblem> {
        let mut prob = ParabolicProblem::new(self.mu(grid)?, self.u0(grid)?, self.p()?);
        prob.perturbation = self.perturbation.unwrap_or(Perturbation::None);
        prob.weight = self.weight(grid)?;
        prob.mollify_level = self.mollify_level;
        prob.forcing = self.forcing.as_ref().map(|e| e.compile("forcing")?.space_time(grid)).transpose()?;
        Ok(prob)
    }
}
