//! Command-line front end: reads JSON problem specs, runs the solvers and
//! pipelines, and writes CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 input error, 2 invariant or bound violation.
//! Outputs depend only on the config, flags and seed.

mod config;
mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::elliptic::{check_enca, solve_elliptic_detailed, EllipticProblem};
use crate::grid::{Field, Grid, SpaceTimeField};
use crate::measures::SpaceTimeMeasure;
use crate::parabolic::{
    comparison_solve, levelset_decay_check, renormalized_residual, solve_parabolic, ParabolicProblem, Perturbation,
    Solution, TestBump,
};
use crate::pipelines::{
    absorption_general, exponential_absorption, iterate_exponential_source, iterate_power_source, smallness_constants,
    subcritical_absorption, subcritical_source, wolff_composition_check, AbsorptionData, ConstantsReport, ExpGateMode,
    ExpSourceSettings, IterationStatus, IterationTrace, LevelReport,
};
use crate::potential::{
    capacity_upper, delta0, exponents, maximal_field, wolff_field, Ball, RadialQuadrature, DEFAULT_NODES,
};
use crate::Error;

pub use config::{Config, Failure};
use config::{input, require, CliResult, PotentialKind};
pub use report::report;

#[derive(Debug, Parser)]
#[command(name = "plaplab", version, about = "p-Laplace evolution equations with measure data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON problem specification.
    #[arg(long, global = true, alias = "problem")]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Relative slack for bound checks.
    #[arg(long, global = true, default_value_t = 0.05)]
    slack: f64,
    /// Override the cells per axis.
    #[arg(long, global = true)]
    cells: Option<usize>,
    /// Override the number of time steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Seed for randomized sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical exponents p_c, p_e, p_1.
    Exponents {
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        p: f64,
    },
    /// Wolff or maximal potential of ω on the grid.
    Potential,
    /// Upper bound on the Bessel capacity of a union of balls.
    Capacity,
    /// Elliptic Dirichlet problem with measure data.
    SolveElliptic,
    /// Parabolic problem with measure data.
    Solve,
    /// Existence constructions.
    #[command(subcommand)]
    Pipeline(Pipeline),
    /// Diagnostics on computed solutions.
    #[command(subcommand)]
    Verify(Verify),
    /// Markdown summary of an output directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Subcommand)]
enum Pipeline {
    /// General absorption, optionally exponential with its gate.
    Absorption,
    /// Monotone iteration for the power source.
    Source,
    /// Monotone iteration for the truncated-exponential source.
    ExpSource,
    /// Subcritical absorption or source with mollified data.
    Subcritical,
}

#[derive(Debug, Subcommand)]
enum Verify {
    /// Renormalized weak-identity residuals.
    Residual,
    /// Level-set decay fit.
    Decay,
    /// Ordered data pairs keep their order.
    Comparison,
}

/// Accumulates artifacts and violations of one run.
struct Run {
    command: &'static str,
    out: Option<PathBuf>,
    violations: Vec<String>,
}

impl Run {
    fn out_dir(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| input("missing flag `--out`"))
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| input(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    fn violate(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "command": self.command,
            "status": if self.violations.is_empty() { "ok" } else { "violation" },
            "violations": self.violations,
        })
    }
}

fn load(common: &Common) -> CliResult<Config> {
    let path = common.config.as_ref().ok_or_else(|| input("missing flag `--config`"))?;
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    Config::parse(&text)
}

/// Parses `args` and runs the command; returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let common = cli.common;
    if !(common.tol > 0.0) || !(common.slack >= 0.0) {
        return Err(input("need --tol > 0 and --slack ≥ 0"));
    }
    let name = match &cli.command {
        Command::Exponents { .. } => "exponents",
        Command::Potential => "potential",
        Command::Capacity => "capacity",
        Command::SolveElliptic => "solve-elliptic",
        Command::Solve => "solve",
        Command::Pipeline(Pipeline::Absorption) => "pipeline absorption",
        Command::Pipeline(Pipeline::Source) => "pipeline source",
        Command::Pipeline(Pipeline::ExpSource) => "pipeline exp-source",
        Command::Pipeline(Pipeline::Subcritical) => "pipeline subcritical",
        Command::Verify(Verify::Residual) => "verify residual",
        Command::Verify(Verify::Decay) => "verify decay",
        Command::Verify(Verify::Comparison) => "verify comparison",
        Command::Report { dir } => {
            print!("{}", report(dir)?);
            return Ok(0);
        }
    };
    let mut run = Run {
        command: name,
        out: common.out.clone(),
        violations: Vec::new(),
    };
    if let Command::Exponents { n, p } = cli.command {
        let e = exponents(n, p)?;
        println!("{}", serde_json::to_string(&e).map_err(|e| input(e.to_string()))?);
        run.json(
            "constants.json",
            &ConstantsReport {
                exponents: Some(e),
                ..Default::default()
            },
        )?;
    } else {
        let cfg = load(&common)?;
        run.out_dir()?;
        let result = match cli.command {
            Command::Potential => potential(&cfg, &common, &mut run),
            Command::Capacity => capacity(&cfg, &common, &mut run),
            Command::SolveElliptic => elliptic(&cfg, &common, &mut run),
            Command::Solve => solve(&cfg, &common, &mut run),
            Command::Pipeline(Pipeline::Absorption) => absorption(&cfg, &common, &mut run),
            Command::Pipeline(Pipeline::Source) => power_source(&cfg, &common, &mut run),
            Command::Pipeline(Pipeline::ExpSource) => exp_source(&cfg, &common, &mut run),
            Command::Pipeline(Pipeline::Subcritical) => subcritical(&cfg, &common, &mut run),
            Command::Verify(Verify::Residual) => residual(&cfg, &common, &mut run),
            Command::Verify(Verify::Decay) => decay(&cfg, &common, &mut run),
            Command::Verify(Verify::Comparison) => comparison(&cfg, &common, &mut run),
            Command::Exponents { .. } | Command::Report { .. } => unreachable!(),
        };
        // solver-level violations still leave a run record behind
        if let Err(Failure::Violation(msg)) = &result {
            run.violate(msg.clone());
        } else {
            result?;
        }
    }
    let summary = run.summary();
    run.json("run.json", &summary)?;
    if run.command != "exponents" {
        println!("{summary}");
    }
    Ok(if run.violations.is_empty() { 0 } else { 2 })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn coords(grid: &Grid, x: &[f64; 2]) -> String {
    if grid.dim() == 1 {
        num(x[0])
    } else {
        format!("{},{}", num(x[0]), num(x[1]))
    }
}

fn space_header(grid: &Grid) -> &'static str {
    if grid.dim() == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn field_csv(f: &Field, name: &str) -> String {
    let g = f.grid();
    let mut s = format!("{},{name}\n", space_header(g));
    for (x, v) in g.centers().zip(f.values()) {
        let _ = writeln!(s, "{},{}", coords(g, &x), num(*v));
    }
    s
}

/// Rows `(t, x[, y], u)`, starting with the initial data at `t = 0`.
fn solution_csv(u0: &Field, u: &SpaceTimeField) -> String {
    let g = u.grid();
    let mut s = format!("t,{},u\n", space_header(g));
    let centers: Vec<_> = g.centers().collect();
    let mut emit = |t: f64, vals: &[f64]| {
        for (x, v) in centers.iter().zip(vals) {
            let _ = writeln!(s, "{},{},{}", num(t), coords(g, x), num(*v));
        }
    };
    emit(0.0, u0.values());
    for n in 0..g.steps() {
        emit(g.time(n + 1), u.step(n));
    }
    s
}

fn levels_csv(levels: &[LevelReport], slack: f64) -> String {
    let mut s = String::from("level,g_mass,bound,distance,within\n");
    for l in levels {
        let d = l.distance.map_or_else(|| "NaN".into(), num);
        let _ = writeln!(s, "{},{},{},{d},{}", l.level, num(l.g_mass), num(l.bound), l.within(slack));
    }
    s
}

fn write_solution(run: &Run, sol: &Solution) -> CliResult<()> {
    run.write("solution.csv", &solution_csv(&sol.u0, &sol.u))?;
    run.json(
        "diagnostics.json",
        &json!({
            "steps": sol.steps,
            "warnings": sol.warnings,
            "g_mass": sol.g_mass(),
            "sup": sol.u.norm_inf(),
        }),
    )
}

fn grid_of(cfg: &Config, common: &Common) -> CliResult<Grid> {
    cfg.grid(common.cells, common.steps)
}

fn potential(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let p = cfg.p()?;
    let omega = cfg.omega(g)?;
    let quad = RadialQuadrature::for_grid(&g, 2.0 * g.diameter()).with_nodes(cfg.nodes.unwrap_or(DEFAULT_NODES));
    let (f, name) = match cfg.potential.unwrap_or(PotentialKind::Wolff) {
        PotentialKind::Wolff => (wolff_field(&omega, p, &quad)?, "wolff"),
        PotentialKind::Maximal => (maximal_field(&omega, p, require(&cfg.eta, "eta")?, &quad)?, "maximal"),
    };
    run.write("field.csv", &field_csv(&f.field, name))?;
    run.json(
        "constants.json",
        &ConstantsReport {
            exponents: Some(exponents(g.dim(), p)?),
            ..Default::default()
        },
    )?;
    run.json("potential.json", &json!({ "kind": name, "max": f.field.max(), "radius": f.radius, "nodes": f.nodes }))
}

fn capacity(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let alpha = require(&cfg.alpha, "alpha")?;
    let s = require(&cfg.s, "s")?;
    let balls = require(&cfg.balls, "balls")?
        .iter()
        .map(|b| {
            let center = match b.center.as_slice() {
                [a] => [*a, 0.0],
                [a, c] => [*a, *c],
                _ => return Err(input("balls: centers need 1 or 2 coordinates")),
            };
            Ok(Ball { center, radius: b.radius })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let point_radius = cfg.point_radius.unwrap_or(g.h() / 4.0);
    let bound = capacity_upper(&balls, alpha, s, &g, point_radius)?;
    run.json("capacity.json", &json!({ "alpha": alpha, "s": s, "balls": balls.len(), "upper_bound": bound }))
}

fn elliptic(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let p = cfg.p()?;
    let omega = cfg.omega(g)?;
    let mut prob = EllipticProblem::new(omega.clone(), p);
    prob.weight = cfg.weight(g)?;
    prob.mollify_level = cfg.mollify_level;
    let sol = solve_elliptic_detailed(&prob, common.tol)?;
    let cap = cfg.kappa_cap.unwrap_or(f64::INFINITY);
    let enca = check_enca(&sol.u, &omega, p, cap)?;
    run.write("field.csv", &field_csv(&sol.u, "u"))?;
    run.json(
        "constants.json",
        &ConstantsReport {
            exponents: Some(exponents(g.dim(), p)?),
            kappa_hat: Some(enca.kappa),
            ..Default::default()
        },
    )?;
    run.json(
        "diagnostics.json",
        &json!({
            "iterations": sol.stats.iterations,
            "residual": sol.stats.residual,
            "cg_iterations": sol.stats.cg_iterations,
            "enca": enca,
        }),
    )?;
    if !enca.holds {
        run.violate(format!("κ̂ = {} exceeds κ_cap = {cap}", enca.kappa));
    }
    Ok(())
}

fn solve(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let prob = cfg.parabolic(g)?;
    let sol = solve_parabolic(&prob, common.tol)?;
    write_solution(run, &sol)?;
    run.json(
        "constants.json",
        &ConstantsReport {
            exponents: Some(exponents(g.dim(), prob.p)?),
            ..Default::default()
        },
    )
}

fn absorption_data(cfg: &Config, g: Grid) -> CliResult<AbsorptionData> {
    let profile = match &cfg.profile {
        Some(e) => e.compile("profile")?.profile(g)?,
        None => vec![1.0; g.steps()],
    };
    let f = cfg.f.as_ref().map(|e| e.compile("f")?.space_time(g)).transpose()?;
    let g_fn = match (&cfg.g, &cfg.exponential) {
        (Some(n), _) => *n,
        (None, Some(e)) => crate::Nonlinearity::Exponential { tau: e.tau, beta: e.beta },
        (None, None) => return Err(input("missing field `g`")),
    };
    Ok(AbsorptionData {
        mu: cfg.mu(g)?,
        omega: cfg.omega(g)?,
        profile,
        f,
        u0: cfg.u0(g)?,
        p: cfg.p()?,
        g: g_fn,
    })
}

const DEFAULT_LEVELS: [usize; 4] = [2, 4, 8, 16];

fn absorption(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let data = absorption_data(cfg, g)?;
    let levels = cfg.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let mut constants = ConstantsReport {
        exponents: Some(exponents(g.dim(), data.p)?),
        ..Default::default()
    };
    let result = match &cfg.exponential {
        Some(e) => {
            let mode = e.mode.ok_or_else(|| input("missing field `exponential.mode`"))?;
            let (gate, result) = exponential_absorption(&data, e.beta, e.tau, mode, &levels, common.tol)?;
            run.json("gate.json", &gate)?;
            constants.delta0 = Some(delta0(data.p, e.beta)?);
            if let ExpGateMode::Smallness { .. } = mode {
                constants.m0 = gate.threshold;
            }
            if !gate.passed {
                run.violate(format!("exponential gate failed: norm {} vs threshold {:?}", gate.norm, gate.threshold));
            }
            result
        }
        None => Some(absorption_general(&data, &levels, common.tol)?),
    };
    if let Some(res) = result {
        run.write("levels.csv", &levels_csv(&res.run.levels, common.slack))?;
        write_solution(run, &res.run.solution)?;
        for l in res.run.levels.iter().filter(|l| !l.within(common.slack)) {
            run.violate(format!("level {}: ∫|G(u_n)| = {} exceeds bound {}", l.level, l.g_mass, l.bound));
        }
        if let Some(b) = res.bound {
            constants.kappa_hat = Some(b.kappa);
            run.json("bound.json", &b)?;
            if !b.holds {
                run.violate(format!("|u| ≤ κ̂ W[γ] + ‖u₀‖∞ fails with margin {}", b.margin));
            }
        }
    }
    run.json("constants.json", &constants)
}

/// `κ̂` from the elliptic problem with data `ω`.
fn empirical_kappa(omega: &crate::SpatialMeasure, p: f64, tol: f64) -> CliResult<f64> {
    if omega.is_zero() {
        return Ok(1.0);
    }
    let u = crate::elliptic::solve_elliptic(&EllipticProblem::new(omega.clone(), p), tol)?;
    Ok(check_enca(&u, omega, p, f64::INFINITY)?.kappa)
}

fn source_measure(cfg: &Config, omega: &crate::SpatialMeasure) -> CliResult<SpaceTimeMeasure> {
    match &cfg.mu {
        Some(m) => m.build(*omega.grid(), "mu"),
        None => Ok(SpaceTimeMeasure::product(omega, &vec![1.0; omega.grid().steps()])?),
    }
}

fn trace_violations(run: &mut Run, trace: &IterationTrace) {
    match trace.status {
        IterationStatus::Converged => {}
        IterationStatus::BlowUp => run.violate(format!("blow-up at iteration {}", trace.blow_up_at.unwrap_or(0))),
        IterationStatus::Cap => run.violate("iteration cap reached without convergence"),
    }
    let margin = trace.min_margin();
    if margin < 0.0 {
        run.violate(format!("envelope margin {margin} < 0"));
    }
    if !trace.monotone {
        run.violate("iterates are not monotone");
    }
}

fn trace_summary(trace: &IterationTrace) -> serde_json::Value {
    json!({
        "status": trace.status,
        "iterations": trace.rows.len(),
        "blow_up_at": trace.blow_up_at,
        "monotone": trace.monotone,
        "gate_passed": trace.gate_passed,
        "min_margin": trace.min_margin(),
    })
}

fn power_source(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let p = cfg.p()?;
    let q = require(&cfg.q, "q")?;
    let omega = cfg.omega(g)?;
    let mu = source_measure(cfg, &omega)?;
    let u0 = cfg.u0(g)?;
    let lambda = require(&cfg.lambda, "lambda")?;
    let kappa = match cfg.kappa {
        Some(k) => k,
        None => empirical_kappa(&omega, p, common.tol)?,
    };
    let m_hat = match cfg.m_hat {
        Some(m) => m,
        None if omega.is_zero() => 1.0,
        None => wolff_composition_check(&omega, p, q, lambda, cfg.nodes.unwrap_or(DEFAULT_NODES))?,
    };
    let c = smallness_constants(g.dim(), p, q, kappa, g.diameter(), m_hat)?;
    let constants = ConstantsReport {
        exponents: Some(exponents(g.dim(), p)?),
        kappa_hat: Some(kappa),
        m_hat: Some(m_hat),
        ..Default::default()
    }
    .with_smallness(&c);
    run.json("constants.json", &constants)?;
    let res = iterate_power_source(&omega, &mu, &u0, p, &c, lambda, cfg.m_max.unwrap_or(30), common.tol)?;
    run.write("trace.csv", &res.trace.to_csv())?;
    run.write("envelope.csv", &field_csv(&res.envelope, "envelope"))?;
    if let Some(sol) = &res.solution {
        write_solution(run, sol)?;
    }
    let mut summary = trace_summary(&res.trace);
    summary["final_margin"] = json!(res.final_margin);
    run.json("iteration.json", &summary)?;
    trace_violations(run, &res.trace);
    Ok(())
}

fn exp_source(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let p = cfg.p()?;
    let e = require(&cfg.exponential, "exponential")?;
    let omega = cfg.omega(g)?;
    let mu = source_measure(cfg, &omega)?;
    let u0 = cfg.u0(g)?;
    let kappa = match cfg.kappa {
        Some(k) => k,
        None => empirical_kappa(&omega, p, common.tol)?,
    };
    let s = ExpSourceSettings {
        beta: e.beta,
        tau: e.tau,
        l: e.l.ok_or_else(|| input("missing field `exponential.l`"))?,
        kappa,
        b0: e.b0.unwrap_or_else(|| u0.norm_inf()),
        m0: e.m0,
    };
    let res = iterate_exponential_source(&omega, &mu, &u0, p, &s, cfg.m_max.unwrap_or(30), common.tol)?;
    let constants = ConstantsReport {
        exponents: Some(exponents(g.dim(), p)?),
        kappa_hat: Some(kappa),
        b0: Some(s.b0),
        c_p: Some(crate::pipelines::c_p(p)),
        delta0: if e.beta > 1.0 { Some(delta0(p, e.beta)?) } else { None },
        m0: res.m0,
        ..Default::default()
    };
    run.json("constants.json", &constants)?;
    run.write("trace.csv", &res.trace.to_csv())?;
    run.write("envelope.csv", &field_csv(&res.envelope, "envelope"))?;
    if let Some(sol) = &res.solution {
        write_solution(run, sol)?;
    }
    let mut summary = trace_summary(&res.trace);
    summary["maximal_norm"] = json!(res.maximal_norm);
    summary["exp_integrable"] = json!(res.exp_integrable);
    run.json("iteration.json", &summary)?;
    trace_violations(run, &res.trace);
    Ok(())
}

fn subcritical(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let prob = cfg.parabolic(g)?;
    run.json(
        "constants.json",
        &ConstantsReport {
            exponents: Some(exponents(g.dim(), prob.p)?),
            ..Default::default()
        },
    )?;
    match prob.perturbation {
        Perturbation::Absorption { .. } => {
            let levels = cfg.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
            let res = subcritical_absorption(&prob, &levels, common.tol)?;
            run.write("levels.csv", &levels_csv(&res.levels, common.slack))?;
            run.json("tails.json", &res.levels.iter().map(|l| json!({"level": l.level, "tail": l.tail})).collect::<Vec<_>>())?;
            write_solution(run, &res.solution)?;
            for l in res.levels.iter().filter(|l| !l.within(common.slack)) {
                run.violate(format!("level {}: ∫|G(u_n)| = {} exceeds bound {}", l.level, l.g_mass, l.bound));
            }
        }
        Perturbation::Source { g: gf, coef } => {
            let mut base = prob.clone();
            base.perturbation = Perturbation::None;
            let budget = require(&cfg.eps_budget, "eps_budget")?;
            let res = subcritical_source(&base, gf, coef, budget, common.tol, cfg.m_max.unwrap_or(30))?;
            run.write("trace.csv", &res.trace.to_csv())?;
            if let Some(sol) = &res.solution {
                write_solution(run, sol)?;
            }
            run.json("iteration.json", &trace_summary(&res.trace))?;
            trace_violations(run, &res.trace);
        }
        Perturbation::None => return Err(input("perturbation: subcritical pipeline needs an absorption or source term")),
    }
    Ok(())
}

fn residual(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let prob = cfg.parabolic(g)?;
    let sol = solve_parabolic(&prob, common.tol)?;
    let k_list = match &cfg.k_list {
        Some(k) => k.clone(),
        None => {
            let sup = sol.u.norm_inf().max(f64::MIN_POSITIVE);
            vec![0.25 * sup, 0.5 * sup, sup]
        }
    };
    let entries = renormalized_residual(&sol, &k_list, &TestBump::family(&g))?;
    let mut s = String::from("k,bump,residual\n");
    for e in &entries {
        let _ = writeln!(s, "{},{},{}", num(e.k), e.bump, num(e.residual));
    }
    run.write("residual.csv", &s)?;
    let max = entries.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
    run.json("residual.json", &json!({ "max_abs_residual": max, "entries": entries.len() }))
}

/// Decay fits steeper than `−p_c + DECAY_SLACK` pass.
const DECAY_SLACK: f64 = 0.2;

fn decay(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let g = grid_of(cfg, common)?;
    let prob = cfg.parabolic(g)?;
    let sol = solve_parabolic(&prob, common.tol)?;
    let fit = levelset_decay_check(&sol, prob.data_mass())?;
    let holds = fit.exponent.is_none_or(|e| e <= -fit.p_c + DECAY_SLACK);
    run.json(
        "constants.json",
        &ConstantsReport {
            exponents: Some(exponents(g.dim(), prob.p)?),
            c_hat: Some(fit.c_hat),
            decay_exponent: fit.exponent,
            ..Default::default()
        },
    )?;
    run.json("decay.json", &json!({ "fit": fit, "holds": holds, "data_mass": prob.data_mass() }))?;
    if !holds {
        run.violate(format!("fitted exponent {:?} above −p_c + {DECAY_SLACK}", fit.exponent));
    }
    Ok(())
}

/// Random ordered pair: bump densities with `ν − μ ≥ 0`, an optional shared
/// atom with the larger mass on top, and ordered initial data.
fn random_pair(g: Grid, p: f64, rng: &mut ChaCha8Rng) -> CliResult<(ParabolicProblem, ParabolicProblem)> {
    let (lo, hi) = (g.lower(), g.upper());
    let mut bump = || {
        let c = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..=hi[1])];
        let w = 0.3 * g.diameter() * rng.gen_range(0.2..1.0);
        let a = rng.gen_range(0.0..5.0);
        move |x: [f64; 2]| {
            let d = (x[0] - c[0]).powi(2) + if g.dim() == 2 { (x[1] - c[1]).powi(2) } else { 0.0 };
            a * (1.0 - d / (w * w)).max(0.0)
        }
    };
    let (f1, f2) = (bump(), bump());
    let lower = SpaceTimeField::from_fn(g, |x, t| f1(x) * (1.0 + t));
    let upper = SpaceTimeField::from_fn(g, |x, t| f1(x) * (1.0 + t) + f2(x));
    let mut mu = SpaceTimeMeasure::from_density(&lower);
    let mut nu = SpaceTimeMeasure::from_density(&upper);
    if rng.gen_bool(0.5) {
        let mid = |a: f64, b: f64, s: f64| a + (b - a) * (0.1 + 0.8 * s);
        let x = [mid(lo[0], hi[0], rng.gen()), mid(lo[1], hi[1], rng.gen())];
        let t = mid(0.0, g.t_final(), rng.gen());
        let m = rng.gen_range(0.0..1.0);
        nu.push_atom(x, t, m)?;
        if rng.gen_bool(0.5) {
            mu.push_atom(x, t, 0.5 * m)?;
        }
    }
    let (a0, a1) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
    let profile = |x: [f64; 2]| {
        let s = |v: f64, a: f64, b: f64| (v - a) * (b - v) * 4.0 / ((b - a) * (b - a));
        s(x[0], lo[0], hi[0]) * if g.dim() == 2 { s(x[1], lo[1], hi[1]) } else { 1.0 }
    };
    let u0 = Field::from_fn(g, |x| a0 * profile(x));
    let v0 = Field::from_fn(g, |x| (a0 + a1) * profile(x));
    Ok((ParabolicProblem::new(mu, u0, p), ParabolicProblem::new(nu, v0, p)))
}

fn comparison(cfg: &Config, common: &Common, run: &mut Run) -> CliResult<()> {
    let pairs: Vec<(ParabolicProblem, ParabolicProblem)> = match (&cfg.lower, &cfg.upper) {
        (Some(l), Some(u)) => {
            let g = l.grid(common.cells, common.steps)?;
            vec![(l.parabolic(g)?, u.parabolic(u.grid(common.cells, common.steps)?)?)]
        }
        (None, None) => {
            let g = grid_of(cfg, common)?;
            let p = cfg.p()?;
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            (0..cfg.pairs.unwrap_or(20)).map(|_| random_pair(g, p, &mut rng)).collect::<CliResult<_>>()?
        }
        _ => return Err(input("comparison needs both `lower` and `upper`, or neither")),
    };
    let mut s = String::from("trial,max_excess,status\n");
    for (i, (lo, hi)) in pairs.iter().enumerate() {
        match comparison_solve(lo, hi, common.tol) {
            Ok((u, v)) => {
                let excess = u.u.values().iter().zip(v.u.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(s, "{i},{},ok", num(excess));
            }
            Err(Error::Invariant(msg)) => {
                let _ = writeln!(s, "{i},NaN,violated");
                run.violate(format!("trial {i}: {msg}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    run.write("comparison.csv", &s)
}
