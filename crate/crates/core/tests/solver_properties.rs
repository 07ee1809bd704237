use plaplab::elliptic::{solve_elliptic, solve_elliptic_detailed, EllipticProblem};
use plaplab::parabolic::{solve_parabolic, truncate, ParabolicProblem, Perturbation};
use plaplab::{Field, Grid, GridSpec, Nonlinearity, SpaceTimeField, SpaceTimeMeasure, SpatialMeasure};
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn line(cells: usize, t: f64, steps: usize) -> Grid {
    GridSpec::interval(-1.0, 1.0, cells, t, steps).build().unwrap()
}

/// Density `a (1 − ((x−c)/w)²)⁺` plus an optional atom.
fn bump_measure(g: Grid, (c, w, a): (f64, f64, f64), atom: Option<(f64, f64)>) -> SpatialMeasure {
    let mut m = SpatialMeasure::from_density(&Field::from_fn(g, |x| a * (1.0 - ((x[0] - c) / w).powi(2)).max(0.0)));
    if let Some((x, mass)) = atom {
        m.push_atom([x, 0.0], mass).unwrap();
    }
    m
}

fn bump() -> impl Strategy<Value = (f64, f64, f64)> {
    (-0.6f64..0.6, 0.1f64..0.8, 0.0f64..4.0)
}

fn atom() -> impl Strategy<Value = Option<(f64, f64)>> {
    proptest::option::of((-0.8f64..0.8, 0.0f64..1.0))
}

fn max_excess(u: &Field, v: &Field) -> f64 {
    u.values().iter().zip(v.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn elliptic_comparison(b1 in bump(), b2 in bump(), a in atom(), p in prop::sample::select(vec![2.0, 2.5, 3.0])) {
        let g = line(60, 1.0, 1);
        let small = bump_measure(g, b1, a);
        let big = small.add(&bump_measure(g, b2, None)).unwrap();
        let u = solve_elliptic(&EllipticProblem::new(small, p), TOL).unwrap();
        let v = solve_elliptic(&EllipticProblem::new(big, p), TOL).unwrap();
        prop_assert!(max_excess(&u, &v) <= 2.0 * TOL, "excess {}", max_excess(&u, &v));
    }

    #[test]
    fn elliptic_maximum_principle(amp in 0.0f64..3.0, x in 0.1f64..0.9, y in 0.1f64..0.9, p in prop::sample::select(vec![1.6, 2.0, 3.0])) {
        let g = GridSpec::rectangle([[0.0, 1.0], [0.0, 1.0]], [10, 10], 1.0, 1).build().unwrap();
        let mut om = SpatialMeasure::from_density(&Field::from_fn(g, |z| amp * z[0]));
        om.push_atom([x, y], 0.5).unwrap();
        let sol = solve_elliptic_detailed(&EllipticProblem::new(om, p), 1e-8).unwrap();
        prop_assert!(sol.u.min() >= -1e-8, "min {}", sol.u.min());
        prop_assert!(sol.stats.energies.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    }

    #[test]
    fn elliptic_linear_for_p2(b1 in bump(), b2 in bump(), a in atom(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let g = line(50, 1.0, 1);
        let (m1, m2) = (bump_measure(g, b1, a), bump_measure(g, b2, None));
        let u1 = solve_elliptic(&EllipticProblem::new(m1.clone(), 2.0), TOL).unwrap();
        let u2 = solve_elliptic(&EllipticProblem::new(m2.clone(), 2.0), TOL).unwrap();
        let combo = m1.scale(s).add(&m2.scale(t)).unwrap();
        let u = solve_elliptic(&EllipticProblem::new(combo, 2.0), TOL).unwrap();
        let expect = Field::linear_combination(s, &u1, t, &u2).unwrap();
        let scale = 1.0 + expect.norm_inf();
        for (a, b) in u.values().iter().zip(expect.values()) {
            prop_assert!((a - b).abs() <= 1e-7 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn truncation_is_idempotent_and_ordered(r in -10.0f64..10.0, j in 0.0f64..5.0, dk in 0.0f64..5.0) {
        let k = j + dk;
        prop_assert_eq!(truncate(truncate(r, k).unwrap(), k).unwrap(), truncate(r, k).unwrap());
        prop_assert!(truncate(r, j).unwrap().abs() <= truncate(r, k).unwrap().abs());
    }
}

fn random_density(g: Grid, b: (f64, f64, f64), sign: f64) -> SpaceTimeField {
    let (c, w, a) = b;
    SpaceTimeField::from_fn(g, |x, t| sign * a * (1.0 - ((x[0] - c) / w).powi(2)).max(0.0) * (1.0 + t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn absorption_mass_bound(b in bump(), a in atom(), q in 1.1f64..2.5, u0amp in -1.0f64..1.0, neg in any::<bool>()) {
        let g = line(40, 0.4, 20);
        let mut mu = SpaceTimeMeasure::from_density(&random_density(g, b, if neg { -1.0 } else { 1.0 }));
        if let Some((x, m)) = a {
            mu.push_atom([x, 0.0], 0.13, 3.0 * m).unwrap();
        }
        let u0 = Field::from_fn(g, |x| u0amp * (1.0 - x[0] * x[0]));
        let prob = ParabolicProblem::new(mu, u0, 2.0)
            .with_perturbation(Perturbation::Absorption { g: Nonlinearity::Power { q }, coef: 1.0 });
        let sol = solve_parabolic(&prob, TOL).unwrap();
        let bound = prob.data_mass();
        prop_assert!(sol.g_mass() <= bound + 5.0 * TOL * g.space_time_volume(), "{} > {bound}", sol.g_mass());
    }

    #[test]
    fn l1_contraction_heat(b in bump(), neg in any::<bool>(), u0amp in -2.0f64..2.0) {
        let g = line(40, 0.4, 20);
        let f = random_density(g, b, if neg { -1.0 } else { 1.0 });
        let u0 = Field::from_fn(g, |x| u0amp * (1.0 - x[0] * x[0]));
        let sol = solve_parabolic(&ParabolicProblem::new(SpaceTimeMeasure::from_density(&f), u0.clone(), 2.0), TOL).unwrap();
        let mut budget = u0.norm_l1();
        for n in 0..g.steps() {
            budget += f.step(n).iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume() * g.tau();
            let mass = sol.u.step(n).iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume();
            prop_assert!(mass <= budget + 1e-8, "step {n}: {mass} > {budget}");
        }
    }

    #[test]
    fn absorption_lowers_the_solution(b in bump(), a in atom(), q in 1.1f64..3.0, u0amp in 0.0f64..2.0) {
        let g = line(40, 0.4, 20);
        let mut mu = SpaceTimeMeasure::from_density(&random_density(g, b, 1.0));
        if let Some((x, m)) = a {
            mu.push_atom([x, 0.0], 0.13, m).unwrap();
        }
        let u0 = Field::from_fn(g, |x| u0amp * (1.0 - x[0] * x[0]));
        let free = ParabolicProblem::new(mu, u0, 2.0);
        let damped = free.clone().with_perturbation(Perturbation::Absorption { g: Nonlinearity::Power { q }, coef: 1.0 });
        let (u, v) = (solve_parabolic(&damped, TOL).unwrap(), solve_parabolic(&free, TOL).unwrap());
        let excess = u.u.values().iter().zip(v.u.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(excess <= 2.0 * TOL, "excess {excess}");
    }
}
