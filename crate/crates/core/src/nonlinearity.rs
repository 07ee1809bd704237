//! Zero-order perturbations `G(u)`: powers, exponentials and truncated
//! exponentials, all odd in `u`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Truncated exponential `E(s) = e^s - Σ_{j<l} s^j / j!`.
pub fn truncated_exp(s: f64, l: u32) -> Result<f64> {
    if l < 1 {
        return Err(invalid("l", "truncation order must be at least 1"));
    }
    Ok(truncated_exp_unchecked(s, l))
}

pub(crate) fn truncated_exp_unchecked(s: f64, l: u32) -> f64 {
    if s.abs() < 1.0 {
        // tail of the series avoids cancellation near 0
        let mut term = 1.0;
        for j in 1..=l {
            term *= s / j as f64;
        }
        let mut sum = 0.0;
        let mut j = l;
        for _ in 0..200 {
            sum += term;
            j += 1;
            term *= s / j as f64;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for j in 0..l {
            if j > 0 {
                term *= s / j as f64;
            }
            partial += term;
        }
        s.exp() - partial
    }
}

/// `E'(s) = E_{l-1}(s)` with `E_0 = exp`.
fn truncated_exp_derivative(s: f64, l: u32) -> f64 {
    if l <= 1 {
        s.exp()
    } else {
        truncated_exp_unchecked(s, l - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `|u|^{q-1} u`
    Power { q: f64 },
    /// `(e^{τ|u|^β} - 1) sign u`
    Exponential { tau: f64, beta: f64 },
    /// `E(τ|u|^β) sign u`
    TruncatedExponential { tau: f64, beta: f64, l: u32 },
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::Power { q } if !(q > 0.0) => Err(invalid("nonlinearity", format!("power q must be positive, got {q}"))),
            Nonlinearity::Exponential { tau, beta } | Nonlinearity::TruncatedExponential { tau, beta, .. }
                if !(tau > 0.0 && beta >= 1.0) =>
            {
                Err(invalid("nonlinearity", format!("need tau > 0 and beta >= 1, got tau={tau}, beta={beta}")))
            }
            Nonlinearity::TruncatedExponential { l, .. } if l < 1 => Err(invalid("nonlinearity", "l must be at least 1")),
            _ => Ok(()),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        let a = u.abs();
        let mag = match *self {
            Nonlinearity::Power { q } => a.powf(q),
            Nonlinearity::Exponential { tau, beta } => (tau * a.powf(beta)).exp_m1(),
            Nonlinearity::TruncatedExponential { tau, beta, l } => truncated_exp_unchecked(tau * a.powf(beta), l),
        };
        if u < 0.0 { -mag } else { mag }
    }

    /// `G'(u) ≥ 0`.
    pub fn derivative(&self, u: f64) -> f64 {
        let a = u.abs();
        match *self {
            Nonlinearity::Power { q } => {
                if a == 0.0 {
                    if q > 1.0 {
                        0.0
                    } else if q == 1.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    q * a.powf(q - 1.0)
                }
            }
            Nonlinearity::Exponential { tau, beta } => {
                if a == 0.0 {
                    if beta == 1.0 { tau } else { 0.0 }
                } else {
                    tau * beta * a.powf(beta - 1.0) * (tau * a.powf(beta)).exp()
                }
            }
            Nonlinearity::TruncatedExponential { tau, beta, l } => {
                if a == 0.0 {
                    if beta == 1.0 && l == 1 { tau } else { 0.0 }
                } else {
                    tau * beta * a.powf(beta - 1.0) * truncated_exp_derivative(tau * a.powf(beta), l)
                }
            }
        }
    }

    /// `Ĝ(u) = ∫_0^u G`, convex and even.
    pub fn primitive(&self, u: f64) -> f64 {
        let a = u.abs();
        match *self {
            Nonlinearity::Power { q } => a.powf(q + 1.0) / (q + 1.0),
            Nonlinearity::Exponential { tau, beta: 1.0 } => (tau * a).exp_m1() / tau - a,
            _ => gauss_primitive(|s| self.value(s), a),
        }
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

fn gauss_primitive(g: impl Fn(f64) -> f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let panels = 4;
    let w = a / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * w;
        for &(x, wt) in &GL8 {
            sum += wt * g(mid + 0.5 * w * x);
        }
    }
    0.5 * w * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn truncated_exp_examples() {
        assert_eq!(truncated_exp(0.0, 1).unwrap(), 0.0);
        assert_relative_eq!(truncated_exp(1.0, 2).unwrap(), std::f64::consts::E - 2.0, max_relative = 1e-14);
        let s = 1e-3;
        assert_relative_eq!(truncated_exp(s, 3).unwrap() / s.powi(3), 1.0 / 6.0, max_relative = 1e-3);
        assert!(truncated_exp(1.0, 0).is_err());
    }

    #[test]
    fn truncated_exp_is_continuous_across_branch() {
        for l in 1..5 {
            let below = truncated_exp(1.0 - 1e-12, l).unwrap();
            let above = truncated_exp(1.0 + 1e-12, l).unwrap();
            assert!((below - above).abs() < 1e-10);
        }
    }

    #[test]
    fn primitives_match_derivatives() {
        let cases = [
            Nonlinearity::Power { q: 1.5 },
            Nonlinearity::Exponential { tau: 0.7, beta: 1.0 },
            Nonlinearity::Exponential { tau: 0.5, beta: 2.0 },
            Nonlinearity::TruncatedExponential { tau: 1.0, beta: 1.5, l: 2 },
        ];
        for g in cases {
            for u in [-1.3, -0.2, 0.4, 1.1] {
                let e = 1e-5;
                let fd = (g.primitive(u + e) - g.primitive(u - e)) / (2.0 * e);
                assert_relative_eq!(fd, g.value(u), max_relative = 1e-6);
                let fd2 = (g.value(u + e) - g.value(u - e)) / (2.0 * e);
                assert_relative_eq!(fd2, g.derivative(u), max_relative = 1e-6);
            }
            assert_eq!(g.value(0.0), 0.0);
        }
    }

    #[test]
    fn odd_and_monotone() {
        let g = Nonlinearity::Power { q: 2.0 };
        assert_eq!(g.value(-2.0), -4.0);
        assert!(g.derivative(-3.0) > 0.0);
    }
}
