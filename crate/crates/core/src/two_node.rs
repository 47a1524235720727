//! Two markets with one linear-cost firm each, joined by a line of capacity
//! `b`: the full equilibrium set as a function of the surplus weights.
//!
//! With identical demand the reallocation is `r = (r, -r)`, `|r| <= b`, and
//! firms respond with `q1 = ((alpha - c1)/beta - r)/2`,
//! `q2 = ((alpha - c2)/beta + r)/2`.

use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};
use crate::exact::{rat, rat_int, sign, strict_sign, to_f64, ExactTheta, Sign, BAND};
use crate::model::{CostFn, DesignParams, FirmSpec, GameInstance, MarketSpec, TransportSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoNodeParams {
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
}

impl TwoNodeParams {
    pub fn new(c1: f64, c2: f64, alpha: f64, beta: f64, b: f64) -> Result<Self> {
        let p = TwoNodeParams { c1, c2, alpha, beta, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.c1, self.c2, self.alpha, self.beta, self.b];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(CnetError::Validation("parameters must be finite".into()));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return Err(CnetError::Validation("marginal costs must be >= 0".into()));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(CnetError::Validation("alpha and beta must be > 0".into()));
        }
        if self.b < 0.0 {
            return Err(CnetError::Validation("capacity b must be >= 0".into()));
        }
        let slack = self.alpha - (self.b * self.beta + self.c1.max(self.c2));
        if slack < 0.0 {
            return Err(CnetError::PreconditionViolated {
                condition: "alpha >= b beta + max(c1, c2)".into(),
                slack,
            });
        }
        Ok(())
    }

    pub fn delta_c(&self) -> f64 {
        self.c1 - self.c2
    }

    /// Equivalent game with the box `|r_1|, |r_2| <= b`.
    pub fn to_game(&self) -> Result<GameInstance> {
        GameInstance::new(
            vec![
                MarketSpec {
                    alpha: self.alpha,
                    beta: self.beta,
                };
                2
            ],
            vec![
                FirmSpec {
                    market_id: 0,
                    cost: CostFn { c_lin: self.c1, c_quad: 0.0 },
                },
                FirmSpec {
                    market_id: 1,
                    cost: CostFn { c_lin: self.c2, c_quad: 0.0 },
                },
            ],
            TransportSet::Polytope {
                a: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
                b: vec![self.b; 4],
            },
        )
    }

    /// Firms' best responses to the flow `r` into market 1.
    pub fn firm_responses(&self, r: f64) -> (f64, f64) {
        (
            0.5 * ((self.alpha - self.c1) / self.beta - r),
            0.5 * ((self.alpha - self.c2) / self.beta + r),
        )
    }
}

/// The nine sign patterns of `(2 theta_M - theta_C, theta_M + theta_P - theta_C,
/// 3 theta_M - theta_C - theta_P)` that determine the equilibrium set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `w > 0`, `t > 0`.
    ConcaveStable,
    /// `w > 0`, `t = 0`.
    ConcaveNeutral,
    /// `w > 0`, `t < 0`.
    ConcaveUnstable,
    /// `w = 0`, `s < 0`.
    LinearNegative,
    /// `w = 0`, `s = 0`.
    LinearFlat,
    /// `w = 0`, `s > 0`.
    LinearPositive,
    /// `w < 0`, `s < 0`.
    ConvexNegative,
    /// `w < 0`, `s = 0`.
    ConvexFlat,
    /// `w < 0`, `s > 0`.
    ConvexPositive,
}

impl Regime {
    pub const ALL: [Regime; 9] = [
        Regime::ConcaveStable,
        Regime::ConcaveNeutral,
        Regime::ConcaveUnstable,
        Regime::LinearNegative,
        Regime::LinearFlat,
        Regime::LinearPositive,
        Regime::ConvexNegative,
        Regime::ConvexFlat,
        Regime::ConvexPositive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::ConcaveStable => "concave_stable",
            Regime::ConcaveNeutral => "concave_neutral",
            Regime::ConcaveUnstable => "concave_unstable",
            Regime::LinearNegative => "linear_negative",
            Regime::LinearFlat => "linear_flat",
            Regime::LinearPositive => "linear_positive",
            Regime::ConvexNegative => "convex_negative",
            Regime::ConvexFlat => "convex_flat",
            Regime::ConvexPositive => "convex_positive",
        }
    }
}

/// Set of equilibrium flows `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RSet {
    Singleton { r: f64 },
    /// Two or three isolated values, ascending.
    Finite { values: Vec<f64> },
    Interval { lo: f64, hi: f64 },
    Empty,
}

impl RSet {
    fn from_values(mut values: Vec<f64>) -> RSet {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        match values.len() {
            0 => RSet::Empty,
            1 => RSet::Singleton { r: values[0] },
            _ => RSet::Finite { values },
        }
    }

    /// Number of equilibria, `None` for a continuum.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            RSet::Singleton { .. } => Some(1),
            RSet::Finite { values } => Some(values.len()),
            RSet::Interval { .. } => None,
            RSet::Empty => Some(0),
        }
    }

    pub fn contains(&self, r: f64, tol: f64) -> bool {
        match self {
            RSet::Singleton { r: v } => (r - v).abs() <= tol,
            RSet::Finite { values } => values.iter().any(|v| (r - v).abs() <= tol),
            RSet::Interval { lo, hi } => r >= lo - tol && r <= hi + tol,
            RSet::Empty => false,
        }
    }
}

/// Regime of `theta`, decided exactly; nonzero values inside the tolerance
/// band are reported as ambiguous.
pub fn regime_exact(theta: &ExactTheta) -> Result<Regime> {
    let w = strict_sign(&theta.w(), "2 theta_m - theta_c = 0")?;
    Ok(match w {
        Sign::Positive => match strict_sign(&theta.t3(), "3 theta_m - theta_c - theta_p = 0")? {
            Sign::Positive => Regime::ConcaveStable,
            Sign::Zero => Regime::ConcaveNeutral,
            Sign::Negative => Regime::ConcaveUnstable,
        },
        Sign::Zero => match strict_sign(&theta.s(), "theta_m + theta_p - theta_c = 0")? {
            Sign::Negative => Regime::LinearNegative,
            Sign::Zero => Regime::LinearFlat,
            Sign::Positive => Regime::LinearPositive,
        },
        Sign::Negative => match strict_sign(&theta.s(), "theta_m + theta_p - theta_c = 0")? {
            Sign::Negative => Regime::ConvexNegative,
            Sign::Zero => Regime::ConvexFlat,
            Sign::Positive => Regime::ConvexPositive,
        },
    })
}

pub fn regime(theta: &DesignParams) -> Result<Regime> {
    theta.validate()?;
    regime_exact(&ExactTheta::from_params(theta))
}

/// Compares `|x|` with `b`: returns the sign of `|x| - b`.
fn magnitude_vs(x: &BigRational, b: &BigRational, name: &str) -> Result<Sign> {
    strict_sign(&(x.abs() - b), name)
}

fn signum(v: &BigRational) -> f64 {
    match sign(v).0 {
        Sign::Positive => 1.0,
        Sign::Negative => -1.0,
        Sign::Zero => 0.0,
    }
}

fn clip(x: &BigRational, b: &BigRational) -> f64 {
    if x > b {
        to_f64(b)
    } else if *x < -b.clone() {
        -to_f64(b)
    } else {
        to_f64(x)
    }
}

/// Equilibrium set of flows with its regime.
pub fn r_set_exact(params: &TwoNodeParams, theta: &ExactTheta) -> Result<(Regime, RSet)> {
    params.validate()?;
    let regime = regime_exact(theta)?;
    let b = rat(params.b);
    let bf = params.b;
    let dc = rat(params.c1) - rat(params.c2);
    let two_beta = rat(params.beta) * rat_int(2);
    let sdc = signum(&dc);
    // -ΔC / (2β): the flow equalizing the two firms' outputs
    let x0 = -&dc / &two_beta;
    let set = match regime {
        Regime::ConcaveStable => {
            let x = theta.s() * &dc / (&two_beta * theta.t3());
            RSet::Singleton { r: clip(&x, &b) }
        }
        Regime::ConcaveNeutral => {
            if strict_sign(&dc, "c1 - c2 = 0")? == Sign::Zero {
                RSet::Interval { lo: -bf, hi: bf }
            } else {
                RSet::Singleton { r: bf * sdc }
            }
        }
        Regime::ConcaveUnstable => {
            let x = theta.s() * &dc / (&two_beta * theta.t3());
            match magnitude_vs(&x, &b, "|kappa dC / 2 beta| = b")? {
                Sign::Positive => RSet::Singleton { r: bf * sdc },
                _ => RSet::from_values(vec![-bf, to_f64(&x), bf]),
            }
        }
        Regime::LinearNegative => RSet::Singleton { r: clip(&x0, &b) },
        Regime::LinearFlat => RSet::Interval { lo: -bf, hi: bf },
        Regime::LinearPositive => match magnitude_vs(&x0, &b, "|dC / 2 beta| = b")? {
            Sign::Positive => RSet::Singleton { r: bf * sdc },
            _ => RSet::from_values(vec![-bf, to_f64(&x0), bf]),
        },
        Regime::ConvexNegative => match magnitude_vs(&x0, &b, "|dC / 2 beta| = b")? {
            Sign::Negative => RSet::Empty,
            _ => RSet::from_values(vec![-bf * sdc]),
        },
        Regime::ConvexFlat => RSet::from_values(vec![-bf, bf]),
        Regime::ConvexPositive => match magnitude_vs(&x0, &b, "|dC / 2 beta| = b")? {
            Sign::Positive => RSet::Singleton { r: bf * sdc },
            _ => RSet::from_values(vec![-bf, bf]),
        },
    };
    Ok((regime, set))
}

pub fn r_set(params: &TwoNodeParams, theta: &DesignParams) -> Result<(Regime, RSet)> {
    theta.validate()?;
    r_set_exact(params, &ExactTheta::from_params(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoNodeEquilibrium {
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
}

/// Equilibria as profiles; a continuum is represented by its endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumSet {
    Points { points: Vec<TwoNodeEquilibrium> },
    Segment { from: TwoNodeEquilibrium, to: TwoNodeEquilibrium },
}

fn profile(params: &TwoNodeParams, r: f64) -> TwoNodeEquilibrium {
    let (q1, q2) = params.firm_responses(r);
    TwoNodeEquilibrium { q1, q2, r }
}

pub fn analytic_equilibria(params: &TwoNodeParams, theta: &DesignParams) -> Result<EquilibriumSet> {
    let (_, set) = r_set(params, theta)?;
    Ok(equilibria_of(params, &set))
}

pub fn equilibria_of(params: &TwoNodeParams, set: &RSet) -> EquilibriumSet {
    match set {
        RSet::Singleton { r } => EquilibriumSet::Points {
            points: vec![profile(params, *r)],
        },
        RSet::Finite { values } => EquilibriumSet::Points {
            points: values.iter().map(|r| profile(params, *r)).collect(),
        },
        RSet::Interval { lo, hi } => EquilibriumSet::Segment {
            from: profile(params, *lo),
            to: profile(params, *hi),
        },
        RSet::Empty => EquilibriumSet::Points { points: Vec::new() },
    }
}

/// Derivative of the market maker's payoff in `r` along the firms' best
/// responses, up to a positive factor.
pub fn rho(r: f64, theta: &DesignParams, params: &TwoNodeParams) -> f64 {
    0.5 * params.delta_c() * theta.s() - theta.t3() * params.beta * r
}

/// Market-maker payoff evaluated from the surplus definitions.
fn mm_value(params: &TwoNodeParams, theta: &DesignParams, q1: f64, q2: f64, r: f64) -> f64 {
    let (a, be) = (params.alpha, params.beta);
    let d1 = q1 + r;
    let d2 = q2 - r;
    let p1 = a - be * d1;
    let p2 = a - be * d2;
    let cs = 0.5 * be * (d1 * d1 + d2 * d2);
    let ps = q1 * p1 - params.c1 * q1 + q2 * p2 - params.c2 * q2;
    let ms = r * p1 - r * p2;
    theta.theta_c * cs + theta.theta_p * ps + theta.theta_m * ms
}

/// Grid enumeration of equilibria: `r` ranges over `grid_n + 1` uniform
/// points of `[-b, b]`, firms play their exact best responses, and a profile
/// survives when no grid flow improves the market maker's payoff by more
/// than `L h / 2`, where `L` bounds the slope of that gain in `r` and every
/// equilibrium lies within `h / 2` of a grid point.
pub fn brute_force_equilibria(params: &TwoNodeParams, theta: &DesignParams, grid_n: usize) -> Result<Vec<TwoNodeEquilibrium>> {
    params.validate()?;
    theta.validate()?;
    if grid_n < 100 {
        return Err(CnetError::Validation("grid_n must be >= 100".into()));
    }
    let b = params.b;
    let h = 2.0 * b / grid_n as f64;
    let grid: Vec<f64> = (0..=grid_n).map(|i| -b + h * i as f64).collect();
    let lip = params.beta
        * (theta.s().abs() * (3.0 * b + params.delta_c().abs() / (2.0 * params.beta)) + 2.0 * theta.w().abs() * b);
    let tol = 0.5 * lip * h + BAND;
    let mut out = Vec::new();
    for &r in &grid {
        let (q1, q2) = params.firm_responses(r);
        let base = mm_value(params, theta, q1, q2, r);
        if grid.iter().all(|&rp| mm_value(params, theta, q1, q2, rp) - base <= tol) {
            out.push(TwoNodeEquilibrium { q1, q2, r });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{theta_preset, ThetaPreset};

    fn reference() -> TwoNodeParams {
        TwoNodeParams::new(0.5, 0.25, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn social_welfare_point() {
        let eqs = analytic_equilibria(&reference(), &theta_preset(ThetaPreset::Sw)).unwrap();
        match eqs {
            EquilibriumSet::Points { points } => {
                assert_eq!(points.len(), 1);
                let p = points[0];
                assert_eq!((p.q1, p.q2, p.r), (3.0 / 16.0, 7.0 / 16.0, 1.0 / 8.0));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(rho(0.125, &theta_preset(ThetaPreset::Sw), &reference()), 0.0);
    }

    #[test]
    fn table_rows() {
        let p = reference();
        let (reg, set) = r_set(&p, &DesignParams::new(0.5, 0.25, 0.25).unwrap()).unwrap();
        assert_eq!(reg, Regime::LinearFlat);
        assert_eq!(set, RSet::Interval { lo: -0.5, hi: 0.5 });
        // w < 0, s < 0, |dC/2β| = 0.125 < b
        let (reg, set) = r_set(&p, &DesignParams::new(1.0, 0.0, 0.25).unwrap()).unwrap();
        assert_eq!(reg, Regime::ConvexNegative);
        assert_eq!(set, RSet::Empty);
        // w > 0, t < 0: three equilibria
        let theta = DesignParams::new(0.5, 1.0, 0.4).unwrap();
        let (reg, set) = r_set(&p, &theta).unwrap();
        assert_eq!(reg, Regime::ConcaveUnstable);
        assert_eq!(set.cardinality(), Some(3));
    }

    #[test]
    fn symmetric_costs_row_one() {
        let p = TwoNodeParams::new(0.3, 0.3, 1.0, 1.0, 0.2).unwrap();
        match analytic_equilibria(&p, &theta_preset(ThetaPreset::Sw)).unwrap() {
            EquilibriumSet::Points { points } => {
                assert_eq!(points.len(), 1);
                assert_eq!(points[0].q1, points[0].q2);
                assert_eq!(points[0].r, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rho_constant_when_t3_zero() {
        let p = reference();
        let theta = DesignParams::new(0.25, 0.5, 0.25).unwrap();
        assert_eq!(theta.t3(), 0.0);
        let a = rho(-0.3, &theta, &p);
        let b = rho(0.4, &theta, &p);
        assert_eq!(a, b);
        assert_eq!(a.signum(), p.delta_c().signum() * theta.s().signum());
    }

    #[test]
    fn clip_in_row_one() {
        let p = TwoNodeParams::new(0.8, 0.0, 1.2, 1.0, 0.1).unwrap();
        let (_, set) = r_set(&p, &theta_preset(ThetaPreset::Sw)).unwrap();
        assert_eq!(set, RSet::Singleton { r: 0.1 });
    }

    #[test]
    fn ambiguous_boundary() {
        let err = r_set(&reference(), &DesignParams::new(0.3, 0.3, 0.2).unwrap()).unwrap_err();
        assert!(matches!(err, CnetError::BoundaryAmbiguous(_)));
    }

    #[test]
    fn brute_force_matches_reference_point() {
        let eqs = brute_force_equilibria(&reference(), &theta_preset(ThetaPreset::Sw), 400).unwrap();
        assert!(!eqs.is_empty());
        // survivors sit where the best-response gain is below the grid tolerance
        assert!(eqs.iter().all(|e| (e.r - 0.125).abs() < 0.2));
        assert!(eqs.iter().any(|e| (e.r - 0.125).abs() < 1e-12));
    }
}
