//! Classification of the surplus weights against the existence and uniqueness
//! conditions of the networked game.

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};
use crate::exact::{rat, sign, to_f64, ExactTheta, Sign};
use crate::lp::{LinearProgram, LpOutcome};
use crate::model::{DesignParams, GameInstance, TransportSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub gamma: f64,
    pub gamma_plus: Option<f64>,
    pub is_potential_game: bool,
    pub mm_payoff_concave_in_r: bool,
    pub existence_guaranteed: bool,
    pub unique_via_potential: bool,
    pub equilibria_equal_optimizers: bool,
    /// Whether `P ∩ {1'r = 0}` is bounded.
    pub transport_compact: bool,
    /// Conditions whose defining expression is nonzero but within the
    /// tolerance band of zero.
    pub boundary_flags: Vec<String>,
}

/// Exact `gamma` for a game.
pub fn gamma_exact(game: &GameInstance) -> BigRational {
    let mut best = BigRational::zero();
    for m in 0..game.num_markets() {
        let beta = rat(game.markets[m].beta);
        let mut sum = BigRational::zero();
        for f in game.firms_in(m) {
            sum += &beta / (&beta + rat(game.firms[f].cost.c_quad));
        }
        if sum > best {
            best = sum;
        }
    }
    // 1 - 1 / (1 + best)
    &best / (BigRational::one() + &best)
}

/// `1 - min_m (1 + sum_{f in F(m)} beta_m / (beta_m + D_f))^{-1}`.
pub fn gamma(game: &GameInstance) -> f64 {
    to_f64(&gamma_exact(game))
}

/// `(2 theta_M - theta_C) / (theta_M + theta_P - theta_C)` when the
/// denominator is positive.
pub fn gamma_plus(theta: &DesignParams) -> Option<f64> {
    let s = theta.s();
    if s > 0.0 {
        Some(theta.w() / s)
    } else {
        None
    }
}

/// Whether the balanced transport set is bounded.
pub fn transport_compact(game: &GameInstance) -> Result<bool> {
    match &game.transport {
        TransportSet::Zero => Ok(true),
        TransportSet::Unconstrained => Ok(game.num_markets() == 1),
        TransportSet::Polytope { a, b } => {
            let n = game.num_markets();
            let ones = vec![vec![1.0; n]];
            for m in 0..n {
                for dir in [1.0, -1.0] {
                    let mut c = vec![0.0; n];
                    c[m] = dir;
                    let lp = LinearProgram {
                        objective: &c,
                        ineq: a,
                        ineq_rhs: b,
                        eq: &ones,
                        eq_rhs: &[0.0],
                        lower: None,
                        upper: None,
                    };
                    match lp.maximize()? {
                        LpOutcome::Unbounded => return Ok(false),
                        LpOutcome::Infeasible => return Err(CnetError::EmptyPolytope),
                        LpOutcome::Optimal { .. } => {}
                    }
                }
            }
            Ok(true)
        }
    }
}

/// Classifies `theta` for `game`.
pub fn classify(game: &GameInstance, theta: &DesignParams) -> Result<RegionReport> {
    theta.validate()?;
    let compact = transport_compact(game)?;
    Ok(classify_exact(&gamma_exact(game), &ExactTheta::from_params(theta), compact))
}

/// Classification with exact weights and precomputed `gamma` and compactness.
pub fn classify_exact(gamma: &BigRational, theta: &ExactTheta, compact: bool) -> RegionReport {
    let s = theta.s();
    let w = theta.w();
    let margin = &w - gamma * &s;
    let mut flags = Vec::new();
    let (s_sign, s_near) = sign(&s);
    let (w_sign, w_near) = sign(&w);
    let (m_sign, m_near) = sign(&margin);
    if s_near {
        flags.push("theta_m + theta_p - theta_c = 0".to_string());
    }
    if w_near {
        flags.push("2 theta_m - theta_c = 0".to_string());
    }
    if m_near {
        flags.push("2 theta_m - theta_c = gamma (theta_m + theta_p - theta_c)".to_string());
    }
    let potential = s_sign == Sign::Positive;
    let concave = w_sign != Sign::Negative;
    let nonstrict = potential && m_sign != Sign::Negative;
    let strict = potential && m_sign == Sign::Positive;
    let existence = (compact && (concave || potential)) || strict;
    let equal = nonstrict && (compact || strict);
    RegionReport {
        gamma: to_f64(gamma),
        gamma_plus: if potential { Some(to_f64(&(&w / &s))) } else { None },
        is_potential_game: potential,
        mm_payoff_concave_in_r: concave,
        existence_guaranteed: existence,
        unique_via_potential: strict,
        equilibria_equal_optimizers: equal,
        transport_compact: compact,
        boundary_flags: flags,
    }
}

/// Whether the non-strict uniqueness condition
/// `2 theta_M - theta_C >= gamma (theta_M + theta_P - theta_C) > 0` holds.
pub fn nonstrict_condition(game: &GameInstance, theta: &DesignParams) -> bool {
    let t = ExactTheta::from_params(theta);
    let s = t.s();
    s > BigRational::zero() && t.w() - gamma_exact(game) * s >= BigRational::zero()
}

/// Block of `-∇²Π̂` for market `m` over `(q_{F(m)}, r_m)`, valid for any theta.
pub fn hessian_block_raw(game: &GameInstance, theta: &DesignParams, m: usize) -> Result<DMatrix<f64>> {
    if m >= game.num_markets() {
        return Err(CnetError::Validation(format!("market index {m} out of range")));
    }
    let firms = game.firms_in(m);
    let k = firms.len();
    let beta = game.markets[m].beta;
    let s = theta.s();
    let mut h = DMatrix::zeros(k + 1, k + 1);
    for (i, &f) in firms.iter().enumerate() {
        for j in 0..k {
            h[(i, j)] = s * beta;
        }
        h[(i, i)] += s * (beta + game.firms[f].cost.c_quad);
        h[(i, k)] = s * beta;
        h[(k, i)] = s * beta;
    }
    h[(k, k)] = theta.w() * beta;
    Ok(h)
}

/// The normalized block `[[beta 11' + diag(beta + D_f), beta 1], [beta 1', gamma+ beta]]`.
///
/// Requires `theta_M + theta_P - theta_C > 0`. Quadratic costs make the block
/// independent of `q`, which is accepted for interface symmetry.
pub fn hessian_block(game: &GameInstance, theta: &DesignParams, m: usize, q: &[f64]) -> Result<DMatrix<f64>> {
    let _ = q;
    let s = theta.s();
    if s <= 0.0 {
        return Err(CnetError::RegionNotCovered(
            "normalized Hessian needs theta_m + theta_p - theta_c > 0".into(),
        ));
    }
    Ok(hessian_block_raw(game, theta, m)? / s)
}

/// Smallest eigenvalue over all normalized market blocks.
pub fn min_block_eigenvalue(game: &GameInstance, theta: &DesignParams) -> Result<f64> {
    let mut best = f64::INFINITY;
    for m in 0..game.num_markets() {
        let h = hessian_block(game, theta, m, &[])?;
        let eig = h.symmetric_eigenvalues();
        best = best.min(eig.min());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostFn, FirmSpec, MarketSpec};

    fn game(firms_per_market: &[usize], d: f64, transport: TransportSet) -> GameInstance {
        let markets = vec![MarketSpec { alpha: 1.0, beta: 1.0 }; firms_per_market.len()];
        let mut firms = Vec::new();
        for (m, &k) in firms_per_market.iter().enumerate() {
            for _ in 0..k {
                firms.push(FirmSpec {
                    market_id: m,
                    cost: CostFn { c_lin: 0.1, c_quad: d },
                });
            }
        }
        GameInstance::new(markets, firms, transport).unwrap()
    }

    fn box2(b: f64) -> TransportSet {
        TransportSet::Polytope {
            a: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            b: vec![b; 4],
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(&game(&[1, 1], 0.0, box2(0.5))), 0.5);
        assert_eq!(gamma(&game(&[3], 0.0, TransportSet::Zero)), 0.75);
        assert!((gamma(&game(&[1], 1.0, TransportSet::Zero)) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn gamma_plus_examples() {
        assert_eq!(gamma_plus(&DesignParams::new(1.0, 1.0, 1.0).unwrap()), Some(1.0));
        assert_eq!(gamma_plus(&DesignParams::new(1.0, 0.0, 1.0).unwrap()), None);
        assert_eq!(gamma_plus(&DesignParams::new(1.0, 1.0, 0.0).unwrap()), None);
    }

    #[test]
    fn classify_examples() {
        let g = game(&[1, 1], 0.0, box2(0.5));
        let third = 1.0 / 3.0;
        let r = classify(&g, &DesignParams::new(third, third, third).unwrap()).unwrap();
        assert!(r.unique_via_potential && r.equilibria_equal_optimizers && r.existence_guaranteed);
        let r = classify(&g, &DesignParams::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert!(!r.is_potential_game && !r.mm_payoff_concave_in_r && !r.existence_guaranteed);
        assert!(!r.unique_via_potential && !r.equilibria_equal_optimizers);
        let r = classify(&g, &DesignParams::new(0.6, 0.4, 0.0).unwrap()).unwrap();
        assert!(!r.is_potential_game && !r.existence_guaranteed);
    }

    #[test]
    fn unbounded_transport_needs_strict_condition() {
        let g = game(&[1, 1], 0.0, TransportSet::Unconstrained);
        // w = 1/2, s = 1/4, gamma s = 1/8: strict
        let r = classify(&g, &DesignParams::new(0.5, 0.25, 0.5).unwrap()).unwrap();
        assert!(r.unique_via_potential && r.existence_guaranteed);
        // w = 1/2, s = 1, gamma s = 1/2: on the boundary
        let r = classify(&g, &DesignParams::new(0.5, 1.0, 0.5).unwrap()).unwrap();
        assert!(!r.unique_via_potential && !r.equilibria_equal_optimizers && !r.existence_guaranteed);
        assert!(!r.transport_compact);
    }

    #[test]
    fn hessian_examples() {
        let g = game(&[1], 0.0, TransportSet::Zero);
        let third = 1.0 / 3.0;
        let h = hessian_block(&g, &DesignParams::new(third, third, third).unwrap(), 0, &[0.0]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        assert!((h - &expected).amax() < 1e-15);
        assert!(expected.symmetric_eigenvalues().min() > 0.0);
        let g2 = game(&[1, 1], 0.0, box2(0.5));
        let boundary = DesignParams::new(0.5, 1.0, 0.5).unwrap();
        assert!(min_block_eigenvalue(&g2, &boundary).unwrap().abs() < 1e-9);
    }
}
