//! Nash equilibria through the potential maximization, best responses,
//! equilibrium verification and best-response dynamics.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};
use crate::model::{
    firm_profit, mm_payoff, potential, potential_gradient, surplus_breakdown, Allocation, DesignParams,
    GameInstance, Multipliers, SurplusBreakdown, TransportSet,
};
use crate::qp::QuadraticProgram;
use crate::exact::ExactTheta;
use crate::regions::{classify_exact, gamma_exact, transport_compact, RegionReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub kkt_tolerance: f64,
    /// `None` selects `10 * (vars + constraints)`.
    pub max_active_set_iterations: Option<usize>,
    pub br_deviation_tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            kkt_tolerance: 1e-9,
            max_active_set_iterations: None,
            br_deviation_tolerance: 1e-7,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0;
        if !positive(self.kkt_tolerance) || !positive(self.br_deviation_tolerance) {
            return Err(CnetError::Validation("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn iteration_cap(&self, qp: &QuadraticProgram) -> usize {
        self.max_active_set_iterations
            .unwrap_or(10 * (qp.num_vars() + qp.e.nrows() + qp.g.nrows()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub allocation: Allocation,
    pub potential_value: f64,
    pub welfare: f64,
    pub breakdown: SurplusBreakdown,
    pub region: RegionReport,
    pub verified: bool,
    /// Largest unilateral payoff gain found during verification.
    pub max_deviation_gain: f64,
    /// Largest KKT residual of the returned multipliers.
    pub kkt_residual: f64,
    /// A zero-curvature direction exists on the optimal face, so the
    /// optimizer may not be unique.
    pub possibly_non_unique: bool,
    pub iterations: usize,
}

/// Layout of the potential QP.
struct PotentialQp {
    qp: QuadraticProgram,
    nq: usize,
    /// Whether `r` is a decision variable (false for zero transport).
    has_r: bool,
}

fn potential_qp(game: &GameInstance, theta: &DesignParams) -> PotentialQp {
    let nq = game.num_firms();
    let nm = game.num_markets();
    let has_r = !matches!(game.transport, TransportSet::Zero);
    let n = nq + if has_r { nm } else { 0 };
    let s = theta.s();
    let w = theta.w();
    let mut h = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for (f, firm) in game.firms.iter().enumerate() {
        let m = firm.market_id;
        let mk = &game.markets[m];
        for (g, other) in game.firms.iter().enumerate() {
            if other.market_id == m {
                h[(f, g)] = s * mk.beta;
            }
        }
        h[(f, f)] += s * (mk.beta + firm.cost.c_quad);
        if has_r {
            h[(f, nq + m)] = s * mk.beta;
            h[(nq + m, f)] = s * mk.beta;
        }
        c[f] = -s * (mk.alpha - firm.cost.c_lin);
    }
    if has_r {
        for (m, mk) in game.markets.iter().enumerate() {
            h[(nq + m, nq + m)] = w * mk.beta;
            c[nq + m] = -theta.theta_m * mk.alpha;
        }
    }
    let (e, f) = if has_r {
        let mut e = DMatrix::zeros(1, n);
        for m in 0..nm {
            e[(0, nq + m)] = 1.0;
        }
        (e, DVector::zeros(1))
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    let rows: &[Vec<f64>] = match &game.transport {
        TransportSet::Polytope { a, .. } => a,
        _ => &[],
    };
    let mut g = DMatrix::zeros(nq + rows.len(), n);
    let mut hv = DVector::zeros(nq + rows.len());
    for f in 0..nq {
        g[(f, f)] = -1.0;
    }
    if let TransportSet::Polytope { a, b } = &game.transport {
        for (j, row) in a.iter().enumerate() {
            for m in 0..nm {
                g[(nq + j, nq + m)] = row[m];
            }
            hv[nq + j] = b[j];
        }
    }
    PotentialQp {
        qp: QuadraticProgram { h, c, e, f, g, hvec: hv },
        nq,
        has_r,
    }
}

fn active_at(qp: &QuadraticProgram, x: &DVector<f64>) -> Vec<usize> {
    (0..qp.g.nrows())
        .filter(|&i| (qp.hvec[i] - qp.g.row(i).dot(&x.transpose())).abs() <= 1e-12)
        .collect()
}

/// Solves the potential maximization from `q = 0, r = 0`.
pub fn solve_potential(game: &GameInstance, theta: &DesignParams, opts: &SolveOptions) -> Result<EquilibriumResult> {
    solve_potential_from(game, theta, opts, None)
}

/// Like [`solve_potential`], optionally warm-started from a feasible
/// allocation and an initial working set of constraint indices (`q >= 0`
/// rows first, then transport rows).
pub fn solve_potential_from(
    game: &GameInstance,
    theta: &DesignParams,
    opts: &SolveOptions,
    warm: Option<(&Allocation, &[usize])>,
) -> Result<EquilibriumResult> {
    game.validate()?;
    let ctx = GameContext::new(game)?;
    solve_with_context(game, &ctx, theta, opts, warm)
}

/// Per-game quantities shared by solves at different weights.
#[derive(Debug, Clone)]
pub struct GameContext {
    pub gamma: BigRational,
    pub compact: bool,
}

impl GameContext {
    pub fn new(game: &GameInstance) -> Result<Self> {
        Ok(GameContext {
            gamma: gamma_exact(game),
            compact: transport_compact(game)?,
        })
    }
}

/// [`solve_potential_from`] with precomputed per-game data; the game must
/// already be validated.
pub fn solve_with_context(
    game: &GameInstance,
    ctx: &GameContext,
    theta: &DesignParams,
    opts: &SolveOptions,
    warm: Option<(&Allocation, &[usize])>,
) -> Result<EquilibriumResult> {
    theta.validate()?;
    opts.validate()?;
    let exact = ExactTheta::from_params(theta);
    let region = classify_exact(&ctx.gamma, &exact, ctx.compact);
    let s = exact.s();
    if !(s > BigRational::zero() && exact.w() - &ctx.gamma * &s >= BigRational::zero()) {
        return Err(CnetError::RegionNotCovered(format!(
            "need 2 theta_m - theta_c >= gamma (theta_m + theta_p - theta_c) > 0 with gamma = {}",
            region.gamma
        )));
    }
    let pq = potential_qp(game, theta);
    let n = pq.qp.num_vars();
    let (x0, working) = match warm {
        Some((alloc, ws)) => {
            game.check_feasible(alloc)?;
            let mut x0 = DVector::zeros(n);
            for f in 0..pq.nq {
                x0[f] = alloc.q[f];
            }
            if pq.has_r {
                for m in 0..game.num_markets() {
                    x0[pq.nq + m] = alloc.r[m];
                }
            }
            (x0, ws.to_vec())
        }
        None => {
            let x0 = DVector::zeros(n);
            let ws = active_at(&pq.qp, &x0);
            (x0, ws)
        }
    };
    let sol = pq.qp.solve(&x0, &working, opts.iteration_cap(&pq.qp))?;
    let q: Vec<f64> = (0..pq.nq).map(|f| sol.x[f].max(0.0)).collect();
    let r: Vec<f64> = if pq.has_r {
        (0..game.num_markets()).map(|m| sol.x[pq.nq + m]).collect()
    } else {
        vec![0.0; game.num_markets()]
    };
    let multipliers = Multipliers {
        lambda_balance: if pq.has_r { sol.eq_mult[0] } else { 0.0 },
        mu_firm: (0..pq.nq).map(|f| sol.ineq_mult[f]).collect(),
        nu_transport: (pq.nq..pq.qp.g.nrows()).map(|i| sol.ineq_mult[i]).collect(),
    };
    let allocation = Allocation {
        q,
        r,
        multipliers: Some(multipliers),
    };
    let kkt = kkt_residual(game, theta, &allocation)?;
    let check = verify_nash(game, &allocation, theta, opts)?;
    let breakdown = surplus_breakdown(game, &allocation)?;
    Ok(EquilibriumResult {
        potential_value: potential(game, &allocation, theta)?,
        welfare: breakdown.welfare(),
        breakdown,
        region,
        verified: check.is_nash,
        max_deviation_gain: check.max_gain,
        kkt_residual: kkt,
        possibly_non_unique: sol.zero_curvature,
        iterations: sol.iterations,
        allocation,
    })
}

/// Largest violation among stationarity, complementarity, sign and
/// feasibility conditions of the potential maximization.
pub fn kkt_residual(game: &GameInstance, theta: &DesignParams, alloc: &Allocation) -> Result<f64> {
    let mult = alloc
        .multipliers
        .as_ref()
        .ok_or_else(|| CnetError::Validation("allocation carries no multipliers".into()))?;
    game.check_dims(alloc)?;
    if mult.mu_firm.len() != game.num_firms() {
        return Err(CnetError::Validation("mu_firm has the wrong length".into()));
    }
    let grad = potential_gradient(game, alloc, theta)?;
    let mut worst: f64 = 0.0;
    for f in 0..game.num_firms() {
        worst = worst.max((grad.dq[f] + mult.mu_firm[f]).abs());
        worst = worst.max((mult.mu_firm[f] * alloc.q[f]).abs());
        worst = worst.max((-mult.mu_firm[f]).max(0.0));
        worst = worst.max((-alloc.q[f]).max(0.0));
    }
    match &game.transport {
        TransportSet::Zero => {}
        TransportSet::Unconstrained | TransportSet::Polytope { .. } => {
            let (a, b): (&[Vec<f64>], &[f64]) = match &game.transport {
                TransportSet::Polytope { a, b } => (a, b),
                _ => (&[], &[]),
            };
            if mult.nu_transport.len() != a.len() {
                return Err(CnetError::Validation("nu_transport has the wrong length".into()));
            }
            for m in 0..game.num_markets() {
                let mut res = grad.dr[m] - mult.lambda_balance;
                for (j, row) in a.iter().enumerate() {
                    res -= row[m] * mult.nu_transport[j];
                }
                worst = worst.max(res.abs());
            }
            for (j, row) in a.iter().enumerate() {
                let slack = b[j] - row.iter().zip(&alloc.r).map(|(x, y)| x * y).sum::<f64>();
                worst = worst.max((mult.nu_transport[j] * slack).abs());
                worst = worst.max((-mult.nu_transport[j]).max(0.0));
                worst = worst.max((-slack).max(0.0));
            }
            worst = worst.max(alloc.r.iter().sum::<f64>().abs());
        }
    }
    Ok(worst)
}

/// Profit-maximizing quantity of firm `f` against the rest of `alloc`.
pub fn best_response_firm(game: &GameInstance, alloc: &Allocation, f: usize) -> Result<f64> {
    game.check_dims(alloc)?;
    let firm = game
        .firms
        .get(f)
        .ok_or_else(|| CnetError::Validation(format!("firm index {f} out of range")))?;
    let m = firm.market_id;
    let mk = &game.markets[m];
    let others = game.supply(&alloc.q, m) - alloc.q[f];
    let q = (mk.alpha - mk.beta * (alloc.r[m] + others) - firm.cost.c_lin) / (2.0 * mk.beta + firm.cost.c_quad);
    Ok(q.max(0.0))
}

/// Maximizer of the market-maker payoff over the balanced transport set with
/// quantities fixed. Starts from the current `r` when it is feasible, so ties
/// keep the current strategy.
pub fn best_response_mm(
    game: &GameInstance,
    alloc: &Allocation,
    theta: &DesignParams,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    game.check_dims(alloc)?;
    let w = theta.w();
    if w < 0.0 {
        return Err(CnetError::NonConcaveObjective(w));
    }
    let nm = game.num_markets();
    if matches!(game.transport, TransportSet::Zero) {
        return Ok(vec![0.0; nm]);
    }
    let s = theta.s();
    let mut h = DMatrix::zeros(nm, nm);
    let mut c = DVector::zeros(nm);
    for (m, mk) in game.markets.iter().enumerate() {
        h[(m, m)] = w * mk.beta;
        c[m] = s * mk.beta * game.supply(&alloc.q, m) - theta.theta_m * mk.alpha;
    }
    let (g, hv) = match &game.transport {
        TransportSet::Polytope { a, b } => {
            let mut g = DMatrix::zeros(a.len(), nm);
            for (j, row) in a.iter().enumerate() {
                for m in 0..nm {
                    g[(j, m)] = row[m];
                }
            }
            (g, DVector::from_row_slice(b))
        }
        _ => (DMatrix::zeros(0, nm), DVector::zeros(0)),
    };
    let qp = QuadraticProgram {
        h,
        c,
        e: DMatrix::from_element(1, nm, 1.0),
        f: DVector::zeros(1),
        g,
        hvec: hv,
    };
    let current = DVector::from_row_slice(&alloc.r);
    let feasible = (&qp.e * &current - &qp.f).amax() <= 1e-9
        && (qp.g.nrows() == 0 || (&qp.g * &current - &qp.hvec).max() <= 1e-9);
    let x0 = if feasible { current } else { DVector::zeros(nm) };
    let ws = active_at(&qp, &x0);
    let sol = qp.solve(&x0, &ws, opts.iteration_cap(&qp))?;
    Ok(sol.x.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCheck {
    pub is_nash: bool,
    pub max_gain: f64,
    pub firm_gains: Vec<f64>,
    pub mm_gain: f64,
}

/// Vertices of `{Ar <= b, 1'r = 0}` by enumerating row subsets.
pub fn balanced_vertices(a: &[Vec<f64>], b: &[f64], nm: usize) -> Result<Vec<Vec<f64>>> {
    let k = nm - 1;
    if k == 0 {
        return Ok(vec![vec![0.0]]);
    }
    let rows = a.len();
    let mut count: f64 = 1.0;
    for i in 0..k {
        count *= (rows - i) as f64 / (i + 1) as f64;
    }
    if rows < k {
        return Ok(Vec::new());
    }
    if count > 2e5 {
        return Err(CnetError::NumericalFailure(format!(
            "vertex enumeration over {count} row subsets refused"
        )));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut mat = DMatrix::zeros(nm, nm);
        let mut rhs = DVector::zeros(nm);
        for (i, &j) in idx.iter().enumerate() {
            for m in 0..nm {
                mat[(i, m)] = a[j][m];
            }
            rhs[i] = b[j];
        }
        for m in 0..nm {
            mat[(k, m)] = 1.0;
        }
        if let Some(v) = mat.clone().lu().solve(&rhs) {
            let resid = (&mat * &v - &rhs).amax();
            let feasible = a
                .iter()
                .zip(b)
                .all(|(row, bj)| row.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>() <= bj + 1e-9);
            if resid < 1e-9 && feasible {
                let v: Vec<f64> = v.iter().copied().collect();
                if !out
                    .iter()
                    .any(|u| u.iter().zip(&v).all(|(x, y)| (x - y).abs() < 1e-12))
                {
                    out.push(v);
                }
            }
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < rows - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Largest payoff improvement available to the market maker at fixed `q`.
fn mm_gain(game: &GameInstance, alloc: &Allocation, theta: &DesignParams, opts: &SolveOptions) -> Result<f64> {
    let base = mm_payoff(game, alloc, theta)?;
    let value_at = |r: Vec<f64>| -> Result<f64> {
        let cand = Allocation {
            q: alloc.q.clone(),
            r,
            multipliers: None,
        };
        mm_payoff(game, &cand, theta)
    };
    if matches!(game.transport, TransportSet::Zero) {
        return Ok(0.0);
    }
    if theta.w() >= 0.0 {
        return match best_response_mm(game, alloc, theta, opts) {
            Ok(r) => Ok((value_at(r)? - base).max(0.0)),
            Err(CnetError::Unbounded) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        };
    }
    // Convex in r: the maximum over a polytope sits at a vertex, and an
    // unbounded set admits arbitrarily large payoffs.
    if !transport_compact(game)? {
        return Ok(f64::INFINITY);
    }
    let TransportSet::Polytope { a, b } = &game.transport else {
        return Ok(0.0);
    };
    let mut best = base;
    for v in balanced_vertices(a, b, game.num_markets())? {
        best = best.max(value_at(v)?);
    }
    Ok(best - base)
}

/// Checks that no player gains more than `br_deviation_tolerance`.
pub fn verify_nash(
    game: &GameInstance,
    alloc: &Allocation,
    theta: &DesignParams,
    opts: &SolveOptions,
) -> Result<NashCheck> {
    game.check_dims(alloc)?;
    let mut firm_gains = Vec::with_capacity(game.num_firms());
    for f in 0..game.num_firms() {
        let mut dev = alloc.clone();
        dev.q[f] = best_response_firm(game, alloc, f)?;
        let gain = firm_profit(game, &dev, f)? - firm_profit(game, alloc, f)?;
        firm_gains.push(gain.max(0.0));
    }
    let mm = mm_gain(game, alloc, theta, opts)?;
    let max_gain = firm_gains.iter().copied().fold(mm, f64::max);
    Ok(NashCheck {
        is_nash: max_gain <= opts.br_deviation_tolerance,
        max_gain,
        firm_gains,
        mm_gain: mm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Firms,
    MarketMaker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsStep {
    pub round: usize,
    pub phase: Phase,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Converged { rounds: usize },
    /// The end-of-round profile recurred. `profiles` lists the profiles
    /// reached right after the firms moved in each round of the cycle.
    Cycle { period: usize, profiles: Vec<Allocation> },
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub trajectory: Vec<DynamicsStep>,
    pub verdict: Verdict,
}

fn state_key(alloc: &Allocation) -> Vec<i64> {
    alloc
        .q
        .iter()
        .chain(&alloc.r)
        .map(|v| (v / 1e-9).round() as i64)
        .collect()
}

/// Round-robin best responses: firms in index order, then the market maker.
pub fn best_response_dynamics(
    game: &GameInstance,
    theta: &DesignParams,
    init: &Allocation,
    max_rounds: usize,
    opts: &SolveOptions,
) -> Result<Dynamics> {
    game.check_dims(init)?;
    if theta.w() < 0.0 {
        return Err(CnetError::NonConcaveObjective(theta.w()));
    }
    let mut state = Allocation {
        q: init.q.clone(),
        r: init.r.clone(),
        multipliers: None,
    };
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    seen.insert(state_key(&state), 0);
    let mut after_firms: Vec<Allocation> = Vec::new();
    let mut trajectory = Vec::new();
    for round in 1..=max_rounds {
        let prev = state.clone();
        for f in 0..game.num_firms() {
            state.q[f] = best_response_firm(game, &state, f)?;
        }
        trajectory.push(DynamicsStep {
            round,
            phase: Phase::Firms,
            q: state.q.clone(),
            r: state.r.clone(),
            potential: potential(game, &state, theta)?,
        });
        after_firms.push(state.clone());
        state.r = best_response_mm(game, &state, theta, opts)?;
        trajectory.push(DynamicsStep {
            round,
            phase: Phase::MarketMaker,
            q: state.q.clone(),
            r: state.r.clone(),
            potential: potential(game, &state, theta)?,
        });
        let change = state
            .q
            .iter()
            .zip(&prev.q)
            .chain(state.r.iter().zip(&prev.r))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < opts.br_deviation_tolerance {
            return Ok(Dynamics {
                trajectory,
                verdict: Verdict::Converged { rounds: round },
            });
        }
        let key = state_key(&state);
        if let Some(&start) = seen.get(&key) {
            return Ok(Dynamics {
                trajectory,
                verdict: Verdict::Cycle {
                    period: round - start,
                    profiles: after_firms[start..round].to_vec(),
                },
            });
        }
        seen.insert(key, round);
    }
    Ok(Dynamics {
        trajectory,
        verdict: Verdict::MaxRounds,
    })
}
