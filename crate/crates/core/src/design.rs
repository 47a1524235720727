//! Choosing the surplus weights: the margin-restricted design set, grid
//! search over the simplex, and the equilibrium-constrained design problem as
//! a polynomial program.

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_with_context, EquilibriumResult, GameContext, SolveOptions};
use crate::error::{CnetError, Result};
use crate::exact::{rat, ExactTheta};
use crate::model::{Allocation, DesignParams, GameInstance};
use crate::poly::{PolyProgram, Polynomial};
use crate::polytope::{project_polytope, ProjectedPolytope};
use crate::regions::gamma;
use crate::sdp::SdpOptions;
use crate::sos::{sos_bound, SosCertificate};

/// `{theta in simplex : 2 theta_M - theta_C >= eps + gamma s >= (1 + gamma) eps}`
/// with `s = theta_M + theta_P - theta_C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEps {
    pub epsilon: f64,
    pub gamma: f64,
}

impl ThetaEps {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CnetError::Validation("epsilon must be > 0".into()));
        }
        if !(gamma.is_finite() && (0.0..1.0).contains(&gamma)) {
            return Err(CnetError::Validation("gamma must lie in [0, 1)".into()));
        }
        Ok(ThetaEps { epsilon, gamma })
    }

    pub fn for_game(game: &GameInstance, epsilon: f64) -> Result<Self> {
        game.validate()?;
        ThetaEps::new(epsilon, gamma(game))
    }

    fn contains_exact(&self, t: &ExactTheta) -> bool {
        let zero = BigRational::zero();
        if t.c < zero || t.p < zero || t.m < zero {
            return false;
        }
        let eps = rat(self.epsilon);
        let g = rat(self.gamma);
        let mid = &eps + &g * t.s();
        let low = (BigRational::from_integer(1.into()) + &g) * &eps;
        t.w() >= mid && mid >= low
    }
}

/// Exact membership test; `theta` must lie on the simplex.
pub fn theta_eps_contains(te: &ThetaEps, theta: &DesignParams) -> bool {
    let t = ExactTheta::from_params(theta);
    let sum = &t.c + &t.p + &t.m;
    // allow the rounding of a decimal simplex point
    if (crate::exact::to_f64(&sum) - 1.0).abs() > 1e-12 {
        return false;
    }
    te.contains_exact(&t)
}

/// A polynomial in `(q, r)`: firm outputs first, then market flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignObjective {
    pub name: String,
    pub poly: Polynomial,
}

impl DesignObjective {
    /// Total surplus `sum_m (alpha_m d_m - beta_m d_m^2 / 2) - sum_f cost_f`.
    pub fn social_welfare(game: &GameInstance) -> Self {
        let nq = game.num_firms();
        let n = nq + game.num_markets();
        let mut poly = Polynomial::zero(n);
        for (m, mk) in game.markets.iter().enumerate() {
            let mut d = Polynomial::var(n, nq + m);
            for f in game.firms_in(m) {
                d = d.add(&Polynomial::var(n, f));
            }
            poly = poly.add(&d.scale(mk.alpha)).sub(&d.mul(&d).scale(0.5 * mk.beta));
        }
        for (f, firm) in game.firms.iter().enumerate() {
            let q = Polynomial::var(n, f);
            poly = poly
                .sub(&q.scale(firm.cost.c_lin))
                .sub(&q.mul(&q).scale(0.5 * firm.cost.c_quad));
        }
        DesignObjective {
            name: "sw".into(),
            poly,
        }
    }

    pub fn from_name(game: &GameInstance, name: &str) -> Result<Self> {
        match name {
            "sw" | "social_welfare" => Ok(DesignObjective::social_welfare(game)),
            other => Err(CnetError::Validation(format!("unknown objective {other:?}"))),
        }
    }

    pub fn eval(&self, alloc: &Allocation) -> f64 {
        let z: Vec<f64> = alloc.q.iter().chain(&alloc.r).copied().collect();
        self.poly.eval(&z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: DesignParams,
    pub g_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub theta_max: DesignParams,
    pub g_value: f64,
    pub equilibrium: EquilibriumResult,
    pub resolution: usize,
    /// Every feasible grid point in lexicographic order of `theta`.
    pub points: Vec<GridPoint>,
}

/// Feasible barycentric grid points `(i, j, k) / n` in lexicographic order.
pub fn feasible_grid(te: &ThetaEps, resolution: usize) -> Vec<(usize, usize, usize)> {
    let n = resolution;
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            if te.contains_exact(&ExactTheta::grid(i as i64, j as i64, k as i64, n as i64)) {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn grid_theta(i: usize, j: usize, k: usize, n: usize) -> DesignParams {
    let n = n as f64;
    DesignParams {
        theta_c: i as f64 / n,
        theta_p: j as f64 / n,
        theta_m: k as f64 / n,
    }
}

/// Maximizes `g` at equilibrium over the feasible grid; ties go to the
/// lexicographically smallest `theta`.
pub fn grid_search(
    game: &GameInstance,
    g: &DesignObjective,
    te: &ThetaEps,
    resolution: usize,
    opts: &SolveOptions,
) -> Result<GridSearchResult> {
    game.validate()?;
    if resolution == 0 {
        return Err(CnetError::Validation("resolution must be >= 1".into()));
    }
    if g.poly.nvars() != game.num_firms() + game.num_markets() {
        return Err(CnetError::Validation("objective has the wrong number of variables".into()));
    }
    let ctx = GameContext::new(game)?;
    let cells = feasible_grid(te, resolution);
    if cells.is_empty() {
        return Err(CnetError::EmptyFeasibleGrid);
    }
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j, k)| {
            let theta = grid_theta(i, j, k, resolution);
            let eq = solve_with_context(game, &ctx, &theta, opts, None)?;
            Ok(g.eval(&eq.allocation))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (idx, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = idx;
        }
    }
    let (i, j, k) = cells[best];
    let theta_max = grid_theta(i, j, k, resolution);
    let equilibrium = solve_with_context(game, &ctx, &theta_max, opts, None)?;
    let points = cells
        .iter()
        .zip(&values)
        .map(|(&(i, j, k), &v)| GridPoint {
            theta: grid_theta(i, j, k, resolution),
            g_value: v,
        })
        .collect();
    Ok(GridSearchResult {
        theta_max,
        g_value: values[best],
        equilibrium,
        resolution,
        points,
    })
}

/// Positions of each variable group inside `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpecLayout {
    pub num_firms: usize,
    pub dim_r: usize,
    pub num_rows: usize,
}

impl MpecLayout {
    pub fn q(&self, f: usize) -> usize {
        f
    }
    pub fn r_hat(&self, k: usize) -> usize {
        self.num_firms + k
    }
    pub fn mu(&self, f: usize) -> usize {
        self.num_firms + self.dim_r + f
    }
    pub fn nu(&self, j: usize) -> usize {
        2 * self.num_firms + self.dim_r + j
    }
    pub fn theta(&self, i: usize) -> usize {
        2 * self.num_firms + self.dim_r + self.num_rows + i
    }
    pub fn len(&self) -> usize {
        2 * self.num_firms + self.dim_r + self.num_rows + 3
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The design problem with the equilibrium replaced by its optimality
/// conditions.
///
/// Multipliers are those of the potential divided by
/// `theta_M + theta_P - theta_C`, which keeps every constraint of degree at
/// most two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mpec {
    pub program: PolyProgram,
    pub layout: MpecLayout,
    pub projection: ProjectedPolytope,
    pub q_bar: f64,
    pub multiplier_budget: f64,
    pub radius: f64,
}

/// `Pi_hat / s` for quadratic costs, at `(q, r)`.
fn scaled_potential(game: &GameInstance, theta: &DesignParams, q: &[f64], r: &[f64]) -> f64 {
    let s = theta.s();
    let w = theta.w();
    let mut v = 0.0;
    for (m, mk) in game.markets.iter().enumerate() {
        let firms = game.firms_in(m);
        let big_q: f64 = firms.iter().map(|&f| q[f]).sum();
        let sq: f64 = firms.iter().map(|&f| q[f] * q[f]).sum();
        let cost: f64 = firms.iter().map(|&f| game.firms[f].cost.cost(q[f])).sum();
        v += (mk.alpha - mk.beta * r[m]) * big_q - cost - 0.5 * mk.beta * (big_q * big_q + sq);
        v += (-0.5 * w * mk.beta * r[m] * r[m] + theta.theta_m * mk.alpha * r[m]) / s;
    }
    v
}

/// Assembles the polynomial program over `z = (q, r_hat, mu, nu, theta)`.
pub fn build_mpec(game: &GameInstance, g: &DesignObjective, te: &ThetaEps, opts: &SolveOptions) -> Result<Mpec> {
    game.validate()?;
    let proj = project_polytope(&game.transport, game.num_markets())?;
    if proj.dim() == 0 || proj.radius <= 1e-9 {
        return Err(CnetError::NoSlaterPoint("transport set has no interior point".into()));
    }
    let nq = game.num_firms();
    let nm = game.num_markets();
    let k = proj.dim();
    let rows = proj.a_hat.len();
    let layout = MpecLayout {
        num_firms: nq,
        dim_r: k,
        num_rows: rows,
    };
    let n = layout.len();
    let var = |i: usize| Polynomial::var(n, i);
    let cst = |c: f64| Polynomial::constant(n, c);

    // r_m as polynomials in r_hat
    let r_poly: Vec<Polynomial> = (0..nm)
        .map(|m| {
            let mut p = cst(proj.offset[m]);
            for l in 0..k {
                p = p.add(&var(layout.r_hat(l)).scale(proj.lift[m][l]));
            }
            p
        })
        .collect();
    let supply: Vec<Polynomial> = (0..nm)
        .map(|m| {
            game.firms_in(m)
                .into_iter()
                .fold(cst(0.0), |acc, f| acc.add(&var(layout.q(f))))
        })
        .collect();
    let (tc, tp, tm) = (var(layout.theta(0)), var(layout.theta(1)), var(layout.theta(2)));
    let s = tm.add(&tp).sub(&tc);
    let w = tm.scale(2.0).sub(&tc);

    let mut equalities = Vec::new();
    // firm stationarity divided by s
    for (f, firm) in game.firms.iter().enumerate() {
        let m = firm.market_id;
        let mk = &game.markets[m];
        let e = cst(mk.alpha - firm.cost.c_lin)
            .sub(&r_poly[m].add(&supply[m]).scale(mk.beta))
            .sub(&var(layout.q(f)).scale(mk.beta + firm.cost.c_quad))
            .add(&var(layout.mu(f)));
        equalities.push(e);
    }
    // stationarity along each reduced flow coordinate
    for l in 0..k {
        let mut e = cst(0.0);
        for m in 0..nm {
            let t = proj.lift[m][l];
            if t == 0.0 {
                continue;
            }
            let beta = game.markets[m].beta;
            let grad = s
                .mul(&supply[m])
                .scale(-beta)
                .sub(&w.mul(&r_poly[m]).scale(beta))
                .add(&tm.scale(game.markets[m].alpha));
            e = e.add(&grad.scale(t));
        }
        let mut at_nu = cst(0.0);
        for j in 0..rows {
            at_nu = at_nu.add(&var(layout.nu(j)).scale(proj.a_hat[j][l]));
        }
        equalities.push(e.sub(&s.mul(&at_nu)));
    }
    let row_slack = |j: usize| -> Polynomial {
        let mut p = cst(proj.b_hat[j]);
        for l in 0..k {
            p = p.sub(&var(layout.r_hat(l)).scale(proj.a_hat[j][l]));
        }
        p
    };
    for f in 0..nq {
        equalities.push(var(layout.mu(f)).mul(&var(layout.q(f))));
    }
    for j in 0..rows {
        equalities.push(var(layout.nu(j)).mul(&row_slack(j)));
    }
    equalities.push(tc.add(&tp).add(&tm).sub(&cst(1.0)));

    // Bounds.
    let flow_bounds = balanced_flow_bounds(&proj)?;
    let q_bar = (0..nq)
        .map(|f| {
            let m = game.firms[f].market_id;
            0.5 * (game.markets[m].alpha / game.markets[m].beta + flow_bounds[m])
        })
        .fold(0.0, f64::max);
    let budget = multiplier_budget(game, te, &proj, q_bar, opts)?;
    let r_hat_bounds = proj.coordinate_bounds()?;
    let radius = 2.0
        * (nq as f64 * q_bar * q_bar + r_hat_bounds.iter().map(|v| v * v).sum::<f64>() + budget * budget + 1.0).sqrt();

    let mut inequalities = Vec::new();
    for f in 0..nq {
        inequalities.push(var(layout.q(f)));
        inequalities.push(cst(q_bar).sub(&var(layout.q(f))));
    }
    for f in 0..nq {
        inequalities.push(var(layout.mu(f)));
    }
    for j in 0..rows {
        inequalities.push(var(layout.nu(j)));
    }
    for j in 0..rows {
        inequalities.push(row_slack(j));
    }
    for i in 0..3 {
        inequalities.push(var(layout.theta(i)));
    }
    inequalities.push(w.sub(&cst(te.epsilon)).sub(&s.scale(te.gamma)));
    inequalities.push(s.sub(&cst(te.epsilon)).scale(te.gamma));
    let mut budget_row = cst(budget);
    for f in 0..nq {
        budget_row = budget_row.sub(&var(layout.mu(f)));
    }
    for j in 0..rows {
        budget_row = budget_row.sub(&var(layout.nu(j)));
    }
    inequalities.push(budget_row);
    let mut ball = cst(radius * radius);
    for i in 0..n {
        ball = ball.sub(&var(i).mul(&var(i)));
    }
    inequalities.push(ball);

    let objective = g.poly.compose(
        &(0..nq)
            .map(|f| var(layout.q(f)))
            .chain(r_poly.iter().cloned())
            .collect::<Vec<_>>(),
    );

    let mut var_names: Vec<String> = (0..nq).map(|f| format!("q{}", f + 1)).collect();
    var_names.extend((0..k).map(|l| format!("r_hat{}", l + 1)));
    var_names.extend((0..nq).map(|f| format!("mu{}", f + 1)));
    var_names.extend((0..rows).map(|j| format!("nu{}", j + 1)));
    var_names.extend(["theta_c", "theta_p", "theta_m"].map(String::from));

    Ok(Mpec {
        program: PolyProgram {
            var_names,
            objective,
            inequalities,
            equalities,
            radius: Some(radius),
        },
        layout,
        projection: proj,
        q_bar,
        multiplier_budget: budget,
        radius,
    })
}

/// `max |r_m|` over the balanced transport set, per market.
fn balanced_flow_bounds(proj: &ProjectedPolytope) -> Result<Vec<f64>> {
    let nm = proj.lift.len();
    let mut out = vec![0.0; nm];
    for (m, bound) in out.iter_mut().enumerate() {
        for dir in [1.0, -1.0] {
            let c: Vec<f64> = proj.lift[m].iter().map(|v| v * dir).collect();
            let lp = crate::lp::LinearProgram {
                objective: &c,
                ineq: &proj.a_hat,
                ineq_rhs: &proj.b_hat,
                eq: &[],
                eq_rhs: &[],
                lower: None,
                upper: None,
            };
            match lp.maximize()? {
                crate::lp::LpOutcome::Optimal { value, .. } => {
                    *bound = f64::max(*bound, (value + dir * proj.offset[m]).abs())
                }
                _ => return Err(CnetError::Validation("transport set must be bounded".into())),
            }
        }
    }
    Ok(out)
}

/// Bound on the sum of scaled multipliers from a Slater point: the gap
/// between the optimal and the Slater value of the scaled potential, divided
/// by the Slater point's smallest slack, maximized over a coarse grid of
/// weights and doubled.
fn multiplier_budget(
    game: &GameInstance,
    te: &ThetaEps,
    proj: &ProjectedPolytope,
    q_bar: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    let q_slater = vec![0.5 * q_bar; game.num_firms()];
    let r_slater = proj.lift_point(&proj.center);
    let row_slack = proj.slacks(&proj.center).into_iter().fold(f64::INFINITY, f64::min);
    let d_bar = row_slack.min(0.5 * q_bar);
    if d_bar.is_nan() || d_bar <= 0.0 {
        return Err(CnetError::NoSlaterPoint("transport set has no interior point".into()));
    }
    let ctx = GameContext::new(game)?;
    let mut cells = Vec::new();
    let mut res = 20;
    while cells.is_empty() && res <= 1000 {
        cells = feasible_grid(te, res);
        if cells.is_empty() {
            res *= 5;
        }
    }
    if cells.is_empty() {
        return Err(CnetError::EmptyFeasibleGrid);
    }
    let mut worst: f64 = 0.0;
    for (i, j, k) in cells {
        let theta = grid_theta(i, j, k, res);
        let eq = solve_with_context(game, &ctx, &theta, opts, None)?;
        let best = scaled_potential(game, &theta, &eq.allocation.q, &eq.allocation.r);
        let slater = scaled_potential(game, &theta, &q_slater, &r_slater);
        worst = worst.max((best - slater) / d_bar);
    }
    Ok(2.0 * worst.max(1e-3))
}

impl Mpec {
    /// The point `z` of an equilibrium at `theta`, with scaled multipliers
    /// recovered from the stationarity conditions.
    pub fn embed(&self, game: &GameInstance, theta: &DesignParams, alloc: &Allocation) -> Result<Vec<f64>> {
        game.check_dims(alloc)?;
        let l = &self.layout;
        let p = &self.projection;
        let s = theta.s();
        if s <= 0.0 {
            return Err(CnetError::RegionNotCovered("embedding needs theta_m + theta_p - theta_c > 0".into()));
        }
        let mut z = vec![0.0; l.len()];
        for f in 0..l.num_firms {
            z[l.q(f)] = alloc.q[f];
        }
        let r_hat = p.project_point(&alloc.r);
        for (k, v) in r_hat.iter().enumerate() {
            z[l.r_hat(k)] = *v;
        }
        for (f, firm) in game.firms.iter().enumerate() {
            let m = firm.market_id;
            let mk = &game.markets[m];
            let big_q = game.supply(&alloc.q, m);
            let grad = mk.alpha - mk.beta * (alloc.r[m] + big_q) - mk.beta * alloc.q[f] - firm.cost.marginal(alloc.q[f]);
            z[l.mu(f)] = (-grad).max(0.0);
        }
        // Reduced flow gradient divided by s, matched by active rows.
        let grad_r: Vec<f64> = (0..game.num_markets())
            .map(|m| {
                let mk = &game.markets[m];
                (-s * mk.beta * game.supply(&alloc.q, m) - theta.w() * mk.beta * alloc.r[m] + theta.theta_m * mk.alpha) / s
            })
            .collect();
        let k = l.dim_r;
        let target: Vec<f64> = (0..k)
            .map(|c| (0..game.num_markets()).map(|m| p.lift[m][c] * grad_r[m]).sum())
            .collect();
        let slacks = p.slacks(&r_hat);
        let active: Vec<usize> = (0..l.num_rows).filter(|&j| slacks[j] <= 1e-8).collect();
        if !active.is_empty() {
            let a = nalgebra::DMatrix::from_fn(k, active.len(), |c, i| p.a_hat[active[i]][c]);
            let t = nalgebra::DVector::from_row_slice(&target);
            let nu = a
                .svd(true, true)
                .solve(&t, 1e-12)
                .map_err(|e| CnetError::NumericalFailure(e.to_string()))?;
            for (i, &j) in active.iter().enumerate() {
                z[l.nu(j)] = nu[i].max(0.0);
            }
        }
        let th = theta.as_array();
        for i in 0..3 {
            z[l.theta(i)] = th[i];
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityGap {
    pub v_d: f64,
    pub g_at_theta_max: f64,
    pub gap: f64,
    pub certificate: SosCertificate,
}

/// SOS bound at level `d` against the grid-search value.
pub fn optimality_gap(
    game: &GameInstance,
    g: &DesignObjective,
    te: &ThetaEps,
    d: u32,
    search: &GridSearchResult,
    opts: &SolveOptions,
    sdp: &SdpOptions,
) -> Result<OptimalityGap> {
    let mpec = build_mpec(game, g, te, opts)?;
    let cert = sos_bound(&mpec.program, d, sdp)?;
    Ok(OptimalityGap {
        v_d: cert.v_d,
        g_at_theta_max: search.g_value,
        gap: cert.v_d - search.g_value,
        certificate: cert,
    })
}
