//! Game data and closed-form evaluation of payoffs, surpluses and the potential.
//!
//! Markets have linear inverse demand `p = alpha - beta * d` where the demand
//! `d_m = r_m + Q_m` is the local production plus the market maker's inflow.
//! Firms have convex quadratic costs `C q + D q^2 / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};

/// Tolerance on `|1'r|` for an allocation to count as balanced.
pub const BALANCE_TOL: f64 = 1e-9;
/// Tolerance on `Ar <= b` for transport feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl MarketSpec {
    pub fn price(&self, demand: f64) -> f64 {
        self.alpha - self.beta * demand
    }
}

/// Free-standing form of [`MarketSpec::price`].
pub fn price(market: &MarketSpec, demand: f64) -> f64 {
    market.price(demand)
}

/// Quadratic cost `c_lin * q + c_quad * q^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFn {
    pub c_lin: f64,
    pub c_quad: f64,
}

impl CostFn {
    pub fn cost(&self, q: f64) -> f64 {
        self.c_lin * q + 0.5 * self.c_quad * q * q
    }

    pub fn marginal(&self, q: f64) -> f64 {
        self.c_lin + self.c_quad * q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmSpec {
    #[serde(rename = "market")]
    pub market_id: usize,
    #[serde(flatten)]
    pub cost: CostFn,
}

/// Feasible set `P` for the market maker's reallocation `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransportSet {
    Polytope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Unconstrained,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInstance {
    pub markets: Vec<MarketSpec>,
    pub firms: Vec<FirmSpec>,
    pub transport: TransportSet,
}

/// Surplus weights `(theta_C, theta_P, theta_M)` of the market maker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub theta_c: f64,
    pub theta_p: f64,
    pub theta_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Multiplier of the balance constraint `1'r = 0`.
    pub lambda_balance: f64,
    /// Multipliers of `q >= 0`.
    pub mu_firm: Vec<f64>,
    /// Multipliers of `Ar <= b`.
    pub nu_transport: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Multipliers>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusBreakdown {
    pub cs: Vec<f64>,
    pub ps: Vec<f64>,
    pub ms: Vec<f64>,
}

impl SurplusBreakdown {
    /// Summed in the same order as a unit-weight market-maker payoff, so the
    /// two agree bit for bit.
    pub fn welfare(&self) -> f64 {
        let cs: f64 = self.cs.iter().sum();
        let ps: f64 = self.ps.iter().sum();
        let ms: f64 = self.ms.iter().sum();
        cs + ps + ms
    }
}

/// Named presets of the surplus weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaPreset {
    /// Social welfare `(1, 1, 1)`.
    Sw,
    /// Consumer surplus `(1, 0, 0)`.
    Cs,
    /// Residual social welfare `(1, 0, 1)`.
    Rsw,
    /// Merchandising surplus `(0, 0, 1)`.
    Ms,
}

impl std::str::FromStr for ThetaPreset {
    type Err = CnetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sw" => Ok(ThetaPreset::Sw),
            "cs" => Ok(ThetaPreset::Cs),
            "rsw" => Ok(ThetaPreset::Rsw),
            "ms" => Ok(ThetaPreset::Ms),
            other => Err(CnetError::Validation(format!("unknown theta preset '{other}'"))),
        }
    }
}

pub fn theta_preset(name: ThetaPreset) -> DesignParams {
    let (c, p, m) = match name {
        ThetaPreset::Sw => (1.0, 1.0, 1.0),
        ThetaPreset::Cs => (1.0, 0.0, 0.0),
        ThetaPreset::Rsw => (1.0, 0.0, 1.0),
        ThetaPreset::Ms => (0.0, 0.0, 1.0),
    };
    DesignParams::new(c, p, m).expect("presets are valid")
}

impl DesignParams {
    pub fn new(theta_c: f64, theta_p: f64, theta_m: f64) -> Result<Self> {
        let theta = DesignParams {
            theta_c,
            theta_p,
            theta_m,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.theta_c, self.theta_p, self.theta_m];
        if parts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CnetError::Validation(
                "theta components must be finite and nonnegative".into(),
            ));
        }
        if parts.iter().all(|v| *v == 0.0) {
            return Err(CnetError::Validation("theta must not be all zero".into()));
        }
        Ok(())
    }

    /// `theta_M + theta_P - theta_C`, the potential weight.
    pub fn s(&self) -> f64 {
        self.theta_m + self.theta_p - self.theta_c
    }

    /// `2 theta_M - theta_C`, the concavity margin of the payoff in r.
    pub fn w(&self) -> f64 {
        2.0 * self.theta_m - self.theta_c
    }

    /// `3 theta_M - theta_C - theta_P`.
    pub fn t3(&self) -> f64 {
        3.0 * self.theta_m - self.theta_c - self.theta_p
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta_c, self.theta_p, self.theta_m]
    }
}

/// Rescales `theta` onto the unit simplex.
pub fn simplex_normalize(theta: &DesignParams) -> Result<DesignParams> {
    theta.validate()?;
    let sum = theta.theta_c + theta.theta_p + theta.theta_m;
    Ok(DesignParams {
        theta_c: theta.theta_c / sum,
        theta_p: theta.theta_p / sum,
        theta_m: theta.theta_m / sum,
    })
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl GameInstance {
    pub fn new(markets: Vec<MarketSpec>, firms: Vec<FirmSpec>, transport: TransportSet) -> Result<Self> {
        let game = GameInstance {
            markets,
            firms,
            transport,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.markets.is_empty() {
            return Err(CnetError::Validation("at least one market is required".into()));
        }
        if self.firms.is_empty() {
            return Err(CnetError::Validation("at least one firm is required".into()));
        }
        for (m, market) in self.markets.iter().enumerate() {
            if !finite(market.alpha) || market.alpha <= 0.0 {
                return Err(CnetError::Validation(format!("market {m}: alpha must be > 0")));
            }
            if !finite(market.beta) || market.beta <= 0.0 {
                return Err(CnetError::Validation(format!("market {m}: beta must be > 0")));
            }
        }
        for (f, firm) in self.firms.iter().enumerate() {
            if firm.market_id >= self.markets.len() {
                return Err(CnetError::Validation(format!(
                    "firm {f}: market index {} out of range",
                    firm.market_id
                )));
            }
            if !finite(firm.cost.c_lin) || firm.cost.c_lin < 0.0 {
                return Err(CnetError::Validation(format!("firm {f}: c_lin must be >= 0")));
            }
            if !finite(firm.cost.c_quad) || firm.cost.c_quad < 0.0 {
                return Err(CnetError::Validation(format!("firm {f}: c_quad must be >= 0")));
            }
        }
        if let TransportSet::Polytope { a, b } = &self.transport {
            if a.len() != b.len() {
                return Err(CnetError::Validation(format!(
                    "transport: A has {} rows but b has {} entries",
                    a.len(),
                    b.len()
                )));
            }
            for (j, row) in a.iter().enumerate() {
                if row.len() != self.markets.len() {
                    return Err(CnetError::Validation(format!(
                        "transport: row {j} has {} columns, expected {}",
                        row.len(),
                        self.markets.len()
                    )));
                }
                if row.iter().any(|v| !finite(*v)) || !finite(b[j]) {
                    return Err(CnetError::Validation(format!("transport: row {j} is not finite")));
                }
                if b[j] < 0.0 {
                    return Err(CnetError::Validation(format!(
                        "transport: row {j} excludes r = 0 (b = {})",
                        b[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_markets(&self) -> usize {
        self.markets.len()
    }

    pub fn num_firms(&self) -> usize {
        self.firms.len()
    }

    /// Indices of the firms located in market `m`.
    pub fn firms_in(&self, m: usize) -> Vec<usize> {
        (0..self.firms.len())
            .filter(|&f| self.firms[f].market_id == m)
            .collect()
    }

    /// Total local production `Q_m`.
    pub fn supply(&self, q: &[f64], m: usize) -> f64 {
        self.firms
            .iter()
            .zip(q)
            .filter(|(firm, _)| firm.market_id == m)
            .map(|(_, qf)| *qf)
            .sum()
    }

    /// Demand `d_m = r_m + Q_m` in every market.
    pub fn demands(&self, alloc: &Allocation) -> Vec<f64> {
        let mut d = alloc.r.clone();
        for (firm, qf) in self.firms.iter().zip(&alloc.q) {
            d[firm.market_id] += qf;
        }
        d
    }

    /// Checks vector lengths of an allocation against the game.
    pub fn check_dims(&self, alloc: &Allocation) -> Result<()> {
        if alloc.q.len() != self.firms.len() {
            return Err(CnetError::Validation(format!(
                "allocation has {} quantities, game has {} firms",
                alloc.q.len(),
                self.firms.len()
            )));
        }
        if alloc.r.len() != self.markets.len() {
            return Err(CnetError::Validation(format!(
                "allocation has {} flows, game has {} markets",
                alloc.r.len(),
                self.markets.len()
            )));
        }
        if alloc.q.iter().chain(&alloc.r).any(|v| !v.is_finite()) {
            return Err(CnetError::Validation("allocation entries must be finite".into()));
        }
        Ok(())
    }

    /// Checks `q >= 0`, balance and transport feasibility within tolerance.
    pub fn check_feasible(&self, alloc: &Allocation) -> Result<()> {
        self.check_dims(alloc)?;
        if let Some(f) = alloc.q.iter().position(|v| *v < -FEASIBILITY_TOL) {
            return Err(CnetError::Validation(format!("q[{f}] is negative")));
        }
        let balance: f64 = alloc.r.iter().sum();
        if balance.abs() > BALANCE_TOL {
            return Err(CnetError::Validation(format!("1'r = {balance} is not zero")));
        }
        match &self.transport {
            TransportSet::Polytope { a, b } => {
                for (j, row) in a.iter().enumerate() {
                    let lhs: f64 = row.iter().zip(&alloc.r).map(|(x, y)| x * y).sum();
                    if lhs > b[j] + FEASIBILITY_TOL {
                        return Err(CnetError::Validation(format!(
                            "transport row {j} violated by {}",
                            lhs - b[j]
                        )));
                    }
                }
            }
            TransportSet::Zero => {
                if alloc.r.iter().any(|v| v.abs() > FEASIBILITY_TOL) {
                    return Err(CnetError::Validation("r must be zero".into()));
                }
            }
            TransportSet::Unconstrained => {}
        }
        Ok(())
    }
}

/// Profit `q_f p_{M(f)} - cost_f(q_f)` of firm `f`.
pub fn firm_profit(game: &GameInstance, alloc: &Allocation, f: usize) -> Result<f64> {
    game.check_dims(alloc)?;
    let firm = game
        .firms
        .get(f)
        .ok_or_else(|| CnetError::Validation(format!("firm index {f} out of range")))?;
    let m = firm.market_id;
    let d = alloc.r[m] + game.supply(&alloc.q, m);
    let qf = alloc.q[f];
    Ok(qf * game.markets[m].price(d) - firm.cost.cost(qf))
}

/// Per-market consumer, producer and merchandising surplus.
pub fn surplus_breakdown(game: &GameInstance, alloc: &Allocation) -> Result<SurplusBreakdown> {
    game.check_dims(alloc)?;
    let n = game.num_markets();
    let mut cs = vec![0.0; n];
    let mut ps = vec![0.0; n];
    let mut ms = vec![0.0; n];
    let d = game.demands(alloc);
    for m in 0..n {
        let market = &game.markets[m];
        let p = market.price(d[m]);
        cs[m] = 0.5 * market.beta * d[m] * d[m];
        ps[m] = game.supply(&alloc.q, m) * p;
        ms[m] = alloc.r[m] * p;
    }
    for (f, firm) in game.firms.iter().enumerate() {
        ps[firm.market_id] -= firm.cost.cost(alloc.q[f]);
    }
    Ok(SurplusBreakdown { cs, ps, ms })
}

pub fn welfare(game: &GameInstance, alloc: &Allocation) -> Result<f64> {
    Ok(surplus_breakdown(game, alloc)?.welfare())
}

/// Market-maker payoff `theta_C CS + theta_P PS + theta_M MS`.
pub fn mm_payoff(game: &GameInstance, alloc: &Allocation, theta: &DesignParams) -> Result<f64> {
    let sb = surplus_breakdown(game, alloc)?;
    let cs: f64 = sb.cs.iter().sum();
    let ps: f64 = sb.ps.iter().sum();
    let ms: f64 = sb.ms.iter().sum();
    Ok(theta.theta_c * cs + theta.theta_p * ps + theta.theta_m * ms)
}

/// The potential in expanded quadratic form.
pub fn potential(game: &GameInstance, alloc: &Allocation, theta: &DesignParams) -> Result<f64> {
    game.check_dims(alloc)?;
    let s = theta.s();
    let mut firm_part = 0.0;
    let mut mm_part = 0.0;
    for (m, market) in game.markets.iter().enumerate() {
        let (alpha, beta) = (market.alpha, market.beta);
        let r = alloc.r[m];
        let big_q = game.supply(&alloc.q, m);
        let mut sq = 0.0;
        let mut costs = 0.0;
        for (f, firm) in game.firms.iter().enumerate() {
            if firm.market_id == m {
                sq += alloc.q[f] * alloc.q[f];
                costs += firm.cost.cost(alloc.q[f]);
            }
        }
        firm_part += (alpha - beta * r) * big_q - costs - 0.5 * beta * big_q * big_q - 0.5 * beta * sq;
        mm_part += -0.5 * theta.w() * beta * r * r + theta.theta_m * alpha * r;
    }
    Ok(s * firm_part + mm_part)
}

/// Gradient with respect to `(q, r)`, split into the two blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub dq: Vec<f64>,
    pub dr: Vec<f64>,
}

/// Gradient of the potential.
pub fn potential_gradient(game: &GameInstance, alloc: &Allocation, theta: &DesignParams) -> Result<Gradient> {
    game.check_dims(alloc)?;
    let s = theta.s();
    let supplies: Vec<f64> = (0..game.num_markets()).map(|m| game.supply(&alloc.q, m)).collect();
    let dq = game
        .firms
        .iter()
        .enumerate()
        .map(|(f, firm)| {
            let m = firm.market_id;
            let mk = &game.markets[m];
            s * (mk.alpha - mk.beta * alloc.r[m] - firm.cost.marginal(alloc.q[f])
                - mk.beta * supplies[m]
                - mk.beta * alloc.q[f])
        })
        .collect();
    let dr = game
        .markets
        .iter()
        .enumerate()
        .map(|(m, mk)| -s * mk.beta * supplies[m] - theta.w() * mk.beta * alloc.r[m] + theta.theta_m * mk.alpha)
        .collect();
    Ok(Gradient { dq, dr })
}

/// Gradient of the market-maker payoff.
pub fn mm_payoff_gradient(game: &GameInstance, alloc: &Allocation, theta: &DesignParams) -> Result<Gradient> {
    game.check_dims(alloc)?;
    let d = game.demands(alloc);
    let supplies: Vec<f64> = (0..game.num_markets()).map(|m| game.supply(&alloc.q, m)).collect();
    let (tc, tp, tm) = (theta.theta_c, theta.theta_p, theta.theta_m);
    let dq = game
        .firms
        .iter()
        .enumerate()
        .map(|(f, firm)| {
            let m = firm.market_id;
            let mk = &game.markets[m];
            let p = mk.price(d[m]);
            tc * mk.beta * d[m] + tp * (p - mk.beta * supplies[m] - firm.cost.marginal(alloc.q[f]))
                - tm * mk.beta * alloc.r[m]
        })
        .collect();
    let dr = game
        .markets
        .iter()
        .enumerate()
        .map(|(m, mk)| {
            let p = mk.price(d[m]);
            tc * mk.beta * d[m] - tp * mk.beta * supplies[m] + tm * (p - mk.beta * alloc.r[m])
        })
        .collect();
    Ok(Gradient { dq, dr })
}

/// Gradient of firm `f`'s profit with respect to every `(q, r)` coordinate.
pub fn firm_profit_gradient(game: &GameInstance, alloc: &Allocation, f: usize) -> Result<Gradient> {
    game.check_dims(alloc)?;
    let firm = game
        .firms
        .get(f)
        .ok_or_else(|| CnetError::Validation(format!("firm index {f} out of range")))?;
    let m = firm.market_id;
    let mk = &game.markets[m];
    let d = alloc.r[m] + game.supply(&alloc.q, m);
    let qf = alloc.q[f];
    let dq = game
        .firms
        .iter()
        .enumerate()
        .map(|(g, other)| {
            if g == f {
                mk.price(d) - mk.beta * qf - firm.cost.marginal(qf)
            } else if other.market_id == m {
                -mk.beta * qf
            } else {
                0.0
            }
        })
        .collect();
    let mut dr = vec![0.0; game.num_markets()];
    dr[m] = -mk.beta * qf;
    Ok(Gradient { dq, dr })
}
