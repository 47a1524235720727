//! Closed-form equilibria and welfare for identical markets with one
//! linear-cost firm each.

use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};
use crate::model::{
    theta_preset, Allocation, CostFn, DesignParams, FirmSpec, GameInstance, MarketSpec, Multipliers, ThetaPreset,
    TransportSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousInstance {
    pub marginal_costs: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl HomogeneousInstance {
    pub fn new(marginal_costs: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let inst = HomogeneousInstance {
            marginal_costs,
            alpha,
            beta,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginal_costs.is_empty() {
            return Err(CnetError::Validation("at least one firm is required".into()));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(CnetError::Validation("beta must be > 0".into()));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(CnetError::Validation("alpha must be > 0".into()));
        }
        if self.marginal_costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(CnetError::Validation("marginal costs must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.marginal_costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginal_costs.is_empty()
    }

    pub fn mean_cost(&self) -> f64 {
        self.marginal_costs.iter().sum::<f64>() / self.len() as f64
    }

    /// Population standard deviation of the marginal costs.
    pub fn sigma_cost(&self) -> f64 {
        let mean = self.mean_cost();
        let var = self
            .marginal_costs
            .iter()
            .map(|c| (c - mean) * (c - mean))
            .sum::<f64>()
            / self.len() as f64;
        var.sqrt()
    }

    fn max_cost(&self) -> f64 {
        self.marginal_costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The instance as a game with one firm per market.
    pub fn to_game(&self, transport: TransportSet) -> Result<GameInstance> {
        let markets = vec![
            MarketSpec {
                alpha: self.alpha,
                beta: self.beta,
            };
            self.len()
        ];
        let firms = self
            .marginal_costs
            .iter()
            .enumerate()
            .map(|(m, c)| FirmSpec {
                market_id: m,
                cost: CostFn { c_lin: *c, c_quad: 0.0 },
            })
            .collect();
        GameInstance::new(markets, firms, transport)
    }
}

fn require(condition: &str, slack: f64, strict: bool) -> Result<()> {
    let ok = if strict { slack > 0.0 } else { slack >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(CnetError::PreconditionViolated {
            condition: condition.to_string(),
            slack,
        })
    }
}

/// `(theta_M + theta_P - theta_C) / (3 theta_M - theta_P - theta_C)`.
pub fn kappa(theta: &DesignParams) -> Result<f64> {
    let den = theta.t3();
    if den == 0.0 {
        return Err(CnetError::PreconditionViolated {
            condition: "3 theta_m - theta_p - theta_c != 0".into(),
            slack: 0.0,
        });
    }
    Ok(theta.s() / den)
}

fn networked_preconditions(inst: &HomogeneousInstance, theta: &DesignParams) -> Result<f64> {
    inst.validate()?;
    theta.validate()?;
    let s = theta.s();
    require("theta_m + theta_p - theta_c > 0", s, true)?;
    require("2 theta_m - theta_c > (theta_m + theta_p - theta_c) / 2", theta.w() - 0.5 * s, true)?;
    let k = kappa(theta)?;
    let bound = (1.0 + k) * inst.max_cost() - k * inst.mean_cost();
    require("alpha >= (1 + kappa) max C - kappa mean C", inst.alpha - bound, false)?;
    Ok(k)
}

/// Unique equilibrium with unconstrained transport, with the KKT multipliers
/// `mu = 0` and the balance multiplier in closed form.
pub fn unconstrained_equilibrium(inst: &HomogeneousInstance, theta: &DesignParams) -> Result<Allocation> {
    let k = networked_preconditions(inst, theta)?;
    let mean = inst.mean_cost();
    let (alpha, beta) = (inst.alpha, inst.beta);
    let q = inst
        .marginal_costs
        .iter()
        .map(|c| (alpha - mean - (1.0 + k) * (c - mean)) / (2.0 * beta))
        .collect();
    let r = inst.marginal_costs.iter().map(|c| k / beta * (c - mean)).collect();
    let lambda = 0.5 * theta.s() * (mean - alpha) + theta.theta_m * alpha;
    Ok(Allocation {
        q,
        r,
        multipliers: Some(Multipliers {
            lambda_balance: lambda,
            mu_firm: vec![0.0; inst.len()],
            nu_transport: Vec::new(),
        }),
    })
}

/// Social welfare at the unconstrained equilibrium.
pub fn unconstrained_welfare(inst: &HomogeneousInstance, theta: &DesignParams) -> Result<f64> {
    let k = networked_preconditions(inst, theta)?;
    let n = inst.len() as f64;
    let a = inst.alpha - inst.mean_cost();
    let sig2 = inst.sigma_cost().powi(2);
    Ok(3.0 * n / (8.0 * inst.beta) * (a * a + sig2 + k * (6.0 - k) * sig2 / 3.0))
}

/// Equilibrium quantities and welfare with no transport.
pub fn nonnetworked_equilibrium(inst: &HomogeneousInstance) -> Result<(Vec<f64>, f64)> {
    inst.validate()?;
    require("alpha >= max C", inst.alpha - inst.max_cost(), false)?;
    let q = inst
        .marginal_costs
        .iter()
        .map(|c| (inst.alpha - c) / (2.0 * inst.beta))
        .collect();
    let n = inst.len() as f64;
    let a = inst.alpha - inst.mean_cost();
    let welfare = 3.0 * n / (8.0 * inst.beta) * (a * a + inst.sigma_cost().powi(2));
    Ok((q, welfare))
}

/// Cournot equilibrium of the single market obtained by merging all markets.
pub fn aggregated_equilibrium(inst: &HomogeneousInstance) -> Result<(Vec<f64>, f64)> {
    inst.validate()?;
    let n = inst.len() as f64;
    let mean = inst.mean_cost();
    let bound = (1.0 + n) * inst.max_cost() - n * mean;
    require("alpha >= (1 + |F|) max C - |F| mean C", inst.alpha - bound, false)?;
    let q = inst
        .marginal_costs
        .iter()
        .map(|c| n / ((1.0 + n) * inst.beta) * (inst.alpha - mean - (1.0 + n) * (c - mean)))
        .collect();
    let a = inst.alpha - mean;
    let sig2 = inst.sigma_cost().powi(2);
    let welfare = n * n * (2.0 + n) / (2.0 * (1.0 + n).powi(2) * inst.beta)
        * (a * a + 2.0 * (1.0 + n).powi(2) / (2.0 + n) * sig2);
    Ok((q, welfare))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareComparison {
    pub networked: f64,
    pub networked_sw_design: f64,
    pub nonnetworked: f64,
    pub aggregated: f64,
    pub ratio_to_sw_design: f64,
    pub ratio_networked_to_nonnetworked: f64,
    pub ratio_aggregated_to_networked: f64,
    pub total_production: f64,
    /// `|total_production - |F| (alpha - mean C) / (2 beta)|`.
    pub total_production_residual: f64,
}

pub fn welfare_comparison(inst: &HomogeneousInstance, theta: &DesignParams) -> Result<WelfareComparison> {
    let networked = unconstrained_welfare(inst, theta)?;
    let sw = unconstrained_welfare(inst, &theta_preset(ThetaPreset::Sw))?;
    let (_, nonnetworked) = nonnetworked_equilibrium(inst)?;
    let (_, aggregated) = aggregated_equilibrium(inst)?;
    let eq = unconstrained_equilibrium(inst, theta)?;
    let total: f64 = eq.q.iter().sum();
    let expected = inst.len() as f64 * (inst.alpha - inst.mean_cost()) / (2.0 * inst.beta);
    Ok(WelfareComparison {
        networked,
        networked_sw_design: sw,
        nonnetworked,
        aggregated,
        ratio_to_sw_design: networked / sw,
        ratio_networked_to_nonnetworked: networked / nonnetworked,
        ratio_aggregated_to_networked: aggregated / networked,
        total_production: total,
        total_production_residual: (total - expected).abs(),
    })
}
