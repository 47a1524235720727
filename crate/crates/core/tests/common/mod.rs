//! Random instance generators shared by the integration tests.

#![allow(dead_code)]

use cnet::closed_form::HomogeneousInstance;
use cnet::model::{Allocation, CostFn, DesignParams, FirmSpec, GameInstance, MarketSpec, TransportSet};
use cnet::two_node::TwoNodeParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box `-lo_m <= r_m <= hi_m` with positive bounds.
pub fn random_box(rng: &mut ChaCha8Rng, n: usize) -> TransportSet {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for m in 0..n {
        let mut row = vec![0.0; n];
        row[m] = 1.0;
        a.push(row.clone());
        b.push(rng.random_range(0.05..0.5));
        row[m] = -1.0;
        a.push(row);
        b.push(rng.random_range(0.05..0.5));
    }
    TransportSet::Polytope { a, b }
}

/// Game with `1..=max_markets` markets, each with `1..=max_firms` firms.
pub fn random_game(rng: &mut ChaCha8Rng, max_markets: usize, max_firms: usize) -> GameInstance {
    let n = rng.random_range(1..=max_markets);
    let markets: Vec<MarketSpec> = (0..n)
        .map(|_| MarketSpec {
            alpha: rng.random_range(1.0..3.0),
            beta: rng.random_range(0.5..2.0),
        })
        .collect();
    let mut firms = Vec::new();
    for m in 0..n {
        for _ in 0..rng.random_range(1..=max_firms) {
            firms.push(FirmSpec {
                market_id: m,
                cost: CostFn {
                    c_lin: rng.random_range(0.0..0.5),
                    c_quad: if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) },
                },
            });
        }
    }
    let transport = random_box(rng, n);
    GameInstance::new(markets, firms, transport).expect("generated game is valid")
}

/// Uniform point of the simplex.
pub fn random_theta(rng: &mut ChaCha8Rng) -> DesignParams {
    let e: Vec<f64> = (0..3).map(|_| -rng.random_range(1e-12..1.0f64).ln()).collect();
    let sum: f64 = e.iter().sum();
    DesignParams::new(e[0] / sum, e[1] / sum, e[2] / sum).unwrap()
}

/// Random theta accepted by `keep`.
pub fn random_theta_where(rng: &mut ChaCha8Rng, keep: impl Fn(&DesignParams) -> bool) -> DesignParams {
    loop {
        let t = random_theta(rng);
        if keep(&t) {
            return t;
        }
    }
}

/// Quantities in `[0, 1]` and a balanced flow.
pub fn random_allocation(rng: &mut ChaCha8Rng, game: &GameInstance) -> Allocation {
    let q = (0..game.num_firms()).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut r: Vec<f64> = (0..game.num_markets()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    for v in &mut r {
        *v -= mean;
    }
    Allocation { q, r, multipliers: None }
}

/// Homogeneous instance with `2..=max_firms` firms and theta inside the
/// strict region `2 theta_m - theta_c > (theta_m + theta_p - theta_c) / 2 > 0`,
/// with `alpha` above every closed-form threshold.
pub fn random_homogeneous(rng: &mut ChaCha8Rng, max_firms: usize) -> (HomogeneousInstance, DesignParams) {
    let n = rng.random_range(2..=max_firms);
    let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let beta = rng.random_range(0.5..2.0);
    let theta = random_theta_where(rng, |t| t.s() > 1e-3 && t.w() - 0.5 * t.s() > 1e-3);
    let kappa = theta.s() / theta.t3();
    let max = costs.iter().cloned().fold(0.0, f64::max);
    let mean = costs.iter().sum::<f64>() / n as f64;
    let need = [
        (1.0 + kappa) * max - kappa * mean,
        max,
        (1.0 + n as f64) * max - n as f64 * mean,
        // the social-welfare design is compared against, kappa = 1
        2.0 * max - mean,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let alpha = need + rng.random_range(0.01..1.0);
    (HomogeneousInstance::new(costs, alpha, beta).unwrap(), theta)
}

/// Two-node parameters satisfying `alpha >= b beta + max(c1, c2)`.
pub fn random_two_node(rng: &mut ChaCha8Rng) -> TwoNodeParams {
    let alpha = 1.0;
    let beta = rng.random_range(0.5..2.0);
    let c1: f64 = rng.random_range(0.0..0.5);
    let c2 = rng.random_range(0.0..0.5);
    let bmax = (alpha - c1.max(c2)) / beta;
    let b = rng.random_range(0.1 * bmax..bmax);
    TwoNodeParams::new(c1, c2, alpha, beta, b).unwrap()
}
