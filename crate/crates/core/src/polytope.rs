//! Reduction of the balanced transport set `{Ar <= b, 1'r = 0}` to a
//! full-dimensional polytope in fewer coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};
use crate::lp::{LinearProgram, LpOutcome};
use crate::model::TransportSet;

const LP_TOL: f64 = 1e-9;

/// `{r_hat : A_hat r_hat <= b_hat}` with lift `r = T r_hat + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPolytope {
    pub a_hat: Vec<Vec<f64>>,
    pub b_hat: Vec<f64>,
    /// `|M| x k` lift matrix.
    pub lift: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    /// Rows of the original `A` that hold with equality on the whole set.
    pub implicit_rows: Vec<usize>,
    /// Original row of each row of `A_hat`.
    pub kept_rows: Vec<usize>,
    /// Chebyshev center of the reduced polytope and its radius.
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ProjectedPolytope {
    pub fn dim(&self) -> usize {
        self.lift.first().map_or(0, Vec::len)
    }

    pub fn lift_point(&self, r_hat: &[f64]) -> Vec<f64> {
        self.lift
            .iter()
            .zip(&self.offset)
            .map(|(row, t)| t + row.iter().zip(r_hat).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    /// Slacks `b_hat - A_hat r_hat`.
    pub fn slacks(&self, r_hat: &[f64]) -> Vec<f64> {
        self.a_hat
            .iter()
            .zip(&self.b_hat)
            .map(|(row, b)| b - row.iter().zip(r_hat).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    /// Maximum of `|r_hat_k|` over the polytope, per coordinate.
    pub fn coordinate_bounds(&self) -> Result<Vec<f64>> {
        let k = self.dim();
        let mut out = vec![0.0; k];
        for (i, bound) in out.iter_mut().enumerate() {
            for dir in [1.0, -1.0] {
                let mut c = vec![0.0; k];
                c[i] = dir;
                match maximize(&c, &self.a_hat, &self.b_hat, &[], &[])? {
                    LpOutcome::Optimal { value, .. } => *bound = f64::max(*bound, value.abs()),
                    LpOutcome::Unbounded => {
                        return Err(CnetError::Validation("transport set is unbounded".into()))
                    }
                    LpOutcome::Infeasible => return Err(CnetError::EmptyPolytope),
                }
            }
        }
        Ok(out)
    }

    /// Reduced coordinates of a point of the balanced set.
    pub fn project_point(&self, r: &[f64]) -> Vec<f64> {
        // columns of the lift that are unit vectors identify free coordinates
        let k = self.dim();
        (0..k)
            .map(|j| {
                let m = (0..self.lift.len())
                    .find(|&m| {
                        self.lift[m][j] == 1.0 && (0..k).all(|l| l == j || self.lift[m][l] == 0.0) && self.offset[m] == 0.0
                    })
                    .expect("free coordinates map to unit rows");
                r[m]
            })
            .collect()
    }
}

fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64], e: &[Vec<f64>], f: &[f64]) -> Result<LpOutcome> {
    LinearProgram {
        objective: c,
        ineq: a,
        ineq_rhs: b,
        eq: e,
        eq_rhs: f,
        lower: None,
        upper: None,
    }
    .maximize()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes implicit equalities and redundant rows from the balanced
/// transport set and parameterizes its affine hull.
pub fn project_polytope(transport: &TransportSet, num_markets: usize) -> Result<ProjectedPolytope> {
    let TransportSet::Polytope { a, b } = transport else {
        return Err(CnetError::Validation("projection needs a polytope transport set".into()));
    };
    let n = num_markets;
    let ones = vec![vec![1.0; n]];
    if let LpOutcome::Infeasible = maximize(&vec![0.0; n], a, b, &ones, &[0.0])? {
        return Err(CnetError::EmptyPolytope);
    }

    // Implicit equalities: rows whose minimum over the set reaches b_j.
    let mut implicit = Vec::new();
    for (j, row) in a.iter().enumerate() {
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        if let LpOutcome::Optimal { value, .. } = maximize(&neg, a, b, &ones, &[0.0])? {
            if -value >= b[j] - LP_TOL * (1.0 + b[j].abs()) {
                implicit.push(j);
            }
        }
    }

    // Affine hull: E r = f, reduced by elimination with full pivoting.
    let mut e: Vec<Vec<f64>> = ones.clone();
    let mut f = vec![0.0];
    for &j in &implicit {
        e.push(a[j].clone());
        f.push(b[j]);
    }
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut used_rows = vec![false; e.len()];
    let mut used_cols = vec![false; n];
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in e.iter().enumerate() {
            if used_rows[i] {
                continue;
            }
            for (c, &v) in row.iter().enumerate() {
                if used_cols[c] {
                    continue;
                }
                let mag = v.abs();
                // largest magnitude, ties to the highest column
                if mag > 1e-12 && best.is_none_or(|(_, bc, bv)| mag > bv || (mag == bv && c > bc)) {
                    best = Some((i, c, mag));
                }
            }
        }
        let Some((pi, pc, _)) = best else { break };
        let pv = e[pi][pc];
        for v in e[pi].iter_mut() {
            *v /= pv;
        }
        f[pi] /= pv;
        for i in 0..e.len() {
            if i != pi {
                let factor = e[i][pc];
                if factor != 0.0 {
                    let pivot_row = e[pi].clone();
                    for (x, p) in e[i].iter_mut().zip(&pivot_row) {
                        *x -= factor * p;
                    }
                    f[i] -= factor * f[pi];
                }
            }
        }
        used_rows[pi] = true;
        used_cols[pc] = true;
        pivots.push((pi, pc));
    }
    for (i, used) in used_rows.iter().enumerate() {
        if !used && f[i].abs() > 1e-9 {
            return Err(CnetError::DegenerateBasis);
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !used_cols[*c]).collect();
    let k = free.len();
    let mut lift = vec![vec![0.0; k]; n];
    let mut offset = vec![0.0; n];
    for (j, &c) in free.iter().enumerate() {
        lift[c][j] = 1.0;
    }
    for &(pi, pc) in &pivots {
        offset[pc] = f[pi];
        for (j, &c) in free.iter().enumerate() {
            lift[pc][j] = -e[pi][c];
        }
    }

    // Remaining rows in reduced coordinates.
    let mut a_hat = Vec::new();
    let mut b_hat = Vec::new();
    let mut kept = Vec::new();
    for (j, row) in a.iter().enumerate() {
        if implicit.contains(&j) {
            continue;
        }
        let reduced: Vec<f64> = (0..k).map(|l| (0..n).map(|m| row[m] * lift[m][l]).sum()).collect();
        let rhs = b[j] - dot(row, &offset);
        if reduced.iter().all(|v| v.abs() <= 1e-12) {
            continue;
        }
        a_hat.push(reduced);
        b_hat.push(rhs);
        kept.push(j);
    }
    // Drop rows implied by the others.
    let mut j = 0;
    while j < a_hat.len() {
        let others: Vec<Vec<f64>> = (0..a_hat.len()).filter(|&i| i != j).map(|i| a_hat[i].clone()).collect();
        let other_b: Vec<f64> = (0..a_hat.len()).filter(|&i| i != j).map(|i| b_hat[i]).collect();
        let redundant = match maximize(&a_hat[j], &others, &other_b, &[], &[])? {
            LpOutcome::Optimal { value, .. } => value <= b_hat[j] + LP_TOL * (1.0 + b_hat[j].abs()),
            _ => false,
        };
        if redundant {
            a_hat.remove(j);
            b_hat.remove(j);
            kept.remove(j);
        } else {
            j += 1;
        }
    }

    // Chebyshev center.
    let (center, radius) = if k == 0 {
        (Vec::new(), 0.0)
    } else {
        let mut rows = Vec::new();
        for row in &a_hat {
            let mut r = row.clone();
            r.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
            rows.push(r);
        }
        let mut cap = vec![0.0; k + 1];
        cap[k] = 1.0;
        rows.push(cap.clone());
        let mut rhs = b_hat.clone();
        rhs.push(1e6);
        match maximize(&cap, &rows, &rhs, &[], &[])? {
            LpOutcome::Optimal { x, value } => (x[..k].to_vec(), value),
            LpOutcome::Infeasible => return Err(CnetError::EmptyPolytope),
            LpOutcome::Unbounded => return Err(CnetError::NumericalFailure("Chebyshev LP unbounded".into())),
        }
    };

    Ok(ProjectedPolytope {
        a_hat,
        b_hat,
        lift,
        offset,
        implicit_rows: implicit,
        kept_rows: kept,
        center,
        radius,
    })
}
