//! Dense primal active-set method for convex quadratic programs
//!
//! ```text
//! minimize ½ x'Hx + c'x   s.t.  Ex = f,  Gx <= h
//! ```
//!
//! with `H` positive semidefinite. Each iteration minimizes over the null
//! space of the working set. Zero-curvature directions with a nonzero
//! gradient component are followed to the nearest blocking constraint, which
//! also detects unboundedness.

use nalgebra::{DMatrix, DVector};

use crate::error::{CnetError, Result};

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub hvec: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `Ex = f` with the sign convention `Hx + c + E'y + G'z = 0`.
    pub eq_mult: DVector<f64>,
    /// Multipliers of `Gx <= h`, nonnegative at optimality.
    pub ineq_mult: DVector<f64>,
    pub iterations: usize,
    pub working_set: Vec<usize>,
    /// The reduced Hessian on the final face has a zero eigenvalue.
    pub zero_curvature: bool,
}

/// Orthonormal basis of the null space of the rows of `a` (k x n).
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let mut padded = DMatrix::zeros(n.max(a.nrows()), n);
    padded.rows_mut(0, a.nrows()).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max().max(1e-300);
    let cols: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax)
        .collect();
    let mut z = DMatrix::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        z.set_column(j, &v_t.row(i).transpose());
    }
    z
}

impl QuadraticProgram {
    pub fn num_vars(&self) -> usize {
        self.h.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    fn active_matrix(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.num_vars();
        let k = self.e.nrows() + working.len();
        let mut a = DMatrix::zeros(k, n);
        for i in 0..self.e.nrows() {
            a.set_row(i, &self.e.row(i));
        }
        for (j, &i) in working.iter().enumerate() {
            a.set_row(self.e.nrows() + j, &self.g.row(i));
        }
        a
    }

    /// Runs the active-set iteration from a feasible `x0`.
    ///
    /// Constraints in `working` must be active at `x0`; linearly dependent
    /// entries are skipped.
    pub fn solve(&self, x0: &DVector<f64>, working: &[usize], max_iter: usize) -> Result<QpSolution> {
        let n = self.num_vars();
        let scale = 1.0 + self.hvec.amax().max(self.f.amax());
        let feas_tol = 1e-9 * scale;
        if self.e.nrows() > 0 && (&self.e * x0 - &self.f).amax() > feas_tol {
            return Err(CnetError::Validation("QP start violates equalities".into()));
        }
        if self.g.nrows() > 0 && (&self.g * x0 - &self.hvec).max() > feas_tol {
            return Err(CnetError::Validation("QP start violates inequalities".into()));
        }
        let mut x = x0.clone();
        let mut w: Vec<usize> = Vec::new();
        for &i in working {
            if i >= self.g.nrows() || w.contains(&i) {
                continue;
            }
            let slack = self.hvec[i] - self.g.row(i).dot(&x.transpose());
            if slack.abs() > feas_tol {
                continue;
            }
            let z = null_space(&self.active_matrix(&w), n);
            let gi = self.g.row(i).transpose();
            if (z.transpose() * &gi).norm() > 1e-9 * gi.norm() {
                w.push(i);
            }
        }

        let hscale = 1.0 + self.h.amax();
        let curv_tol = 1e-10 * hscale;
        for iter in 0..max_iter {
            let grad = &self.h * &x + &self.c;
            let gscale = 1.0 + grad.amax();
            let a = self.active_matrix(&w);
            let z = null_space(&a, n);
            let mut p = DVector::zeros(n);
            let mut capped = true;
            let mut flat = false;
            if z.ncols() > 0 {
                let hr = z.transpose() * &self.h * &z;
                let gr = z.transpose() * &grad;
                let eig = hr.symmetric_eigen();
                let mut v0 = DVector::zeros(z.ncols());
                let mut v1 = DVector::zeros(z.ncols());
                for k in 0..z.ncols() {
                    let u = eig.eigenvectors.column(k);
                    let comp = u.dot(&gr);
                    if eig.eigenvalues[k] <= curv_tol {
                        flat = true;
                        v0 += u * comp;
                    } else {
                        v1 += u * (comp / eig.eigenvalues[k]);
                    }
                }
                if v0.amax() > 1e-11 * gscale {
                    p = -(&z * v0);
                    capped = false;
                } else {
                    p = -(&z * v1);
                }
            }

            if p.amax() <= 1e-13 * (1.0 + x.amax()) {
                // Stationary on the current face: inspect multipliers.
                let (eq_mult, ineq_w) = if a.nrows() > 0 {
                    let svd = a.transpose().svd(true, true);
                    let lam = svd
                        .solve(&(-&grad), 1e-14)
                        .map_err(|e| CnetError::NumericalFailure(e.to_string()))?;
                    let ne = self.e.nrows();
                    (lam.rows(0, ne).into_owned(), lam.rows(ne, w.len()).into_owned())
                } else {
                    (DVector::zeros(0), DVector::zeros(0))
                };
                let mtol = 1e-10 * gscale;
                let mut drop: Option<(usize, f64)> = None;
                for (j, &i) in w.iter().enumerate() {
                    let v = ineq_w[j];
                    if v < -mtol {
                        match drop {
                            Some((pi, pv)) if v > pv || (v == pv && w[pi] < i) => {}
                            _ => drop = Some((j, v)),
                        }
                    }
                }
                if let Some((j, _)) = drop {
                    w.remove(j);
                    continue;
                }
                let mut ineq_mult = DVector::zeros(self.g.nrows());
                for (j, &i) in w.iter().enumerate() {
                    ineq_mult[i] = ineq_w[j].max(0.0);
                }
                return Ok(QpSolution {
                    x,
                    eq_mult,
                    ineq_mult,
                    iterations: iter,
                    working_set: w,
                    zero_curvature: flat,
                });
            }

            // Ratio test against the inactive inequalities.
            let mut step = if capped { 1.0 } else { f64::INFINITY };
            let mut block: Option<usize> = None;
            let pnorm = p.norm();
            for i in 0..self.g.nrows() {
                if w.contains(&i) {
                    continue;
                }
                let gi = self.g.row(i);
                let gp = gi.dot(&p.transpose());
                if gp <= 1e-12 * gi.norm() * pnorm {
                    continue;
                }
                let slack = (self.hvec[i] - gi.dot(&x.transpose())).max(0.0);
                let t = slack / gp;
                if t < step {
                    step = t;
                    block = Some(i);
                }
            }
            if !step.is_finite() {
                return Err(CnetError::Unbounded);
            }
            x += &p * step;
            if let Some(i) = block {
                w.push(i);
            }
        }
        Err(CnetError::MaxIterations(max_iter))
    }
}
