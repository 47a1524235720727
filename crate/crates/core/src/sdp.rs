//! Dense primal-dual interior-point method for block-diagonal semidefinite
//! programs with free variables:
//!
//! ```text
//! minimize   <C, X> + c'u
//! subject to <A_i, X> + (B u)_i = b_i,   X = diag(X_1, ..., X_k) >= 0
//! ```
//!
//! with dual `maximize b'y` subject to `C - sum_i y_i A_i = S >= 0`,
//! `B'y = c`. Directions use Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector; iterates may start infeasible.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};

/// Nonzero `(block, row, col, value)` of a symmetric matrix, stored once per
/// unordered position: an off-diagonal entry also sits at `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SdpConstraint {
    pub entries: Vec<Entry>,
    /// `(free variable, coefficient)` pairs.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub num_free: usize,
    pub constraints: Vec<SdpConstraint>,
    pub objective_entries: Vec<Entry>,
    pub objective_free: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tolerance: 1e-8,
            max_iterations: 150,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub complementarity: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub log: Vec<IterationLog>,
}

type Blocks = Vec<DMatrix<f64>>;

fn sym_dense(sizes: &[usize], entries: &[Entry]) -> Blocks {
    let mut out: Blocks = sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for e in entries {
        out[e.block][(e.row, e.col)] += e.value;
        if e.row != e.col {
            out[e.block][(e.col, e.row)] += e.value;
        }
    }
    out
}

fn inner(entries: &[Entry], x: &Blocks) -> f64 {
    entries
        .iter()
        .map(|e| {
            let v = e.value * x[e.block][(e.row, e.col)];
            if e.row == e.col {
                v
            } else {
                2.0 * v
            }
        })
        .sum()
}

fn dot_blocks(a: &Blocks, b: &Blocks) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm_blocks(a: &Blocks) -> f64 {
    dot_blocks(a, a).sqrt()
}

fn min_eig(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    a.clone().symmetric_eigenvalues().min()
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest step `t <= 1 / fraction` keeping `X + t dX` positive definite,
/// given the Cholesky factor `L` of `X`.
fn max_step(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> Result<f64> {
    if l.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| CnetError::NumericalFailure("singular Cholesky factor".into()))?;
    let m = symmetrize(&(&linv * dx * linv.transpose()));
    let lmin = m.symmetric_eigenvalues().min();
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn chol(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(symmetrize(a))
        .map(|c| c.l())
        .ok_or_else(|| CnetError::NumericalFailure(format!("{what} lost positive definiteness")))
}

/// Columns of `b` kept by a greedy orthogonalization, in order.
fn independent_columns(b: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for k in 0..b.ncols() {
        let col = b.column(k).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        let r = v.norm();
        if r > 1e-9 * norm {
            basis.push(v / r);
            keep.push(k);
        }
    }
    keep
}

struct Scaling {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    w: DMatrix<f64>,
    sigma: DVector<f64>,
}

fn nt_scaling(lx: &DMatrix<f64>, ls: &DMatrix<f64>) -> Result<Scaling> {
    let n = lx.nrows();
    let svd = (ls.transpose() * lx).svd(true, true);
    let u = svd.u.ok_or_else(|| CnetError::NumericalFailure("svd".into()))?;
    let _ = u;
    let vt = svd.v_t.ok_or_else(|| CnetError::NumericalFailure("svd".into()))?;
    let sigma = svd.singular_values.clone();
    if sigma.min() <= 0.0 {
        return Err(CnetError::NumericalFailure("degenerate scaling".into()));
    }
    let mut dinv = DMatrix::zeros(n, n);
    let mut dpos = DMatrix::zeros(n, n);
    for i in 0..n {
        dinv[(i, i)] = 1.0 / sigma[i].sqrt();
        dpos[(i, i)] = sigma[i].sqrt();
    }
    let g = lx * vt.transpose() * &dinv;
    let lxinv = lx
        .clone()
        .try_inverse()
        .ok_or_else(|| CnetError::NumericalFailure("singular Cholesky factor".into()))?;
    let ginv = &dpos * &vt * lxinv;
    let w = &g * g.transpose();
    Ok(Scaling { g, ginv, w, sigma })
}

impl SdpProblem {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |e: &Entry| -> Result<()> {
            if e.block >= self.block_sizes.len()
                || e.row >= self.block_sizes[e.block]
                || e.col >= self.block_sizes[e.block]
                || !e.value.is_finite()
            {
                return Err(CnetError::Validation(format!("bad SDP entry {e:?}")));
            }
            Ok(())
        };
        for c in &self.constraints {
            c.entries.iter().try_for_each(check)?;
            if c.free.iter().any(|&(j, v)| j >= self.num_free || !v.is_finite()) || !c.rhs.is_finite() {
                return Err(CnetError::Validation("bad free-variable coefficient".into()));
            }
        }
        self.objective_entries.iter().try_for_each(check)?;
        if self.objective_free.len() != self.num_free {
            return Err(CnetError::Validation("objective_free has the wrong length".into()));
        }
        Ok(())
    }

    /// `A(X)`.
    pub fn apply(&self, x: &Blocks) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| inner(&c.entries, x)))
    }

    fn free_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.constraints.len(), self.num_free);
        for (i, c) in self.constraints.iter().enumerate() {
            for &(j, v) in &c.free {
                b[(i, j)] += v;
            }
        }
        b
    }

    /// `sum_i y_i A_i`.
    fn adjoint(&self, y: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self.block_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (i, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                out[e.block][(e.row, e.col)] += y[i] * e.value;
                if e.row != e.col {
                    out[e.block][(e.col, e.row)] += y[i] * e.value;
                }
            }
        }
        out
    }

    /// Writes the problem as text: a header line, then one line per nonzero
    /// `k block row col value` with `k = 0` for the objective, then the free
    /// variable coefficients and right-hand sides.
    pub fn to_triplets(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let sizes: Vec<String> = self.block_sizes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(
            out,
            "# constraints={} blocks={} free={}",
            self.constraints.len(),
            sizes.join(","),
            self.num_free
        );
        for e in &self.objective_entries {
            let _ = writeln!(out, "0 {} {} {} {:.17e}", e.block + 1, e.row + 1, e.col + 1, e.value);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                let _ = writeln!(out, "{} {} {} {} {:.17e}", i + 1, e.block + 1, e.row + 1, e.col + 1, e.value);
            }
        }
        out.push_str("# free: k variable value\n");
        for (j, v) in self.objective_free.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "0 {} {:.17e}", j + 1, v);
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            for &(j, v) in &c.free {
                let _ = writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v);
            }
        }
        out.push_str("# rhs: k value\n");
        for (i, c) in self.constraints.iter().enumerate() {
            if c.rhs != 0.0 {
                let _ = writeln!(out, "{} {:.17e}", i + 1, c.rhs);
            }
        }
        out
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<SdpSolution> {
        self.validate()?;
        let valid = opts.tolerance > 0.0 && opts.step_fraction > 0.0 && opts.step_fraction < 1.0;
        if !valid {
            return Err(CnetError::Validation("invalid SDP options".into()));
        }
        let sizes = &self.block_sizes;
        let m = self.constraints.len();
        let ntot: usize = sizes.iter().sum();
        let b = DVector::from_iterator(m, self.constraints.iter().map(|c| c.rhs));
        let cmat = sym_dense(sizes, &self.objective_entries);
        let bfull = self.free_matrix();
        let keep = independent_columns(&bfull);
        let p = keep.len();
        let mut bmat = DMatrix::zeros(m, p);
        let mut cfree = DVector::zeros(p);
        for (k, &j) in keep.iter().enumerate() {
            bmat.set_column(k, &bfull.column(j));
            cfree[k] = self.objective_free[j];
        }
        let dense_a: Vec<Blocks> = self.constraints.iter().map(|c| sym_dense(sizes, &c.entries)).collect();

        let bnorm = 1.0 + b.norm();
        let cnorm = 1.0 + norm_blocks(&cmat) + cfree.norm();
        let xi = 10.0f64.max((ntot as f64).sqrt()).max(b.amax());
        let mut x: Blocks = sizes.iter().map(|&n| DMatrix::identity(n, n) * xi).collect();
        let mut s: Blocks = sizes.iter().map(|&n| DMatrix::identity(n, n) * xi).collect();
        let mut y = DVector::zeros(m);
        let mut u = DVector::zeros(p);
        let mut log = Vec::new();

        let mut status = SdpStatus::NotConverged;
        let mut iterations = 0;
        let (mut pinf, mut dinf, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let (mut pobj, mut dobj) = (0.0, 0.0);
        for iter in 0..=opts.max_iterations {
            iterations = iter;
            let ax = self.apply(&x);
            let rp = &b - &ax - &bmat * &u;
            let aty = self.adjoint(&y);
            let rd: Blocks = (0..sizes.len()).map(|k| &cmat[k] - &aty[k] - &s[k]).collect();
            let rc = &cfree - bmat.transpose() * &y;
            pobj = dot_blocks(&cmat, &x) + cfree.dot(&u);
            dobj = b.dot(&y);
            pinf = rp.norm() / bnorm;
            dinf = (norm_blocks(&rd) + rc.norm()) / cnorm;
            gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let xs = dot_blocks(&x, &s);
            log.push(IterationLog {
                complementarity: xs,
                primal_objective: pobj,
                dual_objective: dobj,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                min_eig_x: x.iter().map(min_eig).fold(f64::INFINITY, f64::min),
                min_eig_s: s.iter().map(min_eig).fold(f64::INFINITY, f64::min),
            });
            if pinf <= opts.tolerance && dinf <= opts.tolerance && gap <= opts.tolerance {
                status = SdpStatus::Optimal;
                break;
            }
            if iter == opts.max_iterations {
                break;
            }
            let mu = xs / ntot as f64;

            let lx: Blocks = x.iter().map(|a| chol(a, "X")).collect::<Result<_>>()?;
            let ls: Blocks = s.iter().map(|a| chol(a, "S")).collect::<Result<_>>()?;
            let sc: Vec<Scaling> = lx
                .iter()
                .zip(&ls)
                .map(|(a, b)| nt_scaling(a, b))
                .collect::<Result<_>>()?;

            // Schur complement M_ij = <A_i, W A_j W>.
            let mut mmat = DMatrix::zeros(m, m);
            for j in 0..m {
                let waw: Blocks = (0..sizes.len()).map(|k| &sc[k].w * &dense_a[j][k] * &sc[k].w).collect();
                for i in j..m {
                    let v = inner(&self.constraints[i].entries, &waw);
                    mmat[(i, j)] = v;
                    mmat[(j, i)] = v;
                }
            }
            let mut kkt = DMatrix::zeros(m + p, m + p);
            kkt.view_mut((0, 0), (m, m)).copy_from(&mmat);
            kkt.view_mut((0, m), (m, p)).copy_from(&bmat);
            kkt.view_mut((m, 0), (p, m)).copy_from(&bmat.transpose());
            let lu = kkt.lu();

            let direction = |rhs_c: &[DMatrix<f64>]| -> Result<(Blocks, Blocks, DVector<f64>, DVector<f64>)> {
                // K = G Y G' with Y_ij = R_ij / (sigma_i + sigma_j)
                let kmat: Blocks = (0..sizes.len())
                    .map(|k| {
                        let n = sizes[k];
                        let mut yk = DMatrix::zeros(n, n);
                        for i in 0..n {
                            for j in 0..n {
                                yk[(i, j)] = rhs_c[k][(i, j)] / (sc[k].sigma[i] + sc[k].sigma[j]);
                            }
                        }
                        &sc[k].g * yk * sc[k].g.transpose()
                    })
                    .collect();
                let t: Blocks = (0..sizes.len()).map(|k| &kmat[k] - &sc[k].w * &rd[k] * &sc[k].w).collect();
                let mut rhs = DVector::zeros(m + p);
                rhs.rows_mut(0, m).copy_from(&(&rp - self.apply(&t)));
                rhs.rows_mut(m, p).copy_from(&rc);
                let sol = lu
                    .solve(&rhs)
                    .ok_or_else(|| CnetError::NumericalFailure("singular Schur system".into()))?;
                let dy = sol.rows(0, m).into_owned();
                let du = sol.rows(m, p).into_owned();
                let ady = self.adjoint(&dy);
                let ds: Blocks = (0..sizes.len()).map(|k| &rd[k] - &ady[k]).collect();
                let dx: Blocks = (0..sizes.len())
                    .map(|k| symmetrize(&(&kmat[k] - &sc[k].w * &ds[k] * &sc[k].w)))
                    .collect();
                Ok((dx, ds, dy, du))
            };
            let steps = |dx: &Blocks, ds: &Blocks| -> Result<(f64, f64)> {
                let mut ap: f64 = 1.0;
                let mut ad: f64 = 1.0;
                for k in 0..sizes.len() {
                    ap = ap.min(opts.step_fraction * max_step(&lx[k], &dx[k])?);
                    ad = ad.min(opts.step_fraction * max_step(&ls[k], &ds[k])?);
                }
                Ok((ap, ad))
            };

            // Predictor.
            let r_aff: Blocks = sc
                .iter()
                .map(|c| DMatrix::from_diagonal(&c.sigma.map(|v| -2.0 * v * v)))
                .collect();
            let (dxa, dsa, _, _) = direction(&r_aff)?;
            let (apa, ada) = steps(&dxa, &dsa)?;
            let mut xs_aff = 0.0;
            for k in 0..sizes.len() {
                xs_aff += (&x[k] + &dxa[k] * apa).dot(&(&s[k] + &dsa[k] * ada));
            }
            let mu_aff = xs_aff / ntot as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector.
            let r_cor: Blocks = (0..sizes.len())
                .map(|k| {
                    let c = &sc[k];
                    let n = sizes[k];
                    let dxs = &c.ginv * &dxa[k] * c.ginv.transpose();
                    let dss = c.g.transpose() * &dsa[k] * &c.g;
                    let second = &dxs * &dss + &dss * &dxs;
                    let mut r = -second;
                    for i in 0..n {
                        r[(i, i)] += 2.0 * sigma * mu - 2.0 * c.sigma[i] * c.sigma[i];
                    }
                    r
                })
                .collect();
            let (dx, ds, dy, du) = direction(&r_cor)?;
            let (ap, ad) = steps(&dx, &ds)?;
            for k in 0..sizes.len() {
                x[k] = symmetrize(&(&x[k] + &dx[k] * ap));
                s[k] = symmetrize(&(&s[k] + &ds[k] * ad));
            }
            u += du * ap;
            y += dy * ad;
        }

        let mut ufull = vec![0.0; self.num_free];
        for (k, &j) in keep.iter().enumerate() {
            ufull[j] = u[k];
        }
        Ok(SdpSolution {
            status,
            x,
            s,
            u: ufull,
            y: y.iter().copied().collect(),
            primal_objective: pobj,
            dual_objective: dobj,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            relative_gap: gap,
            iterations,
            log,
        })
    }
}
