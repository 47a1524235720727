//! Level-`d` sum-of-squares upper bounds for polynomial programs.
//!
//! For `max g(z)` subject to `h_i(z) >= 0` and `e_j(z) = 0`, the relaxation
//! finds the least `t` with
//!
//! ```text
//! t - g = sigma_0 + sum_i sigma_i h_i + sum_j p_j e_j
//! ```
//!
//! where each `sigma` is a sum of squares given by a Gram matrix, `deg sigma_0
//! <= 2d`, `deg sigma_i h_i <= 2d`, and each `p_j` is an arbitrary polynomial
//! with `deg p_j e_j <= 2d`.
//!
//! Affine equalities are eliminated by substitution before assembly. Their
//! multipliers are recovered afterwards by division, so certificates are
//! stated in the original variables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CnetError, Result};
use crate::poly::{basis_size, Monomial, MonomialBasis, PolyProgram, Polynomial};
use crate::sdp::{Entry, SdpConstraint, SdpOptions, SdpProblem, SdpStatus};

/// Largest number of coefficient-matching constraints accepted.
pub const MAX_CONSTRAINTS: usize = 5000;

/// Solution of the affine equalities: `z_k = a_k(free variables)` for each
/// eliminated `k`.
#[derive(Debug, Clone)]
struct Elimination {
    /// Original index of each reduced variable.
    free: Vec<usize>,
    /// `(eliminated variable, affine expression over the original variables,
    /// combination of the original affine equalities it comes from)`.
    pivots: Vec<(usize, Polynomial, Vec<f64>)>,
    /// Each original variable as a polynomial over the reduced variables.
    subs: Vec<Polynomial>,
    linear: Vec<usize>,
    nonlinear: Vec<usize>,
}

fn eliminate(pp: &PolyProgram) -> Result<Elimination> {
    let n = pp.nvars();
    let linear: Vec<usize> = (0..pp.equalities.len()).filter(|&j| pp.equalities[j].degree() <= 1).collect();
    let nonlinear: Vec<usize> = (0..pp.equalities.len()).filter(|&j| pp.equalities[j].degree() > 1).collect();
    let k = linear.len();
    // rows: [coefficients | constant | combination of the original rows]
    let mut rows: Vec<Vec<f64>> = linear
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let e = &pp.equalities[j];
            let mut row = vec![0.0; n + 1 + k];
            for v in 0..n {
                let mut mono = vec![0; n];
                mono[v] = 1;
                row[v] = e.coefficient(&mono);
            }
            row[n] = e.coefficient(&vec![0; n]);
            row[n + 1 + i] = 1.0;
            row
        })
        .collect();
    let mut used = vec![false; rows.len()];
    let mut pivot_cols = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if used[i] {
                continue;
            }
            for (c, &v) in row[..n].iter().enumerate() {
                let mag = v.abs();
                // largest magnitude, ties to the highest column
                if mag > 1e-12 && best.is_none_or(|(_, bc, bv)| mag > bv || (mag == bv && c > bc)) {
                    best = Some((i, c, mag));
                }
            }
        }
        let Some((pi, pc, _)) = best else { break };
        let pv = rows[pi][pc];
        for v in rows[pi].iter_mut() {
            *v /= pv;
        }
        let prow = rows[pi].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != pi && row[pc] != 0.0 {
                let factor = row[pc];
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= factor * p;
                }
            }
        }
        used[pi] = true;
        pivot_cols.push((pi, pc));
    }
    for (i, row) in rows.iter().enumerate() {
        if !used[i] && row[n].abs() > 1e-9 {
            return Err(CnetError::Validation("affine equalities are inconsistent".into()));
        }
    }
    let eliminated: Vec<usize> = pivot_cols.iter().map(|&(_, c)| c).collect();
    let free: Vec<usize> = (0..n).filter(|v| !eliminated.contains(v)).collect();
    let nr = free.len();
    let mut subs = vec![Polynomial::zero(nr); n];
    for (i, &v) in free.iter().enumerate() {
        subs[v] = Polynomial::var(nr, i);
    }
    let mut pivots = Vec::new();
    for &(pi, pc) in &pivot_cols {
        let row = &rows[pi];
        // z_pc = -(const + sum_free coef z_free)
        let mut reduced = Polynomial::constant(nr, -row[n]);
        let mut original = Polynomial::constant(n, -row[n]);
        for (i, &v) in free.iter().enumerate() {
            reduced.add_term(unit(nr, i), -row[v]);
            original.add_term(unit(n, v), -row[v]);
        }
        subs[pc] = reduced;
        pivots.push((pc, original, row[n + 1..].to_vec()));
    }
    Ok(Elimination {
        free,
        pivots,
        subs,
        linear,
        nonlinear,
    })
}

fn unit(n: usize, i: usize) -> Monomial {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

/// Writes `r = sum_k p_k (z_k - a_k) + rest` where `rest` no longer contains
/// the eliminated variables.
fn divide(r: &Polynomial, pivots: &[(usize, Polynomial, Vec<f64>)]) -> (Vec<Polynomial>, Polynomial) {
    let n = r.nvars();
    let mut rest = r.clone();
    let mut quotients = Vec::new();
    for (k, a, _) in pivots {
        let mut quotient = Polynomial::zero(n);
        let mut next = Polynomial::zero(n);
        for (mono, c) in rest.terms() {
            let e = mono[*k];
            if e == 0 {
                next.add_term(mono.clone(), c);
                continue;
            }
            let mut base = mono.clone();
            base[*k] = 0;
            let m = Polynomial::from_terms(n, [(base, c)]).expect("valid term");
            // z^e - a^e = (z - a) sum_i z^(e-1-i) a^i
            let z = Polynomial::var(n, *k);
            let mut acc = Polynomial::zero(n);
            let mut a_pow = Polynomial::constant(n, 1.0);
            for i in 0..e {
                let mut z_pow = Polynomial::constant(n, 1.0);
                for _ in 0..(e - 1 - i) {
                    z_pow = z_pow.mul(&z);
                }
                acc = acc.add(&z_pow.mul(&a_pow));
                a_pow = a_pow.mul(a);
            }
            quotient = quotient.add(&m.mul(&acc));
            next = next.add(&m.mul(&a_pow));
        }
        quotients.push(quotient);
        rest = next;
    }
    (quotients, rest)
}

/// An assembled relaxation and the data needed to read a certificate back.
#[derive(Debug, Clone)]
pub struct SosRelaxation {
    pub level: u32,
    pub sdp: SdpProblem,
    /// Number of variables left after eliminating affine equalities.
    pub reduced_vars: usize,
    /// Monomials of degree `<= 2d` in the reduced variables, one
    /// coefficient constraint each.
    pub coefficient_basis: MonomialBasis,
    /// Gram bases: `sigma_0` first, then one per inequality.
    pub gram_bases: Vec<MonomialBasis>,
    /// Multiplier bases, one per equality of degree two or more.
    pub multiplier_bases: Vec<MonomialBasis>,
    multiplier_offsets: Vec<usize>,
    objective_scale: f64,
    inequality_scales: Vec<f64>,
    equality_scales: Vec<f64>,
    elimination: Elimination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramBlock {
    /// Monomials indexing the rows, over the program's variables.
    pub basis: Vec<Monomial>,
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCertificate {
    pub level: u32,
    /// Upper bound on the program's optimal value.
    pub v_d: f64,
    /// Gram matrices of `sigma_0, sigma_1, ...` in the units of the program.
    pub grams: Vec<GramBlock>,
    /// One multiplier polynomial per equality.
    pub multipliers: Vec<Polynomial>,
    /// Largest coefficient of `t - g - sigma_0 - sum sigma_i h_i - sum p_j e_j`.
    pub residual: f64,
    pub iterations: usize,
    pub relative_gap: f64,
    pub dual_objective: f64,
}

fn ceil_half(d: u32) -> u32 {
    d.div_ceil(2)
}

fn normalizer(p: &Polynomial) -> f64 {
    let m = p.max_abs_coefficient();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn add_mono(a: &[u32], b: &[u32]) -> Monomial {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Assembles the level-`d` relaxation.
pub fn sos_relaxation(pp: &PolyProgram, d: u32) -> Result<SosRelaxation> {
    pp.validate()?;
    if d == 0 || 2 * d < pp.max_degree() {
        return Err(CnetError::DegreeTooLow(format!(
            "level {d} cannot hold degree {}",
            pp.max_degree()
        )));
    }
    let elim = eliminate(pp)?;
    let n = elim.free.len();
    let m = basis_size(n, 2 * d);
    if m > MAX_CONSTRAINTS {
        return Err(CnetError::Validation(format!(
            "level {d} over {n} variables needs {m} coefficient constraints (limit {MAX_CONSTRAINTS})"
        )));
    }
    let coefficient_basis = MonomialBasis::new(n, 2 * d);
    let index = coefficient_basis.index();
    let mut constraints = vec![SdpConstraint::default(); m];

    let objective = pp.objective.compose(&elim.subs);
    let objective_scale = normalizer(&objective);
    for (e, c) in objective.terms() {
        constraints[index[e]].rhs = c / objective_scale;
    }
    // t appears in the constant coefficient
    constraints[0].free.push((0, 1.0));

    let mut gram_bases = Vec::new();
    let mut block_sizes = Vec::new();
    let mut inequality_scales = Vec::new();
    let mut factors = vec![(Polynomial::constant(n, 1.0), d)];
    for h in &pp.inequalities {
        let reduced = h.compose(&elim.subs);
        let scale = normalizer(&reduced);
        inequality_scales.push(scale);
        let deg = d.saturating_sub(ceil_half(h.degree()));
        factors.push((reduced.scale(1.0 / scale), deg));
    }
    for (block, (h, deg)) in factors.iter().enumerate() {
        let basis = MonomialBasis::new(n, *deg);
        let k = if h.is_zero() { 0 } else { basis.len() };
        for i in 0..k {
            for j in i..k {
                let base = add_mono(&basis.monomials[i], &basis.monomials[j]);
                for (e, c) in h.terms() {
                    constraints[index[&add_mono(&base, e)]].entries.push(Entry {
                        block,
                        row: i,
                        col: j,
                        value: -c,
                    });
                }
            }
        }
        block_sizes.push(k);
        gram_bases.push(basis);
    }

    let mut multiplier_bases = Vec::new();
    let mut multiplier_offsets = Vec::new();
    let mut equality_scales = Vec::new();
    let mut num_free = 1;
    for &j in &elim.nonlinear {
        let e = pp.equalities[j].compose(&elim.subs);
        let scale = normalizer(&e);
        equality_scales.push(scale);
        let basis = MonomialBasis::new(n, 2 * d - pp.equalities[j].degree());
        multiplier_offsets.push(num_free);
        for (k, mono) in basis.monomials.iter().enumerate() {
            for (t, c) in e.terms() {
                constraints[index[&add_mono(mono, t)]].free.push((num_free + k, -c / scale));
            }
        }
        num_free += basis.len();
        multiplier_bases.push(basis);
    }
    let mut objective_free = vec![0.0; num_free];
    objective_free[0] = 1.0;

    Ok(SosRelaxation {
        level: d,
        sdp: SdpProblem {
            block_sizes,
            num_free,
            constraints,
            objective_entries: Vec::new(),
            objective_free,
        },
        reduced_vars: n,
        coefficient_basis,
        gram_bases,
        multiplier_bases,
        multiplier_offsets,
        objective_scale,
        inequality_scales,
        equality_scales,
        elimination: elim,
    })
}

/// `sum_{i,j} G_ij b_i b_j` over the basis `b`.
pub fn gram_polynomial(nvars: usize, basis: &[Monomial], gram: &[Vec<f64>]) -> Polynomial {
    let mut p = Polynomial::zero(nvars);
    for (i, bi) in basis.iter().enumerate() {
        for (j, bj) in basis.iter().enumerate() {
            p.add_term(add_mono(bi, bj), gram[i][j]);
        }
    }
    p
}

/// `t - g - sigma_0 - sum_i sigma_i h_i - sum_j p_j e_j` for a certificate.
pub fn certificate_remainder(pp: &PolyProgram, cert: &SosCertificate) -> Result<Polynomial> {
    let n = pp.nvars();
    if cert.grams.len() != pp.inequalities.len() + 1 || cert.multipliers.len() != pp.equalities.len() {
        return Err(CnetError::Validation("certificate does not match the program".into()));
    }
    let mut rest = Polynomial::constant(n, cert.v_d).sub(&pp.objective);
    let ones = std::iter::once(Polynomial::constant(n, 1.0));
    for (g, h) in cert.grams.iter().zip(ones.chain(pp.inequalities.iter().cloned())) {
        if g.matrix.len() != g.basis.len() || g.basis.iter().any(|b| b.len() != n) {
            return Err(CnetError::Validation("Gram block does not match its basis".into()));
        }
        rest = rest.sub(&gram_polynomial(n, &g.basis, &g.matrix).mul(&h));
    }
    for (p, e) in cert.multipliers.iter().zip(&pp.equalities) {
        rest = rest.sub(&p.mul(e));
    }
    Ok(rest)
}

/// Largest coefficient of [`certificate_remainder`] in absolute value.
pub fn certificate_residual(pp: &PolyProgram, cert: &SosCertificate) -> Result<f64> {
    Ok(certificate_remainder(pp, cert)?.max_abs_coefficient())
}

fn to_rows(m: &DMatrix<f64>, scale: f64) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * scale).collect())
        .collect()
}

/// Solves the relaxation and reads the certificate back in program units.
pub fn sdp_solve(pp: &PolyProgram, relax: &SosRelaxation, opts: &SdpOptions) -> Result<SosCertificate> {
    let sol = relax.sdp.solve(opts)?;
    let n = pp.nvars();
    let elim = &relax.elimination;
    let sg = relax.objective_scale;
    let v_d = sol.u[0] * sg;
    let lift_mono = |m: &Monomial| -> Monomial {
        let mut out = vec![0; n];
        for (i, &k) in m.iter().enumerate() {
            out[elim.free[i]] = k;
        }
        out
    };
    let mut grams = Vec::new();
    for (k, x) in sol.x.iter().enumerate() {
        let scale = if k == 0 { sg } else { sg / relax.inequality_scales[k - 1] };
        let basis: Vec<Monomial> = if x.nrows() == 0 {
            Vec::new()
        } else {
            relax.gram_bases[k].monomials.iter().map(&lift_mono).collect()
        };
        let min_eigenvalue = if x.nrows() == 0 {
            0.0
        } else {
            x.clone().symmetric_eigenvalues().min() * scale
        };
        grams.push(GramBlock {
            basis,
            matrix: to_rows(x, scale),
            min_eigenvalue,
        });
    }
    let mut multipliers = vec![Polynomial::zero(n); pp.equalities.len()];
    for (idx, &j) in elim.nonlinear.iter().enumerate() {
        let scale = sg / relax.equality_scales[idx];
        let off = relax.multiplier_offsets[idx];
        let mut p = Polynomial::zero(n);
        for (k, mono) in relax.multiplier_bases[idx].monomials.iter().enumerate() {
            p.add_term(lift_mono(mono), sol.u[off + k] * scale);
        }
        multipliers[j] = p;
    }
    let mut cert = SosCertificate {
        level: relax.level,
        v_d,
        grams,
        multipliers,
        residual: 0.0,
        iterations: sol.iterations,
        relative_gap: sol.relative_gap,
        dual_objective: sol.dual_objective * sg,
    };
    // Multipliers of the affine equalities by division of the remainder.
    let remainder = certificate_remainder(pp, &cert)?;
    let (quotients, _) = divide(&remainder, &elim.pivots);
    for ((_, _, combo), quot) in elim.pivots.iter().zip(&quotients) {
        for (i, &j) in elim.linear.iter().enumerate() {
            if combo[i] != 0.0 {
                cert.multipliers[j] = cert.multipliers[j].add(&quot.scale(combo[i]));
            }
        }
    }
    cert.residual = certificate_residual(pp, &cert)?;
    if sol.status != SdpStatus::Optimal {
        return Err(CnetError::NotConverged {
            iterations: sol.iterations,
            bound: v_d,
            gap: sol.relative_gap,
        });
    }
    Ok(cert)
}

/// Relaxation and solve in one call.
pub fn sos_bound(pp: &PolyProgram, d: u32, opts: &SdpOptions) -> Result<SosCertificate> {
    let relax = sos_relaxation(pp, d)?;
    sdp_solve(pp, &relax, opts)
}
