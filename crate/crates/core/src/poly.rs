//! Sparse multivariate polynomials with real coefficients and the graded
//! lexicographic monomial order used for SOS assembly.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CnetError, Result};

/// Largest total degree accepted when building polynomials from terms.
pub const MAX_DEGREE: u32 = 1 << 16;

/// Exponent vector.
pub type Monomial = Vec<u32>;

/// Graded lexicographic comparison: lower total degree first, then the
/// larger exponent of the earliest variable first.
pub fn grlex_cmp(a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

#[derive(Clone, PartialEq, Eq)]
struct Key(Monomial);

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        grlex_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Key, f64>,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for (m, c) in self.terms() {
            list.entry(&(c, m));
        }
        list.finish()
    }
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Polynomial::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    /// `sum_i coefs[i] * z_i + c0`.
    pub fn linear(coefs: &[f64], c0: f64) -> Self {
        let n = coefs.len();
        let mut p = Polynomial::constant(n, c0);
        for (i, &c) in coefs.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            p.add_term(e, c);
        }
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Result<Self> {
        let mut p = Polynomial::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(CnetError::Validation(format!(
                    "exponent vector of length {} in a polynomial over {nvars} variables",
                    e.len()
                )));
            }
            if !c.is_finite() {
                return Err(CnetError::Validation("non-finite coefficient".into()));
            }
            if e.iter().map(|&k| u64::from(k)).sum::<u64>() > u64::from(MAX_DEGREE) {
                return Err(CnetError::Validation(format!("monomial degree above {MAX_DEGREE}")));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, e: Monomial, c: f64) {
        debug_assert_eq!(e.len(), self.nvars);
        if c == 0.0 {
            return;
        }
        let key = Key(e);
        let v = self.terms.entry(key.clone()).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&key);
        }
    }

    /// Terms in graded lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(k, c)| (&k.0, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, e: &[u32]) -> f64 {
        self.terms.get(&Key(e.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|k| k.0.iter().sum()).max().unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms()
            .map(|(e, c)| {
                e.iter()
                    .zip(z)
                    .fold(c, |acc, (&k, &x)| if k == 0 { acc } else { acc * x.powi(k as i32) })
            })
            .sum()
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut p = Polynomial::zero(self.nvars);
        for (e, c) in self.terms() {
            p.add_term(e.clone(), a * c);
        }
        p
    }

    pub fn add(&self, other: &Polynomial) -> Self {
        let mut p = self.clone();
        for (e, c) in other.terms() {
            p.add_term(e.clone(), c);
        }
        p
    }

    pub fn sub(&self, other: &Polynomial) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        let mut p = Polynomial::zero(self.nvars);
        for (ea, ca) in self.terms() {
            for (eb, cb) in other.terms() {
                let e: Monomial = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                p.add_term(e, ca * cb);
            }
        }
        p
    }

    /// Maps variable `i` to variable `map[i]` of a polynomial over `nvars`
    /// variables.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Self {
        let mut p = Polynomial::zero(nvars);
        for (e, c) in self.terms() {
            let mut f = vec![0; nvars];
            for (i, &k) in e.iter().enumerate() {
                f[map[i]] += k;
            }
            p.add_term(f, c);
        }
        p
    }

    /// Substitutes each variable by a polynomial over a common variable set.
    pub fn compose(&self, subs: &[Polynomial]) -> Self {
        let nv = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut out = Polynomial::zero(nv);
        for (e, c) in self.terms() {
            let mut t = Polynomial::constant(nv, c);
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t = t.mul(&subs[i]);
                }
            }
            out = out.add(&t);
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    coef: f64,
    exponents: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    nvars: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyRepr {
            nvars: self.nvars,
            terms: self
                .terms()
                .map(|(e, c)| TermRepr {
                    coef: c,
                    exponents: e.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(d)?;
        Polynomial::from_terms(repr.nvars, repr.terms.into_iter().map(|t| (t.exponents, t.coef)))
            .map_err(serde::de::Error::custom)
    }
}

/// All monomials in `nvars` variables of total degree at most `degree`, in
/// graded lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialBasis {
    pub nvars: usize,
    pub degree: u32,
    pub monomials: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, degree: u32) -> Self {
        let mut monomials = Vec::new();
        for d in 0..=degree {
            let mut e = vec![0; nvars];
            push_degree(&mut monomials, &mut e, 0, d);
        }
        MonomialBasis {
            nvars,
            degree,
            monomials,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index(&self) -> HashMap<Monomial, usize> {
        self.monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect()
    }
}

/// Appends monomials of exact degree `d` with the earliest variables
/// carrying the largest exponents first.
fn push_degree(out: &mut Vec<Monomial>, e: &mut Vec<u32>, i: usize, d: u32) {
    if e.is_empty() {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if i == e.len() - 1 {
        e[i] = d;
        out.push(e.clone());
        e[i] = 0;
        return;
    }
    for k in (0..=d).rev() {
        e[i] = k;
        push_degree(out, e, i + 1, d - k);
    }
    e[i] = 0;
}

/// `C(n + d, d)`.
pub fn basis_size(nvars: usize, degree: u32) -> usize {
    let mut v: u128 = 1;
    for i in 1..=degree as u128 {
        v = v * (nvars as u128 + i) / i;
    }
    v as usize
}

/// `maximize objective(z)` subject to `inequalities >= 0` and
/// `equalities = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyProgram {
    pub var_names: Vec<String>,
    pub objective: Polynomial,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
    /// Radius of the ball `radius^2 - |z|^2 >= 0`, when one is among the
    /// inequalities.
    pub radius: Option<f64>,
}

impl PolyProgram {
    pub fn nvars(&self) -> usize {
        self.var_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nvars();
        let all = std::iter::once(&self.objective)
            .chain(&self.inequalities)
            .chain(&self.equalities);
        for p in all {
            if p.nvars() != n {
                return Err(CnetError::Validation(format!(
                    "polynomial over {} variables in a program over {n}",
                    p.nvars()
                )));
            }
        }
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(CnetError::Validation("radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn max_degree(&self) -> u32 {
        std::iter::once(&self.objective)
            .chain(&self.inequalities)
            .chain(&self.equalities)
            .map(|p| p.degree())
            .max()
            .unwrap_or(0)
    }

    /// Largest violation of the constraints at `z`.
    pub fn violation(&self, z: &[f64]) -> f64 {
        let ineq = self.inequalities.iter().map(|h| (-h.eval(z)).max(0.0));
        let eq = self.equalities.iter().map(|e| e.eval(z).abs());
        ineq.chain(eq).fold(0.0, f64::max)
    }
}
