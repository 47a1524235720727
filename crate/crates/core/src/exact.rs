//! Exact rational evaluation of sign conditions.
//!
//! Every finite `f64` is a dyadic rational, so boundary tests such as
//! `2 theta_M - theta_C = 0` are decided exactly on the given inputs. Values
//! that are nonzero but within `BAND` of zero are reported as ambiguous since
//! they usually come from decimal inputs that were meant to lie on a boundary.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{CnetError, Result};
use crate::model::DesignParams;

/// Width of the ambiguity band around a boundary.
pub const BAND: f64 = 1e-12;

pub fn rat(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

pub fn rat_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Outcome of an exact sign test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

/// Exact sign, plus whether the value is a nonzero within the band.
pub fn sign(v: &BigRational) -> (Sign, bool) {
    if v.is_zero() {
        return (Sign::Zero, false);
    }
    let near = v.abs() <= rat(BAND);
    if v.is_positive() {
        (Sign::Positive, near)
    } else {
        (Sign::Negative, near)
    }
}

/// Sign that refuses to decide inside the band.
pub fn strict_sign(v: &BigRational, name: &str) -> Result<Sign> {
    match sign(v) {
        (_, true) => Err(CnetError::BoundaryAmbiguous(name.to_string())),
        (s, false) => Ok(s),
    }
}

/// Surplus weights held as exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTheta {
    pub c: BigRational,
    pub p: BigRational,
    pub m: BigRational,
}

impl ExactTheta {
    pub fn from_params(theta: &DesignParams) -> Self {
        ExactTheta {
            c: rat(theta.theta_c),
            p: rat(theta.theta_p),
            m: rat(theta.theta_m),
        }
    }

    /// `(i, j, k) / n` on the barycentric grid.
    pub fn grid(i: i64, j: i64, k: i64, n: i64) -> Self {
        let d = rat_int(n);
        ExactTheta {
            c: rat_int(i) / &d,
            p: rat_int(j) / &d,
            m: rat_int(k) / &d,
        }
    }

    pub fn to_params(&self) -> DesignParams {
        DesignParams {
            theta_c: to_f64(&self.c),
            theta_p: to_f64(&self.p),
            theta_m: to_f64(&self.m),
        }
    }

    pub fn s(&self) -> BigRational {
        &self.m + &self.p - &self.c
    }

    pub fn w(&self) -> BigRational {
        &self.m + &self.m - &self.c
    }

    pub fn t3(&self) -> BigRational {
        &self.m * rat_int(3) - &self.c - &self.p
    }
}
