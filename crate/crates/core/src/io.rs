//! Text formats: JSON ingestion of problem data and deterministic JSON
//! emission.

use std::io;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::closed_form::HomogeneousInstance;
use crate::error::{CnetError, Result};
use crate::model::{theta_preset, Allocation, DesignParams, GameInstance, ThetaPreset};
use crate::poly::PolyProgram;
use crate::two_node::TwoNodeParams;

fn from_json<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| CnetError::Parse {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })
}

/// Reads and validates a game description.
pub fn parse_game(s: &str) -> Result<GameInstance> {
    let game: GameInstance = from_json(s)?;
    game.validate()?;
    Ok(game)
}

/// Reads an allocation. Dimensions are checked against a game separately.
pub fn parse_allocation(s: &str) -> Result<Allocation> {
    let alloc: Allocation = from_json(s)?;
    if alloc.q.iter().chain(&alloc.r).any(|v| !v.is_finite()) {
        return Err(CnetError::Validation("allocation entries must be finite".into()));
    }
    Ok(alloc)
}

pub fn parse_two_node_params(s: &str) -> Result<TwoNodeParams> {
    let params: TwoNodeParams = from_json(s)?;
    params.validate()?;
    Ok(params)
}

pub fn parse_homogeneous_instance(s: &str) -> Result<HomogeneousInstance> {
    let inst: HomogeneousInstance = from_json(s)?;
    inst.validate()?;
    Ok(inst)
}

pub fn parse_poly_program(s: &str) -> Result<PolyProgram> {
    let pp: PolyProgram = from_json(s)?;
    pp.validate()?;
    Ok(pp)
}

fn parse_component(s: &str) -> Result<f64> {
    let bad = || CnetError::Validation(format!("'{s}' is not a number or fraction"));
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            num / den
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Reads a preset name (`sw`, `cs`, `rsw`, `ms`) or a triple `c,p,m` whose
/// components are decimals or fractions such as `1/3`.
pub fn parse_theta(s: &str) -> Result<DesignParams> {
    if !s.contains(',') {
        return Ok(theta_preset(s.parse::<ThetaPreset>()?));
    }
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CnetError::Validation(format!(
            "theta needs three components, got {}",
            parts.len()
        )));
    }
    DesignParams::new(
        parse_component(parts[0])?,
        parse_component(parts[1])?,
        parse_component(parts[2])?,
    )
}

/// Floats in scientific notation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

struct FixedPrecision;

impl Formatter for FixedPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes with object keys sorted and every float printed with 17
/// significant digits, so equal values give identical bytes. Non-finite
/// floats become `null`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value).map_err(|e| CnetError::Validation(e.to_string()))?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedPrecision);
    tree.serialize(&mut ser)
        .map_err(|e| CnetError::Validation(e.to_string()))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}
