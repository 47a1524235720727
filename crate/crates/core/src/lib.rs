//! Networked Cournot competition with a market maker whose payoff weighs
//! consumer, producer and merchandising surplus.
//!
//! The crate computes and verifies Nash equilibria, classifies the surplus
//! weights by the available existence and uniqueness guarantees, evaluates
//! closed-form benchmarks, and searches for good weights with a
//! sum-of-squares upper bound on the attainable objective.

pub mod closed_form;
pub mod design;
pub mod equilibrium;
pub mod error;
pub mod exact;
pub mod io;
pub mod lp;
pub mod model;
pub mod poly;
pub mod polytope;
pub mod qp;
pub mod regions;
pub mod sdp;
pub mod sos;
pub mod two_node;

pub use error::{CnetError, Result};
