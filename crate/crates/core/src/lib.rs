//! Weighted composition semigroups `T(t) f = h_t * (f o phi(t, .))` on
//! weighted `L^p` spaces of an interval, generated by a scalar autonomous
//! ODE `x' = F(x)` and a complex potential `h`.

// `!(a < b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};

pub mod chaos;
pub mod error;
pub mod expr;
pub mod lpspace;
pub mod ode;
pub mod par;
pub mod problem;
pub mod quad;
pub mod semiflow;
pub mod sobolev;
pub mod suite;
pub mod semigroup;
pub mod weights;

pub use error::{Error, Result};
pub use expr::Expr;
pub use par::Exec;
pub use problem::{ProblemDef, ProblemSpec};
pub use semiflow::{Component, ComponentDecomposition, FlowOptions, FlowState, Semiflow};

/// Outcome of a numerical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Pass,
    Fail,
    Inconclusive,
}

impl Check {
    /// Combine two checks: any failure fails, otherwise any inconclusive
    /// result is inconclusive.
    pub fn and(self, other: Check) -> Check {
        match (self, other) {
            (Check::Fail, _) | (_, Check::Fail) => Check::Fail,
            (Check::Inconclusive, _) | (_, Check::Inconclusive) => Check::Inconclusive,
            _ => Check::Pass,
        }
    }

    pub fn passed(self) -> bool {
        self == Check::Pass
    }
}
