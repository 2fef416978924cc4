//! Numerical laboratory for `-div(A∇u) = μ/u^γ` with nonnegative measure data.
//!
//! The crate solves the regularized problems
//! `-div(A∇u_n) = ν_n/(1/n + u_n)^γ` on uniform box grids, runs the ladder
//! `n → ∞` under two approximation schemes, and checks the resulting fields
//! against barriers, monotonicity, norm bounds, traces and closed-form 1D
//! solutions. A capacity estimator classifies measure data as diffuse or
//! concentrated.

// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Small dense matrices are indexed by axis.
#![allow(clippy::needless_range_loop)]

pub mod capacity;
pub mod diagnostics;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod expr;
pub mod ladder;
pub mod measure;
pub mod oracle;
pub mod singular;

pub use capacity::{CondenserProblem, CondenserSet, Trend};
pub use diagnostics::{Exponents, NormReport};
pub use domain::{Domain, NodeMask, ScalarField};
pub use elliptic::{CoefficientField, LinearSystem};
pub use error::{Error, Result};
pub use expr::Expression;
pub use ladder::{LadderConfig, LadderResult, LimitStatus, Scheme};
pub use measure::{DiscreteMeasure, MeasureSpec};
pub use singular::{RegularizedProblem, SolveReport, SolverOptions};
