//! Numerical laboratory for the fully parabolic Keller-Segel system with
//! signal-dependent motilities
//!
//! ```text
//! u_t = div(gamma(v) grad u - u phi(v) grad v),   v_t = d lap v - v + u
//! ```
//!
//! on rectangles with zero-flux boundaries.
//!
//! - [`motility`]: motility pairs and the pointwise structural algebra.
//! - [`hypothesis`]: audits of the boundedness condition and exponent selection.
//! - [`field`]: Neumann grids and conservative operators.
//! - [`stepper`]: explicit time stepping with positivity and blow-up guards.
//! - [`monitors`]: tracked functionals and evolution residuals.
//! - [`cli`]: configuration files and the `audit` / `run` / `sweep` commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod hypothesis;
pub mod monitors;
pub mod motility;
pub mod stepper;

pub use error::{Error, Result};
pub use field::{Grid, ScalarField, State};
pub use hypothesis::{audit, choose_exponents, AuditReport, ExponentChoice};
pub use motility::{ModelParams, MotilityFamily, QInterval};
pub use stepper::{RunOutcome, RunStatus, StepControl};
