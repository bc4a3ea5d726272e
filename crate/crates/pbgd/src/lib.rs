//! Penalty-based gradient descent (PBGD) toolkit for bilevel optimization.
//!
//! Bilevel problems minimize an upper-level objective `f(x, y)` over `x`
//! subject to `y` solving a lower-level minimization of `g(x, y)`, possibly
//! under coupled inequality constraints `c(x, y) <= 0`. This crate implements
//! the decoupled penalty reformulation
//!
//! ```text
//! F_gamma(x) = min_y { f(x,y) + gamma * (g(x,y) - v(x)) },   v(x) = min_y g(x,y)
//! ```
//!
//! together with four first-order drivers built on top of it:
//!
//! - [`algorithms::jnt_pbgd`] — joint projected step on `(x, y)`
//! - [`algorithms::alt_pbgd`] — alternating scheme with two inner solves
//! - [`algorithms::pbgd_free`] — value-function-free updates (naive or fully
//!   single-loop), which skip the lower-level solve entirely
//! - [`algorithms::pbgd_blocc`] / [`algorithms::pbgd_free_cc`] — the coupled
//!   constraint variants driven by a Lagrangian saddle-point inner solver
//!
//! The [`diagnostics`] module evaluates `F_gamma`, value/solution gaps,
//! the value-function-free update bias, flatness constants, and a
//! finite-difference curvature probe; [`catalog`] ships analytic benchmark
//! problems and [`svm`] the soft-margin SVM hyperparameter problem. The
//! [`harness`] module backs the `pbgd` command-line binary.

pub mod algorithms;
pub mod catalog;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod inner;
pub mod problem;
pub mod set;
pub mod svm;
pub mod vecmath;

pub use error::{Error, Result};
pub use problem::{BilevelProblem, CoupledConstraint, ProblemConstants};
pub use set::FeasibleSet;
pub use vecmath::{DenseMatrix, RealVec};
