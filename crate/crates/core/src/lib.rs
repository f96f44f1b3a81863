//! Fairness-constrained policy learning from observational data.
//!
//! The crate learns an action policy that maximizes an expected outcome
//! while holding outcome disparity across a binary sensitive attribute under
//! a slack, using one of two constraints:
//!
//! * **moderation breaking**: the squared group difference of the
//!   action-and-group moderated component `g` of a structured outcome model
//!   `f(s,x) + g(a,s,x) + h(a,x)`;
//! * **equal benefit**: matching, across groups, the tightest Gaussian
//!   lower/upper bounds on the CDF of the gain `Y_new - Y_baseline`.
//!
//! Constraints are enforced with an augmented Lagrangian. For fully
//! discrete problems the moderation-breaking program is also solved exactly
//! as a linear program.
//!
//! Modules map one-to-one onto the building blocks:
//! [`dataio`], [`nnet`], [`constraints`], [`lagrangian`], [`estimators`],
//! [`lpsolve`], [`pipeline`], and [`cli`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod constraints;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod lagrangian;
pub mod lpsolve;
pub mod nnet;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
