//! Batch and online Bayesian inference over computable model families.
//!
//! The crate verifies one statement from three angles: conditioning on a
//! batch of observations at once gives the same posterior (and posterior
//! predictive) as folding the observations in one at a time. It does so on
//!
//! - exact finite probability spaces ([`measure`], [`inversion`],
//!   [`supervised`]), where the equality is checked in rational arithmetic,
//! - Gaussian-process regression ([`gp`]), where the one-observation
//!   recursion is the Kalman update and is benchmarked against repeated
//!   batch refits,
//! - Dirichlet and dependent Dirichlet processes ([`dirichlet`], [`ddp`]),
//!   where conjugate updates commute with partition coarsening and Monte
//!   Carlo samplers are checked against analytic moments.
//!
//! Start with the runnable programs in `examples/`; the `seqbayes` binary
//! exposes the same operations as subcommands (`predict`, `invert`, `gp`,
//! `dp`, `ddp`, `bench`, `selftest`).

pub mod cli;
pub mod ddp;
pub mod dirichlet;
pub mod error;
pub mod gp;
pub mod inversion;
pub mod measure;
pub mod numeric;
pub mod report;
pub mod scalar;
pub mod selftest;
pub mod supervised;
pub mod tol;

pub use error::{Error, Result};
pub use scalar::{Rat, Scalar};
