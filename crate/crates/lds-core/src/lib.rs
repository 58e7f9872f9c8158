//! # lds-core
//!
//! A statistical-inference engine built around large-deviation rate functions
//! for states represented by finite central measures.
//!
//! The crate is organized in two layers. The measure layer ([`measures`])
//! provides finite probability measures on labeled alphabets, diagonal-state
//! representations, and the relative entropies that act as rate functions
//! everywhere else. The inference layer builds on it:
//!
//! - [`cramer`] — cumulant generating functions, Legendre-transform rate
//!   functions, and exact/Monte-Carlo verification of the large-deviation
//!   sandwich for sample means.
//! - [`sanov`] — empirical measures of i.i.d. draws, relative-entropy
//!   I-projections onto constraint sets, and method-of-types bounds.
//! - [`escort`] — tempered (escort) Bayesian posteriors, predictive
//!   distributions and states, partition functions, and brute-force risk
//!   minimality checks.
//! - [`selection`] — Bayes losses, functional variance, WAIC/AIC, learning
//!   coefficients from standard-form exponents, and stochastic-complexity
//!   asymptotics.
//! - [`stein`] — exact randomized Neyman-Pearson tests between diagonal
//!   product states and their error exponents.
//!
//! All values are immutable after construction and every operation is a pure
//! function of its inputs; seeded Monte-Carlo routines derive per-chunk seeds
//! so results do not depend on worker count.

pub mod cramer;
pub mod error;
pub mod escort;
pub mod measures;
pub mod sanov;
pub mod seeding;
pub mod selection;
pub mod stein;

pub use error::{LdsError, Result};
