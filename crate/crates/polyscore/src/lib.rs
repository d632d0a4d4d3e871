//! Tools for evaluating classifiers against *distributions* of annotations
//! rather than single gold labels.
//!
//! When several annotators label the same example, the counts they produce
//! carry more information than their majority vote. This crate models a
//! dataset of per-example annotation count vectors with a Dirichlet prior
//! fitted by maximum likelihood ([`dirichlet::fit_prior`]), and builds on
//! that model to answer questions that single-label evaluation cannot:
//!
//! - What is the best score a classifier could possibly achieve on this
//!   dataset, given that the annotations themselves disagree?
//!   ([`best::best_score`])
//! - How should a probabilistic classifier be trained against count vectors?
//!   ([`losses`] — soft, count-weighted, and Dirichlet-multinomial losses
//!   with analytic gradients)
//! - Are its probabilities calibrated? ([`losses::fit_temperature`])
//! - Which item features are associated with disagreement-laden class
//!   splits? ([`assoc`] — permutation tests with family-wise error control)
//! - How much annotator disagreement does a low-dimensional latent trait
//!   model explain? ([`latent`])
//!
//! Synthetic end-to-end checks of the estimator live in [`sim`].
//!
//! # Interface
//!
//! The crate is a library first: every capability has a runnable example
//! under `examples/` (start with `cargo run --example fit_prior`). A thin
//! `polyscore` binary wraps the same entry points for shell pipelines; see
//! the crate README for the subcommand reference.
//!
//! # Determinism
//!
//! Every stochastic routine takes either an explicit RNG or an integer
//! seed, and identical inputs produce bit-identical outputs — including
//! across permutations of example order, which the estimators achieve by
//! deriving per-example streams from hashed example ids rather than from
//! positions.

pub mod assoc;
pub mod best;
pub mod dirichlet;
pub mod io;
pub mod latent;
pub mod losses;
pub mod metrics;
pub mod sim;
pub mod util;

mod error;
mod optim;
mod quad;

pub use error::{Error, Result};
