//! Bayesian clustering of agencies from their product choices and product
//! co-subscription networks.
//!
//! Agencies are partitioned by a Chinese restaurant process. Each cluster has
//! Dirichlet choice probabilities and mixes over a shared set of latent
//! eigenmodels for its networks. [`gibbs`] fits the model with a Pólya-gamma
//! augmented Gibbs sampler; [`summary`], [`strategy`] and [`diagnostics`]
//! turn its trace into cluster summaries, cross-sell offers and fit checks.
//! The book in `book/` walks through each step.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod strategy;
pub mod summary;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    pub mod sampler {}
    #[doc = include_str!("../../../book/src/summaries.md")]
    pub mod summaries {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    pub mod strategies {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    pub mod diagnostics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
