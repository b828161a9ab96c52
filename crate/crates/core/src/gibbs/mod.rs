//! The Gibbs sampler.
//!
//! A sweep runs, in order: choice probabilities, component allocation,
//! mixing probabilities, Pólya-gamma auxiliaries, shared similarities,
//! latent coordinates, shrinkage factors, edge-probability refresh and
//! sequential cluster reseating. [`Gibbs`] holds the data-dependent constants;
//! every update takes the state by mutable reference and an explicit RNG.

mod chain;
mod conditionals;
mod reseat;
mod steps;
mod trace;

use crate::data::{Dataset, EdgeLayout};
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ModelState};

pub(crate) use chain::relabel_dense;
pub use chain::{run_chain, ChainConfig, ChainOutcome, InitPolicy};
pub use conditionals::{
    choice_posterior_params, component_log_weights, coord_row_conditional, mixing_posterior_params,
    reseat_log_weights, shrinkage_conditional, similarity_conditional,
};
pub use reseat::{canonicalize, remove_agency};
pub use trace::{FnSink, JsonlSink, TraceRecord, TraceSink};

/// Sufficient statistics of the component allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    /// `n_h`, agencies per component.
    pub sizes: Vec<usize>,
    /// `L(A^h)_l`, edge counts summed over the agencies in component `h`.
    pub edge_sums: Vec<Vec<u32>>,
}

/// Switches that alter the sampler for validation tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Hooks {
    pub(crate) reseat_prior_only: bool,
    pub(crate) drop_half_count_in_similarity: bool,
}

#[cfg(any(test, feature = "test-hooks"))]
impl Hooks {
    /// Reseat from the CRP prior alone, ignoring choices and components.
    pub fn reseat_prior_only(mut self) -> Self {
        self.reseat_prior_only = true;
        self
    }

    /// Corrupt the similarity update by omitting the `-n_h/2` offset.
    pub fn drop_half_count_in_similarity(mut self) -> Self {
        self.drop_half_count_in_similarity = true;
        self
    }
}

/// Data-dependent constants shared by all updates.
#[derive(Debug, Clone)]
pub struct Gibbs<'a> {
    data: &'a Dataset,
    hp: &'a Hyperparameters,
    layout: EdgeLayout,
    edge_lists: Vec<Vec<usize>>,
    hooks: Hooks,
}

impl<'a> Gibbs<'a> {
    pub fn new(data: &'a Dataset, hp: &'a Hyperparameters) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidData("dataset has no agencies".into()));
        }
        hp.validate(data.v_count())?;
        Ok(Gibbs {
            data,
            hp,
            layout: EdgeLayout::new(data.v_count()),
            edge_lists: data
                .agencies()
                .iter()
                .map(|a| a.network.edges().collect())
                .collect(),
            hooks: Hooks::default(),
        })
    }

    #[cfg(any(test, feature = "test-hooks"))]
    pub fn with_hooks(mut self, hooks: Hooks) -> Self {
        self.hooks = hooks;
        self
    }

    pub(crate) fn set_hooks(&mut self, hooks: Hooks) {
        self.hooks = hooks;
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn hyper(&self) -> &'a Hyperparameters {
        self.hp
    }

    pub fn layout(&self) -> &EdgeLayout {
        &self.layout
    }

    pub fn component_stats(&self, state: &ModelState) -> ComponentStats {
        let mut sizes = vec![0usize; self.hp.h];
        let mut edge_sums = vec![vec![0u32; self.layout.len()]; self.hp.h];
        for (edges, &g) in self.edge_lists.iter().zip(&state.components) {
            sizes[g] += 1;
            for &l in edges {
                edge_sums[g][l] += 1;
            }
        }
        ComponentStats { sizes, edge_sums }
    }

    pub fn validate_state(&self, state: &ModelState) -> Result<()> {
        state.validate(self.data.len(), self.data.v_count(), self.hp.h, self.hp.r)
    }
}
