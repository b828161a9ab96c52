use rand::Rng;

use super::conditionals::reseat_log_weights;
use super::Gibbs;
use crate::error::Result;
use crate::model::ModelState;
use crate::rng::{sample_categorical_log, sample_dirichlet};

/// Marker for an agency that currently belongs to no cluster.
pub(crate) const UNSEATED: usize = usize::MAX;

/// Takes agency `i` out of its cluster. An emptied cluster is deleted along
/// with its `p` and `nu` rows and higher labels shift down by one. Returns the
/// deleted label, if any.
pub fn remove_agency(state: &mut ModelState, sizes: &mut Vec<usize>, i: usize) -> Option<usize> {
    let k = state.clusters[i];
    state.clusters[i] = UNSEATED;
    sizes[k] -= 1;
    if sizes[k] > 0 {
        return None;
    }
    sizes.remove(k);
    state.choice_probs.remove(k);
    state.mixing.remove(k);
    for c in state
        .clusters
        .iter_mut()
        .filter(|c| **c != UNSEATED && **c > k)
    {
        *c -= 1;
    }
    Some(k)
}

/// Relabels clusters by first appearance in agency order, permuting the
/// cluster-specific rows to match.
pub fn canonicalize(state: &mut ModelState) {
    let k = state.cluster_count();
    let mut map = vec![UNSEATED; k];
    let mut next = 0;
    for c in state.clusters.iter_mut() {
        if map[*c] == UNSEATED {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    if map.iter().enumerate().all(|(a, &b)| a == b) {
        return;
    }
    let mut p = vec![Vec::new(); k];
    let mut nu = vec![Vec::new(); k];
    for (old, &new) in map.iter().enumerate() {
        p[new] = std::mem::take(&mut state.choice_probs[old]);
        nu[new] = std::mem::take(&mut state.mixing[old]);
    }
    state.choice_probs = p;
    state.mixing = nu;
}

impl Gibbs<'_> {
    /// Sequentially reseats every agency given `p`, `nu` and `G`. A new
    /// cluster receives `p` and `nu` drawn from their full conditionals given
    /// the single agency it holds.
    pub fn reseat_clusters<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        rng: &mut R,
    ) -> Result<()> {
        let mut sizes = state.cluster_sizes();
        for i in 0..state.clusters.len() {
            remove_agency(state, &mut sizes, i);
            let weights = reseat_log_weights(self, state, &sizes, i);
            let choice = sample_categorical_log(&weights, rng)?;
            if choice == sizes.len() {
                let counts = &self.data.agency(i).counts;
                let alpha: Vec<f64> = self
                    .hp
                    .alpha
                    .iter()
                    .zip(counts)
                    .map(|(a, &n)| a + n as f64)
                    .collect();
                let mut nu_params = vec![1.0 / self.hp.h as f64; self.hp.h];
                nu_params[state.components[i]] += 1.0;
                state.choice_probs.push(sample_dirichlet(&alpha, rng)?);
                state.mixing.push(sample_dirichlet(&nu_params, rng)?);
                sizes.push(0);
            }
            sizes[choice] += 1;
            state.clusters[i] = choice;
        }
        Ok(())
    }
}
