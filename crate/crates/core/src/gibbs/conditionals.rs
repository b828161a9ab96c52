//! Parameters of each full conditional, kept separate from the draws so they
//! can be checked against the joint density.

use nalgebra::{DMatrix, DVector};

use super::{ComponentStats, Gibbs};
use crate::data::EdgeVector;
use crate::error::Result;
use crate::model::{
    latent_offsets, log_lik_choices, log_lik_network, marginal_choices_new_cluster,
    marginal_component_new_cluster, shrinkage_precisions, EdgeProbComponent, Hyperparameters,
    ModelState,
};

/// Dirichlet parameters `alpha + sum_{i in k} n_i` for every cluster.
pub fn choice_posterior_params(gibbs: &Gibbs, state: &ModelState) -> Vec<Vec<f64>> {
    let mut params = vec![gibbs.hp.alpha.clone(); state.cluster_count()];
    for (a, &k) in gibbs.data.agencies().iter().zip(&state.clusters) {
        for (p, &n) in params[k].iter_mut().zip(&a.counts) {
            *p += n as f64;
        }
    }
    params
}

/// Unnormalized log-probabilities of each component for one network.
pub fn component_log_weights(
    nu_k: &[f64],
    network: &EdgeVector,
    probs: &[EdgeProbComponent],
) -> Result<Vec<f64>> {
    nu_k.iter()
        .zip(probs)
        .map(|(&w, pi)| Ok(w.ln() + log_lik_network(network, pi)?))
        .collect()
}

/// Dirichlet parameters `1/H + n_hk` for every cluster.
pub fn mixing_posterior_params(state: &ModelState, h: usize) -> Vec<Vec<f64>> {
    let mut params = vec![vec![1.0 / h as f64; h]; state.cluster_count()];
    for (&k, &g) in state.clusters.iter().zip(&state.components) {
        params[k][g] += 1.0;
    }
    params
}

/// Gaussian `(mean, variance)` of every shared similarity `Z_l`.
pub fn similarity_conditional(
    gibbs: &Gibbs,
    state: &ModelState,
    stats: &ComponentStats,
) -> Vec<(f64, f64)> {
    similarity_conditional_with(gibbs, state, stats, true)
}

pub(crate) fn similarity_conditional_with(
    gibbs: &Gibbs,
    state: &ModelState,
    stats: &ComponentStats,
    half_count: bool,
) -> Vec<(f64, f64)> {
    let hp = gibbs.hp;
    let len = gibbs.layout.len();
    let mut prec: Vec<f64> = hp.sigma2.iter().map(|s| 1.0 / s).collect();
    let mut lin: Vec<f64> = hp.mu.iter().zip(&prec).map(|(m, p)| m * p).collect();
    for h in (0..hp.h).filter(|&h| stats.sizes[h] > 0) {
        let half = if half_count {
            0.5 * stats.sizes[h] as f64
        } else {
            0.0
        };
        let offsets = latent_offsets(&state.coords[h], &gibbs.layout);
        let omega = &state.pg_aux[h];
        for l in 0..len {
            prec[l] += omega[l];
            lin[l] += stats.edge_sums[h][l] as f64 - half - omega[l] * offsets[l];
        }
    }
    prec.iter()
        .zip(&lin)
        .map(|(&p, &b)| (b / p, 1.0 / p))
        .collect()
}

/// Canonical parameters `(precision, eta)` of row `v` of component `h`'s
/// coordinates given every other row.
pub fn coord_row_conditional(
    gibbs: &Gibbs,
    state: &ModelState,
    stats: &ComponentStats,
    h: usize,
    v: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let r = gibbs.hp.r;
    let coords = &state.coords[h];
    let omega = &state.pg_aux[h];
    let half = 0.5 * stats.sizes[h] as f64;
    let mut precision = DMatrix::from_diagonal(&DVector::from_vec(shrinkage_precisions(
        &state.shrinkage[h],
    )));
    let mut eta = DVector::zeros(r);
    for &(l, u) in gibbs.layout.incident(v) {
        let x = &coords[u];
        let w = omega[l];
        let resid = stats.edge_sums[h][l] as f64 - half - w * state.similarity[l];
        for a in 0..r {
            eta[a] += x[a] * resid;
            let wa = w * x[a];
            for b in 0..=a {
                precision[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..r {
        for b in 0..a {
            precision[(b, a)] = precision[(a, b)];
        }
    }
    (precision, eta)
}

/// Gamma `(shape, rate)` of `theta_r` for component coordinates `coords`,
/// with the other factors held at `theta`.
pub fn shrinkage_conditional(
    hp: &Hyperparameters,
    coords: &[Vec<f64>],
    theta: &[f64],
    r: usize,
) -> (f64, f64) {
    let dims = theta.len();
    let v_count = coords.len() as f64;
    let base = if r == 0 { hp.a1 } else { hp.a2 };
    let shape = base + 0.5 * v_count * (dims - r) as f64;
    let mut rate = 1.0;
    // theta_m^{(-r)} accumulates prod_{t <= m, t != r} theta_t.
    let mut partial: f64 = theta[..r].iter().product();
    for m in r..dims {
        if m > r {
            partial *= theta[m];
        }
        let ss: f64 = coords.iter().map(|row| row[m] * row[m]).sum();
        rate += 0.5 * partial * ss;
    }
    (shape, rate)
}

/// Unnormalized log-probabilities of each existing cluster followed by a new
/// one, for agency `i` after it has been removed from `state`. `sizes` are the
/// cluster sizes without `i`. The network likelihood is common to every
/// option and left out.
pub fn reseat_log_weights(
    gibbs: &Gibbs,
    state: &ModelState,
    sizes: &[usize],
    i: usize,
) -> Vec<f64> {
    let hp = gibbs.hp;
    let counts = &gibbs.data.agency(i).counts;
    let g = state.components[i];
    let prior_only = gibbs.hooks.reseat_prior_only;
    let mut w: Vec<f64> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut x = (n as f64).ln();
            if !prior_only {
                x += log_lik_choices(counts, &state.choice_probs[k]) + state.mixing[k][g].ln();
            }
            x
        })
        .collect();
    let mut fresh = hp.alpha_c.ln();
    if !prior_only {
        fresh +=
            marginal_choices_new_cluster(counts, &hp.alpha) + marginal_component_new_cluster(hp.h);
    }
    w.push(fresh);
    w
}
