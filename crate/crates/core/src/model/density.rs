use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{
    compute_component_probs, latent_offsets, log_lik_choices, log_lik_network, shrinkage_weights,
    Hyperparameters, ModelState,
};
use crate::data::{Dataset, EdgeLayout};
use crate::error::{Error, Result};

/// The joint log-density split into its prior and likelihood pieces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LogDensityTerms {
    pub partition: f64,
    pub choice_prior: f64,
    pub mixing_prior: f64,
    pub component_prior: f64,
    pub similarity_prior: f64,
    pub coords_prior: f64,
    pub shrinkage_prior: f64,
    pub choice_lik: f64,
    pub network_lik: f64,
}

impl LogDensityTerms {
    pub fn total(&self) -> f64 {
        self.partition
            + self.choice_prior
            + self.mixing_prior
            + self.component_prior
            + self.similarity_prior
            + self.coords_prior
            + self.shrinkage_prior
            + self.choice_lik
            + self.network_lik
    }
}

/// Log EPPF of the CRP: `log[alpha^K prod_k (n_k - 1)! / prod_{j<n} (alpha + j)]`.
pub fn crp_log_eppf(clusters: &[usize], alpha_c: f64) -> f64 {
    let k_max = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k_max];
    for &c in clusters {
        sizes[c] += 1;
    }
    let mut out = 0.0;
    for &s in sizes.iter().filter(|&&s| s > 0) {
        out += alpha_c.ln() + ln_gamma(s as f64);
    }
    for j in 0..clusters.len() {
        out -= (alpha_c + j as f64).ln();
    }
    out
}

pub(crate) fn log_dirichlet(x: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a0);
    for (&xv, &a) in x.iter().zip(alpha) {
        out += (a - 1.0) * xv.max(f64::MIN_POSITIVE).ln() - ln_gamma(a);
    }
    out
}

pub(crate) fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

pub(crate) fn log_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Every term of the joint log-density of `state` and the data.
pub fn log_density_terms(
    state: &ModelState,
    data: &Dataset,
    hp: &Hyperparameters,
) -> Result<LogDensityTerms> {
    let v_count = data.v_count();
    state.validate(data.len(), v_count, hp.h, hp.r)?;
    if hp.alpha.len() != v_count || hp.mu.len() != data.edge_count() {
        return Err(Error::Precondition(
            "hyperparameters do not match the dataset dimensions".into(),
        ));
    }
    let layout = EdgeLayout::new(v_count);
    let mut t = LogDensityTerms {
        partition: crp_log_eppf(&state.clusters, hp.alpha_c),
        ..Default::default()
    };

    t.choice_prior = state
        .choice_probs
        .iter()
        .map(|p| log_dirichlet(p, &hp.alpha))
        .sum();
    let nu_alpha = vec![1.0 / hp.h as f64; hp.h];
    t.mixing_prior = state
        .mixing
        .iter()
        .map(|nu| log_dirichlet(nu, &nu_alpha))
        .sum();

    t.similarity_prior = state
        .similarity
        .iter()
        .zip(hp.mu.iter().zip(&hp.sigma2))
        .map(|(&z, (&m, &s))| log_normal(z, m, s))
        .sum();

    for (coords, theta) in state.coords.iter().zip(&state.shrinkage) {
        let lambda = shrinkage_weights(theta);
        for row in coords {
            for (&x, &lam) in row.iter().zip(&lambda) {
                t.coords_prior += log_normal(x, 0.0, lam);
            }
        }
        for (r, &th) in theta.iter().enumerate() {
            let shape = if r == 0 { hp.a1 } else { hp.a2 };
            t.shrinkage_prior += log_gamma_density(th, shape, 1.0);
        }
    }

    let probs = state
        .coords
        .iter()
        .map(|x| compute_component_probs(&state.similarity, x, &layout))
        .collect::<Result<Vec<_>>>()?;
    for (i, a) in data.agencies().iter().enumerate() {
        let (k, g) = (state.clusters[i], state.components[i]);
        t.component_prior += state.mixing[k][g].ln();
        t.choice_lik += log_lik_choices(&a.counts, &state.choice_probs[k]);
        t.network_lik += log_lik_network(&a.network, &probs[g])?;
    }
    Ok(t)
}

/// Joint log-density of all latent quantities except the Pólya-gamma
/// auxiliaries, together with the data.
pub fn joint_log_density(state: &ModelState, data: &Dataset, hp: &Hyperparameters) -> Result<f64> {
    Ok(log_density_terms(state, data, hp)?.total())
}

/// Joint log-density with the Bernoulli network likelihood replaced by its
/// Pólya-gamma augmented form at the current auxiliaries:
/// `sum_{h occupied} sum_l (A_l - n_h/2) psi_l - omega_l psi_l^2 / 2`.
pub fn augmented_log_density(
    state: &ModelState,
    data: &Dataset,
    hp: &Hyperparameters,
) -> Result<f64> {
    let t = log_density_terms(state, data, hp)?;
    let layout = EdgeLayout::new(data.v_count());
    let sizes = state.component_sizes();
    let mut edge_sums = vec![vec![0u32; data.edge_count()]; hp.h];
    for (a, &g) in data.agencies().iter().zip(&state.components) {
        for l in a.network.edges() {
            edge_sums[g][l] += 1;
        }
    }
    let mut aug = 0.0;
    for h in (0..hp.h).filter(|&h| sizes[h] > 0) {
        let half = 0.5 * sizes[h] as f64;
        let offsets = latent_offsets(&state.coords[h], &layout);
        for l in 0..layout.len() {
            let psi = state.similarity[l] + offsets[l];
            aug += (edge_sums[h][l] as f64 - half) * psi - 0.5 * state.pg_aux[h][l] * psi * psi;
        }
    }
    Ok(t.total() - t.network_lik + aug)
}
