//! Hyperparameters, latent state and the deterministic model math.
//!
//! Each component `h` has edge probabilities
//! `pi_h = logistic(Z + L(Xbar_h Xbar_h^T))`, where `Xbar_h = X_h Lambda_h^{1/2}`
//! holds the scaled latent coordinates and `Lambda_h` the shrinkage weights
//! `lambda_r = prod_{m <= r} 1 / theta_m`. Every likelihood here is computed
//! in log space.

mod density;
mod hyper;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{EdgeLayout, EdgeVector};
use crate::error::{Error, Result};
use crate::rng::{
    log_sum_exp, sample_categorical, sample_dirichlet, sample_gamma, sample_gaussian,
};
use rand::Rng;

pub use density::{
    augmented_log_density, crp_log_eppf, joint_log_density, log_density_terms, LogDensityTerms,
};
pub use hyper::{HyperOverrides, Hyperparameters};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Scaled latent coordinates of one component, `V` rows of length `R`.
pub type Coords = Vec<Vec<f64>>;

/// Edge probabilities of one mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbComponent {
    pub pi: Vec<f64>,
}

impl EdgeProbComponent {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// All latent quantities of one sweep. Labels are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Cluster of each agency, contiguous labels `0..K` with no empty label.
    pub clusters: Vec<usize>,
    /// Mixture component of each agency, `0..H`.
    pub components: Vec<usize>,
    /// `K x V` choice probabilities.
    pub choice_probs: Vec<Vec<f64>>,
    /// `K x H` mixing probabilities.
    pub mixing: Vec<Vec<f64>>,
    /// Shared similarity vector `Z`, length `L`.
    pub similarity: Vec<f64>,
    /// `H` coordinate matrices.
    pub coords: Vec<Coords>,
    /// `H x R` multiplicative gamma factors `theta`.
    pub shrinkage: Vec<Vec<f64>>,
    /// `H x L` Pólya-gamma auxiliaries; entries of empty components are unused.
    pub pg_aux: Vec<Vec<f64>>,
}

impl ModelState {
    pub fn cluster_count(&self) -> usize {
        self.choice_probs.len()
    }

    pub fn component_count(&self) -> usize {
        self.coords.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count()];
        for &c in &self.clusters {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn component_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.component_count()];
        for &g in &self.components {
            sizes[g] += 1;
        }
        sizes
    }

    /// Checks dimensions, simplex rows and the no-empty-cluster invariant.
    pub fn validate(&self, n: usize, v_count: usize, h: usize, r: usize) -> Result<()> {
        let l = crate::data::edge_count(v_count);
        let k = self.cluster_count();
        let bad = |msg: String| Err(Error::Precondition(format!("invalid state: {msg}")));
        if self.clusters.len() != n || self.components.len() != n {
            return bad(format!("expected {n} assignments"));
        }
        if self.mixing.len() != k {
            return bad(format!(
                "{} mixing rows for {k} clusters",
                self.mixing.len()
            ));
        }
        let sizes = {
            let mut s = vec![0usize; k];
            for &c in &self.clusters {
                if c >= k {
                    return bad(format!("cluster label {c} out of range 0..{k}"));
                }
                s[c] += 1;
            }
            s
        };
        if let Some(e) = sizes.iter().position(|&s| s == 0) {
            return bad(format!("cluster {e} is empty"));
        }
        if self.components.iter().any(|&g| g >= h) {
            return bad(format!("component label out of range 0..{h}"));
        }
        for row in &self.choice_probs {
            check_simplex(row, v_count, "choice probabilities")?;
        }
        for row in &self.mixing {
            check_simplex(row, h, "mixing probabilities")?;
        }
        if self.similarity.len() != l {
            return bad(format!(
                "similarity vector has length {}",
                self.similarity.len()
            ));
        }
        if self.coords.len() != h || self.shrinkage.len() != h || self.pg_aux.len() != h {
            return bad(format!("expected {h} components"));
        }
        for (c, x) in self.coords.iter().enumerate() {
            if x.len() != v_count || x.iter().any(|row| row.len() != r) {
                return bad(format!(
                    "coordinates of component {c} are not {v_count}x{r}"
                ));
            }
        }
        for (c, t) in self.shrinkage.iter().enumerate() {
            if t.len() != r || t.iter().any(|&x| !(x > 0.0)) {
                return bad(format!("shrinkage factors of component {c} invalid"));
            }
        }
        if self.pg_aux.iter().any(|w| w.len() != l) {
            return bad("auxiliary vectors have wrong length".into());
        }
        Ok(())
    }
}

impl ModelState {
    /// Draws every latent quantity from the prior: the partition from the
    /// sequential CRP, then `p`, `nu`, `G`, `Z`, `theta` and `Xbar`.
    /// Auxiliaries are set to 0.25.
    pub fn sample_prior<R: Rng + ?Sized>(
        n: usize,
        hp: &Hyperparameters,
        rng: &mut R,
    ) -> Result<ModelState> {
        let v = hp.v_count();
        let l = hp.edge_count();
        if l != crate::data::edge_count(v) {
            return Err(Error::Precondition(
                "hyperparameter lengths disagree".into(),
            ));
        }
        let mut clusters = Vec::with_capacity(n);
        let mut sizes: Vec<usize> = Vec::new();
        for _ in 0..n {
            let mut w: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
            w.push(hp.alpha_c);
            let k = sample_categorical(&w, rng)?;
            if k == sizes.len() {
                sizes.push(0);
            }
            sizes[k] += 1;
            clusters.push(k);
        }
        let nu_alpha = vec![1.0 / hp.h as f64; hp.h];
        let choice_probs = (0..sizes.len())
            .map(|_| sample_dirichlet(&hp.alpha, rng))
            .collect::<Result<Vec<_>>>()?;
        let mixing = (0..sizes.len())
            .map(|_| sample_dirichlet(&nu_alpha, rng))
            .collect::<Result<Vec<_>>>()?;
        let components = clusters
            .iter()
            .map(|&k| sample_categorical(&mixing[k], rng))
            .collect::<Result<Vec<_>>>()?;
        let similarity = hp
            .mu
            .iter()
            .zip(&hp.sigma2)
            .map(|(&m, &s)| sample_gaussian(m, s, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut shrinkage = Vec::with_capacity(hp.h);
        let mut coords = Vec::with_capacity(hp.h);
        for _ in 0..hp.h {
            let theta = (0..hp.r)
                .map(|r| sample_gamma(if r == 0 { hp.a1 } else { hp.a2 }, 1.0, rng))
                .collect::<Result<Vec<_>>>()?;
            let lambda = shrinkage_weights(&theta);
            let x = (0..v)
                .map(|_| {
                    lambda
                        .iter()
                        .map(|&lam| sample_gaussian(0.0, lam, rng))
                        .collect()
                })
                .collect::<Result<Coords>>()?;
            shrinkage.push(theta);
            coords.push(x);
        }
        Ok(ModelState {
            clusters,
            components,
            choice_probs,
            mixing,
            similarity,
            coords,
            shrinkage,
            pg_aux: vec![vec![0.25; l]; hp.h],
        })
    }
}

fn check_simplex(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::Precondition(format!(
            "{what} row has length {}, expected {len}",
            row.len()
        )));
    }
    let s: f64 = row.iter().sum();
    if row.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "{what} row is not on the simplex"
        )));
    }
    Ok(())
}

/// Shrinkage weights `lambda_r = prod_{m <= r} 1 / theta_m`.
pub fn shrinkage_weights(theta: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    theta
        .iter()
        .map(|&t| {
            acc /= t;
            acc
        })
        .collect()
}

/// Per-dimension precisions `1 / lambda_r = prod_{m <= r} theta_m`.
pub fn shrinkage_precisions(theta: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    theta
        .iter()
        .map(|&t| {
            acc *= t;
            acc
        })
        .collect()
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Low-rank offsets `D_l = <Xbar_v, Xbar_u>` in pair order.
pub fn latent_offsets(coords: &Coords, layout: &EdgeLayout) -> Vec<f64> {
    layout
        .pairs()
        .iter()
        .map(|&(v, u)| dot(&coords[v], &coords[u]))
        .collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Edge probabilities `logistic(Z + L(Xbar Xbar^T))` for one component,
/// clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub fn compute_component_probs(
    similarity: &[f64],
    coords: &Coords,
    layout: &EdgeLayout,
) -> Result<EdgeProbComponent> {
    if similarity.len() != layout.len() || coords.len() != layout.v_count() {
        return Err(Error::Dimension(format!(
            "similarity length {} and {} coordinate rows do not match V={}",
            similarity.len(),
            coords.len(),
            layout.v_count()
        )));
    }
    let pi: Vec<f64> = similarity
        .iter()
        .zip(latent_offsets(coords, layout))
        .map(|(z, d)| clamp_prob(logistic(z + d)))
        .collect();
    if pi.iter().any(|p| p.is_nan()) {
        return Err(Error::Numeric("NaN edge probability".into()));
    }
    Ok(EdgeProbComponent { pi })
}

/// `sum_v n_v log p_v`; `-inf` when a chosen product has zero probability.
pub fn log_lik_choices(counts: &[u32], p: &[f64]) -> f64 {
    counts
        .iter()
        .zip(p)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &pv)| {
            if pv > 0.0 {
                n as f64 * pv.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Bernoulli log-likelihood of one network under one component.
pub fn log_lik_network(a: &EdgeVector, pi: &EdgeProbComponent) -> Result<f64> {
    if a.len() != pi.len() {
        return Err(Error::Dimension(format!(
            "network has {} pairs, probabilities {}",
            a.len(),
            pi.len()
        )));
    }
    Ok(a.bits()
        .iter()
        .zip(&pi.pi)
        .map(|(&bit, &p)| {
            let p = clamp_prob(p);
            if bit == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum())
}

/// Log-likelihood of a network under the cluster's mixture of components.
pub fn mixture_log_lik(
    a: &EdgeVector,
    mixing: &[f64],
    components: &[EdgeProbComponent],
) -> Result<f64> {
    if mixing.len() != components.len() {
        return Err(Error::Dimension(format!(
            "{} mixing weights for {} components",
            mixing.len(),
            components.len()
        )));
    }
    let terms = mixing
        .iter()
        .zip(components)
        .map(|(&w, pi)| Ok(w.ln() + log_lik_network(a, pi)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_sum_exp(&terms))
}

/// Log marginal probability of an agency's counts under a fresh cluster,
/// integrating the choice probabilities over their Dirichlet prior.
pub fn marginal_choices_new_cluster(counts: &[u32], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut out = ln_gamma(a0) - ln_gamma(a0 + n);
    for (&c, &a) in counts.iter().zip(alpha) {
        if c > 0 {
            out += ln_gamma(a + c as f64) - ln_gamma(a);
        }
    }
    out
}

/// Log marginal probability of a component label under a fresh cluster's
/// symmetric `Dirichlet(1/H)` mixing prior. Always `log(1/H)`.
pub fn marginal_component_new_cluster(h: usize) -> f64 {
    -(h as f64).ln()
}

/// Direct log-gamma evaluation of the fresh-cluster component marginal, kept
/// for checking [`marginal_component_new_cluster`].
pub fn marginal_component_new_cluster_gamma(h: usize, component: usize) -> f64 {
    let a = 1.0 / h as f64;
    let mut out = ln_gamma(h as f64 * a) - h as f64 * ln_gamma(a);
    for j in 0..h {
        out += ln_gamma(a + (j == component) as u32 as f64);
    }
    out - ln_gamma(h as f64 * a + 1.0)
}
