use rand::Rng;

use super::conditionals::{
    choice_posterior_params, coord_row_conditional, mixing_posterior_params, shrinkage_conditional,
    similarity_conditional_with,
};
use super::{ComponentStats, Gibbs};
use crate::error::{Error, Result};
use crate::model::{
    clamp_prob, compute_component_probs, latent_offsets, shrinkage_weights, EdgeProbComponent,
    ModelState,
};
use crate::rng::{
    sample_categorical_log, sample_dirichlet, sample_gamma, sample_gaussian,
    sample_gaussian_canonical, PolyaGamma,
};

impl Gibbs<'_> {
    /// Redraws every `p_k` from its Dirichlet full conditional.
    pub fn update_choice_probs<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        rng: &mut R,
    ) -> Result<()> {
        for (k, params) in choice_posterior_params(self, state).iter().enumerate() {
            state.choice_probs[k] = sample_dirichlet(params, rng)?;
        }
        Ok(())
    }

    /// Redraws every component label `G_i` given `nu_{C_i}` and the network.
    pub fn allocate_components<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        probs: &[EdgeProbComponent],
        rng: &mut R,
    ) -> Result<()> {
        // log pr(A | pi) = sum_l log(1 - pi_l) + sum_{l in A} logit(pi_l)
        let mut base = Vec::with_capacity(probs.len());
        let mut lift = Vec::with_capacity(probs.len());
        for pi in probs {
            let mut b = 0.0;
            let mut f = Vec::with_capacity(pi.len());
            for &p in &pi.pi {
                let p = clamp_prob(p);
                let q = (1.0 - p).ln();
                b += q;
                f.push(p.ln() - q);
            }
            base.push(b);
            lift.push(f);
        }
        let mut w = vec![0.0; probs.len()];
        for (i, edges) in self.edge_lists.iter().enumerate() {
            let nu = &state.mixing[state.clusters[i]];
            for h in 0..probs.len() {
                let ll: f64 = base[h] + edges.iter().map(|&l| lift[h][l]).sum::<f64>();
                w[h] = nu[h].ln() + ll;
            }
            state.components[i] = sample_categorical_log(&w, rng)?;
        }
        Ok(())
    }

    /// Redraws every `nu_k` from its Dirichlet full conditional.
    pub fn update_mixing_probs<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        rng: &mut R,
    ) -> Result<()> {
        for (k, params) in mixing_posterior_params(state, self.hp.h).iter().enumerate() {
            state.mixing[k] = sample_dirichlet(params, rng)?;
        }
        Ok(())
    }

    /// Draws `omega_l^h ~ PG(n_h, Z_l + D_l^h)` for every occupied component.
    /// Auxiliaries of empty components are left untouched.
    pub fn update_polya_gamma_aug<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        stats: &ComponentStats,
        rng: &mut R,
    ) -> Result<()> {
        for h in (0..self.hp.h).filter(|&h| stats.sizes[h] > 0) {
            let n_h = stats.sizes[h] as u32;
            let offsets = latent_offsets(&state.coords[h], &self.layout);
            for (l, d) in offsets.into_iter().enumerate() {
                let psi = state.similarity[l] + d;
                if !psi.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite linear predictor for component {} at pair {}",
                        h + 1,
                        l + 1
                    )));
                }
                state.pg_aux[h][l] = PolyaGamma::new(psi).draw_sum(n_h, rng);
            }
        }
        Ok(())
    }

    /// Redraws the shared similarity vector `Z` from its Gaussian full
    /// conditional given the auxiliaries.
    pub fn update_shared_similarity<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        stats: &ComponentStats,
        rng: &mut R,
    ) -> Result<()> {
        let half = !self.hooks.drop_half_count_in_similarity;
        let cond = similarity_conditional_with(self, state, stats, half);
        for (z, (m, v)) in state.similarity.iter_mut().zip(cond) {
            *z = sample_gaussian(m, v, rng)?;
        }
        Ok(())
    }

    /// Block-samples each coordinate row of every occupied component in
    /// product order. Empty components get shrinkage factors and coordinates
    /// drawn afresh from the prior.
    pub fn update_latent_coords<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        stats: &ComponentStats,
        rng: &mut R,
    ) -> Result<()> {
        for h in 0..self.hp.h {
            if stats.sizes[h] == 0 {
                self.refresh_from_prior(state, h, rng)?;
                continue;
            }
            for v in 0..self.layout.v_count() {
                let (precision, eta) = coord_row_conditional(self, state, stats, h, v);
                let (draw, _) = sample_gaussian_canonical(&precision, &eta, rng).map_err(|e| {
                    Error::Numeric(format!("component {}, product {}: {e}", h + 1, v + 1))
                })?;
                state.coords[h][v].copy_from_slice(draw.as_slice());
            }
        }
        Ok(())
    }

    pub(crate) fn refresh_from_prior<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        h: usize,
        rng: &mut R,
    ) -> Result<()> {
        for (r, t) in state.shrinkage[h].iter_mut().enumerate() {
            *t = sample_gamma(if r == 0 { self.hp.a1 } else { self.hp.a2 }, 1.0, rng)?;
        }
        let lambda = shrinkage_weights(&state.shrinkage[h]);
        for row in state.coords[h].iter_mut() {
            for (x, &lam) in row.iter_mut().zip(&lambda) {
                *x = sample_gaussian(0.0, lam, rng)?;
            }
        }
        Ok(())
    }

    /// Sequentially redraws `theta_1, ..., theta_R` of every component.
    pub fn update_shrinkage<R: Rng + ?Sized>(
        &self,
        state: &mut ModelState,
        rng: &mut R,
    ) -> Result<()> {
        for h in 0..self.hp.h {
            for r in 0..self.hp.r {
                let (shape, rate) =
                    shrinkage_conditional(self.hp, &state.coords[h], &state.shrinkage[h], r);
                state.shrinkage[h][r] = sample_gamma(shape, rate, rng)?;
            }
        }
        Ok(())
    }

    /// Recomputes the edge probabilities of every component.
    pub fn update_edge_probs(&self, state: &ModelState) -> Result<Vec<EdgeProbComponent>> {
        state
            .coords
            .iter()
            .map(|x| compute_component_probs(&state.similarity, x, &self.layout))
            .collect()
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::data::{AgencyRecord, Dataset, EdgeVector};
    use crate::model::{logit, Hyperparameters};
    use crate::rng::{moments::*, RngStream};

    fn dataset(v: usize, rows: Vec<(Vec<u32>, Vec<u8>)>) -> Dataset {
        let agencies = rows
            .into_iter()
            .enumerate()
            .map(|(i, (counts, bits))| AgencyRecord {
                id: format!("a{i}"),
                counts,
                network: EdgeVector::new(v, bits).unwrap(),
            })
            .collect();
        Dataset::new(v, agencies).unwrap()
    }

    fn hyper(v: usize, h: usize, r: usize) -> Hyperparameters {
        let l = v * (v - 1) / 2;
        Hyperparameters {
            alpha_c: 1.0,
            alpha: vec![1.0; v],
            mu: vec![0.0; l],
            sigma2: vec![10.0; l],
            a1: 2.5,
            a2: 3.5,
            h,
            r,
        }
    }

    fn state(n: usize, v: usize, k: usize, h: usize, r: usize) -> ModelState {
        let l = v * (v - 1) / 2;
        ModelState {
            clusters: (0..n).map(|i| i % k).collect(),
            components: vec![0; n],
            choice_probs: vec![vec![1.0 / v as f64; v]; k],
            mixing: vec![vec![1.0 / h as f64; h]; k],
            similarity: vec![0.0; l],
            coords: vec![vec![vec![0.0; r]; v]; h],
            shrinkage: vec![vec![1.0; r]; h],
            pg_aux: vec![vec![0.25; l]; h],
        }
    }

    #[test]
    fn choice_params_examples() {
        let data = dataset(2, vec![(vec![2, 3], vec![0])]);
        let hp = hyper(2, 1, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        assert_eq!(
            choice_posterior_params(&g, &state(1, 2, 1, 1, 1)),
            vec![vec![3.0, 4.0]]
        );

        let data = dataset(
            3,
            vec![
                (vec![1, 0, 2], vec![0; 3]),
                (vec![0, 4, 1], vec![0; 3]),
                (vec![3, 1, 0], vec![0; 3]),
            ],
        );
        let hp = hyper(3, 1, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(3, 3, 2, 1, 1);
        s.clusters = vec![0, 1, 0];
        assert_eq!(
            choice_posterior_params(&g, &s),
            vec![vec![5.0, 2.0, 3.0], vec![1.0, 5.0, 2.0]]
        );
    }

    #[test]
    fn mixing_params_examples() {
        let mut s = state(3, 2, 1, 2, 1);
        s.components = vec![0, 0, 0];
        assert_eq!(mixing_posterior_params(&s, 2), vec![vec![3.5, 0.5]]);

        let mut s = state(5, 2, 2, 3, 1);
        s.clusters = vec![0, 1, 0, 1, 1];
        s.components = vec![2, 0, 2, 2, 0];
        let third = 1.0 / 3.0;
        let want = [
            [third, third, 2.0 + third],
            [2.0 + third, third, 1.0 + third],
        ];
        let got = mixing_posterior_params(&s, 3);
        for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn allocation_probability_single_edge() {
        let data = dataset(2, vec![(vec![1, 1], vec![1])]);
        let hp = hyper(2, 2, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(1, 2, 1, 2, 1);
        let probs = vec![
            EdgeProbComponent { pi: vec![0.9] },
            EdgeProbComponent { pi: vec![0.1] },
        ];
        let mut rng = RngStream::new(3, 0);
        let draws = 100_000;
        let mut hits = 0usize;
        for _ in 0..draws {
            g.allocate_components(&mut s, &probs, &mut rng).unwrap();
            hits += (s.components[0] == 0) as usize;
        }
        let f = hits as f64 / draws as f64;
        let se = (0.9f64 * 0.1 / draws as f64).sqrt();
        assert!((f - 0.9).abs() < 4.0 * se, "{f}");

        // H = 1 always allocates to the only component.
        let hp1 = hyper(2, 1, 1);
        let g1 = Gibbs::new(&data, &hp1).unwrap();
        let mut s1 = state(1, 2, 1, 1, 1);
        g1.allocate_components(&mut s1, &probs[..1], &mut rng)
            .unwrap();
        assert_eq!(s1.components, vec![0]);
    }

    #[test]
    fn allocation_with_degenerate_mixing() {
        let data = dataset(2, vec![(vec![1, 1], vec![0])]);
        let hp = hyper(2, 2, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(1, 2, 1, 2, 1);
        s.mixing = vec![vec![1.0, 0.0]];
        let probs = vec![
            EdgeProbComponent { pi: vec![0.99] },
            EdgeProbComponent { pi: vec![0.01] },
        ];
        let mut rng = RngStream::new(4, 0);
        for _ in 0..1000 {
            g.allocate_components(&mut s, &probs, &mut rng).unwrap();
            assert_eq!(s.components[0], 0);
        }
    }

    #[test]
    fn polya_gamma_step_means_and_skips_empty() {
        let data = dataset(
            3,
            vec![
                (vec![1, 0, 0], vec![1, 0, 0]),
                (vec![1, 0, 0], vec![0, 0, 1]),
                (vec![1, 0, 0], vec![0, 1, 0]),
            ],
        );
        let hp = hyper(3, 2, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(3, 3, 1, 2, 1);
        s.similarity = vec![1.0, 0.0, 0.0];
        s.pg_aux[1] = vec![7.0; 3];
        let stats = g.component_stats(&s);
        let mut rng = RngStream::new(5, 0);
        let mut w0 = vec![];
        let mut w1 = vec![];
        for _ in 0..50_000 {
            g.update_polya_gamma_aug(&mut s, &stats, &mut rng).unwrap();
            w0.push(s.pg_aux[0][0]);
            w1.push(s.pg_aux[0][1]);
            assert_eq!(s.pg_aux[1], vec![7.0; 3]);
        }
        let (m, se) = mean_se(&w0);
        assert!(within(m, 3.0 * 0.5f64.tanh() / 2.0, se, 4.0), "{m}");
        let (m, se) = mean_se(&w1);
        assert!(within(m, 0.75, se, 4.0), "{m}");
    }

    #[test]
    fn similarity_single_component_example() {
        let data = dataset(2, vec![(vec![1, 1], vec![1])]);
        let hp = hyper(2, 1, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        let s = state(1, 2, 1, 1, 1);
        let stats = g.component_stats(&s);
        let cond = super::super::similarity_conditional(&g, &s, &stats);
        let var = 1.0 / (0.1 + 0.25);
        assert!((cond[0].1 - var).abs() < 1e-12);
        assert!((cond[0].0 - var * 0.5).abs() < 1e-12);
        assert!((cond[0].1 - 2.857_142_857_142_857).abs() < 1e-12);
        assert!((cond[0].0 - 1.428_571_428_571_428_5).abs() < 1e-12);
    }

    #[test]
    fn similarity_without_occupied_components_is_prior() {
        let data = dataset(3, vec![(vec![1, 1, 1], vec![1, 1, 0])]);
        let mut hp = hyper(3, 2, 1);
        hp.mu = vec![0.5, -1.0, logit(0.3)];
        hp.sigma2 = vec![2.0, 3.0, 4.0];
        let g = Gibbs::new(&data, &hp).unwrap();
        let s = state(1, 3, 1, 2, 1);
        let stats = ComponentStats {
            sizes: vec![0, 0],
            edge_sums: vec![vec![0; 3]; 2],
        };
        let cond = super::super::similarity_conditional(&g, &s, &stats);
        for l in 0..3 {
            assert!((cond[l].0 - hp.mu[l]).abs() < 1e-12);
            assert!((cond[l].1 - hp.sigma2[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn coords_without_auxiliaries_are_prior() {
        let data = dataset(
            3,
            vec![
                (vec![1, 1, 1], vec![0, 0, 0]),
                (vec![1, 1, 1], vec![0, 0, 0]),
            ],
        );
        let hp = hyper(3, 1, 2);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(2, 3, 1, 1, 2);
        s.pg_aux = vec![vec![0.0; 3]];
        s.shrinkage = vec![vec![2.0, 4.0]];
        s.coords = vec![vec![vec![0.3, -0.2], vec![1.0, 0.5], vec![-0.7, 0.1]]];
        // With omega = 0 and edges balanced against n_h/2, eta vanishes only
        // when A - n/2 = 0; use A = 1 of n = 2 on every pair.
        let stats = ComponentStats {
            sizes: vec![2],
            edge_sums: vec![vec![1; 3]],
        };
        let (prec, eta) = coord_row_conditional(&g, &s, &stats, 0, 1);
        assert_eq!(prec[(0, 0)], 2.0);
        assert_eq!(prec[(1, 1)], 8.0);
        assert_eq!(prec[(0, 1)], 0.0);
        assert_eq!(eta.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn coords_scalar_case_matches_hand_formula() {
        // V = 3, R = 1: row 1 couples to rows 0 and 2 through pairs (1,0) and (2,1).
        let data = dataset(3, vec![(vec![1, 1, 1], vec![1, 0, 1])]);
        let hp = hyper(3, 1, 1);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(1, 3, 1, 1, 1);
        s.coords = vec![vec![vec![0.4], vec![9.0], vec![-1.3]]];
        s.shrinkage = vec![vec![1.7]];
        s.similarity = vec![0.2, -0.5, 0.9];
        s.pg_aux = vec![vec![0.3, 0.6, 0.45]];
        let stats = g.component_stats(&s);
        let (prec, eta) = coord_row_conditional(&g, &s, &stats, 0, 1);
        // pair index of (1,0) is 0, of (2,1) is 2
        let p = 1.7 + 0.3 * 0.4 * 0.4 + 0.45 * 1.3 * 1.3;
        let e = 0.4 * (1.0 - 0.5 - 0.3 * 0.2) + (-1.3) * (1.0 - 0.5 - 0.45 * 0.9);
        assert!((prec[(0, 0)] - p).abs() < 1e-12);
        assert!((eta[0] - e).abs() < 1e-12);
    }

    #[test]
    fn shrinkage_examples() {
        let hp = hyper(2, 1, 3);
        let zero = vec![vec![0.0; 3]; 4];
        for r in 0..3 {
            let (shape, rate) = shrinkage_conditional(&hp, &zero, &[1.0, 2.0, 3.0], r);
            let base = if r == 0 { 2.5 } else { 3.5 };
            assert_eq!(shape, base + 4.0 * (3 - r) as f64 / 2.0);
            assert_eq!(rate, 1.0);
        }
        let ones = vec![vec![1.0], vec![1.0]];
        assert_eq!(shrinkage_conditional(&hp, &ones, &[5.0], 0), (3.5, 2.0));
    }

    #[test]
    fn empty_components_refresh_from_prior() {
        let data = dataset(3, vec![(vec![1, 1, 1], vec![0, 0, 0])]);
        let hp = hyper(3, 2, 2);
        let g = Gibbs::new(&data, &hp).unwrap();
        let mut s = state(1, 3, 1, 2, 2);
        let stats = g.component_stats(&s);
        assert_eq!(stats.sizes, vec![1, 0]);
        let mut rng = RngStream::new(6, 0);
        let mut t1 = vec![];
        let mut x11 = vec![];
        for _ in 0..100_000 {
            g.update_latent_coords(&mut s, &stats, &mut rng).unwrap();
            t1.push(s.shrinkage[1][0]);
            x11.push(s.coords[1][0][0]);
        }
        let (m, se) = mean_se(&t1);
        assert!(within(m, 2.5, se, 4.0), "{m}");
        // Var(X) = E[1/theta_1] = 1/(a1 - 1)
        let (v, se) = var_se(&x11);
        assert!(within(v, 1.0 / 1.5, se, 4.0), "{v}");
    }
}
