use rand::Rng;
use serde::Serialize;

use crate::data::{edge_count, Dataset};
use crate::error::{Error, Result};
use crate::gibbs::{Gibbs, Hooks};
use crate::model::{Hyperparameters, ModelState};
use crate::rng::RngStream;
use crate::simulate::sample_observations;

/// Settings of the successive-conditional test.
#[derive(Debug, Clone, PartialEq)]
pub struct GewekeConfig {
    pub n: usize,
    pub v: usize,
    pub h: usize,
    pub r: usize,
    /// Mono-product customers per agency in every regenerated dataset.
    pub customers: u32,
    pub rounds: usize,
    /// Gibbs sweeps between data regenerations.
    pub sweeps_per_round: usize,
    pub batches: usize,
    pub seed: u64,
    pub alpha_c: f64,
    pub hooks: Hooks,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        GewekeConfig {
            n: 6,
            v: 4,
            h: 2,
            r: 1,
            customers: 3,
            rounds: 10_000,
            sweeps_per_round: 1,
            batches: 50,
            seed: 0,
            alpha_c: 1.0,
            hooks: Hooks::default(),
        }
    }
}

impl GewekeConfig {
    /// Unit Dirichlet and similarity priors, standard shrinkage shapes.
    pub fn hyperparameters(&self) -> Hyperparameters {
        let l = edge_count(self.v);
        Hyperparameters {
            alpha_c: self.alpha_c,
            alpha: vec![1.0; self.v],
            mu: vec![0.0; l],
            sigma2: vec![1.0; l],
            a1: 2.5,
            a2: 3.5,
            h: self.h,
            r: self.r,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.v < 2 || self.customers == 0 {
            return Err(Error::Precondition(
                "geweke: need n >= 1, V >= 2, customers >= 1".into(),
            ));
        }
        if self.batches < 2 || self.rounds < 2 * self.batches {
            return Err(Error::Precondition(format!(
                "geweke: {} rounds cannot fill {} batches",
                self.rounds, self.batches
            )));
        }
        self.hyperparameters().validate(self.v)
    }
}

/// Moments of one tracked statistic under both samplers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GewekeStatistic {
    pub name: String,
    pub forward_mean: f64,
    pub forward_se: f64,
    pub chain_mean: f64,
    pub chain_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GewekeReport {
    pub statistics: Vec<GewekeStatistic>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.statistics
            .iter()
            .map(|s| s.z.abs())
            .fold(0.0, f64::max)
    }
}

const NAMES: [&str; 10] = [
    "Z_1",
    "Z_1^2",
    "Z_L",
    "p_11",
    "p_11^2",
    "p_1V",
    "clusters",
    "occupied_components",
    "Xbar_11^2",
    "nu_11",
];

/// Tracked functionals. Agency 1 always sits in cluster 1 under canonical
/// labels, so its rows are well defined.
fn statistics(state: &ModelState) -> [f64; 10] {
    let z = &state.similarity;
    let p = &state.choice_probs[0];
    let x = state.coords[0][0][0];
    [
        z[0],
        z[0] * z[0],
        z[z.len() - 1],
        p[0],
        p[0] * p[0],
        p[p.len() - 1],
        state.cluster_count() as f64,
        state.component_sizes().iter().filter(|&&s| s > 0).count() as f64,
        x * x,
        state.mixing[0][0],
    ]
}

fn forward_sample(
    cfg: &GewekeConfig,
    hp: &Hyperparameters,
    round: usize,
) -> Result<(ModelState, Dataset)> {
    let mut rng = RngStream::keyed(cfg.seed, &[1, round as u64]);
    let state = ModelState::sample_prior(cfg.n, hp, &mut rng)?;
    let data = sample_observations(&state, &vec![cfg.customers; cfg.n], &mut rng)?;
    Ok((state, data))
}

fn mean_se_iid(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn mean_se_batch(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let (_, se) = mean_se_iid(&means);
    (xs.iter().sum::<f64>() / xs.len() as f64, se)
}

/// Runs the chain that alternates sweeps with data regeneration, starting
/// from the first forward sample, and returns the per-round statistics.
fn chain_statistics(cfg: &GewekeConfig, hp: &Hyperparameters) -> Result<Vec<[f64; 10]>> {
    let (mut state, mut data) = forward_sample(cfg, hp, 0)?;
    let customers = vec![cfg.customers; cfg.n];
    let sweep_seed = RngStream::keyed(cfg.seed, &[2]).random::<u64>();
    let mut out = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let mut gibbs = Gibbs::new(&data, hp)?;
        gibbs.set_hooks(cfg.hooks);
        let mut probs = gibbs.update_edge_probs(&state)?;
        for s in 0..cfg.sweeps_per_round {
            let t = round * cfg.sweeps_per_round + s + 1;
            gibbs.sweep(&mut state, &mut probs, sweep_seed, t, true)?;
        }
        out.push(statistics(&state));
        let mut rng = RngStream::keyed(cfg.seed, &[3, round as u64]);
        data = sample_observations(&state, &customers, &mut rng)?;
    }
    Ok(out)
}

/// Compares forward prior-then-data draws against the successive-conditional
/// chain. Forward standard errors assume independence; chain standard errors
/// come from batch means.
pub fn geweke_harness(cfg: &GewekeConfig) -> Result<GewekeReport> {
    cfg.validate()?;
    let hp = cfg.hyperparameters();
    let forward = (0..cfg.rounds)
        .map(|r| forward_sample(cfg, &hp, r).map(|(s, _)| statistics(&s)))
        .collect::<Result<Vec<_>>>()?;
    let chain = chain_statistics(cfg, &hp)?;
    let statistics = NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let f: Vec<f64> = forward.iter().map(|s| s[j]).collect();
            let c: Vec<f64> = chain.iter().map(|s| s[j]).collect();
            let (forward_mean, forward_se) = mean_se_iid(&f);
            let (chain_mean, chain_se) = mean_se_batch(&c, cfg.batches);
            let se = forward_se.hypot(chain_se);
            let diff = forward_mean - chain_mean;
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            GewekeStatistic {
                name: name.to_string(),
                forward_mean,
                forward_se,
                chain_mean,
                chain_se,
                z,
            }
        })
        .collect();
    Ok(GewekeReport { statistics })
}
