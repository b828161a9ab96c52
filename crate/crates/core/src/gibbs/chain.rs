use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reseat::canonicalize;
use super::trace::{TraceRecord, TraceSink};
use super::Gibbs;
use crate::data::Dataset;
use crate::diagnostics::{occupancy_check, OccupancySample, OccupancyWarning};
use crate::error::{Error, Result};
use crate::model::{
    joint_log_density, shrinkage_weights, EdgeProbComponent, Hyperparameters, ModelState,
};
use crate::rng::{sample_dirichlet, sample_gaussian, RngStream};

/// Starting partition of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Every agency in one cluster.
    #[default]
    SingleCluster,
    /// A given 0-based partition; labels are canonicalized first.
    Partition(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: InitPolicy,
    /// When false the partition stays at its initial value and reseating is
    /// skipped.
    pub update_clusters: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 5000,
            burnin: 1000,
            thin: 1,
            seed: 0,
            init: InitPolicy::SingleCluster,
            update_clusters: true,
        }
    }
}

impl ChainConfig {
    /// Conditional rerun with the partition frozen at `partition`.
    pub fn conditional(partition: Vec<usize>, seed: u64) -> Self {
        ChainConfig {
            iterations: 2000,
            burnin: 500,
            thin: 1,
            seed,
            init: InitPolicy::Partition(partition),
            update_clusters: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Precondition("iterations must be positive".into()));
        }
        if self.burnin >= self.iterations {
            return Err(Error::Precondition(format!(
                "burnin ({}) must be smaller than iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Precondition("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether sweep `t` (1-based) is kept.
    pub fn retains(&self, t: usize) -> bool {
        t > self.burnin && (t - self.burnin).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }
}

/// What a finished chain reports besides its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub final_state: ModelState,
    pub retained: usize,
    pub warnings: Vec<OccupancyWarning>,
}

mod step {
    pub const INIT: u64 = 0;
    pub const CHOICE: u64 = 1;
    pub const ALLOCATE: u64 = 2;
    pub const MIXING: u64 = 3;
    pub const POLYA_GAMMA: u64 = 41;
    pub const SIMILARITY: u64 = 42;
    pub const COORDS: u64 = 43;
    pub const SHRINKAGE: u64 = 44;
    pub const RESEAT: u64 = 6;
}

/// Runs a chain on `data` and streams retained sweeps into `sink`.
pub fn run_chain(
    data: &Dataset,
    hp: &Hyperparameters,
    cfg: &ChainConfig,
    sink: &mut dyn TraceSink,
) -> Result<ChainOutcome> {
    Gibbs::new(data, hp)?.run(cfg, sink)
}

impl Gibbs<'_> {
    /// Draws the starting state: the partition from `init`, `G` uniformly,
    /// everything else from the prior.
    pub fn initial_state<R: Rng + ?Sized>(
        &self,
        init: &InitPolicy,
        rng: &mut R,
    ) -> Result<ModelState> {
        let hp = self.hp;
        let (n, v, l) = (self.data.len(), self.layout.v_count(), self.layout.len());
        let mut clusters = match init {
            InitPolicy::SingleCluster => vec![0; n],
            InitPolicy::Partition(p) => {
                if p.len() != n {
                    return Err(Error::Precondition(format!(
                        "initial partition has {} labels for {n} agencies",
                        p.len()
                    )));
                }
                p.clone()
            }
        };
        relabel_dense(&mut clusters);
        let k = clusters.iter().max().map_or(0, |m| m + 1);
        let nu_alpha = vec![1.0 / hp.h as f64; hp.h];
        let mut state = ModelState {
            clusters,
            components: (0..n).map(|_| rng.random_range(0..hp.h)).collect(),
            choice_probs: (0..k)
                .map(|_| sample_dirichlet(&hp.alpha, rng))
                .collect::<Result<_>>()?,
            mixing: (0..k)
                .map(|_| sample_dirichlet(&nu_alpha, rng))
                .collect::<Result<_>>()?,
            similarity: hp
                .mu
                .iter()
                .zip(&hp.sigma2)
                .map(|(&m, &s)| sample_gaussian(m, s, rng))
                .collect::<Result<_>>()?,
            coords: vec![vec![vec![0.0; hp.r]; v]; hp.h],
            shrinkage: vec![vec![1.0; hp.r]; hp.h],
            pg_aux: vec![vec![0.25; l]; hp.h],
        };
        for h in 0..hp.h {
            self.refresh_from_prior(&mut state, h, rng)?;
        }
        canonicalize(&mut state);
        Ok(state)
    }

    /// One full sweep. `probs` must hold the edge probabilities of `state` on
    /// entry and is refreshed on exit.
    pub fn sweep(
        &self,
        state: &mut ModelState,
        probs: &mut Vec<EdgeProbComponent>,
        seed: u64,
        t: usize,
        update_clusters: bool,
    ) -> Result<()> {
        let t = t as u64;
        let rng = |s: u64| RngStream::keyed(seed, &[t, s]);
        self.update_choice_probs(state, &mut rng(step::CHOICE))?;
        self.allocate_components(state, probs, &mut rng(step::ALLOCATE))?;
        self.update_mixing_probs(state, &mut rng(step::MIXING))?;
        let stats = self.component_stats(state);
        self.update_polya_gamma_aug(state, &stats, &mut rng(step::POLYA_GAMMA))?;
        self.update_shared_similarity(state, &stats, &mut rng(step::SIMILARITY))?;
        self.update_latent_coords(state, &stats, &mut rng(step::COORDS))?;
        self.update_shrinkage(state, &mut rng(step::SHRINKAGE))?;
        *probs = self.update_edge_probs(state)?;
        if update_clusters {
            self.reseat_clusters(state, &mut rng(step::RESEAT))?;
        }
        canonicalize(state);
        Ok(())
    }

    /// Runs `cfg.iterations` sweeps from a fresh initial state.
    pub fn run(&self, cfg: &ChainConfig, sink: &mut dyn TraceSink) -> Result<ChainOutcome> {
        cfg.validate()?;
        let mut init_rng = RngStream::keyed(cfg.seed, &[0, step::INIT]);
        let state = self.initial_state(&cfg.init, &mut init_rng)?;
        self.run_from(state, cfg, sink)
    }

    /// Runs `cfg.iterations` sweeps starting at `state`; `cfg.init` is ignored.
    pub fn run_from(
        &self,
        mut state: ModelState,
        cfg: &ChainConfig,
        sink: &mut dyn TraceSink,
    ) -> Result<ChainOutcome> {
        cfg.validate()?;
        self.validate_state(&state)?;
        let mut probs = self.update_edge_probs(&state)?;
        let mut occupancy = Vec::with_capacity(cfg.retained_count());
        let mut retained = 0;
        for t in 1..=cfg.iterations {
            let at = |e: Error| Error::Chain {
                iteration: t,
                source: Box::new(e),
            };
            self.sweep(&mut state, &mut probs, cfg.seed, t, cfg.update_clusters)
                .map_err(at)?;
            let lj = joint_log_density(&state, self.data, self.hp).map_err(at)?;
            if lj.is_nan() {
                return Err(at(Error::Numeric("log density is NaN".into())));
            }
            sink.log_joint(t, lj)?;
            if cfg.retains(t) {
                occupancy.push(OccupancySample {
                    occupied: state.component_sizes().iter().filter(|&&s| s > 0).count(),
                    lambda_tail: state
                        .shrinkage
                        .iter()
                        .map(|th| shrinkage_weights(th).last().copied().unwrap_or(0.0))
                        .collect(),
                });
                sink.record(TraceRecord::from_state(t, &state, lj))?;
                retained += 1;
            }
        }
        Ok(ChainOutcome {
            final_state: state,
            retained,
            warnings: occupancy_check(&occupancy, self.hp.h),
        })
    }
}

/// Maps arbitrary labels onto `0..K` by first appearance.
pub(crate) fn relabel_dense(labels: &mut [usize]) {
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for c in labels.iter_mut() {
        let next = seen.len();
        let new = match seen.iter().find(|(old, _)| old == c) {
            Some(&(_, new)) => new,
            None => {
                seen.push((*c, next));
                next
            }
        };
        *c = new;
    }
}
