//! Synthetic datasets drawn from the generative model, with ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{edge_count, pair_index0, AgencyRecord, Dataset, EdgeLayout, EdgeVector};
use crate::error::{Error, Result};
use crate::model::{compute_component_probs, ModelState};
use crate::rng::{sample_categorical, sample_multinomial, RngStream};

/// Parameters of a simulation. Rows of `p0` and `nu0` must be simplices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of agencies.
    pub n: usize,
    /// Number of products.
    #[serde(rename = "V")]
    pub v: usize,
    /// Number of true clusters.
    #[serde(rename = "K0")]
    pub k0: usize,
    /// Mono-product customers per agency.
    pub customers: u32,
    /// `K0 x V` true choice probabilities.
    pub p0: Vec<Vec<f64>>,
    /// `K0 x H0` true mixing probabilities.
    pub nu0: Vec<Vec<f64>>,
    /// `H0 x L` true component edge probabilities.
    pub pi0: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        default_scenario()
    }
}

/// Ground truth of a simulated dataset. Serialized labels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    #[serde(rename = "C0", with = "one_based")]
    pub clusters: Vec<usize>,
    #[serde(rename = "G0", with = "one_based")]
    pub components: Vec<usize>,
    pub p0: Vec<Vec<f64>>,
    pub nu0: Vec<Vec<f64>>,
    pub pi0: Vec<Vec<f64>>,
}

mod one_based {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(labels: &[usize], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(labels.iter().map(|&c| c + 1))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        Vec::<usize>::deserialize(d)?
            .into_iter()
            .map(|c| {
                c.checked_sub(1)
                    .ok_or_else(|| D::Error::custom("labels start at 1"))
            })
            .collect()
    }
}

/// Products (1-based) carrying most of the choice mass in the first and
/// third clusters.
const POPULAR_A: [usize; 4] = [1, 2, 5, 6];
const POPULAR_B: [usize; 4] = [4, 7, 11, 12];
const POPULAR_MASS: f64 = 0.75;
/// Products forming the dense community of the first component.
const COMMUNITY: std::ops::RangeInclusive<usize> = 1..=10;
const HUBS: [usize; 4] = [1, 2, 3, 4];
const HELD_OUT_HUB: usize = 4;
const COMMUNITY_PROB: f64 = 0.8;
const HUB_PROB: f64 = 0.75;
const BACKGROUND_PROB: f64 = 0.1;

fn popular_row(v: usize, popular: &[usize]) -> Vec<f64> {
    let rest = (1.0 - POPULAR_MASS) / (v - popular.len()) as f64;
    (1..=v)
        .map(|j| {
            if popular.contains(&j) {
                POPULAR_MASS / popular.len() as f64
            } else {
                rest
            }
        })
        .collect()
}

fn swapped(row: &[f64], a: usize, b: usize) -> Vec<f64> {
    let mut r = row.to_vec();
    r.swap(a - 1, b - 1);
    r
}

fn hub_component(v: usize, hubs: &[usize]) -> Vec<f64> {
    EdgeLayout::new(v)
        .pairs()
        .iter()
        .map(|&(a, b)| {
            if hubs.contains(&(a + 1)) || hubs.contains(&(b + 1)) {
                HUB_PROB
            } else {
                BACKGROUND_PROB
            }
        })
        .collect()
}

/// Four equal clusters of 200 agencies over 15 products with 500 customers
/// each, mixing over three components: a dense 10-product community, four
/// hub products, and the same hubs without product 4.
pub fn default_scenario() -> SimConfig {
    let v = 15;
    let p1 = popular_row(v, &POPULAR_A);
    let p3 = popular_row(v, &POPULAR_B);
    let community: Vec<f64> = EdgeLayout::new(v)
        .pairs()
        .iter()
        .map(|&(a, b)| {
            if COMMUNITY.contains(&(a + 1)) && COMMUNITY.contains(&(b + 1)) {
                COMMUNITY_PROB
            } else {
                BACKGROUND_PROB
            }
        })
        .collect();
    let reduced: Vec<usize> = HUBS
        .iter()
        .copied()
        .filter(|&h| h != HELD_OUT_HUB)
        .collect();
    SimConfig {
        n: 200,
        v,
        k0: 4,
        customers: 500,
        p0: vec![
            p1.clone(),
            swapped(&p1, 1, 9),
            p3.clone(),
            swapped(&p3, 3, 7),
        ],
        nu0: vec![
            vec![0.9, 0.05, 0.05],
            vec![0.9, 0.05, 0.05],
            vec![0.05, 0.9, 0.05],
            vec![0.05, 0.05, 0.9],
        ],
        pi0: vec![
            community,
            hub_component(v, &HUBS),
            hub_component(v, &reduced),
        ],
        seed: 1,
    }
}

impl SimConfig {
    pub fn h0(&self) -> usize {
        self.pi0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Precondition(format!("simulation config: {m}")));
        if self.v < 2 {
            return fail("V must be at least 2".into());
        }
        if self.n == 0 || self.k0 == 0 || self.k0 > self.n {
            return fail(format!(
                "need 1 <= K0 <= n, got K0={} n={}",
                self.k0, self.n
            ));
        }
        if self.customers == 0 {
            return fail("customers must be positive".into());
        }
        let simplex = |row: &[f64]| {
            row.iter().all(|&x| x >= 0.0 && x.is_finite())
                && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if self.p0.len() != self.k0 || self.p0.iter().any(|r| r.len() != self.v || !simplex(r)) {
            return fail(format!(
                "p0 must hold {} simplex rows of length {}",
                self.k0, self.v
            ));
        }
        let h0 = self.h0();
        if h0 == 0 {
            return fail("pi0 needs at least one component".into());
        }
        if self.nu0.len() != self.k0 || self.nu0.iter().any(|r| r.len() != h0 || !simplex(r)) {
            return fail(format!(
                "nu0 must hold {} simplex rows of length {h0}",
                self.k0
            ));
        }
        let l = edge_count(self.v);
        if self
            .pi0
            .iter()
            .any(|r| r.len() != l || r.iter().any(|&p| !(0.0..=1.0).contains(&p)))
        {
            return fail(format!(
                "pi0 rows must have length {l} with entries in [0, 1]"
            ));
        }
        Ok(())
    }

    /// True cluster of agency `i`: equal consecutive blocks.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.k0 / self.n
    }
}

/// Agency identifiers `A001`, `A002`, ...
pub fn agency_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("A{:0width$}", i + 1)
}

fn bernoulli_network<R: Rng + ?Sized>(v: usize, pi: &[f64], rng: &mut R) -> Result<EdgeVector> {
    let bits = pi
        .iter()
        .map(|&p| (rng.random::<f64>() < p) as u8)
        .collect();
    EdgeVector::new(v, bits)
}

/// Generates agencies block by block, each from its own random stream.
pub fn generate(cfg: &SimConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let mut clusters = Vec::with_capacity(cfg.n);
    let mut components = Vec::with_capacity(cfg.n);
    let mut agencies = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut rng = RngStream::keyed(cfg.seed, &[i as u64]);
        let k = cfg.block_of(i);
        let counts = sample_multinomial(cfg.customers, &cfg.p0[k], &mut rng)?;
        let g = sample_categorical(&cfg.nu0[k], &mut rng)?;
        let network = bernoulli_network(cfg.v, &cfg.pi0[g], &mut rng)?;
        clusters.push(k);
        components.push(g);
        agencies.push(AgencyRecord {
            id: agency_id(i, cfg.n),
            counts,
            network,
        });
    }
    let truth = SimTruth {
        clusters,
        components,
        p0: cfg.p0.clone(),
        nu0: cfg.nu0.clone(),
        pi0: cfg.pi0.clone(),
    };
    Ok((Dataset::new(cfg.v, agencies)?, truth))
}

/// Draws fresh choices and networks given the latent state: counts from
/// `Multinomial(customers_i, p_{C_i})` and edges from `Bernoulli(pi^(G_i))`.
pub fn sample_observations<R: Rng + ?Sized>(
    state: &ModelState,
    customers: &[u32],
    rng: &mut R,
) -> Result<Dataset> {
    let v = state.choice_probs.first().map_or(0, |p| p.len());
    let layout = EdgeLayout::new(v);
    let probs = state
        .coords
        .iter()
        .map(|x| compute_component_probs(&state.similarity, x, &layout))
        .collect::<Result<Vec<_>>>()?;
    let n = state.clusters.len();
    let agencies = (0..n)
        .map(|i| {
            let counts =
                sample_multinomial(customers[i], &state.choice_probs[state.clusters[i]], rng)?;
            let network = bernoulli_network(v, &probs[state.components[i]].pi, rng)?;
            Ok(AgencyRecord {
                id: agency_id(i, n),
                counts,
                network,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(v, agencies)
}

/// `pi0` entry of pair `(a, b)` (1-based, either order) in 0-based component `h`.
pub fn true_edge_prob(cfg: &SimConfig, h: usize, a: usize, b: usize) -> f64 {
    cfg.pi0[h][pair_index0(a - 1, b - 1, cfg.v)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::moments::*;

    #[test]
    fn default_scenario_shape() {
        let cfg = default_scenario();
        cfg.validate().unwrap();
        assert_eq!(
            (cfg.n, cfg.v, cfg.k0, cfg.customers, cfg.h0()),
            (200, 15, 4, 500, 3)
        );
        assert_eq!(cfg.nu0[0], vec![0.9, 0.05, 0.05]);
        assert_eq!(cfg.nu0[1], vec![0.9, 0.05, 0.05]);
        assert_eq!(cfg.nu0[2], vec![0.05, 0.9, 0.05]);
        assert_eq!(cfg.nu0[3], vec![0.05, 0.05, 0.9]);
    }

    #[test]
    fn choice_rows_are_swaps() {
        let cfg = default_scenario();
        assert_eq!(swapped(&cfg.p0[0], 1, 9), cfg.p0[1]);
        assert_eq!(cfg.p0[0][0], cfg.p0[1][8]);
        assert_eq!(swapped(&cfg.p0[2], 3, 7), cfg.p0[3]);
        assert_ne!(cfg.p0[0], cfg.p0[1]);
    }

    #[test]
    fn held_out_hub_only_changes_its_pairs() {
        let cfg = default_scenario();
        let layout = EdgeLayout::new(cfg.v);
        let mut changed = 0;
        for (l, &(a, b)) in layout.pairs().iter().enumerate() {
            if cfg.pi0[1][l] != cfg.pi0[2][l] {
                assert!(a + 1 == HELD_OUT_HUB || b + 1 == HELD_OUT_HUB);
                changed += 1;
            }
        }
        assert!(changed > 0);
        assert_eq!(true_edge_prob(&cfg, 0, 2, 9), COMMUNITY_PROB);
        assert_eq!(true_edge_prob(&cfg, 0, 12, 3), BACKGROUND_PROB);
    }

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let cfg = SimConfig {
            n: 40,
            customers: 50,
            ..default_scenario()
        };
        let (d1, t1) = generate(&cfg).unwrap();
        let (d2, t2) = generate(&cfg).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(t1, t2);
        assert!(d1.agencies().iter().all(|a| a.total() == 50));
        assert_eq!(t1.clusters[..10], [0; 10]);
        assert_eq!(t1.clusters[30..], [3; 10]);
        let s = serde_json::to_string(&t1).unwrap();
        assert!(s.starts_with(r#"{"C0":[1,"#));
    }

    #[test]
    fn degenerate_configs() {
        let mut cfg = SimConfig {
            n: 8,
            k0: 1,
            v: 3,
            customers: 9,
            seed: 3,
            ..default_scenario()
        };
        cfg.p0 = vec![vec![1.0, 0.0, 0.0]];
        cfg.nu0 = vec![vec![1.0]];
        cfg.pi0 = vec![vec![0.0; 3]];
        let (d, _) = generate(&cfg).unwrap();
        for a in d.agencies() {
            assert_eq!(a.counts, vec![9, 0, 0]);
            assert_eq!(a.network.edge_total(), 0);
        }
    }

    #[test]
    fn edge_frequencies_match_component() {
        let mut cfg = SimConfig {
            n: 10_000,
            k0: 1,
            customers: 1,
            seed: 5,
            ..default_scenario()
        };
        cfg.p0 = vec![cfg.p0[0].clone()];
        cfg.nu0 = vec![vec![0.0, 1.0, 0.0]];
        let (d, _) = generate(&cfg).unwrap();
        for l in [0, 17, 60, 104] {
            let xs: Vec<f64> = d
                .agencies()
                .iter()
                .map(|a| a.network.get(l) as u8 as f64)
                .collect();
            let (m, se) = mean_se(&xs);
            assert!(within(m, cfg.pi0[1][l], se, 4.0), "pair {l}: {m}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = default_scenario();
        cfg.nu0[0] = vec![0.5, 0.5];
        assert!(generate(&cfg).is_err());
        let cfg = SimConfig {
            customers: 0,
            ..default_scenario()
        };
        assert!(cfg.validate().is_err());
        let bad: std::result::Result<SimConfig, _> = serde_json::from_str(r#"{"n": "many"}"#);
        assert!(bad.is_err());
        let partial: SimConfig = serde_json::from_str(r#"{"n": 60, "customers": 200}"#).unwrap();
        assert_eq!((partial.n, partial.customers, partial.v), (60, 200, 15));
    }
}
