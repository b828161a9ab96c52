//! Cluster-specific cross-sell strategies and their performance indicators.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{pair_index0, EdgeLayout};
use crate::error::{Error, Result};
use crate::gibbs::TraceRecord;
use crate::model::{compute_component_probs, EdgeProbComponent};
use crate::summary::{sweep_cosub_probs, PosteriorSummary};

/// Largest offer size searched exhaustively.
pub const MAX_MULTI_OFFER: usize = 3;

fn v_from_edges(l: usize) -> Result<usize> {
    let v = ((1.0 + (1.0 + 8.0 * l as f64).sqrt()) / 2.0).round() as usize;
    if v * (v - 1) / 2 != l || v < 2 {
        return Err(Error::Dimension(format!(
            "{l} is not a pair count with V >= 2"
        )));
    }
    Ok(v)
}

/// For each product `v`, the product `u != v` with the largest `pibar_k` at
/// pair `(v, u)` and that probability. Ties go to the smallest index.
pub fn best_offer(pibar_k: &[f64], v_count: usize) -> Result<Vec<(usize, f64)>> {
    if v_count < 2 {
        return Err(Error::Precondition(
            "best offers need at least two products".into(),
        ));
    }
    if pibar_k.len() != v_count * (v_count - 1) / 2 {
        return Err(Error::Dimension(format!(
            "pibar has {} entries, expected {} for V={v_count}",
            pibar_k.len(),
            v_count * (v_count - 1) / 2
        )));
    }
    Ok((0..v_count)
        .map(|v| {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for u in (0..v_count).filter(|&u| u != v) {
                let p = pibar_k[pair_index0(v, u, v_count)];
                if p > best.1 {
                    best = (u, p);
                }
            }
            best
        })
        .collect())
}

/// `e_kv = p_kv * best_prob_v`.
pub fn performance_indicators(p_hat_k: &[f64], best_probs: &[f64]) -> Vec<f64> {
    p_hat_k.iter().zip(best_probs).map(|(p, b)| p * b).collect()
}

/// A set of products offered together to holders of `v` and the probability
/// that all of them are co-subscribed with `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOffer {
    /// 0-based in memory, 1-based on disk.
    #[serde(with = "one_based")]
    pub products: Vec<usize>,
    pub joint_prob: f64,
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
                    .ok_or_else(|| D::Error::custom("products start at 1"))
            })
            .collect()
    }
}

/// `m`-subsets of `0..v_count` without `v`, in lexicographic order.
fn subsets(v_count: usize, v: usize, m: usize) -> Vec<Vec<usize>> {
    let pool: Vec<usize> = (0..v_count).filter(|&u| u != v).collect();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        let Some(pos) = (0..m).rev().find(|&i| idx[i] < pool.len() - m + i) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn check_multi(v: usize, m: usize, v_count: usize) -> Result<()> {
    if v >= v_count {
        return Err(Error::Precondition(format!(
            "product {} out of range",
            v + 1
        )));
    }
    if m == 0 || m >= v_count || m > MAX_MULTI_OFFER {
        return Err(Error::Precondition(format!(
            "offer size {m} must lie in 1..={} (exhaustive search is limited to {MAX_MULTI_OFFER} products)",
            (v_count - 1).min(MAX_MULTI_OFFER)
        )));
    }
    Ok(())
}

/// Adds `sum_h nu_h prod_m pi^(h)[(v, u_m)]` for each subset onto `acc`.
fn accumulate_joint(
    nu_k: &[f64],
    components: &[EdgeProbComponent],
    v: usize,
    v_count: usize,
    sets: &[Vec<usize>],
    acc: &mut [f64],
) {
    let incident: Vec<Vec<f64>> = components
        .iter()
        .map(|c| {
            (0..v_count)
                .map(|u| {
                    if u == v {
                        0.0
                    } else {
                        c.pi[pair_index0(v, u, v_count)]
                    }
                })
                .collect()
        })
        .collect();
    for (a, set) in acc.iter_mut().zip(sets) {
        *a += nu_k
            .iter()
            .zip(&incident)
            .map(|(w, q)| w * set.iter().map(|&u| q[u]).product::<f64>())
            .sum::<f64>();
    }
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// The `m` products maximizing the joint co-subscription probability with
/// `v` under mixing weights `nu_k`. Ties go to the lexicographically first
/// subset.
pub fn multi_offer(
    nu_k: &[f64],
    components: &[EdgeProbComponent],
    v: usize,
    m: usize,
) -> Result<MultiOffer> {
    let v_count = v_from_edges(components.first().map_or(0, |c| c.len()))?;
    check_multi(v, m, v_count)?;
    let sets = subsets(v_count, v, m);
    let mut scores = vec![0.0; sets.len()];
    accumulate_joint(nu_k, components, v, v_count, &sets, &mut scores);
    let best = argmax_first(&scores);
    Ok(MultiOffer {
        products: sets[best].clone(),
        joint_prob: scores[best],
    })
}

/// [`multi_offer`] on the posterior mean of the joint probability over the
/// sweeps of `trace`, for cluster `k`.
pub fn multi_offer_posterior(
    trace: &[TraceRecord],
    k: usize,
    v: usize,
    m: usize,
) -> Result<MultiOffer> {
    let first = trace
        .first()
        .ok_or_else(|| Error::Summary("trace is empty".into()))?;
    let v_count = first.choice_probs.first().map_or(0, |p| p.len());
    check_multi(v, m, v_count)?;
    let layout = EdgeLayout::new(v_count);
    let sets = subsets(v_count, v, m);
    let mut scores = vec![0.0; sets.len()];
    for rec in trace {
        let nu = rec.mixing.get(k).ok_or_else(|| {
            Error::Dimension(format!("sweep {} has no cluster {}", rec.iteration, k + 1))
        })?;
        let comps = rec
            .coords
            .iter()
            .map(|x| compute_component_probs(&rec.similarity, x, &layout))
            .collect::<Result<Vec<_>>>()?;
        accumulate_joint(nu, &comps, v, v_count, &sets, &mut scores);
    }
    let n = trace.len() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    let best = argmax_first(&scores);
    Ok(MultiOffer {
        products: sets[best].clone(),
        joint_prob: scores[best],
    })
}

/// One line of the strategy table. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub cluster: usize,
    pub k_size: usize,
    pub v: usize,
    pub u_best: usize,
    pub best_prob: f64,
    pub e: f64,
    /// Share of sweeps whose own argmax agrees with `u_best`.
    pub stability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOfferRow {
    pub cluster: usize,
    pub v: usize,
    pub offer: MultiOffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub rows: Vec<StrategyRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multi_offers: Vec<MultiOfferRow>,
}

/// Builds best offers and indicators from the posterior means in `summary`.
/// With a conditional trace, adds the stability column and, for `multi > 1`,
/// multi-offer blocks.
pub fn strategy_table(
    summary: &PosteriorSummary,
    trace: Option<&[TraceRecord]>,
    multi: usize,
) -> Result<StrategyTable> {
    let p_hat = &summary.p_hat.mean;
    let v_count = p_hat.first().map_or(0, |p| p.len());
    let sizes = summary.map_partition.cluster_sizes();
    let mut offers = Vec::with_capacity(p_hat.len());
    for pibar in &summary.pibar_hat.mean {
        offers.push(best_offer(pibar, v_count)?);
    }
    let stability = match trace {
        Some(t) if !t.is_empty() => Some(stability(t, &offers, v_count)?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(p_hat.len() * v_count);
    for (k, offer) in offers.iter().enumerate() {
        let best: Vec<f64> = offer.iter().map(|o| o.1).collect();
        let e = performance_indicators(&p_hat[k], &best);
        for (v, &(u, b)) in offer.iter().enumerate() {
            rows.push(StrategyRow {
                cluster: k + 1,
                k_size: sizes.get(k).copied().unwrap_or(0),
                v: v + 1,
                u_best: u + 1,
                best_prob: b,
                e: e[v],
                stability: stability.as_ref().map(|s| s[k][v]),
            });
        }
    }
    let mut multi_offers = Vec::new();
    if multi > 1 {
        let t = trace.ok_or_else(|| {
            Error::Precondition("multi-offer strategies need the conditional trace".into())
        })?;
        for k in 0..p_hat.len() {
            for v in 0..v_count {
                multi_offers.push(MultiOfferRow {
                    cluster: k + 1,
                    v: v + 1,
                    offer: multi_offer_posterior(t, k, v, multi)?,
                });
            }
        }
    } else if multi == 0 || multi > MAX_MULTI_OFFER {
        check_multi(0, multi, v_count.max(2))?;
    }
    Ok(StrategyTable { rows, multi_offers })
}

fn stability(
    trace: &[TraceRecord],
    offers: &[Vec<(usize, f64)>],
    v_count: usize,
) -> Result<Vec<Vec<f64>>> {
    let layout = EdgeLayout::new(v_count);
    let mut hits = vec![vec![0usize; v_count]; offers.len()];
    for rec in trace {
        let pibar = sweep_cosub_probs(rec, &layout)?;
        if pibar.len() != offers.len() {
            return Err(Error::Dimension(format!(
                "sweep {} has {} clusters, summary has {}",
                rec.iteration,
                pibar.len(),
                offers.len()
            )));
        }
        for (k, row) in pibar.iter().enumerate() {
            for (v, (u, _)) in best_offer(row, v_count)?.into_iter().enumerate() {
                hits[k][v] += (u == offers[k][v].0) as usize;
            }
        }
    }
    let n = trace.len() as f64;
    Ok(hits
        .into_iter()
        .map(|r| r.into_iter().map(|h| h as f64 / n).collect())
        .collect())
}

impl StrategyTable {
    /// Writes `strategies.csv` with columns
    /// `cluster,k_size,v,u_best,best_prob,e,stability`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv_write(path, e))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::csv_write(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}
