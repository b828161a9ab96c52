//! Posterior summaries: MAP partition, cluster choice probabilities and
//! cluster co-subscription probabilities with quartiles.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EdgeLayout};
use crate::diagnostics::quantile_sorted;
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainConfig, TraceRecord};
use crate::model::{compute_component_probs, EdgeProbComponent, Hyperparameters};

/// Most visited partition. Labels are 0-based in memory and 1-based on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPartition {
    #[serde(with = "one_based")]
    pub partition: Vec<usize>,
    pub frequency: f64,
}

impl MapPartition {
    pub fn cluster_count(&self) -> usize {
        self.partition.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count()];
        for &k in &self.partition {
            sizes[k] += 1;
        }
        sizes
    }
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

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut out = labels.to_vec();
    crate::gibbs::relabel_dense(&mut out);
    out
}

/// Modal canonical partition of a trace; ties go to the partition seen first.
pub fn map_partition(trace: &[TraceRecord]) -> Result<MapPartition> {
    if trace.is_empty() {
        return Err(Error::Summary(
            "cannot take the MAP partition of an empty trace".into(),
        ));
    }
    let mut seen: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    for (t, rec) in trace.iter().enumerate() {
        seen.entry(canonical(&rec.clusters)).or_insert((0, t)).0 += 1;
    }
    let (partition, (count, _)) = seen
        .into_iter()
        .max_by(|(_, (ca, ta)), (_, (cb, tb))| ca.cmp(cb).then(tb.cmp(ta)))
        .expect("nonempty trace");
    Ok(MapPartition {
        partition,
        frequency: count as f64 / trace.len() as f64,
    })
}

/// `pibar_k = sum_h nu_hk pi^(h)`.
pub fn cluster_cosub_probs(nu_k: &[f64], components: &[EdgeProbComponent]) -> Vec<f64> {
    let l = components.first().map_or(0, |c| c.len());
    let mut out = vec![0.0; l];
    for (&w, c) in nu_k.iter().zip(components) {
        for (o, &p) in out.iter_mut().zip(&c.pi) {
            *o += w * p;
        }
    }
    out
}

/// `pibar_k` of every cluster in one retained sweep.
pub fn sweep_cosub_probs(rec: &TraceRecord, layout: &EdgeLayout) -> Result<Vec<Vec<f64>>> {
    let comps = rec
        .coords
        .iter()
        .map(|x| compute_component_probs(&rec.similarity, x, layout))
        .collect::<Result<Vec<_>>>()?;
    Ok(rec
        .mixing
        .iter()
        .map(|nu| cluster_cosub_probs(nu, &comps))
        .collect())
}

/// Entry-wise posterior means and quartiles of a `K x d` quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySummary {
    pub mean: Vec<Vec<f64>>,
    pub q25: Vec<Vec<f64>>,
    pub median: Vec<Vec<f64>>,
    pub q75: Vec<Vec<f64>>,
}

impl EntrySummary {
    /// Summarizes `draws[t][k][j]` over `t`.
    pub fn from_draws(draws: &[Vec<Vec<f64>>]) -> Self {
        let (k, d) = (draws[0].len(), draws[0].first().map_or(0, |r| r.len()));
        let mut s = EntrySummary {
            mean: vec![vec![0.0; d]; k],
            q25: vec![vec![0.0; d]; k],
            median: vec![vec![0.0; d]; k],
            q75: vec![vec![0.0; d]; k],
        };
        let mut col = Vec::with_capacity(draws.len());
        for a in 0..k {
            for j in 0..d {
                col.clear();
                col.extend(draws.iter().map(|t| t[a][j]));
                s.mean[a][j] = col.iter().sum::<f64>() / col.len() as f64;
                col.sort_by(f64::total_cmp);
                s.q25[a][j] = quantile_sorted(&col, 0.25);
                s.median[a][j] = quantile_sorted(&col, 0.5);
                s.q75[a][j] = quantile_sorted(&col, 0.75);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub map_partition: MapPartition,
    #[serde(rename = "K_hat")]
    pub k_hat: usize,
    /// `K x V` choice probabilities.
    pub p_hat: EntrySummary,
    /// `K x L` cluster co-subscription probabilities.
    pub pibar_hat: EntrySummary,
}

/// Summarizes a trace whose partition was frozen at `map`. The means of
/// `pibar` average the per-sweep mixtures.
pub fn summarize_conditional(
    trace: &[TraceRecord],
    map: &MapPartition,
) -> Result<PosteriorSummary> {
    if trace.is_empty() {
        return Err(Error::Summary("conditional trace is empty".into()));
    }
    let v = trace[0].choice_probs.first().map_or(0, |p| p.len());
    let layout = EdgeLayout::new(v);
    let mut p_draws = Vec::with_capacity(trace.len());
    let mut pibar_draws = Vec::with_capacity(trace.len());
    for rec in trace {
        if canonical(&rec.clusters) != map.partition {
            return Err(Error::Summary(format!(
                "sweep {} does not carry the MAP partition",
                rec.iteration
            )));
        }
        p_draws.push(rec.choice_probs.clone());
        pibar_draws.push(sweep_cosub_probs(rec, &layout)?);
    }
    Ok(PosteriorSummary {
        map_partition: map.clone(),
        k_hat: map.cluster_count(),
        p_hat: EntrySummary::from_draws(&p_draws),
        pibar_hat: EntrySummary::from_draws(&pibar_draws),
    })
}

/// Takes the MAP partition of `trace`, reruns the sampler with clusters
/// frozen there and summarizes the rerun. Returns the rerun trace too.
pub fn summarize_fit(
    data: &Dataset,
    hp: &Hyperparameters,
    trace: &[TraceRecord],
    rerun: &ChainConfig,
) -> Result<(PosteriorSummary, Vec<TraceRecord>)> {
    let map = map_partition(trace)?;
    let cfg = ChainConfig {
        init: crate::gibbs::InitPolicy::Partition(map.partition.clone()),
        update_clusters: false,
        ..rerun.clone()
    };
    let mut conditional = Vec::with_capacity(cfg.retained_count());
    run_chain(data, hp, &cfg, &mut conditional)?;
    let summary = summarize_conditional(&conditional, &map)?;
    Ok((summary, conditional))
}

/// Alternative to [`summarize_fit`] without a rerun: summarizes the sweeps of
/// `trace` that have `K_hat` clusters, labels aligned by [`relabel_clusters`]
/// starting from the first sweep at the MAP partition. Returns the aligned
/// sweeps too.
pub fn summarize_relabeled(
    trace: &[TraceRecord],
    map: &MapPartition,
) -> Result<(PosteriorSummary, Vec<TraceRecord>)> {
    let k = map.cluster_count();
    let mut kept: Vec<TraceRecord> = trace
        .iter()
        .filter(|r| r.cluster_count() == k)
        .cloned()
        .collect();
    let start = kept
        .iter()
        .position(|r| canonical(&r.clusters) == map.partition)
        .ok_or_else(|| Error::Summary("no sweep carries the MAP partition".into()))?;
    kept.rotate_left(start);
    // Put the reference sweep's rows in canonical label order.
    let first = &mut kept[0];
    let labels = canonical(&first.clusters);
    let mut order = vec![0; k];
    for (&old, &new) in first.clusters.iter().zip(&labels) {
        order[new] = old;
    }
    first.choice_probs = order
        .iter()
        .map(|&o| first.choice_probs[o].clone())
        .collect();
    first.mixing = order.iter().map(|&o| first.mixing[o].clone()).collect();
    first.clusters = labels;
    let aligned = relabel_clusters(&kept)?;
    let v = aligned[0].choice_probs.first().map_or(0, |p| p.len());
    let layout = EdgeLayout::new(v);
    let p_draws: Vec<_> = aligned.iter().map(|r| r.choice_probs.clone()).collect();
    let pibar_draws = aligned
        .iter()
        .map(|r| sweep_cosub_probs(r, &layout))
        .collect::<Result<Vec<_>>>()?;
    let summary = PosteriorSummary {
        map_partition: map.clone(),
        k_hat: k,
        p_hat: EntrySummary::from_draws(&p_draws),
        pibar_hat: EntrySummary::from_draws(&pibar_draws),
    };
    Ok((summary, aligned))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Assignment minimizing `sum_a cost[a][perm[a]]`.
fn exact_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    fn go(
        cost: &[Vec<f64>],
        row: usize,
        used: &mut [bool],
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if acc >= best.0 {
            return;
        }
        if row == cost.len() {
            *best = (acc, cur.clone());
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                go(cost, row + 1, used, cur, acc + cost[row][j], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let k = cost.len();
    let mut best = (f64::INFINITY, (0..k).collect());
    go(
        cost,
        0,
        &mut vec![false; k],
        &mut Vec::with_capacity(k),
        0.0,
        &mut best,
    );
    best.1
}

fn greedy_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let mut cells: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect();
    cells.sort_by(|x, y| cost[x.0][x.1].total_cmp(&cost[y.0][y.1]));
    let (mut perm, mut row_done, mut col_done) = (vec![0; k], vec![false; k], vec![false; k]);
    for (a, b) in cells {
        if !row_done[a] && !col_done[b] {
            perm[a] = b;
            row_done[a] = true;
            col_done[b] = true;
        }
    }
    perm
}

const EXACT_ASSIGNMENT_MAX: usize = 8;

/// Permutes each sweep's cluster labels to match a running mean of the
/// aligned `p` rows, by L1 distance. Requires the same `K` in every sweep.
pub fn relabel_clusters(trace: &[TraceRecord]) -> Result<Vec<TraceRecord>> {
    let Some(first) = trace.first() else {
        return Ok(Vec::new());
    };
    let k = first.cluster_count();
    if let Some(r) = trace.iter().find(|r| r.cluster_count() != k) {
        return Err(Error::Summary(format!(
            "sweep {} has {} clusters, expected {k}; use the partition-based summaries",
            r.iteration,
            r.cluster_count()
        )));
    }
    let mut reference = first.choice_probs.clone();
    let mut out = Vec::with_capacity(trace.len());
    for (t, rec) in trace.iter().enumerate() {
        let cost: Vec<Vec<f64>> = reference
            .iter()
            .map(|r| rec.choice_probs.iter().map(|p| l1(r, p)).collect())
            .collect();
        // perm[a] is the sweep label that becomes reference label a.
        let perm = if k <= EXACT_ASSIGNMENT_MAX {
            exact_assignment(&cost)
        } else {
            greedy_assignment(&cost)
        };
        let mut inverse = vec![0; k];
        for (a, &b) in perm.iter().enumerate() {
            inverse[b] = a;
        }
        let mut aligned = rec.clone();
        aligned.choice_probs = perm.iter().map(|&b| rec.choice_probs[b].clone()).collect();
        aligned.mixing = perm.iter().map(|&b| rec.mixing[b].clone()).collect();
        aligned.clusters = rec.clusters.iter().map(|&c| inverse[c]).collect();
        let w = 1.0 / (t + 1) as f64;
        for (r, p) in reference.iter_mut().zip(&aligned.choice_probs) {
            for (x, y) in r.iter_mut().zip(p) {
                *x += w * (y - *x);
            }
        }
        out.push(aligned);
    }
    Ok(out)
}

/// Writes `p_hat.csv` (`cluster,v,mean,q25,median,q75`) and `pibar_hat.csv`
/// (`cluster,v,u,mean,q25,median,q75`, `v > u`) into `dir`. Indices are
/// 1-based.
pub fn write_summary_csv(summary: &PosteriorSummary, dir: &Path) -> Result<()> {
    let p_path = dir.join("p_hat.csv");
    let mut w = csv::Writer::from_path(&p_path).map_err(|e| Error::csv_write(&p_path, e))?;
    w.write_record(["cluster", "v", "mean", "q25", "median", "q75"])
        .map_err(|e| Error::csv_write(&p_path, e))?;
    let s = &summary.p_hat;
    for k in 0..s.mean.len() {
        for j in 0..s.mean[k].len() {
            w.serialize((
                k + 1,
                j + 1,
                s.mean[k][j],
                s.q25[k][j],
                s.median[k][j],
                s.q75[k][j],
            ))
            .map_err(|e| Error::csv_write(&p_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&p_path, e))?;

    let pi_path = dir.join("pibar_hat.csv");
    let mut w = csv::Writer::from_path(&pi_path).map_err(|e| Error::csv_write(&pi_path, e))?;
    w.write_record(["cluster", "v", "u", "mean", "q25", "median", "q75"])
        .map_err(|e| Error::csv_write(&pi_path, e))?;
    let s = &summary.pibar_hat;
    let v = summary.p_hat.mean.first().map_or(0, |r| r.len());
    let layout = EdgeLayout::new(v);
    for k in 0..s.mean.len() {
        for (l, &(a, b)) in layout.pairs().iter().enumerate() {
            w.serialize((
                k + 1,
                a + 1,
                b + 1,
                s.mean[k][l],
                s.q25[k][l],
                s.median[k][l],
                s.q75[k][l],
            ))
            .map_err(|e| Error::csv_write(&pi_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&pi_path, e))
}

/// Writes `summary` as pretty JSON.
pub fn write_summary_json(summary: &PosteriorSummary, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(clusters: Vec<usize>, p: Vec<Vec<f64>>) -> TraceRecord {
        let k = p.len();
        TraceRecord {
            iteration: 0,
            clusters,
            components: vec![0; 2],
            choice_probs: p,
            mixing: vec![vec![1.0]; k],
            similarity: vec![0.0],
            coords: vec![vec![vec![0.0]; 2]],
            shrinkage: vec![vec![1.0]],
            log_joint: 0.0,
        }
    }

    #[test]
    fn map_of_constant_trace() {
        let t = vec![rec(vec![0, 1], vec![vec![0.5, 0.5]; 2]); 5];
        let m = map_partition(&t).unwrap();
        assert_eq!((m.partition, m.frequency), (vec![0, 1], 1.0));
    }

    #[test]
    fn map_of_sixty_forty_trace() {
        let mut t = vec![rec(vec![0, 0], vec![vec![0.5, 0.5]]); 4];
        t.extend(vec![rec(vec![0, 1], vec![vec![0.5, 0.5]; 2]); 6]);
        let m = map_partition(&t).unwrap();
        assert_eq!(m.partition, vec![0, 1]);
        assert!((m.frequency - 0.6).abs() < 1e-15);
        assert!(map_partition(&[]).is_err());
    }

    #[test]
    fn map_ties_go_to_first_seen() {
        let t = vec![
            rec(vec![0, 1], vec![vec![0.5, 0.5]; 2]),
            rec(vec![0, 0], vec![vec![0.5, 0.5]]),
        ];
        assert_eq!(map_partition(&t).unwrap().partition, vec![0, 1]);
    }

    #[test]
    fn cosub_mixture_examples() {
        let c = |x: f64| EdgeProbComponent { pi: vec![x] };
        assert_eq!(cluster_cosub_probs(&[1.0], &[c(0.3)]), vec![0.3]);
        let mixed = cluster_cosub_probs(&[0.5, 0.5], &[c(0.2), c(0.6)])[0];
        assert!((mixed - 0.4).abs() < 1e-15);
        assert_eq!(
            cluster_cosub_probs(&[0.3, 0.7], &[c(0.25), c(0.25)]),
            vec![0.25]
        );
    }

    #[test]
    fn relabeled_summary_follows_map_labels() {
        let (a, b) = (vec![0.9, 0.1], vec![0.2, 0.8]);
        let mut t = vec![rec(vec![0, 0], vec![a.clone()])];
        for _ in 0..3 {
            t.push(rec(vec![1, 0], vec![b.clone(), a.clone()]));
            t.push(rec(vec![0, 1], vec![a.clone(), b.clone()]));
        }
        let map = MapPartition {
            partition: vec![0, 1],
            frequency: 0.5,
        };
        let (s, aligned) = summarize_relabeled(&t, &map).unwrap();
        assert_eq!(aligned.len(), 6);
        assert_eq!(s.k_hat, 2);
        for (got, want) in s.p_hat.mean.iter().flatten().zip(a.iter().chain(&b)) {
            assert!((got - want).abs() < 1e-12);
        }
        let missing = MapPartition {
            partition: vec![0, 1, 2],
            frequency: 1.0,
        };
        assert!(summarize_relabeled(&t, &missing).is_err());
    }

    #[test]
    fn two_sweep_median_is_midpoint() {
        let s = EntrySummary::from_draws(&[vec![vec![0.2]], vec![vec![0.4]]]);
        assert!((s.mean[0][0] - 0.3).abs() < 1e-15);
        assert!((s.median[0][0] - 0.3).abs() < 1e-15);
        let c = EntrySummary::from_draws(&vec![vec![vec![0.7]]; 3]);
        assert_eq!((c.q25[0][0], c.median[0][0], c.q75[0][0]), (0.7, 0.7, 0.7));
    }

    #[test]
    fn conditional_summary_uses_per_sweep_mixtures() {
        // Z alone sets pi; per-sweep mixtures differ from mixing the means.
        let mut a = rec(vec![0, 0], vec![vec![0.25, 0.75]]);
        a.components = vec![0, 0];
        a.mixing = vec![vec![1.0, 0.0]];
        a.coords = vec![vec![vec![0.0]; 2]; 2];
        a.similarity = vec![2.0];
        let mut b = a.clone();
        b.mixing = vec![vec![0.0, 1.0]];
        b.coords[1] = vec![vec![1.0]; 2];
        b.similarity = vec![-1.0];
        let map = MapPartition {
            partition: vec![0, 0],
            frequency: 1.0,
        };
        let s = summarize_conditional(&[a, b], &map).unwrap();
        let want = (crate::model::logistic(2.0) + crate::model::logistic(0.0)) / 2.0;
        assert!((s.pibar_hat.mean[0][0] - want).abs() < 1e-12);
        assert!((s.p_hat.mean[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let other = MapPartition {
            partition: vec![0, 1],
            frequency: 1.0,
        };
        let t = vec![rec(vec![0, 0], vec![vec![0.5, 0.5]])];
        assert!(summarize_conditional(&t, &other).is_err());
    }

    #[test]
    fn relabel_undoes_swaps() {
        let p = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let swapped = vec![p[1].clone(), p[0].clone()];
        let trace: Vec<_> = (0..10)
            .map(|t| {
                if t % 2 == 0 {
                    rec(vec![0, 1], p.clone())
                } else {
                    rec(vec![1, 0], swapped.clone())
                }
            })
            .collect();
        let out = relabel_clusters(&trace).unwrap();
        for r in &out {
            assert_eq!(r.choice_probs, p);
            assert_eq!(r.clusters, vec![0, 1]);
        }
        let mut bad = trace.clone();
        bad.push(rec(vec![0, 0], vec![vec![0.5, 0.5]]));
        assert!(relabel_clusters(&bad).is_err());
    }

    #[test]
    fn greedy_and_exact_agree_on_clear_costs() {
        let cost = vec![
            vec![5.0, 0.1, 3.0],
            vec![0.2, 4.0, 4.0],
            vec![3.0, 3.0, 0.3],
        ];
        assert_eq!(exact_assignment(&cost), vec![1, 0, 2]);
        assert_eq!(greedy_assignment(&cost), vec![1, 0, 2]);
    }

    proptest! {
        #[test]
        fn map_is_label_invariant(seq in proptest::collection::vec(0usize..3, 1..20), shift in 1usize..3) {
            let trace: Vec<_> = seq.iter().map(|&s| {
                let labels = match s { 0 => vec![0, 0, 1], 1 => vec![0, 1, 1], _ => vec![0, 1, 2] };
                let k = labels.iter().max().unwrap() + 1;
                rec(labels, vec![vec![0.5, 0.5]; k])
            }).collect();
            let relabeled: Vec<_> = trace.iter().map(|r| {
                let mut r = r.clone();
                r.clusters = r.clusters.iter().map(|c| (c + shift) % 3).collect();
                r
            }).collect();
            prop_assert_eq!(map_partition(&trace).unwrap(), map_partition(&relabeled).unwrap());
        }

        #[test]
        fn relabel_recovers_random_permutations(perms in proptest::collection::vec(0usize..6, 1..30)) {
            let truth = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
            let all = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let mut trace = vec![rec(vec![0, 1, 2], truth.clone())];
            for &j in &perms {
                let s = all[j];
                let mut p = vec![Vec::new(); 3];
                for a in 0..3 { p[s[a]] = truth[a].clone(); }
                trace.push(rec(vec![s[0], s[1], s[2]], p));
            }
            for r in relabel_clusters(&trace).unwrap() {
                prop_assert_eq!(&r.choice_probs, &truth);
                prop_assert_eq!(&r.clusters, &vec![0, 1, 2]);
            }
        }

        #[test]
        fn pibar_in_component_hull(nu in proptest::collection::vec(0.01f64..1.0, 3), pis in proptest::collection::vec(0.001f64..0.999, 6)) {
            let s: f64 = nu.iter().sum();
            let nu: Vec<f64> = nu.iter().map(|x| x / s).collect();
            let comps: Vec<_> = pis.chunks(2).map(|c| EdgeProbComponent { pi: c.to_vec() }).collect();
            let bar = cluster_cosub_probs(&nu, &comps);
            for l in 0..2 {
                let lo = comps.iter().map(|c| c.pi[l]).fold(1.0, f64::min);
                let hi = comps.iter().map(|c| c.pi[l]).fold(0.0, f64::max);
                prop_assert!(bar[l] >= lo - 1e-12 && bar[l] <= hi + 1e-12);
            }
        }
    }
}
