//! Fit assessment and sampler validation.

mod geweke;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EdgeLayout, EdgeVector};
use crate::error::{Error, Result};
use crate::gibbs::TraceRecord;
use crate::model::compute_component_probs;

pub use geweke::{geweke_harness, GewekeConfig, GewekeReport, GewekeStatistic};

/// Threshold on the posterior median of `lambda_R` above which the last
/// latent dimension counts as active.
pub const LAMBDA_TAIL_THRESHOLD: f64 = 0.05;

/// Area under the ROC curve of `scores` against the observed edges, by
/// average ranks. `None` when the network has no edges or no non-edges.
pub fn auc(a: &EdgeVector, scores: &[f64]) -> Result<Option<f64>> {
    if a.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "network has {} pairs, scores {}",
            a.len(),
            scores.len()
        )));
    }
    let pos = a.edge_total();
    let neg = a.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| scores[x].total_cmp(&scores[y]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start+1..=end share their average.
        let avg = 0.5 * (start + 1 + end) as f64;
        rank_sum += avg * order[start..end].iter().filter(|&&l| a.get(l)).count() as f64;
        start = end;
    }
    let pos_f = pos as f64;
    Ok(Some(
        (rank_sum - 0.5 * pos_f * (pos_f + 1.0)) / (pos_f * neg as f64),
    ))
}

/// ROC points `(fpr, tpr)` from the highest threshold down, starting at (0,0).
pub fn roc_curve(a: &EdgeVector, scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    if a.len() != scores.len() {
        return Err(Error::Dimension(
            "network and scores differ in length".into(),
        ));
    }
    let pos = a.edge_total() as f64;
    let neg = (a.len() - a.edge_total()) as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if a.get(order[i]) {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let fpr = if neg > 0.0 { fp / neg } else { 0.0 };
        let tpr = if pos > 0.0 { tp / pos } else { 0.0 };
        points.push((fpr, tpr));
    }
    Ok(points)
}

/// Standardized L1 distance `sum_v |n_v/n - p_v| / V`.
pub fn choice_fit_distance(counts: &[u32], p_hat: &[f64]) -> Result<f64> {
    if counts.len() != p_hat.len() || counts.is_empty() {
        return Err(Error::Dimension(
            "counts and probabilities differ in length".into(),
        ));
    }
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::Precondition("agency has no customers".into()));
    }
    let t = total as f64;
    let l1: f64 = counts
        .iter()
        .zip(p_hat)
        .map(|(&c, &p)| (c as f64 / t - p).abs())
        .sum();
    Ok(l1 / counts.len() as f64)
}

/// Occupancy summary of one retained sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySample {
    /// Number of components holding at least one agency.
    pub occupied: usize,
    /// `lambda_R` of every component.
    pub lambda_tail: Vec<f64>,
}

impl OccupancySample {
    pub fn from_record(rec: &TraceRecord, h: usize) -> Self {
        let mut used = vec![false; h];
        for &g in &rec.components {
            used[g] = true;
        }
        OccupancySample {
            occupied: used.iter().filter(|&&u| u).count(),
            lambda_tail: rec
                .shrinkage
                .iter()
                .map(|th| 1.0 / th.iter().product::<f64>())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OccupancyWarning {
    /// Every component is occupied in the median sweep.
    IncreaseH,
    /// Some component keeps a non-negligible last latent dimension.
    IncreaseR,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    quantile_sorted(xs, 0.5)
}

/// Linear interpolation between order statistics (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Warns when the truncation levels look too small: `IncreaseH` if the
/// median number of occupied components equals `H`, `IncreaseR` if the
/// posterior median of `lambda_R` exceeds [`LAMBDA_TAIL_THRESHOLD`] for any
/// component.
pub fn occupancy_check(samples: &[OccupancySample], h: usize) -> Vec<OccupancyWarning> {
    let mut out = Vec::new();
    if samples.is_empty() {
        return out;
    }
    let mut occ: Vec<f64> = samples.iter().map(|s| s.occupied as f64).collect();
    if median(&mut occ) >= h as f64 {
        out.push(OccupancyWarning::IncreaseH);
    }
    let comps = samples[0].lambda_tail.len();
    let any_active = (0..comps).any(|c| {
        let mut lam: Vec<f64> = samples.iter().map(|s| s.lambda_tail[c]).collect();
        median(&mut lam) > LAMBDA_TAIL_THRESHOLD
    });
    if any_active {
        out.push(OccupancyWarning::IncreaseR);
    }
    out
}

/// Posterior medians behind [`occupancy_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySummary {
    pub median_occupied: f64,
    /// Largest posterior median of `lambda_R` over components.
    pub max_lambda_tail: f64,
    pub warnings: Vec<OccupancyWarning>,
}

pub fn occupancy_summary(samples: &[OccupancySample], h: usize) -> OccupancySummary {
    let mut occ: Vec<f64> = samples.iter().map(|s| s.occupied as f64).collect();
    let comps = samples.first().map_or(0, |s| s.lambda_tail.len());
    let max_lambda_tail = (0..comps)
        .map(|c| median(&mut samples.iter().map(|s| s.lambda_tail[c]).collect::<Vec<_>>()))
        .fold(f64::NAN, f64::max);
    OccupancySummary {
        median_occupied: median(&mut occ),
        max_lambda_tail,
        warnings: occupancy_check(samples, h),
    }
}

/// Posterior mean of agency `id`'s own edge-probability vector
/// `pi^(G_i)` over the trace.
pub fn agency_edge_probs(trace: &[TraceRecord], data: &Dataset, id: &str) -> Result<Vec<f64>> {
    let i = data
        .position(id)
        .ok_or_else(|| Error::Precondition(format!("unknown agency id {id:?}")))?;
    if trace.is_empty() {
        return Err(Error::Summary("trace is empty".into()));
    }
    let layout = EdgeLayout::new(data.v_count());
    let mut acc = vec![0.0; layout.len()];
    for rec in trace {
        let g = rec.components[i];
        let pi = compute_component_probs(&rec.similarity, &rec.coords[g], &layout)?;
        for (a, p) in acc.iter_mut().zip(pi.pi) {
            *a += p;
        }
    }
    let n = trace.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Per-agency fit measures under a cluster-level summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgencyFit {
    pub agency_id: String,
    pub cluster: usize,
    pub auc: Option<f64>,
    pub epsilon: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub agencies: Vec<AgencyFit>,
    pub auc_flag: f64,
    pub max_epsilon: f64,
    /// Share of agencies with a defined AUC above the flag threshold.
    pub auc_above_flag: f64,
    pub auc_quartiles: Option<[f64; 3]>,
    pub flagged_agencies: Vec<String>,
}

/// Scores every agency against its cluster's `p_hat` and `pibar_hat` rows.
/// `partition` holds 0-based cluster labels.
pub fn fit_report(
    data: &Dataset,
    partition: &[usize],
    p_hat: &[Vec<f64>],
    pibar_hat: &[Vec<f64>],
    auc_flag: f64,
) -> Result<FitReport> {
    if partition.len() != data.len() {
        return Err(Error::Dimension(
            "partition does not cover the dataset".into(),
        ));
    }
    let mut agencies = Vec::with_capacity(data.len());
    for (a, &k) in data.agencies().iter().zip(partition) {
        let (p, pibar) = match (p_hat.get(k), pibar_hat.get(k)) {
            (Some(p), Some(pi)) => (p, pi),
            _ => {
                return Err(Error::Dimension(format!(
                    "no summary for cluster {}",
                    k + 1
                )))
            }
        };
        let auc = auc(&a.network, pibar)?;
        agencies.push(AgencyFit {
            agency_id: a.id.clone(),
            cluster: k + 1,
            auc,
            epsilon: choice_fit_distance(&a.counts, p)?,
            flagged: auc.is_some_and(|x| x < auc_flag),
        });
    }
    let mut aucs: Vec<f64> = agencies.iter().filter_map(|f| f.auc).collect();
    aucs.sort_by(f64::total_cmp);
    let auc_quartiles = (!aucs.is_empty()).then(|| {
        [
            quantile_sorted(&aucs, 0.25),
            quantile_sorted(&aucs, 0.5),
            quantile_sorted(&aucs, 0.75),
        ]
    });
    let above = aucs.iter().filter(|&&x| x > auc_flag).count();
    Ok(FitReport {
        max_epsilon: agencies.iter().map(|f| f.epsilon).fold(0.0, f64::max),
        auc_above_flag: if aucs.is_empty() {
            0.0
        } else {
            above as f64 / aucs.len() as f64
        },
        auc_quartiles,
        flagged_agencies: agencies
            .iter()
            .filter(|f| f.flagged)
            .map(|f| f.agency_id.clone())
            .collect(),
        agencies,
        auc_flag,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension("labelings differ in length".into()));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Brute-force AUC over all edge/non-edge pairs.
pub fn auc_pairwise(a: &EdgeVector, scores: &[f64]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0u64);
    for p in a.edges() {
        for q in (0..a.len()).filter(|&q| !a.get(q)) {
            pairs += 1;
            if scores[p] > scores[q] {
                wins += 1.0;
            } else if scores[p] == scores[q] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}
