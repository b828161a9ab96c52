//! Agency records, network vectorization and adjacency thresholding.
//!
//! Products are 1-based wherever they cross an API or file boundary and
//! 0-based inside the library. Edge indices are 0-based everywhere and follow
//! the column-major lower-triangle order `(2,1), (3,1), ..., (V,1), (3,2), ...,
//! (V,V-1)`.

mod io;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_cosub_counts, load_dataset, write_choices_csv, write_networks_csv, NetworkFormat,
};

/// Number of unordered product pairs, `V(V-1)/2`.
pub fn edge_count(v_count: usize) -> usize {
    v_count * v_count.saturating_sub(1) / 2
}

/// Edge index of the 1-based product pair `(v, u)` with `u < v`.
pub fn pair_index(v: usize, u: usize, v_count: usize) -> Result<usize> {
    if u == 0 || u >= v || v > v_count {
        return Err(Error::InvalidPair { v, u, v_count });
    }
    Ok(pair_index0(v - 1, u - 1, v_count))
}

/// 0-based variant of [`pair_index`]; the pair may be given in either order.
#[inline]
pub(crate) fn pair_index0(a: usize, b: usize, v_count: usize) -> usize {
    let (v, u) = if a > b { (a, b) } else { (b, a) };
    debug_assert!(u < v && v < v_count);
    u * v_count - u * (u + 1) / 2 + (v - u - 1)
}

/// Precomputed pair order and per-product incidence lists for a fixed `V`.
#[derive(Debug, Clone)]
pub struct EdgeLayout {
    v_count: usize,
    pairs: Vec<(usize, usize)>,
    incident: Vec<Vec<(usize, usize)>>,
}

impl EdgeLayout {
    pub fn new(v_count: usize) -> Self {
        let mut pairs = Vec::with_capacity(edge_count(v_count));
        for u in 0..v_count {
            for v in (u + 1)..v_count {
                pairs.push((v, u));
            }
        }
        let mut incident = vec![Vec::with_capacity(v_count.saturating_sub(1)); v_count];
        for (v, row) in incident.iter_mut().enumerate() {
            for u in 0..v_count {
                if u != v {
                    row.push((pair_index0(v, u, v_count), u));
                }
            }
        }
        EdgeLayout {
            v_count,
            pairs,
            incident,
        }
    }

    pub fn v_count(&self) -> usize {
        self.v_count
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// 0-based `(v, u)` with `v > u` for edge `l`.
    #[inline]
    pub fn pair(&self, l: usize) -> (usize, usize) {
        self.pairs[l]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `(edge index, other product)` for every pair touching product `v`,
    /// ordered by the other product.
    #[inline]
    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.incident[v]
    }
}

/// Lower-triangle vectorization of a symmetric, hollow, binary adjacency
/// matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeVector {
    v_count: usize,
    bits: Vec<u8>,
}

impl EdgeVector {
    pub fn new(v_count: usize, bits: Vec<u8>) -> Result<Self> {
        if v_count < 2 {
            return Err(Error::InvalidAdjacency(format!(
                "need at least two products, got {v_count}"
            )));
        }
        if bits.len() != edge_count(v_count) {
            return Err(Error::Dimension(format!(
                "edge vector for V={v_count} needs {} entries, got {}",
                edge_count(v_count),
                bits.len()
            )));
        }
        if let Some(l) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidAdjacency(format!(
                "edge entry {l} is {}, expected 0 or 1",
                bits[l]
            )));
        }
        Ok(EdgeVector { v_count, bits })
    }

    pub fn empty(v_count: usize) -> Self {
        EdgeVector {
            v_count,
            bits: vec![0; edge_count(v_count)],
        }
    }

    pub fn v_count(&self) -> usize {
        self.v_count
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, l: usize) -> bool {
        self.bits[l] == 1
    }

    pub(crate) fn set(&mut self, l: usize, on: bool) {
        self.bits[l] = on as u8;
    }

    /// Indices of present edges.
    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(l, _)| l)
    }

    pub fn edge_total(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Rebuilds the symmetric adjacency matrix.
    pub fn devectorize(&self) -> Vec<Vec<u8>> {
        let v_count = self.v_count;
        let mut m = vec![vec![0u8; v_count]; v_count];
        let layout = EdgeLayout::new(v_count);
        for (l, &(v, u)) in layout.pairs().iter().enumerate() {
            m[v][u] = self.bits[l];
            m[u][v] = self.bits[l];
        }
        m
    }
}

/// Vectorizes a symmetric, hollow, binary matrix.
pub fn vectorize_lower(matrix: &[Vec<u8>]) -> Result<EdgeVector> {
    let v_count = matrix.len();
    for (v, row) in matrix.iter().enumerate() {
        if row.len() != v_count {
            return Err(Error::InvalidAdjacency(format!(
                "row {} has {} entries, expected {v_count}",
                v + 1,
                row.len()
            )));
        }
    }
    #[allow(clippy::needless_range_loop)]
    for v in 0..v_count {
        if matrix[v][v] != 0 {
            return Err(Error::InvalidAdjacency(format!(
                "nonzero diagonal entry at ({}, {})",
                v + 1,
                v + 1
            )));
        }
        for u in 0..v {
            let (a, b) = (matrix[v][u], matrix[u][v]);
            if a > 1 {
                return Err(Error::InvalidAdjacency(format!(
                    "non-binary entry {a} at ({}, {})",
                    v + 1,
                    u + 1
                )));
            }
            if a != b {
                return Err(Error::InvalidAdjacency(format!(
                    "asymmetric entries at ({}, {}) and ({}, {})",
                    v + 1,
                    u + 1,
                    u + 1,
                    v + 1
                )));
            }
        }
    }
    let layout = EdgeLayout::new(v_count);
    let bits = layout.pairs().iter().map(|&(v, u)| matrix[v][u]).collect();
    EdgeVector::new(v_count, bits)
}

/// Mono-product choice counts and co-subscription network for one agency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgencyRecord {
    pub id: String,
    pub counts: Vec<u32>,
    pub network: EdgeVector,
}

impl AgencyRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    v_count: usize,
    agencies: Vec<AgencyRecord>,
}

impl Dataset {
    pub fn new(v_count: usize, agencies: Vec<AgencyRecord>) -> Result<Self> {
        if v_count < 2 {
            return Err(Error::InvalidData(format!(
                "need at least two products, got {v_count}"
            )));
        }
        if agencies.is_empty() {
            return Err(Error::InvalidData("dataset has no agencies".into()));
        }
        let mut seen = HashSet::new();
        for a in &agencies {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate agency id {:?}",
                    a.id
                )));
            }
            if a.counts.len() != v_count {
                return Err(Error::InvalidData(format!(
                    "agency {:?} has {} counts, expected {v_count}",
                    a.id,
                    a.counts.len()
                )));
            }
            if a.total() == 0 {
                return Err(Error::InvalidData(format!(
                    "agency {:?} has no mono-product customers",
                    a.id
                )));
            }
            if a.network.v_count() != v_count {
                return Err(Error::InvalidData(format!(
                    "agency {:?} network covers {} products, expected {v_count}",
                    a.id,
                    a.network.v_count()
                )));
            }
        }
        Ok(Dataset { v_count, agencies })
    }

    pub fn v_count(&self) -> usize {
        self.v_count
    }

    pub fn edge_count(&self) -> usize {
        edge_count(self.v_count)
    }

    pub fn len(&self) -> usize {
        self.agencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agencies.is_empty()
    }

    pub fn agencies(&self) -> &[AgencyRecord] {
        &self.agencies
    }

    pub fn agency(&self, i: usize) -> &AgencyRecord {
        &self.agencies[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.agencies.iter().position(|a| a.id == id)
    }
}

/// Raw co-subscription counts for one agency: `pair_counts[l]` customers hold
/// both products of pair `l`, `product_counts[v]` multi-product customers hold
/// product `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoSubscriptionCounts {
    pub v_count: usize,
    pub pair_counts: Vec<u64>,
    pub product_counts: Vec<u64>,
}

impl CoSubscriptionCounts {
    pub fn zeros(v_count: usize) -> Self {
        CoSubscriptionCounts {
            v_count,
            pair_counts: vec![0; edge_count(v_count)],
            product_counts: vec![0; v_count],
        }
    }

    fn check(&self) -> Result<()> {
        if self.pair_counts.len() != edge_count(self.v_count)
            || self.product_counts.len() != self.v_count
        {
            return Err(Error::Dimension(format!(
                "co-subscription counts do not match V={}",
                self.v_count
            )));
        }
        Ok(())
    }
}

/// Thresholds one pair: an edge exists when the joint holders strictly exceed
/// `tau` times the holders of at least one of the two products.
pub fn threshold_pair(c_vu: u64, m_v: u64, m_u: u64, tau: f64) -> Result<bool> {
    if c_vu > m_v || c_vu > m_u {
        return Err(Error::InconsistentCounts(format!(
            "pair count {c_vu} exceeds product counts ({m_v}, {m_u})"
        )));
    }
    let union = m_v + m_u - c_vu;
    if union == 0 {
        return Ok(false);
    }
    Ok(c_vu as f64 / union as f64 > tau)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Precondition(format!(
            "threshold must lie in (0, 1), got {tau}"
        )));
    }
    Ok(())
}

/// Builds the binary co-subscription network of one agency.
pub fn threshold_network(counts: &CoSubscriptionCounts, tau: f64) -> Result<EdgeVector> {
    check_tau(tau)?;
    counts.check()?;
    let layout = EdgeLayout::new(counts.v_count);
    let mut out = EdgeVector::empty(counts.v_count);
    for (l, &(v, u)) in layout.pairs().iter().enumerate() {
        let on = threshold_pair(
            counts.pair_counts[l],
            counts.product_counts[v],
            counts.product_counts[u],
            tau,
        )
        .map_err(|e| match e {
            Error::InconsistentCounts(msg) => {
                Error::InconsistentCounts(format!("pair ({}, {}): {msg}", v + 1, u + 1))
            }
            other => other,
        })?;
        out.set(l, on);
    }
    Ok(out)
}

/// Fraction of edge entries, over all agencies and pairs, that differ between
/// the networks thresholded at `tau_a` and at `tau_b`.
pub fn threshold_sensitivity(
    agencies: &[CoSubscriptionCounts],
    tau_a: f64,
    tau_b: f64,
) -> Result<f64> {
    if agencies.is_empty() {
        return Err(Error::InvalidData("no agencies to compare".into()));
    }
    let mut differing = 0usize;
    let mut total = 0usize;
    for counts in agencies {
        let a = threshold_network(counts, tau_a)?;
        let b = threshold_network(counts, tau_b)?;
        differing += a
            .bits()
            .iter()
            .zip(b.bits())
            .filter(|(x, y)| x != y)
            .count();
        total += a.len();
    }
    Ok(differing as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pair_index_examples() {
        assert_eq!(pair_index(2, 1, 15).unwrap(), 0);
        assert_eq!(pair_index(15, 14, 15).unwrap(), 104);
        assert_eq!(pair_index(3, 2, 4).unwrap(), 3);
    }

    #[test]
    fn pair_index_rejects_bad_pairs() {
        assert!(pair_index(1, 1, 4).is_err());
        assert!(pair_index(2, 3, 4).is_err());
        assert!(pair_index(5, 1, 4).is_err());
        assert!(pair_index(2, 0, 4).is_err());
    }

    #[test]
    fn pair_index_enumerates_column_major() {
        // (2,1),(3,1),(4,1),(3,2),(4,2),(4,3)
        let expected = [(2, 1), (3, 1), (4, 1), (3, 2), (4, 2), (4, 3)];
        for (l, &(v, u)) in expected.iter().enumerate() {
            assert_eq!(pair_index(v, u, 4).unwrap(), l);
        }
        let layout = EdgeLayout::new(4);
        for (l, &(v, u)) in expected.iter().enumerate() {
            assert_eq!(layout.pair(l), (v - 1, u - 1));
        }
    }

    #[test]
    fn incident_lists_cover_each_edge_twice() {
        let layout = EdgeLayout::new(7);
        let mut hits = vec![0; layout.len()];
        for v in 0..7 {
            assert_eq!(layout.incident(v).len(), 6);
            for &(l, u) in layout.incident(v) {
                hits[l] += 1;
                let (a, b) = layout.pair(l);
                assert!((a, b) == (v, u) || (a, b) == (u, v));
            }
        }
        assert!(hits.iter().all(|&h| h == 2));
    }

    #[test]
    fn vectorize_examples() {
        let mut m = vec![vec![0u8; 3]; 3];
        m[1][0] = 1;
        m[0][1] = 1;
        assert_eq!(vectorize_lower(&m).unwrap().bits(), &[1, 0, 0]);

        let zeros = vec![vec![0u8; 15]; 15];
        let e = vectorize_lower(&zeros).unwrap();
        assert_eq!(e.len(), 105);
        assert_eq!(e.edge_total(), 0);

        let mut m = vec![vec![0u8; 4]; 4];
        for &(v, u) in &[(2usize, 0usize), (3, 2)] {
            m[v][u] = 1;
            m[u][v] = 1;
        }
        assert_eq!(vectorize_lower(&m).unwrap().bits(), &[0, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn vectorize_names_offending_entry() {
        let mut m = vec![vec![0u8; 3]; 3];
        m[2][0] = 1;
        let err = vectorize_lower(&m).unwrap_err().to_string();
        assert!(
            err.contains("asymmetric") && err.contains("(3, 1)"),
            "{err}"
        );

        let mut m = vec![vec![0u8; 3]; 3];
        m[1][1] = 1;
        assert!(vectorize_lower(&m)
            .unwrap_err()
            .to_string()
            .contains("diagonal"));

        let mut m = vec![vec![0u8; 3]; 3];
        m[1][0] = 2;
        m[0][1] = 2;
        assert!(vectorize_lower(&m)
            .unwrap_err()
            .to_string()
            .contains("non-binary"));
    }

    #[test]
    fn threshold_examples() {
        assert!(!threshold_pair(10, 50, 60, 0.10).unwrap());
        assert!(threshold_pair(11, 50, 60, 0.10).unwrap());
        assert!(!threshold_pair(0, 50, 60, 0.01).unwrap());
        assert!(!threshold_pair(0, 0, 0, 0.10).unwrap());
        assert!(matches!(
            threshold_pair(61, 80, 60, 0.1),
            Err(Error::InconsistentCounts(_))
        ));
    }

    #[test]
    fn threshold_rejects_bad_tau() {
        let c = CoSubscriptionCounts::zeros(3);
        assert!(threshold_network(&c, 0.0).is_err());
        assert!(threshold_network(&c, 1.0).is_err());
    }

    #[test]
    fn sensitivity_single_flip() {
        // V = 3, pair (2,1) has ratio 12/100 = 0.12: on at 0.10, off at 0.15.
        let mut c = CoSubscriptionCounts::zeros(3);
        c.product_counts = vec![50, 62, 40];
        c.pair_counts = vec![12, 1, 1];
        let s = threshold_sensitivity(&[c.clone()], 0.10, 0.15).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(threshold_sensitivity(&[c], 0.10, 0.10).unwrap(), 0.0);
    }

    fn symmetric_matrix() -> impl Strategy<Value = Vec<Vec<u8>>> {
        (2usize..=20).prop_flat_map(|v| {
            proptest::collection::vec(0u8..=1, edge_count(v)).prop_map(move |bits| {
                let mut m = vec![vec![0u8; v]; v];
                let layout = EdgeLayout::new(v);
                for (l, &(a, b)) in layout.pairs().iter().enumerate() {
                    m[a][b] = bits[l];
                    m[b][a] = bits[l];
                }
                m
            })
        })
    }

    fn cosub_counts() -> impl Strategy<Value = CoSubscriptionCounts> {
        (2usize..=8).prop_flat_map(|v| {
            (
                proptest::collection::vec(0u64..200, v),
                proptest::collection::vec(0.0f64..=1.0, edge_count(v)),
            )
                .prop_map(move |(m, fracs)| {
                    let layout = EdgeLayout::new(v);
                    let pair_counts = layout
                        .pairs()
                        .iter()
                        .zip(&fracs)
                        .map(|(&(a, b), f)| (m[a].min(m[b]) as f64 * f).floor() as u64)
                        .collect();
                    CoSubscriptionCounts {
                        v_count: v,
                        pair_counts,
                        product_counts: m,
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn vectorize_roundtrip(m in symmetric_matrix()) {
            let e = vectorize_lower(&m).unwrap();
            prop_assert_eq!(e.len(), edge_count(m.len()));
            prop_assert_eq!(e.devectorize(), m);
        }

        #[test]
        fn pair_index_is_bijection(v in 2usize..=30) {
            let mut seen = vec![false; edge_count(v)];
            for a in 2..=v {
                for b in 1..a {
                    let l = pair_index(a, b, v).unwrap();
                    prop_assert!(!seen[l]);
                    seen[l] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn raising_tau_never_adds_edges(c in cosub_counts(), t1 in 0.01f64..0.98, dt in 0.0f64..0.5) {
            let t2 = (t1 + dt).min(0.99);
            let low = threshold_network(&c, t1).unwrap();
            let high = threshold_network(&c, t2).unwrap();
            for l in 0..low.len() {
                prop_assert!(!(high.get(l) && !low.get(l)));
            }
        }

        #[test]
        fn equal_thresholds_never_differ(c in cosub_counts(), t in 0.01f64..0.99) {
            prop_assert_eq!(threshold_sensitivity(&[c], t, t).unwrap(), 0.0);
        }
    }
}
