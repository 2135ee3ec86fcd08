//! MUC, B³ and CEAFe over partitions sharing one mention set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::AnnotationState;
use crate::corpus::MentionSpan;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("mention {0} appears in more than one cluster")]
    DuplicateMention(String),
    #[error(
        "key and response mention sets differ: missing from response [{}], not in key [{}]",
        .missing.join(", "), .extra.join(", ")
    )]
    MentionMismatch { missing: Vec<String>, extra: Vec<String> },
}

/// Disjoint, non-empty clusters of mention keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition<K = MentionSpan> {
    clusters: Vec<BTreeSet<K>>,
    owner: BTreeMap<K, usize>,
}

impl<K: Ord + Clone + fmt::Display> Partition<K> {
    pub fn new<I, C>(clusters: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = K>,
    {
        let mut out = Vec::new();
        let mut owner = BTreeMap::new();
        for (i, cluster) in clusters.into_iter().enumerate() {
            let set: BTreeSet<K> = cluster.into_iter().collect();
            if set.is_empty() {
                return Err(MetricsError::EmptyCluster(i));
            }
            for k in &set {
                if owner.insert(k.clone(), i).is_some() {
                    return Err(MetricsError::DuplicateMention(k.to_string()));
                }
            }
            out.push(set);
        }
        Ok(Self { clusters: out, owner })
    }

    pub fn clusters(&self) -> &[BTreeSet<K>] {
        &self.clusters
    }

    pub fn num_mentions(&self) -> usize {
        self.owner.len()
    }

    pub fn cluster_of(&self, key: &K) -> Option<usize> {
        self.owner.get(key).copied()
    }

    pub fn mentions(&self) -> impl Iterator<Item = &K> {
        self.owner.keys()
    }
}

impl Partition<MentionSpan> {
    pub fn from_state(state: &AnnotationState) -> Self {
        Self::new(state.partition()).expect("annotation state clusters are disjoint and non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_ratios(p_num: f64, p_den: f64, r_num: f64, r_den: f64) -> Self {
        Self::new(ratio(p_num, p_den), ratio(r_num, r_den))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_e: Prf,
    pub conll_f1: f64,
}

fn check_same_mentions<K: Ord + Clone + fmt::Display>(
    key: &Partition<K>,
    response: &Partition<K>,
) -> Result<(), MetricsError> {
    let missing: Vec<String> = key
        .mentions()
        .filter(|m| response.cluster_of(m).is_none())
        .map(ToString::to_string)
        .collect();
    let extra: Vec<String> = response
        .mentions()
        .filter(|m| key.cluster_of(m).is_none())
        .map(ToString::to_string)
        .collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::MentionMismatch { missing, extra })
    }
}

/// Σ(|S| − |parts of S under other|) and Σ(|S| − 1) over clusters S of `of`.
fn muc_side<K: Ord + Clone + fmt::Display>(of: &Partition<K>, by: &Partition<K>) -> (f64, f64) {
    let mut num = 0usize;
    let mut den = 0usize;
    for cluster in of.clusters() {
        let parts: BTreeSet<usize> = cluster.iter().filter_map(|m| by.cluster_of(m)).collect();
        num += cluster.len() - parts.len();
        den += cluster.len() - 1;
    }
    (num as f64, den as f64)
}

pub fn muc<K: Ord + Clone + fmt::Display>(
    key: &Partition<K>,
    response: &Partition<K>,
) -> Result<Prf, MetricsError> {
    check_same_mentions(key, response)?;
    let (r_num, r_den) = muc_side(key, response);
    let (p_num, p_den) = muc_side(response, key);
    Ok(Prf::from_ratios(p_num, p_den, r_num, r_den))
}

fn b_cubed_side<K: Ord + Clone + fmt::Display>(of: &Partition<K>, by: &Partition<K>) -> f64 {
    let mut total = 0.0;
    for cluster in of.clusters() {
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for m in cluster {
            if let Some(c) = by.cluster_of(m) {
                *overlap.entry(c).or_default() += 1;
            }
        }
        // each mention m in `cluster` contributes |cluster ∩ by(m)| / |cluster|
        let n = cluster.len() as f64;
        total += overlap.values().map(|&k| (k * k) as f64).sum::<f64>() / n;
    }
    total
}

pub fn b_cubed<K: Ord + Clone + fmt::Display>(
    key: &Partition<K>,
    response: &Partition<K>,
) -> Result<Prf, MetricsError> {
    check_same_mentions(key, response)?;
    let n = key.num_mentions() as f64;
    Ok(Prf::from_ratios(
        b_cubed_side(response, key),
        n,
        b_cubed_side(key, response),
        n,
    ))
}

/// φ4 similarity matrix, key clusters by response clusters.
pub fn phi4_matrix<K: Ord + Clone + fmt::Display>(
    key: &Partition<K>,
    response: &Partition<K>,
) -> Vec<Vec<f64>> {
    let mut shared = vec![vec![0usize; response.clusters().len()]; key.clusters().len()];
    for (i, cluster) in key.clusters().iter().enumerate() {
        for m in cluster {
            if let Some(j) = response.cluster_of(m) {
                shared[i][j] += 1;
            }
        }
    }
    shared
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &k)| {
                    let sizes = key.clusters()[i].len() + response.clusters()[j].len();
                    2.0 * k as f64 / sizes as f64
                })
                .collect()
        })
        .collect()
}

/// Maximum-weight assignment of rows to columns (Hungarian method, O(n³)).
/// Returns, for each row, the matched column if any; a rectangular matrix is
/// padded with zero weights.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max_w = weights
        .iter()
        .flatten()
        .copied()
        .fold(0.0_f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };
    // potentials and matching are 1-based; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for (j, &i) in col_match.iter().enumerate().take(n + 1).skip(1) {
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

pub fn ceaf_e<K: Ord + Clone + fmt::Display>(
    key: &Partition<K>,
    response: &Partition<K>,
) -> Result<Prf, MetricsError> {
    check_same_mentions(key, response)?;
    let phi = phi4_matrix(key, response);
    let total: f64 = max_weight_matching(&phi)
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| phi[i][j]))
        .sum();
    Ok(Prf::from_ratios(
        total,
        response.clusters().len() as f64,
        total,
        key.clusters().len() as f64,
    ))
}

pub fn conll_average(muc_f1: f64, b_cubed_f1: f64, ceaf_e_f1: f64) -> f64 {
    (muc_f1 + b_cubed_f1 + ceaf_e_f1) / 3.0
}

pub fn evaluate<K: Ord + Clone + fmt::Display>(
    key: &Partition<K>,
    response: &Partition<K>,
) -> Result<MetricReport, MetricsError> {
    let muc = muc(key, response)?;
    let b_cubed = b_cubed(key, response)?;
    let ceaf_e = ceaf_e(key, response)?;
    Ok(MetricReport {
        conll_f1: conll_average(muc.f1, b_cubed.f1, ceaf_e.f1),
        muc,
        b_cubed,
        ceaf_e,
    })
}

/// Rounds half away from zero at `decimals` places, tolerating binary
/// representation error just below the midpoint.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let rounded = (scaled.abs() + 0.5 + 1e-9).floor();
    rounded.copysign(scaled) / scale
}
