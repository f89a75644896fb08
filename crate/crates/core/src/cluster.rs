//! k-means clustering of per-type target vectors, elbow-based selection of
//! the cluster count, and aligned sense-anchor derivation.
//!
//! Clustering happens only on the target side; the paired source vectors
//! are split by the target partition, so each cluster yields a column-
//! aligned (target anchor, source anchor) pair.

use crate::corpus::TypeCollection;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub max_iters: usize,
    /// Relative WCSS improvement below which Lloyd iterations stop.
    pub rel_tol: f64,
    pub seed: u64,
    /// Clusters smaller than this merge into the nearest survivor.
    pub min_cluster_size: usize,
    /// Types must occur strictly more often than this to be clustered.
    pub min_count: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 10,
            max_iters: 100,
            rel_tol: 1e-6,
            seed: 42,
            min_cluster_size: 5,
            min_count: 100,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_max == 0 || self.max_iters == 0 || self.min_cluster_size == 0
        {
            return Err(Error::InvalidConfig(
                "clustering parameters must be positive".into(),
            ));
        }
        if self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!(
                "k_min {} exceeds k_max {}",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }
}

/// Anchor granularity: one anchor per type, or one per discovered sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Word,
    Sense,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Level::Word => write!(f, "word"),
            Level::Sense => write!(f, "sense"),
        }
    }
}

/// Result of one k-means run.
#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// WCSS measured after each assignment step, in order.
    pub wcss_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ initialization, deterministic for a
/// fixed seed.
pub fn kmeans(vectors: &[&[f64]], k: usize, cfg: &ClusteringConfig) -> Result<KmeansOutcome> {
    cfg.validate()?;
    let n = vectors.len();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if k > n {
        return Err(Error::TooFewVectors { k, n });
    }
    let dim = vectors[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut centroids = init_kmeans_plusplus(vectors, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut wcss_trace = Vec::new();
    let mut prev_wcss: Option<f64> = None;
    let mut wcss;

    let mut iter = 0;
    loop {
        // Assignment; ties keep the current cluster, otherwise the lowest
        // index wins, which keeps repaired clusters stable.
        wcss = 0.0;
        for (i, v) in vectors.iter().enumerate() {
            let mut best = assignments[i];
            let mut best_d = if best == usize::MAX {
                f64::INFINITY
            } else {
                sq_dist(v, &centroids[best])
            };
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(v, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignments[i] = best;
            wcss += best_d;
        }
        if let Some(last) = wcss_trace.last() {
            debug_assert!(wcss <= last + 1e-9 * (1.0 + last), "WCSS increased");
        }
        wcss_trace.push(wcss);

        iter += 1;
        if iter >= cfg.max_iters {
            break;
        }
        if let Some(prev) = prev_wcss {
            if prev - wcss <= cfg.rel_tol * prev.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_wcss = Some(wcss);

        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(*v) {
                *s += x;
            }
        }
        for (c, (sum, &cnt)) in sums.iter().zip(&counts).enumerate() {
            if cnt > 0 {
                for (dst, s) in centroids[c].iter_mut().zip(sum) {
                    *dst = s / cnt as f64;
                }
            }
        }

        // Empty-cluster repair: seize the point farthest from its assigned
        // centroid (ties broken by lowest point index).
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far_idx = None;
            let mut far_d = -1.0;
            for (i, v) in vectors.iter().enumerate() {
                if taken[i] || counts[assignments[i]] <= 1 {
                    continue;
                }
                let d = sq_dist(v, &centroids[assignments[i]]);
                if d > far_d {
                    far_d = d;
                    far_idx = Some(i);
                }
            }
            if let Some(i) = far_idx {
                taken[i] = true;
                counts[assignments[i]] -= 1;
                counts[c] += 1;
                centroids[c] = vectors[i].to_vec();
                assignments[i] = c;
            }
        }
    }

    Ok(KmeansOutcome {
        assignments,
        centroids,
        wcss,
        wcss_trace,
    })
}

fn init_kmeans_plusplus(vectors: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push(vectors[first].to_vec());
    let mut min_dist: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v, &centroids[0]))
        .collect();
    let mut chosen = vec![false; n];
    chosen[first] = true;

    while centroids.len() < k {
        let total: f64 = min_dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = None;
            for (i, &d) in min_dist.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    pick = Some(i);
                    break;
                }
                target -= d;
            }
            // Floating-point tail: fall back to the last positive weight.
            pick.unwrap_or_else(|| {
                min_dist
                    .iter()
                    .rposition(|&d| d > 0.0)
                    .expect("total > 0 implies a positive weight")
            })
        } else {
            // All points coincide with chosen centroids; take the first
            // index not yet used.
            chosen
                .iter()
                .position(|&c| !c)
                .expect("k <= n leaves an unchosen point")
        };
        chosen[idx] = true;
        centroids.push(vectors[idx].to_vec());
        for (d, v) in min_dist.iter_mut().zip(vectors) {
            let nd = sq_dist(v, centroids.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Pick k at the point of maximum normalized drop of the WCSS curve.
///
/// Both axes normalize to [0, 1] over the curve's range; the score of point
/// i is `(1 - y_i) - x_i` and the smallest k with the (strictly positive)
/// maximum wins. Flat or linear curves return the first k. Upward blips in
/// the curve are clamped to the previous value first.
pub fn select_k_elbow(curve: &[(usize, f64)]) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::CurveTooShort);
    }
    if curve.len() == 1 {
        return Ok(curve[0].0);
    }
    let mut wcss: Vec<f64> = curve.iter().map(|&(_, w)| w).collect();
    for i in 1..wcss.len() {
        if wcss[i] > wcss[i - 1] {
            wcss[i] = wcss[i - 1];
        }
    }
    let k_lo = curve[0].0 as f64;
    let k_hi = curve[curve.len() - 1].0 as f64;
    let w_hi = wcss[0];
    let w_lo = wcss[wcss.len() - 1];
    if k_hi <= k_lo || w_hi <= w_lo {
        return Ok(curve[0].0);
    }
    let mut best_k = curve[0].0;
    let mut best_d = 0.0;
    for (i, &(k, _)) in curve.iter().enumerate() {
        let x = (k as f64 - k_lo) / (k_hi - k_lo);
        let y = (wcss[i] - w_lo) / (w_hi - w_lo);
        let d = (1.0 - y) - x;
        if d > best_d {
            best_d = d;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// One aligned anchor: the mean target and mean source vectors of a cluster
/// (or of a whole type at word level).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorEntry {
    pub type_name: String,
    pub sense_index: usize,
    pub target_anchor: Vec<f64>,
    pub source_anchor: Vec<f64>,
    /// Number of pairs averaged into the anchors.
    pub support: usize,
}

/// Column-aligned sense anchors in (type, sense_index) order.
#[derive(Debug, Clone, Default)]
pub struct AnchorPairSet {
    pub dim: usize,
    pub entries: Vec<AnchorEntry>,
}

/// Derive one anchor pair per type (word level) or per discovered sense
/// (sense level).
///
/// At sense level, only types observed strictly more than `cfg.min_count`
/// times are clustered; the k search runs from `k_min` to `k_max` (further
/// capped at `n / min_cluster_size`), the elbow rule picks k, and clusters
/// smaller than `min_cluster_size` merge into the nearest surviving
/// cluster. Everything else falls back to the word-level mean.
pub fn derive_sense_anchors(
    coll: &TypeCollection,
    cfg: &ClusteringConfig,
    level: Level,
) -> Result<AnchorPairSet> {
    cfg.validate()?;
    if coll.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let types: Vec<(&String, &crate::corpus::TypeEntry)> = coll.iter().collect();
    let per_type: Result<Vec<Vec<AnchorEntry>>> = types
        .par_iter()
        .map(|(name, entry)| anchors_for_type(name, entry, cfg, level))
        .collect();
    let entries: Vec<AnchorEntry> = per_type?.into_iter().flatten().collect();
    Ok(AnchorPairSet {
        dim: coll.dim(),
        entries,
    })
}

fn anchors_for_type(
    name: &str,
    entry: &crate::corpus::TypeEntry,
    cfg: &ClusteringConfig,
    level: Level,
) -> Result<Vec<AnchorEntry>> {
    let n = entry.pairs.len();
    let word_level = |sense_index: usize| AnchorEntry {
        type_name: name.to_string(),
        sense_index,
        target_anchor: mean_of(entry.pairs.iter().map(|p| p.0.as_slice())),
        source_anchor: mean_of(entry.pairs.iter().map(|p| p.1.as_slice())),
        support: n,
    };

    if level == Level::Word || entry.count <= cfg.min_count {
        return Ok(vec![word_level(0)]);
    }
    let k_hi = cfg.k_max.min(n / cfg.min_cluster_size).max(cfg.k_min);
    if cfg.k_min > n {
        return Ok(vec![word_level(0)]);
    }
    let k_hi = k_hi.min(n);

    let targets: Vec<&[f64]> = entry.pairs.iter().map(|p| p.0.as_slice()).collect();
    let type_cfg = ClusteringConfig {
        seed: per_type_seed(cfg.seed, name),
        ..cfg.clone()
    };
    let mut runs = Vec::new();
    for k in cfg.k_min..=k_hi {
        runs.push((k, kmeans(&targets, k, &type_cfg)?));
    }
    let curve: Vec<(usize, f64)> = runs.iter().map(|(k, r)| (*k, r.wcss)).collect();
    let chosen = if curve.len() == 1 {
        curve[0].0
    } else {
        select_k_elbow(&curve)?
    };
    let run = &runs.iter().find(|(k, _)| *k == chosen).expect("chosen k was run").1;

    // Membership per cluster, then merge undersized clusters into the
    // nearest survivor by centroid distance (ties -> lowest index).
    let k = chosen;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in run.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let survivors: Vec<usize> = (0..k)
        .filter(|&c| members[c].len() >= cfg.min_cluster_size)
        .collect();
    if survivors.is_empty() {
        return Ok(vec![word_level(0)]);
    }
    for c in 0..k {
        if members[c].is_empty() || members[c].len() >= cfg.min_cluster_size {
            continue;
        }
        let mut best = survivors[0];
        let mut best_d = f64::INFINITY;
        for &s in &survivors {
            let d = sq_dist(&run.centroids[c], &run.centroids[s]);
            if d < best_d {
                best_d = d;
                best = s;
            }
        }
        let moved = std::mem::take(&mut members[c]);
        members[best].extend(moved);
    }

    let mut out = Vec::new();
    for (sense_index, &c) in survivors.iter().enumerate() {
        let mut ids = members[c].clone();
        ids.sort_unstable();
        out.push(AnchorEntry {
            type_name: name.to_string(),
            sense_index,
            target_anchor: mean_of(ids.iter().map(|&i| entry.pairs[i].0.as_slice())),
            source_anchor: mean_of(ids.iter().map(|&i| entry.pairs[i].1.as_slice())),
            support: ids.len(),
        });
    }
    Ok(out)
}

fn mean_of<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for v in vectors {
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        count += 1;
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    acc
}

/// Stable per-type seed: FNV-1a of the type name folded into the base seed.
fn per_type_seed(base: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    base ^ h
}
