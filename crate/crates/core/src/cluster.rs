//! Agglomerative clustering on DTW distance matrices, automatic cluster
//! count selection, medoids, and representative selection.
//!
//! Merge node ids follow the usual convention: leaves are `0..N`, the
//! merge at step `s` creates node `N + s`. Ties in the merge scan break
//! toward the smallest `(left, right)` id pair; all id-level tie-breaks
//! (cluster ordering, medoids, representative ranking) use episode-id
//! strings, so tie-free inputs produce the same result under input
//! permutation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dtw::{minmax_normalize, DistanceMatrix};
use crate::model::{Episode, Role};

/// Errors raised during clustering.
#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("empty cluster")]
    EmptyCluster,

    #[error("unknown episode id '{0}' in distance matrix")]
    UnknownId(String),

    #[error("missing quality score for episode '{0}'")]
    MissingScore(String),

    #[error(transparent)]
    Dtw(#[from] crate::dtw::DtwError),
}

type Result<T> = std::result::Result<T, ClusterError>;

/// One agglomerative merge. `new_id` is `N + step`.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub new_id: usize,
    pub size: usize,
}

/// Trajectory quality on [0,1] scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub episode_id: String,
    /// `exp(−mean‖second difference‖₂)` over min-max-normalized actions.
    pub smoothness: f64,
    /// Fraction of valid frames (1.0 without frame stats).
    pub validity: f64,
    pub combined: f64,
}

/// Relative weights combining smoothness and validity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityWeights {
    pub smoothness: f64,
    pub validity: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            smoothness: 0.5,
            validity: 0.5,
        }
    }
}

/// Cutoffs for representative selection: clusters at or above
/// `large_cluster_size` members yield three representatives, smaller
/// clusters two (capped by cluster size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepresentativeRules {
    pub large_cluster_size: usize,
}

impl Default for RepresentativeRules {
    fn default() -> Self {
        RepresentativeRules {
            large_cluster_size: 10,
        }
    }
}

/// Full clustering outcome for one task group.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub merges: Vec<MergeStep>,
    pub k: usize,
    pub labels: BTreeMap<String, usize>,
    pub medoids: BTreeMap<usize, String>,
    pub representatives: BTreeMap<usize, Vec<String>>,
}

/// Average-linkage agglomerative clustering via Lance-Williams updates:
/// `d(A∪B, C) = (|A|·d(A,C) + |B|·d(B,C)) / (|A|+|B|)`. Returns N−1
/// merges with non-decreasing heights.
pub fn average_linkage(d: &DistanceMatrix) -> Vec<MergeStep> {
    let n = d.len();
    if n <= 1 {
        return Vec::new();
    }
    let total = 2 * n - 1;
    // Distance table over all node ids that will ever exist.
    let mut dist = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = d.values[i][j];
        }
    }
    let mut size = vec![0usize; total];
    for s in size.iter_mut().take(n) {
        *s = 1;
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges: Vec<MergeStep> = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        // Smallest distance; ties break toward the smallest (left, right).
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let dv = dist[lo][hi];
                let candidate = (dv, lo, hi);
                best = match best {
                    None => Some(candidate),
                    Some(cur) => {
                        if dv < cur.0 || (dv == cur.0 && (lo, hi) < (cur.1, cur.2)) {
                            Some(candidate)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
        }
        let (height, left, right) = best.expect("at least two active clusters");
        let new_id = n + step;
        let new_size = size[left] + size[right];

        active.retain(|&x| x != left && x != right);
        for &c in &active {
            let updated = (size[left] as f64 * dist[left.min(c)][left.max(c)]
                + size[right] as f64 * dist[right.min(c)][right.max(c)])
                / new_size as f64;
            dist[c][new_id] = updated;
            dist[new_id][c] = updated;
        }
        active.push(new_id);
        size[new_id] = new_size;

        if let Some(prev) = merges.last() {
            assert!(
                height >= prev.height,
                "average-linkage heights must be non-decreasing ({} < {})",
                height,
                prev.height
            );
        }
        merges.push(MergeStep {
            left,
            right,
            height,
            new_id,
            size: new_size,
        });
    }
    merges
}

/// Selects the cluster count from the largest relative gap in merge
/// heights: with heights `h₁ ≤ … ≤ h_{N−1}`, the gap at position i is
/// `(h_{i+1} − h_i) / max(h_i, epsilon)`; `k = N − argmax`. Degenerate
/// cases (N ≤ 2, all heights equal) yield k = 1.
pub fn auto_k(merges: &[MergeStep], epsilon: f64) -> usize {
    let n = merges.len() + 1;
    if n <= 2 {
        return 1;
    }
    let heights: Vec<f64> = merges.iter().map(|m| m.height).collect();
    if heights.iter().all(|&h| h == heights[0]) {
        return 1;
    }
    let mut best_gap = f64::NEG_INFINITY;
    let mut best_i = 0usize;
    for i in 0..heights.len() - 1 {
        let gap = (heights[i + 1] - heights[i]) / heights[i].max(epsilon);
        if gap > best_gap {
            best_gap = gap;
            best_i = i;
        }
    }
    n - (best_i + 1)
}

/// Cuts the dendrogram into k clusters by undoing the last k−1 merges.
/// Cluster indices are assigned in order of each cluster's smallest
/// episode id.
pub fn cut(ids: &[String], merges: &[MergeStep], k: usize) -> Result<BTreeMap<String, usize>> {
    let n = ids.len();
    if k < 1 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    // Union-find over node ids, applying the first N−k merges.
    let total = 2 * n - k.min(n);
    let mut parent: Vec<usize> = (0..total.max(n)).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for merge in merges.iter().take(n - k) {
        let a = find(&mut parent, merge.left);
        let b = find(&mut parent, merge.right);
        parent[a] = merge.new_id;
        parent[b] = merge.new_id;
        if parent.len() <= merge.new_id {
            parent.resize(merge.new_id + 1, 0);
        }
        parent[merge.new_id] = merge.new_id;
    }

    let mut components: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for (leaf, id) in ids.iter().enumerate() {
        components.entry(find(&mut parent, leaf)).or_default().push(id);
    }
    // Order clusters by their lexicographically smallest member id.
    let mut clusters: Vec<Vec<&String>> = components.into_values().collect();
    clusters.sort_by_key(|members| members.iter().min().copied().cloned());

    let mut labels = BTreeMap::new();
    for (idx, members) in clusters.into_iter().enumerate() {
        for id in members {
            labels.insert(id.clone(), idx);
        }
    }
    Ok(labels)
}

/// The member minimizing summed distance to the rest of its cluster.
/// Ties break toward the lexicographically smallest id.
pub fn medoid(members: &[String], d: &DistanceMatrix) -> Result<String> {
    if members.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let indices: Vec<usize> = members
        .iter()
        .map(|id| d.index_of(id).ok_or_else(|| ClusterError::UnknownId(id.clone())))
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, &String)> = None;
    for (mi, &i) in indices.iter().enumerate() {
        let total: f64 = indices.iter().map(|&j| d.values[i][j]).sum();
        best = match best {
            None => Some((total, &members[mi])),
            Some((bt, bid)) => {
                if total < bt || (total == bt && members[mi] < *bid) {
                    Some((total, &members[mi]))
                } else {
                    Some((bt, bid))
                }
            }
        };
    }
    Ok(best.unwrap().1.clone())
}

/// Scores one canonicalized episode: smoothness from the mean second
/// difference of its min-max-normalized action values (1.0 for fewer than
/// three frames), validity from `frame_stats`.
pub fn quality_score(ep: &Episode, weights: &QualityWeights) -> QualityScore {
    let actions: Vec<Vec<f64>> = {
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); ep.frame_count];
        for (_, fs) in ep.fields_with_role(Role::Action) {
            for (t, row) in fs.values.iter().enumerate() {
                if t < rows.len() {
                    rows[t].extend_from_slice(row);
                }
            }
        }
        rows
    };
    let smoothness = if ep.frame_count < 3 || actions.first().map_or(true, |r| r.is_empty()) {
        1.0
    } else {
        let (normalized, _) =
            minmax_normalize(std::slice::from_ref(&actions)).expect("non-empty actions");
        let a = &normalized[0];
        let mut total = 0.0;
        for t in 1..a.len() - 1 {
            let norm2: f64 = (0..a[t].len())
                .map(|k| {
                    let dd = a[t + 1][k] - 2.0 * a[t][k] + a[t - 1][k];
                    dd * dd
                })
                .sum();
            total += norm2.sqrt();
        }
        (-(total / (a.len() - 2) as f64)).exp()
    };
    let validity = match &ep.frame_stats {
        Some(stats) if !stats.is_empty() => {
            stats.iter().filter(|s| s.valid).count() as f64 / stats.len() as f64
        }
        _ => 1.0,
    };
    let wsum = weights.smoothness + weights.validity;
    QualityScore {
        episode_id: ep.episode_id.clone(),
        smoothness,
        validity,
        combined: (weights.smoothness * smoothness + weights.validity * validity) / wsum,
    }
}

/// Picks representatives per cluster: three for clusters of at least
/// `large_cluster_size` members, otherwise two (capped by size). Members
/// rank by `0.5·(1 − d(x, medoid)/max_d) + 0.5·combined_quality`,
/// descending, ties toward the smaller id.
pub fn select_representatives(
    result: &mut ClusterResult,
    d: &DistanceMatrix,
    scores: &BTreeMap<String, QualityScore>,
    rules: &RepresentativeRules,
) -> Result<()> {
    let mut clusters: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, &label) in &result.labels {
        clusters.entry(label).or_default().push(id.clone());
    }

    result.medoids.clear();
    result.representatives.clear();
    for (label, members) in clusters {
        let center = medoid(&members, d)?;
        let ci = d.index_of(&center).unwrap();
        let max_d = members
            .iter()
            .map(|id| d.values[d.index_of(id).unwrap()][ci])
            .fold(0.0f64, f64::max);
        let mut ranked: Vec<(f64, &String)> = members
            .iter()
            .map(|id| {
                let quality = scores
                    .get(id)
                    .map(|s| s.combined)
                    .ok_or_else(|| ClusterError::MissingScore(id.clone()))?;
                let dist = d.values[d.index_of(id).unwrap()][ci];
                let proximity = if max_d > 0.0 { 1.0 - dist / max_d } else { 1.0 };
                Ok((0.5 * proximity + 0.5 * quality, id))
            })
            .collect::<Result<_>>()?;
        ranked.sort_by(|(sa, ida), (sb, idb)| {
            sb.partial_cmp(sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| ida.cmp(idb))
        });
        let count = if members.len() >= rules.large_cluster_size {
            3
        } else {
            2.min(members.len())
        };
        result.medoids.insert(label, center);
        result
            .representatives
            .insert(label, ranked.into_iter().take(count).map(|(_, id)| id.clone()).collect());
    }
    Ok(())
}

/// Runs the whole stage for one task group: linkage, auto-k, cut, medoids,
/// and representative selection.
pub fn cluster_task_group(
    d: &DistanceMatrix,
    scores: &BTreeMap<String, QualityScore>,
    epsilon: f64,
    rules: &RepresentativeRules,
) -> Result<ClusterResult> {
    let merges = average_linkage(d);
    let k = auto_k(&merges, epsilon);
    let labels = cut(&d.ids, &merges, k)?;
    let mut result = ClusterResult {
        merges,
        k,
        labels,
        medoids: BTreeMap::new(),
        representatives: BTreeMap::new(),
    };
    select_representatives(&mut result, d, scores, rules)?;
    Ok(result)
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MergeWire {
    left: usize,
    right: usize,
    height: f64,
    size: usize,
}

#[derive(Serialize, Deserialize)]
struct ClusterResultWire {
    k: usize,
    merges: Vec<MergeWire>,
    labels: BTreeMap<String, usize>,
    medoids: BTreeMap<usize, String>,
    representatives: BTreeMap<usize, Vec<String>>,
}

impl ClusterResult {
    pub fn to_json(&self) -> serde_json::Result<String> {
        let wire = ClusterResultWire {
            k: self.k,
            merges: self
                .merges
                .iter()
                .map(|m| MergeWire {
                    left: m.left,
                    right: m.right,
                    height: m.height,
                    size: m.size,
                })
                .collect(),
            labels: self.labels.clone(),
            medoids: self.medoids.clone(),
            representatives: self.representatives.clone(),
        };
        crate::model::to_canonical_json(&wire)
    }

    pub fn from_json(text: &str) -> serde_json::Result<ClusterResult> {
        let wire: ClusterResultWire = serde_json::from_str(text)?;
        let n = wire.labels.len();
        Ok(ClusterResult {
            merges: wire
                .merges
                .into_iter()
                .enumerate()
                .map(|(step, m)| MergeStep {
                    left: m.left,
                    right: m.right,
                    height: m.height,
                    new_id: n + step,
                    size: m.size,
                })
                .collect(),
            k: wire.k,
            labels: wire.labels,
            medoids: wire.medoids,
            representatives: wire.representatives,
        })
    }
}
