//! Shared fixtures and independent oracles for the integration tests.
//!
//! Everything here is deliberately written from first principles (path
//! enumeration, naive recomputation, definitional formulas) so it can
//! check the production implementations without sharing code paths.

use std::collections::BTreeMap;

use trajforge_core::canon::{rotvec_to_quat, Quat};
use trajforge_core::dtw::{frame_cost_joint, CostWeights, DistanceMatrix, FrameView};
use trajforge_core::model::{Episode, FieldSeries, FieldSpec, Kind, Prefix, Role, Suffix};

/// Deterministic pseudo-random stream for fixtures (64-bit LCG + shift).
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn next_usize(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        lo + (self.next_u64() % (hi_inclusive - lo + 1) as u64) as usize
    }

    /// Uniform random rotation as a unit quaternion (rejection-sampled
    /// direction in the 4-ball).
    pub fn next_rotation(&mut self) -> Quat {
        loop {
            let v = [
                self.next_range(-1.0, 1.0),
                self.next_range(-1.0, 1.0),
                self.next_range(-1.0, 1.0),
                self.next_range(-1.0, 1.0),
            ];
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                return Quat::new(v[0] / n, v[1] / n, v[2] / n, v[3] / n).canonicalized();
            }
        }
    }
}

/// Rotation angle between two unit quaternions via the atan2 form, which
/// resolves angles far below the ~1e-8 floor of `2·acos(|dot|)`.
pub fn geodesic_precise(a: Quat, b: Quat) -> f64 {
    let b = if a.dot(b) < 0.0 {
        Quat::new(-b.x, -b.y, -b.z, -b.w)
    } else {
        b
    };
    let diff = (a.x - b.x)
        .hypot(a.y - b.y)
        .hypot(a.z - b.z)
        .hypot(a.w - b.w);
    let sum = (a.x + b.x)
        .hypot(a.y + b.y)
        .hypot(a.z + b.z)
        .hypot(a.w + b.w);
    4.0 * diff.atan2(sum)
}

/// Brute-force DTW oracle: enumerates every monotone warping path from
/// (0,0) to (T−1,U−1), takes the minimum cumulative cost, and among
/// optimal paths picks the one the backtrace tie-break would pick
/// (lexicographically smallest reversed move sequence, diagonal <
/// vertical < horizontal). Returns (normalized distance, path length).
pub fn dtw_brute_force(a: &[FrameView], b: &[FrameView], w: &CostWeights) -> (f64, usize) {
    struct PathState {
        i: usize,
        j: usize,
        cost: f64,
        moves: Vec<u8>,
    }
    let cell = |i: usize, j: usize| frame_cost_joint(&a[i], &b[j], w).unwrap();
    let mut complete: Vec<PathState> = Vec::new();
    let mut stack = vec![PathState {
        i: 0,
        j: 0,
        cost: cell(0, 0),
        moves: vec![],
    }];
    while let Some(s) = stack.pop() {
        if s.i == a.len() - 1 && s.j == b.len() - 1 {
            complete.push(s);
            continue;
        }
        for (di, dj, mv) in [(1usize, 1usize, 0u8), (1, 0, 1), (0, 1, 2)] {
            let (ni, nj) = (s.i + di, s.j + dj);
            if ni < a.len() && nj < b.len() {
                let mut moves = s.moves.clone();
                moves.push(mv);
                stack.push(PathState {
                    i: ni,
                    j: nj,
                    cost: s.cost + cell(ni, nj),
                    moves,
                });
            }
        }
    }
    let min_cost = complete.iter().map(|s| s.cost).fold(f64::INFINITY, f64::min);
    let best = complete
        .iter()
        .filter(|s| (s.cost - min_cost).abs() <= 1e-12 * min_cost.max(1.0))
        .min_by_key(|s| {
            let mut rev = s.moves.clone();
            rev.reverse();
            rev
        })
        .unwrap();
    let len = best.moves.len() + 1;
    (min_cost / len as f64, len)
}

/// Naive O(N³) average-linkage oracle: recomputes every inter-cluster
/// mean from the original matrix at each step, with the same smallest-
/// (left,right) tie-break as the production code.
pub fn naive_average_linkage(d: &DistanceMatrix) -> Vec<(usize, usize, f64, usize)> {
    let n = d.ids.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut total = 0.0;
                for &i in &clusters[a].1 {
                    for &j in &clusters[b].1 {
                        total += d.values[i][j];
                    }
                }
                let avg = total / (clusters[a].1.len() * clusters[b].1.len()) as f64;
                let (lo, hi) = if clusters[a].0 < clusters[b].0 {
                    (clusters[a].0, clusters[b].0)
                } else {
                    (clusters[b].0, clusters[a].0)
                };
                let better = match best {
                    None => true,
                    Some(cur) => avg < cur.0 || (avg == cur.0 && (lo, hi) < (cur.1, cur.2)),
                };
                if better {
                    best = Some((avg, lo, hi));
                }
            }
        }
        let (height, left, right) = best.unwrap();
        let ai = clusters.iter().position(|c| c.0 == left).unwrap();
        let bi = clusters.iter().position(|c| c.0 == right).unwrap();
        let mut merged = clusters[ai].1.clone();
        merged.extend(clusters[bi].1.clone());
        let size = merged.len();
        clusters.retain(|c| c.0 != left && c.0 != right);
        clusters.push((n + step, merged));
        merges.push((left, right, height, size));
    }
    merges
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_default() += 1;
        *rows.entry(a[i]).or_default() += 1;
        *cols.entry(b[i]).or_default() += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let row_sum: f64 = rows.values().map(|&v| choose2(v)).sum();
    let col_sum: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = row_sum * col_sum / choose2(n as u64);
    let max = (row_sum + col_sum) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub fn joint_frame(values: &[f64]) -> FrameView {
    FrameView {
        joints: Some(values.to_vec()),
        eef_position: None,
        eef_rotation: None,
        gripper: 0.0,
    }
}

pub fn joint_spec(name: &str, role: Role, prefix: Prefix, dims: usize) -> FieldSpec {
    FieldSpec {
        name: name.into(),
        role,
        kind: Kind::NonEef,
        prefix,
        suffix: Suffix::Joint,
        dims,
    }
}

pub fn eef_spec(name: &str, role: Role, prefix: Prefix, suffix: Suffix) -> FieldSpec {
    FieldSpec {
        name: name.into(),
        role,
        kind: Kind::Eef,
        prefix,
        suffix,
        dims: 3 + suffix.rotation_dims(),
    }
}

pub fn episode_with_fields(
    id: &str,
    task: &str,
    fields: Vec<(FieldSpec, Vec<Vec<f64>>)>,
) -> Episode {
    let frame_count = fields.first().map(|(_, v)| v.len()).unwrap_or(0);
    Episode {
        episode_id: id.into(),
        task_id: task.into(),
        fps: 30.0,
        raw_instruction: "do the task".into(),
        fg_instruction: None,
        fields: fields
            .into_iter()
            .map(|(spec, values)| (spec.name.clone(), FieldSeries { spec, values }))
            .collect(),
        frame_count,
        frame_stats: None,
        source_dataset: String::new(),
    }
}

/// Encodes a rotation (given as a rotation vector) plus position into one
/// EEF row for the requested suffix.
pub fn eef_row(pos: [f64; 3], rv: [f64; 3], suffix: Suffix) -> Vec<f64> {
    match suffix {
        Suffix::Rotvec => vec![pos[0], pos[1], pos[2], rv[0], rv[1], rv[2]],
        Suffix::Euler => vec![pos[0], pos[1], pos[2], rv[0], rv[1], rv[2]],
        Suffix::Quat => {
            let q = rotvec_to_quat(rv);
            vec![pos[0], pos[1], pos[2], q.x, q.y, q.z, q.w]
        }
        Suffix::Wxyz => {
            let q = rotvec_to_quat(rv);
            vec![pos[0], pos[1], pos[2], q.w, q.x, q.y, q.z]
        }
        Suffix::Joint => unreachable!("joint rows have no rotation code"),
    }
}

/// Builds the 10-episode fixture that covers all 20 legal tag tuples:
/// three joint episodes (abs/delta/rel actions) and seven EEF episodes
/// covering every state rotation code and all 12 EEF action tags.
pub fn mixed_tag_fixture() -> Vec<Episode> {
    let frames = 5usize;
    let mut episodes = Vec::new();

    // Joint episodes: state abs_joint with abs/delta/rel actions.
    for (i, prefix) in [Prefix::Abs, Prefix::Delta, Prefix::Rel].into_iter().enumerate() {
        let state: Vec<Vec<f64>> = (0..frames)
            .map(|t| vec![t as f64 * 0.1, 1.0 - t as f64 * 0.05, 0.5])
            .collect();
        let action: Vec<Vec<f64>> = (0..frames)
            .map(|t| vec![0.01 * t as f64, 0.02, -0.01])
            .collect();
        episodes.push(episode_with_fields(
            &format!("joint-{i}"),
            "task-joint",
            vec![
                (joint_spec("state", Role::State, Prefix::Abs, 3), state),
                (joint_spec("action", Role::Action, prefix, 3), action),
            ],
        ));
    }

    // EEF episodes: (state suffix, action tag list) per episode.
    let eef_plan: [(Suffix, &[(Prefix, Suffix)]); 7] = [
        (Suffix::Rotvec, &[(Prefix::Abs, Suffix::Rotvec), (Prefix::Delta, Suffix::Rotvec)]),
        (Suffix::Quat, &[(Prefix::Rel, Suffix::Rotvec), (Prefix::Abs, Suffix::Quat)]),
        (Suffix::Wxyz, &[(Prefix::Delta, Suffix::Quat), (Prefix::Rel, Suffix::Quat)]),
        (Suffix::Euler, &[(Prefix::Abs, Suffix::Wxyz), (Prefix::Delta, Suffix::Wxyz)]),
        (Suffix::Quat, &[(Prefix::Rel, Suffix::Wxyz), (Prefix::Abs, Suffix::Euler)]),
        (Suffix::Rotvec, &[(Prefix::Delta, Suffix::Euler)]),
        (Suffix::Euler, &[(Prefix::Rel, Suffix::Euler)]),
    ];
    for (i, (state_suffix, actions)) in eef_plan.into_iter().enumerate() {
        let state_rows: Vec<Vec<f64>> = (0..frames)
            .map(|t| {
                eef_row(
                    [0.1 * t as f64, 0.05, 0.3],
                    [0.0, 0.02 * t as f64, 0.1],
                    state_suffix,
                )
            })
            .collect();
        let mut fields = vec![(
            eef_spec("state.eef", Role::State, Prefix::Abs, state_suffix),
            state_rows,
        )];
        for (a, (prefix, suffix)) in actions.iter().enumerate() {
            let rows: Vec<Vec<f64>> = (0..frames)
                .map(|t| {
                    eef_row(
                        [0.01 * t as f64, -0.02, 0.005 * a as f64],
                        [0.03, 0.0, 0.01 * t as f64],
                        *suffix,
                    )
                })
                .collect();
            fields.push((
                eef_spec(&format!("action.{a}"), Role::Action, *prefix, *suffix),
                rows,
            ));
        }
        episodes.push(episode_with_fields(&format!("eef-{i}"), "task-eef", fields));
    }
    episodes
}

/// Planted-cluster fixture: `clusters` groups of `per_cluster` episodes
/// in joint mode, far apart between groups and close within. Returns the
/// episodes and the planted labels (in episode order).
pub fn planted_episodes(clusters: usize, per_cluster: usize) -> (Vec<Episode>, Vec<usize>) {
    let mut episodes = Vec::new();
    let mut labels = Vec::new();
    for c in 0..clusters {
        for m in 0..per_cluster {
            let frames = 5 + (m % 3);
            let base = 10.0 * c as f64;
            let jitter = 0.01 * (m + 1) as f64;
            let values: Vec<Vec<f64>> = (0..frames)
                .map(|t| vec![base + jitter + 0.001 * t as f64, base - jitter])
                .collect();
            episodes.push(episode_with_fields(
                &format!("c{c}m{m}"),
                "planted",
                vec![(joint_spec("action", Role::Action, Prefix::Abs, 2), values)],
            ));
            labels.push(c);
        }
    }
    (episodes, labels)
}
