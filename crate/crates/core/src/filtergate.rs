//! Metadata-level episode filtering and the action-state DTW consistency
//! gate.
//!
//! The metadata filter drops episodes that are too short, dominated by
//! black frames, missing required fields, or carrying non-finite values.
//! The consistency gate compares the state sequence implied by the
//! recorded (canonicalized, absolute) actions against the recorded states
//! and rejects episodes whose path-normalized DTW distance exceeds a
//! threshold — either absolute or a per-dataset percentile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::canon::paired_state_field;
use crate::dtw::{self, CostWeights};
use crate::model::{DatasetManifest, Episode, Kind, Prefix};

/// Errors raised by the filter stage.
#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),

    #[error(transparent)]
    Canon(#[from] crate::canon::CanonError),

    #[error(transparent)]
    Dtw(#[from] crate::dtw::DtwError),

    #[error("episode '{episode_id}': {message}")]
    BadEpisode {
        episode_id: String,
        message: String,
    },

    #[error("percentile mode needs a non-empty distance map")]
    EmptyDistances,

    #[error("invalid filter rules: {0}")]
    BadRules(String),
}

type Result<T> = std::result::Result<T, FilterError>;

/// How the consistency threshold is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyMode {
    /// Drop episodes with distance > `consistency_value`.
    AbsoluteThreshold,
    /// Drop episodes above the `consistency_value`-th percentile of the
    /// dataset's distances (linear interpolation).
    Percentile,
}

/// Filtering thresholds for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    pub min_frames: usize,
    /// Fraction of black frames above which an episode is dropped.
    pub max_black_frame_fraction: f64,
    /// A frame with `mean_luma` below this (0–255 scale) counts as black.
    pub luma_threshold: f64,
    pub required_fields: Vec<String>,
    pub consistency_mode: ConsistencyMode,
    pub consistency_value: f64,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_frames: 1,
            max_black_frame_fraction: 1.0,
            luma_threshold: 10.0,
            required_fields: Vec::new(),
            consistency_mode: ConsistencyMode::Percentile,
            consistency_value: 95.0,
        }
    }
}

impl FilterRules {
    pub fn validate(&self) -> Result<()> {
        if self.min_frames < 1 {
            return Err(FilterError::BadRules("min_frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_black_frame_fraction) {
            return Err(FilterError::BadRules(
                "max_black_frame_fraction must lie in [0,1]".into(),
            ));
        }
        if self.consistency_mode == ConsistencyMode::Percentile
            && !(self.consistency_value > 0.0 && self.consistency_value <= 100.0)
        {
            return Err(FilterError::BadRules(
                "percentile must lie in (0,100]".into(),
            ));
        }
        Ok(())
    }
}

/// Why an episode was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooShort,
    BlackFrames,
    MissingField,
    InvalidValues,
    Inconsistent,
}

/// One dropped episode with the metric that triggered the drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedEpisode {
    pub episode_id: String,
    pub reason: DropReason,
    pub metric: f64,
}

/// Kept/dropped partition of the input episodes, sorted by episode id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedEpisode>,
}

impl FilterReport {
    fn finish(mut self) -> Self {
        self.kept.sort();
        self.dropped.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        self
    }

    /// Intersects two reports: kept by both, dropped by either (first
    /// report wins when both dropped an episode).
    pub fn merge(&self, other: &FilterReport) -> FilterReport {
        let other_kept: std::collections::BTreeSet<_> = other.kept.iter().collect();
        let mut out = FilterReport::default();
        for id in &self.kept {
            if other_kept.contains(id) {
                out.kept.push(id.clone());
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in self.dropped.iter().chain(&other.dropped) {
            if seen.insert(d.episode_id.clone()) {
                out.dropped.push(d.clone());
            }
        }
        out.finish()
    }
}

fn first_metadata_violation(ep: &Episode, rules: &FilterRules) -> Option<(DropReason, f64)> {
    if ep.frame_count < rules.min_frames {
        return Some((DropReason::TooShort, ep.frame_count as f64));
    }
    // Episodes without frame_stats skip the black-frame rule.
    if let Some(stats) = &ep.frame_stats {
        if !stats.is_empty() {
            let black = stats
                .iter()
                .filter(|s| s.mean_luma < rules.luma_threshold)
                .count();
            let fraction = black as f64 / stats.len() as f64;
            if fraction > rules.max_black_frame_fraction {
                return Some((DropReason::BlackFrames, fraction));
            }
        }
    }
    for required in &rules.required_fields {
        if !ep.fields.contains_key(required) {
            return Some((DropReason::MissingField, 0.0));
        }
    }
    let non_finite: usize = ep
        .fields
        .values()
        .map(|fs| {
            fs.values
                .iter()
                .flat_map(|row| row.iter())
                .filter(|v| !v.is_finite())
                .count()
        })
        .sum();
    if non_finite > 0 {
        return Some((DropReason::InvalidValues, non_finite as f64));
    }
    None
}

/// Applies the metadata rules to every episode in the manifest. Unreadable
/// episode files are fatal; rule violations are recorded per episode with
/// the first failing rule (in the order: too short, black frames, missing
/// field, invalid values).
pub fn metadata_filter(manifest: &DatasetManifest, rules: &FilterRules) -> Result<FilterReport> {
    rules.validate()?;
    let mut report = FilterReport::default();
    for entry in &manifest.episodes {
        let ep = manifest.load_episode(entry)?;
        match first_metadata_violation(&ep, rules) {
            Some((reason, metric)) => report.dropped.push(DroppedEpisode {
                episode_id: ep.episode_id,
                reason,
                metric,
            }),
            None => report.kept.push(ep.episode_id),
        }
    }
    Ok(report.finish())
}

/// Applies the metadata rules to already-loaded episodes.
pub fn metadata_filter_episodes(episodes: &[Episode], rules: &FilterRules) -> Result<FilterReport> {
    rules.validate()?;
    let mut report = FilterReport::default();
    for ep in episodes {
        match first_metadata_violation(ep, rules) {
            Some((reason, metric)) => report.dropped.push(DroppedEpisode {
                episode_id: ep.episode_id.clone(),
                reason,
                metric,
            }),
            None => report.kept.push(ep.episode_id.clone()),
        }
    }
    Ok(report.finish())
}

/// The absolute next-state targets implied by a canonicalized action
/// field: rows `0..T−1` of the action series, in the same representation
/// as the paired state (the final action frame has no successor state).
pub fn implied_state_sequence(ep: &Episode, action_field: &str) -> Result<Vec<Vec<f64>>> {
    let fs = ep
        .fields
        .get(action_field)
        .ok_or_else(|| FilterError::BadEpisode {
            episode_id: ep.episode_id.clone(),
            message: format!("field '{action_field}' not found"),
        })?;
    if fs.spec.prefix != Prefix::Abs {
        return Err(FilterError::BadEpisode {
            episode_id: ep.episode_id.clone(),
            message: format!("field '{action_field}' is not canonicalized (prefix != abs)"),
        });
    }
    paired_state_field(ep, action_field)?;
    if ep.frame_count < 2 {
        return Err(FilterError::BadEpisode {
            episode_id: ep.episode_id.clone(),
            message: "consistency needs at least 2 frames".into(),
        });
    }
    Ok(fs.values[..ep.frame_count - 1].to_vec())
}

/// Path-normalized DTW distance between the implied state sequence and
/// the recorded states `2..T`. Zero for a perfect log. Joint fields are
/// min-max normalized over the pair of sequences; EEF fields compare raw
/// positions and quaternion geodesics.
pub fn consistency_distance(
    ep: &Episode,
    action_field: &str,
    w: &CostWeights,
    gripper_last_dim: bool,
) -> Result<f64> {
    let implied = implied_state_sequence(ep, action_field)?;
    let state_name = paired_state_field(ep, action_field)?;
    let state = &ep.fields[state_name];
    let recorded = state.values[1..].to_vec();
    let kind = state.spec.kind;

    let make_views = |rows: Vec<Vec<f64>>| -> Vec<dtw::FrameView> {
        rows.into_iter()
            .map(|mut row| match kind {
                Kind::NonEef => {
                    let gripper = if gripper_last_dim && !row.is_empty() {
                        row.pop().unwrap()
                    } else {
                        0.0
                    };
                    dtw::FrameView {
                        joints: Some(row),
                        eef_position: None,
                        eef_rotation: None,
                        gripper,
                    }
                }
                Kind::Eef => dtw::FrameView {
                    joints: None,
                    eef_position: Some([row[0], row[1], row[2]]),
                    eef_rotation: Some(crate::canon::Quat::from_xyzw(&row[3..7])),
                    gripper: 0.0,
                },
            })
            .collect()
    };

    let (implied, recorded) = match kind {
        Kind::NonEef => {
            let (normalized, _) = dtw::minmax_normalize(&[implied, recorded])?;
            let mut it = normalized.into_iter();
            (it.next().unwrap(), it.next().unwrap())
        }
        Kind::Eef => (implied, recorded),
    };
    let (d, _) = dtw::dtw_distance(&make_views(implied), &make_views(recorded), w)?;
    Ok(d)
}

/// Computes consistency distances for a set of canonicalized episodes in
/// parallel, keyed by episode id.
pub fn consistency_distances(
    episodes: &[Episode],
    action_field: &str,
    w: &CostWeights,
    gripper_last_dim: bool,
) -> Result<BTreeMap<String, f64>> {
    let pairs: Vec<(String, f64)> = episodes
        .par_iter()
        .map(|ep| {
            consistency_distance(ep, action_field, w, gripper_last_dim)
                .map(|d| (ep.episode_id.clone(), d))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().collect())
}

/// The p-th percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Partitions episodes by their consistency distance. In absolute mode
/// the threshold is `consistency_value`; in percentile mode it is the
/// p-th percentile of the supplied distances.
pub fn consistency_filter(
    distances: &BTreeMap<String, f64>,
    rules: &FilterRules,
) -> Result<FilterReport> {
    rules.validate()?;
    let threshold = match rules.consistency_mode {
        ConsistencyMode::AbsoluteThreshold => rules.consistency_value,
        ConsistencyMode::Percentile => {
            let all: Vec<f64> = distances.values().copied().collect();
            percentile(&all, rules.consistency_value).ok_or(FilterError::EmptyDistances)?
        }
    };
    let mut report = FilterReport::default();
    for (id, &d) in distances {
        if d > threshold {
            report.dropped.push(DroppedEpisode {
                episode_id: id.clone(),
                reason: DropReason::Inconsistent,
                metric: d,
            });
        } else {
            report.kept.push(id.clone());
        }
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Episode, FieldSeries, FieldSpec, FrameStat, Role, Suffix};
    use std::collections::BTreeMap;

    fn joint_field(name: &str, role: Role, values: Vec<Vec<f64>>) -> (String, FieldSeries) {
        let dims = values[0].len();
        (
            name.to_string(),
            FieldSeries {
                spec: FieldSpec {
                    name: name.into(),
                    role,
                    kind: Kind::NonEef,
                    prefix: Prefix::Abs,
                    suffix: Suffix::Joint,
                    dims,
                },
                values,
            },
        )
    }

    fn episode_with(id: &str, fields: Vec<(String, FieldSeries)>, frames: usize) -> Episode {
        Episode {
            episode_id: id.into(),
            task_id: "t".into(),
            fps: 30.0,
            raw_instruction: String::new(),
            fg_instruction: None,
            fields: fields.into_iter().collect(),
            frame_count: frames,
            frame_stats: None,
            source_dataset: String::new(),
        }
    }

    /// States ramp linearly; actions are the exact next-frame states.
    fn perfect_log(id: &str, frames: usize) -> Episode {
        let states: Vec<Vec<f64>> = (0..frames).map(|t| vec![t as f64 * 0.1, 0.5]).collect();
        let actions: Vec<Vec<f64>> = (0..frames)
            .map(|t| {
                let next = (t + 1).min(frames - 1);
                states[next].clone()
            })
            .collect();
        episode_with(
            id,
            vec![
                joint_field("state", Role::State, states),
                joint_field("action", Role::Action, actions),
            ],
            frames,
        )
    }

    #[test]
    fn metadata_filter_drops_short_episodes() {
        let rules = FilterRules {
            min_frames: 10,
            ..FilterRules::default()
        };
        let eps = vec![perfect_log("short", 2), perfect_log("long", 12)];
        let report = metadata_filter_episodes(&eps, &rules).unwrap();
        assert_eq!(report.kept, vec!["long"]);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].reason, DropReason::TooShort);
        assert_eq!(report.dropped[0].metric, 2.0);
    }

    #[test]
    fn metadata_filter_drops_black_frames() {
        let rules = FilterRules {
            max_black_frame_fraction: 0.1,
            ..FilterRules::default()
        };
        let mut ep = perfect_log("dark", 10);
        ep.frame_stats = Some(
            (0..10)
                .map(|t| FrameStat {
                    mean_luma: if t < 4 { 2.0 } else { 120.0 },
                    valid: true,
                })
                .collect(),
        );
        let report = metadata_filter_episodes(&[ep], &rules).unwrap();
        assert_eq!(report.dropped[0].reason, DropReason::BlackFrames);
        assert!((report.dropped[0].metric - 0.4).abs() < 1e-12);
    }

    #[test]
    fn metadata_filter_skips_black_rule_without_stats_and_keeps_clean() {
        let rules = FilterRules {
            max_black_frame_fraction: 0.0,
            ..FilterRules::default()
        };
        let report = metadata_filter_episodes(&[perfect_log("clean", 8)], &rules).unwrap();
        assert_eq!(report.kept, vec!["clean"]);
    }

    #[test]
    fn metadata_filter_flags_missing_field_and_nan() {
        let rules = FilterRules {
            required_fields: vec!["action".into()],
            ..FilterRules::default()
        };
        let lonely = episode_with(
            "lonely",
            vec![joint_field("state", Role::State, vec![vec![0.0]; 3])],
            3,
        );
        let mut nan = perfect_log("nan", 5);
        nan.fields.get_mut("action").unwrap().values[2][0] = f64::NAN;
        let report = metadata_filter_episodes(&[lonely, nan], &rules).unwrap();
        let reasons: BTreeMap<_, _> = report
            .dropped
            .iter()
            .map(|d| (d.episode_id.clone(), d.reason))
            .collect();
        assert_eq!(reasons["lonely"], DropReason::MissingField);
        assert_eq!(reasons["nan"], DropReason::InvalidValues);
    }

    #[test]
    fn implied_sequence_equals_shifted_states_for_perfect_log() {
        let ep = perfect_log("e", 6);
        let implied = implied_state_sequence(&ep, "action").unwrap();
        let states = &ep.fields["state"].values;
        assert_eq!(implied.len(), 5);
        for t in 0..5 {
            assert_eq!(implied[t], states[t + 1]);
        }
    }

    #[test]
    fn implied_sequence_for_constant_action_is_constant() {
        let frames = 4;
        let states: Vec<Vec<f64>> = (0..frames).map(|t| vec![t as f64]).collect();
        let actions = vec![vec![9.0]; frames];
        let ep = episode_with(
            "e",
            vec![
                joint_field("state", Role::State, states),
                joint_field("action", Role::Action, actions),
            ],
            frames,
        );
        let implied = implied_state_sequence(&ep, "action").unwrap();
        assert_eq!(implied, vec![vec![9.0]; frames - 1]);
    }

    #[test]
    fn implied_sequence_matches_stepwise_propagation_of_deltas() {
        // Delta-origin oracle: propagate s[t] + Δ[t] by hand, then compare
        // with the canonicalized episode's implied sequence.
        let frames = 5;
        let states: Vec<Vec<f64>> = (0..frames).map(|t| vec![0.2 * t as f64, 1.0]).collect();
        let deltas: Vec<Vec<f64>> = (0..frames).map(|t| vec![0.05 * t as f64, -0.1]).collect();
        let mut ep = episode_with(
            "e",
            vec![
                joint_field("state", Role::State, states.clone()),
                joint_field("action", Role::Action, deltas.clone()),
            ],
            frames,
        );
        ep.fields.get_mut("action").unwrap().spec.prefix = Prefix::Delta;
        let canon = crate::canon::canonicalize_episode(&ep).unwrap();
        let implied = implied_state_sequence(&canon, "action").unwrap();
        for t in 0..frames - 1 {
            for k in 0..2 {
                assert!((implied[t][k] - (states[t][k] + deltas[t][k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_log_scores_zero_distance() {
        let ep = perfect_log("e", 8);
        let d = consistency_distance(&ep, "action", &CostWeights::default(), false).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn corruption_distance_is_positive_and_monotone() {
        let w = CostWeights::default();
        let mut last = 0.0;
        for offset in [0.1, 0.2, 0.4] {
            let mut ep = perfect_log("e", 8);
            ep.fields.get_mut("action").unwrap().values[3][0] += offset;
            let d = consistency_distance(&ep, "action", &w, false).unwrap();
            assert!(d > last, "offset {offset}: {d} <= {last}");
            last = d;
        }
    }

    #[test]
    fn corrupted_distance_matches_direct_dtw_call() {
        let w = CostWeights::default();
        let mut ep = perfect_log("e", 8);
        ep.fields.get_mut("action").unwrap().values[4][1] -= 0.3;
        let d = consistency_distance(&ep, "action", &w, false).unwrap();

        let implied = implied_state_sequence(&ep, "action").unwrap();
        let recorded = ep.fields["state"].values[1..].to_vec();
        let (normalized, _) = dtw::minmax_normalize(&[implied, recorded]).unwrap();
        let views: Vec<Vec<dtw::FrameView>> = normalized
            .iter()
            .map(|m| {
                m.iter()
                    .map(|row| dtw::FrameView {
                        joints: Some(row.clone()),
                        eef_position: None,
                        eef_rotation: None,
                        gripper: 0.0,
                    })
                    .collect()
            })
            .collect();
        let (expected, _) = dtw::dtw_distance(&views[0], &views[1], &w).unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn eef_consistency_uses_geodesic_costs() {
        // Perfect EEF log: action pose at t equals the state pose at t+1.
        let frames = 6;
        let pose = |t: usize| {
            let q = crate::canon::rotvec_to_quat([0.0, 0.0, 0.1 * t as f64]);
            vec![0.05 * t as f64, 0.0, 0.4, q.x, q.y, q.z, q.w]
        };
        let states: Vec<Vec<f64>> = (0..frames).map(pose).collect();
        let actions: Vec<Vec<f64>> = (0..frames).map(|t| pose((t + 1).min(frames - 1))).collect();
        let eef = |name: &str, role: Role, values: Vec<Vec<f64>>| {
            (
                name.to_string(),
                FieldSeries {
                    spec: FieldSpec {
                        name: name.into(),
                        role,
                        kind: Kind::Eef,
                        prefix: Prefix::Abs,
                        suffix: Suffix::Quat,
                        dims: 7,
                    },
                    values,
                },
            )
        };
        let mut ep = episode_with(
            "eef",
            vec![
                eef("state.eef", Role::State, states),
                eef("action.eef", Role::Action, actions),
            ],
            frames,
        );
        let w = CostWeights::default();
        assert_eq!(consistency_distance(&ep, "action.eef", &w, false).unwrap(), 0.0);

        // Rotating one action frame produces a geodesic-driven distance.
        let q = crate::canon::rotvec_to_quat([0.0, 0.0, 1.5]);
        ep.fields.get_mut("action.eef").unwrap().values[2][3..7]
            .copy_from_slice(&[q.x, q.y, q.z, q.w]);
        assert!(consistency_distance(&ep, "action.eef", &w, false).unwrap() > 0.0);
    }

    #[test]
    fn absolute_threshold_drops_above_tau() {
        let distances: BTreeMap<String, f64> =
            [("a".to_string(), 0.1), ("b".to_string(), 5.0)].into();
        let rules = FilterRules {
            consistency_mode: ConsistencyMode::AbsoluteThreshold,
            consistency_value: 1.0,
            ..FilterRules::default()
        };
        let report = consistency_filter(&distances, &rules).unwrap();
        assert_eq!(report.kept, vec!["a"]);
        assert_eq!(report.dropped[0].episode_id, "b");
        assert_eq!(report.dropped[0].reason, DropReason::Inconsistent);

        let lenient = FilterRules {
            consistency_value: 10.0,
            ..rules
        };
        assert!(consistency_filter(&distances, &lenient).unwrap().dropped.is_empty());
    }

    #[test]
    fn percentile_95_drops_exactly_the_top_of_twenty() {
        let distances: BTreeMap<String, f64> = (0..20)
            .map(|i| (format!("e{i:02}"), i as f64 * 0.05))
            .collect();
        let rules = FilterRules {
            consistency_mode: ConsistencyMode::Percentile,
            consistency_value: 95.0,
            ..FilterRules::default()
        };
        let report = consistency_filter(&distances, &rules).unwrap();
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].episode_id, "e19");
        assert_eq!(report.kept.len(), 19);
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let values = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(percentile(&values, 100.0), Some(3.0));
        assert_eq!(percentile(&values, 50.0), Some(1.5));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn raising_threshold_never_drops_previously_kept() {
        let distances: BTreeMap<String, f64> = (0..10)
            .map(|i| (format!("e{i}"), i as f64 * 0.3))
            .collect();
        let mut kept_below: Vec<String> = Vec::new();
        for tau in [0.5, 1.0, 2.0, 5.0] {
            let rules = FilterRules {
                consistency_mode: ConsistencyMode::AbsoluteThreshold,
                consistency_value: tau,
                ..FilterRules::default()
            };
            let report = consistency_filter(&distances, &rules).unwrap();
            for id in &kept_below {
                assert!(report.kept.contains(id), "tau={tau} dropped {id}");
            }
            kept_below = report.kept;
        }
    }

    #[test]
    fn filter_partition_is_order_independent() {
        let rules = FilterRules {
            min_frames: 5,
            ..FilterRules::default()
        };
        let eps = vec![perfect_log("b", 3), perfect_log("a", 10), perfect_log("c", 4)];
        let mut reversed = eps.clone();
        reversed.reverse();
        let r1 = metadata_filter_episodes(&eps, &rules).unwrap();
        let r2 = metadata_filter_episodes(&reversed, &rules).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn report_merge_intersects_kept() {
        let a = FilterReport {
            kept: vec!["x".into(), "y".into()],
            dropped: vec![DroppedEpisode {
                episode_id: "z".into(),
                reason: DropReason::TooShort,
                metric: 1.0,
            }],
        };
        let b = FilterReport {
            kept: vec!["y".into(), "z".into()],
            dropped: vec![DroppedEpisode {
                episode_id: "x".into(),
                reason: DropReason::Inconsistent,
                metric: 9.0,
            }],
        };
        let merged = a.merge(&b);
        assert_eq!(merged.kept, vec!["y"]);
        assert_eq!(merged.dropped.len(), 2);
    }
}
