//! Frame cost functions, the DTW dynamic program, and parallel pairwise
//! distance-matrix computation.
//!
//! Distances are normalized by the warping path length, where the length
//! is the number of cells on the optimal path recovered by backtrace with
//! a deterministic tie-break (diagonal, then vertical, then horizontal).
//! Joint-space inputs are expected min-max normalized per dimension across
//! the task group; EEF positions stay in dataset units and rotations must
//! be unit xyzw quaternions (canonicalize first).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::canon::Quat;
use crate::model::{Episode, Kind, Role};

/// Errors raised by cost functions and distance computation.
#[derive(Debug, thiserror::Error)]
pub enum DtwError {
    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("empty sequence passed to dtw_distance")]
    EmptySequence,

    #[error("empty series group")]
    EmptyGroup,

    #[error("frame views mix cost modes or are missing {missing} data")]
    MixedModes { missing: String },

    #[error("non-unit quaternion (norm {norm}); canonicalize episodes first")]
    NonUnitQuaternion { norm: f64 },

    #[error("episode '{episode_id}': {message}")]
    BadEpisode { episode_id: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed distance matrix in {path}: {message}")]
    BadMatrix { path: PathBuf, message: String },
}

type Result<T> = std::result::Result<T, DtwError>;

/// Weights for the position, rotation, and gripper cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub w_pos: f64,
    pub w_rot: f64,
    pub w_grip: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        // The high gripper weight keeps open/close transitions from being
        // overwhelmed by continuous motion differences.
        CostWeights {
            w_pos: 1.0,
            w_rot: 1.0,
            w_grip: 100.0,
        }
    }
}

/// Which frame cost applies to a task group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Joint,
    Eef,
}

/// One frame's view for cost evaluation. Exactly one of `joints` or the
/// `eef_*` pair is populated, matching the cost mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameView {
    /// Min-max normalized joint vector (gripper dimension excluded).
    pub joints: Option<Vec<f64>>,
    pub eef_position: Option<[f64; 3]>,
    /// Unit quaternion, xyzw.
    pub eef_rotation: Option<Quat>,
    /// Normalized gripper state in [0, 1]; 0 when the group has none.
    pub gripper: f64,
}

/// Min-max normalizes a group of frame-major matrices to [0,1] per
/// dimension, with the min/max taken across the whole group. Constant
/// dimensions map to 0. Returns the normalized group and per-dim bounds.
pub fn minmax_normalize(group: &[Vec<Vec<f64>>]) -> Result<(Vec<Vec<Vec<f64>>>, Vec<(f64, f64)>)> {
    let dims = group
        .iter()
        .flat_map(|m| m.first())
        .map(|row| row.len())
        .next()
        .ok_or(DtwError::EmptyGroup)?;
    for m in group {
        for row in m {
            if row.len() != dims {
                return Err(DtwError::DimensionMismatch {
                    context: "minmax_normalize".into(),
                    left: row.len(),
                    right: dims,
                });
            }
        }
    }

    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
    for m in group {
        for row in m {
            for (d, v) in row.iter().enumerate() {
                bounds[d].0 = bounds[d].0.min(*v);
                bounds[d].1 = bounds[d].1.max(*v);
            }
        }
    }

    let normalized = group
        .iter()
        .map(|m| {
            m.iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(d, v)| {
                            let (lo, hi) = bounds[d];
                            if hi > lo {
                                (v - lo) / (hi - lo)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok((normalized, bounds))
}

/// Quaternion geodesic distance `2·arccos(|q1·q2|)` in radians. Invariant
/// under sign flips of either argument; inputs must be unit within 1e-6.
pub fn quat_geodesic(q1: Quat, q2: Quat) -> Result<f64> {
    for q in [q1, q2] {
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DtwError::NonUnitQuaternion { norm });
        }
    }
    Ok(geodesic_unchecked(q1, q2))
}

fn geodesic_unchecked(q1: Quat, q2: Quat) -> f64 {
    // 2·arccos(|q1·q2|) evaluated in its atan2 form: the same function,
    // but exact at identical or antipodal inputs where acos bottoms out
    // around 1e-8.
    let q2 = if q1.dot(q2) < 0.0 {
        Quat::new(-q2.x, -q2.y, -q2.z, -q2.w)
    } else {
        q2
    };
    let diff = (q1.x - q2.x)
        .hypot(q1.y - q2.y)
        .hypot(q1.z - q2.z)
        .hypot(q1.w - q2.w);
    let sum = (q1.x + q2.x)
        .hypot(q1.y + q2.y)
        .hypot(q1.z + q2.z)
        .hypot(q1.w + q2.w);
    4.0 * diff.atan2(sum)
}

/// Joint-space frame cost: `w_pos·‖j_x−j_y‖₂ + w_grip·|g_x−g_y|`.
pub fn frame_cost_joint(x: &FrameView, y: &FrameView, w: &CostWeights) -> Result<f64> {
    let (jx, jy) = match (&x.joints, &y.joints) {
        (Some(jx), Some(jy)) => (jx, jy),
        _ => {
            return Err(DtwError::MixedModes {
                missing: "joints".into(),
            })
        }
    };
    if jx.len() != jy.len() {
        return Err(DtwError::DimensionMismatch {
            context: "frame_cost_joint".into(),
            left: jx.len(),
            right: jy.len(),
        });
    }
    Ok(joint_cost_unchecked(jx, jy, x.gripper, y.gripper, w))
}

fn joint_cost_unchecked(jx: &[f64], jy: &[f64], gx: f64, gy: f64, w: &CostWeights) -> f64 {
    let dist: f64 = jx
        .iter()
        .zip(jy)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    w.w_pos * dist + w.w_grip * (gx - gy).abs()
}

/// EEF-space frame cost:
/// `w_pos·‖p_x−p_y‖₂ + w_rot·d_geo(q_x,q_y) + w_grip·|g_x−g_y|`.
pub fn frame_cost_eef(x: &FrameView, y: &FrameView, w: &CostWeights) -> Result<f64> {
    let (px, qx) = match (&x.eef_position, &x.eef_rotation) {
        (Some(p), Some(q)) => (p, q),
        _ => {
            return Err(DtwError::MixedModes {
                missing: "eef position/rotation".into(),
            })
        }
    };
    let (py, qy) = match (&y.eef_position, &y.eef_rotation) {
        (Some(p), Some(q)) => (p, q),
        _ => {
            return Err(DtwError::MixedModes {
                missing: "eef position/rotation".into(),
            })
        }
    };
    quat_geodesic(*qx, *qy)?;
    Ok(eef_cost_unchecked(px, *qx, py, *qy, x.gripper, y.gripper, w))
}

fn eef_cost_unchecked(
    px: &[f64; 3],
    qx: Quat,
    py: &[f64; 3],
    qy: Quat,
    gx: f64,
    gy: f64,
    w: &CostWeights,
) -> f64 {
    let dp = ((px[0] - py[0]).powi(2) + (px[1] - py[1]).powi(2) + (px[2] - py[2]).powi(2)).sqrt();
    w.w_pos * dp + w.w_rot * geodesic_unchecked(qx, qy) + w.w_grip * (gx - gy).abs()
}

fn resolve_mode(frames: &[FrameView]) -> Result<(CostMode, usize)> {
    let first = frames.first().ok_or(DtwError::EmptySequence)?;
    let mode = match (&first.joints, &first.eef_position, &first.eef_rotation) {
        (Some(_), None, None) => CostMode::Joint,
        (None, Some(_), Some(_)) => CostMode::Eef,
        _ => {
            return Err(DtwError::MixedModes {
                missing: "consistent joints or eef data".into(),
            })
        }
    };
    let dims = first.joints.as_ref().map(|j| j.len()).unwrap_or(0);
    for f in frames {
        match mode {
            CostMode::Joint => {
                let j = f.joints.as_ref().ok_or(DtwError::MixedModes {
                    missing: "joints".into(),
                })?;
                if j.len() != dims {
                    return Err(DtwError::DimensionMismatch {
                        context: "frame joints".into(),
                        left: j.len(),
                        right: dims,
                    });
                }
            }
            CostMode::Eef => {
                if f.eef_position.is_none() || f.eef_rotation.is_none() {
                    return Err(DtwError::MixedModes {
                        missing: "eef position/rotation".into(),
                    });
                }
                let q = f.eef_rotation.unwrap();
                let norm = q.norm();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(DtwError::NonUnitQuaternion { norm });
                }
            }
        }
    }
    Ok((mode, dims))
}

/// Path-length-normalized DTW distance between two frame sequences,
/// with the recovered optimal path length. The cumulative cost uses the
/// standard recurrence over diagonal/vertical/horizontal moves; the
/// backtrace prefers diagonal, then vertical, then horizontal on ties.
pub fn dtw_distance(a: &[FrameView], b: &[FrameView], w: &CostWeights) -> Result<(f64, usize)> {
    let (mode_a, dims_a) = resolve_mode(a)?;
    let (mode_b, dims_b) = resolve_mode(b)?;
    if mode_a != mode_b {
        return Err(DtwError::MixedModes {
            missing: "matching cost mode".into(),
        });
    }
    if mode_a == CostMode::Joint && dims_a != dims_b {
        return Err(DtwError::DimensionMismatch {
            context: "dtw_distance joints".into(),
            left: dims_a,
            right: dims_b,
        });
    }

    let cost = |x: &FrameView, y: &FrameView| -> f64 {
        match mode_a {
            CostMode::Joint => joint_cost_unchecked(
                x.joints.as_ref().unwrap(),
                y.joints.as_ref().unwrap(),
                x.gripper,
                y.gripper,
                w,
            ),
            CostMode::Eef => eef_cost_unchecked(
                x.eef_position.as_ref().unwrap(),
                x.eef_rotation.unwrap(),
                y.eef_position.as_ref().unwrap(),
                y.eef_rotation.unwrap(),
                x.gripper,
                y.gripper,
                w,
            ),
        }
    };

    let t = a.len();
    let u = b.len();
    let mut acc = vec![vec![0.0f64; u]; t];
    for i in 0..t {
        for j in 0..u {
            let c = cost(&a[i], &b[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[0][j - 1],
                (_, 0) => acc[i - 1][0],
                _ => acc[i - 1][j - 1].min(acc[i - 1][j]).min(acc[i][j - 1]),
            };
            acc[i][j] = c + best;
        }
    }

    // Backtrace to count the cells on the optimal path.
    let mut path_len = 1usize;
    let (mut i, mut j) = (t - 1, u - 1);
    while i > 0 || j > 0 {
        let (ni, nj) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[i - 1][j - 1];
            let vert = acc[i - 1][j];
            let horiz = acc[i][j - 1];
            let best = diag.min(vert).min(horiz);
            if diag == best {
                (i - 1, j - 1)
            } else if vert == best {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = ni;
        j = nj;
        path_len += 1;
    }

    Ok((acc[t - 1][u - 1] / path_len as f64, path_len))
}

/// Symmetric pairwise DTW distances over a task group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    fn check_shape(&self, path: &Path) -> Result<()> {
        let n = self.ids.len();
        if self.values.len() != n || self.values.iter().any(|row| row.len() != n) {
            return Err(DtwError::BadMatrix {
                path: path.to_path_buf(),
                message: "values shape does not match ids".into(),
            });
        }
        Ok(())
    }

    /// Writes the canonical JSON form.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = crate::model::to_canonical_json(self).map_err(|e| DtwError::BadMatrix {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        fs::write(path, text).map_err(|source| DtwError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DtwError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let m: DistanceMatrix = serde_json::from_str(&text).map_err(|e| DtwError::BadMatrix {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        m.check_shape(path)?;
        Ok(m)
    }

    /// Binary form: one JSON header line `{"ids":[...]}` followed by
    /// row-major little-endian f64 values.
    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| DtwError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io_err)?;
        let header = serde_json::json!({ "ids": self.ids });
        writeln!(file, "{header}").map_err(io_err)?;
        for row in &self.values {
            for v in row {
                file.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        Ok(())
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
        let path = path.as_ref();
        let io_err = |source| DtwError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::open(path).map_err(io_err)?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(io_err)?;

        #[derive(Deserialize)]
        struct Header {
            ids: Vec<String>,
        }
        let header: Header = serde_json::from_str(header.trim_end()).map_err(|e| {
            DtwError::BadMatrix {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        })?;
        let n = header.ids.len();
        let mut buf = vec![0u8; n * n * 8];
        reader.read_exact(&mut buf).map_err(io_err)?;
        let mut values = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let off = (i * n + j) * 8;
                values[i][j] = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            }
        }
        Ok(DistanceMatrix {
            ids: header.ids,
            values,
        })
    }
}

/// How frames are extracted from canonicalized episodes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Action field to compare. Defaults to the unique action field of the
    /// requested kind.
    #[serde(default)]
    pub field: Option<String>,
    /// Joint mode: treat the last dimension of the joint vector as the
    /// gripper state.
    #[serde(default)]
    pub gripper_last_dim: bool,
    /// EEF mode: name of a one-dimensional non-EEF action field holding
    /// the gripper state.
    #[serde(default)]
    pub gripper_field: Option<String>,
}

fn resolve_field<'a>(
    ep: &'a Episode,
    mode: CostMode,
    opts: &ExtractOptions,
) -> Result<&'a crate::model::FieldSeries> {
    let want_kind = match mode {
        CostMode::Joint => Kind::NonEef,
        CostMode::Eef => Kind::Eef,
    };
    if let Some(name) = &opts.field {
        let fs = ep.fields.get(name).ok_or_else(|| DtwError::BadEpisode {
            episode_id: ep.episode_id.clone(),
            message: format!("field '{name}' not found"),
        })?;
        if fs.spec.role != Role::Action || fs.spec.kind != want_kind {
            return Err(DtwError::BadEpisode {
                episode_id: ep.episode_id.clone(),
                message: format!("field '{name}' is not a {want_kind:?} action field"),
            });
        }
        return Ok(fs);
    }
    let mut candidates = ep.fields.iter().filter(|(name, fs)| {
        fs.spec.role == Role::Action
            && fs.spec.kind == want_kind
            && Some(name.as_str()) != opts.gripper_field.as_deref()
    });
    let first = candidates.next().ok_or_else(|| DtwError::BadEpisode {
        episode_id: ep.episode_id.clone(),
        message: format!("no {want_kind:?} action field"),
    })?;
    if candidates.next().is_some() {
        return Err(DtwError::BadEpisode {
            episode_id: ep.episode_id.clone(),
            message: "multiple candidate action fields; set options.field".into(),
        });
    }
    Ok(first.1)
}

/// Builds group-normalized frame views for every episode in a task group.
/// Joint values (and the EEF gripper field, when configured) are min-max
/// normalized across the group; EEF positions stay in dataset units.
pub fn extract_frames(
    group: &[Episode],
    mode: CostMode,
    opts: &ExtractOptions,
) -> Result<Vec<Vec<FrameView>>> {
    if group.is_empty() {
        return Err(DtwError::EmptyGroup);
    }
    match mode {
        CostMode::Joint => {
            let matrices: Vec<Vec<Vec<f64>>> = group
                .iter()
                .map(|ep| resolve_field(ep, mode, opts).map(|fs| fs.values.clone()))
                .collect::<Result<_>>()?;
            let (normalized, _) = minmax_normalize(&matrices)?;
            Ok(normalized
                .into_iter()
                .map(|m| {
                    m.into_iter()
                        .map(|mut row| {
                            let gripper = if opts.gripper_last_dim && !row.is_empty() {
                                row.pop().unwrap()
                            } else {
                                0.0
                            };
                            FrameView {
                                joints: Some(row),
                                eef_position: None,
                                eef_rotation: None,
                                gripper,
                            }
                        })
                        .collect()
                })
                .collect())
        }
        CostMode::Eef => {
            let grip_values: Option<Vec<Vec<f64>>> = match &opts.gripper_field {
                Some(name) => {
                    let matrices: Vec<Vec<Vec<f64>>> = group
                        .iter()
                        .map(|ep| {
                            ep.fields
                                .get(name)
                                .map(|fs| fs.values.clone())
                                .ok_or_else(|| DtwError::BadEpisode {
                                    episode_id: ep.episode_id.clone(),
                                    message: format!("gripper field '{name}' not found"),
                                })
                        })
                        .collect::<Result<_>>()?;
                    let (normalized, _) = minmax_normalize(&matrices)?;
                    Some(normalized.into_iter().map(|m| {
                        m.into_iter().map(|row| row.first().copied().unwrap_or(0.0)).collect()
                    }).collect())
                }
                None => None,
            };
            group
                .iter()
                .enumerate()
                .map(|(idx, ep)| {
                    let fs = resolve_field(ep, mode, opts)?;
                    if fs.spec.dims != 7 {
                        return Err(DtwError::BadEpisode {
                            episode_id: ep.episode_id.clone(),
                            message: format!(
                                "eef field '{}' has {} dims; canonicalize to quat first",
                                fs.spec.name, fs.spec.dims
                            ),
                        });
                    }
                    fs.values
                        .iter()
                        .enumerate()
                        .map(|(t, row)| {
                            let q = Quat::from_xyzw(&row[3..7]);
                            let norm = q.norm();
                            if (norm - 1.0).abs() > 1e-6 {
                                return Err(DtwError::NonUnitQuaternion { norm });
                            }
                            Ok(FrameView {
                                joints: None,
                                eef_position: Some([row[0], row[1], row[2]]),
                                eef_rotation: Some(q),
                                gripper: grip_values
                                    .as_ref()
                                    .map(|g| g[idx][t])
                                    .unwrap_or(0.0),
                            })
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Computes the full symmetric pairwise DTW distance matrix for a task
/// group. Cells are evaluated in parallel; the result is independent of
/// scheduling because every cell depends only on the immutable inputs.
pub fn pairwise_matrix(
    group: &[Episode],
    mode: CostMode,
    w: &CostWeights,
    opts: &ExtractOptions,
) -> Result<DistanceMatrix> {
    let frames = extract_frames(group, mode, opts)?;
    let n = group.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let distances: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&frames[i], &frames[j], w).map(|(d, _)| d))
        .collect::<Result<_>>()?;

    let mut values = vec![vec![0.0f64; n]; n];
    for (&(i, j), &d) in pairs.iter().zip(&distances) {
        values[i][j] = d;
        values[j][i] = d;
    }
    Ok(DistanceMatrix {
        ids: group.iter().map(|ep| ep.episode_id.clone()).collect(),
        values,
    })
}
