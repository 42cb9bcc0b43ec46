//! Temporal-reference and rotation-encoding conversions producing the
//! canonical form: absolute coordinates with normalized xyzw quaternions.
//!
//! Conventions fixed by this module:
//! - Quaternions are xyzw with the w-hemisphere rule: if w < 0, all four
//!   components are negated. w == 0 is left as-is.
//! - Euler angles are intrinsic XYZ: the composed quaternion is
//!   `qx ⊗ qy ⊗ qz` under the Hamilton product.
//! - Delta rotations compose in the world frame (left multiplication by
//!   the delta).
//!
//! All functions are pure and safe to call concurrently.

use crate::model::{Episode, FieldSeries, Kind, Prefix, Role, Suffix};

/// Errors raised during conversion and canonicalization.
#[derive(Debug, thiserror::Error)]
pub enum CanonError {
    #[error("zero-norm quaternion in field '{field}' at frame {frame}")]
    ZeroNormQuaternion { field: String, frame: usize },

    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("sequence length mismatch: {context} ({left} vs {right})")]
    LengthMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("action field '{action_field}' has no paired state field")]
    MissingPairedState { action_field: String },

    #[error("action field '{action_field}' pairs ambiguously with state fields {candidates:?}")]
    AmbiguousPairedState {
        action_field: String,
        candidates: Vec<String>,
    },

    #[error("illegal field tag tuple for '{field}'")]
    UnknownTag { field: String },
}

type Result<T> = std::result::Result<T, CanonError>;

/// Unit quaternion in xyzw component order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quat { x, y, z, w }
    }

    pub fn from_xyzw(v: &[f64]) -> Self {
        Quat::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_xyzw(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Hamilton product `self ⊗ other` (apply `other` first when rotating).
    pub fn hamilton(self, other: Quat) -> Quat {
        let (x1, y1, z1, w1) = (self.x, self.y, self.z, self.w);
        let (x2, y2, z2, w2) = (other.x, other.y, other.z, other.w);
        Quat {
            x: w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            y: w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            z: w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            w: w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        }
    }

    /// Renormalizes unless already unit within 1e-12 (keeps canonical
    /// values bit-stable under repeated passes), then applies the
    /// w-hemisphere rule.
    pub fn canonicalized(self) -> Quat {
        let n2 = self.dot(self);
        let q = if (n2 - 1.0).abs() < 1e-12 {
            self
        } else {
            let n = n2.sqrt();
            Quat {
                x: self.x / n,
                y: self.y / n,
                z: self.z / n,
                w: self.w / n,
            }
        };
        if q.w < 0.0 {
            Quat {
                x: -q.x,
                y: -q.y,
                z: -q.z,
                w: -q.w,
            }
        } else {
            q
        }
    }
}

/// Position plus orientation, the EEF pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    /// Unit quaternion, xyzw, w-hemisphere normalized.
    pub rotation: Quat,
}

/// Component order of a raw 4-vector quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuatOrder {
    Xyzw,
    Wxyz,
}

/// Converts a rotation vector (axis-angle, radians) to a quaternion.
/// The angle is the vector magnitude; for magnitudes below 1e-12 the axis
/// is fixed to [1,0,0].
pub fn rotvec_to_quat(v: [f64; 3]) -> Quat {
    let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let axis = if angle < 1e-12 {
        [1.0, 0.0, 0.0]
    } else {
        [v[0] / angle, v[1] / angle, v[2] / angle]
    };
    let (s, c) = (angle / 2.0).sin_cos();
    Quat::new(axis[0] * s, axis[1] * s, axis[2] * s, c).canonicalized()
}

/// Inverse of [`rotvec_to_quat`]. Returns the zero vector for (near-)
/// identity rotations; the output angle lies in [0, π] for hemisphere-
/// normalized input.
pub fn quat_to_rotvec(q: Quat) -> [f64; 3] {
    let q = q.canonicalized();
    let sin_half = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    if sin_half < 1e-12 {
        return [0.0, 0.0, 0.0];
    }
    let angle = 2.0 * sin_half.atan2(q.w);
    [
        q.x / sin_half * angle,
        q.y / sin_half * angle,
        q.z / sin_half * angle,
    ]
}

fn axis_quat(axis: usize, angle: f64) -> Quat {
    let (s, c) = (angle / 2.0).sin_cos();
    match axis {
        0 => Quat::new(s, 0.0, 0.0, c),
        1 => Quat::new(0.0, s, 0.0, c),
        _ => Quat::new(0.0, 0.0, s, c),
    }
}

/// Converts intrinsic-XYZ Euler angles (radians) to a quaternion:
/// `qx ⊗ qy ⊗ qz`.
pub fn euler_to_quat(e: [f64; 3]) -> Quat {
    axis_quat(0, e[0])
        .hamilton(axis_quat(1, e[1]))
        .hamilton(axis_quat(2, e[2]))
        .canonicalized()
}

/// Inverse of [`euler_to_quat`]. At gimbal lock (pitch ±π/2) yaw is set to
/// zero and roll absorbs the free angle.
pub fn quat_to_euler(q: Quat) -> [f64; 3] {
    let q = q.canonicalized();
    let (x, y, z, w) = (q.x, q.y, q.z, q.w);
    // Rotation matrix entries for R = Rx(roll)·Ry(pitch)·Rz(yaw).
    let r00 = 1.0 - 2.0 * (y * y + z * z);
    let r01 = 2.0 * (x * y - z * w);
    let r02 = 2.0 * (x * z + y * w);
    let r10 = 2.0 * (x * y + z * w);
    let r11 = 1.0 - 2.0 * (x * x + z * z);
    let r12 = 2.0 * (y * z - x * w);
    let r22 = 1.0 - 2.0 * (x * x + y * y);

    let sp = r02.clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if sp.abs() < 1.0 - 1e-9 {
        [(-r12).atan2(r22), pitch, (-r01).atan2(r00)]
    } else {
        let roll = r10.atan2(r11);
        [if sp > 0.0 { roll } else { -roll }, pitch, 0.0]
    }
}

/// Permutes quaternion components into xyzw order and canonicalizes.
pub fn reorder_quat(q: [f64; 4], from: QuatOrder) -> Result<Quat> {
    let quat = match from {
        QuatOrder::Xyzw => Quat::new(q[0], q[1], q[2], q[3]),
        QuatOrder::Wxyz => Quat::new(q[1], q[2], q[3], q[0]),
    };
    if quat.norm() <= 1e-9 {
        return Err(CanonError::ZeroNormQuaternion {
            field: String::new(),
            frame: 0,
        });
    }
    Ok(quat.canonicalized())
}

fn check_same_dims(context: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CanonError::DimensionMismatch {
            context: context.into(),
            left: a,
            right: b,
        });
    }
    Ok(())
}

/// Converts delta actions to absolute next-state targets:
/// `out[t] = state[t] + delta[t]`.
pub fn delta_to_abs(state_seq: &[Vec<f64>], delta_seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if state_seq.len() != delta_seq.len() {
        return Err(CanonError::LengthMismatch {
            context: "delta_to_abs".into(),
            left: state_seq.len(),
            right: delta_seq.len(),
        });
    }
    state_seq
        .iter()
        .zip(delta_seq)
        .map(|(s, d)| {
            check_same_dims("delta_to_abs", s.len(), d.len())?;
            Ok(s.iter().zip(d).map(|(a, b)| a + b).collect())
        })
        .collect()
}

/// Converts absolute actions to first-frame-relative actions:
/// `out[t] = abs[t] − first_state`.
pub fn abs_to_rel(abs_seq: &[Vec<f64>], first_state: &[f64]) -> Result<Vec<Vec<f64>>> {
    abs_seq
        .iter()
        .map(|row| {
            check_same_dims("abs_to_rel", row.len(), first_state.len())?;
            Ok(row.iter().zip(first_state).map(|(a, b)| a - b).collect())
        })
        .collect()
}

/// Inverse of [`abs_to_rel`]: `out[t] = rel[t] + first_state`.
pub fn rel_to_abs(rel_seq: &[Vec<f64>], first_state: &[f64]) -> Result<Vec<Vec<f64>>> {
    rel_seq
        .iter()
        .map(|row| {
            check_same_dims("rel_to_abs", row.len(), first_state.len())?;
            Ok(row.iter().zip(first_state).map(|(a, b)| a + b).collect())
        })
        .collect()
}

/// Composes a delta pose with an absolute base pose. Positions add; the
/// delta rotation left-multiplies (world frame).
pub fn compose_pose(base: &Pose, delta: &Pose) -> Pose {
    Pose {
        position: [
            base.position[0] + delta.position[0],
            base.position[1] + delta.position[1],
            base.position[2] + delta.position[2],
        ],
        rotation: delta.rotation.hamilton(base.rotation).canonicalized(),
    }
}

/// Resolves the state field paired with an action field. Names pair by
/// swapping the first `action` token for `state` (`action.left_eef` ↔
/// `state.left_eef`); failing that, a unique state field of the same kind
/// (and same dims, for non-EEF fields) is accepted.
pub fn paired_state_field<'a>(ep: &'a Episode, action_field: &str) -> Result<&'a str> {
    let action = ep
        .fields
        .get(action_field)
        .filter(|fs| fs.spec.role == Role::Action)
        .ok_or_else(|| CanonError::MissingPairedState {
            action_field: action_field.into(),
        })?;

    if let Some(swapped) = swap_role_token(action_field) {
        if let Some(fs) = ep.fields.get(&swapped) {
            if fs.spec.role == Role::State && fs.spec.kind == action.spec.kind {
                return Ok(ep.fields.get_key_value(&swapped).unwrap().0);
            }
        }
    }

    let candidates: Vec<&str> = ep
        .fields
        .iter()
        .filter(|(_, fs)| {
            fs.spec.role == Role::State
                && fs.spec.kind == action.spec.kind
                && (fs.spec.kind == Kind::Eef || fs.spec.dims == action.spec.dims)
        })
        .map(|(name, _)| name.as_str())
        .collect();
    match candidates.as_slice() {
        [] => Err(CanonError::MissingPairedState {
            action_field: action_field.into(),
        }),
        [single] => Ok(single),
        _ => Err(CanonError::AmbiguousPairedState {
            action_field: action_field.into(),
            candidates: candidates.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

fn swap_role_token(name: &str) -> Option<String> {
    name.find("action")
        .map(|pos| format!("{}state{}", &name[..pos], &name[pos + "action".len()..]))
}

/// Splits an EEF row into position and rotation, converting the rotation
/// code to a canonical quaternion.
fn eef_row_to_pose(row: &[f64], suffix: Suffix, field: &str, frame: usize) -> Result<Pose> {
    let position = [row[0], row[1], row[2]];
    let rotation = match suffix {
        Suffix::Rotvec => rotvec_to_quat([row[3], row[4], row[5]]),
        Suffix::Euler => euler_to_quat([row[3], row[4], row[5]]),
        Suffix::Quat => {
            reorder_quat([row[3], row[4], row[5], row[6]], QuatOrder::Xyzw).map_err(|_| {
                CanonError::ZeroNormQuaternion {
                    field: field.into(),
                    frame,
                }
            })?
        }
        Suffix::Wxyz => {
            reorder_quat([row[3], row[4], row[5], row[6]], QuatOrder::Wxyz).map_err(|_| {
                CanonError::ZeroNormQuaternion {
                    field: field.into(),
                    frame,
                }
            })?
        }
        Suffix::Joint => {
            return Err(CanonError::UnknownTag {
                field: field.into(),
            })
        }
    };
    Ok(Pose { position, rotation })
}

fn pose_to_row(pose: &Pose) -> Vec<f64> {
    let q = pose.rotation;
    vec![
        pose.position[0],
        pose.position[1],
        pose.position[2],
        q.x,
        q.y,
        q.z,
        q.w,
    ]
}

fn eef_series_to_poses(fs: &FieldSeries) -> Result<Vec<Pose>> {
    fs.values
        .iter()
        .enumerate()
        .map(|(t, row)| eef_row_to_pose(row, fs.spec.suffix, &fs.spec.name, t))
        .collect()
}

fn canonical_eef_series(fs: &FieldSeries, poses: &[Pose]) -> FieldSeries {
    let mut spec = fs.spec.clone();
    spec.prefix = Prefix::Abs;
    spec.suffix = Suffix::Quat;
    spec.dims = 7;
    FieldSeries {
        spec,
        values: poses.iter().map(pose_to_row).collect(),
    }
}

/// Canonicalizes an episode: every action field becomes `abs`, every EEF
/// rotation becomes a unit xyzw quaternion (w ≥ 0), and state fields keep
/// their values apart from rotation re-encoding. Idempotent bit-for-bit.
pub fn canonicalize_episode(ep: &Episode) -> Result<Episode> {
    for (name, fs) in &ep.fields {
        if !fs.spec.tag_is_legal() {
            return Err(CanonError::UnknownTag {
                field: name.clone(),
            });
        }
    }

    let mut out = ep.clone();

    // States first: delta/rel actions resolve against canonical states.
    for (name, fs) in &ep.fields {
        if fs.spec.role != Role::State || fs.spec.kind != Kind::Eef {
            continue;
        }
        let poses = eef_series_to_poses(fs)?;
        out.fields
            .insert(name.clone(), canonical_eef_series(fs, &poses));
    }

    let action_names: Vec<String> = ep
        .fields_with_role(Role::Action)
        .map(|(name, _)| name.clone())
        .collect();
    for name in action_names {
        let fs = &ep.fields[&name];
        let canonical = match (fs.spec.kind, fs.spec.prefix) {
            (Kind::NonEef, Prefix::Abs) => None,
            (Kind::NonEef, Prefix::Delta) => {
                let state = &out.fields[paired_state_field(&out, &name)?];
                let values = delta_to_abs(&state.values, &fs.values)?;
                Some(FieldSeries {
                    spec: abs_spec(&fs.spec),
                    values,
                })
            }
            (Kind::NonEef, Prefix::Rel) => {
                let state = &out.fields[paired_state_field(&out, &name)?];
                let first = state.values.first().ok_or(CanonError::LengthMismatch {
                    context: "rel_to_abs: empty state".into(),
                    left: 0,
                    right: fs.values.len(),
                })?;
                let values = rel_to_abs(&fs.values, first)?;
                Some(FieldSeries {
                    spec: abs_spec(&fs.spec),
                    values,
                })
            }
            (Kind::Eef, prefix) => {
                let poses = eef_series_to_poses(fs)?;
                let poses = match prefix {
                    Prefix::Abs => poses,
                    Prefix::Delta => {
                        let state_name = paired_state_field(&out, &name)?.to_string();
                        let state = eef_series_to_poses(&out.fields[&state_name])?;
                        if state.len() != poses.len() {
                            return Err(CanonError::LengthMismatch {
                                context: format!("delta eef '{name}' vs state"),
                                left: poses.len(),
                                right: state.len(),
                            });
                        }
                        poses
                            .iter()
                            .zip(&state)
                            .map(|(d, s)| compose_pose(s, d))
                            .collect()
                    }
                    Prefix::Rel => {
                        let state_name = paired_state_field(&out, &name)?.to_string();
                        let state = eef_series_to_poses(&out.fields[&state_name])?;
                        let first = state.first().ok_or(CanonError::LengthMismatch {
                            context: format!("rel eef '{name}': empty state"),
                            left: 0,
                            right: poses.len(),
                        })?;
                        poses.iter().map(|r| compose_pose(first, r)).collect()
                    }
                };
                Some(canonical_eef_series(fs, &poses))
            }
        };
        if let Some(series) = canonical {
            out.fields.insert(name.clone(), series);
        }
    }
    Ok(out)
}

fn abs_spec(spec: &crate::model::FieldSpec) -> crate::model::FieldSpec {
    let mut out = spec.clone();
    out.prefix = Prefix::Abs;
    out
}
