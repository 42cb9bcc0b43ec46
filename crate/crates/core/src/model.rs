//! Domain types, dataset manifest schema, and episode file I/O.
//!
//! A dataset is a JSON manifest referencing one JSON file per episode.
//! Episodes carry per-frame state/action matrices for named fields, a raw
//! goal-level instruction, and optionally a fine-grained step-level
//! instruction stored as `{"Step1": "...", "Step2": "..."}`.
//!
//! All types are immutable after load and safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Schema version accepted by this crate.
pub const SCHEMA_VERSION: &str = "1.0";

/// Errors raised while loading or validating manifests and episodes.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("illegal field tag tuple for '{field}': role={role} kind={kind} prefix={prefix} suffix={suffix}")]
    IllegalTag {
        field: String,
        role: Role,
        kind: Kind,
        prefix: Prefix,
        suffix: Suffix,
    },

    #[error("dangling episode reference '{id}': {path} ({detail})")]
    DanglingReference {
        id: String,
        path: PathBuf,
        detail: String,
    },

    #[error("duplicate episode id '{0}' in manifest")]
    DuplicateEpisodeId(String),
}

type Result<T> = std::result::Result<T, ModelError>;

/// Whether a field records observed state or commanded action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    State,
    Action,
}

/// Kinematic kind: joint/gripper/hand coordinates vs end-effector pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    NonEef,
    Eef,
}

/// Temporal reference of the values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prefix {
    /// Absolute value in a global/world frame. Used by all states.
    Abs,
    /// Increment relative to the current state. Action only.
    Delta,
    /// Offset relative to the first frame. Action only.
    Rel,
}

/// Parameterization of the values (rotation code for EEF fields).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suffix {
    /// Joint / gripper / hand coordinates (non-EEF only).
    Joint,
    /// Rotation vector (axis-angle), 3 dims.
    Rotvec,
    /// Quaternion in xyzw order, 4 dims. Canonical form.
    Quat,
    /// Quaternion in wxyz (scalar-first) order, 4 dims.
    Wxyz,
    /// Euler angles in XYZ order, 3 dims.
    Euler,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::State => "state",
            Role::Action => "action",
        })
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::NonEef => "non_eef",
            Kind::Eef => "eef",
        })
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prefix::Abs => "abs",
            Prefix::Delta => "delta",
            Prefix::Rel => "rel",
        })
    }
}

impl fmt::Display for Suffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suffix::Joint => "joint",
            Suffix::Rotvec => "rotvec",
            Suffix::Quat => "quat",
            Suffix::Wxyz => "wxyz",
            Suffix::Euler => "euler",
        })
    }
}

impl Suffix {
    /// Number of values used by this rotation code (0 for joint).
    pub fn rotation_dims(self) -> usize {
        match self {
            Suffix::Joint => 0,
            Suffix::Rotvec | Suffix::Euler => 3,
            Suffix::Quat | Suffix::Wxyz => 4,
        }
    }
}

/// The ten annotation dimensions used for step slots, VQA questions, and
/// caption facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    ActionSequence,
    ActiveActor,
    TargetObject,
    InitialConfig,
    FinalConfig,
    ContactApproach,
    TrajectoryOrientation,
    ObjectInteraction,
    FailureRecovery,
    BodyMotion,
}

impl Dimension {
    /// All ten dimensions in a fixed order.
    pub const ALL: [Dimension; 10] = [
        Dimension::ActionSequence,
        Dimension::ActiveActor,
        Dimension::TargetObject,
        Dimension::InitialConfig,
        Dimension::FinalConfig,
        Dimension::ContactApproach,
        Dimension::TrajectoryOrientation,
        Dimension::ObjectInteraction,
        Dimension::FailureRecovery,
        Dimension::BodyMotion,
    ];

    /// The snake_case wire name.
    pub fn name(self) -> &'static str {
        match self {
            Dimension::ActionSequence => "action_sequence",
            Dimension::ActiveActor => "active_actor",
            Dimension::TargetObject => "target_object",
            Dimension::InitialConfig => "initial_config",
            Dimension::FinalConfig => "final_config",
            Dimension::ContactApproach => "contact_approach",
            Dimension::TrajectoryOrientation => "trajectory_orientation",
            Dimension::ObjectInteraction => "object_interaction",
            Dimension::FailureRecovery => "failure_recovery",
            Dimension::BodyMotion => "body_motion",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One ordered step of a fine-grained annotation with per-dimension slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAnnotation {
    pub step_index: u32,
    pub text: String,
    #[serde(default)]
    pub dimensions: BTreeMap<Dimension, String>,
}

/// Checks that step indices are ≥ 1 and strictly increasing.
pub fn validate_steps(steps: &[StepAnnotation]) -> std::result::Result<(), String> {
    let mut prev = 0u32;
    for step in steps {
        if step.step_index == 0 {
            return Err("step_index must be >= 1".into());
        }
        if step.step_index <= prev {
            return Err(format!(
                "step_index {} not strictly increasing after {}",
                step.step_index, prev
            ));
        }
        prev = step.step_index;
    }
    Ok(())
}

/// Declares a field's role, kinematics, temporal reference, rotation code,
/// and dimensionality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
    pub prefix: Prefix,
    pub suffix: Suffix,
    pub dims: usize,
}

impl FieldSpec {
    /// Whether the (role, kind, prefix, suffix) tuple is one of the 20
    /// legal combinations: states are always `abs` (5 tags), non-EEF
    /// actions use `joint` (3 tags), EEF actions combine any temporal
    /// prefix with any rotation code (12 tags).
    pub fn tag_is_legal(&self) -> bool {
        let rotation_ok = match self.kind {
            Kind::NonEef => self.suffix == Suffix::Joint,
            Kind::Eef => self.suffix != Suffix::Joint,
        };
        let prefix_ok = match self.role {
            Role::State => self.prefix == Prefix::Abs,
            Role::Action => true,
        };
        rotation_ok && prefix_ok
    }

    /// Whether `dims` matches the tag: EEF fields are 3 position dims plus
    /// the rotation code, non-EEF fields are any positive width.
    pub fn dims_are_legal(&self) -> bool {
        match self.kind {
            Kind::NonEef => self.dims >= 1,
            Kind::Eef => self.dims == 3 + self.suffix.rotation_dims(),
        }
    }

    fn check(&self, path: &Path) -> Result<()> {
        if !self.tag_is_legal() {
            return Err(ModelError::IllegalTag {
                field: self.name.clone(),
                role: self.role,
                kind: self.kind,
                prefix: self.prefix,
                suffix: self.suffix,
            });
        }
        if !self.dims_are_legal() {
            return Err(ModelError::Schema {
                path: path.to_path_buf(),
                message: format!(
                    "field '{}' has {} dims, incompatible with kind={} suffix={}",
                    self.name, self.dims, self.kind, self.suffix
                ),
            });
        }
        Ok(())
    }
}

/// A field's declaration plus its frame-major value matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub spec: FieldSpec,
    /// `frame_count` rows of `spec.dims` values each.
    pub values: Vec<Vec<f64>>,
}

/// Per-frame video statistics supplied as input metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStat {
    /// Mean luminance of the frame, 0–255.
    pub mean_luma: f64,
    pub valid: bool,
}

/// One trajectory: per-frame series per named field, instructions, metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    pub task_id: String,
    pub fps: f64,
    pub raw_instruction: String,
    /// Ordered fine-grained step texts (`Step1..StepN` in the file form).
    pub fg_instruction: Option<Vec<String>>,
    pub fields: BTreeMap<String, FieldSeries>,
    pub frame_count: usize,
    pub frame_stats: Option<Vec<FrameStat>>,
    pub source_dataset: String,
}

impl Episode {
    /// The fine-grained instruction as one text: step texts joined by spaces.
    pub fn fg_text(&self) -> Option<String> {
        self.fg_instruction.as_ref().map(|steps| steps.join(" "))
    }

    /// Fields with the given role, in name order.
    pub fn fields_with_role(&self, role: Role) -> impl Iterator<Item = (&String, &FieldSeries)> {
        self.fields.iter().filter(move |(_, fs)| fs.spec.role == role)
    }
}

/// A violation found by [`validate_episode`]. Violations are data, not
/// errors: an episode may accumulate several.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `frame_count` is zero.
    EmptyEpisode,
    /// `fps` is not strictly positive.
    BadFps { fps: f64 },
    /// A field's row count differs from the episode frame count.
    LengthMismatch {
        field: String,
        rows: usize,
        frame_count: usize,
    },
    /// A row's width differs from the declared dims.
    WidthMismatch {
        field: String,
        frame: usize,
        width: usize,
        dims: usize,
    },
    /// NaN or infinite value; names the first offending frame.
    NonFinite {
        field: String,
        frame: usize,
        count: usize,
    },
    /// Quaternion row whose norm is off unit by more than 1e-6; names the
    /// first offending frame.
    QuatNorm {
        field: String,
        frame: usize,
        norm: f64,
        count: usize,
    },
    /// Illegal (role, kind, prefix, suffix) tuple.
    IllegalTag { field: String },
    /// `frame_stats` length differs from the frame count.
    FrameStatsLength { rows: usize, frame_count: usize },
}

/// Checks every episode and field invariant, returning an empty list iff
/// all hold. Non-finite and quaternion-norm violations report the first
/// offending frame per field plus the total count.
pub fn validate_episode(ep: &Episode) -> Vec<Violation> {
    let mut out = Vec::new();
    if ep.frame_count == 0 {
        out.push(Violation::EmptyEpisode);
    }
    if !(ep.fps > 0.0) {
        out.push(Violation::BadFps { fps: ep.fps });
    }
    if let Some(stats) = &ep.frame_stats {
        if stats.len() != ep.frame_count {
            out.push(Violation::FrameStatsLength {
                rows: stats.len(),
                frame_count: ep.frame_count,
            });
        }
    }
    for (name, fs) in &ep.fields {
        if !fs.spec.tag_is_legal() || !fs.spec.dims_are_legal() {
            out.push(Violation::IllegalTag {
                field: name.clone(),
            });
        }
        if fs.values.len() != ep.frame_count {
            out.push(Violation::LengthMismatch {
                field: name.clone(),
                rows: fs.values.len(),
                frame_count: ep.frame_count,
            });
        }
        let mut bad_width = None;
        let mut non_finite: Option<(usize, usize)> = None; // (first, count)
        for (t, row) in fs.values.iter().enumerate() {
            if row.len() != fs.spec.dims && bad_width.is_none() {
                bad_width = Some((t, row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                match &mut non_finite {
                    Some((_, count)) => *count += 1,
                    None => non_finite = Some((t, 1)),
                }
            }
        }
        if let Some((frame, width)) = bad_width {
            out.push(Violation::WidthMismatch {
                field: name.clone(),
                frame,
                width,
                dims: fs.spec.dims,
            });
        }
        if let Some((frame, count)) = non_finite {
            out.push(Violation::NonFinite {
                field: name.clone(),
                frame,
                count,
            });
        }
        // Unit-norm applies to quaternion-coded rows; rotvec/euler encode
        // angle in the magnitude.
        if fs.spec.kind == Kind::Eef
            && matches!(fs.spec.suffix, Suffix::Quat | Suffix::Wxyz)
            && non_finite.is_none()
            && bad_width.is_none()
        {
            let mut bad_norm: Option<(usize, f64, usize)> = None;
            for (t, row) in fs.values.iter().enumerate() {
                if row.len() < 7 {
                    continue;
                }
                let norm = row[3..7].iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    match &mut bad_norm {
                        Some((_, _, count)) => *count += 1,
                        None => bad_norm = Some((t, norm, 1)),
                    }
                }
            }
            if let Some((frame, norm, count)) = bad_norm {
                out.push(Violation::QuatNorm {
                    field: name.clone(),
                    frame,
                    norm,
                    count,
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FieldWire {
    role: Role,
    kind: Kind,
    prefix: Prefix,
    suffix: Suffix,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EpisodeWire {
    episode_id: String,
    task_id: String,
    fps: f64,
    raw_instruction: String,
    fg_instruction: Option<BTreeMap<String, String>>,
    fields: BTreeMap<String, FieldWire>,
    frame_stats: Option<Vec<FrameStat>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_dataset: Option<String>,
}

/// Serializes any value as canonical JSON: keys sorted, pretty-printed,
/// shortest exact float representation, trailing newline. Used for every
/// file this crate writes so that reruns are byte-identical.
pub fn to_canonical_json<T: Serialize>(value: &T) -> std::result::Result<String, serde_json::Error> {
    // Routing through Value sorts object keys (serde_json's map is a BTreeMap).
    let value = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ModelError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_canonical<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_canonical_json(value).map_err(|source| ModelError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_step_key(key: &str) -> Option<u32> {
    key.strip_prefix("Step")?.parse().ok()
}

fn steps_from_wire(
    map: &BTreeMap<String, String>,
    path: &Path,
) -> Result<Vec<String>> {
    let mut indexed = Vec::with_capacity(map.len());
    for (key, text) in map {
        let n = parse_step_key(key).ok_or_else(|| ModelError::Schema {
            path: path.to_path_buf(),
            message: format!("fg_instruction key '{key}' is not of the form StepN"),
        })?;
        if n == 0 {
            return Err(ModelError::Schema {
                path: path.to_path_buf(),
                message: "fg_instruction steps start at Step1".into(),
            });
        }
        indexed.push((n, text.clone()));
    }
    indexed.sort_by_key(|(n, _)| *n);
    for (i, (n, _)) in indexed.iter().enumerate() {
        if *n as usize != i + 1 {
            return Err(ModelError::Schema {
                path: path.to_path_buf(),
                message: format!("fg_instruction steps are not contiguous at Step{n}"),
            });
        }
    }
    Ok(indexed.into_iter().map(|(_, text)| text).collect())
}

fn steps_to_wire(steps: &[String]) -> BTreeMap<String, String> {
    steps
        .iter()
        .enumerate()
        .map(|(i, text)| (format!("Step{}", i + 1), text.clone()))
        .collect()
}

/// Loads one episode file. `frame_count` is derived from the field series
/// (or `frame_stats` when the episode declares no fields); all series must
/// agree on it. NaN/Inf cannot appear in strict JSON, so value checks beyond
/// shape live in [`validate_episode`].
pub fn load_episode(path: impl AsRef<Path>) -> Result<Episode> {
    let path = path.as_ref();
    let wire: EpisodeWire = read_json(path)?;
    episode_from_wire(wire, path)
}

fn episode_from_wire(wire: EpisodeWire, path: &Path) -> Result<Episode> {
    if !(wire.fps > 0.0) {
        return Err(ModelError::Schema {
            path: path.to_path_buf(),
            message: format!("fps must be > 0, got {}", wire.fps),
        });
    }

    let mut fields = BTreeMap::new();
    let mut frame_count: Option<usize> = None;
    for (name, fw) in wire.fields {
        let rows = fw.values.len();
        match frame_count {
            None => frame_count = Some(rows),
            Some(n) if n != rows => {
                return Err(ModelError::Schema {
                    path: path.to_path_buf(),
                    message: format!(
                        "field '{name}' has {rows} frames, expected {n}"
                    ),
                });
            }
            _ => {}
        }
        let dims = fw.values.first().map(|r| r.len()).unwrap_or(0);
        for (t, row) in fw.values.iter().enumerate() {
            if row.len() != dims {
                return Err(ModelError::Schema {
                    path: path.to_path_buf(),
                    message: format!(
                        "field '{name}' frame {t} has width {}, expected {dims}",
                        row.len()
                    ),
                });
            }
        }
        let spec = FieldSpec {
            name: name.clone(),
            role: fw.role,
            kind: fw.kind,
            prefix: fw.prefix,
            suffix: fw.suffix,
            dims,
        };
        spec.check(path)?;
        fields.insert(
            name,
            FieldSeries {
                spec,
                values: fw.values,
            },
        );
    }

    let frame_count = match (frame_count, &wire.frame_stats) {
        (Some(n), _) => n,
        (None, Some(stats)) => stats.len(),
        (None, None) => {
            return Err(ModelError::Schema {
                path: path.to_path_buf(),
                message: "cannot determine frame count: no fields and no frame_stats".into(),
            });
        }
    };
    if frame_count == 0 {
        return Err(ModelError::Schema {
            path: path.to_path_buf(),
            message: "episode must have at least one frame".into(),
        });
    }
    if let Some(stats) = &wire.frame_stats {
        if stats.len() != frame_count {
            return Err(ModelError::Schema {
                path: path.to_path_buf(),
                message: format!(
                    "frame_stats has {} entries, expected {frame_count}",
                    stats.len()
                ),
            });
        }
    }

    let fg_instruction = match &wire.fg_instruction {
        Some(map) => Some(steps_from_wire(map, path)?),
        None => None,
    };

    Ok(Episode {
        episode_id: wire.episode_id,
        task_id: wire.task_id,
        fps: wire.fps,
        raw_instruction: wire.raw_instruction,
        fg_instruction,
        fields,
        frame_count,
        frame_stats: wire.frame_stats,
        source_dataset: wire.source_dataset.unwrap_or_default(),
    })
}

/// Writes one episode file in canonical form.
pub fn save_episode(ep: &Episode, path: impl AsRef<Path>) -> Result<()> {
    let wire = EpisodeWire {
        episode_id: ep.episode_id.clone(),
        task_id: ep.task_id.clone(),
        fps: ep.fps,
        raw_instruction: ep.raw_instruction.clone(),
        fg_instruction: ep.fg_instruction.as_deref().map(steps_to_wire),
        fields: ep
            .fields
            .iter()
            .map(|(name, fs)| {
                (
                    name.clone(),
                    FieldWire {
                        role: fs.spec.role,
                        kind: fs.spec.kind,
                        prefix: fs.spec.prefix,
                        suffix: fs.spec.suffix,
                        values: fs.values.clone(),
                    },
                )
            })
            .collect(),
        frame_stats: ep.frame_stats.clone(),
        source_dataset: if ep.source_dataset.is_empty() {
            None
        } else {
            Some(ep.source_dataset.clone())
        },
    };
    write_canonical(&wire, path.as_ref())
}

/// One manifest entry referencing an episode file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRef {
    pub id: String,
    /// Relative to the manifest's directory (or absolute).
    pub path: String,
    pub task_id: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestWire {
    dataset_name: String,
    schema_version: String,
    episodes: Vec<EpisodeRef>,
}

/// Dataset manifest: named episode file references plus the derived
/// task index.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub schema_version: String,
    pub episodes: Vec<EpisodeRef>,
    /// task_id → episode ids, in manifest order. Derived, not serialized.
    pub task_index: BTreeMap<String, Vec<String>>,
    /// Directory episode paths resolve against. Derived, not serialized.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Absolute path of one referenced episode file.
    pub fn episode_path(&self, entry: &EpisodeRef) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads one referenced episode, filling `source_dataset` from the
    /// manifest when the file does not carry its own.
    pub fn load_episode(&self, entry: &EpisodeRef) -> Result<Episode> {
        let path = self.episode_path(entry);
        let mut ep = load_episode(&path)?;
        if ep.episode_id != entry.id {
            return Err(ModelError::DanglingReference {
                id: entry.id.clone(),
                path,
                detail: format!("file declares episode_id '{}'", ep.episode_id),
            });
        }
        if ep.task_id != entry.task_id {
            return Err(ModelError::DanglingReference {
                id: entry.id.clone(),
                path,
                detail: format!(
                    "file declares task_id '{}', manifest says '{}'",
                    ep.task_id, entry.task_id
                ),
            });
        }
        if ep.source_dataset.is_empty() {
            ep.source_dataset = self.dataset_name.clone();
        }
        Ok(ep)
    }

    /// Loads every referenced episode in manifest order.
    pub fn load_all(&self) -> Result<Vec<Episode>> {
        self.episodes.iter().map(|e| self.load_episode(e)).collect()
    }
}

/// Loads and validates a manifest: schema version, unique episode ids,
/// and that every referenced file exists and parses with matching ids.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let wire: ManifestWire = read_json(path)?;
    if wire.schema_version != SCHEMA_VERSION {
        return Err(ModelError::Schema {
            path: path.to_path_buf(),
            message: format!(
                "unsupported schema_version '{}', expected '{SCHEMA_VERSION}'",
                wire.schema_version
            ),
        });
    }

    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut task_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for entry in &wire.episodes {
        if !seen.insert(entry.id.clone()) {
            return Err(ModelError::DuplicateEpisodeId(entry.id.clone()));
        }
        task_index
            .entry(entry.task_id.clone())
            .or_default()
            .push(entry.id.clone());
    }

    let manifest = DatasetManifest {
        dataset_name: wire.dataset_name,
        schema_version: wire.schema_version,
        episodes: wire.episodes,
        task_index,
        base_dir,
    };

    // Every reference must exist and parse; id/task mismatches surface here.
    for entry in &manifest.episodes {
        manifest.load_episode(entry)?;
    }
    Ok(manifest)
}

/// Writes a manifest file in canonical form.
pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let wire = ManifestWire {
        dataset_name: manifest.dataset_name.clone(),
        schema_version: manifest.schema_version.clone(),
        episodes: manifest.episodes.clone(),
    };
    write_canonical(&wire, path.as_ref())
}
