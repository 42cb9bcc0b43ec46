//! Pipeline configuration: one JSON file, every field overridable on the
//! command line as `--section.key=value` (dotted path into the JSON
//! tree). Dedicated flags (`--manifest`, `--output-dir`, `--workers`,
//! `--seed`) win over dotted overrides, which win over the file.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use trajforge_core::cluster::{QualityWeights, RepresentativeRules};
use trajforge_core::dtw::{CostMode, CostWeights, ExtractOptions};
use trajforge_core::filtergate::FilterRules;
use trajforge_core::mixsample::MixtureSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwConfig {
    pub mode: CostMode,
    /// Action field to compare; defaults to the unique action field.
    pub field: Option<String>,
    pub gripper_last_dim: bool,
    pub gripper_field: Option<String>,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            mode: CostMode::Joint,
            field: None,
            gripper_last_dim: false,
            gripper_field: None,
        }
    }
}

impl DtwConfig {
    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            field: self.field.clone(),
            gripper_last_dim: self.gripper_last_dim,
            gripper_field: self.gripper_field.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Epsilon guarding the relative-gap denominator in auto-k.
    pub epsilon: f64,
    pub quality_weights: QualityWeights,
    pub representatives: RepresentativeRules,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            epsilon: 1e-9,
            quality_weights: QualityWeights::default(),
            representatives: RepresentativeRules::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureConfig {
    pub fg_weight: f64,
    pub raw_weight: f64,
    pub seed: u64,
    /// Number of draws materialized by `mix`.
    pub draws: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            fg_weight: 1.0,
            raw_weight: 1.0,
            seed: 0,
            draws: 1000,
        }
    }
}

impl MixtureConfig {
    pub fn spec(&self) -> MixtureSpec {
        MixtureSpec {
            fg_weight: self.fg_weight,
            raw_weight: self.raw_weight,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub questions: Option<String>,
    pub predictions: Option<String>,
    pub alignments: Option<String>,
    pub scores: Option<String>,
    pub ranks: Option<String>,
    /// Interpret multiple-choice predictions in the shuffled letter space.
    pub shuffled: bool,
    /// Also report micro-averaged caption metrics.
    pub micro: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub manifest: Option<String>,
    pub output_dir: Option<String>,
    pub workers: Option<usize>,
    pub filter: FilterRules,
    pub weights: CostWeights,
    pub dtw: DtwConfig,
    pub cluster: ClusterConfig,
    pub mixture: MixtureConfig,
    pub scoring: ScoringConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("malformed config {}", path.display()))
    }
}

/// One `--section.key=value` override extracted from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: serde_json::Value,
}

/// Splits argv into clap-visible arguments and dotted config overrides.
/// An argument is an override iff it looks like `--a.b=value` (the key
/// contains a dot, so it can never collide with a dedicated flag).
pub fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<Override>) {
    let mut plain = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        let candidate = arg
            .strip_prefix("--")
            .and_then(|rest| rest.split_once('='))
            .filter(|(key, _)| key.contains('.') && !key.is_empty());
        match candidate {
            Some((key, raw)) => {
                let value = serde_json::from_str(raw)
                    .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
                overrides.push(Override {
                    path: key.split('.').map(String::from).collect(),
                    value,
                });
            }
            None => plain.push(arg),
        }
    }
    (plain, overrides)
}

/// Applies dotted overrides onto the config, then re-validates the result
/// by round-tripping through the typed struct.
pub fn apply_overrides(config: PipelineConfig, overrides: &[Override]) -> Result<PipelineConfig> {
    if overrides.is_empty() {
        return Ok(config);
    }
    let mut tree = serde_json::to_value(&config)?;
    for o in overrides {
        let (last, parents) = o
            .path
            .split_last()
            .context("empty override path")?;
        let pointer: String = parents.iter().map(|p| format!("/{p}")).collect();
        let parent = tree
            .pointer_mut(&pointer)
            .and_then(|v| v.as_object_mut())
            .with_context(|| format!("unknown config section in '{}'", o.path.join(".")))?;
        if !parent.contains_key(last) {
            bail!("unknown config key '{}'", o.path.join("."));
        }
        parent.insert(last.clone(), o.value.clone());
    }
    serde_json::from_value(tree).context("override produced an invalid config")
}
