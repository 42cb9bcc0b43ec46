//! Stage runners. Every stage reads its inputs from the config (or the
//! fixed-name outputs of earlier stages under the output directory) and
//! writes canonical JSON, so reruns on unchanged inputs are byte-identical
//! and `pipeline` equals running the stage subcommands in sequence.
//!
//! Fixed output names:
//!   validation_report.json, filter_metadata.json, consistency_distances.json,
//!   filter_consistency.json, filter_report.json,
//!   canonical/{manifest.json,episodes/*.json}, dtw/<task>.json,
//!   clusters/<task>.json, representatives.json, corpus_stats.json,
//!   mixture.jsonl, vqa_report.json, caption_report.json, correlation.json

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use trajforge_core::benchscore::{
    aggregate_captions, aggregate_captions_micro, caption_scores, parse_alignment_jsonl,
    rank_correlation, score_vqa, CaptionScores, VQAQuestion,
};
use trajforge_core::canon::canonicalize_episode;
use trajforge_core::cluster::{cluster_task_group, quality_score, QualityScore};
use trajforge_core::dtw::{pairwise_matrix, DistanceMatrix};
use trajforge_core::filtergate::{
    consistency_distances, metadata_filter_episodes, consistency_filter, FilterReport,
};
use trajforge_core::mixsample::{corpus_stats_episodes, sample_stream};
use trajforge_core::model::{
    load_manifest, save_episode, save_manifest, to_canonical_json, validate_episode,
    DatasetManifest, Episode, EpisodeRef, Role, SCHEMA_VERSION,
};

use crate::config::PipelineConfig;

pub struct Ctx {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let out = PathBuf::from(
            config
                .output_dir
                .clone()
                .unwrap_or_else(|| "out".to_string()),
        );
        fs::create_dir_all(&out)
            .with_context(|| format!("cannot create output dir {}", out.display()))?;
        Ok(Ctx { config, out })
    }

    fn input_manifest(&self) -> Result<DatasetManifest> {
        let path = self
            .config
            .manifest
            .as_ref()
            .context("no manifest configured (set --manifest or \"manifest\" in the config)")?;
        Ok(load_manifest(path)?)
    }

    fn canonical_manifest(&self) -> Result<DatasetManifest> {
        let path = self.out.join("canonical/manifest.json");
        if !path.exists() {
            bail!(
                "{} not found; run `trajforge canon` first",
                path.display()
            );
        }
        Ok(load_manifest(&path)?)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, to_canonical_json(value)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    fn read_report(&self, name: &str) -> Result<Option<FilterReport>> {
        let path = self.out.join(name);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        Ok(Some(serde_json::from_str(&text).with_context(|| {
            format!("malformed report {}", path.display())
        })?))
    }
}

/// Turns ids into path-safe file stems; collisions are an error.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn unique_stems<'a>(names: impl Iterator<Item = &'a str>) -> Result<BTreeMap<String, String>> {
    let mut by_stem: BTreeMap<String, String> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for name in names {
        let stem = sanitize(name);
        if let Some(existing) = by_stem.get(&stem) {
            if existing != name {
                bail!("ids '{existing}' and '{name}' collide after path sanitization ('{stem}')");
            }
        } else {
            by_stem.insert(stem.clone(), name.to_string());
        }
        out.insert(name.to_string(), stem);
    }
    Ok(out)
}

pub fn run_validate(ctx: &Ctx) -> Result<i32> {
    let manifest = ctx.input_manifest()?;
    let mut report: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut total = 0usize;
    for entry in &manifest.episodes {
        let ep = manifest.load_episode(entry)?;
        let violations = validate_episode(&ep);
        total += violations.len();
        report.insert(ep.episode_id.clone(), serde_json::to_value(&violations)?);
    }
    let path = ctx.write_json("validation_report.json", &report)?;
    println!(
        "validate: {} episodes, {} violations → {}",
        manifest.episodes.len(),
        total,
        path.display()
    );
    Ok(if total == 0 { 0 } else { 1 })
}

pub fn run_metadata_filter(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.input_manifest()?;
    let episodes = manifest.load_all()?;
    let no_stats = episodes.iter().filter(|e| e.frame_stats.is_none()).count();
    let report = metadata_filter_episodes(&episodes, &ctx.config.filter)?;
    let path = ctx.write_json("filter_metadata.json", &report)?;
    if no_stats > 0 {
        println!("filter: black-frame rule skipped for {no_stats} episodes without frame_stats");
    }
    println!(
        "filter: kept {} dropped {} → {}",
        report.kept.len(),
        report.dropped.len(),
        path.display()
    );
    Ok(())
}

pub fn run_canon(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.input_manifest()?;
    let kept: Option<BTreeSet<String>> = ctx
        .read_report("filter_metadata.json")?
        .map(|r| r.kept.into_iter().collect());
    let episodes_dir = ctx.out.join("canonical/episodes");
    fs::create_dir_all(&episodes_dir)?;

    let mut refs = Vec::new();
    let stems = unique_stems(manifest.episodes.iter().map(|e| e.id.as_str()))?;
    let mut count = 0usize;
    for entry in &manifest.episodes {
        if let Some(kept) = &kept {
            if !kept.contains(&entry.id) {
                continue;
            }
        }
        let ep = manifest.load_episode(entry)?;
        let canonical = canonicalize_episode(&ep)
            .with_context(|| format!("canonicalizing episode '{}'", entry.id))?;
        let file = format!("{}.json", stems[&entry.id]);
        save_episode(&canonical, episodes_dir.join(&file))?;
        refs.push(EpisodeRef {
            id: entry.id.clone(),
            path: format!("episodes/{file}"),
            task_id: entry.task_id.clone(),
        });
        count += 1;
    }
    let canonical_manifest = DatasetManifest {
        dataset_name: manifest.dataset_name.clone(),
        schema_version: SCHEMA_VERSION.into(),
        episodes: refs,
        task_index: BTreeMap::new(),
        base_dir: ctx.out.join("canonical"),
    };
    save_manifest(&canonical_manifest, ctx.out.join("canonical/manifest.json"))?;
    println!(
        "canon: wrote {count} canonical episodes → {}",
        ctx.out.join("canonical").display()
    );
    Ok(())
}

/// Resolves the action field for the consistency gate: the configured
/// `dtw.field` or the unique action field of the first episode.
fn resolve_action_field(ctx: &Ctx, episodes: &[Episode]) -> Result<String> {
    if let Some(field) = &ctx.config.dtw.field {
        return Ok(field.clone());
    }
    let first = episodes.first().context("no episodes to filter")?;
    let gripper = ctx.config.dtw.gripper_field.as_deref();
    let candidates: Vec<&String> = first
        .fields_with_role(Role::Action)
        .map(|(name, _)| name)
        .filter(|name| Some(name.as_str()) != gripper)
        .collect();
    match candidates.as_slice() {
        [one] => Ok((*one).clone()),
        [] => bail!("episode '{}' has no action field", first.episode_id),
        many => bail!(
            "multiple action fields {many:?}; set dtw.field in the config"
        ),
    }
}

pub fn run_consistency_filter(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.canonical_manifest()?;
    let episodes = manifest.load_all()?;
    if episodes.is_empty() {
        let report = FilterReport::default();
        ctx.write_json("filter_consistency.json", &report)?;
        ctx.write_json("filter_report.json", &report)?;
        println!("filter: no canonical episodes; empty consistency report");
        return Ok(());
    }
    let field = resolve_action_field(ctx, &episodes)?;

    // Single-frame episodes carry no consistency signal and pass through.
    let (eligible, skipped): (Vec<&Episode>, Vec<&Episode>) =
        episodes.iter().partition(|ep| ep.frame_count >= 2);
    let eligible_owned: Vec<Episode> = eligible.into_iter().cloned().collect();
    let distances = consistency_distances(
        &eligible_owned,
        &field,
        &ctx.config.weights,
        ctx.config.dtw.gripper_last_dim,
    )?;
    ctx.write_json("consistency_distances.json", &distances)?;

    let mut report = if distances.is_empty() {
        FilterReport::default()
    } else {
        consistency_filter(&distances, &ctx.config.filter)?
    };
    if !skipped.is_empty() {
        println!(
            "filter: {} single-frame episodes skipped the consistency gate",
            skipped.len()
        );
        report.kept.extend(skipped.iter().map(|e| e.episode_id.clone()));
        report.kept.sort();
    }
    ctx.write_json("filter_consistency.json", &report)?;

    let combined = match ctx.read_report("filter_metadata.json")? {
        Some(metadata) => metadata.merge(&report),
        None => report.clone(),
    };
    let path = ctx.write_json("filter_report.json", &combined)?;
    println!(
        "filter: consistency kept {} dropped {} (combined kept {}) → {}",
        report.kept.len(),
        report.dropped.len(),
        combined.kept.len(),
        path.display()
    );
    Ok(())
}

/// Final kept ids for the clustering stages: the combined report when the
/// gate ran, otherwise everything canonical.
fn final_kept(ctx: &Ctx, manifest: &DatasetManifest) -> Result<BTreeSet<String>> {
    Ok(match ctx.read_report("filter_report.json")? {
        Some(report) => report.kept.into_iter().collect(),
        None => manifest.episodes.iter().map(|e| e.id.clone()).collect(),
    })
}

pub fn run_dtw(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.canonical_manifest()?;
    let kept = final_kept(ctx, &manifest)?;
    let stems = unique_stems(manifest.task_index.keys().map(|s| s.as_str()))?;
    fs::create_dir_all(ctx.out.join("dtw"))?;

    let mut written = 0usize;
    for (task, ids) in &manifest.task_index {
        let group: Vec<Episode> = manifest
            .episodes
            .iter()
            .filter(|e| e.task_id == *task && kept.contains(&e.id))
            .map(|e| manifest.load_episode(e))
            .collect::<Result<_, _>>()?;
        if group.is_empty() {
            continue;
        }
        let matrix = pairwise_matrix(
            &group,
            ctx.config.dtw.mode,
            &ctx.config.weights,
            &ctx.config.dtw.extract_options(),
        )
        .with_context(|| format!("task '{task}' ({} episodes)", ids.len()))?;
        matrix.save_json(ctx.out.join(format!("dtw/{}.json", stems[task])))?;
        written += 1;
    }
    println!("dtw: wrote {written} task matrices → {}", ctx.out.join("dtw").display());
    Ok(())
}

#[derive(Serialize)]
struct TaskRepresentatives {
    clusters: BTreeMap<usize, Vec<String>>,
    selected: Vec<String>,
}

pub fn run_cluster(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.canonical_manifest()?;
    let stems = unique_stems(manifest.task_index.keys().map(|s| s.as_str()))?;
    fs::create_dir_all(ctx.out.join("clusters"))?;
    let by_id: BTreeMap<&String, &EpisodeRef> =
        manifest.episodes.iter().map(|e| (&e.id, e)).collect();

    // Independent task groups cluster in parallel; results assemble in
    // task order, so output is schedule-independent.
    let tasks: Vec<&String> = manifest
        .task_index
        .keys()
        .filter(|task| ctx.out.join(format!("dtw/{}.json", stems[task.as_str()])).exists())
        .collect();
    let clustered: Vec<(String, TaskRepresentatives, String)> = tasks
        .par_iter()
        .map(|task| {
            let matrix =
                DistanceMatrix::load_json(ctx.out.join(format!("dtw/{}.json", stems[task.as_str()])))?;
            let scores: BTreeMap<String, QualityScore> = matrix
                .ids
                .iter()
                .map(|id| {
                    let entry = by_id
                        .get(id)
                        .with_context(|| format!("matrix id '{id}' missing from manifest"))?;
                    let ep = manifest.load_episode(entry)?;
                    Ok((id.clone(), quality_score(&ep, &ctx.config.cluster.quality_weights)))
                })
                .collect::<Result<_>>()?;
            let result = cluster_task_group(
                &matrix,
                &scores,
                ctx.config.cluster.epsilon,
                &ctx.config.cluster.representatives,
            )?;
            let selected: Vec<String> = result
                .representatives
                .values()
                .flatten()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let json = result.to_json()?;
            Ok((
                task.to_string(),
                TaskRepresentatives {
                    clusters: result.representatives,
                    selected,
                },
                json,
            ))
        })
        .collect::<Result<_>>()?;

    let mut representatives: BTreeMap<String, TaskRepresentatives> = BTreeMap::new();
    for (task, reps, json) in clustered {
        fs::write(ctx.out.join(format!("clusters/{}.json", stems[&task])), json)?;
        representatives.insert(task, reps);
    }
    let path = ctx.write_json("representatives.json", &representatives)?;
    println!(
        "cluster: {} tasks clustered → {}",
        representatives.len(),
        path.display()
    );
    Ok(())
}

pub fn run_stats(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.input_manifest()?;
    let episodes = manifest.load_all()?;
    let stats = corpus_stats_episodes(&episodes);
    let path = ctx.write_json("corpus_stats.json", &stats)?;
    println!(
        "stats: {} episodes across {} sources → {}",
        stats.totals.trajectories,
        stats.per_source.len(),
        path.display()
    );
    Ok(())
}

pub fn run_mix(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.input_manifest()?;
    let episodes = manifest.load_all()?;
    let fg: Vec<&Episode> = episodes.iter().filter(|e| e.fg_instruction.is_some()).collect();
    let raw: Vec<&Episode> = episodes.iter().collect();
    let spec = ctx.config.mixture.spec();
    let draws = sample_stream(&fg, &raw, &spec, ctx.config.mixture.draws as usize)?;

    let path = ctx.out.join("mixture.jsonl");
    let mut lines = String::new();
    for draw in &draws {
        let value = serde_json::to_value(draw)?;
        lines.push_str(&serde_json::to_string(&value)?);
        lines.push('\n');
    }
    fs::write(&path, lines)?;
    let fg_count = draws
        .iter()
        .filter(|d| matches!(d.variant, trajforge_core::mixsample::Variant::Fg))
        .count();
    println!(
        "mix: {} draws (FG fraction {:.3}, p_fg {:.3}) → {}",
        draws.len(),
        fg_count as f64 / draws.len().max(1) as f64,
        spec.p_fg(),
        path.display()
    );
    Ok(())
}

fn require<'a>(value: &'a Option<String>, what: &str) -> Result<&'a str> {
    value
        .as_deref()
        .with_context(|| format!("no {what} file configured"))
}

pub fn run_score_vqa(ctx: &Ctx) -> Result<()> {
    let questions_path = require(&ctx.config.scoring.questions, "questions")?;
    let predictions_path = require(&ctx.config.scoring.predictions, "predictions")?;
    let questions: Vec<VQAQuestion> =
        serde_json::from_str(&fs::read_to_string(questions_path)?)
            .with_context(|| format!("malformed questions file {questions_path}"))?;

    #[derive(serde::Deserialize)]
    struct Predictions {
        answers: BTreeMap<String, String>,
    }
    let predictions: Predictions =
        serde_json::from_str(&fs::read_to_string(predictions_path)?)
            .with_context(|| format!("malformed predictions file {predictions_path}"))?;

    let report = score_vqa(&predictions.answers, &questions, ctx.config.scoring.shuffled)?;
    for id in &report.unknown_prediction_ids {
        eprintln!("warning: prediction for unknown question_id '{id}' ignored");
    }
    let path = ctx.write_json("vqa_report.json", &report)?;
    println!(
        "score-vqa: {}/{} correct, overall {:.4} → {}",
        report.n_correct,
        report.n_questions,
        report.overall,
        path.display()
    );
    Ok(())
}

fn pct1(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

pub fn run_score_caption(ctx: &Ctx) -> Result<()> {
    let alignments_path = require(&ctx.config.scoring.alignments, "alignments")?;
    let records = parse_alignment_jsonl(&fs::read_to_string(alignments_path)?)?;
    if records.is_empty() {
        bail!("alignment file {alignments_path} has no records");
    }
    let mut per_sample: BTreeMap<String, CaptionScores> = BTreeMap::new();
    for record in &records {
        per_sample.insert(
            record.counts.sample_id.clone(),
            caption_scores(&record.counts)?,
        );
    }
    let scores: Vec<CaptionScores> = per_sample.values().cloned().collect();
    let corpus = aggregate_captions(&scores)?;

    #[derive(Serialize)]
    struct CaptionReport {
        per_sample: BTreeMap<String, CaptionScores>,
        corpus: CaptionScores,
        /// Corpus metrics as percentages at one decimal.
        corpus_pct: BTreeMap<&'static str, f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        corpus_micro: Option<CaptionScores>,
    }
    let corpus_pct = BTreeMap::from([
        ("consistency", pct1(corpus.consistency)),
        ("coverage", pct1(corpus.coverage)),
        ("anti_hallucination", pct1(corpus.anti_hallucination)),
        ("overall", pct1(corpus.overall)),
    ]);
    let corpus_micro = if ctx.config.scoring.micro {
        let counts: Vec<_> = records.iter().map(|r| r.counts.clone()).collect();
        Some(aggregate_captions_micro(&counts)?)
    } else {
        None
    };
    let report = CaptionReport {
        per_sample,
        corpus: corpus.clone(),
        corpus_pct,
        corpus_micro,
    };
    let path = ctx.write_json("caption_report.json", &report)?;
    println!(
        "score-caption: {} samples, overall {:.1}% → {}",
        records.len(),
        pct1(corpus.overall),
        path.display()
    );
    Ok(())
}

pub fn run_correlate(ctx: &Ctx) -> Result<()> {
    let scores_path = require(&ctx.config.scoring.scores, "scores")?;
    let ranks_path = require(&ctx.config.scoring.ranks, "ranks")?;
    let scores: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(scores_path)?)
        .with_context(|| format!("malformed scores file {scores_path}"))?;
    let ranks: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(ranks_path)?)
        .with_context(|| format!("malformed ranks file {ranks_path}"))?;
    let report = rank_correlation(&scores, &ranks)?;
    let path = ctx.write_json("correlation.json", &report)?;
    println!(
        "correlate: pearson {:?} spearman {:?} → {}",
        report.pearson,
        report.spearman,
        path.display()
    );
    Ok(())
}

/// Stages 1→4 chained: metadata filter, canonicalization, consistency
/// gate, per-task DTW matrices, clustering with representative selection.
pub fn run_pipeline(ctx: &Ctx) -> Result<()> {
    run_metadata_filter(ctx)?;
    run_canon(ctx)?;
    run_consistency_filter(ctx)?;
    run_dtw(ctx)?;
    run_cluster(ctx)?;
    println!("pipeline: complete → {}", ctx.out.display());
    Ok(())
}
