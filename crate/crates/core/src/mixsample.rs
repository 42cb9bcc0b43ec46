//! Seeded FG:Raw instruction-mixture construction and corpus statistics.
//!
//! Sampling is counter-based: draw `i` is a pure function of `(seed, i)`
//! through a splitmix64-style mixer, so streams are reproducible, prefix-
//! stable under extension, and safe to materialize in parallel.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::model::{DatasetManifest, Episode};

/// Errors raised by mixture construction and statistics.
#[derive(Debug, thiserror::Error)]
pub enum MixError {
    #[error("mixture weights must be non-negative with a positive sum")]
    BadWeights,

    #[error("{variant} weight is positive but the {variant} set is empty")]
    EmptySet { variant: &'static str },

    #[error("episode '{0}' is in the FG set but has no fg_instruction")]
    MissingFgInstruction(String),

    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

type Result<T> = std::result::Result<T, MixError>;

/// Sampling weights for the two instruction variants plus the stream seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub fg_weight: f64,
    pub raw_weight: f64,
    pub seed: u64,
}

impl MixtureSpec {
    /// Probability of drawing the fine-grained variant.
    pub fn p_fg(&self) -> f64 {
        self.fg_weight / (self.fg_weight + self.raw_weight)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fg_weight < 0.0 || self.raw_weight < 0.0 || self.fg_weight + self.raw_weight <= 0.0
        {
            return Err(MixError::BadWeights);
        }
        Ok(())
    }
}

/// Which instruction variant a draw selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fg,
    Raw,
}

/// One training-step draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDraw {
    pub step: u64,
    pub episode_id: String,
    pub variant: Variant,
    pub instruction: String,
}

const GOLDEN: u64 = 0x9E3779B97F4A7C15;
const LANE: u64 = 0xC2B2AE3D27D4EB4F;

/// Splitmix64 finalizer over `(seed, index, lane)`. Published so that
/// other implementations can reproduce the stream exactly.
pub fn mix64(seed: u64, index: u64, lane: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(GOLDEN))
        .wrapping_add(lane.wrapping_mul(LANE));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) from the top 53 bits.
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// One draw of the stream: variant from lane 0, episode index from lane 1.
fn draw_at(
    fg_set: &[&Episode],
    raw_set: &[&Episode],
    spec: &MixtureSpec,
    p_fg: f64,
    index: u64,
) -> MixtureDraw {
    let take_fg = match (fg_set.is_empty(), raw_set.is_empty()) {
        (_, true) => true,
        (true, _) => false,
        _ => unit_f64(mix64(spec.seed, index, 0)) < p_fg,
    };
    if take_fg {
        let ep = fg_set[(mix64(spec.seed, index, 1) % fg_set.len() as u64) as usize];
        MixtureDraw {
            step: index,
            episode_id: ep.episode_id.clone(),
            variant: Variant::Fg,
            instruction: ep.fg_text().unwrap_or_default(),
        }
    } else {
        let ep = raw_set[(mix64(spec.seed, index, 1) % raw_set.len() as u64) as usize];
        MixtureDraw {
            step: index,
            episode_id: ep.episode_id.clone(),
            variant: Variant::Raw,
            instruction: ep.raw_instruction.clone(),
        }
    }
}

/// Materializes `n` draws. Each draw independently selects FG with
/// probability `p_fg`, then an episode uniformly from the chosen set (raw
/// draws range over the full raw set even for episodes that also appear
/// in the FG set).
pub fn sample_stream(
    fg_set: &[&Episode],
    raw_set: &[&Episode],
    spec: &MixtureSpec,
    n: usize,
) -> Result<Vec<MixtureDraw>> {
    spec.validate()?;
    if spec.fg_weight > 0.0 && fg_set.is_empty() {
        return Err(MixError::EmptySet { variant: "fg" });
    }
    if spec.raw_weight > 0.0 && raw_set.is_empty() {
        return Err(MixError::EmptySet { variant: "raw" });
    }
    for ep in fg_set {
        if ep.fg_instruction.is_none() {
            return Err(MixError::MissingFgInstruction(ep.episode_id.clone()));
        }
    }
    let p_fg = spec.p_fg();
    // Weight-zero variants never draw, regardless of float rounding.
    let fg: &[&Episode] = if spec.fg_weight > 0.0 { fg_set } else { &[] };
    let raw: &[&Episode] = if spec.raw_weight > 0.0 { raw_set } else { &[] };
    Ok((0..n as u64)
        .map(|i| draw_at(fg, raw, spec, p_fg, i))
        .collect())
}

/// Whitespace word count. Fine-grained step lists count the concatenation
/// of all step texts.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Word count of an episode's fine-grained instruction (0 when absent).
pub fn fg_word_count(ep: &Episode) -> usize {
    ep.fg_instruction
        .as_ref()
        .map(|steps| steps.iter().map(|s| word_count(s)).sum())
        .unwrap_or(0)
}

/// Per-source corpus statistics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub trajectories: u64,
    /// Total fine-grained steps.
    pub steps: u64,
    pub avg_words_coarse: f64,
    pub avg_words_fg: f64,
    /// `avg_words_fg / avg_words_coarse`, full precision; null when the
    /// source has zero coarse words.
    pub density: Option<f64>,
    /// Density rounded to one decimal for report display.
    pub density_display: Option<f64>,
    /// Set when density is undefined (zero coarse words).
    pub zero_coarse_words: bool,
}

/// Corpus statistics: per-source rows plus pooled totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<String, SourceStats>,
    pub totals: SourceStats,
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn stats_row(episodes: &[&Episode]) -> SourceStats {
    let trajectories = episodes.len() as u64;
    let steps: u64 = episodes
        .iter()
        .map(|ep| ep.fg_instruction.as_ref().map(|s| s.len() as u64).unwrap_or(0))
        .sum();
    let coarse: usize = episodes.iter().map(|ep| word_count(&ep.raw_instruction)).sum();
    let fg: usize = episodes.iter().map(|ep| fg_word_count(ep)).sum();
    let denom = trajectories.max(1) as f64;
    let avg_words_coarse = coarse as f64 / denom;
    let avg_words_fg = fg as f64 / denom;
    let density = (coarse > 0).then(|| avg_words_fg / avg_words_coarse);
    SourceStats {
        trajectories,
        steps,
        avg_words_coarse,
        avg_words_fg,
        density,
        density_display: density.map(round1),
        zero_coarse_words: coarse == 0,
    }
}

/// Word counts and information density per source dataset and in total.
pub fn corpus_stats(manifest: &DatasetManifest) -> Result<CorpusStats> {
    let episodes = manifest.load_all()?;
    Ok(corpus_stats_episodes(&episodes))
}

/// Same as [`corpus_stats`], over already-loaded episodes.
pub fn corpus_stats_episodes(episodes: &[Episode]) -> CorpusStats {
    let mut by_source: BTreeMap<&str, Vec<&Episode>> = BTreeMap::new();
    for ep in episodes {
        by_source.entry(ep.source_dataset.as_str()).or_default().push(ep);
    }
    let per_source = by_source
        .iter()
        .map(|(source, eps)| (source.to_string(), stats_row(eps)))
        .collect();
    let all: Vec<&Episode> = episodes.iter().collect();
    CorpusStats {
        per_source,
        totals: stats_row(&all),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Episode;
    use std::collections::BTreeMap as Map;

    fn episode(id: &str, raw: &str, fg: Option<Vec<&str>>, source: &str) -> Episode {
        Episode {
            episode_id: id.into(),
            task_id: "t".into(),
            fps: 30.0,
            raw_instruction: raw.into(),
            fg_instruction: fg.map(|steps| steps.into_iter().map(String::from).collect()),
            fields: Map::new(),
            frame_count: 1,
            frame_stats: None,
            source_dataset: source.into(),
        }
    }

    fn sets(n_fg: usize, n_raw: usize) -> (Vec<Episode>, Vec<Episode>) {
        let fg: Vec<Episode> = (0..n_fg)
            .map(|i| {
                episode(
                    &format!("fg{i}"),
                    "pick up the cup",
                    Some(vec!["open gripper", "grasp the mug"]),
                    "s",
                )
            })
            .collect();
        let raw: Vec<Episode> = (0..n_raw)
            .map(|i| episode(&format!("raw{i}"), "pick up the cup", None, "s"))
            .collect();
        (fg, raw)
    }

    #[test]
    fn zero_raw_weight_draws_only_fg() {
        let (fg, raw) = sets(3, 5);
        let fg_refs: Vec<&Episode> = fg.iter().collect();
        let raw_refs: Vec<&Episode> = raw.iter().collect();
        let spec = MixtureSpec {
            fg_weight: 1.0,
            raw_weight: 0.0,
            seed: 7,
        };
        let draws = sample_stream(&fg_refs, &raw_refs, &spec, 500).unwrap();
        assert!(draws.iter().all(|d| d.variant == Variant::Fg));
        assert!(draws.iter().all(|d| d.instruction == "open gripper grasp the mug"));
    }

    #[test]
    fn two_to_one_ratio_hits_two_thirds() {
        let (fg, raw) = sets(4, 9);
        let fg_refs: Vec<&Episode> = fg.iter().collect();
        let raw_refs: Vec<&Episode> = raw.iter().collect();
        let spec = MixtureSpec {
            fg_weight: 2.0,
            raw_weight: 1.0,
            seed: 20260809,
        };
        let n = 300_000;
        let draws = sample_stream(&fg_refs, &raw_refs, &spec, n).unwrap();
        let frac = draws.iter().filter(|d| d.variant == Variant::Fg).count() as f64 / n as f64;
        assert!(
            (frac - 2.0 / 3.0).abs() < 0.005,
            "FG fraction {frac} off 2/3"
        );
    }

    #[test]
    fn one_to_one_ratio_hits_half() {
        let (fg, raw) = sets(2, 2);
        let fg_refs: Vec<&Episode> = fg.iter().collect();
        let raw_refs: Vec<&Episode> = raw.iter().collect();
        let spec = MixtureSpec {
            fg_weight: 1.0,
            raw_weight: 1.0,
            seed: 99,
        };
        let n = 100_000;
        let draws = sample_stream(&fg_refs, &raw_refs, &spec, n).unwrap();
        let frac = draws.iter().filter(|d| d.variant == Variant::Fg).count() as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "FG fraction {frac} off 0.5");
    }

    #[test]
    fn identical_seeds_reproduce_and_prefixes_are_stable() {
        let (fg, raw) = sets(3, 7);
        let fg_refs: Vec<&Episode> = fg.iter().collect();
        let raw_refs: Vec<&Episode> = raw.iter().collect();
        let spec = MixtureSpec {
            fg_weight: 1.0,
            raw_weight: 2.0,
            seed: 42,
        };
        let a = sample_stream(&fg_refs, &raw_refs, &spec, 1000).unwrap();
        let b = sample_stream(&fg_refs, &raw_refs, &spec, 1000).unwrap();
        assert_eq!(a, b);
        let extended = sample_stream(&fg_refs, &raw_refs, &spec, 2000).unwrap();
        assert_eq!(&extended[..1000], a.as_slice());
    }

    #[test]
    fn raw_draws_cover_the_full_raw_set() {
        // FG episodes are a subset of the raw set; raw draws must still
        // select uniformly over everything.
        let (fg, _) = sets(2, 0);
        let raw_all: Vec<Episode> = (0..4)
            .map(|i| episode(&format!("raw{i}"), "task", None, "s"))
            .chain(fg.iter().cloned())
            .collect();
        let fg_refs: Vec<&Episode> = fg.iter().collect();
        let raw_refs: Vec<&Episode> = raw_all.iter().collect();
        let spec = MixtureSpec {
            fg_weight: 0.0,
            raw_weight: 1.0,
            seed: 5,
        };
        let draws = sample_stream(&fg_refs, &raw_refs, &spec, 6000).unwrap();
        let mut counts: Map<&str, usize> = Map::new();
        for d in &draws {
            *counts.entry(d.episode_id.as_str()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (&id, &c) in &counts {
            assert!(c > 800, "{id} drawn only {c} times");
        }
    }

    #[test]
    fn empty_weighted_set_is_an_error() {
        let (fg, raw) = sets(0, 3);
        let fg_refs: Vec<&Episode> = fg.iter().collect();
        let raw_refs: Vec<&Episode> = raw.iter().collect();
        let spec = MixtureSpec {
            fg_weight: 1.0,
            raw_weight: 1.0,
            seed: 0,
        };
        assert!(matches!(
            sample_stream(&fg_refs, &raw_refs, &spec, 10),
            Err(MixError::EmptySet { variant: "fg" })
        ));
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("pick up the cup"), 4);
        assert_eq!(word_count("  padded   text "), 2);
        let ep = episode("e", "x", Some(vec!["open gripper", "grasp the mug"]), "s");
        assert_eq!(fg_word_count(&ep), 5);
    }

    #[test]
    fn density_matches_word_count_ratio() {
        // 10 episodes, 93 coarse words and 968 FG words in total: averages
        // 9.3 and 96.8, density 10.4 after display rounding.
        let mut episodes = Vec::new();
        let coarse_words = [9, 9, 9, 9, 9, 9, 9, 10, 10, 10];
        let fg_words = [96, 96, 97, 97, 97, 97, 97, 97, 97, 97];
        for i in 0..10 {
            let raw = vec!["w"; coarse_words[i]].join(" ");
            let fg = vec!["w"; fg_words[i]].join(" ");
            episodes.push(episode(&format!("e{i}"), &raw, Some(vec![&fg]), "total"));
        }
        let stats = corpus_stats_episodes(&episodes);
        let row = &stats.per_source["total"];
        assert!((row.avg_words_coarse - 9.3).abs() < 1e-12);
        assert!((row.avg_words_fg - 96.8).abs() < 1e-12);
        assert_eq!(row.density_display, Some(10.4));
        assert_eq!(stats.totals.density_display, Some(10.4));
    }

    #[test]
    fn degenerate_fg_equals_coarse() {
        let episodes = vec![episode("e", "a b c", Some(vec!["a b c"]), "s")];
        let stats = corpus_stats_episodes(&episodes);
        assert_eq!(stats.totals.density_display, Some(1.0));
    }

    #[test]
    fn zero_coarse_words_flags_source() {
        let episodes = vec![episode("e", "", Some(vec!["a b"]), "s")];
        let stats = corpus_stats_episodes(&episodes);
        assert_eq!(stats.totals.density, None);
        assert!(stats.totals.zero_coarse_words);
    }

    #[test]
    fn per_source_rows_are_separate() {
        let episodes = vec![
            episode("a", "one two", Some(vec!["x y z w"]), "src1"),
            episode("b", "one", Some(vec!["x y"]), "src2"),
        ];
        let stats = corpus_stats_episodes(&episodes);
        assert_eq!(stats.per_source.len(), 2);
        assert_eq!(stats.per_source["src1"].trajectories, 1);
        assert_eq!(stats.per_source["src1"].steps, 1);
        assert_eq!(stats.totals.trajectories, 2);
        assert_eq!(stats.totals.steps, 2);
    }
}
