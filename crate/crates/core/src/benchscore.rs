//! Deterministic VQA scoring, caption metrics from judge alignment
//! counts, and human-correlation statistics.
//!
//! Option shuffling is seeded by an FNV-1a hash of the question id
//! feeding a splitmix64 Fisher-Yates shuffle, so any implementation can
//! reproduce the permutation. Answer matching is deterministic: option
//! letters for multiple choice, normalized strings for yes/no, exact
//! parsed values for numbers.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::model::Dimension;

/// Errors raised while scoring.
#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("question '{question_id}': {message}")]
    BadQuestion {
        question_id: String,
        message: String,
    },

    #[error("sample '{sample_id}': {message}")]
    BadCounts { sample_id: String, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("model sets differ between scores and ranks: {0:?}")]
    KeyMismatch(Vec<String>),

    #[error("need at least 3 models, got {0}")]
    TooFewModels(usize),

    #[error("malformed alignment line {line}: {message}")]
    BadAlignmentLine { line: usize, message: String },
}

type Result<T> = std::result::Result<T, ScoreError>;

// ---------------------------------------------------------------------------
// VQA track
// ---------------------------------------------------------------------------

/// Answer format of one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    MultipleChoice,
    YesNo,
    Number,
}

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VQAQuestion {
    pub question_id: String,
    pub answer_type: AnswerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub answer_key: String,
    pub dimension: Dimension,
}

/// The three reporting axes the ten dimensions aggregate into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    /// Entity & Scene Grounding.
    Grounding,
    /// Action & Motion Understanding.
    ActionMotion,
    /// Interaction & State Reasoning.
    InteractionState,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Grounding, Axis::ActionMotion, Axis::InteractionState];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Grounding => "entity_scene_grounding",
            Axis::ActionMotion => "action_motion_understanding",
            Axis::InteractionState => "interaction_state_reasoning",
        }
    }
}

/// Maps a dimension to its reporting axis.
pub fn axis_of(dim: Dimension) -> Axis {
    match dim {
        Dimension::ActiveActor | Dimension::TargetObject | Dimension::InitialConfig => {
            Axis::Grounding
        }
        Dimension::ActionSequence
        | Dimension::ContactApproach
        | Dimension::TrajectoryOrientation
        | Dimension::BodyMotion => Axis::ActionMotion,
        Dimension::ObjectInteraction | Dimension::FinalConfig | Dimension::FailureRecovery => {
            Axis::InteractionState
        }
    }
}

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
}

/// A shuffled option list plus the permutation that produced it:
/// `perm[new_position] = original_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffledOptions {
    pub options: Vec<String>,
    pub perm: Vec<usize>,
}

impl ShuffledOptions {
    /// Translates an original answer letter into the shuffled letter.
    pub fn remap_letter(&self, original: char) -> Option<char> {
        let idx = letter_index(original)?;
        let new_pos = self.perm.iter().position(|&o| o == idx)?;
        Some((b'A' + new_pos as u8) as char)
    }
}

fn letter_index(letter: char) -> Option<usize> {
    let upper = letter.to_ascii_uppercase();
    ('A'..='H')
        .contains(&upper)
        .then(|| (upper as u8 - b'A') as usize)
}

/// Deterministically shuffles options, seeded by the FNV-1a hash of the
/// question id (Fisher-Yates over a splitmix64 stream).
pub fn shuffle_options(question_id: &str, options: &[String]) -> ShuffledOptions {
    let mut rng = SplitMix64 {
        state: fnv1a64(question_id.as_bytes()),
    };
    let mut perm: Vec<usize> = (0..options.len()).collect();
    for i in (1..perm.len()).rev() {
        let j = (rng.next() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    ShuffledOptions {
        options: perm.iter().map(|&o| options[o].clone()).collect(),
        perm,
    }
}

/// Normalizes a raw model answer into canonical form; `None` marks an
/// unparseable answer (scored incorrect, counted separately).
pub fn normalize_answer(raw: &str, answer_type: AnswerType) -> Option<String> {
    match answer_type {
        AnswerType::YesNo => {
            let mut s = raw.trim().to_ascii_lowercase();
            while s.ends_with(['.', '!', '?', ',', ';', ':']) {
                s.pop();
            }
            matches!(s.as_str(), "yes" | "no").then_some(s)
        }
        AnswerType::Number => extract_number(raw),
        AnswerType::MultipleChoice => {
            let chars: Vec<char> = raw.chars().collect();
            for (i, &c) in chars.iter().enumerate() {
                if letter_index(c).is_some() {
                    let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
                    let next_ok = i + 1 >= chars.len() || !chars[i + 1].is_alphanumeric();
                    if prev_ok && next_ok {
                        return Some(c.to_ascii_uppercase().to_string());
                    }
                }
            }
            None
        }
    }
}

/// First decimal numeral in the text (integer or float literal, optional
/// leading minus when it acts as a sign).
fn extract_number(raw: &str) -> Option<String> {
    let chars: Vec<char> = raw.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() {
            let mut start = i;
            if i >= 1 && chars[i - 1] == '-' && (i == 1 || !chars[i - 2].is_alphanumeric()) {
                start = i - 1;
            }
            let mut end = i;
            while end < chars.len() && chars[end].is_ascii_digit() {
                end += 1;
            }
            if end < chars.len()
                && chars[end] == '.'
                && end + 1 < chars.len()
                && chars[end + 1].is_ascii_digit()
            {
                end += 1;
                while end < chars.len() && chars[end].is_ascii_digit() {
                    end += 1;
                }
            }
            return Some(chars[start..end].iter().collect());
        }
        i += 1;
    }
    None
}

/// Accuracy and counts for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// VQA scoring report. `overall` is the unweighted mean over dimensions
/// with at least one question; axis accuracies are unweighted means over
/// their constituent dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    pub overall: f64,
    pub per_dimension: BTreeMap<String, DimensionAccuracy>,
    pub per_axis: BTreeMap<String, f64>,
    pub n_questions: usize,
    pub n_correct: usize,
    pub n_invalid: usize,
    pub n_missing: usize,
    /// Prediction keys with no matching question (warned, ignored).
    pub unknown_prediction_ids: Vec<String>,
}

fn validate_question(q: &VQAQuestion) -> Result<()> {
    let bad = |message: String| ScoreError::BadQuestion {
        question_id: q.question_id.clone(),
        message,
    };
    match q.answer_type {
        AnswerType::MultipleChoice => {
            let options = q
                .options
                .as_ref()
                .ok_or_else(|| bad("multiple_choice question without options".into()))?;
            if !(4..=8).contains(&options.len()) {
                return Err(bad(format!("expected 4–8 options, got {}", options.len())));
            }
            let key = q.answer_key.trim();
            let idx = key
                .chars()
                .next()
                .and_then(letter_index)
                .filter(|_| key.len() == 1)
                .ok_or_else(|| bad(format!("answer key '{key}' is not an option letter")))?;
            if idx >= options.len() {
                return Err(bad(format!("answer key '{key}' outside option range")));
            }
        }
        AnswerType::YesNo => {
            if !matches!(q.answer_key.as_str(), "yes" | "no") {
                return Err(bad(format!("yes/no key must be yes or no, got '{}'", q.answer_key)));
            }
        }
        AnswerType::Number => {
            if q.answer_key.parse::<f64>().is_err() {
                return Err(bad(format!("number key '{}' does not parse", q.answer_key)));
            }
        }
    }
    Ok(())
}

fn is_correct(q: &VQAQuestion, normalized: &str, shuffled: bool) -> bool {
    match q.answer_type {
        AnswerType::MultipleChoice => {
            let key = if shuffled {
                let options = q.options.as_ref().expect("validated");
                shuffle_options(&q.question_id, options)
                    .remap_letter(q.answer_key.chars().next().expect("validated"))
                    .expect("validated key remaps")
                    .to_string()
            } else {
                q.answer_key.trim().to_ascii_uppercase()
            };
            normalized == key
        }
        AnswerType::YesNo => normalized == q.answer_key,
        // Exact value equality after parsing (3 == 3.0). Keys are small
        // integers; no tolerance.
        AnswerType::Number => match (normalized.parse::<f64>(), q.answer_key.parse::<f64>()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        },
    }
}

/// Scores predictions against the question set. Missing predictions count
/// incorrect; unknown prediction ids are reported and ignored. With
/// `shuffled`, multiple-choice predictions are interpreted in the
/// shuffled-option letter space of [`shuffle_options`].
pub fn score_vqa(
    predictions: &BTreeMap<String, String>,
    questions: &[VQAQuestion],
    shuffled: bool,
) -> Result<VqaReport> {
    for q in questions {
        validate_question(q)?;
    }
    let known: BTreeSet<&str> = questions.iter().map(|q| q.question_id.as_str()).collect();
    let unknown_prediction_ids: Vec<String> = predictions
        .keys()
        .filter(|id| !known.contains(id.as_str()))
        .cloned()
        .collect();

    let mut per_dim: BTreeMap<Dimension, (usize, usize)> = BTreeMap::new();
    let (mut n_correct, mut n_invalid, mut n_missing) = (0usize, 0usize, 0usize);
    for q in questions {
        let entry = per_dim.entry(q.dimension).or_insert((0, 0));
        entry.1 += 1;
        let correct = match predictions.get(&q.question_id) {
            None => {
                n_missing += 1;
                false
            }
            Some(raw) => match normalize_answer(raw, q.answer_type) {
                None => {
                    n_invalid += 1;
                    false
                }
                Some(normalized) => is_correct(q, &normalized, shuffled),
            },
        };
        if correct {
            entry.0 += 1;
            n_correct += 1;
        }
    }

    let per_dimension: BTreeMap<String, DimensionAccuracy> = per_dim
        .iter()
        .map(|(dim, &(correct, total))| {
            (
                dim.name().to_string(),
                DimensionAccuracy {
                    correct,
                    total,
                    accuracy: correct as f64 / total as f64,
                },
            )
        })
        .collect();

    let dim_accuracy = |dim: Dimension| per_dim.get(&dim).map(|&(c, t)| c as f64 / t as f64);
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    let per_axis: BTreeMap<String, f64> = Axis::ALL
        .iter()
        .map(|&axis| {
            let accs: Vec<f64> = Dimension::ALL
                .iter()
                .filter(|&&d| axis_of(d) == axis)
                .filter_map(|&d| dim_accuracy(d))
                .collect();
            (axis.name().to_string(), mean(accs))
        })
        .collect();
    let overall = mean(Dimension::ALL.iter().filter_map(|&d| dim_accuracy(d)).collect());

    Ok(VqaReport {
        overall,
        per_dimension,
        per_axis,
        n_questions: questions.len(),
        n_correct,
        n_invalid,
        n_missing,
        unknown_prediction_ids,
    })
}

// ---------------------------------------------------------------------------
// Caption track
// ---------------------------------------------------------------------------

/// Per-sample alignment counts from the judge: M/P/C/O over ground-truth
/// facts, H hallucinated action events, S generated caption steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentCounts {
    pub sample_id: String,
    #[serde(rename = "match")]
    pub matches: u32,
    pub partial: u32,
    pub contradiction: u32,
    pub omission: u32,
    pub hallucination: u32,
    pub steps: u32,
}

impl AlignmentCounts {
    /// GT facts addressed by the caption: `A = M + P + C`.
    pub fn addressed(&self) -> u32 {
        self.matches + self.partial + self.contradiction
    }

    /// Total GT facts: `G = M + P + C + O`.
    pub fn total_facts(&self) -> u32 {
        self.addressed() + self.omission
    }
}

/// One line of the alignment file: counts plus the declared fact total
/// the judge must reconcile with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    #[serde(flatten)]
    pub counts: AlignmentCounts,
    pub total_gt_facts: u32,
}

impl AlignmentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.counts.total_facts() != self.total_gt_facts {
            return Err(ScoreError::BadCounts {
                sample_id: self.counts.sample_id.clone(),
                message: format!(
                    "match + partial + contradiction + omission = {} but total_gt_facts = {}",
                    self.counts.total_facts(),
                    self.total_gt_facts
                ),
            });
        }
        if self.counts.hallucination > self.counts.steps {
            return Err(ScoreError::BadCounts {
                sample_id: self.counts.sample_id.clone(),
                message: format!(
                    "hallucination {} exceeds steps {}",
                    self.counts.hallucination, self.counts.steps
                ),
            });
        }
        Ok(())
    }
}

/// Parses the JSON-lines alignment file, validating every record.
pub fn parse_alignment_jsonl(text: &str) -> Result<Vec<AlignmentRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let record: AlignmentRecord =
                serde_json::from_str(line).map_err(|e| ScoreError::BadAlignmentLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            record.validate()?;
            Ok(record)
        })
        .collect()
}

/// Caption metrics on [0,1]: consistency `(M+0.5P)/A`, coverage
/// `(M+0.5P)/G`, anti-hallucination `1 − H/S`, overall their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionScores {
    pub consistency: f64,
    pub coverage: f64,
    pub anti_hallucination: f64,
    pub overall: f64,
    /// Set when A = 0 (caption addressed no ground-truth fact); the
    /// undefined consistency is reported as 0.
    #[serde(default)]
    pub no_facts_addressed: bool,
}

fn caption_scores_from(
    m: f64,
    a: f64,
    g: f64,
    h: f64,
    s: f64,
    half_p: f64,
) -> CaptionScores {
    let no_facts_addressed = a == 0.0;
    let consistency = if no_facts_addressed {
        0.0
    } else {
        (m + half_p) / a
    };
    let coverage = if g == 0.0 { 0.0 } else { (m + half_p) / g };
    let anti_hallucination = if s == 0.0 { 1.0 } else { 1.0 - h / s };
    CaptionScores {
        consistency,
        coverage,
        anti_hallucination,
        overall: (consistency + coverage + anti_hallucination) / 3.0,
        no_facts_addressed,
    }
}

/// Scores one sample's alignment counts.
pub fn caption_scores(c: &AlignmentCounts) -> Result<CaptionScores> {
    if c.hallucination > c.steps {
        return Err(ScoreError::BadCounts {
            sample_id: c.sample_id.clone(),
            message: format!(
                "hallucination {} exceeds steps {}",
                c.hallucination, c.steps
            ),
        });
    }
    Ok(caption_scores_from(
        c.matches as f64,
        c.addressed() as f64,
        c.total_facts() as f64,
        c.hallucination as f64,
        c.steps as f64,
        0.5 * c.partial as f64,
    ))
}

/// Macro average: unweighted mean of each metric over samples.
pub fn aggregate_captions(samples: &[CaptionScores]) -> Result<CaptionScores> {
    if samples.is_empty() {
        return Err(ScoreError::EmptyInput("aggregate_captions"));
    }
    let n = samples.len() as f64;
    let consistency = samples.iter().map(|s| s.consistency).sum::<f64>() / n;
    let coverage = samples.iter().map(|s| s.coverage).sum::<f64>() / n;
    let anti = samples.iter().map(|s| s.anti_hallucination).sum::<f64>() / n;
    Ok(CaptionScores {
        consistency,
        coverage,
        anti_hallucination: anti,
        overall: (consistency + coverage + anti) / 3.0,
        no_facts_addressed: false,
    })
}

/// Micro average: pools the raw counts across samples before applying the
/// metric formulas.
pub fn aggregate_captions_micro(counts: &[AlignmentCounts]) -> Result<CaptionScores> {
    if counts.is_empty() {
        return Err(ScoreError::EmptyInput("aggregate_captions_micro"));
    }
    let m: u64 = counts.iter().map(|c| c.matches as u64).sum();
    let p: u64 = counts.iter().map(|c| c.partial as u64).sum();
    let a: u64 = counts.iter().map(|c| c.addressed() as u64).sum();
    let g: u64 = counts.iter().map(|c| c.total_facts() as u64).sum();
    let h: u64 = counts.iter().map(|c| c.hallucination as u64).sum();
    let s: u64 = counts.iter().map(|c| c.steps as u64).sum();
    Ok(caption_scores_from(
        m as f64,
        a as f64,
        g as f64,
        h as f64,
        s as f64,
        0.5 * p as f64,
    ))
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Pearson correlation coefficient; `None` when either vector is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Ascending average ranks (1-based) with ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average-rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Pearson and Spearman correlations between model scores and human ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub models: Vec<String>,
}

/// Correlates benchmark scores against 1–6 human rankings. Ranks map to
/// [0,1] via `(6 − r)/5` (rank 1, the best caption, maps to 1.0) before
/// correlating. Constant vectors yield null correlations.
pub fn rank_correlation(
    model_scores: &BTreeMap<String, f64>,
    human_ranks: &BTreeMap<String, f64>,
) -> Result<CorrelationReport> {
    if model_scores.len() < 3 {
        return Err(ScoreError::TooFewModels(model_scores.len()));
    }
    if model_scores.keys().ne(human_ranks.keys()) {
        let diff: Vec<String> = model_scores
            .keys()
            .filter(|k| !human_ranks.contains_key(*k))
            .chain(human_ranks.keys().filter(|k| !model_scores.contains_key(*k)))
            .cloned()
            .collect();
        return Err(ScoreError::KeyMismatch(diff));
    }
    let models: Vec<String> = model_scores.keys().cloned().collect();
    let scores: Vec<f64> = models.iter().map(|m| model_scores[m]).collect();
    let normalized: Vec<f64> = models.iter().map(|m| (6.0 - human_ranks[m]) / 5.0).collect();
    Ok(CorrelationReport {
        pearson: pearson(&scores, &normalized),
        spearman: spearman(&scores, &normalized),
        models,
    })
}
