//! Pipeline driver: one subcommand per stage plus `pipeline` chaining
//! stages 1→4. Exit codes: 0 success, 1 data errors, 2 usage errors.

mod config;
mod stages;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use config::{apply_overrides, split_overrides, PipelineConfig};
use stages::Ctx;

#[derive(Parser, Debug)]
#[command(
    name = "trajforge",
    version,
    about = "Turn robot-trajectory corpora into deduplicated, canonicalized, annotation-ready datasets",
    after_help = "Any config field can be overridden as --section.key=value \
                  (e.g. --filter.min_frames=10, --mixture.seed=42); dedicated \
                  flags win over dotted overrides, which win over the config file."
)]
struct Cli {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Input dataset manifest.
    #[arg(long, global = true)]
    manifest: Option<String>,

    /// Directory for all stage outputs (fixed file names per stage).
    #[arg(long = "output-dir", global = true)]
    output_dir: Option<String>,

    /// Worker threads for parallel stages (TRAJFORGE_WORKERS as fallback;
    /// defaults to the available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Overrides the mixture seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FilterStage {
    /// Metadata gate; plus the consistency gate once canonical data exists.
    Auto,
    Metadata,
    Consistency,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every episode against the schema invariants.
    Validate,
    /// Metadata filtering and (after `canon`) the consistency gate.
    Filter {
        #[arg(long, value_enum, default_value_t = FilterStage::Auto)]
        stage: FilterStage,
    },
    /// Canonicalize kept episodes to absolute/quaternion form.
    Canon,
    /// Pairwise DTW distance matrices per task group.
    Dtw,
    /// Cluster task groups and select representatives.
    Cluster,
    /// Corpus statistics (word counts, information density).
    Stats,
    /// Materialize a seeded FG:Raw instruction mixture stream.
    Mix {
        /// Number of draws (overrides mixture.draws).
        #[arg(long)]
        n: Option<u64>,
    },
    /// Score VQA predictions against a question set.
    ScoreVqa {
        #[arg(long)]
        questions: Option<String>,
        #[arg(long)]
        predictions: Option<String>,
        /// Predictions use the shuffled-option letter space.
        #[arg(long)]
        shuffled: bool,
    },
    /// Caption metrics from judge alignment counts.
    ScoreCaption {
        #[arg(long)]
        alignments: Option<String>,
        /// Also report micro-averaged corpus metrics.
        #[arg(long)]
        micro: bool,
    },
    /// Pearson/Spearman correlation of scores against human ranks.
    Correlate {
        #[arg(long)]
        scores: Option<String>,
        #[arg(long)]
        ranks: Option<String>,
    },
    /// Stages 1→4 chained: filter, canon, consistency, dtw, cluster.
    Pipeline,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let (plain, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(plain);

    let base = match &cli.config {
        Some(path) => match PipelineConfig::load(path) {
            Ok(config) => config,
            Err(err) => {
                eprintln!("error: {err:#}");
                return 2;
            }
        },
        None => PipelineConfig::default(),
    };
    let mut config = match apply_overrides(base, &overrides) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err:#}");
            return 2;
        }
    };

    // Dedicated flags win over dotted overrides.
    if cli.manifest.is_some() {
        config.manifest = cli.manifest.clone();
    }
    if cli.output_dir.is_some() {
        config.output_dir = cli.output_dir.clone();
    }
    if let Some(workers) = cli.workers.or_else(env_workers) {
        config.workers = Some(workers);
    }
    if let Some(seed) = cli.seed {
        config.mixture.seed = seed;
    }
    apply_command_flags(&cli.command, &mut config);

    if let Some(workers) = config.workers {
        // Ignore the error when a pool already exists (tests, repeat init).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    match run(&cli.command, config) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn env_workers() -> Option<usize> {
    std::env::var("TRAJFORGE_WORKERS").ok()?.parse().ok()
}

fn apply_command_flags(command: &Command, config: &mut PipelineConfig) {
    match command {
        Command::Mix { n: Some(n) } => config.mixture.draws = *n,
        Command::ScoreVqa {
            questions,
            predictions,
            shuffled,
        } => {
            if questions.is_some() {
                config.scoring.questions = questions.clone();
            }
            if predictions.is_some() {
                config.scoring.predictions = predictions.clone();
            }
            if *shuffled {
                config.scoring.shuffled = true;
            }
        }
        Command::ScoreCaption { alignments, micro } => {
            if alignments.is_some() {
                config.scoring.alignments = alignments.clone();
            }
            if *micro {
                config.scoring.micro = true;
            }
        }
        Command::Correlate { scores, ranks } => {
            if scores.is_some() {
                config.scoring.scores = scores.clone();
            }
            if ranks.is_some() {
                config.scoring.ranks = ranks.clone();
            }
        }
        _ => {}
    }
}

fn run(command: &Command, config: PipelineConfig) -> Result<i32> {
    let ctx = Ctx::new(config)?;
    match command {
        Command::Validate => return stages::run_validate(&ctx),
        Command::Filter { stage } => {
            let canonical_exists = ctx.out.join("canonical/manifest.json").exists();
            match stage {
                FilterStage::Metadata => stages::run_metadata_filter(&ctx)?,
                FilterStage::Consistency => stages::run_consistency_filter(&ctx)?,
                FilterStage::Auto => {
                    if ctx.out.join("filter_metadata.json").exists() {
                        println!("filter: reusing existing filter_metadata.json");
                    } else {
                        stages::run_metadata_filter(&ctx)?;
                    }
                    if canonical_exists {
                        stages::run_consistency_filter(&ctx)?;
                    }
                }
            }
        }
        Command::Canon => stages::run_canon(&ctx)?,
        Command::Dtw => stages::run_dtw(&ctx)?,
        Command::Cluster => stages::run_cluster(&ctx)?,
        Command::Stats => stages::run_stats(&ctx)?,
        Command::Mix { .. } => stages::run_mix(&ctx)?,
        Command::ScoreVqa { .. } => stages::run_score_vqa(&ctx)?,
        Command::ScoreCaption { .. } => stages::run_score_caption(&ctx)?,
        Command::Correlate { .. } => stages::run_correlate(&ctx)?,
        Command::Pipeline => stages::run_pipeline(&ctx)?,
    }
    Ok(0)
}
