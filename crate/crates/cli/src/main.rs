//! `enrich`: composable pipeline over a findings/impression report corpus.
//! Stages persist hash-linked artifacts in a working directory; rerunning a
//! stage with identical inputs, parameters and seeds is byte-identical.

mod manifest;
mod stages;

use clap::{Parser, Subcommand};
use enrich_core::clustering::{
    DEFAULT_DBSCAN_EPS, DEFAULT_DBSCAN_MIN_PTS, DEFAULT_HDBSCAN_MIN_CLUSTER_SIZE,
    DEFAULT_KMEANS_MAX_ITER,
};
use enrich_core::reward::DEFAULT_SIM_THRESHOLD;
use manifest::StageError;
use stages::{ClusterParams, EmbedSource, Pipeline};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "enrich",
    version,
    about = "cluster report sentences, build the compatibility graph, enumerate largest valid enrichments, score generations"
)]
struct Cli {
    /// Working directory for artifacts and the manifest
    #[arg(long, global = true, default_value = "workdir")]
    workdir: PathBuf,
    /// Run even when upstream artifact hashes mismatch
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSON-lines corpus (report_id, findings, impression)
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Abort on the first malformed record instead of skipping it
        #[arg(long)]
        abort_on_error: bool,
        /// Keep original casing during sentence normalization
        #[arg(long)]
        keep_case: bool,
    },
    /// Load external embeddings or compute deterministic fallback ones
    Embed {
        /// Embedding file to ingest (binary layout unless --json)
        #[arg(long, conflicts_with = "fallback")]
        from: Option<PathBuf>,
        /// Treat --from as JSON-lines float arrays
        #[arg(long, requires = "from")]
        json: bool,
        /// Use the hashing fallback encoder instead of a file
        #[arg(long)]
        fallback: bool,
        #[arg(long, default_value_t = 384)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cluster sentence embeddings
    Cluster {
        #[arg(long, default_value = "hdbscan")]
        method: String,
        /// Number of clusters (kmeans)
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_DBSCAN_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_DBSCAN_MIN_PTS)]
        min_pts: usize,
        #[arg(long, default_value_t = DEFAULT_HDBSCAN_MIN_CLUSTER_SIZE)]
        min_cluster_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_KMEANS_MAX_ITER)]
        max_iter: usize,
    },
    /// Assign each cluster a +1/-1 sign from one representative sentence
    Sign {
        /// "fallback" (offline rules) or "llm" (chat endpoint via env vars)
        #[arg(long, default_value = "fallback")]
        sign_mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build co-occurrence counts and the addability matrix
    Graph {
        #[arg(long, default_value_t = 0.0)]
        tau_norm: f64,
        #[arg(long, default_value_t = 0)]
        tau_count: u32,
    },
    /// Enumerate all largest valid enrichments per unique finding set
    Catalog {
        /// Reproduce the one-directional compatibility check
        #[arg(long)]
        strict_algorithm1: bool,
        #[arg(long, default_value_t = 64)]
        max_candidates: usize,
    },
    /// Sample one expansion per report and render the enriched corpus
    Enrich {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score generated reports with the cluster-F1 + exact-match reward
    Reward {
        /// JSON-lines file of {report_id, text}; omit with --stream
        #[arg(long, conflicts_with = "stream")]
        generations: Option<PathBuf>,
        /// Read records from stdin, write one score per line to stdout
        #[arg(long)]
        stream: bool,
        #[arg(long, default_value_t = DEFAULT_SIM_THRESHOLD)]
        sim_threshold: f32,
    },
    /// Print cluster statistics
    Stats,
}

fn run(cli: Cli) -> Result<(), StageError> {
    let mut pipeline = Pipeline::open(&cli.workdir, cli.force)?;
    match cli.command {
        Command::Ingest {
            corpus,
            abort_on_error,
            keep_case,
        } => stages::cmd_ingest(&mut pipeline, &corpus, abort_on_error, keep_case),
        Command::Embed {
            from,
            json,
            fallback,
            dim,
            seed,
        } => {
            let source = match (from, fallback) {
                (Some(path), false) => EmbedSource::File { path, json },
                (None, true) => EmbedSource::Fallback { dim, seed },
                (None, false) => {
                    return Err(manifest::domain_err(
                        "embed",
                        anyhow::anyhow!("pass either --from FILE or --fallback"),
                    ))
                }
                (Some(_), true) => unreachable!("clap conflicts_with"),
            };
            stages::cmd_embed(&mut pipeline, source)
        }
        Command::Cluster {
            method,
            k,
            eps,
            min_pts,
            min_cluster_size,
            seed,
            max_iter,
        } => stages::cmd_cluster(
            &mut pipeline,
            ClusterParams {
                method,
                k,
                eps,
                min_pts,
                min_cluster_size,
                seed,
                max_iter,
            },
        ),
        Command::Sign { sign_mode, seed } => stages::cmd_sign(&mut pipeline, &sign_mode, seed),
        Command::Graph { tau_norm, tau_count } => {
            stages::cmd_graph(&mut pipeline, tau_norm, tau_count)
        }
        Command::Catalog {
            strict_algorithm1,
            max_candidates,
        } => stages::cmd_catalog(&mut pipeline, strict_algorithm1, max_candidates),
        Command::Enrich { seed } => stages::cmd_enrich(&mut pipeline, seed),
        Command::Reward {
            generations,
            stream,
            sim_threshold,
        } => match (generations, stream) {
            (Some(path), false) => stages::cmd_reward_batch(&mut pipeline, &path, sim_threshold),
            (None, true) => stages::cmd_reward_stream(&pipeline, sim_threshold),
            (None, false) => Err(manifest::domain_err(
                "reward",
                anyhow::anyhow!("pass either --generations FILE or --stream"),
            )),
            (Some(_), true) => unreachable!("clap conflicts_with"),
        },
        Command::Stats => stages::cmd_stats(&pipeline),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let code = err.exit_code();
        let record = serde_json::json!({
            "stage": err.stage(),
            "code": code,
            "error": err.message(),
        });
        eprintln!("{record}");
        std::process::exit(code);
    }
}
